//! Numerical evidence that `ϑ` is convex and that it is the minimal penalty
//! of the risk measure it induces.
//!
//! Convexity: for `Q^λ = λQ + (1-λ)Q̃` the density is `D^λ = λD + (1-λ)D̃`
//! and its coefficients are the `D_{s-}`-weighted averages
//!
//! ```text
//! θ^λ = (λ D_{s-} θ + (1-λ) D̃_{s-} θ̃) / (λ D_{s-} + (1-λ) D̃_{s-}),
//! ```
//!
//! which are random even when `θ` and `θ̃` are deterministic, so `ϑ(Q^λ)` is
//! estimated pathwise as `E_P[∫ D^λ_s g(θ^λ_s) ds]`.
//!
//! Minimality: biduality gives `sup_X { E_Q[-X] - ρ(X) } ≤ ϑ(Q)` for any
//! representing penalty; the lower bound is computed over sampled positions
//! and its gap to `ϑ(Q)` is reported as the position budget grows.

use std::collections::HashMap;

use super::risk::{PathPosition, RiskEngine, RiskProblem, WeightedMeasure};
use super::{penalty_quadrature, PenaltyError, PenaltySpec};
use crate::density::{stochastic_exponential, GirsanovCoefficients};
use crate::extended::Extended;
use crate::levy_model::{map_paths, LevyTriplet};
use crate::rng::RngStream;
use crate::stats::Estimate;

/// Slack allowed between the biduality lower bound and `ϑ`.
pub const MINIMALITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityReport {
    pub lambda: f64,
    /// Monte Carlo `ϑ(Q^λ)`.
    pub mixture: Estimate,
    /// `λ ϑ̂(Q) + (1-λ) ϑ̂(Q̃)` with both penalties estimated on the same paths and grid.
    pub endpoints: Estimate,
    /// Exact `ϑ(Q)` and `ϑ(Q̃)`.
    pub penalty_a: Extended,
    pub penalty_b: Extended,
    /// `λ ϑ(Q) + (1-λ) ϑ(Q̃)` from the exact penalties.
    pub combination: Extended,
    /// Paired per-path `endpoints - mixture`.
    pub margin: Estimate,
    /// Paths on which `λD + (1-λ)D̃` vanishes at some grid time, so `θ^λ` is
    /// undefined there; those instants carry zero weight.
    pub degenerate_paths: usize,
    /// `mixture ≤ combination + 3 SE`.
    pub holds: bool,
}

/// Per-path `Σ_k w_k g_k Δt`, treating `0 · ∞` as 0.
fn weighted_sum(weights: &[f64], costs: &[Extended], dt: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((w, g), h) in weights.iter().zip(costs).zip(dt) {
        if *w == 0.0 {
            continue;
        }
        match g {
            Extended::Finite(v) => acc += w * v * h,
            Extended::PosInfinity => return f64::INFINITY,
        }
    }
    acc
}

/// Compares `ϑ(Q^λ)` with `λϑ(Q) + (1-λ)ϑ(Q̃)` on `n_paths` paths with `steps`
/// grid intervals. `λ ∈ {0, 1}` returns the endpoint's own estimate.
#[allow(clippy::too_many_arguments)]
pub fn convexity_evidence(
    theta_a: &GirsanovCoefficients,
    theta_b: &GirsanovCoefficients,
    lambda: f64,
    spec: &PenaltySpec,
    triplet: &LevyTriplet,
    horizon: f64,
    steps: usize,
    n_paths: usize,
    rng: RngStream,
) -> Result<ConvexityReport, PenaltyError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(PenaltyError::BadLambda(lambda));
    }
    if n_paths < 2 {
        return Err(PenaltyError::TooFewPaths(n_paths));
    }
    spec.check_atoms(triplet)?;
    let penalty_a = penalty_quadrature(theta_a, spec, horizon)?;
    let penalty_b = penalty_quadrature(theta_b, spec, horizon)?;
    let combination = penalty_a.scale(lambda) + penalty_b.scale(1.0 - lambda);

    let atoms = triplet.atoms();
    let n_atoms = atoms.len();
    let grid: Vec<f64> = (0..=steps).map(|k| horizon * k as f64 / steps as f64).collect();
    let dt: Vec<f64> = grid.windows(2).map(|w| w[1] - w[0]).collect();
    let left = &grid[..steps];
    let coeffs = |theta: &GirsanovCoefficients| -> (Vec<f64>, Vec<Vec<f64>>, Vec<Extended>) {
        let t0: Vec<f64> = left.iter().map(|&t| theta.theta0(t)).collect();
        let t1: Vec<Vec<f64>> = left.iter().map(|&t| atoms.iter().map(|a| theta.theta1(t, a.size)).collect()).collect();
        let g = left.iter().map(|&t| spec.integrand_at(theta, t)).collect();
        (t0, t1, g)
    };
    let (a0, a1, ga) = coeffs(theta_a);
    let (b0, b1, gb) = coeffs(theta_b);

    let per_path = map_paths(triplet, horizon, steps, n_paths, rng, |p| {
        let da = stochastic_exponential(&p, theta_a)?;
        let db = stochastic_exponential(&p, theta_b)?;
        let (da, db) = (&da.grid_values[..steps], &db.grid_values[..steps]);
        let a = weighted_sum(da, &ga, &dt);
        let b = weighted_sum(db, &gb, &dt);
        if lambda == 1.0 {
            return Ok((a, b, a, false));
        }
        if lambda == 0.0 {
            return Ok((a, b, b, false));
        }
        let mut degenerate = false;
        let mut mix = 0.0;
        let mut theta1 = vec![0.0; n_atoms];
        for k in 0..steps {
            let (wa, wb) = (lambda * da[k], (1.0 - lambda) * db[k]);
            let d = wa + wb;
            if d == 0.0 {
                degenerate = true;
                continue;
            }
            let (pa, pb) = (wa / d, wb / d);
            for (i, v) in theta1.iter_mut().enumerate() {
                *v = pa * a1[k][i] + pb * b1[k][i];
            }
            match spec.integrand(pa * a0[k] + pb * b0[k], |i| theta1[i], atoms) {
                Extended::Finite(g) => mix += d * g * dt[k],
                Extended::PosInfinity => {
                    mix = f64::INFINITY;
                    break;
                }
            }
        }
        Ok((a, b, mix, degenerate))
    })?
    .into_iter()
    .collect::<Result<Vec<_>, PenaltyError>>()?;

    let mixture: Vec<f64> = per_path.iter().map(|s| s.2).collect();
    let endpoints: Vec<f64> = per_path.iter().map(|s| lambda * s.0 + (1.0 - lambda) * s.1).collect();
    let margin: Vec<f64> = endpoints.iter().zip(&mixture).map(|(e, m)| e - m).collect();
    let mixture = Estimate::from_samples(&mixture);
    let holds = match combination {
        Extended::PosInfinity => true,
        Extended::Finite(c) => mixture.mean <= c + 3.0 * mixture.se,
    };
    Ok(ConvexityReport {
        lambda,
        mixture,
        endpoints: Estimate::from_samples(&endpoints),
        penalty_a,
        penalty_b,
        combination,
        margin: Estimate::from_samples(&margin),
        degenerate_paths: per_path.iter().filter(|s| s.3).count(),
        holds,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimalityRow {
    /// Index into `q_thetas`.
    pub measure: usize,
    pub budget: usize,
    /// `max_X { Ê_Q[-X] - ρ̂(X) }` over the sampled positions.
    pub lower_bound: f64,
    pub penalty: Extended,
    /// `ϑ(Q) - lower_bound`.
    pub gap: Extended,
    pub best_position: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimalityReport {
    pub rows: Vec<MinimalityRow>,
    /// The lower bound never exceeds `ϑ + MINIMALITY_TOL`.
    pub bound_respected: bool,
    /// Gaps never grow with the budget; false flags a non-nested sampler.
    pub gaps_monotone: bool,
}

impl MinimalityReport {
    pub fn rows_for(&self, measure: usize) -> impl Iterator<Item = &MinimalityRow> {
        self.rows.iter().filter(move |r| r.measure == measure)
    }
}

/// Biduality lower bounds for each `Q` in `q_thetas` over the positions
/// `sampler(b)` for each budget `b`. `ρ` is evaluated on one batch of paths
/// with the family grid plus the tested measures as candidates, so the lower
/// bound is at most `ϑ(Q)` up to rounding. Positions are cached by label.
#[allow(clippy::too_many_arguments)]
pub fn minimality_evidence(
    problem: &RiskProblem,
    q_thetas: &[GirsanovCoefficients],
    sampler: &dyn Fn(usize) -> Vec<PathPosition>,
    budgets: &[usize],
    risk_budget: usize,
    n_paths: usize,
    rng: RngStream,
) -> Result<MinimalityReport, PenaltyError> {
    if budgets.is_empty() || budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PenaltyError::BadBudgets);
    }
    let engine = RiskEngine::new(problem, n_paths, rng)?;
    let measures: Vec<WeightedMeasure> = q_thetas.iter().map(|q| engine.weigh(q)).collect::<Result<_, _>>()?;

    // label -> (E_Q[-X] per measure, ρ(X))
    let mut cache: HashMap<String, (Vec<f64>, f64)> = HashMap::new();
    let mut rows = Vec::new();
    for &budget in budgets {
        let positions = sampler(budget);
        if positions.is_empty() {
            return Err(PenaltyError::EmptySampler(budget));
        }
        for x in &positions {
            if cache.contains_key(x.label()) {
                continue;
            }
            let rho = engine.evaluate(x, risk_budget, &measures)?.value;
            let neg_x = engine.negated(x);
            let gains = measures.iter().map(|m| m.gain(&neg_x).mean).collect();
            cache.insert(x.label().to_string(), (gains, rho));
        }
        for (j, m) in measures.iter().enumerate() {
            let (lower_bound, best_position) = positions
                .iter()
                .map(|x| {
                    let (gains, rho) = &cache[x.label()];
                    (gains[j] - rho, x.label().to_string())
                })
                .fold((f64::NEG_INFINITY, String::new()), |acc, c| if c.0 > acc.0 { c } else { acc });
            let gap = match m.penalty {
                Extended::Finite(v) => Extended::Finite(v - lower_bound),
                Extended::PosInfinity => Extended::PosInfinity,
            };
            rows.push(MinimalityRow { measure: j, budget, lower_bound, penalty: m.penalty, gap, best_position });
        }
    }

    let bound_respected = rows.iter().all(|r| match r.penalty {
        Extended::Finite(v) => r.lower_bound <= v + MINIMALITY_TOL,
        Extended::PosInfinity => true,
    });
    let gaps_monotone = (0..q_thetas.len()).all(|j| {
        let gaps: Vec<Extended> = rows.iter().filter(|r| r.measure == j).map(|r| r.gap).collect();
        gaps.windows(2).all(|w| w[1] <= w[0])
    });
    Ok(MinimalityReport { rows, bound_respected, gaps_monotone })
}
