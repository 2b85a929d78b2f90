//! `ρ(X) = sup_Q { E_Q[-X] - ϑ(Q) }` over a finite family of constant
//! coefficient pairs, with local golden-section refinement.

use std::cell::{Cell, RefCell};
use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;

use super::{penalty_quadrature, PenaltyError, PenaltySpec};
use crate::density::{stochastic_exponential, GirsanovCoefficients};
use crate::extended::Extended;
use crate::levy_model::{simulate_batch, LevyPath, LevyTriplet};
use crate::optimize::golden_section_max;
use crate::rng::RngStream;
use crate::stats::Estimate;

/// Golden-section passes over the coordinates after the grid search.
const REFINEMENT_ROUNDS: usize = 2;

/// A path functional clipped to `[-B, B]`.
#[derive(Clone)]
pub struct PathPosition {
    label: String,
    clip: f64,
    f: Arc<dyn Fn(&LevyPath) -> f64 + Send + Sync>,
}

impl fmt::Debug for PathPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PathPosition({}, clip {})", self.label, self.clip)
    }
}

impl PathPosition {
    pub fn new<F>(label: impl Into<String>, clip: f64, f: F) -> Result<Self, PenaltyError>
    where
        F: Fn(&LevyPath) -> f64 + Send + Sync + 'static,
    {
        if !(clip.is_finite() && clip > 0.0) {
            return Err(PenaltyError::BadClip(clip));
        }
        Ok(Self { label: label.into(), clip, f: Arc::new(f) })
    }

    pub fn constant(a: f64, clip: f64) -> Result<Self, PenaltyError> {
        Self::new(format!("{a}"), clip, move |_| a)
    }

    /// `X = scale · W_T`.
    pub fn terminal_brownian(scale: f64, clip: f64) -> Result<Self, PenaltyError> {
        Self::new(format!("{scale}*W_T"), clip, move |p| scale * p.terminal_brownian())
    }

    /// `X = scale · L_T`.
    pub fn terminal_level(scale: f64, clip: f64) -> Result<Self, PenaltyError> {
        Self::new(format!("{scale}*L_T"), clip, move |p| scale * p.terminal_level())
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    pub fn evaluate(&self, path: &LevyPath) -> f64 {
        (self.f)(path).clamp(-self.clip, self.clip)
    }
}

/// `points` equally spaced values in `[lo, hi]`; one point means `lo == hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterRange {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl ParameterRange {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self, PenaltyError> {
        let ok = lo.is_finite()
            && hi.is_finite()
            && points >= 1
            && ((points == 1 && lo == hi) || (points > 1 && lo < hi));
        if !ok {
            return Err(PenaltyError::BadFamily(format!("range [{lo}, {hi}] with {points} points")));
        }
        Ok(Self { lo, hi, points })
    }

    pub fn fixed(value: f64) -> Self {
        Self { lo: value, hi: value, points: 1 }
    }

    pub fn step(&self) -> f64 {
        if self.points > 1 {
            (self.hi - self.lo) / (self.points - 1) as f64
        } else {
            0.0
        }
    }

    pub fn value(&self, k: usize) -> f64 {
        if k + 1 == self.points {
            self.hi
        } else {
            self.lo + k as f64 * self.step()
        }
    }
}

/// Constant coefficients `θ0 ∈ theta0`, `θ1(t, x_i) = θ1 ∈ theta1` for every atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchFamily {
    pub theta0: ParameterRange,
    pub theta1: ParameterRange,
}

impl SearchFamily {
    pub fn new(theta0: ParameterRange, theta1: ParameterRange) -> Result<Self, PenaltyError> {
        if theta1.lo < -1.0 {
            return Err(PenaltyError::BadFamily(format!("θ1 range starts below -1 at {}", theta1.lo)));
        }
        Ok(Self { theta0, theta1 })
    }

    pub fn size(&self) -> usize {
        self.theta0.points * self.theta1.points
    }

    /// Grid points, `θ0` major.
    pub fn points(&self) -> Vec<(f64, f64)> {
        (0..self.theta0.points)
            .flat_map(|i| (0..self.theta1.points).map(move |j| (i, j)))
            .map(|(i, j)| (self.theta0.value(i), self.theta1.value(j)))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct RiskProblem {
    pub triplet: LevyTriplet,
    pub horizon: f64,
    pub steps: usize,
    pub position: PathPosition,
    pub spec: PenaltySpec,
    pub family: SearchFamily,
}

impl RiskProblem {
    pub fn new(
        triplet: LevyTriplet,
        horizon: f64,
        steps: usize,
        position: PathPosition,
        spec: PenaltySpec,
        family: SearchFamily,
    ) -> Result<Self, PenaltyError> {
        spec.check_atoms(&triplet)?;
        if !(horizon.is_finite() && horizon > 0.0) || steps == 0 {
            return Err(PenaltyError::BadFamily(format!("horizon {horizon} with {steps} steps")));
        }
        Ok(Self { triplet, horizon, steps, position, spec, family })
    }

    pub fn coefficients(&self, theta0: f64, theta1: f64) -> Result<GirsanovCoefficients, PenaltyError> {
        Ok(GirsanovCoefficients::constant(theta0, theta1, &self.triplet, self.horizon)?)
    }
}

/// Where the supremum was attained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Argmax {
    Family { theta0: f64, theta1: f64 },
    /// Index into the extra candidates passed to [`RiskEngine::evaluate`].
    Extra(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRecord {
    pub theta0: f64,
    pub theta1: f64,
    pub eq_neg_x: Estimate,
    pub penalty: Extended,
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskReport {
    pub value: f64,
    /// SE of `E_Q[-X]` at the maximizer.
    pub se: f64,
    pub argmax: Argmax,
    /// The maximizer sits on an edge of the family box, so the family may be too small.
    pub on_boundary: bool,
    pub evaluations: usize,
    pub grid: Vec<GridRecord>,
}

impl RiskReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "theta0,theta1,eq_neg_x,eq_neg_x_se,penalty,objective")?;
        for r in &self.grid {
            let (m, s) = (r.eq_neg_x.mean, r.eq_neg_x.se);
            let obj = r.objective.map_or_else(|| "-inf".to_string(), |v| v.to_string());
            writeln!(out, "{},{},{m},{s},{},{obj}", r.theta0, r.theta1, r.penalty)?;
        }
        Ok(())
    }
}

/// A measure `Q` prepared on a fixed batch of paths: its penalty and its
/// terminal density on every path.
#[derive(Debug, Clone)]
pub struct WeightedMeasure {
    pub penalty: Extended,
    weights: Vec<f64>,
}

impl WeightedMeasure {
    /// Self-normalized `E_Q[-X] ≈ Σ D (-X) / Σ D` on the engine's paths, given
    /// `-X` per path, with a delta-method standard error. Constants come out
    /// exactly, so the sample `ρ` is exactly cash additive.
    pub fn gain(&self, neg_x: &[f64]) -> Estimate {
        let n = self.weights.len();
        let mass: f64 = self.weights.iter().sum();
        if mass <= 0.0 {
            return Estimate { mean: f64::NAN, se: f64::NAN, n };
        }
        let weighted: f64 =
            self.weights.iter().zip(neg_x).map(|(d, x)| if *d == 0.0 { 0.0 } else { d * x }).sum();
        let mean = weighted / mass;
        let scale = n as f64 / mass;
        let residuals: Vec<f64> = self
            .weights
            .iter()
            .zip(neg_x)
            .map(|(d, x)| if *d == 0.0 { 0.0 } else { d * (x - mean) * scale })
            .collect();
        Estimate { mean, se: Estimate::from_samples(&residuals).se, n }
    }

    /// `E_Q[-X] - ϑ(Q)`, or `None` when the penalty is infinite or every path
    /// carries zero weight.
    pub fn objective(&self, neg_x: &[f64]) -> (Estimate, Option<f64>) {
        let gain = self.gain(neg_x);
        let obj = if gain.mean.is_nan() { None } else { self.penalty.subtract_from(gain.mean) };
        (gain, obj)
    }
}

/// Common random numbers for a [`RiskProblem`]: one path batch, with the
/// family grid's densities computed once and shared across positions.
pub struct RiskEngine<'a> {
    problem: &'a RiskProblem,
    paths: Vec<LevyPath>,
    grid: Vec<(f64, f64)>,
    grid_measures: Vec<WeightedMeasure>,
}

impl<'a> RiskEngine<'a> {
    pub fn new(problem: &'a RiskProblem, n_paths: usize, rng: RngStream) -> Result<Self, PenaltyError> {
        if n_paths < 2 {
            return Err(PenaltyError::TooFewPaths(n_paths));
        }
        let paths = simulate_batch(&problem.triplet, problem.horizon, problem.steps, n_paths, rng)?;
        let grid = problem.family.points();
        let mut engine = Self { problem, paths, grid, grid_measures: Vec::new() };
        engine.grid_measures = engine
            .grid
            .iter()
            .map(|&(a, b)| engine.weigh(&problem.coefficients(a, b)?))
            .collect::<Result<_, _>>()?;
        Ok(engine)
    }

    pub fn paths(&self) -> &[LevyPath] {
        &self.paths
    }

    /// Penalty and terminal densities of `theta` on the engine's paths.
    pub fn weigh(&self, theta: &GirsanovCoefficients) -> Result<WeightedMeasure, PenaltyError> {
        let penalty = penalty_quadrature(theta, &self.problem.spec, self.problem.horizon)?;
        let weights = self
            .paths
            .par_iter()
            .map(|p| stochastic_exponential(p, theta).map(|d| d.terminal()))
            .collect::<Result<Vec<f64>, _>>()?;
        Ok(WeightedMeasure { penalty, weights })
    }

    /// `-X` per path.
    pub fn negated(&self, position: &PathPosition) -> Vec<f64> {
        self.paths.par_iter().map(|p| -position.evaluate(p)).collect()
    }

    /// `ρ(X)` over the family grid, then golden-section refinement with the
    /// evaluations left in `budget`, then the `extras`.
    pub fn evaluate(
        &self,
        position: &PathPosition,
        budget: usize,
        extras: &[WeightedMeasure],
    ) -> Result<RiskReport, PenaltyError> {
        let family = &self.problem.family;
        if self.grid.is_empty() {
            return Err(PenaltyError::BadFamily("empty family".into()));
        }
        if budget < self.grid.len() {
            return Err(PenaltyError::BudgetTooSmall { budget, grid: self.grid.len() });
        }
        let neg_x = self.negated(position);

        let mut records = Vec::with_capacity(self.grid.len());
        let mut best: Option<(f64, f64, Argmax)> = None;
        for (&(a, b), m) in self.grid.iter().zip(&self.grid_measures) {
            let (gain, objective) = m.objective(&neg_x);
            if let Some(v) = objective {
                let g = gain;
                // Strict improvement keeps the lowest grid index on ties.
                if best.is_none_or(|(bv, _, _)| v > bv) {
                    best = Some((v, g.se, Argmax::Family { theta0: a, theta1: b }));
                }
            }
            records.push(GridRecord { theta0: a, theta1: b, eq_neg_x: gain, penalty: m.penalty, objective });
        }
        let mut evaluations = self.grid.len();

        if let Some((_, _, Argmax::Family { .. })) = best {
            let searchable: Vec<usize> =
                [family.theta0, family.theta1].iter().enumerate().filter(|(_, r)| r.points > 1).map(|(i, _)| i).collect();
            let passes = REFINEMENT_ROUNDS * searchable.len();
            let mut remaining = budget - evaluations;
            for pass in 0..passes {
                let share = remaining / (passes - pass);
                if share < 3 {
                    continue;
                }
                let coord = searchable[pass % searchable.len()];
                let Some((bv, _, Argmax::Family { theta0, theta1 })) = best else { unreachable!() };
                let range = if coord == 0 { family.theta0 } else { family.theta1 };
                let centre = if coord == 0 { theta0 } else { theta1 };
                let lo = (centre - range.step()).max(range.lo);
                let hi = (centre + range.step()).min(range.hi);
                let used = Cell::new(0usize);
                let failure = RefCell::new(None);
                let at = |x: f64| if coord == 0 { (x, theta1) } else { (theta0, x) };
                let score = |x: f64| {
                    used.set(used.get() + 1);
                    let (a, b) = at(x);
                    match self.problem.coefficients(a, b).and_then(|c| self.weigh(&c)) {
                        Ok(m) => m.objective(&neg_x).1,
                        Err(e) => {
                            failure.borrow_mut().get_or_insert(e);
                            None
                        }
                    }
                };
                let (x, v) = golden_section_max(score, lo, hi, share);
                if let Some(e) = failure.into_inner() {
                    return Err(e);
                }
                remaining -= used.get().min(remaining);
                evaluations += used.get();
                if v > bv {
                    let (a, b) = at(x);
                    let se = self.weigh(&self.problem.coefficients(a, b)?)?.gain(&neg_x).se;
                    best = Some((v, se, Argmax::Family { theta0: a, theta1: b }));
                }
            }
        }

        for (k, m) in extras.iter().enumerate() {
            if let (g, Some(v)) = m.objective(&neg_x) {
                if best.is_none_or(|(bv, _, _)| v > bv) {
                    best = Some((v, g.se, Argmax::Extra(k)));
                }
            }
            evaluations += 1;
        }

        let (value, se, argmax) = best.ok_or_else(|| PenaltyError::BadFamily("penalty infinite on every candidate".into()))?;
        let on_boundary = match argmax {
            Argmax::Family { theta0, theta1 } => {
                let edge = |x: f64, r: ParameterRange, natural: Option<f64>| {
                    let tol = 1e-9 * (1.0 + r.lo.abs() + r.hi.abs());
                    r.points > 1
                        && (((x - r.lo).abs() <= tol && natural != Some(r.lo)) || (x - r.hi).abs() <= tol)
                };
                edge(theta0, family.theta0, None) || edge(theta1, family.theta1, Some(-1.0))
            }
            Argmax::Extra(_) => false,
        };
        Ok(RiskReport { value, se, argmax, on_boundary, evaluations, grid: records })
    }
}

/// `ρ(X)` for the problem's position on `n_paths` fresh paths.
pub fn risk_measure(
    problem: &RiskProblem,
    optimizer_budget: usize,
    n_paths: usize,
    rng: RngStream,
) -> Result<RiskReport, PenaltyError> {
    if optimizer_budget < problem.family.size() {
        return Err(PenaltyError::BudgetTooSmall { budget: optimizer_budget, grid: problem.family.size() });
    }
    RiskEngine::new(problem, n_paths, rng)?.evaluate(&problem.position, optimizer_budget, &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::JumpAtom;

    fn brownian_problem(position: PathPosition, theta0: ParameterRange) -> RiskProblem {
        RiskProblem::new(
            LevyTriplet::brownian(),
            1.0,
            1,
            position,
            PenaltySpec::entropic(),
            SearchFamily::new(theta0, ParameterRange::fixed(0.0)).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn ranges_and_families() {
        assert!(ParameterRange::new(1.0, 0.0, 3).is_err());
        assert!(ParameterRange::new(0.0, 0.0, 2).is_err());
        assert!(ParameterRange::new(0.0, 1.0, 0).is_err());
        let r = ParameterRange::new(-1.0, 1.0, 5).unwrap();
        assert_eq!((0..5).map(|k| r.value(k)).collect::<Vec<_>>(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert!(SearchFamily::new(r, ParameterRange::new(-1.5, 0.0, 2).unwrap()).is_err());
        let fam = SearchFamily::new(r, ParameterRange::new(-1.0, 1.0, 3).unwrap()).unwrap();
        assert_eq!(fam.size(), 15);
        assert_eq!(fam.points()[..3], [(-1.0, -1.0), (-1.0, 0.0), (-1.0, 1.0)]);
    }

    #[test]
    fn clipping() {
        let x = PathPosition::terminal_brownian(100.0, 2.0).unwrap();
        let p = simulate_batch(&LevyTriplet::brownian(), 1.0, 1, 50, RngStream::new(1)).unwrap();
        assert!(p.iter().all(|p| x.evaluate(p).abs() <= 2.0));
        assert!(matches!(PathPosition::constant(1.0, 0.0), Err(PenaltyError::BadClip(_))));
    }

    #[test]
    fn constant_position_gives_negated_constant() {
        let prob = brownian_problem(PathPosition::constant(0.7, 8.0).unwrap(), ParameterRange::new(-1.0, 1.0, 5).unwrap());
        let r = risk_measure(&prob, 5, 200, RngStream::new(2)).unwrap();
        // Only θ = 0 has zero penalty; any other candidate pays for the same gain.
        assert_eq!(r.argmax, Argmax::Family { theta0: 0.0, theta1: 0.0 });
        assert!((r.value + 0.7).abs() < 1e-12);
        assert!(!r.on_boundary);
    }

    #[test]
    fn budget_must_cover_grid() {
        let prob = brownian_problem(PathPosition::constant(0.0, 1.0).unwrap(), ParameterRange::new(-1.0, 1.0, 5).unwrap());
        assert_eq!(
            risk_measure(&prob, 4, 10, RngStream::new(0)),
            Err(PenaltyError::BudgetTooSmall { budget: 4, grid: 5 })
        );
    }

    #[test]
    fn small_family_is_flagged() {
        let prob = brownian_problem(
            PathPosition::terminal_brownian(-2.0, 8.0).unwrap(),
            ParameterRange::new(-0.5, 0.5, 3).unwrap(),
        );
        let r = risk_measure(&prob, 20, 2000, RngStream::new(3)).unwrap();
        assert_eq!(r.argmax, Argmax::Family { theta0: 0.5, theta1: 0.0 });
        assert!(r.on_boundary);
    }

    #[test]
    fn nested_families_never_lower_the_sup() {
        let x = PathPosition::terminal_brownian(0.3, 8.0).unwrap();
        let coarse = brownian_problem(x.clone(), ParameterRange::new(-1.0, 1.0, 5).unwrap());
        let fine = brownian_problem(x, ParameterRange::new(-1.0, 1.0, 9).unwrap());
        let a = risk_measure(&coarse, 5, 1000, RngStream::new(4)).unwrap();
        let b = risk_measure(&fine, 9, 1000, RngStream::new(4)).unwrap();
        assert!(b.value >= a.value);
    }

    #[test]
    fn huge_jump_slope_pins_theta1_to_zero() {
        let spec = PenaltySpec::new(
            "pinned",
            super::super::ConvexFunction::identity(),
            super::super::ConvexFunction::half_square(),
            super::super::ConvexFunction::abs_slope(1e6),
            super::super::DeltaWeight::Constant(1.0),
        )
        .unwrap();
        let x = PathPosition::terminal_brownian(0.5, 8.0).unwrap();
        let jumps = LevyTriplet::new(0.0, true, vec![JumpAtom { size: 1.0, rate: 1.0 }]).unwrap();
        let theta0 = ParameterRange::new(-1.0, 1.0, 21).unwrap();
        let with_jumps = RiskProblem::new(
            jumps,
            1.0,
            1,
            x.clone(),
            spec,
            SearchFamily::new(theta0, ParameterRange::new(-0.5, 0.5, 5).unwrap()).unwrap(),
        )
        .unwrap();
        let plain = brownian_problem(x, theta0);
        let a = risk_measure(&with_jumps, 105, 2000, RngStream::new(5)).unwrap();
        let b = risk_measure(&plain, 21, 2000, RngStream::new(5)).unwrap();
        let Argmax::Family { theta0: t0, theta1: t1 } = a.argmax else { panic!() };
        assert_eq!(t1, 0.0);
        assert_eq!(a.argmax, b.argmax);
        assert!((a.value - b.value).abs() < 1e-12, "{} vs {}", a.value, b.value);
        assert!((t0 + 0.5).abs() < 0.11);
    }

    #[test]
    fn report_csv() {
        let prob = brownian_problem(PathPosition::constant(0.0, 1.0).unwrap(), ParameterRange::new(-1.0, 1.0, 3).unwrap());
        let r = risk_measure(&prob, 3, 10, RngStream::new(0)).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with("theta0,theta1,eq_neg_x,eq_neg_x_se,penalty,objective\n"));
    }
}
