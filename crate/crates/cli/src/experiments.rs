//! Execution of a validated [`RunConfig`] into a CSV table and a list of checks.

use rand::Rng;

use levypen::convergence::{stopped_variant, ConvergenceExperiment};
use levypen::density::{compensator_check, martingale_check};
use levypen::finite_duality::{
    fenchel_biconjugate, minimal_penalty, sample_interior_densities, BiconjugateGrid, DensityVector, FinitePenalty,
    PositionGrid,
};
use levypen::penalty_risk::{
    convexity_evidence, minimality_evidence, penalty_value, risk_measure, Argmax, PathPosition, RiskProblem,
};
use levypen::{Extended, RngStream};

use crate::config::{sample_positions, shifted, FiniteOperation, Plan, RunConfig};

/// A declared tolerance and whether the run met it.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, value: f64, target: f64, tolerance: f64, pass: bool) -> Self {
        Self { name: name.into(), value, target, tolerance, pass }
    }

    fn flag(name: impl Into<String>, pass: bool) -> Self {
        Self::new(name, f64::from(u8::from(pass)), 1.0, 0.0, pass)
    }
}

/// Everything a run produces, held in memory until the end.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub table: Vec<u8>,
    pub checks: Vec<Check>,
    pub summary: String,
}

/// A numerical failure after validation succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct RunError(pub String);

impl<E: std::error::Error> From<E> for RunError {
    fn from(e: E) -> Self {
        RunError(e.to_string())
    }
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn table(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>, RunError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| RunError(e.to_string()))
}

pub fn checks_csv(checks: &[Check]) -> Result<Vec<u8>, RunError> {
    let rows = checks
        .iter()
        .map(|c| vec![c.name.clone(), fmt(c.value), fmt(c.target), fmt(c.tolerance), c.pass.to_string()])
        .collect();
    table(&["check", "value", "target", "tolerance", "pass"], rows)
}

fn max_increase(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

pub fn execute(run: &RunConfig) -> Result<Outcome, RunError> {
    let (seed, n_paths, steps, horizon) = (run.seed, run.n_paths, run.steps, run.horizon);
    match &run.plan {
        Plan::FiniteDuality { space, penalty, operation, densities, random_densities, tolerance, bound, levels } => {
            let mut inputs = Vec::new();
            for (i, q) in densities.iter().enumerate() {
                inputs.push((format!("q{i}"), DensityVector::from_measure(space, q)?));
            }
            for (i, z) in sample_interior_densities(space, *random_densities, seed).into_iter().enumerate() {
                inputs.push((format!("r{i}"), z));
            }
            let op_name = match operation {
                FiniteOperation::MinimalPenalty => "minimal-penalty",
                FiniteOperation::Biconjugate => "biconjugate",
            };
            let mut rows = Vec::new();
            let mut checks = Vec::new();
            for (id, z) in &inputs {
                let psi = penalty.evaluate(space, z);
                let value = match operation {
                    FiniteOperation::MinimalPenalty => {
                        let rho = |x: &levypen::finite_duality::Position| {
                            penalty.closed_form_risk(space, x).expect("bundled penalties have closed forms")
                        };
                        let plan = PositionGrid { bound: *bound, levels: *levels, tol: f64::INFINITY };
                        minimal_penalty(space, &rho, z, &plan)?.value
                    }
                    FiniteOperation::Biconjugate => fenchel_biconjugate(space, penalty, z, &BiconjugateGrid::default())?,
                };
                let psi_value = psi.finite().unwrap_or(f64::INFINITY);
                let gap = psi_value - value;
                // The computed value is a lower bound; it must sit within the tolerance below ψ.
                let pass = gap.abs() <= *tolerance;
                rows.push(vec![
                    op_name.to_string(),
                    id.clone(),
                    fmt(value),
                    psi.to_string(),
                    fmt(gap),
                    fmt(*tolerance),
                    pass.to_string(),
                ]);
                checks.push(Check::new(format!("{op_name} {id}"), value, psi_value, *tolerance, pass));
            }
            let worst = rows.iter().map(|r| r[4].parse::<f64>().unwrap_or(f64::INFINITY).abs()).fold(0.0, f64::max);
            Ok(Outcome {
                table: table(&["operation", "input_id", "value", "penalty", "gap", "tolerance", "pass"], rows)?,
                checks,
                summary: format!("{} densities under {penalty}, max |gap| {worst:e}", inputs.len()),
            })
        }
        Plan::Martingale { triplet, theta, times, k_se } => {
            let mut rows = Vec::new();
            let mut checks = Vec::new();
            for (i, &t) in times.iter().enumerate() {
                let est = martingale_check(triplet, theta, t, n_paths, steps, RngStream::with_index(seed, i as u64))?;
                let pass = est.within(1.0, *k_se);
                rows.push(vec![fmt(t), fmt(est.mean), fmt(est.se), "1".into(), pass.to_string()]);
                checks.push(Check::new(format!("E[D_t] at t = {t}"), est.mean, 1.0, k_se * est.se, pass));
            }
            Ok(Outcome {
                table: table(&["t", "estimate", "se", "target", "pass"], rows)?,
                checks,
                summary: format!("E[D_t] at {} times under `{}`", times.len(), theta.label()),
            })
        }
        Plan::Compensator { triplet, theta, atoms, k_se } => {
            let mut rows = Vec::new();
            let mut checks = Vec::new();
            for &atom in atoms {
                let c = compensator_check(triplet, theta, atom, n_paths, steps, RngStream::with_index(seed, atom as u64))?;
                let e = c.empirical;
                let pass = e.within(c.target, *k_se);
                let size = triplet.atoms()[atom].size;
                rows.push(vec![atom.to_string(), fmt(size), fmt(e.mean), fmt(e.se), fmt(c.target), pass.to_string()]);
                checks.push(Check::new(format!("Q-rate of atom {atom}"), e.mean, c.target, k_se * e.se, pass));
            }
            Ok(Outcome {
                table: table(&["atom", "size", "empirical", "se", "target", "pass"], rows)?,
                checks,
                summary: format!("{} atoms", atoms.len()),
            })
        }
        Plan::QvConvergence { triplet, base, shift, n_values, epsilon, stop_level, alpha } => {
            let rule = |n: u32| shifted(base, *shift, n, triplet);
            let exp = ConvergenceExperiment::new(base.clone(), &rule, n_values, *epsilon, n_paths, RngStream::new(seed))?;
            let level = stop_level.map_or(Extended::PosInfinity, Extended::Finite);
            let t = stopped_variant(&exp, triplet, horizon, steps, level)?;
            let mut buf = Vec::new();
            t.write_csv(&mut buf)?;
            let last = t.rows.last().map_or(0.0, |r| r.qv_exceed_prob);
            let l1_up = max_increase(t.rows.iter().map(|r| r.l1_mean));
            let p_up = max_increase(t.rows.iter().map(|r| r.qv_exceed_prob));
            let checks = vec![
                Check::new("L1 nonincreasing in n", l1_up, 0.0, 0.0, t.l1_trend_ok),
                Check::new("exceedance nonincreasing in n", p_up, 0.0, 0.0, p_up <= 0.0),
                Check::new("final exceedance below alpha", last, 0.0, *alpha, last < *alpha),
            ];
            let trend = if t.l1_strictly_decreasing() { "strictly decreasing" } else { "not strictly decreasing" };
            Ok(Outcome { table: buf, checks, summary: format!("L1 trend {trend}, final exceedance {last}") })
        }
        Plan::Penalty { triplet, theta, spec, expected, tolerance, k_se } => {
            let v = penalty_value(theta, spec, triplet, horizon, steps, n_paths, RngStream::new(seed))?;
            let mut rows = vec![vec!["quadrature".to_string(), v.quadrature.to_string(), "0".into()]];
            let mut checks = Vec::new();
            if let Some(mc) = v.monte_carlo {
                rows.push(vec!["monte_carlo".into(), fmt(mc.mean), fmt(mc.se)]);
                if let Some(q) = v.quadrature.finite() {
                    checks.push(Check::new("monte carlo vs quadrature", mc.mean, q, k_se * mc.se, mc.within(q, *k_se)));
                }
            }
            if let Some(e) = expected {
                let q = v.quadrature.finite().unwrap_or(f64::INFINITY);
                checks.push(Check::new("quadrature vs expected", q, *e, *tolerance, (q - e).abs() <= *tolerance));
            }
            Ok(Outcome {
                table: table(&["route", "value", "se"], rows)?,
                checks,
                summary: format!("{} penalty of `{}` = {}", spec.name(), theta.label(), v.quadrature),
            })
        }
        Plan::Risk { triplet, spec, position, family, budget, expected, expected_argmax, tolerance, argmax_tolerance } => {
            let problem =
                RiskProblem::new(triplet.clone(), horizon, steps, position.clone(), spec.clone(), *family)?;
            let r = risk_measure(&problem, *budget, n_paths, RngStream::new(seed))?;
            let mut buf = Vec::new();
            r.write_csv(&mut buf)?;
            let mut checks = vec![Check::flag("argmax inside the family box", !r.on_boundary)];
            if let Some(e) = expected {
                let tol = (3.0 * r.se).max(*tolerance);
                checks.push(Check::new("rho vs expected", r.value, *e, tol, (r.value - e).abs() <= tol));
            }
            let (a0, a1) = match r.argmax {
                Argmax::Family { theta0, theta1 } => (theta0, theta1),
                Argmax::Extra(_) => (f64::NAN, f64::NAN),
            };
            if let Some((e0, e1)) = expected_argmax {
                let dist = (a0 - e0).abs().max((a1 - e1).abs());
                checks.push(Check::new("argmax vs expected", dist, 0.0, *argmax_tolerance, dist <= *argmax_tolerance));
            }
            Ok(Outcome {
                table: buf,
                checks,
                summary: format!(
                    "rho({}) = {} +- {} at (theta0, theta1) = ({a0}, {a1}) after {} evaluations",
                    position.label(),
                    r.value,
                    r.se,
                    r.evaluations
                ),
            })
        }
        Plan::Convexity { triplet, spec, trials, theta0_range, theta1_range, min_hold_fraction } => {
            let mut rng = RngStream::new(seed).rng();
            let mut rows = Vec::new();
            let mut holds = 0;
            for trial in 0..*trials {
                let mut draw = || {
                    let t0: f64 = rng.gen_range(theta0_range.0..=theta0_range.1);
                    let t1: f64 = rng.gen_range(theta1_range.0..=theta1_range.1);
                    (t0, t1)
                };
                let (a, b) = (draw(), draw());
                let lambda: f64 = rng.gen();
                let ca = levypen::density::GirsanovCoefficients::constant(a.0, a.1, triplet, horizon)?;
                let cb = levypen::density::GirsanovCoefficients::constant(b.0, b.1, triplet, horizon)?;
                let rs = RngStream::with_index(seed, trial as u64);
                let r = convexity_evidence(&ca, &cb, lambda, spec, triplet, horizon, steps, n_paths, rs)?;
                holds += usize::from(r.holds);
                rows.push(vec![
                    trial.to_string(),
                    fmt(a.0),
                    fmt(a.1),
                    fmt(b.0),
                    fmt(b.1),
                    fmt(lambda),
                    fmt(r.mixture.mean),
                    fmt(r.mixture.se),
                    r.combination.to_string(),
                    fmt(r.margin.mean),
                    fmt(r.margin.se),
                    r.degenerate_paths.to_string(),
                    r.holds.to_string(),
                ]);
            }
            let fraction = holds as f64 / *trials as f64;
            let header = [
                "trial",
                "theta0_a",
                "theta1_a",
                "theta0_b",
                "theta1_b",
                "lambda",
                "mixture",
                "mixture_se",
                "combination",
                "margin",
                "margin_se",
                "degenerate_paths",
                "holds",
            ];
            Ok(Outcome {
                table: table(&header, rows)?,
                checks: vec![Check::new(
                    "fraction of trials where convexity held",
                    fraction,
                    *min_hold_fraction,
                    0.0,
                    fraction >= *min_hold_fraction,
                )],
                summary: format!("convexity held in {holds}/{trials} trials"),
            })
        }
        Plan::Minimality { triplet, spec, family, measures, positions, budgets, risk_budget } => {
            let anchor = PathPosition::constant(0.0, positions.clip)?;
            let problem = RiskProblem::new(triplet.clone(), horizon, steps, anchor, spec.clone(), *family)?;
            let sampler = |b: usize| sample_positions(positions, b);
            let r =
                minimality_evidence(&problem, measures, &sampler, budgets, *risk_budget, n_paths, RngStream::new(seed))?;
            let rows = r
                .rows
                .iter()
                .map(|row| {
                    vec![
                        measures[row.measure].label().to_string(),
                        row.budget.to_string(),
                        fmt(row.lower_bound),
                        row.penalty.to_string(),
                        row.gap.to_string(),
                        row.best_position.clone(),
                    ]
                })
                .collect();
            let last_gaps: Vec<String> = (0..measures.len())
                .filter_map(|j| r.rows_for(j).last().map(|row| row.gap.to_string()))
                .collect();
            Ok(Outcome {
                table: table(&["measure", "budget", "lower_bound", "penalty", "gap", "best_position"], rows)?,
                checks: vec![
                    Check::flag("lower bound never exceeds the penalty", r.bound_respected),
                    Check::flag("gaps nonincreasing in the budget", r.gaps_monotone),
                ],
                summary: format!("final gaps [{}]", last_gaps.join(", ")),
            })
        }
    }
}
