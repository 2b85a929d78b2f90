//! Density processes `D = E(Z^θ)` of absolutely continuous measures.
//!
//! For Girsanov coefficients `θ0` (Brownian) and `θ1 ≥ -1` (jumps) the density
//! is the Doléans-Dade exponential
//!
//! ```text
//! D_t = exp{ ∫θ0 dW - ½∫θ0² ds - ∫Σ_i θ1(s,x_i) λ_i ds + Σ_{s≤t} ln(1 + θ1(s, ΔL_s)) }
//! ```
//!
//! and vanishes from the first jump with `θ1 = -1` on (the time `τ0`). The
//! Brownian integral is a left-point sum on the simulation grid; the jump
//! compensator is integrated exactly (adaptive Simpson), so the discretized
//! density is itself a martingale.

use std::io::{self, Write};
use std::sync::Arc;

use thiserror::Error;

use crate::levy_model::{map_paths, JumpAtom, LevyError, LevyPath, LevyTriplet};
use crate::quadrature::{adaptive_simpson, DEFAULT_TOL};
use crate::rng::RngStream;
use crate::stats::Estimate;

/// Points per atom used to spot-check `θ1 ≥ -1` on `[0, T]`.
const ADMISSIBILITY_SAMPLES: usize = 1024;
pub const MIN_MARTINGALE_PATHS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensityError {
    #[error("jump coefficient {value} < -1 at t = {time}, x = {size}")]
    JumpCoefficientBelowMinusOne { time: f64, size: f64, value: f64 },
    #[error("coefficient not finite at t = {0}")]
    NonFiniteCoefficient(f64),
    #[error("coefficients not admissible: {0}")]
    NotAdmissible(String),
    #[error("path horizon {path} exceeds coefficient horizon {coefficients}")]
    HorizonMismatch { path: f64, coefficients: f64 },
    #[error("density paths come from different Lévy paths")]
    MismatchedPaths,
    #[error("length mismatch: {0} paths vs {1} densities")]
    LengthMismatch(usize, usize),
    #[error("jump coefficient is not constant in time on atom {0}")]
    NonConstantJumpCoefficient(usize),
    #[error("need at least {MIN_MARTINGALE_PATHS} paths, got {0}")]
    TooFewPaths(usize),
    #[error(transparent)]
    Levy(#[from] LevyError),
}

pub type BrownianCoefficient = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type JumpCoefficient = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Deterministic Girsanov coefficients `(θ0(t), θ1(t, x))` validated against a
/// model on `[0, horizon]`.
#[derive(Clone)]
pub struct GirsanovCoefficients {
    theta0: BrownianCoefficient,
    theta1: JumpCoefficient,
    horizon: f64,
    atoms: Vec<JumpAtom>,
    brownian_energy: f64,
    jump_energy: f64,
    label: String,
}

impl std::fmt::Debug for GirsanovCoefficients {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GirsanovCoefficients")
            .field("label", &self.label)
            .field("horizon", &self.horizon)
            .field("brownian_energy", &self.brownian_energy)
            .field("jump_energy", &self.jump_energy)
            .finish()
    }
}

impl GirsanovCoefficients {
    /// Validates `θ1 ≥ -1` on every atom and computes the two admissibility
    /// integrals `∫θ0² dt` and `∫Σ_i θ1(t,x_i)² λ_i dt` over `[0, horizon]`.
    pub fn new(
        theta0: BrownianCoefficient,
        theta1: JumpCoefficient,
        triplet: &LevyTriplet,
        horizon: f64,
        label: impl Into<String>,
    ) -> Result<Self, DensityError> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(DensityError::NotAdmissible(format!("horizon {horizon}")));
        }
        let atoms = triplet.atoms().to_vec();
        for k in 0..=ADMISSIBILITY_SAMPLES {
            let t = horizon * k as f64 / ADMISSIBILITY_SAMPLES as f64;
            if !theta0(t).is_finite() {
                return Err(DensityError::NonFiniteCoefficient(t));
            }
            for a in &atoms {
                let v = theta1(t, a.size);
                if !v.is_finite() {
                    return Err(DensityError::NonFiniteCoefficient(t));
                }
                if v < -1.0 {
                    return Err(DensityError::JumpCoefficientBelowMinusOne { time: t, size: a.size, value: v });
                }
            }
        }
        let brownian_energy = adaptive_simpson(|t| theta0(t).powi(2), 0.0, horizon, DEFAULT_TOL)
            .map_err(|e| DensityError::NotAdmissible(format!("∫θ0² dt: {e:?}")))?;
        let jump_energy = adaptive_simpson(
            |t| atoms.iter().map(|a| theta1(t, a.size).powi(2) * a.rate).sum(),
            0.0,
            horizon,
            DEFAULT_TOL,
        )
        .map_err(|e| DensityError::NotAdmissible(format!("∫Σθ1²λ dt: {e:?}")))?;
        Ok(Self { theta0, theta1, horizon, atoms, brownian_energy, jump_energy, label: label.into() })
    }

    /// Constant `θ0` and a `θ1` constant in time and jump size.
    pub fn constant(theta0: f64, theta1: f64, triplet: &LevyTriplet, horizon: f64) -> Result<Self, DensityError> {
        Self::new(
            Arc::new(move |_| theta0),
            Arc::new(move |_, _| theta1),
            triplet,
            horizon,
            format!("const:{theta0},{theta1}"),
        )
    }

    /// `θ ≡ 0`, i.e. `Q = P`.
    pub fn zero(triplet: &LevyTriplet, horizon: f64) -> Result<Self, DensityError> {
        Self::constant(0.0, 0.0, triplet, horizon)
    }

    /// Constant `θ0`, and `θ1(t, x_i) = table[i]` on the atoms of `triplet` (0 off the atoms).
    pub fn per_atom(theta0: f64, table: Vec<f64>, triplet: &LevyTriplet, horizon: f64) -> Result<Self, DensityError> {
        if table.len() != triplet.atoms().len() {
            return Err(DensityError::NotAdmissible(format!(
                "table has {} entries for {} atoms",
                table.len(),
                triplet.atoms().len()
            )));
        }
        let sizes: Vec<f64> = triplet.atoms().iter().map(|a| a.size).collect();
        let label = format!(
            "per-atom:{theta0};{}",
            table.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
        );
        let lookup = move |_t: f64, x: f64| sizes.iter().position(|&s| s == x).map_or(0.0, |i| table[i]);
        Self::new(Arc::new(move |_| theta0), Arc::new(lookup), triplet, horizon, label)
    }

    /// `θ0(t) = a0 + b0 t`, `θ1(t, x) = a1 + b1 t`.
    pub fn linear_in_t(
        a0: f64,
        b0: f64,
        a1: f64,
        b1: f64,
        triplet: &LevyTriplet,
        horizon: f64,
    ) -> Result<Self, DensityError> {
        Self::new(
            Arc::new(move |t| a0 + b0 * t),
            Arc::new(move |t, _| a1 + b1 * t),
            triplet,
            horizon,
            format!("linear-in-t:{a0},{b0},{a1},{b1}"),
        )
    }

    pub fn theta0(&self, t: f64) -> f64 {
        (self.theta0)(t)
    }

    pub fn theta1(&self, t: f64, x: f64) -> f64 {
        (self.theta1)(t, x)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn atoms(&self) -> &[JumpAtom] {
        &self.atoms
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `∫_0^T θ0(t)² dt`.
    pub fn brownian_energy(&self) -> f64 {
        self.brownian_energy
    }

    /// `∫_0^T Σ_i θ1(t, x_i)² λ_i dt`.
    pub fn jump_energy(&self) -> f64 {
        self.jump_energy
    }

    /// `Σ_i θ1(t, x_i) λ_i`.
    pub fn compensator_rate(&self, t: f64) -> f64 {
        self.atoms.iter().map(|a| self.theta1(t, a.size) * a.rate).sum()
    }

    /// `∫_a^b Σ_i θ1(s, x_i) λ_i ds`.
    pub fn compensator_integral(&self, a: f64, b: f64) -> f64 {
        if self.atoms.is_empty() || a == b {
            return 0.0;
        }
        adaptive_simpson(|s| self.compensator_rate(s), a, b, DEFAULT_TOL)
            .expect("compensator integrand validated at construction")
    }

    /// `θ1(·, x_i)` as a constant, if it is one on the sampled times.
    pub fn constant_on_atom(&self, atom: usize) -> Option<f64> {
        let x = self.atoms.get(atom)?.size;
        let first = self.theta1(0.0, x);
        (0..=ADMISSIBILITY_SAMPLES)
            .map(|k| self.theta1(self.horizon * k as f64 / ADMISSIBILITY_SAMPLES as f64, x))
            .all(|v| (v - first).abs() <= 1e-12)
            .then_some(first)
    }
}

/// Coefficient presets as written in configs: `zero`, `const:θ0,θ1`,
/// `linear-in-t:a0,b0,a1,b1` and `per-atom:θ0;v1,v2,...`.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientPreset {
    Zero,
    Constant { theta0: f64, theta1: f64 },
    LinearInT { a0: f64, b0: f64, a1: f64, b1: f64 },
    PerAtom { theta0: f64, table: Vec<f64> },
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("cannot parse coefficient preset {input:?}: {reason}")]
pub struct CoefficientParseError {
    pub input: String,
    pub reason: String,
}

impl std::str::FromStr for CoefficientPreset {
    type Err = CoefficientParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let fail = |reason: &str| CoefficientParseError { input: s.to_string(), reason: reason.to_string() };
        let numbers = |body: &str| -> Result<Vec<f64>, CoefficientParseError> {
            body.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| fail(&format!("{v:?} is not a number"))))
                .collect()
        };
        let (kind, body) = s.split_once(':').unwrap_or((s, ""));
        match kind.trim() {
            "zero" if body.is_empty() => Ok(Self::Zero),
            "const" => match numbers(body)?[..] {
                [theta0, theta1] => Ok(Self::Constant { theta0, theta1 }),
                _ => Err(fail("expected const:θ0,θ1")),
            },
            "linear-in-t" => match numbers(body)?[..] {
                [a0, b0, a1, b1] => Ok(Self::LinearInT { a0, b0, a1, b1 }),
                _ => Err(fail("expected linear-in-t:a0,b0,a1,b1")),
            },
            "per-atom" => {
                let (head, table) = body.split_once(';').ok_or_else(|| fail("expected per-atom:θ0;v1,v2,..."))?;
                let theta0 = head.trim().parse().map_err(|_| fail("θ0 is not a number"))?;
                Ok(Self::PerAtom { theta0, table: numbers(table)? })
            }
            _ => Err(fail("unknown kind (zero, const, linear-in-t, per-atom)")),
        }
    }
}

impl CoefficientPreset {
    pub fn build(&self, triplet: &LevyTriplet, horizon: f64) -> Result<GirsanovCoefficients, DensityError> {
        match self {
            Self::Zero => GirsanovCoefficients::zero(triplet, horizon),
            Self::Constant { theta0, theta1 } => GirsanovCoefficients::constant(*theta0, *theta1, triplet, horizon),
            Self::LinearInT { a0, b0, a1, b1 } => {
                GirsanovCoefficients::linear_in_t(*a0, *b0, *a1, *b1, triplet, horizon)
            }
            Self::PerAtom { theta0, table } => GirsanovCoefficients::per_atom(*theta0, table.clone(), triplet, horizon),
        }
    }
}

/// The four summands of `ln D_t`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LogParts {
    /// `∫θ0 dW`
    pub brownian_integral: f64,
    /// `-½∫θ0² ds`
    pub brownian_drift: f64,
    /// `-∫Σθ1 λ ds`
    pub jump_compensator: f64,
    /// `Σ ln(1 + θ1(s, ΔL_s))`
    pub jump_log: f64,
}

impl LogParts {
    pub fn total(&self) -> f64 {
        self.brownian_integral + self.brownian_drift + self.jump_compensator + self.jump_log
    }
}

/// Identifies the Lévy path a density was built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PathFingerprint {
    steps: usize,
    jumps: usize,
    terminal_w: u64,
    terminal_l: u64,
}

impl PathFingerprint {
    fn of(path: &LevyPath) -> Self {
        Self {
            steps: path.grid.steps(),
            jumps: path.jumps.len(),
            terminal_w: path.terminal_brownian().to_bits(),
            terminal_l: path.terminal_level().to_bits(),
        }
    }
}

/// `D` along one path: at every grid point, and just before and after every jump.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityPath {
    pub grid_values: Vec<f64>,
    /// `D_{s-}` at each recorded jump.
    pub jump_pre: Vec<f64>,
    /// `D_s` at each recorded jump.
    pub jump_post: Vec<f64>,
    /// First time `D` hits 0; `None` if it never does on `[0, T]`.
    pub tau0: Option<f64>,
    /// Log decomposition at the grid points, frozen from `τ0` on.
    pub log_parts: Vec<LogParts>,
    source: PathFingerprint,
}

impl DensityPath {
    pub fn terminal(&self) -> f64 {
        *self.grid_values.last().expect("nonempty density")
    }

    fn check_source(&self, path: &LevyPath) -> Result<(), DensityError> {
        if self.source != PathFingerprint::of(path) {
            return Err(DensityError::MismatchedPaths);
        }
        Ok(())
    }

    /// `(t, D_t)` at grid points and jump times in time order; a jump time
    /// contributes its post-jump value.
    pub fn values(&self, path: &LevyPath) -> Vec<(f64, f64)> {
        let t = path.grid.points();
        let mut out = Vec::with_capacity(t.len() + path.jumps.len());
        let mut j = 0;
        for (k, &tk) in t.iter().enumerate() {
            while j < path.jumps.len() && path.jumps[j].time < tk {
                out.push((path.jumps[j].time, self.jump_post[j]));
                j += 1;
            }
            out.push((tk, self.grid_values[k]));
            while j < path.jumps.len() && path.jumps[j].time == tk {
                j += 1;
            }
        }
        out
    }

    /// Writes `t,D,killed` rows (grid points and jump times).
    pub fn write_csv<W: Write>(&self, path: &LevyPath, mut out: W) -> io::Result<()> {
        writeln!(out, "t,D,killed")?;
        for (t, d) in self.values(path) {
            let killed = self.tau0.is_some_and(|tau| t >= tau);
            writeln!(out, "{t},{d},{}", u8::from(killed))?;
        }
        Ok(())
    }
}

/// Builds `D = E(Z^θ)` on a path.
pub fn stochastic_exponential(path: &LevyPath, theta: &GirsanovCoefficients) -> Result<DensityPath, DensityError> {
    let horizon = path.horizon();
    if horizon > theta.horizon * (1.0 + 1e-12) {
        return Err(DensityError::HorizonMismatch { path: horizon, coefficients: theta.horizon });
    }
    let t = path.grid.points();
    let mut grid_values = Vec::with_capacity(t.len());
    let mut log_parts = Vec::with_capacity(t.len());
    let mut jump_pre = Vec::with_capacity(path.jumps.len());
    let mut jump_post = Vec::with_capacity(path.jumps.len());
    let mut parts = LogParts::default();
    let mut tau0 = None;
    let mut compensated = 0.0;
    grid_values.push(1.0);
    log_parts.push(parts);

    let mut j = 0;
    for k in 0..t.len() - 1 {
        let (t0, t1) = (t[k], t[k + 1]);
        let mut last = t0;
        while j < path.jumps.len() && path.jumps[j].time <= t1 {
            let jump = path.jumps[j];
            j += 1;
            if tau0.is_some() {
                jump_pre.push(0.0);
                jump_post.push(0.0);
                continue;
            }
            compensated += theta.compensator_integral(last, jump.time);
            last = jump.time;
            parts.jump_compensator = -compensated;
            // Brownian step for this interval lands at its right end.
            let pre = parts.total().exp();
            jump_pre.push(pre);
            let th = theta.theta1(jump.time, jump.size);
            if th <= -1.0 {
                tau0 = Some(jump.time);
                jump_post.push(0.0);
            } else {
                parts.jump_log += th.ln_1p();
                jump_post.push(parts.total().exp());
            }
        }
        if tau0.is_none() {
            compensated += theta.compensator_integral(last, t1);
            let th0 = theta.theta0(t0);
            parts.brownian_integral += th0 * (path.brownian[k + 1] - path.brownian[k]);
            parts.brownian_drift -= 0.5 * th0 * th0 * (t1 - t0);
            parts.jump_compensator = -compensated;
            grid_values.push(parts.total().exp());
        } else {
            grid_values.push(0.0);
        }
        log_parts.push(parts);
    }

    Ok(DensityPath { grid_values, jump_pre, jump_post, tau0, log_parts, source: PathFingerprint::of(path) })
}

/// Running `[D^a - D^b]` at the grid points:
///
/// ```text
/// ∫_0^t (D^a_{s-} θ0^a(s) - D^b_{s-} θ0^b(s))² ds + Σ_{s ≤ t} (D^a_{s-} θ1^a(s, ΔL_s) - D^b_{s-} θ1^b(s, ΔL_s))²
/// ```
///
/// with the time integral as a left-point sum. Jumps in `(t_k, t_{k+1}]`
/// are booked at `t_{k+1}`.
pub fn quadratic_variation_process(
    d1: &DensityPath,
    d2: &DensityPath,
    theta_a: &GirsanovCoefficients,
    theta_b: &GirsanovCoefficients,
    path: &LevyPath,
) -> Result<Vec<f64>, DensityError> {
    d1.check_source(path)?;
    d2.check_source(path)?;
    let t = path.grid.points();
    let mut qv = Vec::with_capacity(t.len());
    let mut acc = 0.0;
    qv.push(0.0);
    let mut j = 0;
    for k in 0..t.len() - 1 {
        let (t0, t1) = (t[k], t[k + 1]);
        let diff = d1.grid_values[k] * theta_a.theta0(t0) - d2.grid_values[k] * theta_b.theta0(t0);
        acc += diff * diff * (t1 - t0);
        while j < path.jumps.len() && path.jumps[j].time <= t1 {
            let jump = path.jumps[j];
            let diff = d1.jump_pre[j] * theta_a.theta1(jump.time, jump.size)
                - d2.jump_pre[j] * theta_b.theta1(jump.time, jump.size);
            acc += diff * diff;
            j += 1;
        }
        qv.push(acc);
    }
    Ok(qv)
}

/// `[D^a - D^b]_T`.
pub fn quadratic_variation_diff(
    d1: &DensityPath,
    d2: &DensityPath,
    theta_a: &GirsanovCoefficients,
    theta_b: &GirsanovCoefficients,
    path: &LevyPath,
) -> Result<f64, DensityError> {
    quadratic_variation_process(d1, d2, theta_a, theta_b, path).map(|qv| *qv.last().expect("nonempty"))
}

/// `∫ (θ0^a - θ0^b)² D²_{s-} ds` on the grid. Zero when both coefficient
/// pairs represent the same density on a Brownian model.
pub fn brownian_discrepancy(
    density: &DensityPath,
    theta_a: &GirsanovCoefficients,
    theta_b: &GirsanovCoefficients,
    path: &LevyPath,
) -> Result<f64, DensityError> {
    density.check_source(path)?;
    let t = path.grid.points();
    Ok((0..t.len() - 1)
        .map(|k| {
            let d = theta_a.theta0(t[k]) - theta_b.theta0(t[k]);
            d * d * density.grid_values[k].powi(2) * (t[k + 1] - t[k])
        })
        .sum())
}

/// Monte Carlo `E_P[D_t]` over `n_paths` paths on `[0, t]` with `steps` intervals.
/// A nonnegative local martingale is a supermartingale, so the estimate
/// should never exceed `1 + 3 SE`; for admissible deterministic coefficients
/// it is 1.
pub fn martingale_check(
    triplet: &LevyTriplet,
    theta: &GirsanovCoefficients,
    t: f64,
    n_paths: usize,
    steps: usize,
    rng: RngStream,
) -> Result<Estimate, DensityError> {
    if n_paths < MIN_MARTINGALE_PATHS {
        return Err(DensityError::TooFewPaths(n_paths));
    }
    let terminal = map_paths(triplet, t, steps, n_paths, rng, |p| {
        stochastic_exponential(&p, theta).map(|d| d.terminal())
    })?
    .into_iter()
    .collect::<Result<Vec<f64>, _>>()?;
    Ok(Estimate::from_samples(&terminal))
}

/// `E_Q[F] = E_P[D_T F]` as a sample mean over paired paths and densities.
pub fn reweighted_expectation<F>(paths: &[LevyPath], densities: &[DensityPath], f: F) -> Result<Estimate, DensityError>
where
    F: Fn(&LevyPath) -> f64,
{
    if paths.len() != densities.len() {
        return Err(DensityError::LengthMismatch(paths.len(), densities.len()));
    }
    let mut samples = Vec::with_capacity(paths.len());
    for (p, d) in paths.iter().zip(densities) {
        d.check_source(p)?;
        let w = d.terminal();
        // A killed path carries no Q-mass; skip evaluating F there.
        samples.push(if w == 0.0 { 0.0 } else { w * f(p) });
    }
    Ok(Estimate::from_samples(&samples))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompensatorCheck {
    /// Reweighted jumps of the atom per unit time.
    pub empirical: Estimate,
    /// `(1 + θ1(x_i)) λ_i`.
    pub target: f64,
}

/// Under `Q` the jump intensity of atom `i` becomes `(1 + θ1(x_i)) λ_i`.
/// Estimates it as `E_P[D_T N_i(T)] / T`.
pub fn compensator_check(
    triplet: &LevyTriplet,
    theta: &GirsanovCoefficients,
    atom_index: usize,
    n_paths: usize,
    steps: usize,
    rng: RngStream,
) -> Result<CompensatorCheck, DensityError> {
    let atom = triplet.atom(atom_index)?;
    let th1 = theta
        .constant_on_atom(atom_index)
        .ok_or(DensityError::NonConstantJumpCoefficient(atom_index))?;
    let horizon = theta.horizon();
    let samples = map_paths(triplet, horizon, steps, n_paths, rng, |p| {
        stochastic_exponential(&p, theta).map(|d| d.terminal() * p.jump_count(atom_index) as f64 / horizon)
    })?
    .into_iter()
    .collect::<Result<Vec<f64>, _>>()?;
    Ok(CompensatorCheck { empirical: Estimate::from_samples(&samples), target: (1.0 + th1) * atom.rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_model::{simulate_path, JumpAtom, LevyPath, TimeGrid};

    fn one_atom(x: f64, rate: f64, brownian: bool) -> LevyTriplet {
        LevyTriplet::new(0.0, brownian, vec![JumpAtom { size: x, rate }]).unwrap()
    }

    fn hand_path(grid: Vec<f64>, brownian: Vec<f64>, jumps: Vec<(f64, f64, usize)>) -> LevyPath {
        let grid = Arc::new(TimeGrid::new(grid).unwrap());
        let levels = brownian.clone();
        LevyPath {
            grid,
            brownian,
            jumps: jumps
                .into_iter()
                .map(|(time, size, atom)| crate::levy_model::Jump { time, size, atom })
                .collect(),
            levels,
        }
    }

    #[test]
    fn coefficient_validation() {
        let tr = one_atom(1.0, 1.0, true);
        assert!(GirsanovCoefficients::constant(0.5, -1.0, &tr, 1.0).is_ok());
        assert!(matches!(
            GirsanovCoefficients::constant(0.5, -1.5, &tr, 1.0),
            Err(DensityError::JumpCoefficientBelowMinusOne { .. })
        ));
        assert!(matches!(
            GirsanovCoefficients::linear_in_t(0.0, 0.0, 0.0, -2.0, &tr, 1.0),
            Err(DensityError::JumpCoefficientBelowMinusOne { .. })
        ));
        assert!(matches!(
            GirsanovCoefficients::new(Arc::new(|t| 1.0 / (t - 0.5)), Arc::new(|_, _| 0.0), &tr, 1.0, "pole"),
            Err(DensityError::NonFiniteCoefficient(_))
        ));
        let c = GirsanovCoefficients::linear_in_t(1.0, 2.0, 0.5, 0.0, &tr, 1.0).unwrap();
        // ∫(1 + 2t)² = 1 + 2 + 4/3
        assert!((c.brownian_energy() - 13.0 / 3.0).abs() < 1e-10);
        assert!((c.jump_energy() - 0.25).abs() < 1e-12);
        assert_eq!(c.constant_on_atom(0), Some(0.5));
        let moving = GirsanovCoefficients::linear_in_t(0.0, 0.0, 0.0, 0.5, &tr, 1.0).unwrap();
        assert_eq!(moving.constant_on_atom(0), None);
    }

    #[test]
    fn coefficient_presets_parse() {
        let tr = one_atom(1.0, 1.0, true);
        let cases = [
            ("zero", CoefficientPreset::Zero),
            ("const:0.5,-0.2", CoefficientPreset::Constant { theta0: 0.5, theta1: -0.2 }),
            ("linear-in-t:1,2,0,0.5", CoefficientPreset::LinearInT { a0: 1.0, b0: 2.0, a1: 0.0, b1: 0.5 }),
            ("per-atom:0.3;0.7", CoefficientPreset::PerAtom { theta0: 0.3, table: vec![0.7] }),
        ];
        for (text, expected) in cases {
            let parsed: CoefficientPreset = text.parse().unwrap();
            assert_eq!(parsed, expected);
            assert!(parsed.build(&tr, 1.0).is_ok());
        }
        for bad in ["const:1", "const:a,b", "linear-in-t:1,2", "per-atom:1", "sigmoid:1", "zero:1"] {
            assert!(bad.parse::<CoefficientPreset>().is_err(), "{bad}");
        }
        let wrong_table: CoefficientPreset = "per-atom:0;1,2".parse().unwrap();
        assert!(matches!(wrong_table.build(&tr, 1.0), Err(DensityError::NotAdmissible(_))));
    }

    #[test]
    fn zero_coefficients_give_unit_density() {
        let tr = one_atom(0.5, 3.0, true);
        let theta = GirsanovCoefficients::zero(&tr, 1.0).unwrap();
        for i in 0..20 {
            let p = simulate_path(&tr, 1.0, 10, RngStream::with_index(1, i)).unwrap();
            let d = stochastic_exponential(&p, &theta).unwrap();
            assert!(d.grid_values.iter().all(|&v| v == 1.0));
            assert!(d.jump_post.iter().all(|&v| v == 1.0));
            assert_eq!(d.tau0, None);
        }
    }

    #[test]
    fn killing_jump_sets_tau0() {
        // θ0 = 0, θ1 ≡ -1 on (x = 1, λ = 1): D_t = e^t before the first jump, 0 after.
        let tr = one_atom(1.0, 1.0, false);
        let theta = GirsanovCoefficients::constant(0.0, -1.0, &tr, 2.0).unwrap();
        let p = hand_path(vec![0.0, 0.5, 1.0, 1.5, 2.0], vec![0.0; 5], vec![(1.2, 1.0, 0), (1.7, 1.0, 0)]);
        let d = stochastic_exponential(&p, &theta).unwrap();
        assert_eq!(d.tau0, Some(1.2));
        for (k, t) in [0.0, 0.5, 1.0].iter().enumerate() {
            assert!((d.grid_values[k] - f64::exp(*t)).abs() < 1e-12);
        }
        assert_eq!(&d.grid_values[3..], &[0.0, 0.0]);
        assert!((d.jump_pre[0] - 1.2f64.exp()).abs() < 1e-12);
        assert_eq!(d.jump_post, vec![0.0, 0.0]);
        // Frozen at τ0 with the compensator integrated up to the jump.
        assert!((d.log_parts[3].jump_compensator - 1.2).abs() < 1e-12);
        assert_eq!(d.log_parts[3], d.log_parts[4]);
    }

    #[test]
    fn positive_barrier_keeps_density_alive() {
        let tr = LevyTriplet::new(
            0.0,
            true,
            vec![JumpAtom { size: -0.5, rate: 2.0 }, JumpAtom { size: 1.0, rate: 1.0 }],
        )
        .unwrap();
        let theta = GirsanovCoefficients::per_atom(0.3, vec![-0.999, 2.0], &tr, 1.0).unwrap();
        for i in 0..200 {
            let p = simulate_path(&tr, 1.0, 16, RngStream::with_index(2, i)).unwrap();
            let d = stochastic_exponential(&p, &theta).unwrap();
            assert_eq!(d.tau0, None);
            assert!(d.grid_values.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn log_parts_add_up() {
        let tr = LevyTriplet::new(
            0.1,
            true,
            vec![JumpAtom { size: -0.5, rate: 1.0 }, JumpAtom { size: 1.5, rate: 0.5 }],
        )
        .unwrap();
        let theta = GirsanovCoefficients::linear_in_t(0.2, -0.4, 0.3, 0.5, &tr, 1.0).unwrap();
        for i in 0..100 {
            let p = simulate_path(&tr, 1.0, 32, RngStream::with_index(3, i)).unwrap();
            let d = stochastic_exponential(&p, &theta).unwrap();
            for (v, parts) in d.grid_values.iter().zip(&d.log_parts) {
                assert!((v.ln() - parts.total()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn horizon_longer_than_coefficients_is_rejected() {
        let tr = LevyTriplet::brownian();
        let theta = GirsanovCoefficients::zero(&tr, 1.0).unwrap();
        let p = simulate_path(&tr, 2.0, 4, RngStream::new(0)).unwrap();
        assert_eq!(
            stochastic_exponential(&p, &theta),
            Err(DensityError::HorizonMismatch { path: 2.0, coefficients: 1.0 })
        );
    }

    #[test]
    fn quadratic_variation_of_identical_densities_is_zero() {
        let tr = one_atom(1.0, 2.0, true);
        let theta = GirsanovCoefficients::constant(0.4, 0.3, &tr, 1.0).unwrap();
        let p = simulate_path(&tr, 1.0, 20, RngStream::new(4)).unwrap();
        let d = stochastic_exponential(&p, &theta).unwrap();
        assert_eq!(quadratic_variation_diff(&d, &d, &theta, &theta, &p).unwrap(), 0.0);
    }

    #[test]
    fn jump_only_quadratic_variation_is_one_term() {
        let tr = one_atom(1.0, 1.0, false);
        let a = GirsanovCoefficients::constant(0.0, 0.5, &tr, 1.0).unwrap();
        let b = GirsanovCoefficients::constant(0.0, -0.25, &tr, 1.0).unwrap();
        let p = hand_path(vec![0.0, 0.5, 1.0], vec![0.0; 3], vec![(0.3, 1.0, 0)]);
        let (da, db) = (stochastic_exponential(&p, &a).unwrap(), stochastic_exponential(&p, &b).unwrap());
        let pre_a = (-0.5f64 * 0.3).exp();
        let pre_b = (0.25f64 * 0.3).exp();
        let expected = (pre_a * 0.5 - pre_b * -0.25).powi(2);
        let qv = quadratic_variation_diff(&da, &db, &a, &b, &p).unwrap();
        assert!((qv - expected).abs() < 1e-14, "{qv} vs {expected}");
    }

    #[test]
    fn mismatched_paths_are_rejected() {
        let tr = LevyTriplet::brownian();
        let theta = GirsanovCoefficients::constant(0.5, 0.0, &tr, 1.0).unwrap();
        let p1 = simulate_path(&tr, 1.0, 8, RngStream::new(5)).unwrap();
        let p2 = simulate_path(&tr, 1.0, 8, RngStream::new(6)).unwrap();
        let d1 = stochastic_exponential(&p1, &theta).unwrap();
        let d2 = stochastic_exponential(&p2, &theta).unwrap();
        assert_eq!(
            quadratic_variation_diff(&d1, &d2, &theta, &theta, &p1),
            Err(DensityError::MismatchedPaths)
        );
        assert_eq!(
            reweighted_expectation(std::slice::from_ref(&p1), &[d1.clone(), d2], |_| 1.0),
            Err(DensityError::LengthMismatch(1, 2))
        );
        assert_eq!(reweighted_expectation(&[p2], &[d1], |_| 1.0), Err(DensityError::MismatchedPaths));
    }

    #[test]
    fn uniqueness_proxy() {
        let tr = LevyTriplet::brownian();
        let a = GirsanovCoefficients::constant(0.7, 0.0, &tr, 1.0).unwrap();
        // Same θ0, different (irrelevant) θ1: same density on a Brownian model.
        let b = GirsanovCoefficients::constant(0.7, 0.9, &tr, 1.0).unwrap();
        let c = GirsanovCoefficients::constant(0.2, 0.0, &tr, 1.0).unwrap();
        let p = simulate_path(&tr, 1.0, 50, RngStream::new(8)).unwrap();
        let (da, db) = (stochastic_exponential(&p, &a).unwrap(), stochastic_exponential(&p, &b).unwrap());
        assert_eq!(da, db);
        assert_eq!(brownian_discrepancy(&da, &a, &b, &p).unwrap(), 0.0);
        assert!(brownian_discrepancy(&da, &a, &c, &p).unwrap() > 0.0);
    }

    #[test]
    fn small_batches_are_rejected() {
        let tr = LevyTriplet::brownian();
        let theta = GirsanovCoefficients::zero(&tr, 1.0).unwrap();
        assert_eq!(
            martingale_check(&tr, &theta, 1.0, 10, 4, RngStream::new(0)),
            Err(DensityError::TooFewPaths(10))
        );
    }

    #[test]
    fn compensator_check_requires_constant_coefficient() {
        let tr = one_atom(1.0, 1.0, false);
        let theta = GirsanovCoefficients::linear_in_t(0.0, 0.0, 0.0, 0.5, &tr, 1.0).unwrap();
        assert_eq!(
            compensator_check(&tr, &theta, 0, 100, 1, RngStream::new(0)),
            Err(DensityError::NonConstantJumpCoefficient(0))
        );
        assert!(matches!(
            compensator_check(&tr, &theta, 3, 100, 1, RngStream::new(0)),
            Err(DensityError::Levy(LevyError::UnknownAtom { .. }))
        ));
    }

    #[test]
    fn density_csv_marks_killed_times() {
        let tr = one_atom(1.0, 1.0, false);
        let theta = GirsanovCoefficients::constant(0.0, -1.0, &tr, 1.0).unwrap();
        let p = hand_path(vec![0.0, 0.5, 1.0], vec![0.0; 3], vec![(0.7, 1.0, 0)]);
        let d = stochastic_exponential(&p, &theta).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,D,killed");
        assert_eq!(lines.len(), 5);
        assert!(lines[3].starts_with("0.7,0,1"));
        assert!(lines[4].ends_with(",0,1"));
    }
}
