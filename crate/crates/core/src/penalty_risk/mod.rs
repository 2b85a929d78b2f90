//! Penalties built from convex functions of the Girsanov coefficients and the
//! risk measure they induce on Lévy functionals.
//!
//! For `Q` with coefficients `(θ0, θ1)` the penalty is
//!
//! ```text
//! ϑ(Q) = E_Q[ ∫_0^T h( h0(θ0(t)) + Σ_i δ(t, x_i) h1(θ1(t, x_i)) λ_i ) dt ]
//! ```
//!
//! with `h, h0, h1` convex, nonnegative and zero at 0. For deterministic
//! coefficients the integrand is deterministic, so `ϑ` is a one-dimensional
//! integral; the Monte Carlo route is kept as a cross-check.
//!
//! The entropic choice (`h = id`, `h0 = x²/2`, `h1 = (1+x)ln(1+x) - x`,
//! `δ ≡ 1`) makes `ϑ(Q)` the relative entropy `H(Q | P)`.

mod evidence;
mod risk;

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::density::{stochastic_exponential, DensityError, GirsanovCoefficients};
use crate::extended::Extended;
use crate::levy_model::{map_paths, JumpAtom, LevyError, LevyTriplet};
use crate::quadrature::{adaptive_simpson, DEFAULT_TOL};
use crate::rng::RngStream;
use crate::stats::Estimate;

pub use evidence::{convexity_evidence, minimality_evidence, ConvexityReport, MinimalityReport, MinimalityRow};
pub use risk::{
    risk_measure, Argmax, GridRecord, ParameterRange, PathPosition, RiskEngine, RiskProblem, RiskReport,
    SearchFamily, WeightedMeasure,
};

/// Random midpoint triples drawn per function when checking convexity.
const CONVEXITY_TRIALS: usize = 1000;
const CONVEXITY_SEED: u64 = 0x5eed_c0ff;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PenaltyError {
    #[error("{which}(0) = {value}, expected 0")]
    NotNormalized { which: &'static str, value: Extended },
    #[error("{which} is not convex: f({lambda}·{x} + (1-{lambda})·{y}) exceeds the chord")]
    NotConvex { which: &'static str, x: f64, y: f64, lambda: f64 },
    #[error("{which} takes a negative value {value} at {x}")]
    Negative { which: &'static str, x: f64, value: f64 },
    #[error("δ weights must be finite and nonnegative")]
    BadDelta,
    #[error("δ table has {got} entries for {expected} atoms")]
    DeltaMismatch { expected: usize, got: usize },
    #[error("unknown penalty spec preset {0:?} (expected entropic, quadratic or custom)")]
    UnknownPreset(String),
    #[error("bad table: {0}")]
    BadTable(String),
    #[error("clip bound must be positive and finite, got {0}")]
    BadClip(f64),
    #[error("bad search family: {0}")]
    BadFamily(String),
    #[error("optimizer budget {budget} is smaller than the family grid ({grid} points)")]
    BudgetTooSmall { budget: usize, grid: usize },
    #[error("λ must lie in [0, 1], got {0}")]
    BadLambda(f64),
    #[error("need at least 2 paths, got {0}")]
    TooFewPaths(usize),
    #[error("position sampler returned no positions for budget {0}")]
    EmptySampler(usize),
    #[error("budgets must be nonempty and strictly increasing")]
    BadBudgets,
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Levy(#[from] LevyError),
}

/// A convex function `R → [0, ∞]` with the interval used to spot-check it.
#[derive(Clone)]
pub struct ConvexFunction {
    name: String,
    f: Arc<dyn Fn(f64) -> Extended + Send + Sync>,
    check_domain: (f64, f64),
}

impl fmt::Debug for ConvexFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ConvexFunction({})", self.name)
    }
}

impl ConvexFunction {
    pub fn new<F>(name: impl Into<String>, check_domain: (f64, f64), f: F) -> Self
    where
        F: Fn(f64) -> Extended + Send + Sync + 'static,
    {
        Self { name: name.into(), f: Arc::new(f), check_domain }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: f64) -> Extended {
        (self.f)(x)
    }

    /// `x ↦ x` on `[0, ∞)`, `+∞` below 0.
    pub fn identity() -> Self {
        Self::new("id", (0.0, 10.0), |x| if x >= 0.0 { Extended::Finite(x) } else { Extended::PosInfinity })
    }

    /// `x ↦ x²/2`.
    pub fn half_square() -> Self {
        Self::new("x^2/2", (-5.0, 5.0), |x| Extended::Finite(0.5 * x * x))
    }

    /// `x ↦ (1+x)ln(1+x) - x` on `[-1, ∞)` (value 1 at -1), `+∞` below.
    pub fn entropic_jump() -> Self {
        Self::new("(1+x)ln(1+x)-x", (-1.0, 5.0), |x| {
            if x < -1.0 {
                Extended::PosInfinity
            } else if x == -1.0 {
                Extended::Finite(1.0)
            } else {
                Extended::Finite((1.0 + x) * x.ln_1p() - x)
            }
        })
    }

    /// `x ↦ k|x|`; a large `k` stands in for the indicator of `{0}`.
    pub fn abs_slope(k: f64) -> Self {
        Self::new(format!("{k}|x|"), (-5.0, 5.0), move |x| Extended::Finite(k * x.abs()))
    }

    /// Piecewise-linear interpolation of `points` (sorted by `x`, nondecreasing
    /// slopes), `+∞` outside the tabulated range.
    pub fn tabulated(points: Vec<(f64, f64)>) -> Result<Self, PenaltyError> {
        if points.len() < 2 {
            return Err(PenaltyError::BadTable("need at least two points".into()));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(PenaltyError::BadTable("non-finite entry".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(PenaltyError::BadTable("abscissae must be strictly increasing".into()));
        }
        let slopes: Vec<f64> = points.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
        if slopes.windows(2).any(|s| s[1] < s[0] - 1e-12) {
            return Err(PenaltyError::BadTable("slopes must be nondecreasing".into()));
        }
        let domain = (points[0].0, points[points.len() - 1].0);
        Ok(Self::new("tabulated", domain, move |x| {
            if x < points[0].0 || x > points[points.len() - 1].0 {
                return Extended::PosInfinity;
            }
            let i = points.partition_point(|p| p.0 <= x).clamp(1, points.len() - 1);
            let ((x0, y0), (x1, y1)) = (points[i - 1], points[i]);
            Extended::Finite(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
        }))
    }

    fn check(&self, which: &'static str, seed_offset: u64) -> Result<(), PenaltyError> {
        let zero = self.eval(0.0);
        if zero != Extended::ZERO {
            return Err(PenaltyError::NotNormalized { which, value: zero });
        }
        let (lo, hi) = self.check_domain;
        let mut rng = ChaCha8Rng::seed_from_u64(CONVEXITY_SEED + seed_offset);
        for _ in 0..CONVEXITY_TRIALS {
            let x = rng.gen_range(lo..=hi);
            let y = rng.gen_range(lo..=hi);
            let lambda: f64 = rng.gen();
            for (p, v) in [(x, self.eval(x)), (y, self.eval(y))] {
                if let Extended::Finite(v) = v {
                    if v < 0.0 {
                        return Err(PenaltyError::Negative { which, x: p, value: v });
                    }
                }
            }
            let chord = self.eval(x).scale(lambda) + self.eval(y).scale(1.0 - lambda);
            let mid = self.eval(lambda * x + (1.0 - lambda) * y);
            let ok = match (mid, chord) {
                (_, Extended::PosInfinity) => true,
                (Extended::PosInfinity, Extended::Finite(_)) => false,
                (Extended::Finite(m), Extended::Finite(c)) => m <= c + 1e-9 * (1.0 + c.abs()),
            };
            if !ok {
                return Err(PenaltyError::NotConvex { which, x, y, lambda });
            }
        }
        Ok(())
    }
}

/// Jump weights `δ(t, x_i)`, constant in time.
#[derive(Debug, Clone, PartialEq)]
pub enum DeltaWeight {
    Constant(f64),
    PerAtom(Vec<f64>),
}

impl DeltaWeight {
    fn weight(&self, atom: usize) -> f64 {
        match self {
            DeltaWeight::Constant(c) => *c,
            DeltaWeight::PerAtom(table) => table[atom],
        }
    }

    fn check_atoms(&self, atoms: usize) -> Result<(), PenaltyError> {
        match self {
            DeltaWeight::PerAtom(t) if t.len() != atoms => {
                Err(PenaltyError::DeltaMismatch { expected: atoms, got: t.len() })
            }
            _ => Ok(()),
        }
    }
}

/// `(h, h0, h1, δ)` defining the penalty.
#[derive(Debug, Clone)]
pub struct PenaltySpec {
    name: String,
    h: ConvexFunction,
    h0: ConvexFunction,
    h1: ConvexFunction,
    delta: DeltaWeight,
}

impl PenaltySpec {
    /// Checks `h(0) = h0(0) = h1(0) = 0`, nonnegativity and convexity on 1000
    /// seeded midpoint triples per function, and `δ ≥ 0`.
    pub fn new(
        name: impl Into<String>,
        h: ConvexFunction,
        h0: ConvexFunction,
        h1: ConvexFunction,
        delta: DeltaWeight,
    ) -> Result<Self, PenaltyError> {
        h.check("h", 0)?;
        h0.check("h0", 1)?;
        h1.check("h1", 2)?;
        let ok = match &delta {
            DeltaWeight::Constant(c) => c.is_finite() && *c >= 0.0,
            DeltaWeight::PerAtom(t) => t.iter().all(|c| c.is_finite() && *c >= 0.0),
        };
        if !ok {
            return Err(PenaltyError::BadDelta);
        }
        Ok(Self { name: name.into(), h, h0, h1, delta })
    }

    /// Relative entropy: `h = id`, `h0 = x²/2`, `h1 = (1+x)ln(1+x) - x`, `δ ≡ 1`.
    pub fn entropic() -> Self {
        Self::new(
            "entropic",
            ConvexFunction::identity(),
            ConvexFunction::half_square(),
            ConvexFunction::entropic_jump(),
            DeltaWeight::Constant(1.0),
        )
        .expect("entropic spec is valid")
    }

    /// `h = id`, `h0 = h1 = x²/2`, `δ ≡ 1`.
    pub fn quadratic() -> Self {
        Self::new(
            "quadratic",
            ConvexFunction::identity(),
            ConvexFunction::half_square(),
            ConvexFunction::half_square(),
            DeltaWeight::Constant(1.0),
        )
        .expect("quadratic spec is valid")
    }

    /// `h = id` with tabulated `h0` and `h1`.
    pub fn custom(
        h0: Vec<(f64, f64)>,
        h1: Vec<(f64, f64)>,
        delta: DeltaWeight,
    ) -> Result<Self, PenaltyError> {
        Self::new(
            "custom",
            ConvexFunction::identity(),
            ConvexFunction::tabulated(h0)?,
            ConvexFunction::tabulated(h1)?,
            delta,
        )
    }

    /// `"entropic"` or `"quadratic"`; `"custom"` needs tables and goes through [`PenaltySpec::custom`].
    pub fn preset(name: &str) -> Result<Self, PenaltyError> {
        match name {
            "entropic" => Ok(Self::entropic()),
            "quadratic" => Ok(Self::quadratic()),
            other => Err(PenaltyError::UnknownPreset(other.to_string())),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn delta(&self) -> &DeltaWeight {
        &self.delta
    }

    pub fn check_atoms(&self, triplet: &LevyTriplet) -> Result<(), PenaltyError> {
        self.delta.check_atoms(triplet.atoms().len())
    }

    /// `h(h0(θ0) + Σ_i δ_i h1(θ1_i) λ_i)` for coefficient values at one instant.
    pub fn integrand(&self, theta0: f64, theta1: impl Fn(usize) -> f64, atoms: &[JumpAtom]) -> Extended {
        let mut inner = self.h0.eval(theta0);
        for (i, a) in atoms.iter().enumerate() {
            if !inner.is_finite() {
                break;
            }
            inner = inner + self.h1.eval(theta1(i)).scale(self.delta.weight(i) * a.rate);
        }
        match inner {
            Extended::Finite(v) => self.h.eval(v),
            Extended::PosInfinity => Extended::PosInfinity,
        }
    }

    /// The integrand along deterministic coefficients.
    pub fn integrand_at(&self, theta: &GirsanovCoefficients, t: f64) -> Extended {
        let atoms = theta.atoms();
        self.integrand(theta.theta0(t), |i| theta.theta1(t, atoms[i].size), atoms)
    }
}

/// `∫_0^T` of the penalty integrand by adaptive Simpson; `+∞` when the
/// integrand is infinite somewhere or the quadrature does not settle.
pub fn penalty_quadrature(
    theta: &GirsanovCoefficients,
    spec: &PenaltySpec,
    horizon: f64,
) -> Result<Extended, PenaltyError> {
    spec.delta.check_atoms(theta.atoms().len())?;
    if horizon > theta.horizon() * (1.0 + 1e-12) {
        return Err(DensityError::HorizonMismatch { path: horizon, coefficients: theta.horizon() }.into());
    }
    let value = adaptive_simpson(
        |t| spec.integrand_at(theta, t).finite().unwrap_or(f64::INFINITY),
        0.0,
        horizon,
        DEFAULT_TOL,
    );
    Ok(value.map_or(Extended::PosInfinity, Extended::Finite))
}

/// Both routes to `ϑ(Q)` for deterministic coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyValue {
    pub quadrature: Extended,
    /// `E_P[D_T ∫_0^{T∧τ0} g dt]`; absent when the penalty is infinite.
    pub monte_carlo: Option<Estimate>,
}

/// `ϑ(Q)` by quadrature and by Monte Carlo over `n_paths` paths.
pub fn penalty_value(
    theta: &GirsanovCoefficients,
    spec: &PenaltySpec,
    triplet: &LevyTriplet,
    horizon: f64,
    steps: usize,
    n_paths: usize,
    rng: RngStream,
) -> Result<PenaltyValue, PenaltyError> {
    spec.check_atoms(triplet)?;
    if n_paths < 2 {
        return Err(PenaltyError::TooFewPaths(n_paths));
    }
    let quadrature = penalty_quadrature(theta, spec, horizon)?;
    let Extended::Finite(total) = quadrature else {
        return Ok(PenaltyValue { quadrature, monte_carlo: None });
    };
    // Coefficients vanish after τ0; since D_T = 0 whenever τ0 ≤ T the
    // truncated integral only matters on paths that carry no weight.
    let samples = map_paths(triplet, horizon, steps, n_paths, rng, |p| {
        stochastic_exponential(&p, theta).map(|d| d.terminal() * total)
    })?
    .into_iter()
    .collect::<Result<Vec<f64>, _>>()?;
    Ok(PenaltyValue { quadrature, monte_carlo: Some(Estimate::from_samples(&samples)) })
}
