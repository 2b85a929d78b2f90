//! Run configuration: the JSON schema and its validation into library objects.
//!
//! A config is one JSON object. The common keys are `experiment`, `seed`,
//! `paths`, `steps`, `horizon` and `output`; everything else belongs to the
//! experiment kind and is rejected when unknown. See the README for the
//! per-kind keys and defaults.

use std::sync::Arc;

use serde::Deserialize;
use serde_json::Value;

use levypen::density::{CoefficientPreset, GirsanovCoefficients};
use levypen::finite_duality::{FiniteSpace, PenaltyPreset};
use levypen::levy_model::{JumpAtom, LevyTriplet};
use levypen::penalty_risk::{DeltaWeight, ParameterRange, PathPosition, PenaltySpec, SearchFamily};

/// A rejected config; always maps to exit code 2.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(message: impl std::fmt::Display) -> ConfigError {
    ConfigError(message.to_string())
}

const COMMON_KEYS: [&str; 5] = ["seed", "paths", "steps", "horizon", "output"];

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Common {
    seed: Option<u64>,
    paths: Option<usize>,
    steps: Option<usize>,
    horizon: Option<f64>,
    output: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Preset(String),
    Inline {
        #[serde(default)]
        drift: f64,
        #[serde(default = "yes")]
        brownian: bool,
        #[serde(default)]
        atoms: Vec<AtomConfig>,
    },
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    pub size: f64,
    pub rate: f64,
}

pub struct ModelPreset {
    pub name: &'static str,
    pub description: &'static str,
    drift: f64,
    brownian: bool,
    /// `(size, rate)` per jump atom.
    atoms: &'static [(f64, f64)],
}

pub const MODEL_PRESETS: [ModelPreset; 3] = [
    ModelPreset {
        name: "brownian",
        description: "standard Brownian motion, no jumps",
        drift: 0.0,
        brownian: true,
        atoms: &[],
    },
    ModelPreset {
        name: "two_atom",
        description: "Brownian motion plus jumps of size -0.5 (rate 1) and 1 (rate 0.5)",
        drift: 0.0,
        brownian: true,
        atoms: &[(-0.5, 1.0), (1.0, 0.5)],
    },
    ModelPreset {
        name: "jump_only",
        description: "pure Poisson process with unit jumps at rate 2",
        drift: 0.0,
        brownian: false,
        atoms: &[(1.0, 2.0)],
    },
];

impl ModelRef {
    pub fn build(&self) -> Result<LevyTriplet, ConfigError> {
        let (drift, brownian, atoms): (f64, bool, Vec<JumpAtom>) = match self {
            ModelRef::Preset(name) => {
                let m = MODEL_PRESETS
                    .iter()
                    .find(|m| m.name == name)
                    .ok_or_else(|| bad(format!("unknown model preset `{name}`")))?;
                (m.drift, m.brownian, m.atoms.iter().map(|&(size, rate)| JumpAtom { size, rate }).collect())
            }
            ModelRef::Inline { drift, brownian, atoms } => {
                (*drift, *brownian, atoms.iter().map(|a| JumpAtom { size: a.size, rate: a.rate }).collect())
            }
        };
        LevyTriplet::new(drift, brownian, atoms).map_err(|e| bad(format!("model: {e}")))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SpecRef {
    Preset(String),
    Custom { h0: Vec<(f64, f64)>, h1: Vec<(f64, f64)>, delta: DeltaConfig },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DeltaConfig {
    Constant(f64),
    PerAtom(Vec<f64>),
}

impl SpecRef {
    pub fn build(&self, triplet: &LevyTriplet) -> Result<PenaltySpec, ConfigError> {
        let spec = match self {
            SpecRef::Preset(name) => PenaltySpec::preset(name),
            SpecRef::Custom { h0, h1, delta } => {
                let delta = match delta {
                    DeltaConfig::Constant(c) => DeltaWeight::Constant(*c),
                    DeltaConfig::PerAtom(t) => DeltaWeight::PerAtom(t.clone()),
                };
                PenaltySpec::custom(h0.clone(), h1.clone(), delta)
            }
        }
        .map_err(|e| bad(format!("spec: {e}")))?;
        spec.check_atoms(triplet).map_err(|e| bad(format!("spec: {e}")))?;
        Ok(spec)
    }
}

fn coefficients(text: &str, triplet: &LevyTriplet, horizon: f64) -> Result<GirsanovCoefficients, ConfigError> {
    let preset: CoefficientPreset = text.parse().map_err(bad)?;
    preset.build(triplet, horizon).map_err(|e| bad(format!("coefficients `{text}`: {e}")))
}

/// A search axis: either a fixed value or `[lo, hi, points]`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum AxisConfig {
    Fixed(f64),
    Range(f64, f64, usize),
}

impl AxisConfig {
    fn build(self) -> Result<ParameterRange, ConfigError> {
        match self {
            AxisConfig::Fixed(v) if v.is_finite() => Ok(ParameterRange::fixed(v)),
            AxisConfig::Fixed(v) => Err(bad(format!("axis value {v} is not finite"))),
            AxisConfig::Range(lo, hi, n) => ParameterRange::new(lo, hi, n).map_err(|e| bad(format!("axis: {e}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub theta0: AxisConfig,
    pub theta1: AxisConfig,
}

impl FamilyConfig {
    fn build(self) -> Result<SearchFamily, ConfigError> {
        SearchFamily::new(self.theta0.build()?, self.theta1.build()?).map_err(|e| bad(format!("family: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositionKind {
    Constant,
    TerminalBrownian,
    TerminalLevel,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionConfig {
    pub kind: PositionKind,
    pub scale: f64,
    pub clip: f64,
}

fn position(kind: PositionKind, scale: f64, clip: f64) -> Result<PathPosition, ConfigError> {
    match kind {
        PositionKind::Constant => PathPosition::constant(scale, clip),
        PositionKind::TerminalBrownian => PathPosition::terminal_brownian(scale, clip),
        PositionKind::TerminalLevel => PathPosition::terminal_level(scale, clip),
    }
    .map_err(|e| bad(format!("position: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FiniteOperation {
    #[default]
    MinimalPenalty,
    Biconjugate,
}

/// `θⁿ = base + (theta0, theta1) / n`; both shifts 0 gives the constant sequence.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftConfig {
    #[serde(default)]
    pub theta0: f64,
    #[serde(default)]
    pub theta1: f64,
}

fn three() -> f64 {
    3.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case", deny_unknown_fields)]
enum Experiment {
    FiniteDuality {
        weights: Vec<f64>,
        penalty: String,
        #[serde(default)]
        operation: FiniteOperation,
        #[serde(default)]
        densities: Vec<Vec<f64>>,
        #[serde(default)]
        random_densities: usize,
        #[serde(default = "default_finite_tolerance")]
        tolerance: f64,
        #[serde(default = "default_bound")]
        bound: f64,
        #[serde(default = "default_levels")]
        levels: u32,
    },
    Martingale {
        model: ModelRef,
        theta: String,
        times: Option<Vec<f64>>,
        #[serde(default = "three")]
        k_se: f64,
    },
    Compensator {
        model: ModelRef,
        theta: String,
        atoms: Option<Vec<usize>>,
        #[serde(default = "three")]
        k_se: f64,
    },
    QvConvergence {
        model: ModelRef,
        base: String,
        #[serde(default)]
        shift: ShiftConfig,
        n_values: Vec<u32>,
        epsilon: f64,
        stop_level: Option<f64>,
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    Penalty {
        model: ModelRef,
        theta: String,
        spec: SpecRef,
        expected: Option<f64>,
        #[serde(default = "default_penalty_tolerance")]
        tolerance: f64,
        #[serde(default = "three")]
        k_se: f64,
    },
    Risk {
        model: ModelRef,
        spec: SpecRef,
        position: PositionConfig,
        family: FamilyConfig,
        budget: usize,
        expected: Option<f64>,
        expected_argmax: Option<(f64, f64)>,
        #[serde(default = "default_risk_tolerance")]
        tolerance: f64,
        #[serde(default = "default_argmax_tolerance")]
        argmax_tolerance: f64,
    },
    Convexity {
        model: ModelRef,
        spec: SpecRef,
        trials: usize,
        theta0_range: (f64, f64),
        theta1_range: (f64, f64),
        #[serde(default = "default_hold_fraction")]
        min_hold_fraction: f64,
    },
    Minimality {
        model: ModelRef,
        spec: SpecRef,
        family: FamilyConfig,
        measures: Vec<String>,
        positions: SamplerSpec,
        budgets: Vec<usize>,
        risk_budget: usize,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    pub kinds: Vec<PositionKind>,
    pub lo: f64,
    pub hi: f64,
    pub clip: f64,
}

impl SamplerSpec {
    fn check(&self) -> Result<(), ConfigError> {
        if self.kinds.is_empty() {
            return Err(bad("positions.kinds is empty"));
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(bad(format!("positions range [{}, {}] is empty", self.lo, self.hi)));
        }
        position(self.kinds[0], self.lo, self.clip).map(|_| ())
    }
}

fn default_finite_tolerance() -> f64 {
    1e-6
}
fn default_bound() -> f64 {
    8.0
}
fn default_levels() -> u32 {
    5
}
fn default_alpha() -> f64 {
    0.05
}
fn default_penalty_tolerance() -> f64 {
    1e-9
}
fn default_risk_tolerance() -> f64 {
    2e-3
}
fn default_argmax_tolerance() -> f64 {
    0.05
}
fn default_hold_fraction() -> f64 {
    0.96
}

/// Per-kind settings after validation.
pub enum Plan {
    FiniteDuality {
        space: FiniteSpace,
        penalty: PenaltyPreset,
        operation: FiniteOperation,
        densities: Vec<Vec<f64>>,
        random_densities: usize,
        tolerance: f64,
        bound: f64,
        levels: u32,
    },
    Martingale { triplet: LevyTriplet, theta: GirsanovCoefficients, times: Vec<f64>, k_se: f64 },
    Compensator { triplet: LevyTriplet, theta: GirsanovCoefficients, atoms: Vec<usize>, k_se: f64 },
    QvConvergence {
        triplet: LevyTriplet,
        base: GirsanovCoefficients,
        shift: ShiftConfig,
        n_values: Vec<u32>,
        epsilon: f64,
        stop_level: Option<f64>,
        alpha: f64,
    },
    Penalty {
        triplet: LevyTriplet,
        theta: GirsanovCoefficients,
        spec: PenaltySpec,
        expected: Option<f64>,
        tolerance: f64,
        k_se: f64,
    },
    Risk {
        triplet: LevyTriplet,
        spec: PenaltySpec,
        position: PathPosition,
        family: SearchFamily,
        budget: usize,
        expected: Option<f64>,
        expected_argmax: Option<(f64, f64)>,
        tolerance: f64,
        argmax_tolerance: f64,
    },
    Convexity {
        triplet: LevyTriplet,
        spec: PenaltySpec,
        trials: usize,
        theta0_range: (f64, f64),
        theta1_range: (f64, f64),
        min_hold_fraction: f64,
    },
    Minimality {
        triplet: LevyTriplet,
        spec: PenaltySpec,
        family: SearchFamily,
        measures: Vec<GirsanovCoefficients>,
        positions: SamplerSpec,
        budgets: Vec<usize>,
        risk_budget: usize,
    },
}

impl Plan {
    pub fn kind(&self) -> &'static str {
        match self {
            Plan::FiniteDuality { .. } => "finite-duality",
            Plan::Martingale { .. } => "martingale",
            Plan::Compensator { .. } => "compensator",
            Plan::QvConvergence { .. } => "qv-convergence",
            Plan::Penalty { .. } => "penalty",
            Plan::Risk { .. } => "risk",
            Plan::Convexity { .. } => "convexity",
            Plan::Minimality { .. } => "minimality",
        }
    }
}

/// A validated run: everything needed to execute without further checks.
pub struct RunConfig {
    pub seed: u64,
    pub n_paths: usize,
    pub steps: usize,
    pub horizon: f64,
    pub output: String,
    pub plan: Plan,
}

/// Command-line overrides applied before validation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
}

fn default_paths(kind: &str) -> usize {
    match kind {
        "martingale" | "compensator" | "penalty" | "risk" => 100_000,
        "finite-duality" => 0,
        _ => 10_000,
    }
}

fn default_steps(kind: &str) -> usize {
    match kind {
        "qv-convergence" => 100,
        "martingale" | "convexity" => 20,
        _ => 1,
    }
}

impl RunConfig {
    pub fn from_json(text: &str, default_output: &str, overrides: Overrides) -> Result<Self, ConfigError> {
        let value: Value = serde_json::from_str(text).map_err(|e| bad(format!("invalid JSON: {e}")))?;
        Self::from_value(value, default_output, overrides)
    }

    pub fn from_value(value: Value, default_output: &str, overrides: Overrides) -> Result<Self, ConfigError> {
        let Value::Object(mut map) = value else {
            return Err(bad("config must be a JSON object"));
        };
        let mut common = serde_json::Map::new();
        for key in COMMON_KEYS {
            if let Some(v) = map.remove(key) {
                common.insert(key.to_string(), v);
            }
        }
        let common: Common = serde_json::from_value(Value::Object(common)).map_err(bad)?;
        let experiment: Experiment = serde_json::from_value(Value::Object(map)).map_err(bad)?;

        let seed = overrides.seed.or(common.seed).ok_or_else(|| bad("`seed` is mandatory"))?;
        let horizon = common.horizon.unwrap_or(1.0);
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(bad(format!("horizon {horizon} must be positive")));
        }
        let steps = common.steps;
        if steps == Some(0) {
            return Err(bad("steps must be at least 1"));
        }
        let plan = build_plan(experiment, horizon)?;
        let kind = plan.kind();
        let n_paths = overrides.paths.or(common.paths).unwrap_or_else(|| default_paths(kind));
        if kind != "finite-duality" && n_paths < 100 {
            return Err(bad(format!("paths = {n_paths}; Monte Carlo experiments need at least 100")));
        }
        let output = common.output.unwrap_or_else(|| default_output.to_string());
        if output.is_empty() || output.contains(['/', '\\']) || output.starts_with('.') {
            return Err(bad(format!("output stem `{output}` must be a plain file name")));
        }
        Ok(Self { seed, n_paths, steps: steps.unwrap_or_else(|| default_steps(kind)), horizon, output, plan })
    }
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(bad(format!("{name} = {v} must be positive")))
    }
}

fn build_plan(experiment: Experiment, horizon: f64) -> Result<Plan, ConfigError> {
    Ok(match experiment {
        Experiment::FiniteDuality {
            weights,
            penalty,
            operation,
            densities,
            random_densities,
            tolerance,
            bound,
            levels,
        } => {
            let atoms = (0..weights.len()).map(|i| format!("w{i}")).collect();
            let space = FiniteSpace::new(atoms, weights).map_err(|e| bad(format!("space: {e}")))?;
            let penalty: PenaltyPreset = penalty.parse().map_err(|e| bad(format!("penalty: {e}")))?;
            penalty.validate(&space).map_err(|e| bad(format!("penalty: {e}")))?;
            for q in &densities {
                levypen::finite_duality::DensityVector::from_measure(&space, q)
                    .map_err(|e| bad(format!("density {q:?}: {e}")))?;
            }
            if densities.is_empty() && random_densities == 0 {
                return Err(bad("finite-duality needs `densities` or `random_densities`"));
            }
            positive("tolerance", tolerance)?;
            positive("bound", bound)?;
            if levels == 0 {
                return Err(bad("levels must be at least 1"));
            }
            Plan::FiniteDuality { space, penalty, operation, densities, random_densities, tolerance, bound, levels }
        }
        Experiment::Martingale { model, theta, times, k_se } => {
            let triplet = model.build()?;
            let times = times.unwrap_or_else(|| vec![horizon]);
            if times.is_empty() || times.iter().any(|&t| !(t > 0.0 && t <= horizon)) {
                return Err(bad(format!("times must lie in (0, {horizon}]")));
            }
            positive("k_se", k_se)?;
            let theta = coefficients(&theta, &triplet, horizon)?;
            Plan::Martingale { triplet, theta, times, k_se }
        }
        Experiment::Compensator { model, theta, atoms, k_se } => {
            let triplet = model.build()?;
            let atoms = atoms.unwrap_or_else(|| (0..triplet.atoms().len()).collect());
            if atoms.is_empty() {
                return Err(bad("compensator needs a model with jump atoms"));
            }
            if let Some(a) = atoms.iter().find(|&&a| a >= triplet.atoms().len()) {
                return Err(bad(format!("atom index {a} out of range")));
            }
            positive("k_se", k_se)?;
            let theta = coefficients(&theta, &triplet, horizon)?;
            Plan::Compensator { triplet, theta, atoms, k_se }
        }
        Experiment::QvConvergence { model, base, shift, n_values, epsilon, stop_level, alpha } => {
            let triplet = model.build()?;
            let base = coefficients(&base, &triplet, horizon)?;
            if !(shift.theta0.is_finite() && shift.theta1.is_finite()) {
                return Err(bad("shift must be finite"));
            }
            if !(alpha > 0.0 && alpha <= 1.0) {
                return Err(bad(format!("alpha = {alpha} must lie in (0, 1]")));
            }
            if let Some(k) = stop_level {
                positive("stop_level", k)?;
            }
            Plan::QvConvergence { triplet, base, shift, n_values, epsilon, stop_level, alpha }
        }
        Experiment::Penalty { model, theta, spec, expected, tolerance, k_se } => {
            let triplet = model.build()?;
            let spec = spec.build(&triplet)?;
            let theta = coefficients(&theta, &triplet, horizon)?;
            positive("tolerance", tolerance)?;
            positive("k_se", k_se)?;
            Plan::Penalty { triplet, theta, spec, expected, tolerance, k_se }
        }
        Experiment::Risk {
            model,
            spec,
            position: p,
            family,
            budget,
            expected,
            expected_argmax,
            tolerance,
            argmax_tolerance,
        } => {
            let triplet = model.build()?;
            let spec = spec.build(&triplet)?;
            let family = family.build()?;
            if budget < family.size() {
                return Err(bad(format!("budget {budget} is below the family grid size {}", family.size())));
            }
            positive("tolerance", tolerance)?;
            positive("argmax_tolerance", argmax_tolerance)?;
            Plan::Risk {
                position: position(p.kind, p.scale, p.clip)?,
                triplet,
                spec,
                family,
                budget,
                expected,
                expected_argmax,
                tolerance,
                argmax_tolerance,
            }
        }
        Experiment::Convexity { model, spec, trials, theta0_range, theta1_range, min_hold_fraction } => {
            let triplet = model.build()?;
            let spec = spec.build(&triplet)?;
            if trials == 0 {
                return Err(bad("trials must be at least 1"));
            }
            let ordered = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
            if !ordered(theta0_range) || !ordered(theta1_range) || theta1_range.0 < -1.0 {
                return Err(bad("theta ranges must be ordered and theta1 must stay at or above -1"));
            }
            if !(0.0..=1.0).contains(&min_hold_fraction) {
                return Err(bad("min_hold_fraction must lie in [0, 1]"));
            }
            Plan::Convexity { triplet, spec, trials, theta0_range, theta1_range, min_hold_fraction }
        }
        Experiment::Minimality { model, spec, family, measures, positions, budgets, risk_budget } => {
            let triplet = model.build()?;
            let spec = spec.build(&triplet)?;
            let family = family.build()?;
            if measures.is_empty() {
                return Err(bad("minimality needs at least one measure"));
            }
            let measures =
                measures.iter().map(|m| coefficients(m, &triplet, horizon)).collect::<Result<Vec<_>, _>>()?;
            positions.check()?;
            if budgets.is_empty() || budgets.windows(2).any(|w| w[0] >= w[1]) || budgets[0] < 2 {
                return Err(bad("budgets must be strictly increasing and at least 2"));
            }
            if risk_budget < family.size() {
                return Err(bad(format!("risk_budget {risk_budget} is below the family grid size {}", family.size())));
            }
            Plan::Minimality { triplet, spec, family, measures, positions, budgets, risk_budget }
        }
    })
}

/// `θⁿ = base + shift / n` as a coefficient on the base's model and horizon.
pub fn shifted(
    base: &GirsanovCoefficients,
    shift: ShiftConfig,
    n: u32,
    triplet: &LevyTriplet,
) -> Result<GirsanovCoefficients, levypen::density::DensityError> {
    let (b0, b1) = (base.clone(), base.clone());
    let (s0, s1) = (shift.theta0 / n as f64, shift.theta1 / n as f64);
    GirsanovCoefficients::new(
        Arc::new(move |t| b0.theta0(t) + s0),
        Arc::new(move |t, x| b1.theta1(t, x) + s1),
        triplet,
        base.horizon(),
        format!("{} + ({s0}, {s1})", base.label()),
    )
}

/// The sampled positions for a minimality budget: `kinds × b` evenly spaced scales.
pub fn sample_positions(spec: &SamplerSpec, budget: usize) -> Vec<PathPosition> {
    (0..budget)
        .flat_map(|k| {
            let a = spec.lo + (spec.hi - spec.lo) * k as f64 / (budget - 1) as f64;
            spec.kinds.iter().map(move |&kind| position(kind, a, spec.clip).expect("validated sampler"))
        })
        .collect()
}
