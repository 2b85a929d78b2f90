use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use super::{DensityVector, DualityError, FiniteSpace, Position};
use crate::extended::Extended;

/// A penalty `ψ` on probability measures over a finite space.
///
/// The primary hook works on atom probabilities `q` so that grid points which
/// put mass on a null atom (measures not absolutely continuous w.r.t. `P`)
/// can be scored too.
pub trait FinitePenalty: Send + Sync {
    fn evaluate_measure(&self, space: &FiniteSpace, q: &[f64]) -> Extended;

    fn evaluate(&self, space: &FiniteSpace, z: &DensityVector) -> Extended {
        self.evaluate_measure(space, &z.measure(space))
    }

    /// Optional description of the convex domain where the penalty is finite.
    fn domain_description(&self) -> Option<&str> {
        None
    }

    /// The induced risk measure in closed form, when one is known.
    fn closed_form_risk(&self, _space: &FiniteSpace, _x: &Position) -> Option<f64> {
        None
    }
}

fn charges_null_atom(space: &FiniteSpace, q: &[f64]) -> bool {
    q.iter().enumerate().any(|(i, &qi)| qi > 0.0 && space.is_null(i))
}

/// Bundled penalties.
#[derive(Debug, Clone, PartialEq)]
pub enum PenaltyPreset {
    /// `ψ ≡ 0` on every measure, absolutely continuous or not.
    Zero,
    /// `ψ = 0` on `Q ≪ P`, `+∞` otherwise.
    WorstCase,
    /// `ψ(Q) = H(Q|P) / γ`.
    Entropic { gamma: f64 },
    /// `ψ(Q) = E_Q[c]` on `Q ≪ P`.
    Linear { c: Vec<f64> },
}

impl PenaltyPreset {
    pub fn name(&self) -> String {
        match self {
            PenaltyPreset::Zero => "zero".into(),
            PenaltyPreset::WorstCase => "worst_case".into(),
            PenaltyPreset::Entropic { gamma } => format!("entropic:{gamma}"),
            PenaltyPreset::Linear { c } => {
                let cs: Vec<String> = c.iter().map(|v| v.to_string()).collect();
                format!("linear:{}", cs.join(","))
            }
        }
    }

    /// Checks the preset against a space (linear cost vectors must match its size).
    pub fn validate(&self, space: &FiniteSpace) -> Result<(), DualityError> {
        match self {
            PenaltyPreset::Linear { c } if c.len() != space.len() => {
                Err(DualityError::DimensionMismatch { expected: space.len(), got: c.len() })
            }
            _ => Ok(()),
        }
    }
}

impl FromStr for PenaltyPreset {
    type Err = DualityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || DualityError::UnknownPreset(s.to_string());
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        match (head, arg) {
            ("zero", None) => Ok(PenaltyPreset::Zero),
            ("worst_case", None) => Ok(PenaltyPreset::WorstCase),
            ("entropic", None) => Ok(PenaltyPreset::Entropic { gamma: 1.0 }),
            ("entropic", Some(g)) => {
                let gamma: f64 = g.parse().map_err(|_| unknown())?;
                if !(gamma.is_finite() && gamma > 0.0) {
                    return Err(unknown());
                }
                Ok(PenaltyPreset::Entropic { gamma })
            }
            ("linear", Some(cs)) => {
                let c = cs
                    .split(',')
                    .map(|v| v.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(unknown)?;
                Ok(PenaltyPreset::Linear { c })
            }
            _ => Err(unknown()),
        }
    }
}

impl fmt::Display for PenaltyPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FinitePenalty for PenaltyPreset {
    fn evaluate_measure(&self, space: &FiniteSpace, q: &[f64]) -> Extended {
        if !matches!(self, PenaltyPreset::Zero) && charges_null_atom(space, q) {
            return Extended::PosInfinity;
        }
        match self {
            PenaltyPreset::Zero | PenaltyPreset::WorstCase => Extended::ZERO,
            PenaltyPreset::Entropic { gamma } => {
                let h: f64 = q
                    .iter()
                    .zip(space.weights())
                    .filter(|(qi, _)| **qi > 0.0)
                    .map(|(qi, pi)| qi * (qi / pi).ln())
                    .sum();
                Extended::Finite(h / gamma)
            }
            PenaltyPreset::Linear { c } => Extended::Finite(q.iter().zip(c).map(|(qi, ci)| qi * ci).sum()),
        }
    }

    fn domain_description(&self) -> Option<&str> {
        match self {
            PenaltyPreset::Zero => Some("whole simplex"),
            _ => Some("measures absolutely continuous w.r.t. P"),
        }
    }

    fn closed_form_risk(&self, space: &FiniteSpace, x: &Position) -> Option<f64> {
        let support = || (0..space.len()).filter(|&i| !space.is_null(i));
        let xs = x.payoffs();
        Some(match self {
            PenaltyPreset::Zero => -xs.iter().copied().fold(f64::INFINITY, f64::min),
            PenaltyPreset::WorstCase => -support().map(|i| xs[i]).fold(f64::INFINITY, f64::min),
            PenaltyPreset::Entropic { gamma } => entropic_risk(space, x, *gamma),
            PenaltyPreset::Linear { c } => support().map(|i| -xs[i] - c[i]).fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// `(1/γ) ln E_P[e^{-γX}]`, via log-sum-exp over the support.
fn entropic_risk(space: &FiniteSpace, x: &Position, gamma: f64) -> f64 {
    let terms: Vec<(f64, f64)> = space
        .weights()
        .iter()
        .zip(x.payoffs())
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, v)| (*p, -gamma * v))
        .collect();
    let m = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = terms.iter().map(|(p, e)| p * (e - m).exp()).sum();
    (m + s.ln()) / gamma
}

type MeasureFn = Arc<dyn Fn(&FiniteSpace, &[f64]) -> Extended + Send + Sync>;

/// Penalty from a closure on atom probabilities.
#[derive(Clone)]
pub struct FnPenalty {
    f: MeasureFn,
    domain: Option<String>,
}

impl FnPenalty {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(&FiniteSpace, &[f64]) -> Extended + Send + Sync + 'static,
    {
        Self { f: Arc::new(f), domain: None }
    }

    pub fn with_domain(mut self, domain: impl Into<String>) -> Self {
        self.domain = Some(domain.into());
        self
    }
}

impl FinitePenalty for FnPenalty {
    fn evaluate_measure(&self, space: &FiniteSpace, q: &[f64]) -> Extended {
        (self.f)(space, q)
    }

    fn domain_description(&self) -> Option<&str> {
        self.domain.as_deref()
    }
}

/// `base + bump` on a finite set of measures, `base` elsewhere.
///
/// On a grid this stands in for a penalty raised on a dense set: it is no
/// longer lower semicontinuous at the raised points, so its biconjugate drops
/// back to `base` there.
pub struct PerturbedPenalty<P> {
    pub base: P,
    pub raised: Vec<Vec<f64>>,
    pub bump: f64,
    pub match_tol: f64,
}

impl<P: FinitePenalty> FinitePenalty for PerturbedPenalty<P> {
    fn evaluate_measure(&self, space: &FiniteSpace, q: &[f64]) -> Extended {
        let base = self.base.evaluate_measure(space, q);
        let hit = self
            .raised
            .iter()
            .any(|r| r.iter().zip(q).all(|(a, b)| (a - b).abs() <= self.match_tol));
        if hit {
            base + Extended::Finite(self.bump)
        } else {
            base
        }
    }
}

/// A monetary risk measure on positions of a fixed finite space.
pub trait RiskEvaluator: Sync {
    fn risk(&self, x: &Position) -> f64;
}

impl<F> RiskEvaluator for F
where
    F: Fn(&Position) -> f64 + Sync,
{
    fn risk(&self, x: &Position) -> f64 {
        self(x)
    }
}

/// `ρ(X) = (1/γ) ln E_P[e^{-γX}]`.
#[derive(Debug, Clone)]
pub struct EntropicRisk {
    pub space: FiniteSpace,
    pub gamma: f64,
}

impl RiskEvaluator for EntropicRisk {
    fn risk(&self, x: &Position) -> f64 {
        entropic_risk(&self.space, x, self.gamma)
    }
}

/// `ρ(X) = -ess inf X = sup_{Q ≪ P} E_Q[-X]`.
#[derive(Debug, Clone)]
pub struct WorstCaseRisk {
    pub space: FiniteSpace,
}

impl RiskEvaluator for WorstCaseRisk {
    fn risk(&self, x: &Position) -> f64 {
        PenaltyPreset::WorstCase.closed_form_risk(&self.space, x).expect("closed form")
    }
}
