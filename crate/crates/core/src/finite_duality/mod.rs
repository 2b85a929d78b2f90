//! Convex risk measures on explicit finite probability spaces.
//!
//! A finite space `Ω = {ω_1, …, ω_n}` with reference measure `P` lets every
//! object of the static theory be computed directly:
//!
//! ```text
//! ρ(X)   = sup_Q { E_Q[-X] - ψ(Q) }            risk induced by a penalty ψ
//! ψ*(Q)  = sup_X { E_Q[-X] - ρ(X) }            minimal penalty (biduality)
//! Ψ*(U)  = sup_Z { E_P[Z U] - Ψ(Z) }           conjugate over densities Z = dQ/dP
//! Ψ**(Z) = sup_U { E_P[Z U] - Ψ*(U) }          biconjugate; Ψ** = Ψ iff Ψ is convex lsc
//! ```
//!
//! Suprema over measures run on a barycentric grid of the simplex followed by
//! a Nelder–Mead polish from the best grid point. Suprema over positions run on
//! dyadic hypercube grids.

mod axioms;
mod duality;
mod penalty;

pub use axioms::{check_axioms, Axiom, AxiomReport, Violation};
pub use duality::{
    fenchel_biconjugate, minimal_penalty, minimal_penalty_on_cube, risk_from_penalty,
    BiconjugateGrid, MinimalPenalty, PositionGrid,
};
pub use penalty::{
    EntropicRisk, FinitePenalty, FnPenalty, PenaltyPreset, PerturbedPenalty, RiskEvaluator,
    WorstCaseRisk,
};

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use thiserror::Error;

use crate::rng::RngStream;

const WEIGHT_TOL: f64 = 1e-12;
const DENSITY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DualityError {
    #[error("finite space needs at least one atom")]
    EmptySpace,
    #[error("atom labels must be unique, `{0}` repeats")]
    DuplicateAtom(String),
    #[error("reference weights invalid: {0}")]
    InvalidWeights(String),
    #[error("density invalid: {0}")]
    InvalidDensity(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("position entry {index} is not finite")]
    NonFinitePosition { index: usize },
    #[error("grid resolution must be at least 2, got {0}")]
    GridTooCoarse(u32),
    #[error("penalty is +inf at every grid point")]
    PenaltyInfiniteEverywhere,
    #[error("supremum not converged: successive refinements {previous} and {current} differ by more than {tol}")]
    NonConvergence { previous: f64, current: f64, tol: f64 },
    #[error("outer supremum attained on the boundary of the dual grid (bound {bound}); enlarge the grid")]
    GridBoundary { bound: f64 },
    #[error("unknown penalty preset `{0}`")]
    UnknownPreset(String),
}

/// `(Ω, P)` with labelled atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSpace {
    atoms: Vec<String>,
    weights: Vec<f64>,
}

impl FiniteSpace {
    pub fn new(atoms: Vec<String>, weights: Vec<f64>) -> Result<Self, DualityError> {
        if atoms.is_empty() {
            return Err(DualityError::EmptySpace);
        }
        if atoms.len() != weights.len() {
            return Err(DualityError::DimensionMismatch { expected: atoms.len(), got: weights.len() });
        }
        for (i, a) in atoms.iter().enumerate() {
            if atoms[..i].contains(a) {
                return Err(DualityError::DuplicateAtom(a.clone()));
            }
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(DualityError::InvalidWeights(format!("weight {w} is not a probability")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(DualityError::InvalidWeights(format!("weights sum to {total}")));
        }
        Ok(Self { atoms, weights })
    }

    /// Uniform space with atoms labelled `w0, w1, …`.
    pub fn uniform(n: usize) -> Result<Self, DualityError> {
        if n == 0 {
            return Err(DualityError::EmptySpace);
        }
        let atoms = (0..n).map(|i| format!("w{i}")).collect();
        Self::new(atoms, vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[String] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_null(&self, i: usize) -> bool {
        self.weights[i] == 0.0
    }

    /// `E_P[X]`.
    pub fn expectation(&self, x: &Position) -> f64 {
        self.weights.iter().zip(x.payoffs()).map(|(p, v)| p * v).sum()
    }

    fn check_dim(&self, got: usize) -> Result<(), DualityError> {
        if got != self.len() {
            return Err(DualityError::DimensionMismatch { expected: self.len(), got });
        }
        Ok(())
    }
}

/// Density `Z = dQ/dP` of an absolutely continuous measure.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityVector {
    values: Vec<f64>,
}

impl DensityVector {
    pub fn new(space: &FiniteSpace, values: Vec<f64>) -> Result<Self, DualityError> {
        space.check_dim(values.len())?;
        for (i, &z) in values.iter().enumerate() {
            if !z.is_finite() || z < 0.0 {
                return Err(DualityError::InvalidDensity(format!("value {z} at atom {i}")));
            }
            if space.is_null(i) && z > 0.0 {
                return Err(DualityError::InvalidDensity(format!(
                    "positive density on null atom `{}` (Q not absolutely continuous)",
                    space.atoms[i]
                )));
            }
        }
        let mass: f64 = values.iter().zip(&space.weights).map(|(z, p)| z * p).sum();
        if (mass - 1.0).abs() > DENSITY_TOL {
            return Err(DualityError::InvalidDensity(format!("E_P[Z] = {mass}")));
        }
        Ok(Self { values })
    }

    /// Density of the measure with atom probabilities `q`.
    pub fn from_measure(space: &FiniteSpace, q: &[f64]) -> Result<Self, DualityError> {
        space.check_dim(q.len())?;
        let mut values = Vec::with_capacity(q.len());
        for (i, (&qi, &pi)) in q.iter().zip(&space.weights).enumerate() {
            if !qi.is_finite() || qi < 0.0 {
                return Err(DualityError::InvalidDensity(format!("probability {qi} at atom {i}")));
            }
            if pi == 0.0 {
                if qi > 0.0 {
                    return Err(DualityError::InvalidDensity(format!(
                        "mass {qi} on null atom `{}` (Q not absolutely continuous)",
                        space.atoms[i]
                    )));
                }
                values.push(0.0);
            } else {
                values.push(qi / pi);
            }
        }
        Self::new(space, values)
    }

    /// `Z ≡ 1`, i.e. `Q = P`. Null atoms get zero.
    pub fn reference(space: &FiniteSpace) -> Self {
        let values = space.weights.iter().map(|&p| if p > 0.0 { 1.0 } else { 0.0 }).collect();
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Atom probabilities `Q({ω_i}) = Z_i P({ω_i})`.
    pub fn measure(&self, space: &FiniteSpace) -> Vec<f64> {
        self.values.iter().zip(&space.weights).map(|(z, p)| z * p).collect()
    }

    /// `E_Q[X] = E_P[Z X]`.
    pub fn expectation(&self, space: &FiniteSpace, x: &Position) -> f64 {
        self.values
            .iter()
            .zip(&space.weights)
            .zip(x.payoffs())
            .map(|((z, p), v)| z * p * v)
            .sum()
    }
}

/// A bounded position `X`, one payoff per atom.
#[derive(Debug, Clone, PartialEq)]
pub struct Position(Vec<f64>);

impl Position {
    pub fn new(payoffs: Vec<f64>) -> Result<Self, DualityError> {
        if let Some(index) = payoffs.iter().position(|v| !v.is_finite()) {
            return Err(DualityError::NonFinitePosition { index });
        }
        Ok(Self(payoffs))
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self(vec![c; n])
    }

    pub fn payoffs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn shifted(&self, a: f64) -> Self {
        Self(self.0.iter().map(|v| v + a).collect())
    }

    /// `λ X + (1 - λ) Y`.
    pub fn mix(&self, other: &Position, lambda: f64) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect())
    }
}

/// Total variation distance `sup_A |Q¹(A) - Q²(A)| = ½ E_P|Z¹ - Z²|`.
pub fn total_variation_distance(
    q1: &DensityVector,
    q2: &DensityVector,
    space: &FiniteSpace,
) -> Result<f64, DualityError> {
    space.check_dim(q1.len())?;
    space.check_dim(q2.len())?;
    Ok(0.5 * l1_distance(q1, q2, space))
}

/// `‖Z¹ - Z²‖_{L¹(P)}`.
pub fn l1_distance(q1: &DensityVector, q2: &DensityVector, space: &FiniteSpace) -> f64 {
    q1.values
        .iter()
        .zip(&q2.values)
        .zip(&space.weights)
        .map(|((a, b), p)| p * (a - b).abs())
        .sum()
}

/// Draws `count` densities with full support on the non-null atoms
/// (flat Dirichlet on the support), reproducibly from `seed`.
pub fn sample_interior_densities(space: &FiniteSpace, count: usize, seed: u64) -> Vec<DensityVector> {
    let mut rng = RngStream::new(seed).rng();
    (0..count)
        .map(|_| {
            let raw: Vec<f64> = (0..space.len())
                .map(|i| if space.is_null(i) { 0.0 } else { Exp1.sample(&mut rng) })
                .collect();
            let total: f64 = raw.iter().sum();
            let q: Vec<f64> = raw.iter().map(|r| r / total).collect();
            DensityVector::from_measure(space, &q).expect("normalized draw")
        })
        .collect()
}

/// Random position with payoffs uniform on `[-scale, scale]`.
pub fn sample_position<R: Rng>(n: usize, scale: f64, rng: &mut R) -> Position {
    Position((0..n).map(|_| rng.gen_range(-scale..=scale)).collect())
}
