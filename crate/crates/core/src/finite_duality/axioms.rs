use std::fmt;

use rand::Rng;

use super::{sample_position, FiniteSpace, Position, RiskEvaluator};
use crate::rng::RngStream;

/// Absolute slack granted to every axiom check.
pub const AXIOM_TOL: f64 = 1e-9;
const PAYOFF_SCALE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axiom {
    Monotonicity,
    TranslationInvariance,
    Convexity,
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axiom::Monotonicity => "monotonicity",
            Axiom::TranslationInvariance => "translation_invariance",
            Axiom::Convexity => "convexity",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub axiom: Axiom,
    pub trial: usize,
    /// How far the inequality (or equality) missed, beyond the tolerance.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxiomReport {
    pub trials: usize,
    pub violations: Vec<Violation>,
}

impl AxiomReport {
    pub fn count(&self, axiom: Axiom) -> usize {
        self.violations.iter().filter(|v| v.axiom == axiom).count()
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Randomized check of the monetary and convexity axioms:
///
/// - `X ≤ Y ⇒ ρ(X) ≥ ρ(Y)`
/// - `ρ(X + a) = ρ(X) - a`
/// - `ρ(λX + (1-λ)Y) ≤ λρ(X) + (1-λ)ρ(Y)`
///
/// each at absolute tolerance [`AXIOM_TOL`], `trials` times per axiom.
pub fn check_axioms(space: &FiniteSpace, rho: &dyn RiskEvaluator, trials: usize, seed: u64) -> AxiomReport {
    let n = space.len();
    let mut rng = RngStream::new(seed).rng();
    let mut violations = Vec::new();
    let mut record = |axiom, trial, excess: f64| {
        if excess > AXIOM_TOL {
            violations.push(Violation { axiom, trial, excess });
        }
    };
    for trial in 0..trials.max(1) {
        let x = sample_position(n, PAYOFF_SCALE, &mut rng);
        let bump: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=2.0)).collect();
        let y = Position(x.payoffs().iter().zip(&bump).map(|(a, b)| a + b).collect());
        record(Axiom::Monotonicity, trial, rho.risk(&y) - rho.risk(&x));

        let a: f64 = rng.gen_range(-PAYOFF_SCALE..=PAYOFF_SCALE);
        let shifted = rho.risk(&x.shifted(a));
        record(Axiom::TranslationInvariance, trial, (shifted - (rho.risk(&x) - a)).abs());

        let other = sample_position(n, PAYOFF_SCALE, &mut rng);
        let lambda: f64 = rng.gen_range(0.0..=1.0);
        let mixed = rho.risk(&x.mix(&other, lambda));
        record(
            Axiom::Convexity,
            trial,
            mixed - (lambda * rho.risk(&x) + (1.0 - lambda) * rho.risk(&other)),
        );
    }
    AxiomReport { trials: trials.max(1), violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finite_duality::{EntropicRisk, WorstCaseRisk};

    #[test]
    fn entropic_and_worst_case_are_clean() {
        let s = FiniteSpace::new(
            (0..4).map(|i| format!("a{i}")).collect(),
            vec![0.1, 0.2, 0.3, 0.4],
        )
        .unwrap();
        for seed in [1, 2, 3] {
            assert!(check_axioms(&s, &EntropicRisk { space: s.clone(), gamma: 1.3 }, 300, seed).is_clean());
            assert!(check_axioms(&s, &WorstCaseRisk { space: s.clone() }, 300, seed).is_clean());
        }
    }

    #[test]
    fn sign_flipped_expectation_violates_monotonicity() {
        let s = FiniteSpace::uniform(3).unwrap();
        let sp = s.clone();
        let broken = move |x: &Position| sp.expectation(x);
        let report = check_axioms(&s, &broken, 200, 9);
        assert!(report.count(Axiom::Monotonicity) > 150);
        assert!(report.count(Axiom::TranslationInvariance) > 150);
        assert_eq!(report.count(Axiom::Convexity), 0);
    }

    #[test]
    fn same_seed_same_report() {
        let s = FiniteSpace::uniform(2).unwrap();
        let f = |x: &Position| -> f64 { x.payoffs()[0].powi(2) };
        assert_eq!(check_axioms(&s, &f, 50, 4), check_axioms(&s, &f, 50, 4));
    }
}
