use proptest::prelude::*;

use levypen::density::GirsanovCoefficients;
use levypen::finite_duality::{
    total_variation_distance, DensityVector, FinitePenalty, FiniteSpace, PenaltyPreset, Position,
};
use levypen::levy_model::{JumpAtom, LevyTriplet};
use levypen::penalty_risk::{penalty_quadrature, PenaltySpec};
use levypen::Extended;

fn measure(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

proptest! {
    #[test]
    fn total_variation_is_a_metric(
        raw in prop::collection::vec((0.01f64..1.0, 0.01f64..1.0, 0.01f64..1.0), 2..6)
    ) {
        let n = raw.len();
        let space = FiniteSpace::uniform(n).unwrap();
        let q: Vec<Vec<f64>> = (0..3)
            .map(|k| measure(&raw.iter().map(|t| [t.0, t.1, t.2][k]).collect::<Vec<_>>()))
            .collect();
        let z: Vec<DensityVector> = q.iter().map(|m| DensityVector::from_measure(&space, m).unwrap()).collect();
        let d = |a: usize, b: usize| total_variation_distance(&z[a], &z[b], &space).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d(0, 1)));
        prop_assert!((d(0, 1) - d(1, 0)).abs() < 1e-15);
        prop_assert!(d(0, 0).abs() < 1e-15);
        prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-12);
    }

    #[test]
    fn entropic_risk_is_cash_additive_and_bounded(
        payoffs in prop::collection::vec(-5.0f64..5.0, 2..6),
        shift in -3.0f64..3.0,
        gamma in 0.1f64..3.0,
    ) {
        let space = FiniteSpace::uniform(payoffs.len()).unwrap();
        let p = PenaltyPreset::Entropic { gamma };
        let x = Position::new(payoffs.clone()).unwrap();
        let r = p.closed_form_risk(&space, &x).unwrap();
        let r_shift = p.closed_form_risk(&space, &x.shifted(shift)).unwrap();
        prop_assert!((r_shift - (r - shift)).abs() < 1e-10);
        let lo = -payoffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let hi = -payoffs.iter().cloned().fold(f64::INFINITY, f64::min);
        let mean = -payoffs.iter().sum::<f64>() / payoffs.len() as f64;
        prop_assert!(r >= mean - 1e-12 && r >= lo - 1e-12 && r <= hi + 1e-12);
    }

    #[test]
    fn penalty_is_nonnegative(theta0 in -3.0f64..3.0, theta1 in -1.0f64..4.0, slope in -1.0f64..1.0) {
        let tr = LevyTriplet::new(0.0, true, vec![JumpAtom { size: 0.5, rate: 1.2 }]).unwrap();
        let theta1_end = (theta1 + slope).max(-1.0);
        let theta = GirsanovCoefficients::linear_in_t(theta0, slope, theta1, theta1_end - theta1, &tr, 1.0).unwrap();
        for spec in [PenaltySpec::entropic(), PenaltySpec::quadratic()] {
            let v = penalty_quadrature(&theta, &spec, 1.0).unwrap();
            prop_assert!(v >= Extended::ZERO);
        }
    }
}
