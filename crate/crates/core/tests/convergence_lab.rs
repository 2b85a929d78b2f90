use levypen::convergence::{path_samples, run_convergence, stopped_variant, ConvergenceExperiment};
use levypen::density::GirsanovCoefficients;
use levypen::levy_model::{JumpAtom, LevyTriplet};
use levypen::{Extended, RngStream};

fn brownian_drift_sequence(n_paths: usize, seed: u64) -> (ConvergenceExperiment, LevyTriplet) {
    let tr = LevyTriplet::brownian();
    let base = GirsanovCoefficients::constant(0.3, 0.0, &tr, 1.0).unwrap();
    let rule = |n: u32| GirsanovCoefficients::constant(0.3 + 1.0 / n as f64, 0.0, &LevyTriplet::brownian(), 1.0);
    let exp = ConvergenceExperiment::new(base, &rule, &[1, 2, 4, 8, 16, 32], 0.01, n_paths, RngStream::new(seed))
        .unwrap();
    (exp, tr)
}

/// `E|e^{aW - a²/2} - e^{bW - b²/2}|` for `W ~ N(0, 1)`, by quadrature over `W`.
fn lognormal_l1(a: f64, b: f64) -> f64 {
    let n = 200_000;
    let (lo, hi) = (-12.0, 12.0);
    let h = (hi - lo) / n as f64;
    (0..n)
        .map(|i| {
            let w = lo + (i as f64 + 0.5) * h;
            let phi = (-0.5 * w * w).exp() / (2.0 * std::f64::consts::PI).sqrt();
            phi * ((a * w - 0.5 * a * a).exp() - (b * w - 0.5 * b * b).exp()).abs() * h
        })
        .sum()
}

#[test]
fn brownian_l1_column_matches_lognormal_oracle() {
    let (exp, tr) = brownian_drift_sequence(20_000, 200);
    let table = run_convergence(&exp, &tr, 1.0, 50).unwrap();
    for row in &table.rows {
        let oracle = lognormal_l1(0.3 + 1.0 / row.n as f64, 0.3);
        assert!((row.l1_mean - oracle).abs() <= 3.0 * row.l1_se, "{row:?} vs {oracle}");
    }
    assert!(table.l1_trend_ok);
    assert!(table.l1_strictly_decreasing());
    // The exceedance column starts saturated at 1 (the integrand is 1/n² at
    // t = 0) and decreases strictly once it leaves saturation.
    let probs: Vec<f64> = table.rows.iter().map(|r| r.qv_exceed_prob).collect();
    assert!(probs.windows(2).all(|w| w[1] <= w[0]), "{probs:?}");
    let start = probs.iter().position(|&p| p < 1.0).unwrap();
    assert!(probs[start.saturating_sub(1)..].windows(2).all(|w| w[1] < w[0]), "{probs:?}");
    assert!(probs[probs.len() - 1] < 0.05);
}

#[test]
fn jump_only_sequence_shrinks_exceedance() {
    let tr = LevyTriplet::new(0.0, false, vec![JumpAtom { size: 1.0, rate: 2.0 }]).unwrap();
    let base = GirsanovCoefficients::constant(0.0, 0.5, &tr, 1.0).unwrap();
    let jump_model = tr.clone();
    let rule = move |n: u32| GirsanovCoefficients::constant(0.0, 0.5 * (1.0 + 1.0 / n as f64), &jump_model, 1.0);
    let exp = ConvergenceExperiment::new(base, &rule, &[1, 2, 4, 8, 16], 0.01, 20_000, RngStream::new(201)).unwrap();
    let table = run_convergence(&exp, &tr, 1.0, 20).unwrap();
    assert!(table.exceedance_strictly_decreasing(), "{table:?}");
    assert!(table.l1_strictly_decreasing(), "{table:?}");
}

#[test]
fn stopped_qv_never_exceeds_terminal_qv() {
    let (exp, tr) = brownian_drift_sequence(4000, 202);
    let level = Extended::Finite(0.05);
    let samples = path_samples(&exp, &tr, 1.0, 50, level).unwrap();
    let mut triggered = 0;
    for per_path in &samples {
        for s in per_path {
            assert!(s.qv_stopped <= s.qv_terminal);
        }
        if per_path[0].qv_stopped < per_path[0].qv_terminal {
            triggered += 1;
        }
    }
    // n = 1 differs by a unit drift, so the level is crossed on most paths.
    assert!(triggered * 2 > samples.len(), "{triggered} of {}", samples.len());
    let stopped = stopped_variant(&exp, &tr, 1.0, 50, level).unwrap();
    assert!(stopped.rows.last().unwrap().qv_exceed_prob < 0.05);
}

#[test]
fn reruns_are_bit_identical() {
    let (exp, tr) = brownian_drift_sequence(3000, 203);
    let mut a = Vec::new();
    let mut b = Vec::new();
    run_convergence(&exp, &tr, 1.0, 20).unwrap().write_csv(&mut a).unwrap();
    run_convergence(&exp, &tr, 1.0, 20).unwrap().write_csv(&mut b).unwrap();
    assert_eq!(a, b);
}
