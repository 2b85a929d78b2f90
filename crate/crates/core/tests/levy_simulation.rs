//! Monte Carlo moment checks for the Lévy path simulator (10^5 paths each).

use levypen::levy_model::{empirical_compensator, simulate_batch, JumpAtom, LevyTriplet};
use levypen::{Estimate, RngStream};

const PATHS: usize = 100_000;

/// Poisson(λT) moments: mean λT, variance λT.
fn poisson_oracle(rate: f64, horizon: f64) -> (f64, f64) {
    (rate * horizon, rate * horizon)
}

#[test]
fn brownian_terminal_variance_is_horizon() {
    let horizon = 1.5;
    let paths = simulate_batch(&LevyTriplet::brownian(), horizon, 4, PATHS, RngStream::new(101)).unwrap();
    let terminal: Vec<f64> = paths.iter().map(|p| p.terminal_level()).collect();
    let mean = Estimate::from_samples(&terminal).mean;
    let sq: Vec<f64> = terminal.iter().map(|x| (x - mean).powi(2)).collect();
    let var = Estimate::from_samples(&sq);
    assert!(var.within(horizon, 3.0), "var {} ± {}", var.mean, var.se);
}

#[test]
fn single_atom_jump_count() {
    let tr = LevyTriplet::new(0.0, false, vec![JumpAtom { size: 1.0, rate: 2.0 }]).unwrap();
    let paths = simulate_batch(&tr, 1.0, 1, PATHS, RngStream::new(102)).unwrap();
    let counts: Vec<f64> = paths.iter().map(|p| p.jumps.len() as f64).collect();
    let est = Estimate::from_samples(&counts);
    let (mean, var) = poisson_oracle(2.0, 1.0);
    let se = (var / PATHS as f64).sqrt();
    assert!((est.mean - mean).abs() <= 3.0 * se, "{} vs {mean}", est.mean);
}

#[test]
fn compensator_of_negative_atom() {
    let tr = LevyTriplet::new(0.0, true, vec![JumpAtom { size: -0.5, rate: 1.0 }]).unwrap();
    let paths = simulate_batch(&tr, 2.0, 2, PATHS, RngStream::new(103)).unwrap();
    let est = empirical_compensator(&tr, &paths, 0).unwrap();
    assert!(est.within(1.0, 3.0), "{} ± {}", est.mean, est.se);
}

#[test]
fn compensator_zero_rate_atom_is_exactly_zero() {
    let tr = LevyTriplet::new(
        0.0,
        true,
        vec![JumpAtom { size: 1.0, rate: 0.0 }, JumpAtom { size: 2.0, rate: 1.0 }],
    )
    .unwrap();
    let paths = simulate_batch(&tr, 1.0, 2, 10_000, RngStream::new(104)).unwrap();
    assert_eq!(empirical_compensator(&tr, &paths, 0).unwrap().mean, 0.0);
}

#[test]
fn compensator_two_atoms_by_thinning() {
    // Thinning oracle: each jump of a Poisson(Λ) stream is of atom i with
    // probability λ_i/Λ, so atom i's count is Poisson(λ_i T).
    let tr = LevyTriplet::new(
        0.0,
        false,
        vec![JumpAtom { size: -0.5, rate: 1.0 }, JumpAtom { size: 1.0, rate: 0.5 }],
    )
    .unwrap();
    let horizon = 1.0;
    let paths = simulate_batch(&tr, horizon, 1, PATHS, RngStream::new(105)).unwrap();
    for (i, atom) in tr.atoms().iter().enumerate() {
        let (mean, var) = poisson_oracle(atom.rate, horizon);
        let est = empirical_compensator(&tr, &paths, i).unwrap();
        let se = (var / PATHS as f64).sqrt() / horizon;
        assert!((est.mean - mean / horizon).abs() <= 3.0 * se, "atom {i}: {}", est.mean);
    }
}

#[test]
fn terminal_mean_follows_decomposition() {
    let tr = LevyTriplet::new(
        0.3,
        true,
        vec![
            JumpAtom { size: 0.5, rate: 2.0 },
            JumpAtom { size: -1.0, rate: 1.0 },
            JumpAtom { size: 2.0, rate: 0.5 },
        ],
    )
    .unwrap();
    let horizon = 2.0;
    let paths = simulate_batch(&tr, horizon, 4, PATHS, RngStream::new(106)).unwrap();
    let est = Estimate::from_samples(&paths.iter().map(|p| p.terminal_level()).collect::<Vec<_>>());
    // Only |x| > 1 jumps contribute to the mean: 0.3 + 2·0.5.
    let expected = (0.3 + 1.0) * horizon;
    assert!((tr.mean_per_unit_time() - 1.3).abs() < 1e-15);
    assert!(est.within(expected, 3.0), "{} ± {} vs {expected}", est.mean, est.se);
}

#[test]
fn increments_over_disjoint_intervals_match() {
    let tr = LevyTriplet::new(0.1, true, vec![JumpAtom { size: 0.7, rate: 1.5 }]).unwrap();
    let paths = simulate_batch(&tr, 2.0, 2, PATHS, RngStream::new(107)).unwrap();
    let first: Vec<f64> = paths.iter().map(|p| p.levels[1] - p.levels[0]).collect();
    let second: Vec<f64> = paths.iter().map(|p| p.levels[2] - p.levels[1]).collect();
    let (a, b) = (Estimate::from_samples(&first), Estimate::from_samples(&second));
    let se = (a.se.powi(2) + b.se.powi(2)).sqrt();
    assert!((a.mean - b.mean).abs() <= 4.0 * se);

    let centered = |xs: &[f64], m: f64| xs.iter().map(|x| (x - m).powi(2)).collect::<Vec<_>>();
    let (va, vb) = (
        Estimate::from_samples(&centered(&first, a.mean)),
        Estimate::from_samples(&centered(&second, b.mean)),
    );
    let se = (va.se.powi(2) + vb.se.powi(2)).sqrt();
    assert!((va.mean - vb.mean).abs() <= 4.0 * se);
}

#[test]
fn batches_are_reproducible() {
    let tr = LevyTriplet::new(0.0, true, vec![JumpAtom { size: 1.0, rate: 1.0 }]).unwrap();
    let a = simulate_batch(&tr, 1.0, 8, 500, RngStream::new(9)).unwrap();
    let b = simulate_batch(&tr, 1.0, 8, 500, RngStream::new(9)).unwrap();
    assert_eq!(a, b);
}
