use rayon::prelude::*;

use super::{DensityVector, DualityError, FinitePenalty, FiniteSpace, Position, RiskEvaluator};
use crate::optimize::{nelder_mead_max, BarycentricGrid, NelderMeadOptions};

/// Best value and maximizer of `Σ q_i g_i - ψ(q)` over the simplex spanned
/// by `atoms` (all other coordinates held at zero).
fn simplex_sup(
    space: &FiniteSpace,
    penalty: &dyn FinitePenalty,
    gain: &[f64],
    atoms: &[usize],
    resolution: u32,
) -> Result<(f64, Vec<f64>), DualityError> {
    let n = space.len();
    let embed = |local: &[f64]| -> Vec<f64> {
        let mut q = vec![0.0; n];
        for (&i, &v) in atoms.iter().zip(local) {
            q[i] = v;
        }
        q
    };
    let objective = |q: &[f64]| -> Option<f64> {
        let g: f64 = q.iter().zip(gain).map(|(a, b)| a * b).sum();
        penalty.evaluate_measure(space, q).subtract_from(g)
    };

    let mut best: Option<(f64, Vec<f64>)> = None;
    for local in BarycentricGrid::new(atoms.len(), resolution) {
        let q = embed(&local);
        if let Some(v) = objective(&q) {
            // Strict improvement only: the lowest grid index wins ties.
            if best.as_ref().is_none_or(|(b, _)| v > *b) {
                best = Some((v, local));
            }
        }
    }
    let (grid_value, grid_point) = best.ok_or(DualityError::PenaltyInfiniteEverywhere)?;

    // Polish over the free coordinates; the last one is pinned by Σq = 1.
    let d = atoms.len() - 1;
    let lift = |y: &[f64]| -> Option<Vec<f64>> {
        let last = 1.0 - y.iter().sum::<f64>();
        if last < 0.0 || y.iter().any(|&v| v < 0.0) {
            return None;
        }
        let mut local = y.to_vec();
        local.push(last);
        Some(embed(&local))
    };
    let refined = nelder_mead_max(
        |y| lift(y).and_then(|q| objective(&q)),
        &grid_point[..d],
        0.5 / resolution as f64,
        NelderMeadOptions::default(),
    );
    match refined {
        Some((y, v)) if v > grid_value => Ok((v, lift(&y).expect("feasible maximizer"))),
        _ => Ok((grid_value, embed(&grid_point))),
    }
}

fn support(space: &FiniteSpace) -> Vec<usize> {
    (0..space.len()).filter(|&i| !space.is_null(i)).collect()
}

/// `ρ(X) = sup_Q { E_Q[-X] - ψ(Q) }` over the barycentric grid of the simplex
/// at `grid_resolution`, polished by Nelder–Mead from the best grid point.
///
/// Nested resolutions (`r` dividing `r'`) give nondecreasing values up to the
/// polish tolerance.
pub fn risk_from_penalty(
    space: &FiniteSpace,
    penalty: &dyn FinitePenalty,
    x: &Position,
    grid_resolution: u32,
) -> Result<f64, DualityError> {
    if grid_resolution < 2 {
        return Err(DualityError::GridTooCoarse(grid_resolution));
    }
    space.check_dim(x.len())?;
    if let Some(index) = x.payoffs().iter().position(|v| !v.is_finite()) {
        return Err(DualityError::NonFinitePosition { index });
    }
    let gain: Vec<f64> = x.payoffs().iter().map(|v| -v).collect();
    let all: Vec<usize> = (0..space.len()).collect();
    simplex_sup(space, penalty, &gain, &all, grid_resolution).map(|(v, _)| v)
}

/// Sampling plan for the position supremum in the biduality relation:
/// dyadic grids on the cube `[-bound, bound]^|Ω|`, levels `1..=levels`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionGrid {
    pub bound: f64,
    pub levels: u32,
    /// Largest accepted change between the last two levels.
    pub tol: f64,
}

impl PositionGrid {
    /// Cube bound `4 · scale`.
    pub fn for_scale(scale: f64, levels: u32, tol: f64) -> Self {
        Self { bound: 4.0 * scale, levels, tol }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimalPenalty {
    pub value: f64,
    /// Supremum reached at each dyadic level, coarse to fine.
    pub per_level: Vec<f64>,
    pub argmax: Position,
}

/// Lower bound `sup_X { E_Q[-X] - ρ(X) }` for the minimal penalty `ψ*_ρ(Q)`.
///
/// `ρ` must be cash additive, which makes the objective invariant under
/// `X ↦ X + a`; the first payoff is therefore pinned at 0 and the remaining
/// coordinates range over the dyadic grid.
pub fn minimal_penalty(
    space: &FiniteSpace,
    rho: &dyn RiskEvaluator,
    q: &DensityVector,
    plan: &PositionGrid,
) -> Result<MinimalPenalty, DualityError> {
    space.check_dim(q.len())?;
    let n = space.len();
    let objective = |free: &[f64]| -> f64 {
        let mut payoffs = Vec::with_capacity(n);
        payoffs.push(0.0);
        payoffs.extend_from_slice(free);
        let x = Position(payoffs);
        -q.expectation(space, &x) - rho.risk(&x)
    };

    let zero = vec![0.0; n - 1];
    let mut best_free = zero.clone();
    let mut best = objective(&zero);
    let mut per_level = Vec::with_capacity(plan.levels as usize);
    let in_box = |y: &[f64]| y.iter().all(|v| v.abs() <= plan.bound);

    for level in 1..=plan.levels.max(1) {
        let per_axis = (1usize << level) + 1;
        let step = 2.0 * plan.bound / (per_axis - 1) as f64;
        let total = per_axis.pow((n - 1) as u32);
        let values: Vec<f64> = (0..total)
            .into_par_iter()
            .map(|k| objective(&cube_point(k, n - 1, per_axis, plan.bound, step)))
            .collect();
        for (k, &v) in values.iter().enumerate() {
            if v > best {
                best = v;
                best_free = cube_point(k, n - 1, per_axis, plan.bound, step);
            }
        }
        if let Some((y, v)) = nelder_mead_max(
            |y| in_box(y).then(|| objective(y)),
            &best_free,
            0.5 * step,
            NelderMeadOptions::default(),
        ) {
            if v > best {
                best = v;
                best_free = y;
            }
        }
        per_level.push(best);
    }

    if per_level.len() >= 2 {
        let (previous, current) = (per_level[per_level.len() - 2], per_level[per_level.len() - 1]);
        if (current - previous).abs() > plan.tol {
            return Err(DualityError::NonConvergence { previous, current, tol: plan.tol });
        }
    }
    let mut payoffs = vec![0.0];
    payoffs.extend(best_free);
    Ok(MinimalPenalty { value: best, per_level, argmax: Position(payoffs) })
}

/// Same supremum restricted to one fixed cube grid with `per_axis` points,
/// without the first-coordinate pinning. Used as a brute-force cross-check.
pub fn minimal_penalty_on_cube(
    space: &FiniteSpace,
    rho: &dyn RiskEvaluator,
    q: &DensityVector,
    bound: f64,
    per_axis: usize,
) -> f64 {
    let n = space.len();
    let step = 2.0 * bound / (per_axis - 1) as f64;
    (0..per_axis.pow(n as u32))
        .into_par_iter()
        .map(|k| {
            let x = Position(cube_point(k, n, per_axis, bound, step));
            -q.expectation(space, &x) - rho.risk(&x)
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

fn cube_point(mut k: usize, dim: usize, per_axis: usize, bound: f64, step: f64) -> Vec<f64> {
    let mut y = Vec::with_capacity(dim);
    for _ in 0..dim {
        y.push(-bound + (k % per_axis) as f64 * step);
        k /= per_axis;
    }
    y
}

/// Grids for the two nested suprema of the biconjugate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiconjugateGrid {
    /// Dual variables range over `[-u_bound, u_bound]` per free atom.
    pub u_bound: f64,
    pub u_points: usize,
    /// Barycentric resolution for the inner (conjugate) supremum.
    pub inner_resolution: u32,
}

impl Default for BiconjugateGrid {
    fn default() -> Self {
        Self { u_bound: 8.0, u_points: 9, inner_resolution: 20 }
    }
}

/// `Ψ**(Z) = sup_U { E_P[Z U] - Ψ*(U) }` with `Ψ*(U) = sup_Z { E_P[Z U] - Ψ(Z) }`.
///
/// Both suprema run over densities, so null atoms are ignored. Since
/// `Ψ*(U + c) = Ψ*(U) + c`, the dual variable on the first supported atom is
/// pinned at 0. Fails with [`DualityError::GridBoundary`] if the outer
/// maximizer sits on the edge of the dual box.
pub fn fenchel_biconjugate(
    space: &FiniteSpace,
    penalty: &dyn FinitePenalty,
    q: &DensityVector,
    grid: &BiconjugateGrid,
) -> Result<f64, DualityError> {
    space.check_dim(q.len())?;
    if grid.inner_resolution < 2 {
        return Err(DualityError::GridTooCoarse(grid.inner_resolution));
    }
    let atoms = support(space);
    let n = space.len();
    let mass = q.measure(space);
    let dual = |free: &[f64]| -> Vec<f64> {
        let mut u = vec![0.0; n];
        for (&i, &v) in atoms[1..].iter().zip(free) {
            u[i] = v;
        }
        u
    };
    let objective = |free: &[f64]| -> Result<f64, DualityError> {
        let u = dual(free);
        let (conj, _) = simplex_sup(space, penalty, &u, &atoms, grid.inner_resolution)?;
        Ok(mass.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>() - conj)
    };

    let d = atoms.len() - 1;
    let per_axis = grid.u_points.max(2);
    let step = 2.0 * grid.u_bound / (per_axis - 1) as f64;
    let values: Vec<f64> = (0..per_axis.pow(d as u32))
        .into_par_iter()
        .map(|k| objective(&cube_point(k, d, per_axis, grid.u_bound, step)))
        .collect::<Result<_, _>>()?;
    let mut best = f64::NEG_INFINITY;
    let mut best_free = vec![0.0; d];
    for (k, &v) in values.iter().enumerate() {
        if v > best {
            best = v;
            best_free = cube_point(k, d, per_axis, grid.u_bound, step);
        }
    }
    let in_box = |y: &[f64]| y.iter().all(|v| v.abs() <= grid.u_bound);
    if let Some((y, v)) = nelder_mead_max(
        |y| if in_box(y) { objective(y).ok() } else { None },
        &best_free,
        0.5 * step,
        NelderMeadOptions::default(),
    ) {
        if v > best {
            best = v;
            best_free = y;
        }
    }
    let edge = grid.u_bound - 1e-3 * step;
    if best_free.iter().any(|v| v.abs() >= edge) {
        // Flat directions (e.g. Z on a face of the simplex) reach the edge
        // without needing it; only a strict loss when pulled inward counts.
        let inward: Vec<f64> = best_free
            .iter()
            .map(|&v| if v.abs() >= edge { v - v.signum() * step } else { v })
            .collect();
        match objective(&inward) {
            Ok(v) if v >= best - 1e-12 => return Ok(best),
            _ => return Err(DualityError::GridBoundary { bound: grid.u_bound }),
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extended::Extended;
    use crate::finite_duality::{EntropicRisk, PenaltyPreset, PerturbedPenalty, WorstCaseRisk};

    fn uniform(n: usize) -> FiniteSpace {
        FiniteSpace::uniform(n).unwrap()
    }

    /// Oracle: brute-force the 2-atom simplex at step 1e-4.
    fn brute_force_two_point(space: &FiniteSpace, penalty: &dyn FinitePenalty, x: &Position) -> f64 {
        (0..=10_000)
            .map(|k| {
                let q0 = k as f64 * 1e-4;
                let q = [q0, 1.0 - q0];
                let g = -(q[0] * x.payoffs()[0] + q[1] * x.payoffs()[1]);
                penalty.evaluate_measure(space, &q).subtract_from(g).unwrap_or(f64::NEG_INFINITY)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn zero_penalty_constant_position() {
        let s = uniform(3);
        for c in [-2.0, 0.0, 3.5] {
            let r = risk_from_penalty(&s, &PenaltyPreset::Zero, &Position::constant(3, c), 4).unwrap();
            assert!((r + c).abs() < 1e-12, "c = {c}: {r}");
        }
    }

    #[test]
    fn worst_case_three_point() {
        let s = uniform(3);
        let x = Position::new(vec![1.0, 2.0, 3.0]).unwrap();
        let r = risk_from_penalty(&s, &PenaltyPreset::WorstCase, &x, 5).unwrap();
        assert!((r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropic_two_point_matches_brute_force_and_closed_form() {
        let s = uniform(2);
        let p = PenaltyPreset::Entropic { gamma: 1.0 };
        let x = Position::new(vec![0.0, 1.0]).unwrap();
        let brute = brute_force_two_point(&s, &p, &x);
        let closed = (0.5 * (1.0 + (-1f64).exp())).ln();
        // The brute-force grid sits within O(step²) of the closed form.
        assert!((brute - closed).abs() < 1e-7, "{brute} vs {closed}");
        let r = risk_from_penalty(&s, &p, &x, 16).unwrap();
        assert!((r - closed).abs() < 1e-10, "{r} vs {closed}");
    }

    #[test]
    fn risk_nondecreasing_over_nested_resolutions() {
        let s = FiniteSpace::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![0.2, 0.3, 0.5],
        )
        .unwrap();
        let p = PenaltyPreset::Entropic { gamma: 0.7 };
        let x = Position::new(vec![0.4, -1.2, 2.0]).unwrap();
        let mut last = f64::NEG_INFINITY;
        for r in [2, 4, 8, 16, 32] {
            let v = risk_from_penalty(&s, &p, &x, r).unwrap();
            assert!(v >= last - 1e-12, "resolution {r}: {v} < {last}");
            last = v;
        }
        let closed = p.closed_form_risk(&s, &x).unwrap();
        assert!((last - closed).abs() < 1e-9);
    }

    #[test]
    fn risk_errors() {
        let s = uniform(2);
        let x = Position::constant(2, 0.0);
        assert_eq!(risk_from_penalty(&s, &PenaltyPreset::Zero, &x, 1), Err(DualityError::GridTooCoarse(1)));
        let inf = crate::finite_duality::FnPenalty::new(|_, _| Extended::PosInfinity);
        assert_eq!(risk_from_penalty(&s, &inf, &x, 4), Err(DualityError::PenaltyInfiniteEverywhere));
        let bad = Position(vec![0.0, f64::INFINITY]);
        assert_eq!(
            risk_from_penalty(&s, &PenaltyPreset::Zero, &bad, 4),
            Err(DualityError::NonFinitePosition { index: 1 })
        );
    }

    #[test]
    fn normalization_identity() {
        // ρ(0) = -inf_Q ψ(Q).
        let s = uniform(3);
        let p = PenaltyPreset::Linear { c: vec![0.5, -0.25, 1.0] };
        let r0 = risk_from_penalty(&s, &p, &Position::constant(3, 0.0), 8).unwrap();
        assert!((r0 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn worst_case_minimal_penalty_vanishes() {
        let s = uniform(3);
        let rho = WorstCaseRisk { space: s.clone() };
        let plan = PositionGrid { bound: 4.0, levels: 4, tol: 1e-9 };
        for z in crate::finite_duality::sample_interior_densities(&s, 5, 3) {
            let m = minimal_penalty(&s, &rho, &z, &plan).unwrap();
            assert!(m.value.abs() < 1e-12, "{}", m.value);
        }
    }

    #[test]
    fn entropic_minimal_penalty_is_relative_entropy() {
        let s = FiniteSpace::new(vec!["a".into(), "b".into(), "c".into()], vec![0.3, 0.3, 0.4]).unwrap();
        let rho = EntropicRisk { space: s.clone(), gamma: 1.0 };
        let plan = PositionGrid { bound: 6.0, levels: 5, tol: 1e-6 };
        let p = PenaltyPreset::Entropic { gamma: 1.0 };
        for z in crate::finite_duality::sample_interior_densities(&s, 4, 8) {
            let m = minimal_penalty(&s, &rho, &z, &plan).unwrap();
            let h = p.evaluate(&s, &z).finite().unwrap();
            assert!(m.value <= h + 1e-12);
            assert!((m.value - h).abs() < 1e-8, "{} vs {h}", m.value);
            assert!(m.value >= -rho.risk(&Position::constant(3, 0.0)) - 1e-15);
        }
    }

    #[test]
    fn pinned_grid_agrees_with_full_cube() {
        let s = uniform(3);
        let rho = EntropicRisk { space: s.clone(), gamma: 1.0 };
        let z = DensityVector::from_measure(&s, &[0.2, 0.3, 0.5]).unwrap();
        let pinned = minimal_penalty(&s, &rho, &z, &PositionGrid { bound: 3.0, levels: 3, tol: 1.0 }).unwrap();
        let cube = minimal_penalty_on_cube(&s, &rho, &z, 3.0, 9);
        assert!(pinned.value >= cube - 1e-12);
    }

    #[test]
    fn non_convergence_is_signalled() {
        // An evaluator that is not cash additive lets the sup run away with the grid.
        let s = uniform(2);
        let rho = |x: &Position| -> f64 { 0.0 * x.payoffs()[0] };
        let z = DensityVector::from_measure(&s, &[0.9, 0.1]).unwrap();
        let r = minimal_penalty(&s, &rho, &z, &PositionGrid { bound: 5.0, levels: 3, tol: 1e-6 });
        assert!(r.is_ok(), "bounded cube keeps this finite");
        let m = r.unwrap();
        assert!(m.value > 0.0);
        // A narrow well at X_1 = 1 that only the level-3 grid resolves.
        let well = |x: &Position| -> f64 { -10.0 * (-((x.payoffs()[1] - 1.0) / 0.01).powi(2)).exp() };
        let strict = minimal_penalty(&s, &well, &z, &PositionGrid { bound: 4.0, levels: 3, tol: 1e-6 });
        assert!(matches!(strict, Err(DualityError::NonConvergence { .. })));
    }

    #[test]
    fn biconjugate_of_linear_penalty() {
        let s = uniform(3);
        let p = PenaltyPreset::Linear { c: vec![0.3, -0.2, 0.5] };
        let grid = BiconjugateGrid { u_bound: 4.0, u_points: 9, inner_resolution: 10 };
        for q in [[0.2, 0.3, 0.5], [0.6, 0.2, 0.2], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]] {
            let z = DensityVector::from_measure(&s, &q).unwrap();
            let b = fenchel_biconjugate(&s, &p, &z, &grid).unwrap();
            let direct = p.evaluate(&s, &z).finite().unwrap();
            assert!((b - direct).abs() < 1e-8, "{b} vs {direct}");
        }
    }

    #[test]
    fn biconjugate_entropic_at_reference_is_zero() {
        let s = uniform(2);
        let p = PenaltyPreset::Entropic { gamma: 1.0 };
        let b = fenchel_biconjugate(&s, &p, &DensityVector::reference(&s), &BiconjugateGrid::default()).unwrap();
        assert!(b.abs() < 1e-9, "{b}");
    }

    #[test]
    fn biconjugate_drops_below_non_lsc_penalty() {
        let s = uniform(3);
        let raised = vec![vec![0.2, 0.3, 0.5], vec![0.5, 0.25, 0.25]];
        let p = PerturbedPenalty {
            base: PenaltyPreset::Entropic { gamma: 1.0 },
            raised: raised.clone(),
            bump: 1.0,
            match_tol: 1e-9,
        };
        let grid = BiconjugateGrid { u_bound: 6.0, u_points: 9, inner_resolution: 16 };
        for q in raised {
            let z = DensityVector::from_measure(&s, &q).unwrap();
            let psi = p.evaluate(&s, &z).finite().unwrap();
            let b = fenchel_biconjugate(&s, &p, &z, &grid).unwrap();
            let base = PenaltyPreset::Entropic { gamma: 1.0 }.evaluate(&s, &z).finite().unwrap();
            assert!(b < psi - 0.5, "{b} vs {psi}");
            assert!((b - base).abs() < 1e-6);
        }
    }

    #[test]
    fn biconjugate_flags_small_dual_box() {
        let s = uniform(2);
        let p = PenaltyPreset::Entropic { gamma: 1.0 };
        let z = DensityVector::from_measure(&s, &[0.99, 0.01]).unwrap();
        let grid = BiconjugateGrid { u_bound: 1.0, u_points: 5, inner_resolution: 20 };
        assert_eq!(
            fenchel_biconjugate(&s, &p, &z, &grid),
            Err(DualityError::GridBoundary { bound: 1.0 })
        );
    }

    #[test]
    fn risk_unchanged_under_biconjugate_penalty() {
        let s = uniform(2);
        let base = PenaltyPreset::Linear { c: vec![0.4, -0.1] };
        let space = s.clone();
        let grid = BiconjugateGrid { u_bound: 3.0, u_points: 7, inner_resolution: 8 };
        let bi = crate::finite_duality::FnPenalty::new(move |sp, q| {
            let z = DensityVector::from_measure(sp, q).expect("grid measure");
            Extended::Finite(fenchel_biconjugate(&space, &base, &z, &grid).expect("inside dual box"))
        });
        let x = Position::new(vec![0.7, -0.3]).unwrap();
        let direct = risk_from_penalty(&s, &PenaltyPreset::Linear { c: vec![0.4, -0.1] }, &x, 8).unwrap();
        let via_bi = risk_from_penalty(&s, &bi, &x, 8).unwrap();
        assert!((direct - via_bi).abs() < 1e-8, "{direct} vs {via_bi}");
    }
}
