//! Derivative-free search primitives: barycentric simplex grids,
//! Nelder–Mead and golden-section maximization.
//!
//! All routines are deterministic. Objectives return `None` for points that
//! are infeasible or carry an infinite penalty; such points always lose.

/// Iterator over the barycentric grid `{ k / resolution : k ∈ N^dim, Σk = resolution }`
/// in lexicographic order of `k`. Index order is the tie-break order.
pub struct BarycentricGrid {
    dim: usize,
    resolution: u32,
    counts: Vec<u32>,
    done: bool,
}

impl BarycentricGrid {
    pub fn new(dim: usize, resolution: u32) -> Self {
        assert!(dim >= 1, "simplex needs at least one vertex");
        let mut counts = vec![0; dim];
        counts[dim - 1] = resolution;
        Self { dim, resolution, counts, done: false }
    }

    /// Number of grid points, `C(resolution + dim - 1, dim - 1)`.
    pub fn len(dim: usize, resolution: u32) -> usize {
        let (n, k) = (resolution as u128 + dim as u128 - 1, dim as u128 - 1);
        let mut c: u128 = 1;
        for i in 0..k {
            c = c * (n - i) / (i + 1);
        }
        c as usize
    }

    fn advance(&mut self) {
        // Next composition in lexicographic order: increment the rightmost
        // position (other than the last) that can take one unit from the tail.
        let d = self.dim;
        if d == 1 {
            self.done = true;
            return;
        }
        let tail = self.counts[d - 1];
        if tail > 0 {
            self.counts[d - 2] += 1;
            self.counts[d - 1] = tail - 1;
            return;
        }
        // Find the rightmost i < d-1 with counts[i] > 0 and a predecessor slot.
        let mut i = d - 2;
        loop {
            if self.counts[i] > 0 && i > 0 {
                let moved = self.counts[i];
                self.counts[i] = 0;
                self.counts[i - 1] += 1;
                self.counts[d - 1] = moved - 1;
                return;
            }
            if i == 0 {
                self.done = true;
                return;
            }
            i -= 1;
        }
    }
}

impl Iterator for BarycentricGrid {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        if self.done {
            return None;
        }
        let r = self.resolution as f64;
        let point = self.counts.iter().map(|&c| c as f64 / r).collect();
        self.advance();
        Some(point)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Stop once the spread of objective values over the simplex is below this.
    pub f_tol: f64,
    /// ...and the simplex diameter is below this.
    pub x_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_iter: 4000, f_tol: 1e-14, x_tol: 1e-10 }
    }
}

/// Maximizes `f` starting from `start` with an axis-aligned initial simplex of edge `step`.
///
/// Returns the best point visited and its value, or `None` when `f` is
/// infeasible at the start.
pub fn nelder_mead_max<F>(
    f: F,
    start: &[f64],
    step: f64,
    opts: NelderMeadOptions,
) -> Option<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let d = start.len();
    let score = |x: &[f64]| f(x).unwrap_or(f64::NEG_INFINITY);
    let f0 = score(start);
    if f0 == f64::NEG_INFINITY {
        return None;
    }
    if d == 0 {
        return Some((Vec::new(), f0));
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((start.to_vec(), f0));
    for i in 0..d {
        let mut x = start.to_vec();
        x[i] += step;
        let mut fx = score(&x);
        if fx == f64::NEG_INFINITY {
            x[i] = start[i] - step;
            fx = score(&x);
        }
        simplex.push((x, fx));
    }

    for _ in 0..opts.max_iter {
        // Descending by value; stable sort keeps earlier vertices first on ties.
        simplex.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        let worst = simplex[d].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if worst.is_finite() && (best - worst).abs() <= opts.f_tol && diameter <= opts.x_tol {
            break;
        }
        if diameter <= f64::EPSILON * 4.0 {
            break;
        }

        let mut centroid = vec![0.0; d];
        for (x, _) in &simplex[..d] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / d as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[d].0).map(|(c, w)| c + t * (c - w)).collect()
        };

        let reflected = along(1.0);
        let fr = score(&reflected);
        if fr > simplex[0].1 {
            let expanded = along(2.0);
            let fe = score(&expanded);
            simplex[d] = if fe > fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr > simplex[d - 1].1 {
            simplex[d] = (reflected, fr);
            continue;
        }
        let (contracted, fc) = if fr > worst {
            let c = along(0.5);
            let fc = score(&c);
            (c, fc)
        } else {
            let c = along(-0.5);
            let fc = score(&c);
            (c, fc)
        };
        if fc > worst.max(fr) {
            simplex[d] = (contracted, fc);
            continue;
        }
        // Shrink toward the best vertex.
        let best_x = simplex[0].0.clone();
        for (x, fx) in simplex.iter_mut().skip(1) {
            for (xi, bi) in x.iter_mut().zip(&best_x) {
                *xi = bi + 0.5 * (*xi - bi);
            }
            *fx = score(x);
        }
    }
    simplex.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    let (x, fx) = simplex.swap_remove(0);
    Some((x, fx))
}

/// Golden-section maximization of a unimodal `f` on `[lo, hi]` using at most
/// `max_evals` evaluations. Returns the best point seen and its value.
pub fn golden_section_max<F>(f: F, lo: f64, hi: f64, max_evals: usize) -> (f64, f64)
where
    F: Fn(f64) -> Option<f64>,
{
    let score = |x: f64| f(x).unwrap_or(f64::NEG_INFINITY);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = score(c);
    let mut fd = score(d);
    let mut best = if fd > fc { (d, fd) } else { (c, fc) };
    let mut evals = 2;
    while evals < max_evals && (b - a) > 1e-12 * (1.0 + a.abs() + b.abs()) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = score(c);
            if fc > best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = score(d);
            if fd > best.1 {
                best = (d, fd);
            }
        }
        evals += 1;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_enumerates_all_compositions() {
        for (dim, res) in [(1, 5), (2, 4), (3, 6), (4, 5)] {
            let pts: Vec<Vec<f64>> = BarycentricGrid::new(dim, res).collect();
            assert_eq!(pts.len(), BarycentricGrid::len(dim, res), "dim {dim} res {res}");
            for p in &pts {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(p.iter().all(|&x| x >= 0.0));
            }
            let mut sorted = pts.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            sorted.dedup();
            assert_eq!(sorted.len(), pts.len(), "duplicates for dim {dim}");
        }
    }

    #[test]
    fn grid_starts_at_last_vertex() {
        let first = BarycentricGrid::new(3, 4).next().unwrap();
        assert_eq!(first, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn nelder_mead_finds_concave_max() {
        let f = |x: &[f64]| Some(-(x[0] - 1.0).powi(2) - 2.0 * (x[1] + 0.5).powi(2) + 3.0);
        let (x, fx) = nelder_mead_max(f, &[0.0, 0.0], 0.5, NelderMeadOptions::default()).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] + 0.5).abs() < 1e-6);
        assert!((fx - 3.0).abs() < 1e-12);
    }

    #[test]
    fn nelder_mead_respects_infeasible_region() {
        // Max of x on x <= 1 is at the boundary.
        let f = |x: &[f64]| if x[0] <= 1.0 { Some(x[0]) } else { None };
        let (x, _) = nelder_mead_max(f, &[0.0], 0.3, NelderMeadOptions::default()).unwrap();
        assert!(x[0] <= 1.0 && x[0] > 0.999);
        assert!(nelder_mead_max(|_: &[f64]| None, &[0.0], 1.0, NelderMeadOptions::default()).is_none());
    }

    #[test]
    fn golden_section_on_parabola() {
        let (x, fx) = golden_section_max(|x| Some(-(x - 0.3).powi(2)), -1.0, 1.0, 200);
        assert!((x - 0.3).abs() < 1e-7);
        assert!(fx.abs() < 1e-13);
    }
}
