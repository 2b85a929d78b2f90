//! Finite-activity Lévy models and seeded path simulation.
//!
//! A model is a drift `b`, an optional unit-variance Brownian motion `W` and a
//! Lévy measure `ν = Σ_i λ_i δ_{x_i}` with finitely many atoms. Paths follow
//! the Lévy–Itô decomposition
//!
//! ```text
//! L_t = b t + W_t + Σ_{s ≤ t, |ΔL_s| ≤ 1} ΔL_s - t Σ_{|x_i| ≤ 1} x_i λ_i + Σ_{s ≤ t, |ΔL_s| > 1} ΔL_s
//! ```
//!
//! where the small jumps are compensated and the big ones are not. Jump times
//! are simulated exactly and kept off-grid in the jump record.

use std::io::{self, Write};
use std::sync::Arc;

use rand::distributions::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use crate::rng::RngStream;
use crate::stats::Estimate;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LevyError {
    #[error("jump size must be finite and nonzero, got {0}")]
    InvalidJumpSize(f64),
    #[error("jump rate must be finite and nonnegative, got {0}")]
    InvalidRate(f64),
    #[error("jump sizes must be distinct, {0} repeats")]
    DuplicateAtom(f64),
    #[error("total jump rate is not finite")]
    InfiniteActivity,
    #[error("drift must be finite")]
    InvalidDrift,
    #[error("time grid invalid: {0}")]
    InvalidGrid(String),
    #[error("unknown atom index {index} (model has {atoms} atoms)")]
    UnknownAtom { index: usize, atoms: usize },
    #[error("no paths supplied")]
    NoPaths,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpAtom {
    pub size: f64,
    pub rate: f64,
}

/// Drift, Brownian switch and atomic Lévy measure.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyTriplet {
    drift: f64,
    brownian: bool,
    atoms: Vec<JumpAtom>,
}

impl LevyTriplet {
    pub fn new(drift: f64, brownian: bool, atoms: Vec<JumpAtom>) -> Result<Self, LevyError> {
        if !drift.is_finite() {
            return Err(LevyError::InvalidDrift);
        }
        for (i, a) in atoms.iter().enumerate() {
            if a.size.is_nan() || a.size == 0.0 || a.size.is_infinite() {
                return Err(LevyError::InvalidJumpSize(a.size));
            }
            if a.rate.is_nan() || a.rate < 0.0 {
                return Err(LevyError::InvalidRate(a.rate));
            }
            if atoms[..i].iter().any(|b| b.size == a.size) {
                return Err(LevyError::DuplicateAtom(a.size));
            }
        }
        if !atoms.iter().map(|a| a.rate).sum::<f64>().is_finite() {
            return Err(LevyError::InfiniteActivity);
        }
        Ok(Self { drift, brownian, atoms })
    }

    /// Standard Brownian motion, no drift, no jumps.
    pub fn brownian() -> Self {
        Self { drift: 0.0, brownian: true, atoms: Vec::new() }
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn has_brownian(&self) -> bool {
        self.brownian
    }

    pub fn atoms(&self) -> &[JumpAtom] {
        &self.atoms
    }

    pub fn atom(&self, index: usize) -> Result<JumpAtom, LevyError> {
        self.atoms
            .get(index)
            .copied()
            .ok_or(LevyError::UnknownAtom { index, atoms: self.atoms.len() })
    }

    /// `Λ = ν(R_0)`.
    pub fn total_rate(&self) -> f64 {
        self.atoms.iter().map(|a| a.rate).sum()
    }

    /// `Σ_{|x_i| ≤ 1} x_i λ_i`, the compensator of the small jumps per unit time.
    pub fn small_jump_compensator(&self) -> f64 {
        self.atoms.iter().filter(|a| a.size.abs() <= 1.0).map(|a| a.size * a.rate).sum()
    }

    /// `E[L_1] = b + Σ_{|x_i| > 1} x_i λ_i`.
    pub fn mean_per_unit_time(&self) -> f64 {
        self.drift + self.atoms.iter().filter(|a| a.size.abs() > 1.0).map(|a| a.size * a.rate).sum::<f64>()
    }

    /// Slope of `L` between jumps, net of the small-jump compensator.
    pub fn drift_between_jumps(&self) -> f64 {
        self.drift - self.small_jump_compensator()
    }
}

/// Increasing time points `0 = t_0 < t_1 < … < t_M = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid(Vec<f64>);

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self, LevyError> {
        if points.len() < 2 {
            return Err(LevyError::InvalidGrid("need at least two points".into()));
        }
        if points[0] != 0.0 {
            return Err(LevyError::InvalidGrid(format!("must start at 0, got {}", points[0])));
        }
        if let Some(w) = points.windows(2).find(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater) || !w[1].is_finite()) {
            return Err(LevyError::InvalidGrid(format!("not strictly increasing at {} -> {}", w[0], w[1])));
        }
        Ok(Self(points))
    }

    pub fn uniform(horizon: f64, steps: usize) -> Result<Self, LevyError> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(LevyError::InvalidGrid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(LevyError::InvalidGrid("need at least one step".into()));
        }
        let dt = horizon / steps as f64;
        let mut points: Vec<f64> = (0..steps).map(|k| k as f64 * dt).collect();
        points.push(horizon);
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.0
    }

    pub fn horizon(&self) -> f64 {
        *self.0.last().expect("nonempty grid")
    }

    pub fn steps(&self) -> usize {
        self.0.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub size: f64,
    pub atom: usize,
}

/// One simulated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct LevyPath {
    pub grid: Arc<TimeGrid>,
    /// `W` at the grid points.
    pub brownian: Vec<f64>,
    /// Jumps in increasing time order, all in `(0, T]`.
    pub jumps: Vec<Jump>,
    /// `L` at the grid points, including every jump at or before the point.
    pub levels: Vec<f64>,
}

impl LevyPath {
    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    pub fn terminal_brownian(&self) -> f64 {
        *self.brownian.last().expect("nonempty path")
    }

    pub fn terminal_level(&self) -> f64 {
        *self.levels.last().expect("nonempty path")
    }

    pub fn jump_count(&self, atom: usize) -> usize {
        self.jumps.iter().filter(|j| j.atom == atom).count()
    }

    /// Writes `t,W,L` rows at the grid points.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,W,L")?;
        for ((t, w), l) in self.grid.points().iter().zip(&self.brownian).zip(&self.levels) {
            writeln!(out, "{t},{w},{l}")?;
        }
        Ok(())
    }

    /// Writes `time,size,atom` rows for the jump record.
    pub fn write_jumps_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "time,size,atom")?;
        for j in &self.jumps {
            writeln!(out, "{},{},{}", j.time, j.size, j.atom)?;
        }
        Ok(())
    }
}

/// Simulates one path on the uniform grid with `steps` intervals over `[0, horizon]`.
pub fn simulate_path(
    triplet: &LevyTriplet,
    horizon: f64,
    steps: usize,
    rng: RngStream,
) -> Result<LevyPath, LevyError> {
    let grid = Arc::new(TimeGrid::uniform(horizon, steps)?);
    simulate_on_grid(triplet, &grid, rng)
}

/// Simulates one path on an arbitrary grid.
///
/// Brownian increments are drawn first, then the jump count, the jump
/// times and the atoms; the Brownian part of a stream is therefore the same
/// whatever the Lévy measure.
pub fn simulate_on_grid(
    triplet: &LevyTriplet,
    grid: &Arc<TimeGrid>,
    stream: RngStream,
) -> Result<LevyPath, LevyError> {
    let total_rate = triplet.total_rate();
    if !total_rate.is_finite() {
        return Err(LevyError::InfiniteActivity);
    }
    let mut rng = stream.rng();
    let t = grid.points();
    let horizon = grid.horizon();

    let mut brownian = Vec::with_capacity(t.len());
    brownian.push(0.0);
    let mut w = 0.0;
    for k in 1..t.len() {
        if triplet.brownian {
            let z: f64 = StandardNormal.sample(&mut rng);
            w += z * (t[k] - t[k - 1]).sqrt();
        }
        brownian.push(w);
    }

    let mut jumps = Vec::new();
    if total_rate > 0.0 {
        let count = Poisson::new(total_rate * horizon).expect("positive mean").sample(&mut rng) as usize;
        let mut times: Vec<f64> = (0..count).map(|_| horizon * (1.0 - rng.gen::<f64>())).collect();
        times.sort_by(|a, b| a.partial_cmp(b).expect("finite times"));
        let pick = WeightedIndex::new(triplet.atoms.iter().map(|a| a.rate)).expect("positive total rate");
        for time in times {
            let atom = pick.sample(&mut rng);
            jumps.push(Jump { time, size: triplet.atoms[atom].size, atom });
        }
    }

    let slope = triplet.drift_between_jumps();
    let mut levels = Vec::with_capacity(t.len());
    let mut next = 0;
    let mut jump_sum = 0.0;
    for (k, &tk) in t.iter().enumerate() {
        while next < jumps.len() && jumps[next].time <= tk {
            jump_sum += jumps[next].size;
            next += 1;
        }
        levels.push(slope * tk + brownian[k] + jump_sum);
    }

    Ok(LevyPath { grid: Arc::clone(grid), brownian, jumps, levels })
}

/// `n_paths` independent paths; path `i` uses stream `root.child(i)`.
pub fn simulate_batch(
    triplet: &LevyTriplet,
    horizon: f64,
    steps: usize,
    n_paths: usize,
    root: RngStream,
) -> Result<Vec<LevyPath>, LevyError> {
    map_paths(triplet, horizon, steps, n_paths, root, |p| p)
}

/// Simulates `n_paths` paths and maps each through `f` without keeping the
/// paths around. Results come back in path-index order.
pub fn map_paths<T, F>(
    triplet: &LevyTriplet,
    horizon: f64,
    steps: usize,
    n_paths: usize,
    root: RngStream,
    f: F,
) -> Result<Vec<T>, LevyError>
where
    T: Send,
    F: Fn(LevyPath) -> T + Sync,
{
    let grid = Arc::new(TimeGrid::uniform(horizon, steps)?);
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| simulate_on_grid(triplet, &grid, root.child(i)).map(&f))
        .collect()
}

/// Empirical jump intensity of one atom: jumps per path per unit time.
pub fn empirical_compensator(
    triplet: &LevyTriplet,
    paths: &[LevyPath],
    atom_index: usize,
) -> Result<Estimate, LevyError> {
    triplet.atom(atom_index)?;
    if paths.is_empty() {
        return Err(LevyError::NoPaths);
    }
    let rates: Vec<f64> = paths.iter().map(|p| p.jump_count(atom_index) as f64 / p.horizon()).collect();
    Ok(Estimate::from_samples(&rates))
}
