//! L¹ convergence of terminal densities against convergence in probability of
//! the quadratic variation of their difference.
//!
//! A [`ConvergenceExperiment`] fixes a base coefficient pair `θ` and a sequence
//! `n ↦ θⁿ`. On one shared batch of paths (common random numbers) the
//! experiment estimates `E|D_Tⁿ - D_T|` and `P([Dⁿ - D]_T > ε)` for each `n`.

use std::io::{self, Write};

use thiserror::Error;

use crate::density::{quadratic_variation_process, stochastic_exponential, DensityError, GirsanovCoefficients};
use crate::extended::Extended;
use crate::levy_model::{map_paths, LevyError, LevyPath, LevyTriplet};
use crate::rng::RngStream;
use crate::stats::Estimate;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConvergenceError {
    #[error("n_values must be nonempty and strictly increasing")]
    BadSequence,
    #[error("epsilon must be positive and finite, got {0}")]
    BadEpsilon(f64),
    #[error("need at least 2 paths, got {0}")]
    TooFewPaths(usize),
    #[error("stopping level must be positive, got {0}")]
    BadStoppingLevel(Extended),
    #[error("sequence member n = {n}: {source}")]
    Member { n: u32, source: DensityError },
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Levy(#[from] LevyError),
}

pub type SequenceRule<'a> = dyn Fn(u32) -> Result<GirsanovCoefficients, DensityError> + 'a;

pub struct ConvergenceExperiment {
    base: GirsanovCoefficients,
    members: Vec<(u32, GirsanovCoefficients)>,
    epsilon: f64,
    n_paths: usize,
    rng: RngStream,
}

impl ConvergenceExperiment {
    /// Builds every sequence member up front so an inadmissible `θⁿ` is reported
    /// before any simulation.
    pub fn new(
        base: GirsanovCoefficients,
        sequence_rule: &SequenceRule<'_>,
        n_values: &[u32],
        epsilon: f64,
        n_paths: usize,
        rng: RngStream,
    ) -> Result<Self, ConvergenceError> {
        if n_values.is_empty() || n_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ConvergenceError::BadSequence);
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(ConvergenceError::BadEpsilon(epsilon));
        }
        if n_paths < 2 {
            return Err(ConvergenceError::TooFewPaths(n_paths));
        }
        let members = n_values
            .iter()
            .map(|&n| sequence_rule(n).map(|c| (n, c)).map_err(|source| ConvergenceError::Member { n, source }))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { base, members, epsilon, n_paths, rng })
    }

    pub fn base(&self) -> &GirsanovCoefficients {
        &self.base
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_values(&self) -> Vec<u32> {
        self.members.iter().map(|(n, _)| *n).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n: u32,
    pub l1_mean: f64,
    pub l1_se: f64,
    pub qv_exceed_prob: f64,
    pub qv_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    /// False when the L¹ column increases somewhere, which usually means the
    /// sequence rule does not converge to the base coefficients.
    pub l1_trend_ok: bool,
}

impl ConvergenceTable {
    fn from_rows(rows: Vec<ConvergenceRow>) -> Self {
        let l1_trend_ok = rows.windows(2).all(|w| w[1].l1_mean <= w[0].l1_mean);
        Self { rows, l1_trend_ok }
    }

    pub fn l1_strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].l1_mean < w[0].l1_mean)
    }

    pub fn exceedance_strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].qv_exceed_prob < w[0].qv_exceed_prob)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "n,L1_mean,L1_se,qv_exceed_prob,qv_se")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{}", r.n, r.l1_mean, r.l1_se, r.qv_exceed_prob, r.qv_se)?;
        }
        Ok(())
    }
}

/// One path's view of one sequence member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemberSample {
    /// `|Dⁿ_τ - D_τ|`
    pub abs_diff: f64,
    /// `[Dⁿ - D]_τ`
    pub qv_stopped: f64,
    /// `[Dⁿ - D]_T`
    pub qv_terminal: f64,
}

/// First grid index with `|Dⁿ - D| ≥ k`, or the last one.
fn stopping_index(dn: &[f64], d: &[f64], level: Extended) -> usize {
    match level {
        Extended::PosInfinity => d.len() - 1,
        Extended::Finite(k) => (0..d.len()).find(|&i| (dn[i] - d[i]).abs() >= k).unwrap_or(d.len() - 1),
    }
}

fn samples_on_path(
    experiment: &ConvergenceExperiment,
    path: &LevyPath,
    level: Extended,
) -> Result<Vec<MemberSample>, DensityError> {
    let base = stochastic_exponential(path, &experiment.base)?;
    experiment
        .members
        .iter()
        .map(|(_, theta)| {
            let dn = stochastic_exponential(path, theta)?;
            let qv = quadratic_variation_process(&dn, &base, theta, &experiment.base, path)?;
            let tau = stopping_index(&dn.grid_values, &base.grid_values, level);
            Ok(MemberSample {
                abs_diff: (dn.grid_values[tau] - base.grid_values[tau]).abs(),
                qv_stopped: qv[tau],
                qv_terminal: *qv.last().expect("nonempty"),
            })
        })
        .collect()
}

/// Per path, per member samples with QV stopped at the first grid time where
/// `|Dⁿ - D| ≥ level` (jumps inside a grid interval are booked at its right end).
pub fn path_samples(
    experiment: &ConvergenceExperiment,
    triplet: &LevyTriplet,
    horizon: f64,
    steps: usize,
    level: Extended,
) -> Result<Vec<Vec<MemberSample>>, ConvergenceError> {
    if let Extended::Finite(k) = level {
        if k.is_nan() || k <= 0.0 {
            return Err(ConvergenceError::BadStoppingLevel(level));
        }
    }
    let per_path = map_paths(triplet, horizon, steps, experiment.n_paths, experiment.rng, |p| {
        samples_on_path(experiment, &p, level)
    })?;
    Ok(per_path.into_iter().collect::<Result<Vec<_>, _>>()?)
}

fn tabulate(experiment: &ConvergenceExperiment, samples: &[Vec<MemberSample>]) -> ConvergenceTable {
    let rows = experiment
        .members
        .iter()
        .enumerate()
        .map(|(j, (n, _))| {
            let l1: Vec<f64> = samples.iter().map(|s| s[j].abs_diff).collect();
            let l1 = Estimate::from_samples(&l1);
            let hits = samples.iter().filter(|s| s[j].qv_stopped > experiment.epsilon).count();
            let prob = Estimate::proportion(hits, samples.len());
            ConvergenceRow { n: *n, l1_mean: l1.mean, l1_se: l1.se, qv_exceed_prob: prob.mean, qv_se: prob.se }
        })
        .collect();
    ConvergenceTable::from_rows(rows)
}

/// Estimates `E|D_Tⁿ - D_T|` and `P([Dⁿ - D]_T > ε)` for each `n` on common paths.
pub fn run_convergence(
    experiment: &ConvergenceExperiment,
    triplet: &LevyTriplet,
    horizon: f64,
    steps: usize,
) -> Result<ConvergenceTable, ConvergenceError> {
    stopped_variant(experiment, triplet, horizon, steps, Extended::PosInfinity)
}

/// As [`run_convergence`] with both columns evaluated at `τ ∧ T`, where
/// `τ` is the first grid time with `|Dⁿ - D| ≥ level`. `level = +∞` never stops.
pub fn stopped_variant(
    experiment: &ConvergenceExperiment,
    triplet: &LevyTriplet,
    horizon: f64,
    steps: usize,
    level: Extended,
) -> Result<ConvergenceTable, ConvergenceError> {
    let samples = path_samples(experiment, triplet, horizon, steps, level)?;
    Ok(tabulate(experiment, &samples))
}
