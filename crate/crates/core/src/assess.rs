//! Accuracy and iteration statistics against ground truth.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{FitResult, StopReason};
use crate::sim::TruthRecord;

/// Median, mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    /// All zero for an empty sample.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 0 {
            0.5 * (sorted[mid - 1] + sorted[mid])
        } else {
            sorted[mid]
        };
        Self {
            median,
            mean,
            std: var.sqrt(),
        }
    }
}

/// Absolute errors of one fit in units of the true sigma.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitErrors {
    pub index: u64,
    pub x: f64,
    pub y: f64,
    /// `| |sigma_fit| - sigma_true |`
    pub sigma: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AccuracyStats {
    /// x and y errors pooled into one sample.
    pub position: Summary,
    pub sigma: Summary,
    pub fits_used: u64,
    /// Fits that did not converge, left out of the statistics.
    pub fits_excluded: u64,
}

fn check_aligned(results: &[FitResult], truths: &[TruthRecord]) -> Result<()> {
    if results.len() != truths.len() {
        return Err(Error::MismatchedLengths {
            left: results.len(),
            right: truths.len(),
        });
    }
    Ok(())
}

/// Per-fit scaled errors, aligned by position.
pub fn fit_errors(results: &[FitResult], truths: &[TruthRecord]) -> Result<Vec<FitErrors>> {
    check_aligned(results, truths)?;
    Ok(results
        .iter()
        .zip(truths)
        .map(|(r, t)| {
            let s = t.shape.sigma as f64;
            FitErrors {
                index: t.index,
                x: (r.shape.x as f64 - t.shape.x as f64).abs() / s,
                y: (r.shape.y as f64 - t.shape.y as f64).abs() / s,
                sigma: ((r.shape.sigma as f64).abs() - s).abs() / s,
                converged: r.stop.is_converged() && !r.invalid_input,
            }
        })
        .collect())
}

pub fn accuracy(results: &[FitResult], truths: &[TruthRecord]) -> Result<AccuracyStats> {
    let errors = fit_errors(results, truths)?;
    let mut position = Vec::with_capacity(2 * errors.len());
    let mut sigma = Vec::with_capacity(errors.len());
    for e in errors.iter().filter(|e| e.converged) {
        position.push(e.x);
        position.push(e.y);
        sigma.push(e.sigma);
    }
    Ok(AccuracyStats {
        position: Summary::of(&position),
        sigma: Summary::of(&sigma),
        fits_used: sigma.len() as u64,
        fits_excluded: (errors.len() - sigma.len()) as u64,
    })
}

/// Mean position error relative to the background-free shot-noise limit
/// `1 / sqrt(n_signal)` (both in units of sigma).
pub fn expected_error_ratio(stats: &AccuracyStats, n_signal: f64) -> f64 {
    stats.position.mean * n_signal.sqrt()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IterationHistogram {
    /// `bins[k]` counts fits that used `k` iterations.
    pub bins: Vec<u64>,
    pub stops: BTreeMap<StopReason, u64>,
    /// Fits whose last iteration found no decrease at all (reported as `MinDelta`).
    pub no_improvement: u64,
}

impl IterationHistogram {
    pub fn total(&self) -> u64 {
        self.bins.iter().sum()
    }

    /// Most frequent iteration count; the smallest one on ties.
    pub fn mode(&self) -> Option<usize> {
        let max = *self.bins.iter().max()?;
        if max == 0 {
            return None;
        }
        self.bins.iter().position(|&c| c == max)
    }

    pub fn mean(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let s: u64 = self.bins.iter().enumerate().map(|(k, &c)| k as u64 * c).sum();
        s as f64 / total as f64
    }

    /// Fraction of fits with at most `k` iterations, for each `k`.
    pub fn cdf(&self) -> Vec<f64> {
        let total = self.total().max(1) as f64;
        let mut acc = 0;
        self.bins
            .iter()
            .map(|&c| {
                acc += c;
                acc as f64 / total
            })
            .collect()
    }

    pub fn stop_fraction(&self, reason: StopReason) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.stops.get(&reason).copied().unwrap_or(0) as f64 / total as f64
    }

    pub fn no_improvement_fraction(&self) -> f64 {
        self.no_improvement as f64 / self.total().max(1) as f64
    }
}

pub fn iteration_stats(results: &[FitResult], max_iterations: u32) -> IterationHistogram {
    let mut hist = IterationHistogram {
        bins: vec![0; max_iterations as usize + 1],
        stops: StopReason::ALL.into_iter().map(|r| (r, 0)).collect(),
        no_improvement: 0,
    };
    for r in results {
        let k = r.iterations_used as usize;
        if k >= hist.bins.len() {
            hist.bins.resize(k + 1, 0);
        }
        hist.bins[k] += 1;
        *hist.stops.entry(r.stop).or_default() += 1;
        hist.no_improvement += r.no_improvement as u64;
    }
    hist
}
