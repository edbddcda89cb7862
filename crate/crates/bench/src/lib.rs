//! Throughput and latency measurements over image and batch sizes.
//!
//! Simulation and initial estimation happen outside the timed region; each
//! timed call covers fitting plus collection of the results.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use spotfit_core::{
    estimate_batch, fit_batch, BatchRequest, Engine, Error, FitConfig, Result, SimConfig,
    MAX_PIXELS,
};

/// Timings below this many clock ticks are flagged as under-resolved.
pub const MIN_TICKS: u32 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchPlan {
    pub sizes: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    /// Timed calls per batch size, aligned with `batch_sizes`.
    pub repeats: Vec<usize>,
    pub engine: Engine,
    pub n_signal: f64,
    pub n_background: f64,
    pub workers: usize,
    pub seed: u64,
}

impl Default for BenchPlan {
    fn default() -> Self {
        Self {
            sizes: (4..=32).collect(),
            batch_sizes: vec![10, 100, 1_000, 10_000],
            repeats: vec![200, 20, 10, 1],
            engine: Engine::Implicit3,
            n_signal: 400.0,
            n_background: 40.0,
            workers: 0,
            seed: 2020,
        }
    }
}

impl BenchPlan {
    pub fn validate(&self) -> Result<()> {
        if let Some(&s) = self.sizes.iter().find(|&&s| s < 4 || s * s > MAX_PIXELS) {
            return Err(Error::InvalidConfig(format!("image size {s} outside 4..=32")));
        }
        if self.repeats.len() != self.batch_sizes.len() {
            return Err(Error::MismatchedLengths {
                left: self.batch_sizes.len(),
                right: self.repeats.len(),
            });
        }
        if self.batch_sizes.contains(&0) || self.repeats.contains(&0) {
            return Err(Error::InvalidConfig("batch sizes and repeats must be > 0".into()));
        }
        Ok(())
    }

    /// Default repeat counts for arbitrary batch sizes: about 2000 fits per
    /// entry, at least one call.
    pub fn repeats_for(batch_sizes: &[usize]) -> Vec<usize> {
        batch_sizes.iter().map(|&b| (2_000 / b.max(1)).max(1)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub size: usize,
    pub batch: usize,
    pub repeats: usize,
    pub mean_seconds: f64,
    pub fits_per_second: f64,
    pub pixels_per_second: f64,
    pub under_resolved: bool,
}

impl BenchEntry {
    fn new(size: usize, batch: usize, repeats: usize, mean_seconds: f64, under_resolved: bool) -> Self {
        let fits_per_second = batch as f64 / mean_seconds;
        Self {
            size,
            batch,
            repeats,
            mean_seconds,
            fits_per_second,
            pixels_per_second: fits_per_second * (size * size) as f64,
            under_resolved,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub machine: String,
    pub engine: Engine,
    pub entries: Vec<BenchEntry>,
}

impl BenchReport {
    pub fn entry(&self, size: usize, batch: usize) -> Option<&BenchEntry> {
        self.entries.iter().find(|e| e.size == size && e.batch == batch)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "size,batch,repeats,mean_seconds,fits_per_second,pixels_per_second,under_resolved\n",
        );
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.size,
                e.batch,
                e.repeats,
                e.mean_seconds,
                e.fits_per_second,
                e.pixels_per_second,
                e.under_resolved
            ));
        }
        out
    }
}

/// Short description of the host so reports are never compared across machines.
pub fn machine_descriptor() -> String {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{}-{} threads={} {}",
        std::env::consts::ARCH,
        std::env::consts::OS,
        threads,
        if cfg!(debug_assertions) { "debug" } else { "release" }
    )
}

/// Smallest observable step of the monotonic clock.
pub fn clock_tick() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..64 {
        let start = Instant::now();
        let mut now = Instant::now();
        while now == start {
            now = Instant::now();
        }
        best = best.min(now - start);
    }
    best
}

pub fn run_bench(plan: &BenchPlan) -> Result<BenchReport> {
    plan.validate()?;
    let config = FitConfig::default();
    let tick = clock_tick();
    let mut entries = Vec::with_capacity(plan.sizes.len() * plan.batch_sizes.len());

    for &size in &plan.sizes {
        for (&batch, &repeats) in plan.batch_sizes.iter().zip(&plan.repeats) {
            let sim = spotfit_core::simulate_batch(&SimConfig {
                size,
                count: batch,
                n_signal: plan.n_signal,
                n_background: plan.n_background,
                seed: plan.seed,
                ..SimConfig::default()
            })?;
            let inits = estimate_batch(&sim.images, &config);
            let req = BatchRequest {
                images: &sim.images,
                inits: Some(&inits),
                config,
                engine: plan.engine,
                workers: plan.workers,
            };
            // warm-up
            fit_batch(&req)?;
            let mut total = Duration::ZERO;
            let mut under_resolved = false;
            for _ in 0..repeats {
                let start = Instant::now();
                let out = fit_batch(&req)?;
                let dt = start.elapsed();
                std::hint::black_box(&out.results);
                under_resolved |= dt < tick * MIN_TICKS;
                total += dt;
            }
            let mean = (total.as_secs_f64() / repeats as f64).max(tick.as_secs_f64());
            entries.push(BenchEntry::new(size, batch, repeats, mean, under_resolved));
        }
    }
    Ok(BenchReport {
        machine: machine_descriptor(),
        engine: plan.engine,
        entries,
    })
}
