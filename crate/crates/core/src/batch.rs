//! Many independent fits over a worker pool, collected in input order.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explicit::fit_explicit5;
use crate::image::{SpotBatch, SpotView};
use crate::init::{estimate_initial, InitialEstimate};
use crate::lm::{fit_single, FitConfig, FitResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Engine {
    /// Three shape parameters with closed-form amplitude and background.
    #[default]
    Implicit3,
    /// Five explicit parameters.
    Explicit5,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Implicit3 => "implicit3",
            Engine::Explicit5 => "explicit5",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "implicit3" => Ok(Engine::Implicit3),
            "explicit5" => Ok(Engine::Explicit5),
            other => Err(Error::InvalidConfig(format!("unknown engine `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BatchRequest<'a> {
    pub images: &'a SpotBatch,
    /// Estimated from each image when absent.
    pub inits: Option<&'a [InitialEstimate]>,
    pub config: FitConfig,
    pub engine: Engine,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
}

impl<'a> BatchRequest<'a> {
    pub fn new(images: &'a SpotBatch) -> Self {
        Self {
            images,
            inits: None,
            config: FitConfig::default(),
            engine: Engine::Implicit3,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub results: Vec<FitResult>,
    /// Wall time of fitting and result collection.
    pub elapsed: Duration,
}

impl BatchOutput {
    pub fn fits_per_second(&self) -> f64 {
        self.results.len() as f64 / self.elapsed.as_secs_f64()
    }
}

/// Runs one fit with the given engine. Invalid images produce a flagged
/// `NotConverged` result instead of an error.
pub fn fit_one(
    image: SpotView<'_>,
    init: Option<&InitialEstimate>,
    config: &FitConfig,
    engine: Engine,
) -> FitResult {
    if image.check_finite().is_err() {
        return FitResult::invalid();
    }
    let est = match init {
        Some(est) => *est,
        None => estimate_initial(image, &config.bounds),
    };
    let res = match engine {
        Engine::Implicit3 => fit_single(image, est.shape, config),
        Engine::Explicit5 => fit_explicit5(image, est.shape, est.amps, config),
    };
    res.unwrap_or_else(|_| FitResult::invalid())
}

pub fn fit_batch(req: &BatchRequest<'_>) -> Result<BatchOutput> {
    let n = req.images.len();
    if let Some(inits) = req.inits {
        if inits.len() != n {
            return Err(Error::MismatchedLengths {
                left: n,
                right: inits.len(),
            });
        }
    }
    req.config.validate()?;
    req.config.bounds.validate(req.images.grid())?;

    let run = || {
        let threads = rayon::current_num_threads().max(1);
        // Contiguous chunks keep each worker on neighboring images.
        let chunk = n.div_ceil(threads * 4).max(1);
        let start = Instant::now();
        let results: Vec<FitResult> = (0..n)
            .into_par_iter()
            .with_min_len(chunk)
            .map(|i| {
                let init = req.inits.map(|v| &v[i]);
                fit_one(req.images.get(i), init, &req.config, req.engine)
            })
            .collect();
        BatchOutput {
            results,
            elapsed: start.elapsed(),
        }
    };

    if req.workers == 0 {
        Ok(run())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(req.workers)
            .build()
            .map_err(|e| Error::WorkerPool(e.to_string()))?;
        Ok(pool.install(run))
    }
}

/// Initial estimates for every image, in order.
pub fn estimate_batch(images: &SpotBatch, config: &FitConfig) -> Vec<InitialEstimate> {
    (0..images.len())
        .into_par_iter()
        .map(|i| estimate_initial(images.get(i), &config.bounds))
        .collect()
}
