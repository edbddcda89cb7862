//! Synthetic spots with known ground truth.
//!
//! Every image draws from its own ChaCha stream selected by `(seed, index)`,
//! so any index can be regenerated alone and batches can be produced in
//! parallel without changing the output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{PixelGrid, SpotBatch, SpotImage};
use crate::model::{Amplitudes, ShapeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Width and height of the square image.
    pub size: usize,
    pub count: usize,
    /// Integrated counts under the Gaussian.
    pub n_signal: f64,
    /// Background counts summed over the whole image.
    pub n_background: f64,
    pub sigma_range: (f64, f64),
    /// Standard deviation of the center around the image middle; `None` means `size / 20`.
    pub center_spread: Option<f64>,
    /// Add normal noise with variance equal to each pixel's expected value.
    pub noise: bool,
    /// Round to non-negative integers. Turning this off together with `noise`
    /// yields exact model intensities.
    pub quantize: bool,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            size: 9,
            count: 1,
            n_signal: 400.0,
            n_background: 40.0,
            sigma_range: (1.0, 2.0),
            center_spread: None,
            noise: true,
            quantize: true,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn grid(&self) -> Result<PixelGrid> {
        PixelGrid::square(self.size)
    }

    pub fn spread(&self) -> f64 {
        self.center_spread.unwrap_or(self.size as f64 / 20.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 4 {
            return Err(Error::InvalidConfig(format!("image size {} is below 4", self.size)));
        }
        self.grid()?;
        if !(self.n_signal >= 0.0) || !(self.n_background >= 0.0) {
            return Err(Error::InvalidConfig("signal and background counts must be >= 0".into()));
        }
        let (lo, hi) = self.sigma_range;
        if !(lo > 0.0 && hi >= lo && hi <= self.size as f64) {
            return Err(Error::InvalidConfig(format!("sigma range [{lo}, {hi}] is not valid")));
        }
        if !(self.spread() >= 0.0 && self.spread().is_finite()) {
            return Err(Error::InvalidConfig("center spread must be >= 0".into()));
        }
        Ok(())
    }
}

/// Ground truth for one simulated image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub index: u64,
    pub shape: ShapeParams,
    pub amps: Amplitudes,
}

/// Noise-free intensities `alpha * f_i + beta`, in double precision.
pub fn render_spot(grid: PixelGrid, shape: ShapeParams, amps: Amplitudes) -> Vec<f64> {
    let (x, y, s) = (shape.x as f64, shape.y as f64, shape.sigma as f64);
    (0..grid.len())
        .map(|i| {
            let (xi, yi) = grid.coords(i);
            let r2 = (xi as f64 - x).powi(2) + (yi as f64 - y).powi(2);
            amps.alpha as f64 * (-r2 / (2.0 * s * s)).exp() + amps.beta as f64
        })
        .collect()
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws the ground truth for `index`.
pub fn draw_truth(cfg: &SimConfig, index: u64) -> TruthRecord {
    let mut rng = stream(cfg.seed, index);
    truth_from(cfg, index, &mut rng)
}

fn truth_from(cfg: &SimConfig, index: u64, rng: &mut ChaCha8Rng) -> TruthRecord {
    let center = (cfg.size as f64 - 1.0) / 2.0;
    let spread = cfg.spread();
    let dx: f64 = rng.sample(StandardNormal);
    let dy: f64 = rng.sample(StandardNormal);
    let (lo, hi) = cfg.sigma_range;
    let sigma = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let shape = ShapeParams::new(
        (center + spread * dx) as f32,
        (center + spread * dy) as f32,
        sigma as f32,
    );
    let sigma = shape.sigma as f64;
    let amps = Amplitudes::new(
        (cfg.n_signal / (2.0 * std::f64::consts::PI * sigma * sigma)) as f32,
        (cfg.n_background / (cfg.size * cfg.size) as f64) as f32,
    );
    TruthRecord { index, shape, amps }
}

/// Generates image `index` and its ground truth.
pub fn simulate_spot(cfg: &SimConfig, index: u64) -> Result<(SpotImage, TruthRecord)> {
    let grid = cfg.grid()?;
    let mut rng = stream(cfg.seed, index);
    let truth = truth_from(cfg, index, &mut rng);
    let clean = render_spot(grid, truth.shape, truth.amps);
    let values = clean
        .into_iter()
        .map(|mean| {
            let mut v = mean;
            if cfg.noise {
                let z: f64 = StandardNormal.sample(&mut rng);
                v += mean.max(0.0).sqrt() * z;
            }
            if cfg.quantize {
                // f64::round rounds half away from zero
                v = v.round().max(0.0);
            }
            v as f32
        })
        .collect();
    Ok((SpotImage::new(grid, values)?, truth))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimBatch {
    pub images: SpotBatch,
    pub truths: Vec<TruthRecord>,
}

/// [`simulate_spot`] for indices `0..count`, generated in parallel, in index order.
pub fn simulate_batch(cfg: &SimConfig) -> Result<SimBatch> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let spots: Vec<(SpotImage, TruthRecord)> = (0..cfg.count as u64)
        .into_par_iter()
        .map(|i| simulate_spot(cfg, i))
        .collect::<Result<_>>()?;
    let mut pixels = Vec::with_capacity(cfg.count * grid.len());
    let mut truths = Vec::with_capacity(cfg.count);
    for (img, truth) in spots {
        pixels.extend_from_slice(img.values());
        truths.push(truth);
    }
    Ok(SimBatch {
        images: SpotBatch::new(grid, pixels)?,
        truths,
    })
}
