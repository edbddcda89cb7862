//! Starting values from a 3x3 moving average of the raw spot.

use serde::{Deserialize, Serialize};

use crate::image::{SpotImage, SpotView};
use crate::lm::ParameterBounds;
use crate::model::{Amplitudes, ShapeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialEstimate {
    pub shape: ShapeParams,
    /// Only the five-parameter engine uses these.
    pub amps: Amplitudes,
}

/// 3x3 moving average. Border pixels average over the in-bounds part of
/// their window.
pub fn smooth3x3(image: SpotView<'_>) -> SpotImage {
    let grid = image.grid();
    let (w, h) = (grid.width(), grid.height());
    let g = image.values();
    let mut out = Vec::with_capacity(g.len());
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let mut sum = 0.0f64;
            for yy in y0..=y1 {
                sum += g[yy * w + x0..=yy * w + x1].iter().map(|&v| v as f64).sum::<f64>();
            }
            let count = ((y1 - y0 + 1) * (x1 - x0 + 1)) as f64;
            out.push((sum / count) as f32);
        }
    }
    SpotImage::from_parts_unchecked(grid, out)
}

/// Peak of the smoothed image for the center, its minimum for the background,
/// and `sigma = sqrt(M / pi)` where `M` counts raw pixels above
/// `alpha * exp(-1/2) + beta`.
pub fn estimate_initial(image: SpotView<'_>, bounds: &ParameterBounds) -> InitialEstimate {
    let grid = image.grid();
    let smoothed = smooth3x3(image);
    let s = smoothed.values();

    // First occurrence wins ties.
    let (mut argmax, mut max, mut min) = (0usize, s[0], s[0]);
    for (i, &v) in s.iter().enumerate().skip(1) {
        if v > max {
            max = v;
            argmax = i;
        }
        if v < min {
            min = v;
        }
    }
    let beta = min;
    let alpha = max - beta;
    let threshold = alpha * (-0.5f32).exp() + beta;
    let m = image.values().iter().filter(|&&v| v > threshold).count();
    let sigma = bounds.clamp_sigma((m as f32 / std::f32::consts::PI).sqrt(), grid);
    let (x, y) = grid.coords(argmax);

    InitialEstimate {
        shape: ShapeParams::new(x, y, sigma),
        amps: Amplitudes::new(alpha, beta),
    }
}
