//! Five-parameter baseline: amplitude and background iterated alongside the
//! shape, as a conventional Gaussian-plus-background fit would.
//!
//! Uses the same damping schedule and stop rules as [`crate::lm::fit_single`].
//! Sigma is free in sign; only its magnitude is clamped.

use crate::error::{Error, Result};
use crate::image::{PixelGrid, SpotView};
use crate::lm::{
    check_image, limit, normalized_chi2_from, run_lm, FitConfig, FitResult, FitTrace, LmProblem,
    NormalSystem, ParameterBounds, Point,
};
use crate::model::{profile_with_gradient_into, Amplitudes, ShapeParams};

/// Solves the damped 5x5 system by elimination with partial pivoting.
pub fn solve_step5(sys: &NormalSystem<5>, lambda: f64) -> Result<[f64; 5]> {
    if (0..5).any(|j| !(sys.jtj[j][j] > 0.0)) {
        return Err(Error::StepFailed);
    }
    let mut a = sys.damped(lambda);
    let mut b = sys.rhs;
    let scale = (0..5).map(|j| a[j][j]).fold(0.0f64, f64::max);
    for col in 0..5 {
        let pivot = (col..5)
            .max_by(|&i, &k| a[i][col].abs().total_cmp(&a[k][col].abs()))
            .unwrap_or(col);
        if !(a[pivot][col].abs() > 1e-12 * scale) {
            return Err(Error::StepFailed);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..5 {
            let factor = a[row][col] / a[col][col];
            for k in col..5 {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0; 5];
    for row in (0..5).rev() {
        let tail: f64 = (row + 1..5).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Ok(x)
}

/// Clamps the center like [`limit`] and the magnitude of sigma, keeping its sign.
pub fn limit5(p: [f32; 5], bounds: &ParameterBounds, grid: PixelGrid) -> [f32; 5] {
    let sign = if p[2] < 0.0 { -1.0 } else { 1.0 };
    let shape = limit(ShapeParams::new(p[0], p[1], p[2].abs()), bounds, grid);
    [shape.x, shape.y, sign * shape.sigma, p[3], p[4]]
}

struct Explicit5<'a> {
    image: SpotView<'a>,
    bounds: ParameterBounds,
    f: Vec<f32>,
    df: Vec<[f32; 3]>,
}

impl LmProblem<5> for Explicit5<'_> {
    fn evaluate(&mut self, p: &[f32; 5], with_system: bool) -> Option<Point<5>> {
        let grid = self.image.grid();
        let shape = ShapeParams::new(p[0], p[1], p[2]);
        profile_with_gradient_into(shape, grid, &mut self.f, &mut self.df);
        let (alpha, beta) = (p[3], p[4]);
        let mut chi2 = 0.0f64;
        let mut sys = NormalSystem::<5>::default();
        for ((&g, &fi), dfi) in self.image.values().iter().zip(&self.f).zip(&self.df) {
            let r = g - (alpha * fi + beta);
            chi2 += (r as f64) * (r as f64);
            if with_system {
                let d = [
                    (alpha * dfi[0]) as f64,
                    (alpha * dfi[1]) as f64,
                    (alpha * dfi[2]) as f64,
                    fi as f64,
                    1.0,
                ];
                let r = r as f64;
                for j in 0..5 {
                    sys.rhs[j] += r * d[j];
                    for k in j..5 {
                        sys.jtj[j][k] += d[j] * d[k];
                    }
                }
            }
        }
        sys.symmetrize();
        Some(Point { chi2, system: sys })
    }

    fn limit(&self, p: [f64; 5]) -> [f32; 5] {
        limit5(p.map(|v| v as f32), &self.bounds, self.image.grid())
    }

    fn solve(&self, sys: &NormalSystem<5>, lambda: f64) -> Result<[f64; 5]> {
        solve_step5(sys, lambda)
    }
}

/// Fits shape, amplitude and background as five explicit parameters.
pub fn fit_explicit5(
    image: SpotView<'_>,
    init: ShapeParams,
    init_amps: Amplitudes,
    cfg: &FitConfig,
) -> Result<FitResult> {
    fit_explicit5_impl(image, init, init_amps, cfg, None)
}

pub fn fit_explicit5_traced(
    image: SpotView<'_>,
    init: ShapeParams,
    init_amps: Amplitudes,
    cfg: &FitConfig,
) -> Result<(FitResult, FitTrace<5>)> {
    let mut trace = FitTrace::default();
    let res = fit_explicit5_impl(image, init, init_amps, cfg, Some(&mut trace))?;
    Ok((res, trace))
}

fn fit_explicit5_impl(
    image: SpotView<'_>,
    init: ShapeParams,
    init_amps: Amplitudes,
    cfg: &FitConfig,
    trace: Option<&mut FitTrace<5>>,
) -> Result<FitResult> {
    check_image(image, cfg)?;
    let start = [init.x, init.y, init.sigma, init_amps.alpha, init_amps.beta];
    if start.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "non-finite initial parameters {init:?} {init_amps:?}"
        )));
    }
    let n = image.grid().len();
    let mut problem = Explicit5 {
        image,
        bounds: cfg.bounds,
        f: vec![0.0; n],
        df: vec![[0.0; 3]; n],
    };
    let out = run_lm(&mut problem, start, cfg, trace);
    let p = out.params;
    let chi2 = problem.evaluate(&p, false).map_or(f64::NAN, |pt| pt.chi2);
    Ok(FitResult {
        shape: ShapeParams::new(p[0], p[1], p[2]),
        amps: Amplitudes::new(p[3], p[4]),
        stop: out.stop,
        iterations_used: out.iterations,
        normalized_chi2: normalized_chi2_from(chi2, n) as f32,
        no_improvement: out.no_improvement,
        invalid_input: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::SpotImage;
    use crate::lm::StopReason;
    use crate::model::profile;

    #[test]
    fn solve5_diagonal() {
        let mut sys = NormalSystem::<5>::default();
        for j in 0..5 {
            sys.jtj[j][j] = (j + 1) as f64;
            sys.rhs[j] = (j + 1) as f64;
        }
        assert_eq!(solve_step5(&sys, 0.0).unwrap(), [1.0; 5]);
        assert_eq!(solve_step5(&sys, 1.0).unwrap(), [0.5; 5]);
    }

    #[test]
    fn solve5_needs_pivoting() {
        // Leading entry small relative to the column below it.
        let jtj = [
            [1e-3, 1.0, 0.0, 0.0, 0.0],
            [1.0, 2.0, 0.5, 0.0, 0.0],
            [0.0, 0.5, 3.0, 0.1, 0.0],
            [0.0, 0.0, 0.1, 4.0, 0.2],
            [0.0, 0.0, 0.0, 0.2, 5.0],
        ];
        let x_true = [1.0, -2.0, 0.5, 3.0, -1.0];
        let rhs = std::array::from_fn(|i| (0..5).map(|k| jtj[i][k] * x_true[k]).sum());
        let x = solve_step5(&NormalSystem { jtj, rhs }, 0.0).unwrap();
        for k in 0..5 {
            assert!((x[k] - x_true[k]).abs() < 1e-9, "{x:?}");
        }
    }

    #[test]
    fn limit5_keeps_sigma_sign() {
        let grid = PixelGrid::square(9).unwrap();
        let b = ParameterBounds::default();
        assert_eq!(limit5([4.0, 4.0, -1.5, 10.0, -2.0], &b, grid), [4.0, 4.0, -1.5, 10.0, -2.0]);
        assert_eq!(limit5([4.0, 4.0, -0.1, 1.0, 1.0], &b, grid)[2], -0.3);
        assert_eq!(limit5([4.0, 4.0, 0.0, 1.0, 1.0], &b, grid)[2], 0.3);
        assert_eq!(limit5([40.0, 4.0, 1.0, 1.0, 1.0], &b, grid)[0], 12.5);
    }

    #[test]
    fn exact_fit_stops_on_first_iteration() {
        let grid = PixelGrid::square(9).unwrap();
        let truth = ShapeParams::new(4.3, 3.8, 1.5);
        let g: Vec<f32> = profile(truth, grid).iter().map(|f| 28.0 * f + 0.5).collect();
        let img = SpotImage::new(grid, g).unwrap();
        let res = fit_explicit5(img.view(), truth, Amplitudes::new(28.0, 0.5), &FitConfig::default()).unwrap();
        assert_eq!(res.stop, StopReason::MinDelta);
        assert_eq!(res.iterations_used, 1);
    }

    #[test]
    fn noiseless_spot_converges() {
        let grid = PixelGrid::square(9).unwrap();
        let truth = ShapeParams::new(4.3, 3.8, 1.5);
        let g: Vec<f32> = profile(truth, grid).iter().map(|f| 28.0 * f + 0.5).collect();
        let img = SpotImage::new(grid, g).unwrap();
        let res = fit_explicit5(
            img.view(),
            ShapeParams::new(4.0, 4.0, 1.2),
            Amplitudes::new(15.0, 1.0),
            &FitConfig::default(),
        )
        .unwrap();
        assert!(matches!(res.stop, StopReason::MinDelta | StopReason::MinStep), "{res:?}");
        assert!((res.shape.x - truth.x).abs() < 1e-3, "{res:?}");
        assert!((res.shape.y - truth.y).abs() < 1e-3, "{res:?}");
        assert!((res.shape.sigma.abs() - truth.sigma).abs() < 1e-3, "{res:?}");
    }
}
