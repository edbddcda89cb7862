//! Normalized 2D Gaussian profile with closed-form amplitude and background.
//!
//! The image model is `h_i = alpha * f_i(p) + beta` where `f_i` is a unit-peak
//! Gaussian over the shape parameters `p = (x, y, sigma)`. For any `p`, the
//! linear coefficients are solved exactly, so the nonlinear search only sees
//! three parameters. Pixel math runs in `f32`; every sum over pixels is
//! accumulated in `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{PixelGrid, SpotView};
use crate::lm::NormalSystem;

/// Relative threshold on `N*FF - F^2` below which the profile counts as constant.
pub const DENOM_EPS: f64 = 1e-12;

/// Center and width of the Gaussian, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub x: f32,
    pub y: f32,
    pub sigma: f32,
}

impl ShapeParams {
    pub const fn new(x: f32, y: f32, sigma: f32) -> Self {
        Self { x, y, sigma }
    }

    pub fn to_array(self) -> [f32; 3] {
        [self.x, self.y, self.sigma]
    }

    pub fn from_array(a: [f32; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.sigma.is_finite()
    }
}

/// Signal amplitude and per-pixel background, in counts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Amplitudes {
    pub alpha: f32,
    pub beta: f32,
}

impl Amplitudes {
    pub const fn new(alpha: f32, beta: f32) -> Self {
        Self { alpha, beta }
    }
}

/// Sums over pixels that determine the optimal amplitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileSums {
    pub n: f64,
    /// `F = sum f_i`
    pub f_sum: f64,
    /// `G = sum g_i`
    pub g_sum: f64,
    /// `sum f_i^2`
    pub ff_sum: f64,
    /// `sum f_i g_i`
    pub fg_sum: f64,
    /// `N * sum f_i^2 - F^2`
    pub denom: f64,
}

impl ProfileSums {
    pub fn accumulate(f: &[f32], g: &[f32]) -> Self {
        debug_assert_eq!(f.len(), g.len());
        let (mut f_sum, mut g_sum, mut ff_sum, mut fg_sum) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for (&fi, &gi) in f.iter().zip(g) {
            let (fi, gi) = (fi as f64, gi as f64);
            f_sum += fi;
            g_sum += gi;
            ff_sum += fi * fi;
            fg_sum += fi * gi;
        }
        let n = f.len() as f64;
        // Cauchy-Schwarz guarantees this is non-negative; clip round-off.
        let denom = (n * ff_sum - f_sum * f_sum).max(0.0);
        Self {
            n,
            f_sum,
            g_sum,
            ff_sum,
            fg_sum,
            denom,
        }
    }

    pub fn is_singular(&self) -> bool {
        !(self.denom > DENOM_EPS * self.n * self.ff_sum)
    }

    /// Least-squares `(alpha, beta)` in full precision.
    pub fn solve(&self) -> Result<(f64, f64)> {
        if self.is_singular() {
            return Err(Error::SingularProfile);
        }
        let alpha = (self.n * self.fg_sum - self.f_sum * self.g_sum) / self.denom;
        let beta = (self.g_sum * self.ff_sum - self.f_sum * self.fg_sum) / self.denom;
        Ok((alpha, beta))
    }
}

/// Derivatives of the profile sums with respect to each shape parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientSums {
    /// `sum df_i/dp_j`
    pub d_f: [f64; 3],
    /// `2 sum f_i df_i/dp_j`
    pub d_ff: [f64; 3],
    /// `sum g_i df_i/dp_j`
    pub d_fg: [f64; 3],
    /// `N d_ff_j - 2 F d_f_j`
    pub gamma: [f64; 3],
}

impl GradientSums {
    pub fn accumulate(sums: &ProfileSums, f: &[f32], df: &[[f32; 3]], g: &[f32]) -> Self {
        let mut d_f = [0.0f64; 3];
        let mut d_ff = [0.0f64; 3];
        let mut d_fg = [0.0f64; 3];
        for ((&fi, dfi), &gi) in f.iter().zip(df).zip(g) {
            for j in 0..3 {
                let d = dfi[j] as f64;
                d_f[j] += d;
                d_ff[j] += fi as f64 * d;
                d_fg[j] += gi as f64 * d;
            }
        }
        let mut gamma = [0.0; 3];
        for j in 0..3 {
            d_ff[j] *= 2.0;
            gamma[j] = sums.n * d_ff[j] - 2.0 * sums.f_sum * d_f[j];
        }
        Self {
            d_f,
            d_ff,
            d_fg,
            gamma,
        }
    }
}

/// `d alpha / d p_j` and `d beta / d p_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientGradients {
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
}

/// Gradient of the squared error together with the per-pixel model derivatives
/// `d_ij = dh_i/dp_j` that make up the Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiGradient {
    pub gradient: [f64; 3],
    pub model_derivatives: Vec<[f32; 3]>,
}

/// Unit-peak Gaussian evaluated at every pixel of `grid`.
pub fn profile(p: ShapeParams, grid: PixelGrid) -> Vec<f32> {
    let mut f = vec![0.0; grid.len()];
    profile_into(p, grid, &mut f);
    f
}

pub fn profile_into(p: ShapeParams, grid: PixelGrid, out: &mut [f32]) {
    let inv_s = 1.0 / p.sigma;
    let half_inv_s2 = 0.5 * inv_s * inv_s;
    for (i, fi) in out.iter_mut().enumerate().take(grid.len()) {
        let (xi, yi) = grid.coords(i);
        let (dx, dy) = (xi - p.x, yi - p.y);
        *fi = (-(dx * dx + dy * dy) * half_inv_s2).exp();
    }
}

/// Partial derivatives `(df/dx, df/dy, df/dsigma)` at every pixel.
pub fn profile_gradient(p: ShapeParams, grid: PixelGrid) -> Vec<[f32; 3]> {
    let mut f = vec![0.0; grid.len()];
    let mut df = vec![[0.0; 3]; grid.len()];
    profile_with_gradient_into(p, grid, &mut f, &mut df);
    df
}

/// Profile and its partials from a single exponential per pixel.
pub fn profile_with_gradient_into(
    p: ShapeParams,
    grid: PixelGrid,
    f: &mut [f32],
    df: &mut [[f32; 3]],
) {
    let inv_s = 1.0 / p.sigma;
    let inv_s2 = inv_s * inv_s;
    let inv_s3 = inv_s2 * inv_s;
    for (i, (fi, dfi)) in f.iter_mut().zip(df.iter_mut()).enumerate().take(grid.len()) {
        let (xi, yi) = grid.coords(i);
        let (dx, dy) = (xi - p.x, yi - p.y);
        let r2 = dx * dx + dy * dy;
        let e = (-0.5 * r2 * inv_s2).exp();
        *fi = e;
        *dfi = [dx * inv_s2 * e, dy * inv_s2 * e, r2 * inv_s3 * e];
    }
}

/// Optimal amplitude and background for a fixed profile.
pub fn alpha_beta(f: &[f32], image: SpotView<'_>) -> Result<(Amplitudes, ProfileSums)> {
    check_len(f.len(), image.values().len())?;
    let sums = ProfileSums::accumulate(f, image.values());
    let (alpha, beta) = sums.solve()?;
    Ok((Amplitudes::new(alpha as f32, beta as f32), sums))
}

/// `sum (g_i - alpha f_i - beta)^2`.
pub fn chi_squared(image: SpotView<'_>, f: &[f32], amps: Amplitudes) -> f64 {
    image
        .values()
        .iter()
        .zip(f)
        .map(|(&g, &fi)| {
            let r = g - (amps.alpha * fi + amps.beta);
            (r as f64) * (r as f64)
        })
        .sum()
}

pub fn coefficient_gradients(
    sums: &ProfileSums,
    gsums: &GradientSums,
    amps: Amplitudes,
) -> Result<CoefficientGradients> {
    coefficient_gradients_f64(sums, gsums, amps.alpha as f64, amps.beta as f64)
}

fn coefficient_gradients_f64(
    sums: &ProfileSums,
    gs: &GradientSums,
    alpha: f64,
    beta: f64,
) -> Result<CoefficientGradients> {
    if sums.is_singular() {
        return Err(Error::SingularProfile);
    }
    let mut out = CoefficientGradients {
        alpha: [0.0; 3],
        beta: [0.0; 3],
    };
    for j in 0..3 {
        out.alpha[j] =
            (sums.n * gs.d_fg[j] - sums.g_sum * gs.d_f[j] - alpha * gs.gamma[j]) / sums.denom;
        out.beta[j] = (sums.g_sum * gs.d_ff[j]
            - sums.fg_sum * gs.d_f[j]
            - sums.f_sum * gs.d_fg[j]
            - beta * gs.gamma[j])
            / sums.denom;
    }
    Ok(out)
}

/// Full chain-rule gradient of the squared error over the shape parameters.
pub fn chi_gradient(
    image: SpotView<'_>,
    f: &[f32],
    fgrad: &[[f32; 3]],
    amps: Amplitudes,
    coeff: &CoefficientGradients,
) -> ChiGradient {
    let da = coeff.alpha.map(|v| v as f32);
    let db = coeff.beta.map(|v| v as f32);
    let mut gradient = [0.0f64; 3];
    let model_derivatives = image
        .values()
        .iter()
        .zip(f)
        .zip(fgrad)
        .map(|((&g, &fi), dfi)| {
            let r = (g - (amps.alpha * fi + amps.beta)) as f64;
            let d = model_derivative(fi, dfi, amps.alpha, &da, &db);
            for j in 0..3 {
                gradient[j] -= 2.0 * r * d[j] as f64;
            }
            d
        })
        .collect();
    ChiGradient {
        gradient,
        model_derivatives,
    }
}

/// The same gradient using the zero-residual-sum conditions of the optimal
/// amplitudes: `-2 alpha sum r_i df_i/dp_j`.
pub fn chi_gradient_projected(
    image: SpotView<'_>,
    f: &[f32],
    fgrad: &[[f32; 3]],
    amps: Amplitudes,
) -> [f64; 3] {
    let mut acc = [0.0f64; 3];
    for ((&g, &fi), dfi) in image.values().iter().zip(f).zip(fgrad) {
        let r = (g - (amps.alpha * fi + amps.beta)) as f64;
        for j in 0..3 {
            acc[j] += r * dfi[j] as f64;
        }
    }
    acc.map(|v| -2.0 * amps.alpha as f64 * v)
}

#[inline]
fn model_derivative(fi: f32, dfi: &[f32; 3], alpha: f32, da: &[f32; 3], db: &[f32; 3]) -> [f32; 3] {
    [
        da[0] * fi + alpha * dfi[0] + db[0],
        da[1] * fi + alpha * dfi[1] + db[1],
        da[2] * fi + alpha * dfi[2] + db[2],
    ]
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch {
            expected: b,
            got: a,
        });
    }
    Ok(())
}

/// Squared error, amplitudes and (optionally) the Gauss-Newton system at one point.
#[derive(Debug, Clone, Copy)]
pub struct Evaluation {
    pub chi2: f64,
    pub amps: Amplitudes,
    pub system: NormalSystem<3>,
    /// `d chi^2 / d p`; zero when the gradient was not requested.
    pub gradient: [f64; 3],
}

/// Reusable per-fit scratch buffers for model evaluation.
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    f: Vec<f32>,
    df: Vec<[f32; 3]>,
}

impl Workspace {
    pub fn new(grid: PixelGrid) -> Self {
        Self {
            f: vec![0.0; grid.len()],
            df: vec![[0.0; 3]; grid.len()],
        }
    }

    /// Profile values from the last evaluation.
    pub fn profile(&self) -> &[f32] {
        &self.f
    }

    /// Profile partials from the last evaluation that requested a gradient.
    pub fn profile_gradient(&self) -> &[[f32; 3]] {
        &self.df
    }

    fn resize(&mut self, n: usize) {
        self.f.resize(n, 0.0);
        self.df.resize(n, [0.0; 3]);
    }

    /// Evaluates the implicit-amplitude model at `p`. With `with_gradient`
    /// the profile and its partials share one exponential per pixel and the
    /// normal system `J^T J`, `J^T r` with `r = g - h` is filled in.
    pub fn evaluate(
        &mut self,
        image: SpotView<'_>,
        p: ShapeParams,
        with_gradient: bool,
    ) -> Result<Evaluation> {
        let grid = image.grid();
        let g = image.values();
        self.resize(grid.len());
        if !with_gradient {
            profile_into(p, grid, &mut self.f);
            let sums = ProfileSums::accumulate(&self.f, g);
            let (alpha, beta) = sums.solve()?;
            let amps = Amplitudes::new(alpha as f32, beta as f32);
            return Ok(Evaluation {
                chi2: chi_squared(image, &self.f, amps),
                amps,
                system: NormalSystem::default(),
                gradient: [0.0; 3],
            });
        }

        profile_with_gradient_into(p, grid, &mut self.f, &mut self.df);
        let sums = ProfileSums::accumulate(&self.f, g);
        let (alpha, beta) = sums.solve()?;
        let gsums = GradientSums::accumulate(&sums, &self.f, &self.df, g);
        let coeff = coefficient_gradients_f64(&sums, &gsums, alpha, beta)?;
        let amps = Amplitudes::new(alpha as f32, beta as f32);
        let da = coeff.alpha.map(|v| v as f32);
        let db = coeff.beta.map(|v| v as f32);

        let mut chi2 = 0.0f64;
        let mut sys = NormalSystem::<3>::default();
        for ((&gi, &fi), dfi) in g.iter().zip(&self.f).zip(&self.df) {
            let r = gi - (amps.alpha * fi + amps.beta);
            chi2 += (r as f64) * (r as f64);
            let d = model_derivative(fi, dfi, amps.alpha, &da, &db).map(|v| v as f64);
            let r = r as f64;
            for j in 0..3 {
                sys.rhs[j] += r * d[j];
                for k in j..3 {
                    sys.jtj[j][k] += d[j] * d[k];
                }
            }
        }
        sys.symmetrize();
        let gradient = sys.rhs.map(|v| -2.0 * v);
        Ok(Evaluation {
            chi2,
            amps,
            system: sys,
            gradient,
        })
    }
}
