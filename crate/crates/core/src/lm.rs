//! Scale-invariant damped Levenberg-Marquardt over the shape parameters.
//!
//! Each outer iteration evaluates the squared error and normal system at the
//! current point, solves `(J^T J + lambda diag(J^T J)) delta = J^T r` with
//! `r = g - h`, and tries `limit(best + delta)`. A failed trial raises the
//! damping and retries from `best` until the error drops, the step becomes
//! negligible, or the damping reaches its ceiling.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{PixelGrid, SpotView};
use crate::model::{Amplitudes, ShapeParams, Workspace};

/// Damped Gauss-Newton system of dimension `D`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalSystem<const D: usize = 3> {
    /// `J^T J`, symmetric positive semi-definite.
    pub jtj: [[f64; D]; D],
    /// `J^T r` with `r = g - h`.
    pub rhs: [f64; D],
}

impl<const D: usize> Default for NormalSystem<D> {
    fn default() -> Self {
        Self {
            jtj: [[0.0; D]; D],
            rhs: [0.0; D],
        }
    }
}

impl<const D: usize> NormalSystem<D> {
    /// Mirrors the upper triangle into the lower one.
    pub fn symmetrize(&mut self) {
        for j in 0..D {
            for k in 0..j {
                self.jtj[j][k] = self.jtj[k][j];
            }
        }
    }

    /// `J^T J + lambda diag(J^T J)`.
    pub fn damped(&self, lambda: f64) -> [[f64; D]; D] {
        let mut a = self.jtj;
        for (j, row) in a.iter_mut().enumerate() {
            row[j] *= 1.0 + lambda;
        }
        a
    }
}

/// Clamp ranges for the shape parameters. `None` picks a default from the grid:
/// a margin of half the larger grid extent and `sigma_max` equal to that extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterBounds {
    pub margin: Option<f32>,
    pub sigma_min: f32,
    pub sigma_max: Option<f32>,
}

impl Default for ParameterBounds {
    fn default() -> Self {
        Self {
            margin: None,
            sigma_min: 0.3,
            sigma_max: None,
        }
    }
}

impl ParameterBounds {
    pub fn margin_for(&self, grid: PixelGrid) -> f32 {
        self.margin.unwrap_or(grid.extent() as f32 / 2.0)
    }

    pub fn sigma_max_for(&self, grid: PixelGrid) -> f32 {
        self.sigma_max.unwrap_or(grid.extent() as f32)
    }

    pub fn x_range(&self, grid: PixelGrid) -> (f32, f32) {
        let m = self.margin_for(grid);
        (-m, grid.width() as f32 - 1.0 + m)
    }

    pub fn y_range(&self, grid: PixelGrid) -> (f32, f32) {
        let m = self.margin_for(grid);
        (-m, grid.height() as f32 - 1.0 + m)
    }

    pub fn validate(&self, grid: PixelGrid) -> Result<()> {
        let smax = self.sigma_max_for(grid);
        if !(self.sigma_min > 0.0) || !(smax > self.sigma_min) {
            return Err(Error::InvalidConfig(format!(
                "sigma bounds must satisfy 0 < min < max, got [{}, {smax}]",
                self.sigma_min
            )));
        }
        if !(self.margin_for(grid) >= 0.0) {
            return Err(Error::InvalidConfig("margin must be >= 0".into()));
        }
        Ok(())
    }

    /// Clamps `v` to the sigma range, mapping NaN to `sigma_min`.
    pub fn clamp_sigma(&self, v: f32, grid: PixelGrid) -> f32 {
        if v.is_nan() {
            return self.sigma_min;
        }
        v.clamp(self.sigma_min, self.sigma_max_for(grid))
    }

    pub fn contains(&self, p: ShapeParams, grid: PixelGrid) -> bool {
        let (x0, x1) = self.x_range(grid);
        let (y0, y1) = self.y_range(grid);
        (x0..=x1).contains(&p.x)
            && (y0..=y1).contains(&p.y)
            && (self.sigma_min..=self.sigma_max_for(grid)).contains(&p.sigma)
    }
}

/// Clamps the center to the grid plus margin and sigma to its range.
pub fn limit(p: ShapeParams, bounds: &ParameterBounds, grid: PixelGrid) -> ShapeParams {
    let (x0, x1) = bounds.x_range(grid);
    let (y0, y1) = bounds.y_range(grid);
    ShapeParams {
        x: clamp_nan(p.x, x0, x1),
        y: clamp_nan(p.y, y0, y1),
        sigma: bounds.clamp_sigma(p.sigma, grid),
    }
}

// NaN passes through so the caller's non-finite checks still see it.
fn clamp_nan(v: f32, lo: f32, hi: f32) -> f32 {
    if v.is_nan() {
        v
    } else {
        v.clamp(lo, hi)
    }
}

/// Damping schedule and stop thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iterations: u32,
    /// Stop once the squared error falls below this; 0 disables the test.
    pub max_error: f64,
    /// Stop when one iteration improves the squared error by less than this fraction.
    pub min_delta: f64,
    /// Stop when every parameter moves by less than this fraction of its value.
    pub min_step: f64,
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub lambda_max: f64,
    pub bounds: ParameterBounds,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            max_error: 0.0,
            min_delta: 1e-6,
            min_step: 1e-4,
            lambda_init: 0.01,
            lambda_up: 10.0,
            lambda_down: 10.0,
            lambda_max: 1e4,
            bounds: ParameterBounds::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("min_delta", self.min_delta),
            ("min_step", self.min_step),
            ("lambda_init", self.lambda_init),
            ("lambda_up", self.lambda_up),
            ("lambda_down", self.lambda_down),
            ("lambda_max", self.lambda_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.max_error >= 0.0) {
            return Err(Error::InvalidConfig("max_error must be >= 0".into()));
        }
        if !(self.lambda_init < self.lambda_max) {
            return Err(Error::InvalidConfig("lambda_init must be below lambda_max".into()));
        }
        Ok(())
    }

    fn below_lambda_max(&self, lambda: f64) -> bool {
        // Repeated multiplication drifts by a few ulps around powers of ten.
        lambda < self.lambda_max * (1.0 - 1e-9)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StopReason {
    MaxError,
    MinDelta,
    MinStep,
    NotConverged,
    MaxIterations,
}

impl StopReason {
    pub const ALL: [StopReason; 5] = [
        StopReason::MaxError,
        StopReason::MinDelta,
        StopReason::MinStep,
        StopReason::NotConverged,
        StopReason::MaxIterations,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StopReason::MaxError => "MaxError",
            StopReason::MinDelta => "MinDelta",
            StopReason::MinStep => "MinStep",
            StopReason::NotConverged => "NotConverged",
            StopReason::MaxIterations => "MaxIterations",
        }
    }

    pub fn is_converged(self) -> bool {
        self != StopReason::NotConverged
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StopReason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StopReason::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown stop reason `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub shape: ShapeParams,
    pub amps: Amplitudes,
    pub stop: StopReason,
    pub iterations_used: u32,
    /// Squared error over the degrees of freedom, see [`normalized_chi`].
    pub normalized_chi2: f32,
    /// The terminating iteration found no decrease of the squared error at all.
    pub no_improvement: bool,
    /// The image was rejected before fitting (non-finite pixels or bad grid).
    pub invalid_input: bool,
}

impl FitResult {
    /// Placeholder result for an image rejected before fitting.
    pub fn invalid() -> Self {
        Self {
            shape: ShapeParams::new(f32::NAN, f32::NAN, f32::NAN),
            amps: Amplitudes::new(f32::NAN, f32::NAN),
            stop: StopReason::NotConverged,
            iterations_used: 0,
            normalized_chi2: f32::NAN,
            no_improvement: false,
            invalid_input: true,
        }
    }
}

/// Solves the damped 3x3 system by cofactor inversion.
pub fn solve_step(sys: &NormalSystem<3>, lambda: f64) -> Result<[f64; 3]> {
    if (0..3).any(|j| !(sys.jtj[j][j] > 0.0)) {
        return Err(Error::StepFailed);
    }
    let a = sys.damped(lambda);
    let c00 = a[1][1] * a[2][2] - a[1][2] * a[2][1];
    let c01 = a[1][2] * a[2][0] - a[1][0] * a[2][2];
    let c02 = a[1][0] * a[2][1] - a[1][1] * a[2][0];
    let det = a[0][0] * c00 + a[0][1] * c01 + a[0][2] * c02;
    let scale = a[0][0] * a[1][1] * a[2][2];
    if !(det.abs() > 1e-12 * scale) {
        return Err(Error::StepFailed);
    }
    let c10 = a[0][2] * a[2][1] - a[0][1] * a[2][2];
    let c11 = a[0][0] * a[2][2] - a[0][2] * a[2][0];
    let c12 = a[0][1] * a[2][0] - a[0][0] * a[2][1];
    let c20 = a[0][1] * a[1][2] - a[0][2] * a[1][1];
    let c21 = a[0][2] * a[1][0] - a[0][0] * a[1][2];
    let c22 = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let b = sys.rhs;
    // inverse = adjugate / det, adjugate = cofactor^T
    Ok([
        (c00 * b[0] + c10 * b[1] + c20 * b[2]) / det,
        (c01 * b[0] + c11 * b[1] + c21 * b[2]) / det,
        (c02 * b[0] + c12 * b[1] + c22 * b[2]) / det,
    ])
}

/// `chi2 / (N - 5)`, or `chi2` when there are five pixels or fewer.
pub fn normalized_chi2_from(chi2: f64, n: usize) -> f64 {
    if n > 5 {
        chi2 / (n - 5) as f64
    } else {
        chi2
    }
}

/// Residual sum of squares of `model` against `image` over its degrees of
/// freedom (three shape plus two amplitude parameters).
pub fn normalized_chi(image: SpotView<'_>, model: &[f32]) -> f64 {
    let chi2: f64 = image
        .values()
        .iter()
        .zip(model)
        .map(|(&g, &h)| ((g - h) as f64).powi(2))
        .sum();
    normalized_chi2_from(chi2, image.values().len())
}

/// How a damping update came about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaUpdate {
    Accepted,
    Rejected,
}

/// Record of one fit's internal path, for diagnostics and tests.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitTrace<const D: usize = 3> {
    /// Every parameter vector the model was evaluated at, in order.
    pub evaluated: Vec<[f32; D]>,
    /// Squared error at the start of each outer iteration.
    pub iteration_chi2: Vec<f64>,
    /// `(kind, lambda before, lambda after)`.
    pub lambda_updates: Vec<(LambdaUpdate, f64, f64)>,
}

/// One point of a least-squares problem as seen by the driver.
pub(crate) struct Point<const D: usize> {
    pub chi2: f64,
    pub system: NormalSystem<D>,
}

/// The model-specific half of a fit.
pub(crate) trait LmProblem<const D: usize> {
    /// `None` when the model is undefined at `p` (e.g. a constant profile).
    fn evaluate(&mut self, p: &[f32; D], with_system: bool) -> Option<Point<D>>;
    fn limit(&self, p: [f64; D]) -> [f32; D];
    fn solve(&self, sys: &NormalSystem<D>, lambda: f64) -> Result<[f64; D]>;
}

pub(crate) struct LmOutcome<const D: usize> {
    pub params: [f32; D],
    pub stop: StopReason,
    pub iterations: u32,
    pub no_improvement: bool,
}

fn all_small<const D: usize>(step: &[f64; D], p: &[f32; D], min_step: f64) -> bool {
    step.iter()
        .zip(p)
        .all(|(d, &v)| d.abs() < min_step * (v.abs() as f64).max(1.0))
}

fn add<const D: usize>(p: &[f32; D], step: &[f64; D]) -> [f64; D] {
    std::array::from_fn(|j| p[j] as f64 + step[j])
}

struct Trial<const D: usize> {
    step: [f64; D],
    params: [f32; D],
    chi2: f64,
}

pub(crate) fn run_lm<P: LmProblem<D>, const D: usize>(
    problem: &mut P,
    init: [f32; D],
    cfg: &FitConfig,
    mut trace: Option<&mut FitTrace<D>>,
) -> LmOutcome<D> {
    let mut current = problem.limit(init.map(|v| v as f64));
    let mut lambda = cfg.lambda_init;
    let mut remaining = cfg.max_iterations;
    let mut iterations = 0;
    let mut stop = StopReason::MaxIterations;
    let mut no_improvement = false;

    macro_rules! record {
        ($field:ident, $v:expr) => {
            if let Some(t) = trace.as_deref_mut() {
                t.$field.push($v);
            }
        };
    }

    // Solves from `best` and evaluates the trial point. A failed solve yields
    // a zero step at the unchanged error so that the caller stops cleanly.
    let attempt = |problem: &mut P,
                       sys: &NormalSystem<D>,
                       best: &[f32; D],
                       chi: f64,
                       lambda: f64,
                       trace: &mut Option<&mut FitTrace<D>>|
     -> Trial<D> {
        match problem.solve(sys, lambda) {
            Ok(step) if step.iter().all(|v| v.is_finite()) => {
                let params = problem.limit(add(best, &step));
                if let Some(t) = trace.as_deref_mut() {
                    t.evaluated.push(params);
                }
                let chi2 = problem
                    .evaluate(&params, false)
                    .map_or(f64::INFINITY, |pt| pt.chi2);
                Trial { step, params, chi2 }
            }
            Ok(step) => Trial {
                step,
                params: *best,
                chi2: f64::NAN,
            },
            Err(_) => Trial {
                step: [0.0; D],
                params: *best,
                chi2: chi,
            },
        }
    };

    while remaining > 0 {
        remaining -= 1;
        iterations += 1;

        record!(evaluated, current);
        let point = match problem.evaluate(&current, true) {
            Some(pt) if pt.chi2.is_finite() => pt,
            _ => {
                stop = StopReason::NotConverged;
                break;
            }
        };
        let chi = point.chi2;
        record!(iteration_chi2, chi);
        if chi < cfg.max_error {
            stop = StopReason::MaxError;
            break;
        }

        let best = current;
        let mut trial = attempt(problem, &point.system, &best, chi, lambda, &mut trace);
        current = trial.params;
        if trial.chi2 < chi {
            let before = lambda;
            lambda /= cfg.lambda_down;
            record!(lambda_updates, (LambdaUpdate::Accepted, before, lambda));
        }
        while !all_small(&trial.step, &best, cfg.min_step)
            && chi < trial.chi2
            && cfg.below_lambda_max(lambda)
        {
            let before = lambda;
            lambda *= cfg.lambda_up;
            record!(lambda_updates, (LambdaUpdate::Rejected, before, lambda));
            trial = attempt(problem, &point.system, &best, chi, lambda, &mut trace);
            current = trial.params;
        }

        if trial.chi2.is_nan() {
            current = best;
            stop = StopReason::NotConverged;
            break;
        }
        if chi < trial.chi2 {
            current = best;
            if all_small(&trial.step, &best, cfg.min_step) {
                // The step vanished before any decrease was found.
                no_improvement = true;
                stop = StopReason::MinDelta;
            } else {
                stop = StopReason::NotConverged;
            }
            break;
        }
        if trial.chi2 < cfg.max_error {
            stop = StopReason::MaxError;
            break;
        }
        if trial.chi2 >= chi {
            no_improvement = true;
            stop = StopReason::MinDelta;
            break;
        }
        if chi * (1.0 - cfg.min_delta) < trial.chi2 {
            stop = StopReason::MinDelta;
            break;
        }
        if all_small(&trial.step, &best, cfg.min_step) {
            stop = StopReason::MinStep;
            break;
        }
    }

    LmOutcome {
        params: current,
        stop,
        iterations,
        no_improvement,
    }
}

struct Implicit3<'a> {
    image: SpotView<'a>,
    bounds: ParameterBounds,
    ws: Workspace,
}

impl LmProblem<3> for Implicit3<'_> {
    fn evaluate(&mut self, p: &[f32; 3], with_system: bool) -> Option<Point<3>> {
        self.ws
            .evaluate(self.image, ShapeParams::from_array(*p), with_system)
            .ok()
            .map(|e| Point {
                chi2: e.chi2,
                system: e.system,
            })
    }

    fn limit(&self, p: [f64; 3]) -> [f32; 3] {
        let p = ShapeParams::new(p[0] as f32, p[1] as f32, p[2] as f32);
        limit(p, &self.bounds, self.image.grid()).to_array()
    }

    fn solve(&self, sys: &NormalSystem<3>, lambda: f64) -> Result<[f64; 3]> {
        solve_step(sys, lambda)
    }
}

pub(crate) fn check_image(image: SpotView<'_>, cfg: &FitConfig) -> Result<()> {
    image.check_finite()?;
    cfg.validate()?;
    cfg.bounds.validate(image.grid())
}

/// Fits the three shape parameters, solving amplitude and background in
/// closed form at every evaluation.
pub fn fit_single(image: SpotView<'_>, init: ShapeParams, cfg: &FitConfig) -> Result<FitResult> {
    fit_single_impl(image, init, cfg, None)
}

/// [`fit_single`] that also returns the evaluation and damping history.
pub fn fit_single_traced(
    image: SpotView<'_>,
    init: ShapeParams,
    cfg: &FitConfig,
) -> Result<(FitResult, FitTrace<3>)> {
    let mut trace = FitTrace::default();
    let res = fit_single_impl(image, init, cfg, Some(&mut trace))?;
    Ok((res, trace))
}

fn fit_single_impl(
    image: SpotView<'_>,
    init: ShapeParams,
    cfg: &FitConfig,
    trace: Option<&mut FitTrace<3>>,
) -> Result<FitResult> {
    check_image(image, cfg)?;
    if !init.is_finite() {
        return Err(Error::InvalidConfig(format!("non-finite initial parameters {init:?}")));
    }
    let mut problem = Implicit3 {
        image,
        bounds: cfg.bounds,
        ws: Workspace::new(image.grid()),
    };
    let out = run_lm(&mut problem, init.to_array(), cfg, trace);
    let shape = ShapeParams::from_array(out.params);

    let (amps, nchi2) = match problem.ws.evaluate(image, shape, false) {
        Ok(e) => (e.amps, normalized_chi2_from(e.chi2, image.values().len())),
        Err(_) => flat_fallback(image),
    };
    Ok(FitResult {
        shape,
        amps,
        stop: out.stop,
        iterations_used: out.iterations,
        normalized_chi2: nchi2 as f32,
        no_improvement: out.no_improvement,
        invalid_input: false,
    })
}

// With a constant profile only the mean is identifiable.
fn flat_fallback(image: SpotView<'_>) -> (Amplitudes, f64) {
    let g = image.values();
    let mean = g.iter().map(|&v| v as f64).sum::<f64>() / g.len() as f64;
    let chi2: f64 = g.iter().map(|&v| (v as f64 - mean).powi(2)).sum();
    (
        Amplitudes::new(0.0, mean as f32),
        normalized_chi2_from(chi2, g.len()),
    )
}
