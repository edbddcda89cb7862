//! Least-squares fitting of 2D Gaussian spots.
//!
//! Amplitude and background are solved in closed form at every model
//! evaluation, which leaves a three-parameter damped Levenberg-Marquardt
//! search over center and width. The crate also ships a five-parameter
//! baseline, a spot simulator with ground truth, a parallel batch runner and
//! accuracy statistics.
//!
//! ```
//! use spotfit_core::{estimate_initial, fit_single, simulate_spot, FitConfig, SimConfig};
//!
//! let (image, truth) = simulate_spot(&SimConfig::default(), 0).unwrap();
//! let cfg = FitConfig::default();
//! let init = estimate_initial(image.view(), &cfg.bounds);
//! let fit = fit_single(image.view(), init.shape, &cfg).unwrap();
//! assert!((fit.shape.x - truth.shape.x).abs() < 1.0);
//! ```

pub mod assess;
pub mod batch;
pub mod error;
pub mod explicit;
pub mod image;
pub mod init;
pub mod lm;
pub mod model;
pub mod sim;

pub use assess::{
    accuracy, expected_error_ratio, fit_errors, iteration_stats, AccuracyStats, FitErrors,
    IterationHistogram, Summary,
};
pub use batch::{estimate_batch, fit_batch, fit_one, BatchOutput, BatchRequest, Engine};
pub use error::{Error, Result};
pub use explicit::{fit_explicit5, fit_explicit5_traced, limit5, solve_step5};
pub use image::{PixelGrid, SpotBatch, SpotImage, SpotView, MAX_PIXELS};
pub use init::{estimate_initial, smooth3x3, InitialEstimate};
pub use lm::{
    fit_single, fit_single_traced, limit, normalized_chi, normalized_chi2_from, solve_step,
    FitConfig, FitResult, FitTrace, LambdaUpdate, NormalSystem, ParameterBounds, StopReason,
};
pub use model::{
    alpha_beta, chi_gradient, chi_gradient_projected, chi_squared, coefficient_gradients,
    profile, profile_gradient, Amplitudes, ChiGradient, CoefficientGradients, Evaluation,
    GradientSums, ProfileSums, ShapeParams, Workspace,
};
pub use sim::{draw_truth, render_spot, simulate_batch, simulate_spot, SimBatch, SimConfig, TruthRecord};
