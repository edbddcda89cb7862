//! Command-line frontend: simulate spot batches, fit them, score fits against
//! ground truth and measure throughput.
//!
//! Exit codes: 0 success, 2 invalid arguments, 3 I/O failure, 4 malformed
//! input file.

pub mod error;
pub mod params;
pub mod spb1;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use spotfit_bench::{run_bench, BenchPlan};
use spotfit_core::{
    accuracy, expected_error_ratio, fit_batch, iteration_stats, AccuracyStats, BatchRequest,
    Engine, FitConfig, FitResult, SimConfig, StopReason,
};

pub use error::{CliError, FormatError};
use params::FitRecord;

#[derive(Debug, Parser)]
#[command(name = "spotfit", version, about = "Batch least-squares fitting of 2D Gaussian spots")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate noisy spots with known parameters.
    Simulate(SimulateArgs),
    /// Fit every image of an SPB1 file.
    Fit(FitArgs),
    /// Compare fits with ground truth.
    Assess(AssessArgs),
    /// Measure fitting throughput over image and batch sizes.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Width and height of each image, 4 to 32.
    #[arg(long, default_value_t = 9)]
    pub size: usize,
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    /// Integrated signal counts.
    #[arg(long, default_value_t = 400.0)]
    pub signal: f64,
    /// Background counts summed over the image.
    #[arg(long, default_value_t = 40.0)]
    pub background: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_min: f64,
    #[arg(long, default_value_t = 2.0)]
    pub sigma_max: f64,
    /// Standard deviation of the spot center around the image middle [default: size/20].
    #[arg(long)]
    pub center_spread: Option<f64>,
    /// Write expected intensities without noise.
    #[arg(long)]
    pub no_noise: bool,
    /// Keep fractional intensities instead of rounding to counts.
    #[arg(long)]
    pub no_round: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// SPB1 output.
    #[arg(long)]
    pub out: PathBuf,
    /// Ground-truth CSV output.
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// SPB1 input.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// CSV output.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "implicit3", value_parser = parse_engine)]
    pub engine: Engine,
    #[arg(long, default_value_t = 20)]
    pub max_iter: u32,
    #[arg(long, default_value_t = 1e-6)]
    pub min_delta: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub min_step: f64,
    /// Stop once the squared error drops below this value, in squared counts; 0 disables.
    #[arg(long, default_value_t = 0.0)]
    pub max_error: f64,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// `auto` or a CSV of starting values with the truth layout.
    #[arg(long, default_value = "auto")]
    pub inits: String,
}

#[derive(Debug, Args)]
pub struct AssessArgs {
    /// Fit CSV.
    #[arg(long)]
    pub fits: PathBuf,
    /// Ground-truth CSV.
    #[arg(long)]
    pub truth: PathBuf,
    /// JSON output; standard output when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Signal counts of the simulation, for the shot-noise ratio.
    #[arg(long)]
    pub signal: Option<f64>,
    /// Iteration budget used for the fits, sizing the histogram.
    #[arg(long, default_value_t = 20)]
    pub max_iter: u32,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Image sizes, e.g. `4-32` or `9,16,25`.
    #[arg(long, default_value = "4-32", value_parser = parse_list)]
    pub sizes: List,
    #[arg(long, default_value = "10,100,1000,10000", value_parser = parse_list)]
    pub batches: List,
    /// Timed calls per batch size [default: 200,20,10,1 for the default batches].
    #[arg(long, value_parser = parse_list)]
    pub repeats: Option<List>,
    #[arg(long, default_value = "implicit3", value_parser = parse_engine)]
    pub engine: Engine,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long, default_value_t = 2020)]
    pub seed: u64,
    /// JSON output; standard output when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also write the entries as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn parse_engine(s: &str) -> Result<Engine, String> {
    s.parse().map_err(|e: spotfit_core::Error| e.to_string())
}

/// A list argument such as `4-32` or `9,16,25`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct List(pub Vec<usize>);

/// Comma-separated values, each a number or an inclusive `a-b` range.
pub fn parse_list(s: &str) -> Result<List, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim) {
        let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(format!("empty range `{part}`"));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    Ok(List(out))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Fit(a) => fit(&a),
        Command::Assess(a) => assess(&a),
        Command::Bench(a) => bench(&a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::from(e).in_file(path))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::from(e).in_file(path))
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let cfg = SimConfig {
        size: a.size,
        count: a.count,
        n_signal: a.signal,
        n_background: a.background,
        sigma_range: (a.sigma_min, a.sigma_max),
        center_spread: a.center_spread,
        noise: !a.no_noise,
        quantize: !a.no_round,
        seed: a.seed,
    };
    let sim = spotfit_core::simulate_batch(&cfg)?;
    spb1::write(create(&a.out)?, &sim.images).map_err(|e| e.in_file(&a.out))?;
    params::write_truth(create(&a.truth)?, &sim.truths).map_err(|e| e.in_file(&a.truth))?;
    Ok(())
}

pub fn fit(a: &FitArgs) -> Result<(), CliError> {
    let config = FitConfig {
        max_iterations: a.max_iter,
        max_error: a.max_error,
        min_delta: a.min_delta,
        min_step: a.min_step,
        ..FitConfig::default()
    };
    config.validate()?;
    let images = spb1::read(open(&a.input)?).map_err(|e| e.in_file(&a.input))?;
    let inits = match a.inits.as_str() {
        "auto" => None,
        path => {
            let path = Path::new(path);
            let inits = params::read_inits(open(path)?).map_err(|e| e.in_file(path))?;
            if inits.len() != images.len() {
                return Err(CliError::Usage(format!(
                    "{} initial estimates for {} images",
                    inits.len(),
                    images.len()
                )));
            }
            Some(inits)
        }
    };
    let out = fit_batch(&BatchRequest {
        images: &images,
        inits: inits.as_deref(),
        config,
        engine: a.engine,
        workers: a.workers,
    })?;
    let records: Vec<FitRecord> = out
        .results
        .iter()
        .enumerate()
        .map(|(i, &result)| FitRecord {
            index: i as u64,
            result,
        })
        .collect();
    params::write_fits(create(&a.out)?, &records).map_err(|e| e.in_file(&a.out))?;
    eprintln!(
        "{}: {} fits in {:.3} s, {:.0} fits/s",
        a.engine,
        records.len(),
        out.elapsed.as_secs_f64(),
        if records.is_empty() { 0.0 } else { out.fits_per_second() }
    );
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct IterationReport {
    pub bins: Vec<u64>,
    pub cdf: Vec<f64>,
    pub mean: f64,
    pub mode: Option<usize>,
    pub stops: BTreeMap<StopReason, u64>,
}

#[derive(Debug, Serialize)]
pub struct AssessReport {
    pub count: usize,
    pub accuracy: AccuracyStats,
    /// Mean position error times `sqrt(signal)`; present when `--signal` is given.
    pub expected_error_ratio: Option<f64>,
    pub iterations: IterationReport,
}

pub fn assess_records(
    fits: &[FitRecord],
    truths: &[spotfit_core::TruthRecord],
    signal: Option<f64>,
    max_iter: u32,
) -> Result<AssessReport, CliError> {
    if fits.len() != truths.len() || fits.iter().zip(truths).any(|(f, t)| f.index != t.index) {
        return Err(CliError::Usage(format!(
            "fit and truth tables cover different indices ({} vs {} rows)",
            fits.len(),
            truths.len()
        )));
    }
    let results: Vec<FitResult> = fits.iter().map(|f| f.result).collect();
    let stats = accuracy(&results, truths)?;
    let hist = iteration_stats(&results, max_iter);
    Ok(AssessReport {
        count: results.len(),
        accuracy: stats,
        expected_error_ratio: signal.map(|s| expected_error_ratio(&stats, s)),
        iterations: IterationReport {
            cdf: hist.cdf(),
            mean: hist.mean(),
            mode: hist.mode(),
            bins: hist.bins,
            stops: hist.stops,
        },
    })
}

pub fn assess(a: &AssessArgs) -> Result<(), CliError> {
    let fits = params::read_fits(open(&a.fits)?).map_err(|e| e.in_file(&a.fits))?;
    let truths = params::read_truth(open(&a.truth)?).map_err(|e| e.in_file(&a.truth))?;
    let report = assess_records(&fits, &truths, a.signal, a.max_iter)?;
    emit_json(&report, a.report.as_deref())
}

pub fn bench(a: &BenchArgs) -> Result<(), CliError> {
    let defaults = BenchPlan::default();
    let repeats = match &a.repeats {
        Some(r) => r.0.clone(),
        None if a.batches.0 == defaults.batch_sizes => defaults.repeats.clone(),
        None => BenchPlan::repeats_for(&a.batches.0),
    };
    let plan = BenchPlan {
        sizes: a.sizes.0.clone(),
        batch_sizes: a.batches.0.clone(),
        repeats,
        engine: a.engine,
        workers: a.workers,
        seed: a.seed,
        ..defaults
    };
    let report = run_bench(&plan)?;
    if let Some(path) = &a.csv {
        let mut w = create(path)?;
        w.write_all(report.to_csv().as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| CliError::from(e).in_file(path))?;
    }
    emit_json(&report, a.report.as_deref())
}

/// Pretty JSON with object keys in lexical order.
pub fn to_sorted_json<T: Serialize>(value: &T) -> String {
    // serde_json's default map is ordered, so a round trip through Value sorts keys.
    let value = serde_json::to_value(value).expect("report types serialize to JSON");
    let mut text = serde_json::to_string_pretty(&value).expect("JSON values render");
    text.push('\n');
    text
}

fn emit_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<(), CliError> {
    let text = to_sorted_json(value);
    match path {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(text.as_bytes())
                .and_then(|_| w.flush())
                .map_err(|e| CliError::from(e).in_file(path))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_syntax() {
        assert_eq!(parse_list("9").unwrap().0, vec![9]);
        assert_eq!(parse_list("9, 16,25").unwrap().0, vec![9, 16, 25]);
        assert_eq!(parse_list("4-32").unwrap().0.len(), 29);
        assert_eq!(parse_list("4-6,10").unwrap().0, vec![4, 5, 6, 10]);
        assert!(parse_list("6-4").is_err());
        assert!(parse_list("x").is_err());
    }

    #[test]
    fn json_keys_are_sorted() {
        #[derive(Serialize)]
        struct S {
            zeta: u8,
            alpha: u8,
            mid: BTreeMap<&'static str, u8>,
        }
        let text = to_sorted_json(&S {
            zeta: 1,
            alpha: 2,
            mid: BTreeMap::new(),
        });
        let (a, m, z) = (text.find("alpha"), text.find("mid"), text.find("zeta"));
        assert!(a < m && m < z, "{text}");
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
