//! CSV tables for fit results, ground truth and initial estimates.
//!
//! Floats are written in their shortest round-trip form, so reading a file
//! back reproduces every 32-bit value exactly.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use spotfit_core::{Amplitudes, FitResult, InitialEstimate, ShapeParams, StopReason, TruthRecord};

use crate::error::CliError;

pub const FIT_HEADER: [&str; 9] = [
    "index", "x", "y", "sigma", "alpha", "beta", "status", "iterations", "nchi2",
];
pub const TRUTH_HEADER: [&str; 6] = ["index", "x", "y", "sigma", "alpha", "beta"];

#[derive(Debug, Serialize, Deserialize)]
struct FitRow {
    index: u64,
    x: f32,
    y: f32,
    sigma: f32,
    alpha: f32,
    beta: f32,
    status: StopReason,
    iterations: u32,
    nchi2: f32,
}

#[derive(Debug, Serialize, Deserialize)]
struct TruthRow {
    index: u64,
    x: f32,
    y: f32,
    sigma: f32,
    alpha: f32,
    beta: f32,
}

/// One row of a fit table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitRecord {
    pub index: u64,
    pub result: FitResult,
}

pub fn write_fits<W: Write>(w: W, records: &[FitRecord]) -> Result<(), CliError> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    // Written explicitly so an empty table still has its header.
    out.write_record(FIT_HEADER)?;
    for rec in records {
        let r = &rec.result;
        out.serialize(FitRow {
            index: rec.index,
            x: r.shape.x,
            y: r.shape.y,
            sigma: r.shape.sigma,
            alpha: r.amps.alpha,
            beta: r.amps.beta,
            status: r.stop,
            iterations: r.iterations_used,
            nchi2: r.normalized_chi2,
        })?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a fit table. The no-improvement flag is not stored and reads back as
/// false; rows with a NaN center and zero iterations are rejected inputs.
pub fn read_fits<R: Read>(r: R) -> Result<Vec<FitRecord>, CliError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut rows = reader.records();
    check_header(rows.next(), &FIT_HEADER)?;
    let mut out: Vec<FitRecord> = Vec::new();
    for rec in rows {
        let row: FitRow = rec?.deserialize(None)?;
        check_order(out.last().map(|r| r.index), row.index)?;
        let invalid_input = row.x.is_nan() && row.iterations == 0;
        out.push(FitRecord {
            index: row.index,
            result: FitResult {
                shape: ShapeParams::new(row.x, row.y, row.sigma),
                amps: Amplitudes::new(row.alpha, row.beta),
                stop: row.status,
                iterations_used: row.iterations,
                normalized_chi2: row.nchi2,
                no_improvement: false,
                invalid_input,
            },
        });
    }
    Ok(out)
}

pub fn write_truth<W: Write>(w: W, truths: &[TruthRecord]) -> Result<(), CliError> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(TRUTH_HEADER)?;
    for t in truths {
        out.serialize(TruthRow {
            index: t.index,
            x: t.shape.x,
            y: t.shape.y,
            sigma: t.shape.sigma,
            alpha: t.amps.alpha,
            beta: t.amps.beta,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_truth<R: Read>(r: R) -> Result<Vec<TruthRecord>, CliError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
    let mut rows = reader.records();
    check_header(rows.next(), &TRUTH_HEADER)?;
    let mut out: Vec<TruthRecord> = Vec::new();
    for rec in rows {
        let row: TruthRow = rec?.deserialize(None)?;
        check_order(out.last().map(|t| t.index), row.index)?;
        out.push(TruthRecord {
            index: row.index,
            shape: ShapeParams::new(row.x, row.y, row.sigma),
            amps: Amplitudes::new(row.alpha, row.beta),
        });
    }
    Ok(out)
}

/// Initial estimates share the truth layout. Row `k` must carry index `k`.
pub fn read_inits<R: Read>(r: R) -> Result<Vec<InitialEstimate>, CliError> {
    let rows = read_truth(r)?;
    rows.iter()
        .enumerate()
        .map(|(k, t)| {
            if t.index != k as u64 {
                return Err(CliError::Csv(format!("row {k} has index {}, expected {k}", t.index)));
            }
            Ok(InitialEstimate {
                shape: t.shape,
                amps: t.amps,
            })
        })
        .collect()
}

fn check_header(
    first: Option<Result<csv::StringRecord, csv::Error>>,
    expected: &[&str],
) -> Result<(), CliError> {
    let header = match first {
        Some(rec) => rec?,
        None => return Err(CliError::Csv("missing header row".into())),
    };
    if header.iter().ne(expected.iter().copied()) {
        return Err(CliError::Csv(format!(
            "header `{}` does not match `{}`",
            header.iter().collect::<Vec<_>>().join(","),
            expected.join(",")
        )));
    }
    Ok(())
}

fn check_order(prev: Option<u64>, index: u64) -> Result<(), CliError> {
    match prev {
        Some(p) if index <= p => Err(CliError::Csv(format!(
            "index {index} follows {p}; rows must be sorted by increasing index"
        ))),
        _ => Ok(()),
    }
}
