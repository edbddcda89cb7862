//! SPB1 batch container: a 14-byte little-endian header followed by raw f32
//! pixels.
//!
//! | offset | type | field   |
//! |--------|------|---------|
//! | 0      | [u8; 4] | magic `SPB1` |
//! | 4      | u16  | version (1) |
//! | 6      | u16  | width   |
//! | 8      | u16  | height  |
//! | 10     | u32  | count   |
//! | 14     | f32 × count·width·height | pixels, image-major, row-major |

use std::io::{Read, Write};

use spotfit_core::{PixelGrid, SpotBatch};

use crate::error::{CliError, FormatError};

pub const MAGIC: [u8; 4] = *b"SPB1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub width: u16,
    pub height: u16,
    pub count: u32,
}

impl Header {
    pub fn payload_len(&self) -> u64 {
        4 * self.count as u64 * self.width as u64 * self.height as u64
    }

    pub fn encode(&self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[0..4].copy_from_slice(&MAGIC);
        out[4..6].copy_from_slice(&VERSION.to_le_bytes());
        out[6..8].copy_from_slice(&self.width.to_le_bytes());
        out[8..10].copy_from_slice(&self.height.to_le_bytes());
        out[10..14].copy_from_slice(&self.count.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        if bytes.len() < HEADER_LEN {
            return Err(FormatError::new(
                bytes.len() as u64,
                format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len()),
            ));
        }
        if bytes[0..4] != MAGIC {
            return Err(FormatError::new(0, format!("bad magic {:?}", &bytes[0..4])));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let version = u16_at(4);
        if version != VERSION {
            return Err(FormatError::new(4, format!("unsupported version {version}")));
        }
        let (width, height) = (u16_at(6), u16_at(8));
        if PixelGrid::new(width as usize, height as usize).is_err() {
            return Err(FormatError::new(
                6,
                format!("grid {width}x{height} is empty or exceeds 1024 pixels"),
            ));
        }
        let count = u32::from_le_bytes([bytes[10], bytes[11], bytes[12], bytes[13]]);
        Ok(Self {
            width,
            height,
            count,
        })
    }
}

pub fn encode(batch: &SpotBatch) -> Result<Vec<u8>, CliError> {
    let grid = batch.grid();
    let count = u32::try_from(batch.len())
        .map_err(|_| CliError::Usage(format!("{} images do not fit in an SPB1 file", batch.len())))?;
    let header = Header {
        width: grid.width() as u16,
        height: grid.height() as u16,
        count,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * batch.pixels().len());
    out.extend_from_slice(&header.encode());
    for v in batch.pixels() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<SpotBatch, FormatError> {
    let header = Header::decode(bytes)?;
    let payload = &bytes[HEADER_LEN..];
    let expected = header.payload_len();
    if (payload.len() as u64) < expected {
        return Err(FormatError::new(
            bytes.len() as u64,
            format!(
                "truncated payload: {} of {expected} bytes for {} images",
                payload.len(),
                header.count
            ),
        ));
    }
    if payload.len() as u64 > expected {
        return Err(FormatError::new(
            HEADER_LEN as u64 + expected,
            format!("{} trailing bytes after the last image", payload.len() as u64 - expected),
        ));
    }
    let grid = PixelGrid::new(header.width as usize, header.height as usize)
        .map_err(|e| FormatError::new(6, e.to_string()))?;
    let pixels = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    SpotBatch::new(grid, pixels).map_err(|e| FormatError::new(HEADER_LEN as u64, e.to_string()))
}

pub fn write<W: Write>(mut w: W, batch: &SpotBatch) -> Result<(), CliError> {
    w.write_all(&encode(batch)?)?;
    w.flush()?;
    Ok(())
}

pub fn read<R: Read>(mut r: R) -> Result<SpotBatch, CliError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    Ok(decode(&bytes)?)
}
