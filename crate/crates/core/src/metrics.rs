//! Compression ratios and reconstruction fidelity.

use std::fmt;

use crate::error::{Error, Result};
use crate::superframe::{Normalizer, SuperFrame};

/// Bits charged per super-frame cell when sizing an uncompressed frame.
pub const FRAME_BITS_PER_CELL: u64 = 16;

/// Uncompressed event bits over compressed bitstream bits.
pub fn e2e_cr(raw_bits: u64, compressed_bits: u64) -> Result<f64> {
    if compressed_bits == 0 {
        return Err(Error::InvalidArgument("compressed size is zero".into()));
    }
    Ok(raw_bits as f64 / compressed_bits as f64)
}

/// Uncompressed super-frame bits over coded latent payload bits.
pub fn io_cr(input_frame_bits: u64, output_bits: u64) -> Result<f64> {
    if output_bits == 0 {
        return Err(Error::InvalidArgument("coded payload size is zero".into()));
    }
    Ok(input_frame_bits as f64 / output_bits as f64)
}

/// Bits of the given frames at `FRAME_BITS_PER_CELL` bits per count cell.
pub fn frame_bits(frames: &[SuperFrame]) -> u64 {
    frames.iter().map(|f| f.counts().len() as u64).sum::<u64>() * FRAME_BITS_PER_CELL
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    /// The two signals are identical.
    Identical,
    Db(f64),
}

impl Psnr {
    pub fn db(self) -> Option<f64> {
        match self {
            Psnr::Identical => None,
            Psnr::Db(v) => Some(v),
        }
    }

    pub fn from_mse(mse: f64, peak: f64) -> Psnr {
        if mse == 0.0 {
            Psnr::Identical
        } else {
            Psnr::Db(10.0 * (peak * peak / mse).log10())
        }
    }

    /// Strictly above `threshold`, counting identical signals as passing.
    pub fn exceeds(self, threshold: f64) -> bool {
        self.db().is_none_or(|v| v > threshold)
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Identical => f.write_str("inf"),
            Psnr::Db(v) => write!(f, "{v:.4}"),
        }
    }
}

pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} samples", a.len(), b.len())));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// `10 log10(peak² / MSE)` over two equally sized signals.
pub fn psnr(original: &[f64], reconstructed: &[f64], peak: f64) -> Result<Psnr> {
    if !(peak > 0.0) {
        return Err(Error::InvalidArgument(format!("peak {peak} must be positive")));
    }
    Ok(Psnr::from_mse(mse(original, reconstructed)?, peak))
}

/// Global and per-frame PSNR of normalized super-frames (peak 1.0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FramePsnr {
    /// PSNR of the MSE pooled over every cell of every frame.
    pub global: Psnr,
    /// Mean of the finite per-frame PSNR values; `None` when every frame is
    /// reproduced exactly.
    pub per_frame_mean: Option<f64>,
}

pub fn psnr_frames(
    original: &[SuperFrame],
    reconstructed: &[SuperFrame],
    norm: &Normalizer,
) -> Result<FramePsnr> {
    if original.len() != reconstructed.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} original frames vs {} reconstructed",
            original.len(),
            reconstructed.len()
        )));
    }
    let mut sq_sum = 0.0;
    let mut cells = 0usize;
    let mut finite = Vec::new();
    for (a, b) in original.iter().zip(reconstructed) {
        if a.geometry() != b.geometry() {
            return Err(Error::DimensionMismatch(format!(
                "frame {} geometry {} vs {}",
                a.window.index,
                a.geometry(),
                b.geometry()
            )));
        }
        let (x, y) = (a.normalized(norm), b.normalized(norm));
        let m = mse(&x, &y)?;
        sq_sum += m * x.len() as f64;
        cells += x.len();
        if let Psnr::Db(v) = Psnr::from_mse(m, 1.0) {
            finite.push(v);
        }
    }
    let global = Psnr::from_mse(if cells == 0 { 0.0 } else { sq_sum / cells as f64 }, 1.0);
    let per_frame_mean = (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64);
    Ok(FramePsnr {
        global,
        per_frame_mean,
    })
}

/// One evaluation row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub dt: f64,
    pub event_count: u64,
    pub frame_count: u64,
    pub raw_bits: u64,
    pub compressed_bits: u64,
    pub frame_bits: u64,
    pub payload_bits: u64,
    pub e2e_cr: Option<f64>,
    pub io_cr: Option<f64>,
    pub psnr: Psnr,
    pub psnr_frame_mean: Option<f64>,
    /// Reported alongside, never folded into `compressed_bits`.
    pub model_bits: u64,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "na".to_string(), |x| format!("{x:.4}"))
}

impl MetricsReport {
    pub const COLUMNS: [&'static str; 12] = [
        "dt_ms",
        "events",
        "frames",
        "raw_bits",
        "compressed_bits",
        "frame_bits",
        "payload_bits",
        "e2e_cr",
        "io_cr",
        "psnr_db",
        "psnr_frame_mean_db",
        "model_bits",
    ];

    fn values(&self) -> [String; 12] {
        [
            format!("{}", self.dt * 1e3),
            self.event_count.to_string(),
            self.frame_count.to_string(),
            self.raw_bits.to_string(),
            self.compressed_bits.to_string(),
            self.frame_bits.to_string(),
            self.payload_bits.to_string(),
            opt(self.e2e_cr),
            opt(self.io_cr),
            self.psnr.to_string(),
            opt(self.psnr_frame_mean),
            self.model_bits.to_string(),
        ]
    }

    /// Single `key=value` line.
    pub fn to_record(&self) -> String {
        Self::COLUMNS
            .iter()
            .zip(self.values())
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Tab-separated table with a header row.
    pub fn table(rows: &[MetricsReport]) -> String {
        let mut out = Self::COLUMNS.join("\t");
        out.push('\n');
        for r in rows {
            out.push_str(&r.values().join("\t"));
            out.push('\n');
        }
        out
    }
}
