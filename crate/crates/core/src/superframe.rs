//! Time aggregation of events into polarity-separated super-frames, and
//! tiling of super-frames into fixed-size normalized blocks.
//!
//! A super-frame has `height` rows and `2 * width` columns: the polarity-0
//! count frame occupies the left half and the polarity-1 frame the right.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::event_io::{EventStream, Polarity, SensorGeometry};

/// Side length of the square blocks fed to the autoencoder.
pub const BLOCK_SIDE: usize = 30;
/// Number of cells in one block.
pub const BLOCK_LEN: usize = BLOCK_SIDE * BLOCK_SIDE;

/// Position of an aggregation window on the time axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub index: usize,
    /// Seconds.
    pub t_start: f64,
    /// Seconds.
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuperFrame {
    pub window: Window,
    geometry: SensorGeometry,
    counts: Vec<u32>,
}

impl SuperFrame {
    pub fn zeros(window: Window, geometry: SensorGeometry) -> Self {
        let len = geometry.height as usize * 2 * geometry.width as usize;
        SuperFrame {
            window,
            geometry,
            counts: vec![0; len],
        }
    }

    /// Builds a frame from row-major counts of shape `height x 2*width`.
    pub fn from_counts(window: Window, geometry: SensorGeometry, counts: Vec<u32>) -> Result<Self> {
        let expected = geometry.height as usize * 2 * geometry.width as usize;
        if counts.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "super-frame for {geometry} needs {expected} cells, got {}",
                counts.len()
            )));
        }
        Ok(SuperFrame {
            window,
            geometry,
            counts,
        })
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn rows(&self) -> usize {
        self.geometry.height as usize
    }

    pub fn cols(&self) -> usize {
        2 * self.geometry.width as usize
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.counts[row * self.cols() + col]
    }

    fn cell_mut(&mut self, row: usize, col: usize) -> &mut u32 {
        let cols = self.cols();
        &mut self.counts[row * cols + col]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn max_count(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// Sum of the polarity-0 (left) half.
    pub fn off_total(&self) -> u64 {
        self.half_total(0)
    }

    /// Sum of the polarity-1 (right) half.
    pub fn on_total(&self) -> u64 {
        self.half_total(self.geometry.width as usize)
    }

    fn half_total(&self, col0: usize) -> u64 {
        let w = self.geometry.width as usize;
        self.counts
            .chunks(self.cols())
            .flat_map(|row| &row[col0..col0 + w])
            .map(|&c| u64::from(c))
            .sum()
    }

    /// Cell values mapped through `norm`, row-major.
    pub fn normalized(&self, norm: &Normalizer) -> Vec<f64> {
        self.counts.iter().map(|&c| norm.apply(c)).collect()
    }
}

fn to_nanos(seconds: f64) -> i128 {
    (seconds * 1e9).round() as i128
}

/// Accumulates events into consecutive windows `[t0 + k*dt, t0 + (k+1)*dt)`
/// anchored at the first event. Window membership is computed on timestamps
/// rounded to nanoseconds so that decimal boundaries are exact. Empty windows
/// between events are emitted as zero frames; the final partial window is kept.
pub fn aggregate(stream: &EventStream, dt: f64) -> Result<Vec<SuperFrame>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("aggregation window {dt} s must be > 0")));
    }
    let dt_ns = to_nanos(dt).max(1);
    let geometry = stream.geometry();
    let events = stream.events();
    let Some(first) = events.first() else {
        return Ok(Vec::new());
    };
    let t0 = first.t;
    let t0_ns = to_nanos(t0);
    let window_of = |t: f64| ((to_nanos(t) - t0_ns) / dt_ns) as usize;
    let n_windows = window_of(events[events.len() - 1].t) + 1;

    let mut frames: Vec<SuperFrame> = (0..n_windows)
        .map(|k| {
            let window = Window {
                index: k,
                t_start: t0 + k as f64 * dt,
                dt,
            };
            SuperFrame::zeros(window, geometry)
        })
        .collect();

    let w = geometry.width as usize;
    for e in events {
        let col = match e.p {
            Polarity::Off => e.x as usize,
            Polarity::On => w + e.x as usize,
        };
        *frames[window_of(e.t)].cell_mut(e.y as usize, col) += 1;
    }
    Ok(frames)
}

/// Maps counts to `[0, 1]` by `min(count, scale) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    scale: f64,
}

impl Normalizer {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale >= 1.0) {
            return Err(Error::InvalidArgument(format!("normalizer scale {scale} must be >= 1")));
        }
        Ok(Normalizer { scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn apply(&self, count: u32) -> f64 {
        f64::from(count).min(self.scale) / self.scale
    }

    /// Inverse mapping, rounding to the nearest count.
    pub fn invert(&self, value: f64) -> u32 {
        (value * self.scale).round().max(0.0) as u32
    }
}

/// Scale is the largest count over all frames, floored at 1.
pub fn fit_normalizer(frames: &[SuperFrame]) -> Result<Normalizer> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("cannot fit a normalizer to zero frames".into()));
    }
    let max = frames.iter().map(SuperFrame::max_count).max().unwrap_or(0);
    Normalizer::new(f64::from(max.max(1)))
}

/// One `BLOCK_SIDE x BLOCK_SIDE` tile of a normalized super-frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub frame_index: usize,
    pub origin_row: usize,
    pub origin_col: usize,
    /// Row-major, `BLOCK_LEN` values in `[0, 1]`.
    pub values: Vec<f64>,
}

/// Number of block rows and block columns covering a super-frame of the
/// given sensor after zero-padding to multiples of `BLOCK_SIDE`.
pub fn block_grid(geometry: SensorGeometry) -> (usize, usize) {
    let rows = (geometry.height as usize).div_ceil(BLOCK_SIDE);
    let cols = (2 * geometry.width as usize).div_ceil(BLOCK_SIDE);
    (rows, cols)
}

/// Tiles the zero-padded frame into blocks in raster order.
pub fn to_blocks(frame: &SuperFrame, norm: &Normalizer) -> Vec<Block> {
    let (grid_rows, grid_cols) = block_grid(frame.geometry);
    let (rows, cols) = (frame.rows(), frame.cols());
    let mut blocks = Vec::with_capacity(grid_rows * grid_cols);
    for br in 0..grid_rows {
        for bc in 0..grid_cols {
            let (r0, c0) = (br * BLOCK_SIDE, bc * BLOCK_SIDE);
            let mut values = vec![0.0; BLOCK_LEN];
            for r in r0..(r0 + BLOCK_SIDE).min(rows) {
                for c in c0..(c0 + BLOCK_SIDE).min(cols) {
                    values[(r - r0) * BLOCK_SIDE + (c - c0)] = norm.apply(frame.get(r, c));
                }
            }
            blocks.push(Block {
                frame_index: frame.window.index,
                origin_row: r0,
                origin_col: c0,
                values,
            });
        }
    }
    blocks
}

/// Reassembles a super-frame from blocks covering the padded grid exactly once.
/// Counts are `round(value * scale)`; padding is dropped.
pub fn from_blocks(
    blocks: &[Block],
    window: Window,
    geometry: SensorGeometry,
    norm: &Normalizer,
) -> Result<SuperFrame> {
    let (grid_rows, grid_cols) = block_grid(geometry);
    let mut frame = SuperFrame::zeros(window, geometry);
    let (rows, cols) = (frame.rows(), frame.cols());
    let mut seen = HashSet::with_capacity(blocks.len());

    for b in blocks {
        if b.origin_row % BLOCK_SIDE != 0
            || b.origin_col % BLOCK_SIDE != 0
            || b.origin_row / BLOCK_SIDE >= grid_rows
            || b.origin_col / BLOCK_SIDE >= grid_cols
        {
            return Err(Error::BlockCoverage(format!(
                "origin ({}, {}) is not a block position in the {grid_rows}x{grid_cols} grid",
                b.origin_row, b.origin_col
            )));
        }
        if b.values.len() != BLOCK_LEN {
            return Err(Error::DimensionMismatch(format!(
                "block has {} values, expected {BLOCK_LEN}",
                b.values.len()
            )));
        }
        if !seen.insert((b.origin_row, b.origin_col)) {
            return Err(Error::BlockCoverage(format!(
                "duplicate block origin ({}, {})",
                b.origin_row, b.origin_col
            )));
        }
        for r in b.origin_row..(b.origin_row + BLOCK_SIDE).min(rows) {
            for c in b.origin_col..(b.origin_col + BLOCK_SIDE).min(cols) {
                let v = b.values[(r - b.origin_row) * BLOCK_SIDE + (c - b.origin_col)];
                *frame.cell_mut(r, c) = norm.invert(v);
            }
        }
    }
    if seen.len() != grid_rows * grid_cols {
        return Err(Error::BlockCoverage(format!(
            "missing blocks: {} of {} present",
            seen.len(),
            grid_rows * grid_cols
        )));
    }
    Ok(frame)
}
