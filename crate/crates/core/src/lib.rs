//! Lossy compression of dynamic vision sensor event streams.
//!
//! Events are aggregated into polarity-separated super-frames, cut into
//! 30x30 blocks, reduced to a short linear code by a deep autoencoder built
//! from stacked RBMs, quantized to integers and Huffman-coded. The decoder
//! mirrors every step to reconstruct super-frames.

mod bytes;

pub mod baseline;
pub mod codec;
pub mod config;
pub mod dbn;
pub mod entropy;
pub mod error;
pub mod event_io;
pub mod metrics;
pub mod superframe;
pub mod synth;

pub use error::{Error, Result};
pub use event_io::{parse_events, raw_size_bits, Event, EventStream, Polarity, SensorGeometry};
