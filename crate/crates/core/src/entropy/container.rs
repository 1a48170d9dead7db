//! Compressed latent-stream container.
//!
//! Little-endian, in this order:
//!
//! | field                 | type                                   |
//! |-----------------------|----------------------------------------|
//! | magic                 | `b"EVCMP"`                             |
//! | version               | u8 (= 1)                               |
//! | sensor width, height  | u32, u32                               |
//! | first window start    | f64 seconds                            |
//! | window length `dt`    | f64 seconds                            |
//! | frame count           | u32                                    |
//! | block grid rows, cols | u32, u32                               |
//! | code dimension        | u16                                    |
//! | normalizer scale      | f64                                    |
//! | quantization scale    | f64                                    |
//! | symbol count          | u64                                    |
//! | table entries `n`     | u32                                    |
//! | table                 | `n` x (symbol i64, code length u8)     |
//! | pad bits              | u8                                     |
//! | payload length        | u32 bytes                              |
//! | payload               | MSB-first canonical Huffman codes      |
//! | CRC-32                | u32 over all preceding bytes           |
//!
//! The payload holds the latent symbols of every block in raster order,
//! frames in time order.

use crate::bytes::{ByteReader, ByteWriter};
use crate::dbn::LatentBlock;
use crate::error::{Error, Result};
use crate::event_io::SensorGeometry;

use super::huffman::{decode_symbols, encode_symbols, BitBuffer, SymbolTable};
use super::{read_table, write_table};

pub const STREAM_MAGIC: &str = "EVCMP";
pub const STREAM_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct StreamHeader {
    pub geometry: SensorGeometry,
    pub t_start: f64,
    pub dt: f64,
    pub frame_count: u32,
    pub grid_rows: u32,
    pub grid_cols: u32,
    pub code_dim: u16,
    pub normalizer_scale: f64,
    pub quant_scale: f64,
}

impl StreamHeader {
    pub fn blocks_per_frame(&self) -> u64 {
        u64::from(self.grid_rows) * u64::from(self.grid_cols)
    }

    pub fn block_count(&self) -> u64 {
        u64::from(self.frame_count) * self.blocks_per_frame()
    }

    pub fn symbol_count(&self) -> u64 {
        self.block_count() * u64::from(self.code_dim)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedStream {
    pub header: StreamHeader,
    /// Empty when the stream carries no symbols.
    pub table: Option<SymbolTable>,
    pub payload: BitBuffer,
}

impl CompressedStream {
    /// Builds one global code table over all latent symbols and encodes them.
    pub fn encode(header: StreamHeader, latents: &[LatentBlock]) -> Result<Self> {
        if latents.len() as u64 != header.block_count() {
            return Err(Error::Format(format!(
                "{} latent blocks for a header declaring {}",
                latents.len(),
                header.block_count()
            )));
        }
        if let Some(l) = latents.iter().find(|l| l.symbols.len() != usize::from(header.code_dim)) {
            return Err(Error::DimensionMismatch(format!(
                "latent of length {}, header code dimension {}",
                l.symbols.len(),
                header.code_dim
            )));
        }
        let symbols: Vec<i64> = latents
            .iter()
            .flat_map(|l| l.symbols.iter().map(|&s| i64::from(s)))
            .collect();
        if symbols.is_empty() {
            return Ok(CompressedStream {
                header,
                table: None,
                payload: BitBuffer::default(),
            });
        }
        let table = SymbolTable::from_symbols(symbols.iter().copied())?;
        let payload = encode_symbols(&symbols, &table)?;
        Ok(CompressedStream {
            header,
            table: Some(table),
            payload,
        })
    }

    pub fn decode_latents(&self) -> Result<Vec<LatentBlock>> {
        let count = usize::try_from(self.header.symbol_count())
            .map_err(|_| Error::Format("symbol count overflows".into()))?;
        if count == 0 {
            return Ok(Vec::new());
        }
        let table = self
            .table
            .as_ref()
            .ok_or_else(|| Error::Format("symbols declared but no code table".into()))?;
        let symbols = decode_symbols(&self.payload, table, count)?;
        let dim = usize::from(self.header.code_dim);
        symbols
            .chunks(dim)
            .map(|c| {
                c.iter()
                    .map(|&s| {
                        i32::try_from(s).map_err(|_| Error::SymbolRange(format!("symbol {s} exceeds 32 bits")))
                    })
                    .collect::<Result<Vec<_>>>()
                    .map(|symbols| LatentBlock { symbols })
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut w = ByteWriter::new();
        w.bytes(STREAM_MAGIC.as_bytes());
        w.u8(STREAM_VERSION);
        w.u32(h.geometry.width);
        w.u32(h.geometry.height);
        w.f64(h.t_start);
        w.f64(h.dt);
        w.u32(h.frame_count);
        w.u32(h.grid_rows);
        w.u32(h.grid_cols);
        w.u16(h.code_dim);
        w.f64(h.normalizer_scale);
        w.f64(h.quant_scale);
        w.u64(h.symbol_count());
        write_table(&mut w, self.table.as_ref());
        w.u8(self.payload.pad_bits());
        w.u32(self.payload.bytes.len() as u32);
        w.bytes(&self.payload.bytes);
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::checked(data)?;
        r.magic(STREAM_MAGIC)?;
        let version = r.u8("version")?;
        if version != STREAM_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let geometry = SensorGeometry::new(r.u32("sensor width")?, r.u32("sensor height")?)?;
        let header = StreamHeader {
            geometry,
            t_start: r.f64("t_start")?,
            dt: r.f64("dt")?,
            frame_count: r.u32("frame count")?,
            grid_rows: r.u32("grid rows")?,
            grid_cols: r.u32("grid cols")?,
            code_dim: r.u16("code dimension")?,
            normalizer_scale: r.f64("normalizer scale")?,
            quant_scale: r.f64("quantization scale")?,
        };
        let symbol_count = r.u64("symbol count")?;
        if symbol_count != header.symbol_count() {
            return Err(Error::Format(format!(
                "symbol count {symbol_count} disagrees with header geometry ({})",
                header.symbol_count()
            )));
        }
        let table = read_table(&mut r)?;
        let pad = r.u8("pad bits")?;
        let len = r.u32("payload length")? as usize;
        let bytes = r.take(len, "payload")?.to_vec();
        r.expect_end()?;
        if pad > 7 || (len == 0 && pad != 0) {
            return Err(Error::Format(format!("invalid pad bit count {pad}")));
        }
        if table.is_none() != (symbol_count == 0) {
            return Err(Error::Format("code table presence disagrees with symbol count".into()));
        }
        let payload = BitBuffer {
            bit_len: len as u64 * 8 - u64::from(pad),
            bytes,
        };
        Ok(CompressedStream {
            header,
            table,
            payload,
        })
    }

    /// Total container size in bits, header and checksum included.
    pub fn size_bits(&self) -> u64 {
        self.to_bytes().len() as u64 * 8
    }

    /// Bits of Huffman-coded payload, excluding padding.
    pub fn payload_bits(&self) -> u64 {
        self.payload.bit_len
    }
}
