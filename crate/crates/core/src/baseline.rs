//! Lossless reference coders over raw events.
//!
//! Both coders split the stream into four integer sequences (timestamp in
//! microseconds, x, y, polarity) and Huffman-code each with its own table.
//! The delta coder replaces timestamps by their first differences.
//!
//! Container layout (little-endian): magic `b"EVBAS"`, version u8, mode u8
//! (0 = per-field, 1 = delta timestamps), sensor width u32, height u32, event
//! count u64, then for each field in the order t, x, y, p: code table (as in
//! the latent container), pad bits u8, payload length u32, payload bytes;
//! finally a CRC-32 over everything before it.

use std::io::Write;
use std::process::{Command, Stdio};

use crate::bytes::{ByteReader, ByteWriter};
use crate::entropy::{decode_symbols, encode_symbols, read_table, write_table, BitBuffer, SymbolTable};
use crate::error::{Error, Result};
use crate::event_io::{Event, EventStream, Polarity, SensorGeometry};

pub const BASELINE_MAGIC: &str = "EVBAS";
pub const BASELINE_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMode {
    /// Absolute microsecond timestamps.
    PerField,
    /// First-order timestamp differences.
    DeltaTime,
}

impl BaselineMode {
    fn tag(self) -> u8 {
        match self {
            BaselineMode::PerField => 0,
            BaselineMode::DeltaTime => 1,
        }
    }

    fn from_tag(t: u8) -> Result<Self> {
        match t {
            0 => Ok(BaselineMode::PerField),
            1 => Ok(BaselineMode::DeltaTime),
            _ => Err(Error::Format(format!("unknown baseline mode {t}"))),
        }
    }
}

/// Timestamp in whole microseconds.
pub fn micros(t: f64) -> i64 {
    (t * 1e6).round() as i64
}

/// The four per-event integer sequences, timestamps already transformed for
/// the given mode.
pub fn field_streams(stream: &EventStream, mode: BaselineMode) -> [Vec<i64>; 4] {
    let ev = stream.events();
    let mut t: Vec<i64> = ev.iter().map(|e| micros(e.t)).collect();
    if mode == BaselineMode::DeltaTime {
        let mut prev = 0;
        for v in t.iter_mut() {
            let cur = *v;
            *v = cur - prev;
            prev = cur;
        }
    }
    [
        t,
        ev.iter().map(|e| i64::from(e.x)).collect(),
        ev.iter().map(|e| i64::from(e.y)).collect(),
        ev.iter().map(|e| i64::from(e.p.bit())).collect(),
    ]
}

#[derive(Debug, Clone, PartialEq)]
struct CodedField {
    table: SymbolTable,
    bits: BitBuffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineStream {
    pub mode: BaselineMode,
    pub geometry: SensorGeometry,
    pub event_count: u64,
    fields: Vec<CodedField>,
}

impl BaselineStream {
    pub fn encode(stream: &EventStream, mode: BaselineMode) -> Result<Self> {
        if stream.is_empty() {
            return Err(Error::InvalidArgument("baseline coders need a non-empty stream".into()));
        }
        let fields = field_streams(stream, mode)
            .iter()
            .map(|symbols| {
                let table = SymbolTable::from_symbols(symbols.iter().copied())?;
                let bits = encode_symbols(symbols, &table)?;
                Ok(CodedField { table, bits })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BaselineStream {
            mode,
            geometry: stream.geometry(),
            event_count: stream.len() as u64,
            fields,
        })
    }

    /// Decoded integer field sequences in the order t, x, y, p.
    pub fn decode_fields(&self) -> Result<[Vec<i64>; 4]> {
        let n = usize::try_from(self.event_count).map_err(|_| Error::Format("event count overflows".into()))?;
        let mut out: [Vec<i64>; 4] = Default::default();
        for (dst, f) in out.iter_mut().zip(&self.fields) {
            *dst = decode_symbols(&f.bits, &f.table, n)?;
        }
        if self.mode == BaselineMode::DeltaTime {
            let mut acc = 0i64;
            for v in out[0].iter_mut() {
                acc += *v;
                *v = acc;
            }
        }
        Ok(out)
    }

    /// Rebuilds the event stream at microsecond timestamp resolution.
    pub fn decode(&self) -> Result<EventStream> {
        let [t, x, y, p] = self.decode_fields()?;
        let events = (0..t.len())
            .map(|i| {
                let field = |v: i64, what: &str| {
                    u32::try_from(v).map_err(|_| Error::Format(format!("decoded {what} {v} out of range")))
                };
                Ok(Event {
                    t: t[i] as f64 * 1e-6,
                    x: field(x[i], "x")?,
                    y: field(y[i], "y")?,
                    p: Polarity::from_bit(p[i])
                        .ok_or_else(|| Error::Format(format!("decoded polarity {}", p[i])))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        EventStream::new(events, self.geometry)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(BASELINE_MAGIC.as_bytes());
        w.u8(BASELINE_VERSION);
        w.u8(self.mode.tag());
        w.u32(self.geometry.width);
        w.u32(self.geometry.height);
        w.u64(self.event_count);
        for f in &self.fields {
            write_table(&mut w, Some(&f.table));
            w.u8(f.bits.pad_bits());
            w.u32(f.bits.bytes.len() as u32);
            w.bytes(&f.bits.bytes);
        }
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = ByteReader::checked(data)?;
        r.magic(BASELINE_MAGIC)?;
        let version = r.u8("version")?;
        if version != BASELINE_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let mode = BaselineMode::from_tag(r.u8("mode")?)?;
        let geometry = SensorGeometry::new(r.u32("sensor width")?, r.u32("sensor height")?)?;
        let event_count = r.u64("event count")?;
        let mut fields = Vec::with_capacity(4);
        for _ in 0..4 {
            let table = read_table(&mut r)?
                .ok_or_else(|| Error::Format("baseline field without code table".into()))?;
            let pad = r.u8("pad bits")?;
            let len = r.u32("payload length")? as usize;
            let bytes = r.take(len, "payload")?.to_vec();
            if pad > 7 || (len == 0 && pad != 0) {
                return Err(Error::Format(format!("invalid pad bit count {pad}")));
            }
            let bits = BitBuffer {
                bit_len: len as u64 * 8 - u64::from(pad),
                bytes,
            };
            fields.push(CodedField { table, bits });
        }
        r.expect_end()?;
        Ok(BaselineStream {
            mode,
            geometry,
            event_count,
            fields,
        })
    }

    /// Container size in bits, tables and checksum included.
    pub fn size_bits(&self) -> u64 {
        self.to_bytes().len() as u64 * 8
    }

    /// Payload bits of each field (t, x, y, p).
    pub fn field_payload_bits(&self) -> [u64; 4] {
        let mut out = [0; 4];
        for (o, f) in out.iter_mut().zip(&self.fields) {
            *o = f.bits.bit_len;
        }
        out
    }
}

/// Per-field Huffman over absolute timestamps; returns the container size.
pub fn huffman_raw(stream: &EventStream) -> Result<u64> {
    Ok(BaselineStream::encode(stream, BaselineMode::PerField)?.size_bits())
}

/// Per-field Huffman over timestamp deltas; returns the container size.
pub fn delta_huffman(stream: &EventStream) -> Result<u64> {
    Ok(BaselineStream::encode(stream, BaselineMode::DeltaTime)?.size_bits())
}

/// Outcome of running an external general-purpose compressor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExternalOutcome {
    /// Compressed size in bits.
    Compressed(u64),
    /// The tool could not be run.
    Skipped(String),
}

/// Serializes the per-field integer streams as little-endian i64 columns
/// (t, x, y, p; timestamps delta-coded) for external coders.
pub fn integer_columns(stream: &EventStream) -> Vec<u8> {
    let fields = field_streams(stream, BaselineMode::DeltaTime);
    let mut out = Vec::with_capacity(stream.len() * 32);
    for f in &fields {
        for v in f {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Pipes the integer columns through `tool -c` (e.g. `zstd`, `xz`, `gzip`,
/// `brotli`, `lz4`) and measures stdout. A missing or failing tool is
/// reported as skipped.
pub fn run_external(stream: &EventStream, tool: &str) -> ExternalOutcome {
    let input = integer_columns(stream);
    let child = Command::new(tool)
        .arg("-c")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn();
    let mut child = match child {
        Ok(c) => c,
        Err(e) => return ExternalOutcome::Skipped(format!("{tool}: {e}")),
    };
    let mut stdin = child.stdin.take().expect("piped stdin");
    let writer = std::thread::spawn(move || stdin.write_all(&input));
    let output = match child.wait_with_output() {
        Ok(o) => o,
        Err(e) => return ExternalOutcome::Skipped(format!("{tool}: {e}")),
    };
    let wrote = writer.join().is_ok_and(|r| r.is_ok());
    if !output.status.success() || !wrote {
        return ExternalOutcome::Skipped(format!("{tool} exited with {}", output.status));
    }
    ExternalOutcome::Compressed(output.stdout.len() as u64 * 8)
}
