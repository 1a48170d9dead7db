//! Address-event streams in the line-oriented `t x y p` text format.
//!
//! Each non-empty, non-comment line holds one event: a timestamp in seconds
//! followed by the column, row and polarity bit, separated by whitespace.
//! Lines starting with `#` are ignored.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::error::{Error, Result};

/// Bits charged per event when accounting for the uncompressed stream.
pub const RAW_BITS_PER_EVENT: u64 = 64;

/// Direction of the brightness change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarity {
    /// Brightness decrease, encoded as `0`.
    Off,
    /// Brightness increase, encoded as `1`.
    On,
}

impl Polarity {
    pub fn from_bit(bit: i64) -> Option<Polarity> {
        match bit {
            0 => Some(Polarity::Off),
            1 => Some(Polarity::On),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Polarity::Off => 0,
            Polarity::On => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    /// Seconds.
    pub t: f64,
    pub x: u32,
    pub y: u32,
    pub p: Polarity,
}

/// Sensor resolution in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SensorGeometry {
    pub width: u32,
    pub height: u32,
}

impl SensorGeometry {
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "sensor geometry {width}x{height} must be non-empty"
            )));
        }
        Ok(SensorGeometry { width, height })
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height
    }
}

impl fmt::Display for SensorGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl FromStr for SensorGeometry {
    type Err = Error;

    /// Parses `WxH`, e.g. `240x180`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("sensor geometry {s:?} is not WxH"));
        let (w, h) = s.trim().split_once(['x', 'X']).ok_or_else(bad)?;
        let width = w.trim().parse().map_err(|_| bad())?;
        let height = h.trim().parse().map_err(|_| bad())?;
        SensorGeometry::new(width, height)
    }
}

/// A validated, time-ordered event sequence for a given sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    events: Vec<Event>,
    geometry: SensorGeometry,
}

impl EventStream {
    /// Validates bounds and timestamp ordering. Line numbers in errors are
    /// 1-based event indices.
    pub fn new(events: Vec<Event>, geometry: SensorGeometry) -> Result<Self> {
        let mut prev = f64::NEG_INFINITY;
        for (i, e) in events.iter().enumerate() {
            let line = i + 1;
            check_event(e, &geometry, line)?;
            if e.t < prev {
                return Err(Error::DecreasingTimestamp { line });
            }
            prev = e.t;
        }
        Ok(EventStream { events, geometry })
    }

    pub fn empty(geometry: SensorGeometry) -> Self {
        EventStream {
            events: Vec::new(),
            geometry,
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events with `t < first.t + span` seconds.
    pub fn head_span(&self, span: f64) -> EventStream {
        let Some(first) = self.events.first() else {
            return self.clone();
        };
        let end = first.t + span;
        let n = self.events.partition_point(|e| e.t < end);
        EventStream {
            events: self.events[..n].to_vec(),
            geometry: self.geometry,
        }
    }

    /// Appends `other`, which must share the geometry and not go back in time.
    pub fn concat(&self, other: &EventStream) -> Result<EventStream> {
        if self.geometry != other.geometry {
            return Err(Error::Mismatch(format!(
                "cannot concatenate {} and {} streams",
                self.geometry, other.geometry
            )));
        }
        let mut events = self.events.clone();
        events.extend_from_slice(&other.events);
        EventStream::new(events, self.geometry)
    }
}

fn check_event(e: &Event, g: &SensorGeometry, line: usize) -> Result<()> {
    if !(e.t.is_finite() && e.t >= 0.0) {
        return Err(Error::MalformedLine {
            line,
            msg: format!("timestamp {} is not a non-negative real", e.t),
        });
    }
    if !g.contains(e.x, e.y) {
        return Err(Error::OutOfBounds {
            line,
            x: e.x.into(),
            y: e.y.into(),
            width: g.width,
            height: g.height,
        });
    }
    Ok(())
}

/// Parses the text event format against a known sensor geometry.
pub fn parse_events(text: &str, geometry: SensorGeometry) -> Result<EventStream> {
    let mut events = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::MalformedLine {
                line,
                msg: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let malformed = |what: &str, tok: &str| Error::MalformedLine {
            line,
            msg: format!("cannot parse {what} from {tok:?}"),
        };
        let t: f64 = fields[0].parse().map_err(|_| malformed("timestamp", fields[0]))?;
        let x: i64 = fields[1].parse().map_err(|_| malformed("x", fields[1]))?;
        let y: i64 = fields[2].parse().map_err(|_| malformed("y", fields[2]))?;
        let p: i64 = fields[3].parse().map_err(|_| malformed("polarity", fields[3]))?;

        if x < 0 || y < 0 || x >= i64::from(geometry.width) || y >= i64::from(geometry.height) {
            return Err(Error::OutOfBounds {
                line,
                x: x.max(0) as u64,
                y: y.max(0) as u64,
                width: geometry.width,
                height: geometry.height,
            });
        }
        let p = Polarity::from_bit(p).ok_or(Error::BadPolarity { line, value: p })?;
        let event = Event {
            t,
            x: x as u32,
            y: y as u32,
            p,
        };
        check_event(&event, &geometry, line)?;
        if t < prev {
            return Err(Error::DecreasingTimestamp { line });
        }
        prev = t;
        events.push(event);
    }
    Ok(EventStream { events, geometry })
}

/// Writes one `t x y p` line per event. Timestamps use the shortest decimal
/// form that parses back to the same `f64`.
pub fn write_events(stream: &EventStream) -> String {
    let mut out = String::with_capacity(stream.len() * 24);
    for e in &stream.events {
        let _ = writeln!(out, "{} {} {} {}", e.t, e.x, e.y, e.p.bit());
    }
    out
}

/// Uncompressed size of the stream: 64 bits per event.
pub fn raw_size_bits(stream: &EventStream) -> u64 {
    RAW_BITS_PER_EVENT * stream.len() as u64
}
