//! Seeded synthetic event streams for tests, demos and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::event_io::{Event, EventStream, Polarity, SensorGeometry};

fn finish(mut raw: Vec<(i64, u32, u32, Polarity)>, geometry: SensorGeometry) -> EventStream {
    raw.sort_by_key(|e| (e.0, e.2, e.1, e.3));
    let events = raw
        .into_iter()
        .map(|(us, x, y, p)| Event {
            t: us as f64 * 1e-6,
            x,
            y,
            p,
        })
        .collect();
    EventStream::new(events, geometry).expect("generated events are valid")
}

/// A bright vertical bar sweeping left to right and wrapping around. The
/// leading edge emits ON events and the trailing edge OFF events at every
/// row it crosses, plus uniform background noise.
#[derive(Debug, Clone)]
pub struct MovingBar {
    pub geometry: SensorGeometry,
    /// Seconds.
    pub duration: f64,
    pub bar_width: u32,
    /// Pixels per second.
    pub speed: f64,
    /// Inclusive range of events emitted per pixel crossing.
    pub events_per_crossing: (u32, u32),
    /// Background events per second over the whole sensor.
    pub noise_rate: f64,
    pub seed: u64,
}

impl MovingBar {
    /// 60x60 sensor, 2 s, roughly 60k events.
    pub fn desk_scale(seed: u64) -> Self {
        MovingBar {
            geometry: SensorGeometry::new(60, 60).expect("non-empty"),
            duration: 2.0,
            bar_width: 8,
            speed: 150.0,
            events_per_crossing: (1, 3),
            noise_rate: 1000.0,
            seed,
        }
    }

    pub fn generate(&self) -> EventStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (w, h) = (self.geometry.width, self.geometry.height);
        let period = f64::from(w + self.bar_width) / self.speed;
        let pixel_time = 1.0 / self.speed;
        let end_us = (self.duration * 1e6) as i64;
        let mut raw = Vec::new();

        let cycles = (self.duration / period).ceil() as u32 + 1;
        for k in 0..cycles {
            let base = f64::from(k) * period;
            for c in 0..w {
                let edges = [
                    (base + f64::from(c) * pixel_time, Polarity::On),
                    (base + f64::from(c + self.bar_width) * pixel_time, Polarity::Off),
                ];
                for (t_cross, p) in edges {
                    for y in 0..h {
                        let n = rng.gen_range(self.events_per_crossing.0..=self.events_per_crossing.1);
                        for _ in 0..n {
                            let t = t_cross + rng.gen::<f64>() * pixel_time;
                            let us = (t * 1e6).round() as i64;
                            if us < end_us {
                                raw.push((us, c, y, p));
                            }
                        }
                    }
                }
            }
        }

        let noise = (self.noise_rate * self.duration).round() as usize;
        for _ in 0..noise {
            let us = rng.gen_range(0..end_us.max(1));
            let p = if rng.gen::<bool>() { Polarity::On } else { Polarity::Off };
            raw.push((us, rng.gen_range(0..w), rng.gen_range(0..h), p));
        }
        finish(raw, self.geometry)
    }
}

/// `n` events with uniformly random timestamps in `[0, duration)`,
/// coordinates and polarities.
pub fn uniform_random(geometry: SensorGeometry, n: usize, duration: f64, seed: u64) -> EventStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let end_us = ((duration * 1e6) as i64).max(1);
    let raw = (0..n)
        .map(|_| {
            let p = if rng.gen::<bool>() { Polarity::On } else { Polarity::Off };
            (
                rng.gen_range(0..end_us),
                rng.gen_range(0..geometry.width),
                rng.gen_range(0..geometry.height),
                p,
            )
        })
        .collect();
    finish(raw, geometry)
}

/// `n` events spaced exactly `interval_us` apart with random coordinates and
/// polarities.
pub fn constant_rate(geometry: SensorGeometry, n: usize, interval_us: i64, seed: u64) -> EventStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = (0..n as i64)
        .map(|i| {
            let p = if rng.gen::<bool>() { Polarity::On } else { Polarity::Off };
            (
                i * interval_us,
                rng.gen_range(0..geometry.width),
                rng.gen_range(0..geometry.height),
                p,
            )
        })
        .collect();
    finish(raw, geometry)
}
