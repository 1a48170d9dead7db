//! Run configuration: line-oriented `key = value` files.
//!
//! ```text
//! # training defaults
//! sensor = 240x180
//! dt_ms = 10
//! epochs = 20
//! ```

use crate::dbn::{validate_layer_sizes, TrainConfig, DEFAULT_LAYER_SIZES};
use crate::error::{Error, Result};
use crate::event_io::SensorGeometry;

/// Aggregation windows swept by evaluation, in seconds.
pub const DEFAULT_DT_SWEEP: [f64; 5] = [0.0005, 0.005, 0.01, 0.02, 0.03];

#[derive(Debug, Clone, PartialEq)]
pub struct CodecConfig {
    pub sensor: Option<SensorGeometry>,
    /// Aggregation window for training and compression, seconds.
    pub dt: f64,
    /// Windows swept by evaluation, seconds.
    pub dt_list: Vec<f64>,
    /// Leading span of the recording used for training, seconds.
    pub train_span: f64,
    pub layer_sizes: Vec<usize>,
    pub train: TrainConfig,
    /// Fine-tuning epochs; pretraining epochs when unset.
    pub finetune_epochs: Option<usize>,
    pub quant_scale: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            sensor: None,
            dt: 0.01,
            dt_list: DEFAULT_DT_SWEEP.to_vec(),
            train_span: 10.0,
            layer_sizes: DEFAULT_LAYER_SIZES.to_vec(),
            train: TrainConfig::default(),
            finetune_epochs: None,
            quant_scale: 1.0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_ms_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|v| parse_num::<f64>(key, v.trim()).map(|ms| ms * 1e-3))
        .collect()
}

impl CodecConfig {
    /// Applies `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = CodecConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "sensor" => self.sensor = Some(value.parse()?),
            "dt_ms" => self.dt = parse_num::<f64>(key, value)? * 1e-3,
            "dt_list_ms" => self.dt_list = parse_ms_list(key, value)?,
            "train_span_s" => self.train_span = parse_num(key, value)?,
            "layers" => {
                self.layer_sizes = value
                    .split(',')
                    .map(|v| parse_num(key, v.trim()))
                    .collect::<Result<_>>()?
            }
            "epochs" => self.train.epochs = parse_num(key, value)?,
            "finetune_epochs" => self.finetune_epochs = Some(parse_num(key, value)?),
            "batch" => self.train.batch_size = parse_num(key, value)?,
            "lr" => self.train.learning_rate = parse_num(key, value)?,
            "cd_steps" => self.train.cd_steps = parse_num(key, value)?,
            "seed" => self.train.seed = parse_num(key, value)?,
            "quant_scale" => self.quant_scale = parse_num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        validate_layer_sizes(&self.layer_sizes)?;
        let bad_dt = |d: f64| !(d.is_finite() && d > 0.0);
        if bad_dt(self.dt) || self.dt_list.iter().copied().any(bad_dt) {
            return Err(Error::Config("aggregation windows must be > 0".into()));
        }
        if !(self.train_span.is_finite() && self.train_span > 0.0) {
            return Err(Error::Config("training span must be > 0".into()));
        }
        if !(self.quant_scale.is_finite() && self.quant_scale > 0.0) {
            return Err(Error::Config("quantization scale must be > 0".into()));
        }
        Ok(())
    }

    pub fn finetune_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.finetune_epochs.unwrap_or(self.train.epochs),
            ..self.train.clone()
        }
    }

    pub fn sensor(&self) -> Result<SensorGeometry> {
        self.sensor
            .ok_or_else(|| Error::Config("sensor geometry (WxH) is required".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_setup() {
        let c = CodecConfig::default();
        assert_eq!(c.dt, 0.01);
        assert_eq!(c.train_span, 10.0);
        assert_eq!(c.layer_sizes, [900, 1000, 500, 250, 20]);
        assert_eq!((c.train.epochs, c.train.batch_size, c.train.learning_rate), (20, 10, 0.1));
        assert_eq!(c.dt_list, [0.0005, 0.005, 0.01, 0.02, 0.03]);
        c.validate().unwrap();
    }

    #[test]
    fn parses_overrides() {
        let c = CodecConfig::parse(
            "# comment\nsensor = 60x60\ndt_ms=5\nlayers = 900, 300, 100, 20\nepochs=2\nfinetune_epochs=1\nseed=7\nquant_scale=2\ndt_list_ms=1,2\n",
        )
        .unwrap();
        assert_eq!(c.sensor, Some(SensorGeometry::new(60, 60).unwrap()));
        assert!((c.dt - 0.005).abs() < 1e-15);
        assert_eq!(c.layer_sizes, [900, 300, 100, 20]);
        assert_eq!(c.finetune_config().epochs, 1);
        assert_eq!(c.train.epochs, 2);
        assert_eq!(c.train.seed, 7);
        assert_eq!(c.quant_scale, 2.0);
        assert_eq!(c.dt_list, [0.001, 0.002]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(CodecConfig::parse("nonsense").is_err());
        assert!(CodecConfig::parse("colour = red").is_err());
        assert!(CodecConfig::parse("epochs = many").is_err());
        let c = CodecConfig::parse("dt_ms = 0").unwrap();
        assert!(c.validate().is_err());
        assert!(CodecConfig::default().sensor().is_err());
    }
}
