//! Deep belief network: greedy RBM pretraining, unrolling into a deep
//! autoencoder, and conjugate-gradient fine-tuning of the reconstruction.

mod autoencoder;
pub mod cg;
mod model_file;
mod rbm;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use autoencoder::{Autoencoder, DenseLayer};
pub use model_file::{read_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use rbm::{logistic, RbmGradient, RbmLayer, INIT_WEIGHT_STD};

use crate::error::{Error, Result};
use crate::event_io::SensorGeometry;
use crate::superframe::{Block, Normalizer, BLOCK_LEN};
use cg::{CgOptions, Objective};

/// Input, hidden and code layer sizes of the full-size network.
pub const DEFAULT_LAYER_SIZES: [usize; 5] = [900, 1000, 500, 250, 20];

/// Learning-rate multiplier for the RBM whose hidden units are linear. Gaussian
/// hidden units have unbounded activations and diverge at the logistic rate.
pub const LINEAR_LR_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Logistic,
    Linear,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Logistic => 0,
            Activation::Linear => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Logistic),
            1 => Some(Activation::Linear),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub cd_steps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 10,
            learning_rate: 0.1,
            cd_steps: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate {} must be > 0",
                self.learning_rate
            )));
        }
        if self.cd_steps == 0 {
            return Err(Error::Config("cd_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Checks a layer-size chain: at least input and code, all positive, and
/// strictly shrinking from the first hidden layer down to the code layer.
pub fn validate_layer_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::Config("need at least an input and a code layer".into()));
    }
    if sizes.contains(&0) {
        return Err(Error::Config("layer sizes must be positive".into()));
    }
    if sizes[1..].windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Config(format!(
            "hidden layer sizes {:?} must strictly decrease towards the code layer",
            &sizes[1..]
        )));
    }
    Ok(())
}

/// Stacks blocks into a `blocks x BLOCK_LEN` matrix.
pub fn blocks_matrix(blocks: &[Block]) -> Array2<f64> {
    let mut m = Array2::zeros((blocks.len(), BLOCK_LEN));
    for (mut row, b) in m.rows_mut().into_iter().zip(blocks) {
        row.iter_mut().zip(&b.values).for_each(|(d, s)| *d = *s);
    }
    m
}

fn gather_rows(data: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    data.select(Axis(0), idx)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerLog {
    /// Mean-field reconstruction error on the layer's full training data.
    pub initial_error: f64,
    pub final_error: f64,
    /// Mean of the per-batch stochastic reconstruction errors per epoch.
    pub epoch_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PretrainReport {
    pub layers: Vec<LayerLog>,
}

/// Greedy layer-wise CD training. Each RBM is trained on the hidden
/// activations of the one below; the last RBM has linear (Gaussian) hidden
/// units forming the code layer.
pub fn pretrain(
    data: ArrayView2<f64>,
    layer_sizes: &[usize],
    cfg: &TrainConfig,
) -> Result<(Vec<RbmLayer>, PretrainReport)> {
    cfg.validate()?;
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(Error::Config(format!("invalid layer sizes {layer_sizes:?}")));
    }
    if data.nrows() == 0 {
        return Err(Error::InvalidArgument("pretraining needs at least one block".into()));
    }
    if data.ncols() != layer_sizes[0] {
        return Err(Error::DimensionMismatch(format!(
            "training data has {} columns, input layer has {}",
            data.ncols(),
            layer_sizes[0]
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let top = layer_sizes.len() - 2;
    let mut stack = Vec::with_capacity(top + 1);
    let mut report = PretrainReport::default();
    let mut layer_input = data.to_owned();
    let mut order: Vec<usize> = (0..data.nrows()).collect();

    for (k, pair) in layer_sizes.windows(2).enumerate() {
        let hidden = if k == top { Activation::Linear } else { Activation::Logistic };
        let lr = if hidden == Activation::Linear {
            cfg.learning_rate * LINEAR_LR_SCALE
        } else {
            cfg.learning_rate
        };
        let mut layer = RbmLayer::new(pair[0], pair[1], hidden, &mut rng);
        let mut log = LayerLog {
            initial_error: layer.reconstruction_error(layer_input.view()),
            ..LayerLog::default()
        };

        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut err_sum = 0.0;
            let mut batches = 0usize;
            for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
                let batch = gather_rows(layer_input.view(), chunk);
                let err = layer.cd_update(batch.view(), lr, cfg.cd_steps, &mut rng)?;
                if !err.is_finite() || !layer.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        phase: "pretraining",
                        epoch,
                        batch: b,
                        loss: err,
                    });
                }
                err_sum += err;
                batches += 1;
            }
            log.epoch_errors.push(err_sum / batches as f64);
        }
        log.final_error = layer.reconstruction_error(layer_input.view());
        layer_input = layer.hidden_batch(layer_input.view());
        report.layers.push(log);
        stack.push(layer);
    }
    Ok((stack, report))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FineTuneReport {
    /// Mean per-example cross-entropy over the training set before tuning.
    pub initial_loss: f64,
    /// Same quantity after each epoch.
    pub epoch_losses: Vec<f64>,
}

impl FineTuneReport {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses.last().copied().unwrap_or(self.initial_loss)
    }
}

struct BatchObjective<'a> {
    scratch: Autoencoder,
    batch: ArrayView2<'a, f64>,
}

impl Objective for BatchObjective<'_> {
    fn value(&mut self, x: &[f64]) -> f64 {
        self.scratch.set_params(x).expect("parameter count is fixed");
        self.scratch.loss(self.batch)
    }

    fn value_and_gradient(&mut self, x: &[f64]) -> (f64, Vec<f64>) {
        self.scratch.set_params(x).expect("parameter count is fixed");
        self.scratch.loss_and_gradient(self.batch)
    }
}

/// Mean per-row cross-entropy reconstruction loss.
pub fn mean_loss(net: &Autoencoder, data: ArrayView2<f64>) -> f64 {
    if data.nrows() == 0 {
        return 0.0;
    }
    // chunked to bound intermediate activations
    let total: f64 = data
        .axis_chunks_iter(Axis(0), 256)
        .map(|chunk| net.loss(chunk))
        .sum();
    total / data.nrows() as f64
}

/// Minimizes the summed cross-entropy reconstruction loss with a few
/// conjugate-gradient line searches per shuffled mini-batch.
pub fn fine_tune(
    net: &mut Autoencoder,
    data: ArrayView2<f64>,
    cfg: &TrainConfig,
) -> Result<FineTuneReport> {
    cfg.validate()?;
    if data.nrows() == 0 {
        return Err(Error::InvalidArgument("fine-tuning needs at least one block".into()));
    }
    if data.ncols() != net.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "training data has {} columns, network input is {}",
            data.ncols(),
            net.input_dim()
        )));
    }
    let mut report = FineTuneReport {
        initial_loss: mean_loss(net, data),
        epoch_losses: Vec::with_capacity(cfg.epochs),
    };
    if !report.initial_loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            phase: "fine-tuning",
            epoch: 0,
            batch: 0,
            loss: report.initial_loss,
        });
    }
    if cfg.epochs == 0 {
        return Ok(report);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    let mut params = net.params();
    let opts = CgOptions::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = gather_rows(data, chunk);
            let mut objective = BatchObjective {
                scratch: net.clone(),
                batch: batch.view(),
            };
            let outcome = cg::minimize(&mut params, &mut objective, opts);
            if !outcome.initial.is_finite() {
                return Err(Error::NonFiniteLoss {
                    phase: "fine-tuning",
                    epoch,
                    batch: b,
                    loss: outcome.initial,
                });
            }
            net.set_params(&params)?;
        }
        let loss = mean_loss(net, data);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                phase: "fine-tuning",
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
                loss,
            });
        }
        report.epoch_losses.push(loss);
    }
    Ok(report)
}

/// Integer latent symbols for one block.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatentBlock {
    pub symbols: Vec<i32>,
}

fn check_quant_scale(q: f64) -> Result<()> {
    if !(q.is_finite() && q > 0.0) {
        return Err(Error::InvalidArgument(format!("quantization scale {q} must be > 0")));
    }
    Ok(())
}

/// `round(value * q)` with ties away from zero.
pub fn quantize(code: &[f64], q: f64) -> Result<LatentBlock> {
    check_quant_scale(q)?;
    let symbols = code
        .iter()
        .map(|&v| {
            let s = (v * q).round();
            if !s.is_finite() || s < f64::from(i32::MIN) || s > f64::from(i32::MAX) {
                Err(Error::SymbolRange(format!(
                    "latent value {v} x {q} does not fit a 32-bit symbol"
                )))
            } else {
                Ok(s as i32)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LatentBlock { symbols })
}

pub fn dequantize(latent: &LatentBlock, q: f64) -> Result<Vec<f64>> {
    check_quant_scale(q)?;
    Ok(latent.symbols.iter().map(|&s| f64::from(s) / q).collect())
}

/// Trained network plus everything needed to apply it to a sensor's frames.
#[derive(Debug, Clone, PartialEq)]
pub struct DbnModel {
    pub net: Autoencoder,
    pub normalizer: Normalizer,
    pub quant_scale: f64,
    pub geometry: SensorGeometry,
}

impl DbnModel {
    pub fn new(
        net: Autoencoder,
        normalizer: Normalizer,
        quant_scale: f64,
        geometry: SensorGeometry,
    ) -> Result<Self> {
        check_quant_scale(quant_scale)?;
        Ok(DbnModel {
            net,
            normalizer,
            quant_scale,
            geometry,
        })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        self.net.layer_sizes()
    }

    pub fn code_dim(&self) -> usize {
        self.net.code_dim()
    }

    fn check_input(&self, n: usize) -> Result<()> {
        if n != self.net.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input of {n} values, network expects {}",
                self.net.input_dim()
            )));
        }
        Ok(())
    }

    /// Real-valued code of one block.
    pub fn encode_block(&self, block: &Block) -> Result<Vec<f64>> {
        self.check_input(block.values.len())?;
        let x = ArrayView2::from_shape((1, block.values.len()), &block.values)
            .expect("contiguous row");
        Ok(self.net.encode(x).into_raw_vec_and_offset().0)
    }

    /// Dequantized decoder pass; values lie in `[0, 1]`.
    pub fn decode_block(&self, latent: &LatentBlock) -> Result<Vec<f64>> {
        let codes = self.decode_latents(std::slice::from_ref(latent))?;
        Ok(codes.into_raw_vec_and_offset().0)
    }

    /// Quantized codes for a batch of blocks, in order.
    pub fn encode_blocks(&self, blocks: &[Block]) -> Result<Vec<LatentBlock>> {
        if let Some(b) = blocks.iter().find(|b| b.values.len() != self.net.input_dim()) {
            self.check_input(b.values.len())?;
        }
        let mut out = Vec::with_capacity(blocks.len());
        for chunk in blocks.chunks(256) {
            let codes = self.net.encode(blocks_matrix(chunk).view());
            for row in codes.rows() {
                out.push(quantize(row.as_slice().expect("standard layout"), self.quant_scale)?);
            }
        }
        Ok(out)
    }

    /// Decoded block values, one row per latent.
    pub fn decode_latents(&self, latents: &[LatentBlock]) -> Result<Array2<f64>> {
        let dim = self.code_dim();
        let mut codes = Array2::zeros((latents.len(), dim));
        for (mut row, l) in codes.rows_mut().into_iter().zip(latents) {
            if l.symbols.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "latent of length {}, code layer has {dim}",
                    l.symbols.len()
                )));
            }
            let deq = dequantize(l, self.quant_scale)?;
            row.iter_mut().zip(deq).for_each(|(d, s)| *d = s);
        }
        Ok(self.net.decode(codes.view()))
    }
}
