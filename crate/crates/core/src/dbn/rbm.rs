//! Restricted Boltzmann machine layers and contrastive-divergence training.
//!
//! Conventions: `weights[(i, j)]` couples hidden unit `i` with visible unit
//! `j`, `visible_bias[j]` is `b_j`, `hidden_bias[i]` is `c_i`, and the energy is
//! `E(v, h) = -Σ_ij w_ij h_i v_j - Σ_j b_j v_j - Σ_i c_i h_i`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::Activation;
use crate::error::{Error, Result};

/// Standard deviation of the Gaussian used for weight initialization.
pub const INIT_WEIGHT_STD: f64 = 0.01;

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbmLayer {
    /// `n_hidden x n_visible`.
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
    /// Hidden-unit type. `Linear` hidden units are sampled with unit-variance
    /// Gaussian noise during training.
    pub hidden: Activation,
}

/// Parameter update direction produced by one contrastive-divergence pass.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmGradient {
    pub weights: Array2<f64>,
    pub visible_bias: Array1<f64>,
    pub hidden_bias: Array1<f64>,
}

impl RbmGradient {
    pub fn dot(&self, other: &RbmGradient) -> f64 {
        (&self.weights * &other.weights).sum()
            + self.visible_bias.dot(&other.visible_bias)
            + self.hidden_bias.dot(&other.hidden_bias)
    }
}

impl RbmLayer {
    /// Zero biases, weights drawn from N(0, 0.01²).
    pub fn new<R: Rng + ?Sized>(
        n_visible: usize,
        n_hidden: usize,
        hidden: Activation,
        rng: &mut R,
    ) -> Self {
        let normal = Normal::new(0.0, INIT_WEIGHT_STD).expect("valid std");
        let weights = Array2::from_shape_simple_fn((n_hidden, n_visible), || normal.sample(rng));
        RbmLayer {
            weights,
            visible_bias: Array1::zeros(n_visible),
            hidden_bias: Array1::zeros(n_hidden),
            hidden,
        }
    }

    pub fn zeros(n_visible: usize, n_hidden: usize, hidden: Activation) -> Self {
        RbmLayer {
            weights: Array2::zeros((n_hidden, n_visible)),
            visible_bias: Array1::zeros(n_visible),
            hidden_bias: Array1::zeros(n_hidden),
            hidden,
        }
    }

    pub fn from_parts(
        weights: Array2<f64>,
        visible_bias: Array1<f64>,
        hidden_bias: Array1<f64>,
        hidden: Activation,
    ) -> Result<Self> {
        if weights.nrows() != hidden_bias.len() || weights.ncols() != visible_bias.len() {
            return Err(Error::DimensionMismatch(format!(
                "weights {:?} do not match biases (visible {}, hidden {})",
                weights.dim(),
                visible_bias.len(),
                hidden_bias.len()
            )));
        }
        let layer = RbmLayer {
            weights,
            visible_bias,
            hidden_bias,
            hidden,
        };
        if !layer.is_finite() {
            return Err(Error::InvalidArgument("RBM parameters must be finite".into()));
        }
        Ok(layer)
    }

    pub fn n_visible(&self) -> usize {
        self.visible_bias.len()
    }

    pub fn n_hidden(&self) -> usize {
        self.hidden_bias.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
            && self.visible_bias.iter().all(|b| b.is_finite())
            && self.hidden_bias.iter().all(|c| c.is_finite())
    }

    fn check_len(&self, what: &str, got: usize, expected: usize) -> Result<()> {
        if got != expected {
            return Err(Error::DimensionMismatch(format!(
                "{what} vector has length {got}, layer expects {expected}"
            )));
        }
        Ok(())
    }

    pub fn energy(&self, v: ArrayView1<f64>, h: ArrayView1<f64>) -> Result<f64> {
        self.check_len("visible", v.len(), self.n_visible())?;
        self.check_len("hidden", h.len(), self.n_hidden())?;
        let interaction = h.dot(&self.weights.dot(&v));
        Ok(-interaction - self.visible_bias.dot(&v) - self.hidden_bias.dot(&h))
    }

    /// `p(h_i = 1 | v) = logistic(c_i + Σ_j w_ij v_j)`, or the mean
    /// `c_i + Σ_j w_ij v_j` for linear hidden units.
    pub fn hidden_given_visible(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_len("visible", v.len(), self.n_visible())?;
        let mut act = self.weights.dot(&v) + &self.hidden_bias;
        if self.hidden == Activation::Logistic {
            act.mapv_inplace(logistic);
        }
        Ok(act)
    }

    /// `p(v_j = 1 | h) = logistic(b_j + Σ_i w_ij h_i)`.
    pub fn visible_given_hidden(&self, h: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_len("hidden", h.len(), self.n_hidden())?;
        let act = self.weights.t().dot(&h) + &self.visible_bias;
        Ok(act.mapv(logistic))
    }

    /// Row-wise hidden activations for a `batch x n_visible` matrix.
    pub fn hidden_batch(&self, v: ArrayView2<f64>) -> Array2<f64> {
        let mut act = v.dot(&self.weights.t()) + &self.hidden_bias;
        if self.hidden == Activation::Logistic {
            act.mapv_inplace(logistic);
        }
        act
    }

    /// Row-wise visible probabilities for a `batch x n_hidden` matrix.
    pub fn visible_batch(&self, h: ArrayView2<f64>) -> Array2<f64> {
        (h.dot(&self.weights) + &self.visible_bias).mapv(logistic)
    }

    /// Draws hidden states from their activations, row by row then unit by
    /// unit: Bernoulli for logistic units, mean plus N(0, 1) for linear ones.
    fn sample_hidden<R: Rng + ?Sized>(&self, probs: &Array2<f64>, rng: &mut R) -> Array2<f64> {
        let mut out = Array2::zeros(probs.dim());
        for (dst, &p) in out.iter_mut().zip(probs.iter()) {
            *dst = match self.hidden {
                Activation::Logistic => {
                    if rng.gen::<f64>() < p {
                        1.0
                    } else {
                        0.0
                    }
                }
                Activation::Linear => p + rng.sample::<f64, _>(StandardNormal),
            };
        }
        out
    }

    /// Contrastive-divergence statistics for one batch.
    ///
    /// Positive phase: data `v0` and hidden probabilities `h0`. Negative phase:
    /// sample `h` from `h0`, then alternate `v = p(v|h)`, `h = p(h|v)` using
    /// probabilities for `cd_steps` reconstructions. Returns the batch-averaged
    /// `<v h>_data - <v h>_recon` (and bias analogues) together with the mean
    /// squared error of the first reconstruction.
    pub fn cd_gradient<R: Rng + ?Sized>(
        &self,
        batch: ArrayView2<f64>,
        cd_steps: usize,
        rng: &mut R,
    ) -> Result<(RbmGradient, f64)> {
        if batch.nrows() == 0 {
            return Err(Error::InvalidArgument("contrastive divergence needs a non-empty batch".into()));
        }
        self.check_len("batch", batch.ncols(), self.n_visible())?;
        if cd_steps == 0 {
            return Err(Error::InvalidArgument("cd_steps must be >= 1".into()));
        }
        let n = batch.nrows() as f64;

        let h0 = self.hidden_batch(batch);
        let sampled = self.sample_hidden(&h0, rng);
        let mut v = self.visible_batch(sampled.view());
        let recon_error = (&v - &batch).mapv(|d| d * d).mean().unwrap_or(0.0);
        let mut h = self.hidden_batch(v.view());
        for _ in 1..cd_steps {
            v = self.visible_batch(h.view());
            h = self.hidden_batch(v.view());
        }

        let positive = h0.t().dot(&batch);
        let negative = h.t().dot(&v);
        let grad = RbmGradient {
            weights: (positive - negative) / n,
            visible_bias: (&batch - &v).sum_axis(Axis(0)) / n,
            hidden_bias: (&h0 - &h).sum_axis(Axis(0)) / n,
        };
        Ok((grad, recon_error))
    }

    /// Applies `params += lr * grad`.
    pub fn apply(&mut self, grad: &RbmGradient, lr: f64) {
        self.weights.scaled_add(lr, &grad.weights);
        self.visible_bias.scaled_add(lr, &grad.visible_bias);
        self.hidden_bias.scaled_add(lr, &grad.hidden_bias);
    }

    /// One CD-k step in place; returns the batch reconstruction error.
    pub fn cd_update<R: Rng + ?Sized>(
        &mut self,
        batch: ArrayView2<f64>,
        lr: f64,
        cd_steps: usize,
        rng: &mut R,
    ) -> Result<f64> {
        let (grad, err) = self.cd_gradient(batch, cd_steps, rng)?;
        self.apply(&grad, lr);
        Ok(err)
    }

    pub fn cd1_update<R: Rng + ?Sized>(
        &mut self,
        batch: ArrayView2<f64>,
        lr: f64,
        rng: &mut R,
    ) -> Result<f64> {
        self.cd_update(batch, lr, 1, rng)
    }

    /// Deterministic mean-field reconstruction error `mean((v - p(v|p(h|v)))²)`.
    pub fn reconstruction_error(&self, data: ArrayView2<f64>) -> f64 {
        if data.nrows() == 0 {
            return 0.0;
        }
        let recon = self.visible_batch(self.hidden_batch(data).view());
        (&recon - &data).mapv(|d| d * d).mean().unwrap_or(0.0)
    }
}
