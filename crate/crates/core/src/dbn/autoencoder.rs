//! Deterministic deep autoencoder obtained by unrolling an RBM stack.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::rbm::{logistic, RbmLayer};
use super::Activation;
use crate::error::{Error, Result};

/// Fully connected layer computing `f(x Wᵀ + b)` row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `n_out x n_in`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::DimensionMismatch(format!(
                "dense weights {:?} vs bias {}",
                weights.dim(),
                bias.len()
            )));
        }
        Ok(DenseLayer {
            weights,
            bias,
            activation,
        })
    }

    pub fn n_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn n_out(&self) -> usize {
        self.weights.nrows()
    }

    fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn pre_activation(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weights.t()) + &self.bias
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut z = self.pre_activation(x);
        if self.activation == Activation::Logistic {
            z.mapv_inplace(logistic);
        }
        z
    }
}

/// Encoder layers map the input down to the code; decoder layers map the code
/// back up. Encoder and decoder weights are independent.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub encoder: Vec<DenseLayer>,
    pub decoder: Vec<DenseLayer>,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl Autoencoder {
    /// Validates that the layer chain is dimensionally consistent and that the
    /// decoder mirrors the encoder.
    pub fn new(encoder: Vec<DenseLayer>, decoder: Vec<DenseLayer>) -> Result<Self> {
        if encoder.is_empty() || encoder.len() != decoder.len() {
            return Err(Error::DimensionMismatch(format!(
                "encoder has {} layers, decoder {}",
                encoder.len(),
                decoder.len()
            )));
        }
        let net = Autoencoder { encoder, decoder };
        let chain: Vec<&DenseLayer> = net.layers().collect();
        for pair in chain.windows(2) {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(Error::DimensionMismatch(format!(
                    "layer output {} feeds input {}",
                    pair[0].n_out(),
                    pair[1].n_in()
                )));
            }
        }
        let sizes = net.layer_sizes();
        let mut mirrored = net.decoder.iter().map(DenseLayer::n_out).collect::<Vec<_>>();
        mirrored.reverse();
        if mirrored != sizes[..sizes.len() - 1] {
            return Err(Error::DimensionMismatch(
                "decoder does not mirror the encoder".into(),
            ));
        }
        if net.decoder.last().map(|l| l.activation) != Some(Activation::Logistic) {
            return Err(Error::InvalidArgument(
                "the reconstruction layer must be logistic".into(),
            ));
        }
        Ok(net)
    }

    /// Unrolls a greedily trained stack: the encoder uses each RBM's weights
    /// and hidden biases bottom-up; the decoder uses transposed copies with the
    /// visible biases top-down.
    pub fn unroll(stack: &[RbmLayer]) -> Result<Self> {
        if stack.is_empty() {
            return Err(Error::InvalidArgument("cannot unroll an empty stack".into()));
        }
        for (k, pair) in stack.windows(2).enumerate() {
            if pair[0].n_hidden() != pair[1].n_visible() {
                return Err(Error::DimensionMismatch(format!(
                    "RBM {k} has {} hidden units but RBM {} has {} visible units",
                    pair[0].n_hidden(),
                    k + 1,
                    pair[1].n_visible()
                )));
            }
        }
        let encoder = stack
            .iter()
            .map(|r| DenseLayer::new(r.weights.clone(), r.hidden_bias.clone(), r.hidden))
            .collect::<Result<Vec<_>>>()?;
        let decoder = stack
            .iter()
            .rev()
            .map(|r| {
                DenseLayer::new(
                    r.weights.t().to_owned(),
                    r.visible_bias.clone(),
                    Activation::Logistic,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Autoencoder::new(encoder, decoder)
    }

    /// Input, hidden and code sizes, e.g. `[900, 1000, 500, 250, 20]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.encoder[0].n_in()];
        sizes.extend(self.encoder.iter().map(DenseLayer::n_out));
        sizes
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].n_in()
    }

    pub fn code_dim(&self) -> usize {
        self.encoder[self.encoder.len() - 1].n_out()
    }

    /// Encoder layers followed by decoder layers.
    pub fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.encoder.iter().chain(self.decoder.iter())
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut DenseLayer> {
        self.encoder.iter_mut().chain(self.decoder.iter_mut())
    }

    pub fn encode(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut a = x.to_owned();
        for l in &self.encoder {
            a = l.forward(a.view());
        }
        a
    }

    pub fn decode(&self, code: ArrayView2<f64>) -> Array2<f64> {
        let mut a = code.to_owned();
        for l in &self.decoder {
            a = l.forward(a.view());
        }
        a
    }

    pub fn reconstruct(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.decode(self.encode(x).view())
    }

    pub fn n_params(&self) -> usize {
        self.layers().map(DenseLayer::n_params).sum()
    }

    /// All parameters: per layer (encoder first), row-major weights then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in self.layers() {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters supplied, network has {}",
                params.len(),
                self.n_params()
            )));
        }
        let mut rest = params;
        for l in self.layers_mut() {
            let (w, tail) = rest.split_at(l.weights.len());
            l.weights.iter_mut().zip(w).for_each(|(d, s)| *d = *s);
            let (b, tail) = tail.split_at(l.bias.len());
            l.bias.iter_mut().zip(b).for_each(|(d, s)| *d = *s);
            rest = tail;
        }
        Ok(())
    }

    /// Summed cross-entropy between the rows of `x` (targets in `[0, 1]`) and
    /// their reconstructions.
    pub fn loss(&self, x: ArrayView2<f64>) -> f64 {
        let mut a = self.encode(x);
        let (last, hidden) = self.decoder.split_last().expect("non-empty decoder");
        for l in hidden {
            a = l.forward(a.view());
        }
        let logits = last.pre_activation(a.view());
        cross_entropy_from_logits(logits.view(), x)
    }

    /// Loss and its gradient with respect to `params()`, by reverse-mode
    /// differentiation through every layer.
    pub fn loss_and_gradient(&self, x: ArrayView2<f64>) -> (f64, Vec<f64>) {
        let layers: Vec<&DenseLayer> = self.layers().collect();
        let n_layers = layers.len();

        // activations[k] is the input of layer k; the last entry is the logits.
        let mut activations: Vec<Array2<f64>> = Vec::with_capacity(n_layers + 1);
        activations.push(x.to_owned());
        for (k, l) in layers.iter().enumerate() {
            let input = activations[k].view();
            let out = if k + 1 == n_layers {
                l.pre_activation(input)
            } else {
                l.forward(input)
            };
            activations.push(out);
        }
        let logits = &activations[n_layers];
        let loss = cross_entropy_from_logits(logits.view(), x);

        // d loss / d logits for logistic outputs under cross-entropy.
        let mut delta = logits.mapv(logistic) - x;
        let mut grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(n_layers);
        for k in (0..n_layers).rev() {
            let input = &activations[k];
            let gw = delta.t().dot(input);
            let gb = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut back = delta.dot(&layers[k].weights);
                if layers[k - 1].activation == Activation::Logistic {
                    back.zip_mut_with(input, |d, &a| *d *= a * (1.0 - a));
                }
                delta = back;
            }
            grads.push((gw, gb));
        }
        grads.reverse();

        let mut flat = Vec::with_capacity(self.n_params());
        for (gw, gb) in grads {
            flat.extend(gw.iter());
            flat.extend(gb.iter());
        }
        (loss, flat)
    }
}

fn cross_entropy_from_logits(logits: ArrayView2<f64>, targets: ArrayView2<f64>) -> f64 {
    logits
        .iter()
        .zip(targets.iter())
        .map(|(&z, &t)| softplus(z) - t * z)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, Array};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stack(sizes: &[usize], seed: u64, scale: f64) -> Vec<RbmLayer> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = sizes.len() - 2;
        sizes
            .windows(2)
            .enumerate()
            .map(|(k, p)| {
                let act = if k == last { Activation::Linear } else { Activation::Logistic };
                let mut l = RbmLayer::zeros(p[0], p[1], act);
                l.weights.mapv_inplace(|_| rng.gen_range(-scale..scale));
                l.visible_bias.mapv_inplace(|_| rng.gen_range(-scale..scale));
                l.hidden_bias.mapv_inplace(|_| rng.gen_range(-scale..scale));
                l
            })
            .collect()
    }

    #[test]
    fn unroll_default_architecture_shape() {
        let stack: Vec<RbmLayer> = [900, 1000, 500, 250, 20]
            .windows(2)
            .enumerate()
            .map(|(k, p)| {
                let act = if k == 3 { Activation::Linear } else { Activation::Logistic };
                RbmLayer::zeros(p[0], p[1], act)
            })
            .collect();
        let net = Autoencoder::unroll(&stack).unwrap();
        let dims: Vec<(usize, usize)> = net.layers().map(|l| (l.n_in(), l.n_out())).collect();
        assert_eq!(
            dims,
            [
                (900, 1000),
                (1000, 500),
                (500, 250),
                (250, 20),
                (20, 250),
                (250, 500),
                (500, 1000),
                (1000, 900)
            ]
        );
        assert_eq!(net.encoder[3].activation, Activation::Linear);
        assert!(net.decoder.iter().all(|l| l.activation == Activation::Logistic));
    }

    #[test]
    fn unroll_single_rbm_and_chain_errors() {
        let net = Autoencoder::unroll(&[RbmLayer::zeros(4, 2, Activation::Linear)]).unwrap();
        assert_eq!(net.layers().count(), 2);
        let bad = [
            RbmLayer::zeros(4, 3, Activation::Logistic),
            RbmLayer::zeros(2, 1, Activation::Linear),
        ];
        assert!(matches!(Autoencoder::unroll(&bad), Err(Error::DimensionMismatch(_))));
        assert!(Autoencoder::unroll(&[]).is_err());
    }

    #[test]
    fn unrolled_pass_equals_stack_up_down() {
        let stack = random_stack(&[5, 4, 3, 2], 11, 1.0);
        let net = Autoencoder::unroll(&stack).unwrap();
        let x = arr2(&[[0.1, 0.9, 0.3, 0.0, 1.0], [0.5, 0.5, 0.2, 0.8, 0.6]]);
        let out = net.reconstruct(x.view());
        for (row, got) in x.rows().into_iter().zip(out.rows()) {
            let mut a = row.to_owned();
            for r in &stack {
                a = r.hidden_given_visible(a.view()).unwrap();
            }
            for r in stack.iter().rev() {
                a = r.visible_given_hidden(a.view()).unwrap();
            }
            for (p, q) in a.iter().zip(got.iter()) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unrolled_weights_are_untied() {
        let stack = random_stack(&[3, 2], 1, 0.5);
        let mut net = Autoencoder::unroll(&stack).unwrap();
        net.encoder[0].weights[(0, 0)] += 1.0;
        assert_eq!(net.decoder[0].weights[(0, 0)], stack[0].weights[(0, 0)]);
    }

    #[test]
    fn hand_computed_code() {
        // 4 -> 2 (logistic) -> 1 (linear)
        let l1 = DenseLayer::new(
            arr2(&[[1.0, -1.0, 0.5, 0.0], [0.0, 2.0, 0.0, -1.0]]),
            arr1(&[0.1, -0.2]),
            Activation::Logistic,
        )
        .unwrap();
        let l2 = DenseLayer::new(arr2(&[[3.0, -2.0]]), arr1(&[0.5]), Activation::Linear).unwrap();
        let d1 = DenseLayer::new(arr2(&[[1.0], [1.0]]), arr1(&[0.0, 0.0]), Activation::Logistic).unwrap();
        let d2 = DenseLayer::new(Array2::zeros((4, 2)), Array1::zeros(4), Activation::Logistic).unwrap();
        let net = Autoencoder::new(vec![l1, l2], vec![d1, d2]).unwrap();
        let x = [0.2, 0.4, 1.0, 0.6];
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let h0 = sig(0.1 + 0.2 - 0.4 + 0.5);
        let h1 = sig(-0.2 + 0.8 - 0.6);
        let code = 0.5 + 3.0 * h0 - 2.0 * h1;
        let got = net.encode(arr2(&[x]).view());
        assert!((got[(0, 0)] - code).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let stack = random_stack(&[6, 4, 2], 5, 0.8);
        let net = Autoencoder::unroll(&stack).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array::from_shape_simple_fn((3, 6), || rng.gen::<f64>());
        let (_, grad) = net.loss_and_gradient(x.view());
        let p0 = net.params();
        let h = 1e-5;
        let mut probe = net.clone();
        for i in 0..p0.len() {
            let mut p = p0.clone();
            p[i] = p0[i] + h;
            probe.set_params(&p).unwrap();
            let up = probe.loss(x.view());
            p[i] = p0[i] - h;
            probe.set_params(&p).unwrap();
            let down = probe.loss(x.view());
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-8);
            assert!(rel < 1e-4, "param {i}: analytic {} vs fd {fd}", grad[i]);
        }
    }

    #[test]
    fn loss_agrees_with_gradient_pass() {
        let net = Autoencoder::unroll(&random_stack(&[6, 3], 8, 1.0)).unwrap();
        let x = arr2(&[[0.0, 0.2, 0.4, 0.6, 0.8, 1.0]]);
        let (l, _) = net.loss_and_gradient(x.view());
        assert!((l - net.loss(x.view())).abs() < 1e-12);
    }

    #[test]
    fn params_round_trip() {
        let mut net = Autoencoder::unroll(&random_stack(&[5, 3, 2], 4, 1.0)).unwrap();
        let p: Vec<f64> = (0..net.n_params()).map(|i| i as f64).collect();
        net.set_params(&p).unwrap();
        assert_eq!(net.params(), p);
        assert!(net.set_params(&p[1..]).is_err());
    }
}
