//! Binary model file.
//!
//! All integers and floats are little-endian.
//!
//! | field                  | type                         |
//! |------------------------|------------------------------|
//! | magic                  | `b"EVDBN"`                   |
//! | version                | u8 (= 1)                     |
//! | sensor width, height   | u32, u32                     |
//! | layer count `L`        | u32                          |
//! | layer sizes            | `L` x u32                    |
//! | activation tags        | `2(L-1)` x u8, layer order   |
//! | normalizer scale       | f64                          |
//! | quantization scale     | f64                          |
//! | per layer, in order    | weights (row-major f64), bias (f64) |
//! | CRC-32                 | u32 over all preceding bytes |
//!
//! Layer order is encoder bottom-up followed by decoder top-down. Activation
//! tags are 0 for logistic and 1 for linear.

use ndarray::{Array1, Array2};

use super::{Activation, Autoencoder, DbnModel, DenseLayer};
use crate::bytes::{ByteReader, ByteWriter};
use crate::error::{Error, Result};
use crate::event_io::SensorGeometry;
use crate::superframe::Normalizer;

pub const MODEL_MAGIC: &str = "EVDBN";
pub const MODEL_VERSION: u8 = 1;

pub fn write_model(model: &DbnModel) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(MODEL_MAGIC.as_bytes());
    w.u8(MODEL_VERSION);
    w.u32(model.geometry.width);
    w.u32(model.geometry.height);
    let sizes = model.layer_sizes();
    w.u32(sizes.len() as u32);
    for &s in &sizes {
        w.u32(s as u32);
    }
    for l in model.net.layers() {
        w.u8(l.activation.tag());
    }
    w.f64(model.normalizer.scale());
    w.f64(model.quant_scale);
    for l in model.net.layers() {
        l.weights.iter().for_each(|&v| w.f64(v));
        l.bias.iter().for_each(|&v| w.f64(v));
    }
    w.finish()
}

pub fn read_model(data: &[u8]) -> Result<DbnModel> {
    let mut r = ByteReader::checked(data)?;
    r.magic(MODEL_MAGIC)?;
    let version = r.u8("version")?;
    if version != MODEL_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let geometry = SensorGeometry::new(r.u32("sensor width")?, r.u32("sensor height")?)?;
    let n_sizes = r.u32("layer count")? as usize;
    if !(2..=64).contains(&n_sizes) {
        return Err(Error::Format(format!("implausible layer count {n_sizes}")));
    }
    let sizes = (0..n_sizes)
        .map(|_| r.u32("layer size").map(|s| s as usize))
        .collect::<Result<Vec<_>>>()?;
    if sizes.contains(&0) {
        return Err(Error::Format("zero layer size".into()));
    }
    let n_layers = 2 * (n_sizes - 1);
    let tags = (0..n_layers)
        .map(|_| {
            let t = r.u8("activation tag")?;
            Activation::from_tag(t).ok_or_else(|| Error::Format(format!("unknown activation tag {t}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let normalizer = Normalizer::new(r.f64("normalizer scale")?)?;
    let quant_scale = r.f64("quantization scale")?;

    // (n_in, n_out) for each layer: encoder down the sizes, decoder back up.
    let mut dims: Vec<(usize, usize)> = sizes.windows(2).map(|p| (p[0], p[1])).collect();
    dims.extend(sizes.windows(2).rev().map(|p| (p[1], p[0])));

    let needed: usize = dims.iter().map(|(i, o)| (i * o + o) * 8).sum();
    if r.remaining() != needed {
        return Err(Error::Format(format!(
            "parameter section has {} bytes, layer sizes require {needed}",
            r.remaining()
        )));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for ((n_in, n_out), act) in dims.into_iter().zip(tags) {
        let weights = (0..n_in * n_out)
            .map(|_| r.f64("weights"))
            .collect::<Result<Vec<_>>>()?;
        let bias = (0..n_out).map(|_| r.f64("bias")).collect::<Result<Vec<_>>>()?;
        let weights = Array2::from_shape_vec((n_out, n_in), weights).expect("sized above");
        layers.push(DenseLayer::new(weights, Array1::from(bias), act)?);
    }
    r.expect_end()?;
    let decoder = layers.split_off(n_sizes - 1);
    let net = Autoencoder::new(layers, decoder)?;
    DbnModel::new(net, normalizer, quant_scale, geometry)
}
