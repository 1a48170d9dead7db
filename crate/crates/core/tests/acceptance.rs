//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.
//!
//! Golden files under `tests/data` are regenerated with `EVDBN_BLESS=1`.

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use evdbn::baseline::{self, BaselineMode, BaselineStream};
use evdbn::codec;
use evdbn::config::CodecConfig;
use evdbn::dbn::{logistic, read_model, write_model, Activation, Autoencoder, DbnModel, RbmLayer};
use evdbn::entropy::{self, CompressedStream, SymbolTable};
use evdbn::event_io::{raw_size_bits, Polarity, SensorGeometry};
use evdbn::superframe::{aggregate, Normalizer};
use evdbn::synth::{self, MovingBar};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

const DT_SWEEP_MS: [f64; 5] = [0.5, 5.0, 10.0, 20.0, 30.0];

// ---------------------------------------------------------------- Huffman

fn huffman_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x4855_4646);
    let mut worst_gap = f64::INFINITY;
    let mut single = 0;
    for trial in 0..200 {
        let alphabet_size = rng.gen_range(1..=256usize);
        let len = rng.gen_range(1..=10_000usize);
        let alphabet: Vec<i64> = (0..alphabet_size)
            .map(|_| rng.gen_range(-1_000_000i64..1_000_000))
            .collect();
        // skewed weights so code lengths vary
        let weights: Vec<f64> = (0..alphabet_size).map(|_| rng.gen::<f64>().powi(4) + 1e-3).collect();
        let total: f64 = weights.iter().sum();
        let symbols: Vec<i64> = (0..len)
            .map(|_| {
                let mut u = rng.gen::<f64>() * total;
                for (s, w) in alphabet.iter().zip(&weights) {
                    if u < *w {
                        return *s;
                    }
                    u -= w;
                }
                *alphabet.last().unwrap()
            })
            .collect();

        let mut counts: BTreeMap<i64, u64> = BTreeMap::new();
        for &s in &symbols {
            *counts.entry(s).or_default() += 1;
        }
        let table = SymbolTable::from_frequencies(&counts).map_err(|e| e.to_string())?;
        let bits = entropy::encode_symbols(&symbols, &table).map_err(|e| e.to_string())?;
        let decoded = entropy::decode_symbols(&bits, &table, symbols.len()).map_err(|e| e.to_string())?;
        ensure!(decoded == symbols, "trial {trial}: round trip differs");

        let codes: Vec<(u64, u8)> = counts.keys().map(|&s| table.code(s).unwrap()).collect();
        for (i, &(ca, la)) in codes.iter().enumerate() {
            for (j, &(cb, lb)) in codes.iter().enumerate() {
                if i != j && la <= lb {
                    ensure!(cb >> (lb - la) != ca, "trial {trial}: code {i} is a prefix of code {j}");
                }
            }
        }
        let kraft: u128 = codes.iter().map(|&(_, l)| 1u128 << (64 - l)).sum();
        ensure!(kraft <= 1u128 << 64, "trial {trial}: Kraft sum exceeds 1");

        let n = len as f64;
        let h: f64 = counts.values().map(|&c| -(c as f64 / n) * (c as f64 / n).log2()).sum();
        let mean: f64 = counts
            .iter()
            .map(|(s, &c)| c as f64 * f64::from(table.code(*s).unwrap().1))
            .sum::<f64>()
            / n;
        if counts.len() == 1 {
            // a lone symbol gets a 1-bit code, so the mean is exactly H + 1
            ensure!(mean == 1.0, "trial {trial}: lone symbol coded with {mean} bits");
            single += 1;
        } else {
            ensure!(mean < h + 1.0, "trial {trial}: mean length {mean} >= H + 1 = {}", h + 1.0);
            worst_gap = worst_gap.min(h + 1.0 - mean);
        }
        ensure!(bits.bit_len == (mean * n).round() as u64, "trial {trial}: payload size");
    }
    Ok(format!(
        "200 streams ({single} single-symbol); min (H+1 - mean length) = {worst_gap:.4} bits"
    ))
}

// ---------------------------------------------------------------- RBM

fn random_rbm(rng: &mut ChaCha8Rng, n_visible: usize, n_hidden: usize, std: f64) -> RbmLayer {
    let normal = Normal::new(0.0, std).unwrap();
    let weights = Array2::from_shape_simple_fn((n_hidden, n_visible), || normal.sample(rng));
    let vb = Array1::from_shape_simple_fn(n_visible, || normal.sample(rng));
    let hb = Array1::from_shape_simple_fn(n_hidden, || normal.sample(rng));
    RbmLayer::from_parts(weights, vb, hb, Activation::Logistic).unwrap()
}

fn binary_vector(bits: usize, len: usize) -> Array1<f64> {
    Array1::from_shape_fn(len, |i| ((bits >> i) & 1) as f64)
}

/// `log Z` with the hidden layer summed out analytically.
fn log_partition(rbm: &RbmLayer) -> f64 {
    let (n, m) = (rbm.n_visible(), rbm.n_hidden());
    let terms: Vec<f64> = (0..1usize << n)
        .map(|vb| {
            let v = binary_vector(vb, n);
            let mut t = rbm.visible_bias.dot(&v);
            for i in 0..m {
                let a = rbm.hidden_bias[i] + rbm.weights.row(i).dot(&v);
                t += a.exp().ln_1p();
            }
            t
        })
        .collect();
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Exact average log-likelihood gradient of `data`, flattened as
/// weights (row-major), visible bias, hidden bias.
fn exact_gradient(rbm: &RbmLayer, data: &Array2<f64>) -> Vec<f64> {
    let (n, m) = (rbm.n_visible(), rbm.n_hidden());
    let log_z = log_partition(rbm);
    let mut model_w = Array2::<f64>::zeros((m, n));
    let mut model_v = Array1::<f64>::zeros(n);
    let mut model_h = Array1::<f64>::zeros(m);
    for vb in 0..1usize << n {
        let v = binary_vector(vb, n);
        for hb in 0..1usize << m {
            let h = binary_vector(hb, m);
            let e = -(h.dot(&rbm.weights.dot(&v)) + rbm.visible_bias.dot(&v) + rbm.hidden_bias.dot(&h));
            let p = (-e - log_z).exp();
            for i in 0..m {
                for j in 0..n {
                    model_w[[i, j]] += p * h[i] * v[j];
                }
            }
            model_v.scaled_add(p, &v);
            model_h.scaled_add(p, &h);
        }
    }
    let rows = data.nrows() as f64;
    let mut data_w = Array2::<f64>::zeros((m, n));
    let mut data_v = Array1::<f64>::zeros(n);
    let mut data_h = Array1::<f64>::zeros(m);
    for v in data.rows() {
        let ph = Array1::from_shape_fn(m, |i| logistic(rbm.hidden_bias[i] + rbm.weights.row(i).dot(&v)));
        for i in 0..m {
            for j in 0..n {
                data_w[[i, j]] += ph[i] * v[j] / rows;
            }
        }
        data_v.scaled_add(1.0 / rows, &v);
        data_h.scaled_add(1.0 / rows, &ph);
    }
    (data_w - model_w)
        .iter()
        .chain((data_v - model_v).iter())
        .chain((data_h - model_h).iter())
        .copied()
        .collect()
}

fn rbm_math() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0052_424d);
    let mut worst_norm: f64 = 0.0;
    for trial in 0..50 {
        let n = rng.gen_range(1..=11usize);
        let m = rng.gen_range(1..=12 - n);
        let rbm = random_rbm(&mut rng, n, m, 1.0);
        let log_z = log_partition(&rbm);
        let mut total: f64 = 0.0;
        for vb in 0..1usize << n {
            let v = binary_vector(vb, n);
            for hb in 0..1usize << m {
                let h = binary_vector(hb, m);
                let e = rbm.energy(v.view(), h.view()).map_err(|e| e.to_string())?;
                total += (-e - log_z).exp();
            }
        }
        worst_norm = worst_norm.max((total - 1.0).abs());
        ensure!((total - 1.0).abs() < 1e-10, "trial {trial} ({n}x{m}): sum p = {total}");
    }

    let mut aligned = 0;
    let mut min_cos = f64::INFINITY;
    for _ in 0..100 {
        let n = rng.gen_range(2..=7usize);
        let m = rng.gen_range(1..=10 - n);
        let rbm = random_rbm(&mut rng, n, m, 0.5);
        let rows = rng.gen_range(4..=12usize);
        let data = Array2::from_shape_simple_fn((rows, n), || f64::from(rng.gen::<bool>()));
        let exact = exact_gradient(&rbm, &data);

        let samples = 1000;
        let mut expected = vec![0.0; exact.len()];
        for _ in 0..samples {
            let (g, _) = rbm.cd_gradient(data.view(), 1, &mut rng).map_err(|e| e.to_string())?;
            for (acc, v) in expected
                .iter_mut()
                .zip(g.weights.iter().chain(g.visible_bias.iter()).chain(g.hidden_bias.iter()))
            {
                *acc += v / samples as f64;
            }
        }
        let dot: f64 = expected.iter().zip(&exact).map(|(a, b)| a * b).sum();
        let norms = expected.iter().map(|a| a * a).sum::<f64>().sqrt() * exact.iter().map(|a| a * a).sum::<f64>().sqrt();
        if dot > 0.0 {
            aligned += 1;
        }
        min_cos = min_cos.min(dot / norms);
    }
    ensure!(aligned >= 95, "CD-1 aligned with the exact gradient in only {aligned}/100 trials");
    Ok(format!(
        "max |sum p - 1| = {worst_norm:.2e}; CD-1 aligned {aligned}/100 (min cosine {min_cos:.3})"
    ))
}

// ---------------------------------------------------------------- gradient check

fn gradient_check() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(0x4743_0000 + seed);
        let stack = vec![
            RbmLayer::from_parts(
                Array2::from_shape_simple_fn((4, 6), || rng.gen_range(-1.0..1.0)),
                Array1::from_shape_simple_fn(6, || rng.gen_range(-0.5..0.5)),
                Array1::from_shape_simple_fn(4, || rng.gen_range(-0.5..0.5)),
                Activation::Logistic,
            )
            .unwrap(),
            RbmLayer::from_parts(
                Array2::from_shape_simple_fn((2, 4), || rng.gen_range(-1.0..1.0)),
                Array1::from_shape_simple_fn(4, || rng.gen_range(-0.5..0.5)),
                Array1::from_shape_simple_fn(2, || rng.gen_range(-0.5..0.5)),
                Activation::Linear,
            )
            .unwrap(),
        ];
        let mut net = Autoencoder::unroll(&stack).map_err(|e| e.to_string())?;
        let widths: Vec<usize> = std::iter::once(6).chain(net.layers().map(|l| l.n_out())).collect();
        ensure!(widths == [6, 4, 2, 4, 6], "layer widths {widths:?}");
        // untie the decoder so every parameter is distinct
        let mut p0 = net.params();
        p0.iter_mut().for_each(|p| *p += rng.gen_range(-0.1..0.1));
        net.set_params(&p0).map_err(|e| e.to_string())?;

        let x = Array2::from_shape_simple_fn((4, 6), || rng.gen::<f64>());
        let (_, grad) = net.loss_and_gradient(x.view());
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
            worst = worst.max(rel);
            ensure!(rel < 1e-4, "seed {seed} param {i}: analytic {} vs numeric {fd} (rel {rel:.2e})", grad[i]);
            checked += 1;
        }
    }
    Ok(format!("{checked} parameters over 5 nets; max relative error {worst:.2e}"))
}

// ---------------------------------------------------------------- conservation

fn conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x434f_4e53);
    let mut frames_checked = 0usize;
    for trial in 0..100u64 {
        let g = SensorGeometry::new(rng.gen_range(1..=80), rng.gen_range(1..=70)).unwrap();
        let n = rng.gen_range(0..=3000);
        let duration = rng.gen_range(0.001..0.3);
        let stream = synth::uniform_random(g, n, duration, trial);
        let on = stream.events().iter().filter(|e| e.p == Polarity::On).count() as u64;
        let off = stream.len() as u64 - on;
        for dt_ms in DT_SWEEP_MS {
            let frames = aggregate(&stream, dt_ms * 1e-3).map_err(|e| e.to_string())?;
            let w = g.width as usize;
            let (mut left, mut right) = (0u64, 0u64);
            for f in &frames {
                for r in 0..f.rows() {
                    for c in 0..f.cols() {
                        let v = u64::from(f.get(r, c));
                        if c < w {
                            left += v;
                        } else {
                            right += v;
                        }
                    }
                }
            }
            ensure!(
                left + right == stream.len() as u64,
                "trial {trial} dt {dt_ms} ms: total {} vs {} events",
                left + right,
                stream.len()
            );
            ensure!(left == off && right == on, "trial {trial} dt {dt_ms} ms: halves {left}/{right} vs OFF/ON {off}/{on}");
            frames_checked += frames.len();
        }
    }
    Ok(format!("100 streams x 5 windows, {frames_checked} frames"))
}

// ---------------------------------------------------------------- pipeline

fn desk_pipeline() -> Result<(String, Vec<(f64, f64)>), String> {
    let stream = MovingBar::desk_scale(1).generate();
    ensure!(stream.len() >= 50_000, "only {} events", stream.len());
    let cfg = CodecConfig {
        sensor: Some(stream.geometry()),
        finetune_epochs: Some(2),
        ..CodecConfig::default()
    };
    let trained = codec::train(&stream, &cfg).map_err(|e| e.to_string())?;

    let mut sweep = Vec::new();
    let mut at_10 = None;
    for dt_ms in DT_SWEEP_MS {
        let report = codec::evaluate(&stream, &trained.model, dt_ms * 1e-3).map_err(|e| e.to_string())?;
        let cr = report.e2e_cr.ok_or("no compression ratio")?;
        if dt_ms == 10.0 {
            at_10 = Some(report.clone());
        }
        sweep.push((dt_ms, cr));
    }
    let r = at_10.expect("10 ms is in the sweep");
    let cr = r.e2e_cr.unwrap();
    // reference point: PSNR of an all-zero reconstruction
    let frames = aggregate(&stream, 0.01).map_err(|e| e.to_string())?;
    let original: Vec<f64> = frames.iter().flat_map(|f| f.normalized(&trained.model.normalizer)).collect();
    let zeros = vec![0.0; original.len()];
    let floor = evdbn::metrics::psnr(&original, &zeros, 1.0).map_err(|e| e.to_string())?;
    let summary = format!(
        "{} events, {} blocks, fine-tune loss {:.2} -> {:.2}; at 10 ms e2e_cr {cr:.2}, PSNR {} dB (all-zero output {floor} dB)",
        stream.len(),
        trained.block_count,
        trained.fine_tune.initial_loss,
        trained.fine_tune.final_loss(),
        r.psnr
    );
    ensure!(cr > 1.0, "{summary}: e2e_cr not above 1");
    ensure!(r.psnr.exceeds(20.0), "{summary}: PSNR not above 20 dB");
    Ok((summary, sweep))
}

fn cr_trend(sweep: &[(f64, f64)]) -> Outcome {
    let line = sweep
        .iter()
        .map(|(dt, cr)| format!("{dt}ms:{cr:.2}"))
        .collect::<Vec<_>>()
        .join(" ");
    for w in sweep.windows(2) {
        ensure!(w[1].1 >= w[0].1, "e2e_cr drops from {} ms to {} ms: {line}", w[0].0, w[1].0);
    }
    Ok(line)
}

// ---------------------------------------------------------------- baselines

fn baseline_sanity() -> Outcome {
    let g = SensorGeometry::new(240, 180).unwrap();
    let stream = synth::constant_rate(g, 20_000, 25, 7);
    let raw = raw_size_bits(&stream);
    let mut crs = Vec::new();
    for mode in [BaselineMode::PerField, BaselineMode::DeltaTime] {
        let encoded = BaselineStream::encode(&stream, mode).map_err(|e| e.to_string())?;
        let bytes = encoded.to_bytes();
        let back = BaselineStream::from_bytes(&bytes)
            .and_then(|b| b.decode())
            .map_err(|e| e.to_string())?;
        ensure!(back == stream, "{mode:?} is not lossless");
        ensure!(encoded.size_bits() == 8 * bytes.len() as u64, "{mode:?} size accounting");
        crs.push(raw as f64 / encoded.size_bits() as f64);
    }
    let plain = raw as f64 / baseline::huffman_raw(&stream).map_err(|e| e.to_string())? as f64;
    let delta = raw as f64 / baseline::delta_huffman(&stream).map_err(|e| e.to_string())? as f64;
    ensure!((plain - crs[0]).abs() < 1e-12 && (delta - crs[1]).abs() < 1e-12, "size helpers disagree");
    ensure!(delta > plain, "delta-huffman CR {delta:.3} not above huffman CR {plain:.3}");
    Ok(format!("huffman CR {plain:.3}, delta-huffman CR {delta:.3}"))
}

// ---------------------------------------------------------------- golden files

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

/// Small 900-16-8-4 model with seeded non-trivial weights.
fn golden_model() -> DbnModel {
    let mut rng = ChaCha8Rng::seed_from_u64(0x474f_4c44);
    let sizes = [900, 16, 8, 4];
    let stack: Vec<RbmLayer> = sizes
        .windows(2)
        .enumerate()
        .map(|(k, p)| {
            let act = if k + 2 == sizes.len() { Activation::Linear } else { Activation::Logistic };
            random_rbm(&mut rng, p[0], p[1], 0.3).with_activation(act)
        })
        .collect();
    let net = Autoencoder::unroll(&stack).unwrap();
    DbnModel::new(net, Normalizer::new(3.0).unwrap(), 4.0, SensorGeometry::new(48, 32).unwrap()).unwrap()
}

trait WithActivation {
    fn with_activation(self, act: Activation) -> Self;
}

impl WithActivation for RbmLayer {
    fn with_activation(self, act: Activation) -> Self {
        RbmLayer::from_parts(self.weights, self.visible_bias, self.hidden_bias, act).unwrap()
    }
}

fn golden_files() -> Outcome {
    let dir = data_dir();
    let model_path = dir.join("golden_model.evdbn");
    let stream_path = dir.join("golden_stream.evcmp");
    if std::env::var_os("EVDBN_BLESS").is_some() {
        let model = golden_model();
        let events = synth::uniform_random(model.geometry, 400, 0.05, 11);
        let cs = codec::compress(&events, &model, 0.01).map_err(|e| e.to_string())?;
        std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
        std::fs::write(&model_path, write_model(&model)).map_err(|e| e.to_string())?;
        std::fs::write(&stream_path, cs.to_bytes()).map_err(|e| e.to_string())?;
    }
    let model_bytes = std::fs::read(&model_path).map_err(|e| format!("{}: {e}", model_path.display()))?;
    let stream_bytes = std::fs::read(&stream_path).map_err(|e| format!("{}: {e}", stream_path.display()))?;

    let model = read_model(&model_bytes).map_err(|e| e.to_string())?;
    ensure!(write_model(&model) == model_bytes, "model file changed across read -> write");
    ensure!(model == golden_model(), "golden model differs from its seeded construction");
    ensure!(write_model(&golden_model()) == model_bytes, "model writer output changed");

    let cs = CompressedStream::from_bytes(&stream_bytes).map_err(|e| e.to_string())?;
    ensure!(cs.to_bytes() == stream_bytes, "container changed across read -> write");
    let again = CompressedStream::from_bytes(&cs.to_bytes()).map_err(|e| e.to_string())?;
    ensure!(again == cs, "container differs after a second round trip");
    let frames = codec::decompress(&cs, &model).map_err(|e| e.to_string())?;
    ensure!(frames.len() as u32 == cs.header.frame_count, "decoded frame count");
    Ok(format!(
        "model {} bytes, container {} bytes ({} frames)",
        model_bytes.len(),
        stream_bytes.len(),
        frames.len()
    ))
}

// ---------------------------------------------------------------- runner

fn run(id: usize, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = panic::catch_unwind(AssertUnwindSafe(f))
        .unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        })
        .and_then(|detail| {
            let took = start.elapsed();
            if took > limit {
                Err(format!("{detail}; took {took:.1?}, limit {limit:?}"))
            } else {
                Ok(detail)
            }
        });
    let took = start.elapsed();
    match &outcome {
        Ok(d) => println!("criterion {id} [{name}] PASS ({took:.1?}): {d}"),
        Err(d) => println!("criterion {id} [{name}] FAIL ({took:.1?}): {d}"),
    }
    outcome.is_ok()
}

fn main() {
    let min = |m: u64| Duration::from_secs(60 * m);
    let mut ok = true;
    ok &= run(1, "huffman", Duration::from_secs(30), huffman_correctness);
    ok &= run(2, "rbm-math", min(2), rbm_math);
    ok &= run(3, "gradient-check", min(1), gradient_check);
    ok &= run(4, "conservation", min(1), conservation);

    let mut sweep = None;
    ok &= run(5, "desk-pipeline", min(30), || {
        desk_pipeline().map(|(summary, s)| {
            sweep = Some(s);
            summary
        })
    });
    ok &= run(6, "cr-trend", min(10), || match &sweep {
        Some(s) => cr_trend(s),
        None => Err("pipeline did not complete".into()),
    });
    ok &= run(7, "baseline", min(1), baseline_sanity);
    ok &= run(8, "golden-files", Duration::from_secs(10), golden_files);
    if !ok {
        std::process::exit(1);
    }
}
