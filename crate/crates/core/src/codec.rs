//! The full codec: training, compression, decompression and evaluation.

use std::fmt::Write as _;

use crate::config::CodecConfig;
use crate::dbn::{
    blocks_matrix, fine_tune, pretrain, write_model, Autoencoder, DbnModel, FineTuneReport,
    PretrainReport,
};
use crate::entropy::{CompressedStream, StreamHeader};
use crate::error::{Error, Result};
use crate::event_io::{raw_size_bits, EventStream, SensorGeometry};
use crate::metrics::{e2e_cr, frame_bits, io_cr, psnr_frames, MetricsReport};
use crate::superframe::{
    aggregate, block_grid, fit_normalizer, from_blocks, to_blocks, Block, SuperFrame, Window,
    BLOCK_LEN, BLOCK_SIDE,
};

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DbnModel,
    pub block_count: usize,
    pub pretrain: PretrainReport,
    pub fine_tune: FineTuneReport,
}

/// Aggregates the leading `train_span` of the stream at `dt`, fits the
/// normalizer, pretrains the RBM stack, unrolls it and fine-tunes.
pub fn train(stream: &EventStream, cfg: &CodecConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.layer_sizes[0] != BLOCK_LEN {
        return Err(Error::Config(format!(
            "input layer must have {BLOCK_LEN} units ({BLOCK_SIDE}x{BLOCK_SIDE} blocks), got {}",
            cfg.layer_sizes[0]
        )));
    }
    let span = stream.head_span(cfg.train_span);
    let frames = aggregate(&span, cfg.dt)?;
    if frames.is_empty() {
        return Err(Error::InvalidArgument("no events in the training span".into()));
    }
    let normalizer = fit_normalizer(&frames)?;
    let blocks: Vec<Block> = frames.iter().flat_map(|f| to_blocks(f, &normalizer)).collect();
    let data = blocks_matrix(&blocks);

    let (stack, pretrain_report) = pretrain(data.view(), &cfg.layer_sizes, &cfg.train)?;
    let mut net = Autoencoder::unroll(&stack)?;
    let fine_tune_report = fine_tune(&mut net, data.view(), &cfg.finetune_config())?;
    let model = DbnModel::new(net, normalizer, cfg.quant_scale, stream.geometry())?;
    Ok(TrainOutcome {
        model,
        block_count: blocks.len(),
        pretrain: pretrain_report,
        fine_tune: fine_tune_report,
    })
}

fn check_model(model: &DbnModel) -> Result<()> {
    if model.net.input_dim() != BLOCK_LEN {
        return Err(Error::Mismatch(format!(
            "model input is {} values, blocks have {BLOCK_LEN}",
            model.net.input_dim()
        )));
    }
    Ok(())
}

fn check_geometry(model: &DbnModel, geometry: SensorGeometry) -> Result<()> {
    if model.geometry != geometry {
        return Err(Error::Mismatch(format!(
            "model trained for a {} sensor, stream is {}",
            model.geometry, geometry
        )));
    }
    Ok(())
}

/// Compresses pre-aggregated frames.
pub fn compress_frames(
    frames: &[SuperFrame],
    geometry: SensorGeometry,
    dt: f64,
    model: &DbnModel,
) -> Result<CompressedStream> {
    check_model(model)?;
    check_geometry(model, geometry)?;
    let (grid_rows, grid_cols) = block_grid(geometry);
    let header = StreamHeader {
        geometry,
        t_start: frames.first().map_or(0.0, |f| f.window.t_start),
        dt,
        frame_count: u32::try_from(frames.len()).map_err(|_| Error::Format("too many frames".into()))?,
        grid_rows: grid_rows as u32,
        grid_cols: grid_cols as u32,
        code_dim: u16::try_from(model.code_dim()).map_err(|_| Error::Format("code layer too wide".into()))?,
        normalizer_scale: model.normalizer.scale(),
        quant_scale: model.quant_scale,
    };
    let blocks: Vec<Block> = frames.iter().flat_map(|f| to_blocks(f, &model.normalizer)).collect();
    let latents = model.encode_blocks(&blocks)?;
    CompressedStream::encode(header, &latents)
}

/// aggregate → normalize → block → encode → quantize → Huffman.
pub fn compress(stream: &EventStream, model: &DbnModel, dt: f64) -> Result<CompressedStream> {
    check_geometry(model, stream.geometry())?;
    let frames = aggregate(stream, dt)?;
    compress_frames(&frames, stream.geometry(), dt, model)
}

/// Reconstructs the super-frames described by a container.
pub fn decompress(stream: &CompressedStream, model: &DbnModel) -> Result<Vec<SuperFrame>> {
    check_model(model)?;
    let h = &stream.header;
    check_geometry(model, h.geometry)?;
    if h.quant_scale != model.quant_scale {
        return Err(Error::Mismatch(format!(
            "stream quantization scale {} differs from model's {}",
            h.quant_scale, model.quant_scale
        )));
    }
    if h.normalizer_scale != model.normalizer.scale() {
        return Err(Error::Mismatch(format!(
            "stream normalizer scale {} differs from model's {}",
            h.normalizer_scale,
            model.normalizer.scale()
        )));
    }
    if usize::from(h.code_dim) != model.code_dim() {
        return Err(Error::Mismatch(format!(
            "stream code dimension {} differs from model's {}",
            h.code_dim,
            model.code_dim()
        )));
    }
    let (grid_rows, grid_cols) = block_grid(h.geometry);
    if (h.grid_rows as usize, h.grid_cols as usize) != (grid_rows, grid_cols) {
        return Err(Error::Format(format!(
            "block grid {}x{} does not match a {} sensor",
            h.grid_rows, h.grid_cols, h.geometry
        )));
    }

    let latents = stream.decode_latents()?;
    let decoded = model.decode_latents(&latents)?;
    let per_frame = grid_rows * grid_cols;
    let mut frames = Vec::with_capacity(h.frame_count as usize);
    for (k, rows) in decoded.rows().into_iter().collect::<Vec<_>>().chunks(per_frame).enumerate() {
        let blocks: Vec<Block> = rows
            .iter()
            .enumerate()
            .map(|(i, row)| Block {
                frame_index: k,
                origin_row: (i / grid_cols) * BLOCK_SIDE,
                origin_col: (i % grid_cols) * BLOCK_SIDE,
                values: row.to_vec(),
            })
            .collect();
        let window = Window {
            index: k,
            t_start: h.t_start + k as f64 * h.dt,
            dt: h.dt,
        };
        frames.push(from_blocks(&blocks, window, h.geometry, &model.normalizer)?);
    }
    Ok(frames)
}

/// Compresses, round-trips the container through bytes, decompresses and
/// measures one aggregation window.
pub fn evaluate(stream: &EventStream, model: &DbnModel, dt: f64) -> Result<MetricsReport> {
    check_geometry(model, stream.geometry())?;
    let frames = aggregate(stream, dt)?;
    let compressed = compress_frames(&frames, stream.geometry(), dt, model)?;
    let bytes = compressed.to_bytes();
    let restored = CompressedStream::from_bytes(&bytes)?;
    let recon = decompress(&restored, model)?;

    let raw_bits = raw_size_bits(stream);
    let compressed_bits = bytes.len() as u64 * 8;
    let input_bits = frame_bits(&frames);
    let payload_bits = restored.payload_bits();
    let psnr = psnr_frames(&frames, &recon, &model.normalizer)?;
    Ok(MetricsReport {
        dt,
        event_count: stream.len() as u64,
        frame_count: frames.len() as u64,
        raw_bits,
        compressed_bits,
        frame_bits: input_bits,
        payload_bits,
        e2e_cr: (raw_bits > 0).then(|| e2e_cr(raw_bits, compressed_bits)).transpose()?,
        io_cr: (payload_bits > 0).then(|| io_cr(input_bits, payload_bits)).transpose()?,
        psnr: psnr.global,
        psnr_frame_mean: psnr.per_frame_mean,
        model_bits: write_model(model).len() as u64 * 8,
    })
}

/// Text form of one reconstructed frame: a `#` header line, then one line of
/// space-separated counts per row.
pub fn format_frame(frame: &SuperFrame) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# window={} t_start={} dt={} sensor={}",
        frame.window.index,
        frame.window.t_start,
        frame.window.dt,
        frame.geometry()
    );
    for row in frame.counts().chunks(frame.cols()) {
        let line: Vec<String> = row.iter().map(u32::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Inverse of [`format_frame`].
pub fn parse_frame(text: &str) -> Result<SuperFrame> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .and_then(|l| l.strip_prefix('#'))
        .ok_or_else(|| Error::Format("frame file lacks a header line".into()))?;
    let mut index = None;
    let mut t_start = None;
    let mut dt = None;
    let mut sensor = None;
    for kv in header.split_whitespace() {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("bad header field {kv:?}")))?;
        let bad = || Error::Format(format!("bad header value {kv:?}"));
        match k {
            "window" => index = Some(v.parse::<usize>().map_err(|_| bad())?),
            "t_start" => t_start = Some(v.parse::<f64>().map_err(|_| bad())?),
            "dt" => dt = Some(v.parse::<f64>().map_err(|_| bad())?),
            "sensor" => sensor = Some(v.parse::<SensorGeometry>()?),
            _ => {}
        }
    }
    let missing = |f: &str| Error::Format(format!("frame header lacks {f}"));
    let window = Window {
        index: index.ok_or_else(|| missing("window"))?,
        t_start: t_start.ok_or_else(|| missing("t_start"))?,
        dt: dt.ok_or_else(|| missing("dt"))?,
    };
    let geometry = sensor.ok_or_else(|| missing("sensor"))?;
    let counts = lines
        .flat_map(str::split_whitespace)
        .map(|v| v.parse::<u32>().map_err(|_| Error::Format(format!("bad count {v:?}"))))
        .collect::<Result<Vec<_>>>()?;
    SuperFrame::from_counts(window, geometry, counts)
}
