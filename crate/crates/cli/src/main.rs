use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use evdbn::baseline::{self, BaselineMode, BaselineStream, ExternalOutcome};
use evdbn::codec;
use evdbn::config::CodecConfig;
use evdbn::dbn::{read_model, write_model, DbnModel};
use evdbn::entropy::CompressedStream;
use evdbn::metrics::{e2e_cr, MetricsReport};
use evdbn::{parse_events, raw_size_bits, EventStream, SensorGeometry};

#[derive(Parser)]
#[command(name = "evdbn", version, about = "Event-camera codec: DBN autoencoder + Huffman")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on the leading span of an event file.
    Train(TrainArgs),
    /// Compress an event file into a container.
    Compress(CompressArgs),
    /// Reconstruct super-frames from a container, one text file per window.
    Decompress(DecompressArgs),
    /// Compress, decompress and measure for each aggregation window.
    Evaluate(EvaluateArgs),
    /// Run a lossless baseline coder.
    Baseline(BaselineArgs),
}

#[derive(Args)]
struct Common {
    /// key = value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sensor geometry, e.g. 240x180.
    #[arg(long, value_name = "WxH")]
    sensor: Option<SensorGeometry>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    events: PathBuf,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    dt_ms: Option<f64>,
    /// Pretraining epochs (also fine-tuning unless --finetune-epochs is given).
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    finetune_epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    quant_scale: Option<f64>,
    /// Comma-separated layer sizes, e.g. 900,1000,500,250,20.
    #[arg(long)]
    layers: Option<String>,
    /// Seconds of the recording used for training.
    #[arg(long)]
    train_span_s: Option<f64>,
}

#[derive(Args)]
struct CompressArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Container file to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    dt_ms: Option<f64>,
}

#[derive(Args)]
struct DecompressArgs {
    /// Container file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Directory for the frame files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    events: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated windows in milliseconds.
    #[arg(long)]
    dt_list: Option<String>,
    /// Also write the table to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print `key=value` records instead of the tab-separated table.
    #[arg(long)]
    records: bool,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    events: PathBuf,
    /// huffman, delta-huffman or external:<tool>.
    #[arg(long)]
    coder: String,
    /// Write the baseline container here (huffman coders only).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(common: &Common) -> Result<CodecConfig> {
    let mut cfg = match &common.config {
        Some(path) => CodecConfig::parse(&read_text(path)?)?,
        None => CodecConfig::default(),
    };
    if let Some(s) = common.sensor {
        cfg.sensor = Some(s);
    }
    Ok(cfg)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write_bytes(path: &Path, data: &[u8]) -> Result<()> {
    fs::write(path, data).with_context(|| format!("writing {}", path.display()))
}

fn load_events(path: &Path, geometry: SensorGeometry) -> Result<EventStream> {
    let text = read_text(path)?;
    Ok(parse_events(&text, geometry).with_context(|| format!("parsing {}", path.display()))?)
}

fn load_model(path: &Path) -> Result<DbnModel> {
    Ok(read_model(&read_bytes(path)?).with_context(|| format!("loading model {}", path.display()))?)
}

/// Sensor geometry for a command that has a model: the configured one must
/// agree with the model's when both are present.
fn model_geometry(cfg: &CodecConfig, model: &DbnModel) -> Result<SensorGeometry> {
    match cfg.sensor {
        Some(s) if s != model.geometry => Err(evdbn::Error::Mismatch(format!(
            "configured sensor {s} differs from the model's {}",
            model.geometry
        ))
        .into()),
        _ => Ok(model.geometry),
    }
}

fn parse_ms_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| {
            let ms: f64 = v
                .trim()
                .parse()
                .map_err(|_| evdbn::Error::Config(format!("bad window {v:?} in --dt-list")))?;
            Ok(ms * 1e-3)
        })
        .collect()
}

fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = load_config(&args.common)?;
    if let Some(v) = args.dt_ms {
        cfg.dt = v * 1e-3;
    }
    if let Some(v) = args.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = args.finetune_epochs {
        cfg.finetune_epochs = Some(v);
    }
    if let Some(v) = args.batch {
        cfg.train.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = args.seed {
        cfg.train.seed = v;
    }
    if let Some(v) = args.quant_scale {
        cfg.quant_scale = v;
    }
    if let Some(v) = &args.layers {
        cfg.set("layers", v)?;
    }
    if let Some(v) = args.train_span_s {
        cfg.train_span = v;
    }
    cfg.validate()?;
    let stream = load_events(&args.events, cfg.sensor()?)?;

    let out = codec::train(&stream, &cfg)?;
    println!("blocks={} layers={:?}", out.block_count, out.model.layer_sizes());
    for (k, layer) in out.pretrain.layers.iter().enumerate() {
        println!("pretrain layer={} epoch=0 recon_error={:.6e}", k + 1, layer.initial_error);
        for (e, err) in layer.epoch_errors.iter().enumerate() {
            println!("pretrain layer={} epoch={} recon_error={err:.6e}", k + 1, e + 1);
        }
    }
    println!("finetune epoch=0 loss={:.6}", out.fine_tune.initial_loss);
    for (e, loss) in out.fine_tune.epoch_losses.iter().enumerate() {
        println!("finetune epoch={} loss={loss:.6}", e + 1);
    }
    let bytes = write_model(&out.model);
    write_bytes(&args.out, &bytes)?;
    println!("model={} model_bits={}", args.out.display(), bytes.len() * 8);
    Ok(())
}

fn compress(args: CompressArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let dt = args.dt_ms.map_or(cfg.dt, |ms| ms * 1e-3);
    if !(dt.is_finite() && dt > 0.0) {
        return Err(evdbn::Error::Config("aggregation window must be > 0".into()).into());
    }
    let model = load_model(&args.model)?;
    let stream = load_events(&args.events, model_geometry(&cfg, &model)?)?;
    let cs = codec::compress(&stream, &model, dt)?;
    let bytes = cs.to_bytes();
    write_bytes(&args.out, &bytes)?;

    let raw = raw_size_bits(&stream);
    let bits = bytes.len() as u64 * 8;
    let cr = if raw > 0 { format!("{:.4}", e2e_cr(raw, bits)?) } else { "na".into() };
    println!(
        "events={} frames={} raw_bits={raw} compressed_bits={bits} payload_bits={} e2e_cr={cr}",
        stream.len(),
        cs.header.frame_count,
        cs.payload_bits()
    );
    Ok(())
}

fn decompress(args: DecompressArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let cs = CompressedStream::from_bytes(&read_bytes(&args.input)?)
        .with_context(|| format!("reading container {}", args.input.display()))?;
    let frames = codec::decompress(&cs, &model)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for f in &frames {
        let path = args.out.join(format!("frame_{:06}.txt", f.window.index));
        fs::write(&path, codec::format_frame(f)).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("frames={} dir={}", frames.len(), args.out.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let mut cfg = load_config(&args.common)?;
    if let Some(list) = &args.dt_list {
        cfg.dt_list = parse_ms_list(list)?;
    }
    cfg.validate()?;
    let model = load_model(&args.model)?;
    let stream = load_events(&args.events, model_geometry(&cfg, &model)?)?;
    let rows = cfg
        .dt_list
        .iter()
        .map(|&dt| codec::evaluate(&stream, &model, dt))
        .collect::<evdbn::Result<Vec<_>>>()?;
    let table = MetricsReport::table(&rows);
    if let Some(path) = &args.out {
        write_bytes(path, table.as_bytes())?;
    }
    if args.records {
        for r in &rows {
            println!("{}", r.to_record());
        }
    } else {
        print!("{table}");
    }
    Ok(())
}

fn baseline(args: BaselineArgs) -> Result<()> {
    let cfg = load_config(&args.common)?;
    let stream = load_events(&args.events, cfg.sensor()?)?;
    let raw = raw_size_bits(&stream);
    let ratio = |bits: u64| -> Result<String> {
        Ok(if raw > 0 { format!("{:.4}", e2e_cr(raw, bits)?) } else { "na".into() })
    };
    let head = format!("coder={} events={} raw_bits={raw}", args.coder, stream.len());

    let mode = match args.coder.as_str() {
        "huffman" => Some(BaselineMode::PerField),
        "delta-huffman" => Some(BaselineMode::DeltaTime),
        other => match other.strip_prefix("external:") {
            Some(tool) if !tool.is_empty() => {
                match baseline::run_external(&stream, tool) {
                    ExternalOutcome::Compressed(bits) => {
                        println!("{head} status=ok compressed_bits={bits} e2e_cr={}", ratio(bits)?)
                    }
                    ExternalOutcome::Skipped(why) => {
                        println!("{head} status=skipped reason={why:?}")
                    }
                }
                None
            }
            _ => {
                return Err(evdbn::Error::Config(format!(
                    "unknown coder {other:?} (expected huffman, delta-huffman or external:<tool>)"
                ))
                .into())
            }
        },
    };
    if let Some(mode) = mode {
        let encoded = BaselineStream::encode(&stream, mode)?;
        let bytes = encoded.to_bytes();
        if BaselineStream::from_bytes(&bytes)?.decode()? != stream {
            bail!("baseline round trip is not lossless");
        }
        if let Some(path) = &args.out {
            write_bytes(path, &bytes)?;
        }
        let bits = bytes.len() as u64 * 8;
        println!("{head} status=ok compressed_bits={bits} e2e_cr={}", ratio(bits)?);
    }
    Ok(())
}

fn category(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<evdbn::Error>() {
            return e.category();
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
    }
    "internal"
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Compress(a) => compress(a),
        Command::Decompress(a) => decompress(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Baseline(a) => baseline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e:#}", category(&e));
            ExitCode::FAILURE
        }
    }
}
