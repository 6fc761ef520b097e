use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gcdtc::data_io::{generate_synthetic, read_raw, write_raw, Dtype, SynthConfig};
use gcdtc::diffusion::CodecKind;
use gcdtc::pipeline::{
    compress_with, decompress_with, evaluate, evaluate_reconstruction, rd_csv, sweep, train_with, Archive, CompressOptions, PipelineConfig,
    TrainedModels,
};
use gcdtc::tensor::TensorField;
use gcdtc::Result;

#[derive(Parser)]
#[command(name = "gcdtc", version, about = "Error-bounded compression of 3D scientific fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic drifting-bump fields to a .gsd file.
    GenData(GenData),
    /// Train the codec and correction network; writes a model directory.
    Train(Train),
    /// Compress a .gsd file into a .gcdt archive.
    Compress(Compress),
    /// Decode a .gcdt archive back to a .gsd file.
    Decompress(Decompress),
    /// Report error and size of an archive against the original data.
    Evaluate(Evaluate),
    /// Compress at several bounds and write a rate-distortion CSV.
    Sweep(Sweep),
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Field shape as TxHxW.
    #[arg(long, default_value = "16x64x64", value_parser = parse_shape)]
    shape: [usize; 3],
    /// Number of fields; member i uses seed + i.
    #[arg(long, default_value_t = 1)]
    members: u32,
    #[arg(long, default_value_t = 6)]
    bumps: usize,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    offset: f64,
    #[arg(long, default_value = "f64", value_parser = parse_dtype)]
    dtype: Dtype,
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    model_dir: PathBuf,
    /// Starting point for the settings: paper (full size) or desk (small, fast).
    #[arg(long, default_value = "paper", value_parser = ["paper", "desk"])]
    preset: String,
    /// key = value settings applied on top of the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    codec: Option<CodecKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
#[group(id = "bound", required = true, multiple = false)]
struct Bound {
    /// Per-block l2 bound in data units.
    #[arg(long, group = "bound")]
    tau: Option<f64>,
    /// Bound as a multiple of data range times sqrt(samples per block).
    #[arg(long, group = "bound")]
    tau_rel: Option<f64>,
}

#[derive(Args)]
struct Compress {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    model_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    bound: Bound,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct Decompress {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    model_dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct Evaluate {
    #[arg(long)]
    original: PathBuf,
    #[arg(long)]
    archive: PathBuf,
    #[arg(long)]
    model_dir: PathBuf,
    /// Score this decoded file instead of decoding the archive.
    #[arg(long)]
    recon: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct Sweep {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    model_dir: PathBuf,
    /// Comma-separated bounds.
    #[arg(long, value_delimiter = ',', required = true)]
    tau_list: Vec<f64>,
    /// Read the bounds as multiples of range times sqrt(samples per block).
    #[arg(long)]
    relative: bool,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

fn parse_shape(s: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<usize> = s.split('x').map(|p| p.trim().parse().map_err(|_| format!("bad shape {s:?}"))).collect::<std::result::Result<_, _>>()?;
    parts.try_into().map_err(|_| format!("expected TxHxW, got {s:?}"))
}

fn parse_dtype(s: &str) -> std::result::Result<Dtype, String> {
    match s {
        "f32" => Ok(Dtype::F32),
        "f64" => Ok(Dtype::F64),
        _ => Err(format!("expected f32 or f64, got {s:?}")),
    }
}

fn pooled_range(fields: &[TensorField]) -> f64 {
    let (lo, hi) = fields.iter().map(TensorField::value_range).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (c, d)| (a.min(c), b.max(d)));
    hi - lo
}

fn relative_scale(fields: &[TensorField], models: &TrainedModels) -> f64 {
    pooled_range(fields) * (models.config.guarantee_block.iter().product::<usize>() as f64).sqrt()
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData(a) => {
            let fields = (0..a.members)
                .map(|i| {
                    let cfg = SynthConfig {
                        seed: a.seed + u64::from(i),
                        shape: a.shape,
                        bump_count: a.bumps,
                        noise_amplitude: a.noise,
                        offset: a.offset,
                        ..SynthConfig::default()
                    };
                    let mut f = generate_synthetic(&cfg)?;
                    f.member_id = i;
                    Ok(f)
                })
                .collect::<Result<Vec<_>>>()?;
            let n = write_raw(&fields, a.dtype, &a.out)?;
            println!("wrote {} member(s), {n} bytes to {}", fields.len(), a.out.display());
        }
        Command::Train(a) => {
            let mut text = format!("preset = {}\n", a.preset);
            if let Some(p) = &a.config {
                text += &fs::read_to_string(p)?;
            }
            let mut cfg = PipelineConfig::parse(&text)?;
            if let Some(c) = a.codec {
                cfg.codec = c;
            }
            if let Some(s) = a.seed {
                cfg.set("seed", &s.to_string())?;
            }
            if let Some(s) = a.steps {
                cfg.train.steps = s;
            }
            let (_, fields) = read_raw(&a.input)?;
            let models = train_with(&fields, &cfg, a.threads)?;
            models.save(&a.model_dir)?;
            let l = &models.codec_losses;
            let head = l.iter().take(50).sum::<f64>() / l.len().clamp(1, 50) as f64;
            let tail = l.iter().rev().take(50).sum::<f64>() / l.len().clamp(1, 50) as f64;
            println!("{} codec: loss {head:.4} -> {tail:.4} over {} steps", cfg.codec.name(), l.len());
            println!("model files: {} bytes in {}", models.model_bytes(), a.model_dir.display());
        }
        Command::Compress(a) => {
            let models = TrainedModels::load(&a.model_dir)?;
            let (header, fields) = read_raw(&a.input)?;
            let tau = match (a.bound.tau, a.bound.tau_rel) {
                (Some(t), _) => t,
                (None, Some(r)) => r * relative_scale(&fields, &models),
                (None, None) => unreachable!("clap requires one bound"),
            };
            let packed = compress_with(&fields, &models, &CompressOptions { tau, output: header.dtype, threads: a.threads })?;
            fs::write(&a.out, &packed.bytes)?;
            let b = packed.breakdown;
            println!("tau {tau:e}: {} archive bytes (+{} model bytes) to {}", b.archive(), b.models, a.out.display());
        }
        Command::Decompress(a) => {
            let models = TrainedModels::load(&a.model_dir)?;
            let bytes = fs::read(&a.input)?;
            let dtype = Archive::from_bytes(&bytes)?.dtype;
            let fields = decompress_with(&bytes, &models, a.threads)?;
            let n = write_raw(&fields, dtype, &a.out)?;
            println!("wrote {n} bytes to {}", a.out.display());
        }
        Command::Evaluate(a) => {
            let models = TrainedModels::load(&a.model_dir)?;
            let (_, originals) = read_raw(&a.original)?;
            let bytes = fs::read(&a.archive)?;
            let report = match &a.recon {
                Some(p) => evaluate_reconstruction(&originals, &read_raw(p)?.1, &Archive::from_bytes(&bytes)?)?,
                None => evaluate(&originals, &bytes, &models, a.threads)?.0,
            };
            print!("{}", report.to_text());
        }
        Command::Sweep(a) => {
            let models = TrainedModels::load(&a.model_dir)?;
            let (header, fields) = read_raw(&a.input)?;
            let scale = if a.relative { relative_scale(&fields, &models) } else { 1.0 };
            let taus: Vec<f64> = a.tau_list.iter().map(|t| t * scale).collect();
            let csv = rd_csv(&sweep(&fields, &models, &taus, header.dtype, a.threads)?);
            match &a.out {
                Some(p) => fs::write(p, csv)?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gcdtc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
