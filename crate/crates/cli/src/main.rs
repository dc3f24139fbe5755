use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand};
use dualcascade::cascade::predict;
use dualcascade::metrics::{evaluate, evaluate_zero_filling, MetricsReport};
use dualcascade::phantom::{generate_dataset, undersample_dataset, DatasetConfig};
use dualcascade::sampling::make_mask;
use dualcascade::storage::{
    encode_pgm, encode_tensor, load_checkpoint, read_image, read_tensor, write_atomic,
    write_tensor, Checkpoint, StoredTensor,
};
use dualcascade::training::train_with;
use dualcascade::{
    CascadeConfig, Error, MaskPattern, Result, SamplingMask, TrainConfig, UndersampledSample,
};

mod dataset;

/// Dual-domain cascaded reconstruction of undersampled multi-coil MRI.
#[derive(Parser)]
#[command(name = "ddcascade", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-coil phantom dataset.
    Phantom(PhantomArgs),
    /// Write a Cartesian column mask.
    Mask(MaskArgs),
    /// Train a cascade on a phantom dataset.
    Train(TrainArgs),
    /// Reconstruct one undersampled acquisition.
    Reconstruct(ReconstructArgs),
    /// Score one or two checkpoints on a dataset.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long)]
    out: PathBuf,
    /// Number of cases.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    /// Image side length (even).
    #[arg(long, default_value_t = 64, value_parser = parse_even)]
    size: usize,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    coils: u64,
    /// Relative ellipse perturbation, in [0, 1).
    #[arg(long, default_value_t = 0.15)]
    jitter: f64,
    #[arg(long, default_value_t = 17)]
    seed: u64,
}

#[derive(Args, Clone)]
struct Sampling {
    /// Acceleration factor R.
    #[arg(long, default_value_t = 4.0)]
    accel: f64,
    /// Fraction of central columns always sampled.
    #[arg(long, default_value_t = 0.08)]
    center_frac: f64,
    /// random_lines or equispaced.
    #[arg(long, default_value = "random_lines")]
    pattern: MaskPattern,
}

#[derive(Args)]
struct MaskArgs {
    #[arg(long)]
    out: PathBuf,
    /// Number of k-space columns.
    #[arg(long, value_parser = parse_even)]
    width: usize,
    #[command(flatten)]
    sampling: Sampling,
    #[arg(long, default_value_t = 17)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Cascade iterations N.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    iters: u64,
    /// Cross-iteration residual connections.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    cir: bool,
    #[command(flatten)]
    sampling: Sampling,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    epochs: u64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 17)]
    seed: u64,
    /// Stop after this many optimizer steps.
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    batch_size: u64,
    /// Hidden channels per subnet.
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    hidden: u64,
    /// SE-residual blocks per subnet.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    blocks: u64,
    /// Squeeze-excitation channel reduction.
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    se_reduction: u64,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// Multi-coil k-space (DDT1); unsampled columns are ignored.
    #[arg(long)]
    kspace: PathBuf,
    /// Column mask (DDT1, 1x1xW of 0/1).
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    out_img: PathBuf,
    #[arg(long)]
    out_k: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// One checkpoint, or two for a paired comparison.
    #[arg(long, required = true, action = ArgAction::Append)]
    ckpt: Vec<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    sampling: Sampling,
    #[arg(long, default_value_t = 17)]
    seed: u64,
    #[arg(long)]
    report: PathBuf,
}

fn parse_even(s: &str) -> std::result::Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v == 0 || v % 2 != 0 {
        return Err(format!("{v} must be a positive even number"));
    }
    Ok(v)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            eprintln!("\n{}", Cli::command().render_usage());
            return ExitCode::from(2);
        }
        Err(e) => e.exit(),
    };
    if let Command::Evaluate(a) = &cli.command {
        if a.ckpt.len() > 2 {
            eprintln!("error: --ckpt may be given at most twice");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Phantom(a) => cmd_phantom(a),
        Command::Mask(a) => cmd_mask(a),
        Command::Train(a) => cmd_train(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn cmd_phantom(a: PhantomArgs) -> Result<()> {
    let cfg = DatasetConfig {
        cases: a.n as usize,
        height: a.size,
        width: a.size,
        coils: a.coils as usize,
        jitter: a.jitter,
        seed: a.seed,
    };
    let cases = generate_dataset(&cfg)?;
    let settings = [
        ("cases", cfg.cases.to_string()),
        ("coils", cfg.coils.to_string()),
        ("jitter", cfg.jitter.to_string()),
        ("seed", cfg.seed.to_string()),
        ("size", a.size.to_string()),
    ];
    dataset::write_dataset(&a.out, &settings, &cases)?;
    println!("wrote {} cases to {}", cases.len(), a.out.display());
    Ok(())
}

fn cmd_mask(a: MaskArgs) -> Result<()> {
    let s = &a.sampling;
    let mask = make_mask(a.width, s.accel, s.center_frac, s.pattern, a.seed)?;
    write_tensor(&a.out, &StoredTensor::Real(mask.to_tensor()))?;
    println!("sampled {} of {} columns", mask.sampled_count(), mask.width());
    Ok(())
}

fn load_samples(data: &Path, s: &Sampling, seed: u64) -> Result<Vec<UndersampledSample>> {
    let cases = dataset::read_dataset(data)?;
    undersample_dataset(&cases, s.accel, s.center_frac, s.pattern, seed)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let samples = load_samples(&a.data, &a.sampling, a.seed)?;
    let mut ccfg = CascadeConfig::for_coils(samples[0].k_sparse.coils());
    ccfg.iterations = a.iters as usize;
    ccfg.cir_enabled = a.cir;
    ccfg.subnet.hidden_channels = a.hidden as usize;
    ccfg.subnet.blocks = a.blocks as usize;
    ccfg.subnet.se_reduction = a.se_reduction as usize;
    ccfg.validate()?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size as usize,
        seed: a.seed,
        lr: a.lr,
        max_steps: a.max_steps,
        checkpoint_path: Some(a.out.clone()),
        ..Default::default()
    };
    let out = train_with(&samples, &[], &cfg, &ccfg, None, &mut |r| {
        println!("step={} loss={:.6e}", r.step, r.loss);
    })?;
    let last = out.history.last().map_or(f64::NAN, |r| r.loss);
    println!("final loss={last:.6e}");
    println!("checkpoint {}", a.out.display());
    Ok(())
}

fn cmd_reconstruct(a: ReconstructArgs) -> Result<()> {
    // everything is computed before the first byte is written
    let ck: Checkpoint = load_checkpoint(&a.ckpt, None)?;
    let k = read_image(&a.kspace)?;
    let mask = SamplingMask::from_tensor(&read_tensor(&a.mask)?.into_real()?)?;
    if k.coils() != ck.config.coils() {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint expects {} coils, k-space has {}",
            ck.config.coils(),
            k.coils()
        )));
    }
    let sample = UndersampledSample::measured(&k, &mask)?;
    let (k_out, img) = predict(&sample, &ck.params, &ck.config)?;
    let pgm = encode_pgm(&img)?;
    let kbytes = encode_tensor(&StoredTensor::from(&k_out));

    write_atomic(&a.out_img, &pgm)?;
    if let Err(e) = write_atomic(&a.out_k, &kbytes) {
        let _ = std::fs::remove_file(&a.out_img);
        return Err(e);
    }
    println!("wrote {} and {}", a.out_img.display(), a.out_k.display());
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let samples = load_samples(&a.data, &a.sampling, a.seed)?;
    let coils = samples[0].k_sparse.coils();
    let mut reports: Vec<MetricsReport> = Vec::new();
    for path in &a.ckpt {
        let ck = load_checkpoint(path, None)?;
        if ck.config.coils() != coils {
            return Err(Error::ConfigMismatch(format!(
                "{} expects {} coils, dataset has {coils}",
                path.display(),
                ck.config.coils()
            )));
        }
        reports.push(evaluate(&samples, &ck.params, &ck.config)?);
    }
    if reports.len() == 2 {
        let (first, rest) = reports.split_at_mut(1);
        first[0].compare_image_nmse(&rest[0])?;
    }

    let mut text = String::new();
    for (path, report) in a.ckpt.iter().zip(&reports) {
        println!("{}", path.display());
        println!("{}", report.to_table());
        text.push_str(&format!("checkpoint={}\n", path.display()));
        text.push_str(&report.to_records());
    }
    write_atomic(&a.report, text.as_bytes())?;
    // the baseline a trained model has to beat
    let zf = evaluate_zero_filling(&samples)?.image_nmse_summary();
    println!("zero-filling image NMSE% {:.4} ± {:.4}", zf.mean, zf.std);
    Ok(())
}
