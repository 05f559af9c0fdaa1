//! `ibmdn` — train, run, and inspect the super-resolution engine.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use ibmdn_cli::checkpoint::load_checkpoint;
use ibmdn_cli::eval::{evaluate_dir, render_csv, render_table, EvalMode};
use ibmdn_cli::io::{load_image, save_image};
use ibmdn_cli::train_loop::train_loop;
use ibmdn_cli::{CliError, Result};
use ibmdn_core::arch::{DepthSchedule, ModelSpec};
use ibmdn_core::gradcheck::registered_checks;
use ibmdn_core::img::ImageRgb;
use ibmdn_core::optim::TrainConfig;
use ibmdn_core::resample::make_lr;

/// Published parameter totals per scale, used as the accounting reference.
const REFERENCE_TOTALS: [(usize, usize); 3] = [(2, 170_000), (3, 178_000), (4, 187_000)];

#[derive(Parser)]
#[command(name = "ibmdn", version, about = "Lightweight single-image super-resolution engine")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the per-module parameter budget and compare to the reference.
    Params {
        /// Upscaling factor (2, 3, or 4).
        #[arg(long)]
        scale: usize,
        /// Feature width of the trunk.
        #[arg(long, default_value_t = 50)]
        nf: usize,
        /// Number of distillation blocks.
        #[arg(long, default_value_t = 6)]
        blocks: usize,
    },
    /// Certify analytic gradients against finite differences.
    Gradcheck {
        /// Run only the named check (default: the whole suite).
        #[arg(long)]
        op: Option<String>,
        /// Seed for the random probe tensors.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Finite-difference step size.
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
    },
    /// Train a model on a directory of HR PNGs.
    Train {
        /// Directory of high-resolution training PNGs.
        #[arg(long = "hr-dir")]
        hr_dir: PathBuf,
        /// Upscaling factor (2, 3, or 4).
        #[arg(long)]
        scale: usize,
        /// Number of optimizer iterations.
        #[arg(long)]
        iters: u64,
        /// Patches per mini-batch.
        #[arg(long, default_value_t = 16)]
        batch: usize,
        /// HR patch side length (must be divisible by the scale).
        #[arg(long, default_value_t = 192)]
        patch: usize,
        /// Seed for initialization and data sampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Disable flip/rotation augmentation.
        #[arg(long = "no-augment")]
        no_augment: bool,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Super-resolve one PNG with a trained checkpoint.
    Infer {
        /// Checkpoint file.
        #[arg(long)]
        model: PathBuf,
        /// Input (low-resolution) PNG.
        #[arg(long)]
        input: PathBuf,
        /// Output PNG path.
        #[arg(long)]
        output: PathBuf,
    },
    /// Synthesize the bicubic LR counterpart of an HR PNG.
    Degrade {
        /// Input (high-resolution) PNG.
        #[arg(long)]
        input: PathBuf,
        /// Downscaling factor (2, 3, or 4).
        #[arg(long)]
        scale: usize,
        /// Output (low-resolution) PNG path.
        #[arg(long)]
        output: PathBuf,
    },
    /// Score a model (or the metrics pipeline itself) on a directory.
    Eval {
        /// Checkpoint file (not needed with --identity).
        #[arg(long, required_unless_present = "identity")]
        model: Option<PathBuf>,
        /// Directory of high-resolution PNGs.
        #[arg(long = "hr-dir")]
        hr_dir: PathBuf,
        /// Upscaling factor (2, 3, or 4).
        #[arg(long)]
        scale: usize,
        /// Score the HR crops against themselves (metrics self-test).
        #[arg(long)]
        identity: bool,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's default failure code is 2; this tool reserves 2 for
            // IO and reports usage trouble as 1. Help/version stay 0.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Params { scale, nf, blocks } => cmd_params(scale, nf, blocks),
        Cmd::Gradcheck { op, seed, eps } => cmd_gradcheck(op.as_deref(), seed, eps),
        Cmd::Train { hr_dir, scale, iters, batch, patch, seed, no_augment, out } => {
            let spec = ModelSpec::standard(scale)?;
            let cfg = TrainConfig {
                iters,
                batch,
                hr_patch: patch,
                seed,
                augment: !no_augment,
                ..TrainConfig::default()
            };
            let (_, report) = train_loop(&spec, &cfg, &hr_dir, &out)?;
            println!("trained {iters} iterations on {} images; wrote {}", report.images, out.display());
            Ok(())
        }
        Cmd::Infer { model, input, output } => cmd_infer(&model, &input, &output),
        Cmd::Degrade { input, scale, output } => cmd_degrade(&input, scale, &output),
        Cmd::Eval { model, hr_dir, scale, identity } => {
            cmd_eval(model.as_deref(), &hr_dir, scale, identity)
        }
    }
}

fn cmd_params(scale: usize, nf: usize, blocks: usize) -> Result<()> {
    let standard = ModelSpec::standard(scale)?;
    let spec = ModelSpec {
        nf,
        nd: nf / 2,
        n_blocks: blocks,
        schedule: DepthSchedule::default_for(blocks)?,
        ..standard
    };
    spec.validate()?;
    let model = ibmdn_core::arch::build_ibmdn::<f32>(&spec, 0)?;
    let (total, breakdown) = model.count_params();

    println!("architecture x{scale}: nf={nf}, nd={}, blocks={blocks} ({})", spec.nd, spec.schedule.as_string());
    for (module, count) in &breakdown {
        println!("{module:<12} {count:>8}");
    }
    println!("{:<12} {total:>8}", "total");

    let reference = REFERENCE_TOTALS.iter().find(|(s, _)| *s == scale).map(|(_, t)| *t);
    if let Some(reference) = reference {
        let deviation = 100.0 * (total as f64 - reference as f64) / reference as f64;
        println!("reference    {reference:>8}  (deviation {deviation:+.2}%)");
        // The accounting check only binds the standard architecture.
        if nf == 50 && blocks == 6 && deviation.abs() > 10.0 {
            return Err(CliError::Check(format!(
                "total {total} deviates {deviation:+.2}% from the {reference} reference (> 10%)"
            )));
        }
    }
    Ok(())
}

fn cmd_gradcheck(op: Option<&str>, seed: u64, eps: f64) -> Result<()> {
    let suite = registered_checks();
    let selected: Vec<_> = match op {
        None => suite.iter().collect(),
        Some(name) => {
            let hit: Vec<_> = suite.iter().filter(|c| c.name == name).collect();
            if hit.is_empty() {
                let known: Vec<&str> = suite.iter().map(|c| c.name).collect();
                return Err(CliError::Usage(format!(
                    "unknown op `{name}`; known ops: {}",
                    known.join(", ")
                )));
            }
            hit
        }
    };

    const TOLERANCE: f64 = 1e-4;
    let mut worst: (f64, String) = (0.0, String::new());
    for check in selected {
        let results = (check.run)(seed, eps).map_err(|e| CliError::Check(e.to_string()))?;
        for (target, err) in results {
            println!("{:<18} {target:<22} {err:.3e}", check.name);
            if err > worst.0 {
                worst = (err, format!("{} / {target}", check.name));
            }
        }
    }
    if worst.0 >= TOLERANCE {
        return Err(CliError::Check(format!(
            "gradient check failed: {} reached {:.3e} (tolerance {TOLERANCE:.0e})",
            worst.1, worst.0
        )));
    }
    println!("all gradients within {TOLERANCE:.0e} (worst {:.3e})", worst.0);
    Ok(())
}

fn cmd_infer(model: &Path, input: &Path, output: &Path) -> Result<()> {
    let mut model = load_checkpoint(model)?;
    let img = load_image(input)?;
    let sr = model.forward_sr(&img.to_tensor())?;
    let out = ImageRgb::from_tensor(&sr)?;
    save_image(&out, output)?;
    println!(
        "{}x{} -> {}x{} (x{}); wrote {}",
        img.width(),
        img.height(),
        out.width(),
        out.height(),
        model.spec().scale,
        output.display()
    );
    Ok(())
}

/// `foo.png -> foo_hrcrop.png`, next to the main output.
fn hrcrop_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = output.extension().and_then(|s| s.to_str()).unwrap_or("png");
    output.with_file_name(format!("{stem}_hrcrop.{ext}"))
}

fn cmd_degrade(input: &Path, scale: usize, output: &Path) -> Result<()> {
    let img = load_image(input)?;
    let (hr, lr) = make_lr(&img, scale)?;
    save_image(&lr, output)?;
    let crop_path = hrcrop_path(output);
    save_image(&hr, &crop_path)?;
    println!(
        "{}x{} -> {}x{}; wrote {} and {}",
        img.width(),
        img.height(),
        lr.width(),
        lr.height(),
        output.display(),
        crop_path.display()
    );
    Ok(())
}

fn cmd_eval(model: Option<&Path>, hr_dir: &Path, scale: usize, identity: bool) -> Result<()> {
    let mut loaded;
    let mut mode = if identity {
        EvalMode::Identity
    } else {
        let path = model.ok_or_else(|| CliError::Usage("--model is required".into()))?;
        loaded = load_checkpoint(path)?;
        EvalMode::Model(&mut loaded)
    };
    let report = evaluate_dir(&mut mode, hr_dir, scale)?;
    print!("{}", render_table(&report));

    let dir_name = hr_dir.file_name().and_then(|n| n.to_str()).unwrap_or("eval");
    let csv_path = hr_dir.with_file_name(format!("{dir_name}_metrics.csv"));
    std::fs::write(&csv_path, render_csv(&report))
        .map_err(|e| CliError::Io(format!("{}: {e}", csv_path.display())))?;
    println!("wrote {}", csv_path.display());
    Ok(())
}
