//! Directory-level evaluation: degrade, super-resolve, score.

use std::fmt::Write as _;
use std::path::Path;

use ibmdn_core::arch::Model;
use ibmdn_core::img::ImageRgb;
use ibmdn_core::metrics::{psnr_y, ssim_y, MetricReport};
use ibmdn_core::resample::make_lr;

use crate::io::load_image;
use crate::{CliError, Result};

/// How the SR image is produced for scoring.
pub enum EvalMode<'a> {
    /// Run the model on the synthesized LR input.
    Model(&'a mut Model<f32>),
    /// Score the cropped HR against itself — a metrics self-test that
    /// must produce capped PSNR and SSIM 1.0 on every image.
    Identity,
}

/// Evaluates every readable PNG under `hr_dir`: each image is
/// divisibility-cropped and degraded by `scale`, super-resolved per
/// `mode`, and scored against the crop with `shave = scale`. Unreadable
/// or too-small images are skipped with a warning on standard error.
pub fn evaluate_dir(mode: &mut EvalMode, hr_dir: &Path, scale: usize) -> Result<MetricReport> {
    if let EvalMode::Model(model) = mode {
        if model.spec().scale != scale {
            return Err(CliError::Usage(format!(
                "checkpoint was trained for scale {}, requested {scale}",
                model.spec().scale
            )));
        }
    }
    let mut names: Vec<_> = std::fs::read_dir(hr_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", hr_dir.display())))?
        .filter_map(|entry| entry.ok())
        .map(|entry| entry.path())
        .filter(|p| {
            p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    names.sort();

    let mut report = MetricReport::new(scale);
    for path in names {
        let name =
            path.file_name().and_then(|n| n.to_str()).unwrap_or("<non-utf8>").to_owned();
        match score_one(mode, &path, scale) {
            Ok((psnr, ssim)) => report.add(name, psnr, ssim),
            Err(e) => eprintln!("warning: skipping {name}: {e}"),
        }
    }
    if report.is_empty() {
        return Err(CliError::Usage(format!("{}: no scorable PNG images", hr_dir.display())));
    }
    Ok(report)
}

fn score_one(mode: &mut EvalMode, path: &Path, scale: usize) -> Result<(f64, f64)> {
    let img = load_image(path)?;
    let (hr, lr) = make_lr(&img, scale)?;
    let sr = match mode {
        EvalMode::Identity => hr.clone(),
        EvalMode::Model(model) => {
            let out = model.forward_sr(&lr.to_tensor())?;
            ImageRgb::from_tensor(&out)?
        }
    };
    Ok((psnr_y(&sr, &hr, scale)?, ssim_y(&sr, &hr, scale)?))
}

/// Renders the aligned text table, MEAN row last.
pub fn render_table(report: &MetricReport) -> String {
    let name_w = report
        .entries()
        .iter()
        .map(|e| e.0.len())
        .chain(std::iter::once("MEAN".len()))
        .max()
        .unwrap_or(4);
    let mut out = String::new();
    let _ = writeln!(out, "{:<name_w$}  {:>8}  {:>7}", "name", "psnr_db", "ssim");
    for (name, psnr, ssim) in report.entries() {
        let _ = writeln!(out, "{name:<name_w$}  {psnr:>8.3}  {ssim:>7.5}");
    }
    let (psnr, ssim) = report.means();
    let _ = writeln!(out, "{:<name_w$}  {psnr:>8.3}  {ssim:>7.5}", "MEAN");
    out
}

/// Renders the machine-readable CSV: `name,psnr_db,ssim` rows plus a
/// final `MEAN` line.
pub fn render_csv(report: &MetricReport) -> String {
    let mut out = String::from("name,psnr_db,ssim\n");
    for (name, psnr, ssim) in report.entries() {
        let _ = writeln!(out, "{name},{psnr:.4},{ssim:.5}");
    }
    let (psnr, ssim) = report.means();
    let _ = writeln!(out, "MEAN,{psnr:.4},{ssim:.5}");
    out
}
