//! Dataset loading and the iteration-driven training loop.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ibmdn_core::arch::{build_ibmdn, Model, ModelSpec};
use ibmdn_core::data::{augment, sample_patch};
use ibmdn_core::img::ImageRgb;
use ibmdn_core::optim::{adam_step, lr_at, AdamState, TrainConfig};
use ibmdn_core::resample::make_lr;
use ibmdn_core::Tensor;

use crate::checkpoint::save_checkpoint;
use crate::io::load_image;
use crate::{CliError, Result};

/// Offset separating the data-sampling stream from the (same-seeded)
/// parameter-initialization stream.
const SAMPLER_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

/// One usable training image: the divisibility-cropped HR and its
/// once-degraded LR counterpart.
pub struct TrainPair {
    pub name: String,
    pub hr: ImageRgb,
    pub lr: ImageRgb,
}

/// Loads every readable PNG in `dir` (sorted by file name), drops images
/// smaller than `min_hr` with a warning, and degrades each survivor once.
pub fn load_dataset(dir: &Path, scale: usize, min_hr: usize) -> Result<Vec<TrainPair>> {
    let mut names: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok())
        .map(|entry| entry.path())
        .filter(|p| {
            p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    names.sort();

    let mut pairs = Vec::new();
    for path in names {
        let name =
            path.file_name().and_then(|n| n.to_str()).unwrap_or("<non-utf8>").to_owned();
        let img = match load_image(&path) {
            Ok(img) => img,
            Err(e) => {
                eprintln!("warning: skipping {name}: {e}");
                continue;
            }
        };
        if img.width() < min_hr || img.height() < min_hr {
            eprintln!(
                "warning: skipping {name}: {}x{} is smaller than the {min_hr}px patch",
                img.width(),
                img.height()
            );
            continue;
        }
        let (hr, lr) = make_lr(&img, scale)?;
        pairs.push(TrainPair { name, hr, lr });
    }
    if pairs.is_empty() {
        return Err(CliError::Usage(format!(
            "{}: no usable training images (PNGs of at least {min_hr}px)",
            dir.display()
        )));
    }
    Ok(pairs)
}

/// Outcome of a training run.
pub struct TrainReport {
    /// Per-iteration batch losses, in order.
    pub losses: Vec<f32>,
    /// Number of images the sampler drew from.
    pub images: usize,
}

/// Stacks `(1, c, h, w)` patches into one `(b, c, h, w)` batch.
fn stack(patches: &[Tensor<f32>]) -> Tensor<f32> {
    let shape = patches[0].shape();
    let mut data = Vec::with_capacity(patches.len() * patches[0].len());
    for p in patches {
        data.extend_from_slice(p.data());
    }
    Tensor::from_vec(vec![patches.len(), shape[1], shape[2], shape[3]], data)
        .expect("uniform patch shapes")
}

/// Trains `spec` on the PNGs under `hr_dir` and writes the final
/// checkpoint to `out`.
///
/// Every iteration draws `cfg.batch` (image, patch) pairs i.i.d.,
/// optionally augments them, takes one forward/backward pass, and applies
/// one ADAM step at the scheduled learning rate. Progress lines
/// (`iter=<n> lr=<v> loss=<v>`, the loss averaged since the previous
/// line) go to standard output. The whole run is a deterministic function
/// of `cfg.seed`.
pub fn train_loop(
    spec: &ModelSpec,
    cfg: &TrainConfig,
    hr_dir: &Path,
    out: &Path,
) -> Result<(Model<f32>, TrainReport)> {
    spec.validate()?;
    cfg.validate(spec.scale)?;
    let pairs = load_dataset(hr_dir, spec.scale, cfg.hr_patch)?;

    let mut model = build_ibmdn::<f32>(spec, cfg.seed)?;
    let mut adam = AdamState::new(model.store());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SAMPLER_STREAM);

    let report_every = (cfg.iters / 20).max(1);
    let mut window_sum = 0.0f64;
    let mut window_n = 0u32;
    let mut losses = Vec::with_capacity(cfg.iters as usize);

    for iter in 0..cfg.iters {
        let mut hr_patches = Vec::with_capacity(cfg.batch);
        let mut lr_patches = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let which = rng.gen_range(0..pairs.len());
            let pair = &pairs[which];
            let mut s = sample_patch(&pair.hr, &pair.lr, cfg.hr_patch, spec.scale, &mut rng)?;
            s.source = which;
            if cfg.augment {
                s = augment(&s, &mut rng)?;
            }
            hr_patches.push(s.hr_patch);
            lr_patches.push(s.lr_patch);
        }
        let hr_batch = stack(&hr_patches);
        let lr_batch = stack(&lr_patches);

        let lr_now = lr_at(iter, cfg);
        let loss = model.train_batch(&lr_batch, &hr_batch).map_err(|e| {
            CliError::Check(format!("iteration {}: {e}", iter + 1))
        })?;
        if !loss.is_finite() {
            return Err(CliError::Check(format!("iteration {}: loss is not finite", iter + 1)));
        }
        adam_step(model.store_mut(), &mut adam, cfg, lr_now)?;
        model.zero_grads();

        losses.push(loss);
        window_sum += loss as f64;
        window_n += 1;
        if (iter + 1).is_multiple_of(report_every) || iter + 1 == cfg.iters {
            println!("iter={} lr={} loss={:.6}", iter + 1, lr_now, window_sum / window_n as f64);
            window_sum = 0.0;
            window_n = 0;
        }
    }

    save_checkpoint(&model, out)?;
    Ok((model, TrainReport { losses, images: pairs.len() }))
}
