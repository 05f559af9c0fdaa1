//! Release gate: one test per acceptance criterion.
//!
//! Every test prints a `criterion N (<label>): PASS` line on success, so
//! running this target with `--nocapture` doubles as a checklist. The
//! suite only touches public surfaces — the engine crate, the CLI
//! library, and the installed `ibmdn` binary — and re-derives its
//! expectations independently of the unit tests (fresh seeds, fresh
//! golden constants).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ibmdn_cli::checkpoint::{self, CheckpointError};
use ibmdn_cli::io::{load_image, save_image};
use ibmdn_cli::train_loop::train_loop;
use ibmdn_core::arch::{build_chfab, build_ibmdn, DepthSchedule, ModelSpec, ParamStore, Session};
use ibmdn_core::gradcheck::registered_checks;
use ibmdn_core::img::ImageRgb;
use ibmdn_core::metrics::{psnr_y, ssim_y, PSNR_CAP_DB};
use ibmdn_core::optim::TrainConfig;
use ibmdn_core::resample::{bicubic_resize, make_lr};
use ibmdn_core::{ops, Tape, Tensor};
use ibmdn_testkit as oracle;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tensor64(shape: &[usize], seed: u64) -> Tensor<f64> {
    let data = oracle::random_buffer(seed, shape.iter().product(), -1.0, 1.0);
    Tensor::from_vec(shape.to_vec(), data).unwrap()
}

fn tensor32(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f32> {
    let data = oracle::random_buffer(seed, shape.iter().product(), lo, hi);
    Tensor::from_vec(shape.to_vec(), data.iter().map(|&v| v as f32).collect()).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "oracle and engine disagree on element count");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Writes a deterministic synthetic photograph as a PNG.
fn save_synth(dir: &Path, name: &str, seed: u64, w: usize, h: usize) -> PathBuf {
    let s = oracle::synthetic_hr(seed, w, h);
    let img = ImageRgb::new(s.width, s.height, s.data).unwrap();
    let path = dir.join(name);
    save_image(&img, &path).unwrap();
    path
}

/// Same, with the edge-dense generator; used by the learning-signal run,
/// where restorable high-frequency structure is the whole point.
fn save_synth_dense(dir: &Path, name: &str, seed: u64, w: usize, h: usize) -> PathBuf {
    let s = oracle::synthetic_hr_dense(seed, w, h);
    let img = ImageRgb::new(s.width, s.height, s.data).unwrap();
    let path = dir.join(name);
    save_image(&img, &path).unwrap();
    path
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

// -------------------------------------------------------------------------
// 1. Parameter accounting: totals near the published sizes, inter-scale
//    deltas exactly the reconstruction-conv differences.
// -------------------------------------------------------------------------

#[test]
fn criterion_1_parameter_accounting() {
    let t0 = Instant::now();
    let published = [(2usize, 170_000usize), (3, 178_000), (4, 187_000)];
    let mut totals = [0usize; 3];
    for (i, &(scale, expected)) in published.iter().enumerate() {
        let spec = ModelSpec::standard(scale).unwrap();
        let model = build_ibmdn::<f32>(&spec, 0).unwrap();
        totals[i] = model.count_params().0;
        let ratio = totals[i] as f64 / expected as f64;
        assert!(
            (0.9..=1.1).contains(&ratio),
            "x{scale}: {} params is outside +/-10% of the published {expected}",
            totals[i]
        );
    }
    // Scales differ only in the reconstruction conv: 3x3 from 50 features
    // to 3*s^2 channels plus bias, so x3-x2 = (9-4)*(450+3)*3 = 6765 and
    // x4-x2 = (16-4)*(450+3)*3 = 16236.
    assert_eq!(totals[1] - totals[0], 6_765, "x3 vs x2 parameter delta");
    assert_eq!(totals[2] - totals[0], 16_236, "x4 vs x2 parameter delta");
    let elapsed = t0.elapsed();
    assert!(elapsed < Duration::from_secs(1), "parameter accounting took {elapsed:?}");
    println!(
        "criterion 1 (parameter accounting): PASS (x2 {} / x3 {} / x4 {} params)",
        totals[0], totals[1], totals[2]
    );
}

// -------------------------------------------------------------------------
// 2. Gradient certification: the full registered suite against central
//    finite differences in f64, max relative error < 1e-4.
// -------------------------------------------------------------------------

#[test]
fn criterion_2_gradient_certification() {
    let t0 = Instant::now();
    let checks = registered_checks();
    for need in ["involution", "bsconv", "chfab", "ibmdb"] {
        assert!(
            checks.iter().any(|c| c.name.contains(need)),
            "certification suite is missing a {need} entry"
        );
    }
    let mut ran = 0usize;
    let mut worst_name = String::new();
    let mut worst_err = 0.0f64;
    for check in &checks {
        let results =
            (check.run)(0, 1e-4).unwrap_or_else(|e| panic!("{} failed to run: {e}", check.name));
        assert!(!results.is_empty(), "{} reported no gradient targets", check.name);
        for (target, err) in results {
            assert!(
                err.is_finite() && err < 1e-4,
                "{} / {target}: relative error {err:.3e} exceeds 1e-4",
                check.name
            );
            if err > worst_err {
                worst_err = err;
                worst_name = format!("{} / {target}", check.name);
            }
            ran += 1;
        }
    }
    let elapsed = t0.elapsed();
    assert!(elapsed < Duration::from_secs(120), "gradient certification took {elapsed:?}");
    println!(
        "criterion 2 (gradient certification): PASS ({ran} targets, worst {worst_name} at {worst_err:.2e}, {elapsed:.0?})"
    );
}

// -------------------------------------------------------------------------
// 3. Operator oracles: engine kernels against independent nested-loop
//    references on fresh random instances, agreement within 1e-6.
// -------------------------------------------------------------------------

#[test]
fn criterion_3_operator_oracles() {
    // conv2d: (n, c, h, w, cout, k, groups, bias?)
    let conv_cases = [
        (2, 4, 7, 7, 4, 3, 1, true),
        (1, 3, 6, 6, 2, 3, 1, false),
        (2, 4, 5, 7, 4, 3, 4, true),
        (1, 4, 7, 5, 2, 1, 2, false),
        (2, 2, 6, 7, 4, 1, 1, true),
    ];
    for (i, &(n, c, h, w, cout, k, groups, with_bias)) in conv_cases.iter().enumerate() {
        let seed = 1_000 + i as u64;
        let x = tensor64(&[n, c, h, w], seed);
        let wt = tensor64(&[cout, c / groups, k, k], seed + 30);
        let bias = with_bias.then(|| tensor64(&[cout], seed + 60));
        let mut tape = Tape::disabled();
        let got = ops::conv2d(&mut tape, &x, &wt, bias.as_ref(), groups).unwrap();
        let want = oracle::conv2d_ref(
            x.data(),
            (n, c, h, w),
            wt.data(),
            cout,
            k,
            groups,
            bias.as_ref().map(|b| b.data()),
        );
        let diff = max_abs_diff(got.data(), &want);
        assert!(diff < 1e-6, "conv2d case {i}: max diff {diff}");
    }

    // involution_apply: (n, c, h, w, k, groups)
    let inv_cases =
        [(2, 4, 7, 7, 3, 2), (1, 3, 6, 5, 3, 1), (2, 4, 5, 5, 3, 4), (1, 2, 7, 6, 5, 1), (2, 4, 4, 7, 1, 2)];
    for (i, &(n, c, h, w, k, groups)) in inv_cases.iter().enumerate() {
        let seed = 1_100 + i as u64;
        let x = tensor64(&[n, c, h, w], seed);
        let kern = tensor64(&[n, k * k * groups, h, w], seed + 30);
        let mut tape = Tape::disabled();
        let got = ops::involution_apply(&mut tape, &x, &kern, k, groups).unwrap();
        let want = oracle::involution_apply_ref(x.data(), (n, c, h, w), kern.data(), k, groups);
        let diff = max_abs_diff(got.data(), &want);
        assert!(diff < 1e-6, "involution_apply case {i}: max diff {diff}");
    }

    // unfold: (n, c, h, w, k)
    let unfold_cases = [(2, 4, 7, 7, 3), (1, 1, 5, 5, 5), (2, 3, 6, 4, 3), (1, 4, 7, 6, 1), (2, 2, 4, 4, 3)];
    for (i, &(n, c, h, w, k)) in unfold_cases.iter().enumerate() {
        let x = tensor64(&[n, c, h, w], 1_200 + i as u64);
        let mut tape = Tape::disabled();
        let got = ops::unfold(&mut tape, &x, k).unwrap();
        let want = oracle::unfold_ref(x.data(), (n, c, h, w), k);
        let diff = max_abs_diff(got.data(), &want);
        assert!(diff < 1e-6, "unfold case {i}: max diff {diff}");
    }

    // bicubic_resize: (in_w, in_h, out_w, out_h)
    let resize_cases = [(7, 7, 4, 4), (4, 4, 7, 7), (5, 7, 7, 3), (6, 5, 2, 9), (7, 6, 7, 6)];
    for (i, &(iw, ih, ow, oh)) in resize_cases.iter().enumerate() {
        let raw = oracle::random_buffer(1_300 + i as u64, 3 * iw * ih, 0.0, 1.0);
        let img = ImageRgb::new(iw, ih, raw.iter().map(|&v| v as f32).collect()).unwrap();
        let got = bicubic_resize(&img, ow, oh).unwrap();
        for c in 0..3 {
            // The oracle resamples the f32-quantized plane the engine saw.
            let plane: Vec<f64> = img.plane(c).iter().map(|&v| v as f64).collect();
            let want = oracle::bicubic_ref(&plane, iw, ih, ow, oh);
            let got_plane: Vec<f64> = got.plane(c).iter().map(|&v| v as f64).collect();
            let diff = max_abs_diff(&got_plane, &want);
            assert!(diff < 1e-6, "bicubic case {i} channel {c}: max diff {diff}");
        }
    }
    println!("criterion 3 (operator oracles): PASS (20 instances across four kernels)");
}

// -------------------------------------------------------------------------
// 4. Desk-scale learning signal: 2,000 iterations on twenty small images
//    must beat the bicubic baseline by at least 0.3 dB on held-out data.
// -------------------------------------------------------------------------

#[test]
fn criterion_4_desk_scale_learning_signal() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let train_dir = dir.path().join("train");
    let held_dir = dir.path().join("held");
    fs::create_dir(&train_dir).unwrap();
    fs::create_dir(&held_dir).unwrap();

    let sides = [96usize, 104, 112, 120, 128];
    for i in 0..20 {
        let (w, h) = (sides[i % 5], sides[(i + 2) % 5]);
        save_synth_dense(&train_dir, &format!("train_{i:02}.png"), 8_000 + i as u64, w, h);
    }
    let mut held = Vec::new();
    for i in 0..5 {
        let (w, h) = (sides[(i + 1) % 5], sides[(i + 3) % 5]);
        held.push(save_synth_dense(&held_dir, &format!("held_{i}.png"), 9_000 + i as u64, w, h));
    }

    let spec = ModelSpec::standard(2).unwrap();
    // The stock learning rate and halving schedule are sized for runs a
    // couple of orders of magnitude longer; a desk-scale budget needs a
    // desk-scale rate to show the signal inside 2,000 iterations.
    let cfg = TrainConfig {
        lr0: 3e-3,
        iters: 2_000,
        batch: 8,
        hr_patch: 64,
        seed: 7,
        ..TrainConfig::default()
    };
    let out = dir.path().join("desk.ibmd");
    let (mut model, report) = train_loop(&spec, &cfg, &train_dir, &out).unwrap();
    assert_eq!(report.losses.len(), 2_000);
    assert!(report.losses.iter().all(|l| l.is_finite()), "training loss went non-finite");

    let mut model_db = Vec::new();
    let mut bicubic_db = Vec::new();
    for path in &held {
        let img = load_image(path).unwrap();
        let (hr, lr) = make_lr(&img, 2).unwrap();
        let sr = model.forward_sr(&lr.to_tensor()).unwrap();
        let sr_img = ImageRgb::from_tensor(&sr).unwrap();
        model_db.push(psnr_y(&sr_img, &hr, 2).unwrap());
        let up = bicubic_resize(&lr, hr.width(), hr.height()).unwrap();
        bicubic_db.push(psnr_y(&up, &hr, 2).unwrap());
    }
    let model_mean = mean(&model_db);
    let bicubic_mean = mean(&bicubic_db);
    let elapsed = t0.elapsed();
    assert!(
        model_mean >= bicubic_mean + 0.3,
        "held-out Y-PSNR {model_mean:.3} dB must beat the bicubic baseline {bicubic_mean:.3} dB by 0.3 dB"
    );
    assert!(elapsed <= Duration::from_secs(30 * 60), "learning-signal run took {elapsed:?}");
    println!(
        "criterion 4 (desk-scale learning signal): PASS (model {model_mean:.3} dB vs bicubic {bicubic_mean:.3} dB in {elapsed:.0?})"
    );
}

// -------------------------------------------------------------------------
// 5. Metric golden values on constant images, where both metrics have
//    closed forms.
// -------------------------------------------------------------------------

#[test]
fn criterion_5_metric_goldens() {
    // A constant gray v maps to luma 16 + 219*v on the [0,255] scale, so
    // picking v = (y-16)/219 dials in an exact Y level.
    let gray = |y255: f64| {
        let v = ((y255 - 16.0) / 219.0) as f32;
        ImageRgb::constant(32, 32, [v, v, v]).unwrap()
    };

    // A uniform 16-level offset: MSE 256, PSNR 20*log10(255/16).
    let psnr = psnr_y(&gray(100.0), &gray(116.0), 2).unwrap();
    assert!((psnr - 24.048).abs() <= 0.001, "16-level offset PSNR {psnr:.5} is not 24.048 +/- 0.001");

    // Constant 100 vs 110: zero variance, so SSIM reduces to the
    // luminance term (2*100*110 + C1) / (100^2 + 110^2 + C1).
    let ssim = ssim_y(&gray(100.0), &gray(110.0), 2).unwrap();
    assert!((ssim - 0.99548).abs() <= 1e-4, "constant-pair SSIM {ssim:.6} is not 0.99548 +/- 1e-4");

    // Identical inputs hit the documented caps exactly.
    let a = gray(73.0);
    assert_eq!(psnr_y(&a, &a, 2).unwrap(), PSNR_CAP_DB);
    assert_eq!(ssim_y(&a, &a, 2).unwrap(), 1.0);
    println!("criterion 5 (metric golden values): PASS");
}

// -------------------------------------------------------------------------
// 6. Determinism of the shipped binary: identical flags and seed give
//    byte-identical checkpoints and byte-identical output images.
// -------------------------------------------------------------------------

#[test]
fn criterion_6_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    fs::create_dir(&data_dir).unwrap();
    let input = save_synth(&data_dir, "img_0.png", 600, 48, 48);
    save_synth(&data_dir, "img_1.png", 601, 48, 48);

    let bin = env!("CARGO_BIN_EXE_ibmdn");
    let ck = |n: u32| dir.path().join(format!("run{n}.ibmd"));
    for n in 0..2u32 {
        let out = Command::new(bin)
            .arg("train")
            .arg("--hr-dir")
            .arg(&data_dir)
            .args(["--scale", "2", "--iters", "3", "--batch", "2", "--patch", "32", "--seed", "9"])
            .arg("--out")
            .arg(ck(n))
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "training run {n} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let ck_a = fs::read(ck(0)).unwrap();
    let ck_b = fs::read(ck(1)).unwrap();
    assert!(!ck_a.is_empty(), "training produced an empty checkpoint");
    assert!(ck_a == ck_b, "checkpoints differ between identical training runs");

    let sr = |n: u32| dir.path().join(format!("sr{n}.png"));
    for n in 0..2u32 {
        let out = Command::new(bin)
            .arg("infer")
            .arg("--model")
            .arg(ck(0))
            .arg("--input")
            .arg(&input)
            .arg("--output")
            .arg(sr(n))
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "inference run {n} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let png_a = fs::read(sr(0)).unwrap();
    let png_b = fs::read(sr(1)).unwrap();
    assert!(!png_a.is_empty(), "inference produced an empty image");
    assert!(png_a == png_b, "output PNGs differ between identical inference runs");
    println!(
        "criterion 6 (determinism): PASS ({}-byte checkpoints, {}-byte images)",
        ck_a.len(),
        png_a.len()
    );
}

// -------------------------------------------------------------------------
// 7. Structural invariants of the assembled network.
// -------------------------------------------------------------------------

#[test]
fn criterion_7_structural_invariants() {
    // The standard depth schedule, involution deepening toward the tail.
    let spec = ModelSpec::standard(2).unwrap();
    assert_eq!(spec.schedule.as_string(), "BBB-BBB-BIB-BIB-IBI-III");

    // Zeroing a block's fusion conv silences everything the block
    // computed: the attention gate then multiplies a zero input, and the
    // residual add returns the block input bit-for-bit.
    let mut model = build_ibmdn::<f32>(&spec, 42).unwrap();
    for i in 0..spec.n_blocks {
        for leaf in ["weight", "bias"] {
            let name = format!("blocks.{i}.fuse.{leaf}");
            if let Some(id) = model.store().id_by_name(&name) {
                let zero = Tensor::zeros(model.store().value(id).shape().to_vec()).unwrap();
                model.store_mut().set_value(id, &zero).unwrap();
            } else {
                assert_eq!(leaf, "bias", "fusion conv is missing its {name} parameter");
            }
        }
    }
    // Positive inputs sidestep the one IEEE identity gap (-0.0 + 0.0).
    let x = tensor32(&[1, spec.nf, 8, 8], 71, 0.05, 0.95);
    for i in 0..spec.n_blocks {
        let mut tape = Tape::disabled();
        let y = model.block_forward(&mut tape, i, &x, false).unwrap();
        assert_eq!(y.shape(), x.shape());
        let identical =
            y.data().iter().zip(x.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        assert!(identical, "block {i} with a zeroed fusion conv is not the identity map");
    }

    // Output geometry and range at every supported scale.
    for scale in 2..=4usize {
        let sp = ModelSpec::standard(scale).unwrap();
        let mut m = build_ibmdn::<f32>(&sp, 1).unwrap();
        let lr = tensor32(&[1, 3, 6, 5], 80 + scale as u64, 0.0, 1.0);
        let sr = m.forward_sr(&lr).unwrap();
        assert_eq!(sr.shape(), &[1, 3, 6 * scale, 5 * scale], "x{scale} output geometry");
        assert!(
            sr.data().iter().all(|v| (0.0..=1.0).contains(v)),
            "x{scale} output escapes [0,1]"
        );
    }

    // The attention block is a pure damper: a sigmoid gate in (0,1)
    // scales each element, so magnitudes never grow.
    let mut store: ParamStore<f32> = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let attn = build_chfab(&mut store, &mut rng, "attn", 12, 4).unwrap();
    let xin = tensor32(&[2, 12, 6, 6], 90, -1.0, 1.0);
    let mut tape = Tape::disabled();
    let mut sess = Session::new(&mut tape, &mut store, false);
    let gated = attn.forward(&mut sess, &xin).unwrap();
    for (i, (o, x)) in gated.data().iter().zip(xin.data()).enumerate() {
        assert!(o.abs() <= x.abs(), "attention amplified element {i}: |{o}| > |{x}|");
    }
    println!("criterion 7 (structural invariants): PASS");
}

// -------------------------------------------------------------------------
// 8. Checkpoint format: bit-exact roundtrip, and each corruption class
//    maps to its designated error.
// -------------------------------------------------------------------------

#[test]
fn criterion_8_checkpoint_format() {
    // A narrow spec keeps the blob small while exercising every record
    // kind (convs, norms, both operator kinds, a non-default trunk).
    let spec = ModelSpec {
        nf: 16,
        nd: 8,
        n_blocks: 2,
        chfab_channels: 8,
        schedule: DepthSchedule::default_for(2).unwrap(),
        ..ModelSpec::standard(3).unwrap()
    };
    let model = build_ibmdn::<f32>(&spec, 5).unwrap();
    let bytes = checkpoint::encode(&model);
    assert_eq!(bytes, checkpoint::encode(&model), "encoding is not stable");

    let restored = checkpoint::decode(&bytes).unwrap();
    assert_eq!(restored.spec().scale, spec.scale);
    let a: Vec<_> = model.store().iter().collect();
    let b: Vec<_> = restored.store().iter().collect();
    assert_eq!(a.len(), b.len(), "roundtrip changed the parameter count");
    for ((_, pa), (_, pb)) in a.iter().zip(&b) {
        assert_eq!(pa.name(), pb.name(), "roundtrip reordered parameters");
        assert_eq!(pa.value().shape(), pb.value().shape(), "{} changed shape", pa.name());
        let bits_equal =
            pa.value().data().iter().zip(pb.value().data()).all(|(x, y)| x.to_bits() == y.to_bits());
        assert!(bits_equal, "parameter {} did not roundtrip bit-exactly", pa.name());
    }

    // Corrupted magic.
    let mut bad = bytes.clone();
    bad[0] ^= 0xFF;
    assert!(matches!(checkpoint::decode(&bad), Err(CheckpointError::NotACheckpoint)));

    // Unsupported version (little-endian u16 after the magic).
    let mut bad = bytes.clone();
    bad[4] = 9;
    bad[5] = 0;
    assert!(matches!(checkpoint::decode(&bad), Err(CheckpointError::UnsupportedVersion(9))));

    // Manifest corruption: flip a bit inside the first tensor's name. The
    // first record starts right after the header, so the first match is
    // the record's own name field.
    let first_name = a[0].1.name().as_bytes();
    let pos = bytes
        .windows(first_name.len())
        .position(|w| w == first_name)
        .expect("first parameter name appears in the blob");
    let mut bad = bytes.clone();
    bad[pos] ^= 0x01;
    assert!(matches!(checkpoint::decode(&bad), Err(CheckpointError::ManifestMismatch(_))));

    // Truncation mid-payload.
    let cut = &bytes[..bytes.len() - 3];
    assert!(matches!(checkpoint::decode(cut), Err(CheckpointError::Truncated)));
    println!("criterion 8 (checkpoint format): PASS ({}-byte reference blob)", bytes.len());
}
