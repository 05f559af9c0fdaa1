//! Bicubic resampling with MATLAB `imresize` conventions.
//!
//! This is the degradation model the benchmark numbers assume: the cubic
//! kernel with a = -0.5, antialiasing on downscale (the kernel is widened
//! by the inverse scale), per-pixel weight renormalization, symmetric edge
//! replication, and separable evaluation (width pass, then height pass).
//! Low-resolution training data is synthesized with [`make_lr`]; nothing
//! is ever read back from pre-degraded files.

use alloc::vec;
use alloc::vec::Vec;

use crate::config_err;
use crate::error::Result;
use crate::img::ImageRgb;

/// Cubic convolution kernel with a = -0.5 (Keys); support is `|t| <= 2`.
fn cubic(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        ((1.5 * a - 2.5) * a) * a + 1.0
    } else if a <= 2.0 {
        ((-0.5 * a + 2.5) * a - 4.0) * a + 2.0
    } else {
        0.0
    }
}

/// Resolved contribution of input samples to one output sample: parallel
/// arrays of (already edge-reflected) source indices and normalized weights.
struct Taps {
    idx: Vec<usize>,
    w: Vec<f64>,
}

/// Plans one separable pass from `in_len` to `out_len` samples.
///
/// Output position `x` maps to input coordinate `u = (x + 0.5)/scale - 0.5`.
/// When downscaling the kernel is stretched by `1/scale` so it acts as an
/// antialiasing filter; weights are renormalized to sum to one in both
/// directions. Out-of-range taps are folded back by symmetric edge
/// replication (`..., 1, 0 | 0, 1, ...`).
fn plan_axis(in_len: usize, out_len: usize) -> Vec<Taps> {
    let scale = out_len as f64 / in_len as f64;
    let (width, kscale) = if scale < 1.0 { (4.0 / scale, scale) } else { (4.0, 1.0) };
    let support = width.ceil() as isize + 2;
    // Symmetric reflection ladder: index m maps to ladder[m mod 2n].
    let ladder: Vec<usize> = (0..in_len).chain((0..in_len).rev()).collect();
    let period = 2 * in_len as isize;

    (0..out_len)
        .map(|x| {
            let u = (x as f64 + 0.5) / scale - 0.5;
            let start = (u - width / 2.0).floor() as isize;
            let mut w: Vec<f64> = (0..support)
                .map(|i| kscale * cubic(kscale * (u - (start + i) as f64)))
                .collect();
            let sum: f64 = w.iter().sum();
            for v in &mut w {
                *v /= sum;
            }
            let idx = (0..support)
                .map(|i| ladder[(start + i).rem_euclid(period) as usize])
                .collect();
            Taps { idx, w }
        })
        .collect()
}

/// One separable pass over the innermost axis of a `rows x in_len` buffer.
fn apply_axis(src: &[f64], rows: usize, in_len: usize, plan: &[Taps]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * plan.len());
    for r in 0..rows {
        let row = &src[r * in_len..(r + 1) * in_len];
        for taps in plan {
            let mut acc = 0.0;
            for (&i, &w) in taps.idx.iter().zip(&taps.w) {
                acc += w * row[i];
            }
            out.push(acc);
        }
    }
    out
}

/// Resizes to `out_w` x `out_h` with the MATLAB-convention bicubic kernel.
///
/// Both passes run in f64; the result is clamped to `[0,1]` once at the
/// end, matching the 8-bit quantization convention of the benchmarks.
pub fn bicubic_resize(img: &ImageRgb, out_w: usize, out_h: usize) -> Result<ImageRgb> {
    if out_w == 0 || out_h == 0 {
        return Err(config_err!("target size must be positive, got {out_w}x{out_h}"));
    }
    let (w, h) = (img.width(), img.height());
    let wplan = plan_axis(w, out_w);
    let hplan = plan_axis(h, out_h);

    let mut data = Vec::with_capacity(3 * out_w * out_h);
    let mut transposed = vec![0.0f64; out_w * h];
    for c in 0..3 {
        let plane: Vec<f64> = img.plane(c).iter().map(|&v| v as f64).collect();
        // Width pass on (h, w), then transpose so the height pass is also
        // an innermost-axis pass.
        let mid = apply_axis(&plane, h, w, &wplan);
        for y in 0..h {
            for x in 0..out_w {
                transposed[x * h + y] = mid[y * out_w + x];
            }
        }
        let tall = apply_axis(&transposed, out_w, h, &hplan);
        // `tall` is (out_w, out_h); emit row-major (out_h, out_w).
        for y in 0..out_h {
            for x in 0..out_w {
                data.push(tall[x * out_h + y].clamp(0.0, 1.0) as f32);
            }
        }
    }
    ImageRgb::new(out_w, out_h, data)
}

/// Synthesizes the LR counterpart of an HR image: crops to the largest
/// size divisible by `scale`, then bicubic-downscales by `scale`. Returns
/// the cropped HR (the ground truth every metric compares against) and
/// the LR image.
pub fn make_lr(img: &ImageRgb, scale: usize) -> Result<(ImageRgb, ImageRgb)> {
    if !(2..=4).contains(&scale) {
        return Err(config_err!("scale factor must be 2, 3, or 4, got {scale}"));
    }
    let (w, h) = (img.width(), img.height());
    if w < scale || h < scale {
        return Err(config_err!("{w}x{h} image is too small to downscale by {scale}"));
    }
    let cw = w - w % scale;
    let ch = h - h % scale;
    let hr = img.crop(0, 0, cw, ch)?;
    let lr = bicubic_resize(&hr, cw / scale, ch / scale)?;
    Ok((hr, lr))
}
