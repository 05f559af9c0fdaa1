//! Test-side reference implementations and synthetic data.
//!
//! Everything here is written independently of the engine crate — plain
//! nested loops over raw `f64` buffers, no shared helpers — so the two
//! sides can only agree by computing the same mathematics. The engine's
//! fast paths are certified against these oracles in integration tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Brute-force grouped 2-D convolution, stride 1, zero "same" padding.
///
/// `x` is `(n, c, h, w)`, `weight` is `(cout, c/groups, k, k)`, `bias` is
/// `[cout]`; the output is `(n, cout, h, w)`, all row-major.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_ref(
    x: &[f64],
    (n, c, h, w): (usize, usize, usize, usize),
    weight: &[f64],
    cout: usize,
    k: usize,
    groups: usize,
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let cin_g = c / groups;
    let cout_g = cout / groups;
    let pad = (k / 2) as isize;
    let mut out = vec![0.0; n * cout * h * w];
    for ni in 0..n {
        for co in 0..cout {
            let g = co / cout_g;
            for oy in 0..h {
                for ox in 0..w {
                    let mut acc = bias.map_or(0.0, |b| b[co]);
                    for cl in 0..cin_g {
                        let ci = g * cin_g + cl;
                        for dy in 0..k {
                            for dx in 0..k {
                                let iy = oy as isize + dy as isize - pad;
                                let ix = ox as isize + dx as isize - pad;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xi = ((ni * c + ci) * h + iy as usize) * w + ix as usize;
                                let wi = ((co * cin_g + cl) * k + dy) * k + dx;
                                acc += x[xi] * weight[wi];
                            }
                        }
                    }
                    out[((ni * cout + co) * h + oy) * w + ox] = acc;
                }
            }
        }
    }
    out
}

/// Brute-force im2col: `(n, c, h, w) -> (n, c*k*k, h*w)` with zero "same"
/// padding, taps of one channel contiguous in row-major tap order.
pub fn unfold_ref(x: &[f64], (n, c, h, w): (usize, usize, usize, usize), k: usize) -> Vec<f64> {
    let pad = (k / 2) as isize;
    let mut out = vec![0.0; n * c * k * k * h * w];
    for ni in 0..n {
        for ci in 0..c {
            for dy in 0..k {
                for dx in 0..k {
                    for oy in 0..h {
                        for ox in 0..w {
                            let iy = oy as isize + dy as isize - pad;
                            let ix = ox as isize + dx as isize - pad;
                            let v = if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                0.0
                            } else {
                                x[((ni * c + ci) * h + iy as usize) * w + ix as usize]
                            };
                            let ch = ci * k * k + dy * k + dx;
                            out[((ni * c * k * k + ch) * h + oy) * w + ox] = v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Brute-force involution application: position `(oy, ox)` of every
/// channel in group `g` is filtered by the k x k window stored at kernel
/// channels `g*k*k .. (g+1)*k*k`, zero "same" padding.
pub fn involution_apply_ref(
    x: &[f64],
    (n, c, h, w): (usize, usize, usize, usize),
    kernels: &[f64],
    k: usize,
    groups: usize,
) -> Vec<f64> {
    let ch_per_g = c / groups;
    let pad = (k / 2) as isize;
    let kc = k * k * groups;
    let mut out = vec![0.0; n * c * h * w];
    for ni in 0..n {
        for ci in 0..c {
            let g = ci / ch_per_g;
            for oy in 0..h {
                for ox in 0..w {
                    let mut acc = 0.0;
                    for dy in 0..k {
                        for dx in 0..k {
                            let iy = oy as isize + dy as isize - pad;
                            let ix = ox as isize + dx as isize - pad;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let kch = g * k * k + dy * k + dx;
                            let ki = ((ni * kc + kch) * h + oy) * w + ox;
                            let xi = ((ni * c + ci) * h + iy as usize) * w + ix as usize;
                            acc += kernels[ki] * x[xi];
                        }
                    }
                    out[((ni * c + ci) * h + oy) * w + ox] = acc;
                }
            }
        }
    }
    out
}

/// The a = -0.5 cubic convolution kernel, restated here.
fn cubic_ref(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        1.5 * a * a * a - 2.5 * a * a + 1.0
    } else if a <= 2.0 {
        -0.5 * a * a * a + 2.5 * a * a - 4.0 * a + 2.0
    } else {
        0.0
    }
}

/// Symmetric edge replication: fold any integer onto `0..len`.
fn reflect_ref(mut i: isize, len: usize) -> usize {
    let period = 2 * len as isize;
    i = i.rem_euclid(period);
    if i < len as isize {
        i as usize
    } else {
        (period - 1 - i) as usize
    }
}

/// Direct (non-separable) bicubic resampling of one `[0,1]` plane with
/// MATLAB conventions: output pixel centers map through
/// `u = (x+0.5)/scale - 0.5`, the kernel is stretched by the inverse
/// scale when downscaling, and the full 2-D weight stack is normalized by
/// its own sum. Output is clamped to `[0,1]`.
pub fn bicubic_ref(src: &[f64], in_w: usize, in_h: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    let sx = out_w as f64 / in_w as f64;
    let sy = out_h as f64 / in_h as f64;
    let (wx, kx) = if sx < 1.0 { (4.0 / sx, sx) } else { (4.0, 1.0) };
    let (wy, ky) = if sy < 1.0 { (4.0 / sy, sy) } else { (4.0, 1.0) };
    let px = wx.ceil() as isize + 2;
    let py = wy.ceil() as isize + 2;

    let mut out = vec![0.0; out_w * out_h];
    for oy in 0..out_h {
        let v = (oy as f64 + 0.5) / sy - 0.5;
        let top = (v - wy / 2.0).floor() as isize;
        for ox in 0..out_w {
            let u = (ox as f64 + 0.5) / sx - 0.5;
            let left = (u - wx / 2.0).floor() as isize;
            let mut num = 0.0;
            let mut den = 0.0;
            for iy in top..top + py {
                let gy = ky * cubic_ref(ky * (v - iy as f64));
                let ry = reflect_ref(iy, in_h);
                for ix in left..left + px {
                    let gx = kx * cubic_ref(kx * (u - ix as f64));
                    let rx = reflect_ref(ix, in_w);
                    num += gy * gx * src[ry * in_w + rx];
                    den += gy * gx;
                }
            }
            out[oy * out_w + ox] = (num / den).clamp(0.0, 1.0);
        }
    }
    out
}

/// A synthetic "photograph": three `[0,1]` planes, plane-major row-major.
pub struct SynthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

/// Deterministic synthetic HR image with SR-relevant structure: smooth
/// low-frequency shading plus hard-edged shapes (rectangles and disks)
/// whose step edges are exactly what bicubic upscaling blurs and a
/// super-resolver must learn to restore.
pub fn synthetic_hr(seed: u64, width: usize, height: usize) -> SynthImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Smooth background: a few random plane waves per channel, with the
    // channels sharing geometry so the luma carries the structure.
    let n_waves = 3;
    let waves: Vec<(f64, f64, f64, f64)> = (0..n_waves)
        .map(|_| {
            (
                rng.gen_range(0.5..3.0) * core::f64::consts::TAU / width.max(height) as f64,
                rng.gen_range(0.0..core::f64::consts::TAU),
                rng.gen_range(0.0..core::f64::consts::TAU),
                rng.gen_range(0.08..0.18),
            )
        })
        .collect();
    let channel_gain: Vec<f64> = (0..3).map(|_| rng.gen_range(0.7..1.0)).collect();
    let base: Vec<f64> = (0..3).map(|_| rng.gen_range(0.35..0.65)).collect();

    let mut data = vec![0.0f32; 3 * width * height];
    for y in 0..height {
        for x in 0..width {
            let mut shade = 0.0;
            for &(freq, theta, phase, amp) in &waves {
                let t = (x as f64 * theta.cos() + y as f64 * theta.sin()) * freq + phase;
                shade += amp * t.sin();
            }
            for c in 0..3 {
                let v = base[c] + channel_gain[c] * shade;
                data[(c * height + y) * width + x] = v.clamp(0.05, 0.95) as f32;
            }
        }
    }

    // Hard-edged shapes: axis-aligned rectangles and filled disks with a
    // constant fill color per shape.
    let n_shapes = rng.gen_range(8..14);
    for _ in 0..n_shapes {
        let fill: Vec<f32> = (0..3).map(|_| rng.gen_range(0.02f32..0.98)).collect();
        if rng.gen_range(0..2) == 0 {
            let rw = rng.gen_range(width / 10..width / 3);
            let rh = rng.gen_range(height / 10..height / 3);
            let x0 = rng.gen_range(0..width - rw);
            let y0 = rng.gen_range(0..height - rh);
            for c in 0..3 {
                for y in y0..y0 + rh {
                    for x in x0..x0 + rw {
                        data[(c * height + y) * width + x] = fill[c];
                    }
                }
            }
        } else {
            let r = rng.gen_range(width.min(height) / 12..width.min(height) / 4) as isize;
            let cx = rng.gen_range(0..width) as isize;
            let cy = rng.gen_range(0..height) as isize;
            for c in 0..3 {
                for y in 0..height as isize {
                    for x in 0..width as isize {
                        if (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r {
                            data[(c as usize * height + y as usize) * width + x as usize] =
                                fill[c as usize];
                        }
                    }
                }
            }
        }
    }
    SynthImage { width, height, data }
}

/// Edge-dense variant of [`synthetic_hr`]: the same smooth background,
/// but many small shapes plus thin high-contrast strokes. Step edges and
/// one-to-three-pixel lines are the structures an interpolating upscaler
/// degrades most, so this corpus maximizes the restorable signal per
/// pixel.
pub fn synthetic_hr_dense(seed: u64, width: usize, height: usize) -> SynthImage {
    let mut img = synthetic_hr(seed, width, height);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00c0_ffee);
    let data = &mut img.data;

    // Small filled rectangles and disks, a few per 32x32 tile.
    let n_shapes = (width * height) / 400;
    for _ in 0..n_shapes {
        let fill: Vec<f32> = (0..3).map(|_| rng.gen_range(0.02f32..0.98)).collect();
        if rng.gen_range(0..2) == 0 {
            let rw = rng.gen_range(3..width / 8);
            let rh = rng.gen_range(3..height / 8);
            let x0 = rng.gen_range(0..width - rw);
            let y0 = rng.gen_range(0..height - rh);
            for c in 0..3 {
                for y in y0..y0 + rh {
                    for x in x0..x0 + rw {
                        data[(c * height + y) * width + x] = fill[c];
                    }
                }
            }
        } else {
            let r = rng.gen_range(2..width.min(height) / 10) as isize;
            let cx = rng.gen_range(0..width) as isize;
            let cy = rng.gen_range(0..height) as isize;
            for c in 0..3 {
                for y in (cy - r).max(0)..(cy + r + 1).min(height as isize) {
                    for x in (cx - r).max(0)..(cx + r + 1).min(width as isize) {
                        if (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r {
                            data[(c as usize * height + y as usize) * width + x as usize] =
                                fill[c as usize];
                        }
                    }
                }
            }
        }
    }

    // Thin strokes: horizontal, vertical, and diagonal runs 1-2 px wide.
    let n_strokes = (width * height) / 700;
    for _ in 0..n_strokes {
        let fill: Vec<f32> = (0..3).map(|_| rng.gen_range(0.02f32..0.98)).collect();
        let thick = rng.gen_range(1..3usize);
        let len = rng.gen_range(width / 6..width / 2);
        let x0 = rng.gen_range(0..width.saturating_sub(len + thick));
        let y0 = rng.gen_range(0..height.saturating_sub(len + thick));
        let dir = rng.gen_range(0..3);
        for t in 0..len {
            let (px, py) = match dir {
                0 => (x0 + t, y0),
                1 => (x0, y0 + t),
                _ => (x0 + t, y0 + t),
            };
            for dy in 0..thick {
                for dx in 0..thick {
                    let (x, y) = (px + dx, py + dy);
                    if x < width && y < height {
                        for c in 0..3 {
                            data[(c * height + y) * width + x] = fill[c];
                        }
                    }
                }
            }
        }
    }
    img
}

/// Uniform pseudo-random buffer in `[lo, hi)`, seeded; handy for oracle
/// instances.
pub fn random_buffer(seed: u64, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(lo..hi)).collect()
}
