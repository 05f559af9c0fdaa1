//! Y-channel PSNR and SSIM with the SR-benchmark border-shave convention.
//!
//! Both metrics convert to BT.601 luma, rescale to `[0,255]`, and crop
//! `shave` pixels from every border before comparing — the protocol the
//! published super-resolution tables use (shave = scale). All statistics
//! run in f64.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::img::{rgb_to_y, ImageRgb};
use crate::{config_err, shape_err};

/// PSNR value reported for a zero-MSE comparison, keeping means finite.
pub const PSNR_CAP_DB: f64 = 100.0;

/// Shaved Y plane in `[0,255]`, returned with its cropped dimensions.
fn shaved_y(img: &ImageRgb, shave: usize) -> (Vec<f64>, usize, usize) {
    let (w, h) = (img.width(), img.height());
    let y = rgb_to_y(img);
    let (cw, ch) = (w - 2 * shave, h - 2 * shave);
    let mut out = Vec::with_capacity(cw * ch);
    for row in shave..h - shave {
        for col in shave..w - shave {
            out.push(y[row * w + col] as f64 * 255.0);
        }
    }
    (out, cw, ch)
}

fn check_pair(op: &'static str, a: &ImageRgb, b: &ImageRgb, shave: usize, min: usize) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(shape_err!(
            op,
            "images differ in size: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        ));
    }
    if a.width() < 2 * shave + min || a.height() < 2 * shave + min {
        return Err(config_err!(
            "{}x{} image leaves no {min}x{min} region after shaving {shave} from each border",
            a.width(),
            a.height()
        ));
    }
    Ok(())
}

/// Peak signal-to-noise ratio on the shaved Y channel:
/// `10 log10(255^2 / MSE)`, capped at [`PSNR_CAP_DB`] when the crops agree
/// exactly.
pub fn psnr_y(a: &ImageRgb, b: &ImageRgb, shave: usize) -> Result<f64> {
    check_pair("psnr_y", a, b, shave, 1)?;
    let (ya, _, _) = shaved_y(a, shave);
    let (yb, _, _) = shaved_y(b, shave);
    let mse: f64 =
        ya.iter().zip(&yb).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / ya.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

/// Side length of the SSIM window.
const SSIM_WINDOW: usize = 11;

/// Normalized 11x11 Gaussian window with sigma 1.5.
fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let sigma2 = 2.0 * 1.5 * 1.5;
    let mut sum = 0.0;
    for (i, slot) in w.iter_mut().enumerate() {
        let dy = (i / SSIM_WINDOW) as f64 - 5.0;
        let dx = (i % SSIM_WINDOW) as f64 - 5.0;
        *slot = (-(dx * dx + dy * dy) / sigma2).exp();
        sum += *slot;
    }
    for slot in &mut w {
        *slot /= sum;
    }
    w
}

/// Single-scale structural similarity on the shaved Y channel in `[0,255]`.
///
/// Uses the standard 11x11 Gaussian window (sigma 1.5), C1 = (0.01*255)^2,
/// C2 = (0.03*255)^2, and averages the SSIM map over windows that lie
/// fully inside the crop (no padding).
pub fn ssim_y(a: &ImageRgb, b: &ImageRgb, shave: usize) -> Result<f64> {
    check_pair("ssim_y", a, b, shave, SSIM_WINDOW)?;
    let (ya, w, h) = shaved_y(a, shave);
    let (yb, _, _) = shaved_y(b, shave);
    let win = gaussian_window();
    let c1 = (0.01 * 255.0) * (0.01 * 255.0);
    let c2 = (0.03 * 255.0) * (0.03 * 255.0);

    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=h - SSIM_WINDOW {
        for x0 in 0..=w - SSIM_WINDOW {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for wy in 0..SSIM_WINDOW {
                let row = (y0 + wy) * w + x0;
                let wrow = wy * SSIM_WINDOW;
                for wx in 0..SSIM_WINDOW {
                    let g = win[wrow + wx];
                    let pa = ya[row + wx];
                    let pb = yb[row + wx];
                    ma += g * pa;
                    mb += g * pb;
                    saa += g * (pa * pa);
                    sbb += g * (pb * pb);
                    // Grouping keeps the accumulation symmetric in (a, b)
                    // down to the last bit.
                    sab += g * (pa * pb);
                }
            }
            let va = saa - ma * ma;
            let vb = sbb - mb * mb;
            let cov = sab - ma * mb;
            let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
            let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Per-image metric rows plus their aggregate means, in name order.
#[derive(Debug, Clone)]
pub struct MetricReport {
    entries: Vec<(String, f64, f64)>,
    pub scale: usize,
    pub shave: usize,
}

impl MetricReport {
    /// Empty report for the benchmark convention `shave = scale`.
    pub fn new(scale: usize) -> Self {
        MetricReport { entries: Vec::new(), scale, shave: scale }
    }

    /// Records one image, keeping rows sorted by name.
    pub fn add(&mut self, name: String, psnr_db: f64, ssim: f64) {
        let at = self.entries.partition_point(|e| e.0 <= name);
        self.entries.insert(at, (name, psnr_db, ssim));
    }

    pub fn entries(&self) -> &[(String, f64, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Arithmetic means over the recorded rows: `(psnr, ssim)`.
    pub fn means(&self) -> (f64, f64) {
        let n = self.entries.len().max(1) as f64;
        let psnr: f64 = self.entries.iter().map(|e| e.1).sum();
        let ssim: f64 = self.entries.iter().map(|e| e.2).sum();
        (psnr / n, ssim / n)
    }
}
