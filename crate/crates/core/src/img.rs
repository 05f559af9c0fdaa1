//! In-memory RGB image carrier and YCbCr luma extraction.
//!
//! Images hold three row-major `f32` planes with every sample in `[0, 1]`.
//! All file I/O lives in the companion CLI crate; this module only defines
//! the carrier the pipeline, model, and metrics agree on.

use alloc::vec::Vec;

use crate::config_err;
use crate::error::Result;
use crate::tensor::Tensor;

/// RGB image with three `[0,1]` planes stored plane-major (all of R, then
/// G, then B), each plane row-major. This matches the NCHW tensor layout,
/// so tensor conversion is a straight copy.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ImageRgb {
    /// Builds an image from plane-major samples, validating the `[0,1]`
    /// range invariant.
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(config_err!("image dimensions must be positive, got {width}x{height}"));
        }
        if data.len() != 3 * width * height {
            return Err(config_err!(
                "image buffer holds {} samples, expected 3*{width}*{height} = {}",
                data.len(),
                3 * width * height
            ));
        }
        // The negated form also rejects NaN, which `v < 0.0 || v > 1.0`
        // would let through.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if data.iter().any(|v| !(*v >= 0.0) || !(*v <= 1.0)) {
            return Err(config_err!("image samples must lie in [0,1] and be finite"));
        }
        Ok(ImageRgb { width, height, data })
    }

    /// Constant-colored image.
    pub fn constant(width: usize, height: usize, rgb: [f32; 3]) -> Result<Self> {
        let mut data = Vec::with_capacity(3 * width * height);
        for c in rgb {
            data.extend(core::iter::repeat_n(c, width * height));
        }
        ImageRgb::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// One channel plane (0 = R, 1 = G, 2 = B), row-major.
    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    /// All three planes as one plane-major slice.
    pub fn samples(&self) -> &[f32] {
        &self.data
    }

    /// Sample at channel `c`, row `y`, column `x`.
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Axis-aligned crop of size `w` x `h` with top-left corner `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<ImageRgb> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(config_err!(
                "crop {w}x{h}+{x0}+{y0} does not fit inside a {}x{} image",
                self.width,
                self.height
            ));
        }
        let mut data = Vec::with_capacity(3 * w * h);
        for c in 0..3 {
            for y in y0..y0 + h {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + x0..row + x0 + w]);
            }
        }
        ImageRgb::new(w, h, data)
    }

    /// The image as a `(1, 3, height, width)` tensor.
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(alloc::vec![1, 3, self.height, self.width], self.data.clone())
            .expect("image buffer always matches its dimensions")
    }

    /// Rebuilds an image from a `(1, 3, h, w)` tensor; samples must already
    /// respect the `[0,1]` invariant (network outputs are clamped upstream).
    pub fn from_tensor(t: &Tensor<f32>) -> Result<ImageRgb> {
        let s = t.shape();
        if s.len() != 4 || s[0] != 1 || s[1] != 3 {
            return Err(config_err!("expected a (1,3,h,w) tensor, got {s:?}"));
        }
        ImageRgb::new(s[3], s[2], t.to_vec())
    }
}

/// BT.601 studio-swing luma, the Y plane the benchmark metrics evaluate:
/// `Y = 16/255 + (65.481 R + 128.553 G + 24.966 B) / 255`.
///
/// For inputs in `[0,1]` the output lies in `[16/255, 235/255]`; the
/// row-major result has one sample per pixel.
pub fn rgb_to_y(img: &ImageRgb) -> Vec<f32> {
    let n = img.width * img.height;
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let acc =
            16.0 + 65.481 * r[i] as f64 + 128.553 * g[i] as f64 + 24.966 * b[i] as f64;
        y.push((acc / 255.0) as f32);
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructor_enforces_the_sample_invariants() {
        assert!(ImageRgb::new(2, 2, alloc::vec![0.5; 12]).is_ok());
        assert!(ImageRgb::new(0, 2, alloc::vec![]).is_err());
        assert!(ImageRgb::new(2, 2, alloc::vec![0.5; 11]).is_err());
        assert!(ImageRgb::new(2, 2, alloc::vec![1.5; 12]).is_err());
        assert!(ImageRgb::new(2, 2, alloc::vec![-0.1; 12]).is_err());
        assert!(ImageRgb::new(2, 2, alloc::vec![f32::NAN; 12]).is_err());
    }

    #[test]
    fn tensor_roundtrip_is_lossless() {
        let data: Vec<f32> = (0..27).map(|i| i as f32 / 26.0).collect();
        let img = ImageRgb::new(3, 3, data).unwrap();
        let t = img.to_tensor();
        assert_eq!(t.shape(), &[1, 3, 3, 3]);
        assert_eq!(ImageRgb::from_tensor(&t).unwrap(), img);
    }

    #[test]
    fn crop_extracts_the_expected_window() {
        let data: Vec<f32> = (0..48).map(|i| i as f32 / 47.0).collect();
        let img = ImageRgb::new(4, 4, data).unwrap();
        let c = img.crop(1, 2, 2, 2).unwrap();
        assert_eq!((c.width(), c.height()), (2, 2));
        for ch in 0..3 {
            for y in 0..2 {
                for x in 0..2 {
                    assert_eq!(c.get(ch, y, x), img.get(ch, y + 2, x + 1));
                }
            }
        }
        assert!(img.crop(3, 0, 2, 2).is_err());
    }

    #[test]
    fn luma_matches_hand_evaluated_values() {
        let img = ImageRgb::new(
            3,
            1,
            alloc::vec![
                0.0, 1.0, 0.5, // R
                0.0, 1.0, 0.5, // G
                0.0, 1.0, 0.5, // B
            ],
        )
        .unwrap();
        let y = rgb_to_y(&img);
        assert!((y[0] - 16.0 / 255.0).abs() < 1e-6, "black -> {}", y[0]);
        assert!((y[1] - 235.0 / 255.0).abs() < 1e-6, "white -> {}", y[1]);
        assert!((y[2] - 0.492_157).abs() < 1e-6, "mid gray -> {}", y[2]);
    }

    #[test]
    fn luma_is_monotone_in_each_channel() {
        for c in 0..3 {
            let mut lo = [0.25f32; 3];
            let mut hi = [0.25f32; 3];
            lo[c] = 0.2;
            hi[c] = 0.8;
            let yl = rgb_to_y(&ImageRgb::constant(1, 1, lo).unwrap())[0];
            let yh = rgb_to_y(&ImageRgb::constant(1, 1, hi).unwrap())[0];
            assert!(yl < yh, "channel {c} not monotone");
        }
    }
}
