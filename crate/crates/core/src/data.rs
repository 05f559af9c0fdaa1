//! Paired HR/LR patch sampling and geometric augmentation.
//!
//! Training draws aligned patch pairs from a full HR image and its
//! once-degraded LR counterpart; the LR patch is always a crop of that
//! full LR image, never a re-degraded crop, so patch boundaries see the
//! same filter taps the whole image saw.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::config_err;
use crate::error::Result;
use crate::img::ImageRgb;
use crate::tensor::Tensor;

/// One aligned training pair: an HR patch of side `p`, its LR counterpart
/// of side `p/scale`, the index of the source image, and the HR top-left
/// corner it was cut from.
#[derive(Debug, Clone)]
pub struct PairedSample {
    pub hr_patch: Tensor<f32>,
    pub lr_patch: Tensor<f32>,
    pub source: usize,
    pub top: (usize, usize),
}

/// Cuts a random aligned pair from `(hr, lr)`.
///
/// The HR top-left corner is uniform over positions divisible by `scale`,
/// which keeps the LR crop at integer coordinates `(y/scale, x/scale)`.
pub fn sample_patch(
    hr: &ImageRgb,
    lr: &ImageRgb,
    p: usize,
    scale: usize,
    rng: &mut impl Rng,
) -> Result<PairedSample> {
    if p == 0 || !p.is_multiple_of(scale) {
        return Err(config_err!("patch size {p} must be a positive multiple of the scale {scale}"));
    }
    if hr.width() < p || hr.height() < p {
        return Err(config_err!(
            "{}x{} image is too small for {p}x{p} patches",
            hr.width(),
            hr.height()
        ));
    }
    if lr.width() * scale != hr.width() || lr.height() * scale != hr.height() {
        return Err(config_err!(
            "LR {}x{} does not match HR {}x{} at scale {scale}",
            lr.width(),
            lr.height(),
            hr.width(),
            hr.height()
        ));
    }
    let ny = (hr.height() - p) / scale + 1;
    let nx = (hr.width() - p) / scale + 1;
    let y = scale * rng.gen_range(0..ny);
    let x = scale * rng.gen_range(0..nx);
    Ok(PairedSample {
        hr_patch: hr.crop(x, y, p, p)?.to_tensor(),
        lr_patch: lr.crop(x / scale, y / scale, p / scale, p / scale)?.to_tensor(),
        source: 0,
        top: (y, x),
    })
}

/// Horizontal flip of every plane of a `(1, c, h, w)` tensor.
fn flip_h(t: &Tensor<f32>) -> Tensor<f32> {
    let (c, h, w) = (t.shape()[1], t.shape()[2], t.shape()[3]);
    let src = t.data();
    let mut out = Vec::with_capacity(src.len());
    for ch in 0..c {
        for y in 0..h {
            let row = (ch * h + y) * w;
            out.extend((0..w).map(|x| src[row + w - 1 - x]));
        }
    }
    Tensor::from_vec(vec![1, c, h, w], out).expect("same element count")
}

/// Quarter-turn clockwise: output `(y, x)` reads input `(h-1-x, y)`.
fn rot90(t: &Tensor<f32>) -> Tensor<f32> {
    let (c, h, w) = (t.shape()[1], t.shape()[2], t.shape()[3]);
    let src = t.data();
    let mut out = Vec::with_capacity(src.len());
    for ch in 0..c {
        for y in 0..w {
            for x in 0..h {
                out.push(src[(ch * h + (h - 1 - x)) * w + y]);
            }
        }
    }
    Tensor::from_vec(vec![1, c, w, h], out).expect("same element count")
}

/// Applies a fixed transform — optional horizontal flip, then
/// `quarter_turns` x 90° rotation — identically to both patches.
///
/// Odd turn counts swap height and width, so they are only valid on
/// square patches.
pub fn apply_transform(
    sample: &PairedSample,
    flip: bool,
    quarter_turns: u8,
) -> Result<PairedSample> {
    let k = quarter_turns % 4;
    for t in [&sample.hr_patch, &sample.lr_patch] {
        let s = t.shape();
        if s.len() != 4 || s[0] != 1 {
            return Err(config_err!("augmentation expects (1,c,h,w) patches, got {s:?}"));
        }
        if !k.is_multiple_of(2) && s[2] != s[3] {
            return Err(config_err!(
                "odd quarter-turns need square patches, got {}x{}",
                s[2],
                s[3]
            ));
        }
    }
    let mut hr = sample.hr_patch.detach();
    let mut lr = sample.lr_patch.detach();
    if flip {
        hr = flip_h(&hr);
        lr = flip_h(&lr);
    }
    for _ in 0..k {
        hr = rot90(&hr);
        lr = rot90(&lr);
    }
    Ok(PairedSample { hr_patch: hr, lr_patch: lr, source: sample.source, top: sample.top })
}

/// Random geometric augmentation: a fair horizontal-flip coin and a
/// uniform rotation by 0..3 quarter turns, the same draw applied to both
/// patches.
pub fn augment(sample: &PairedSample, rng: &mut impl Rng) -> Result<PairedSample> {
    let flip = rng.gen_range(0..2) == 1;
    let quarter_turns = rng.gen_range(0..4u8);
    apply_transform(sample, flip, quarter_turns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::resample::make_lr;

    fn gradient_image(w: usize, h: usize) -> ImageRgb {
        let data: Vec<f32> = (0..3 * w * h).map(|i| (i % 29) as f32 / 28.0).collect();
        ImageRgb::new(w, h, data).unwrap()
    }

    fn toy_pair() -> (ImageRgb, ImageRgb) {
        make_lr(&gradient_image(16, 16), 2).unwrap()
    }

    #[test]
    fn patch_corners_are_scale_aligned_and_in_range() {
        let (hr, lr) = toy_pair();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let s = sample_patch(&hr, &lr, 4, 2, &mut rng).unwrap();
            let (y, x) = s.top;
            assert!(y % 2 == 0 && x % 2 == 0);
            assert!(y <= 12 && x <= 12);
            assert_eq!(s.hr_patch.shape(), &[1, 3, 4, 4]);
            assert_eq!(s.lr_patch.shape(), &[1, 3, 2, 2]);
        }
    }

    #[test]
    fn lr_patch_is_a_bit_exact_crop_of_the_degraded_image() {
        let (hr, lr) = toy_pair();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sample_patch(&hr, &lr, 8, 2, &mut rng).unwrap();
        let (y, x) = s.top;
        let expect = lr.crop(x / 2, y / 2, 4, 4).unwrap().to_tensor();
        assert_eq!(s.lr_patch.data(), expect.data());
    }

    #[test]
    fn same_seed_draws_the_same_coordinates() {
        let (hr, lr) = toy_pair();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_patch(&hr, &lr, 4, 2, &mut rng).unwrap().top
        };
        assert_eq!(draw(11), draw(11));
    }

    #[test]
    fn undersized_or_misaligned_requests_are_rejected() {
        let (hr, lr) = toy_pair();
        assert!(sample_patch(&hr, &lr, 18, 2, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        assert!(sample_patch(&hr, &lr, 5, 2, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        let wrong = make_lr(&gradient_image(12, 12), 2).unwrap().1;
        assert!(sample_patch(&hr, &wrong, 4, 2, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn flip_is_an_involution_and_four_turns_cycle_back() {
        let (hr, lr) = toy_pair();
        let s = sample_patch(&hr, &lr, 8, 2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let flipped_twice =
            apply_transform(&apply_transform(&s, true, 0).unwrap(), true, 0).unwrap();
        assert_eq!(flipped_twice.hr_patch.data(), s.hr_patch.data());
        assert_eq!(flipped_twice.lr_patch.data(), s.lr_patch.data());

        let full_cycle = apply_transform(&s, false, 4).unwrap();
        assert_eq!(full_cycle.hr_patch.data(), s.hr_patch.data());
        let mut once_each = s.clone();
        for _ in 0..4 {
            once_each = apply_transform(&once_each, false, 1).unwrap();
        }
        assert_eq!(once_each.hr_patch.data(), s.hr_patch.data());
    }

    #[test]
    fn hr_and_lr_corners_move_together() {
        let (hr, lr) = toy_pair();
        let s = sample_patch(&hr, &lr, 8, 2, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        // Corner positions of an n x n patch, as (y, x) pairs indexed by
        // corner id 0..3: top-left, top-right, bottom-right, bottom-left.
        let corner = |n: usize, id: usize| match id {
            0 => (0, 0),
            1 => (0, n - 1),
            2 => (n - 1, n - 1),
            _ => (n - 1, 0),
        };
        let read = |t: &Tensor<f32>, (y, x): (usize, usize)| {
            let n = t.shape()[3];
            t.data()[y * n + x]
        };
        for flip in [false, true] {
            for k in 0..4u8 {
                let out = apply_transform(&s, flip, k).unwrap();
                for id in 0..4 {
                    // Where corner `id` lands: flip swaps left/right
                    // corners, each quarter turn advances one corner slot.
                    let after_flip = if flip { [1, 0, 3, 2][id] } else { id };
                    let landed = (after_flip + k as usize) % 4;
                    let hr_src = read(&s.hr_patch, corner(8, id));
                    let hr_dst = read(&out.hr_patch, corner(8, landed));
                    assert_eq!(hr_src, hr_dst, "hr flip={flip} k={k} id={id}");
                    let lr_src = read(&s.lr_patch, corner(4, id));
                    let lr_dst = read(&out.lr_patch, corner(4, landed));
                    assert_eq!(lr_src, lr_dst, "lr flip={flip} k={k} id={id}");
                }
            }
        }
    }

    #[test]
    fn odd_turns_require_square_patches() {
        let hr = gradient_image(8, 6).to_tensor();
        let lr = gradient_image(4, 3).to_tensor();
        let s = PairedSample { hr_patch: hr, lr_patch: lr, source: 0, top: (0, 0) };
        assert!(apply_transform(&s, false, 2).is_ok());
        assert!(apply_transform(&s, false, 1).is_err());
    }

    #[test]
    fn augmentation_is_deterministic_in_the_seed() {
        let (hr, lr) = toy_pair();
        let s = sample_patch(&hr, &lr, 8, 2, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            augment(&s, &mut rng).unwrap().hr_patch.to_vec()
        };
        assert_eq!(run(9), run(9));
        // Across many seeds every one of the eight poses shows up.
        let mut seen = alloc::collections::BTreeSet::new();
        for seed in 0..64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let flip = rng.gen_range(0..2) == 1;
            let k = rng.gen_range(0..4u8);
            seen.insert((flip, k));
        }
        assert_eq!(seen.len(), 8);
    }
}
