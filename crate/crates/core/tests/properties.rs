//! Randomized structural invariants.

use ibmdn_core::img::ImageRgb;
use ibmdn_core::ops;
use ibmdn_core::resample::bicubic_resize;
use ibmdn_core::{Tape, Tensor};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Resampling weights form a partition of unity: constant images stay
    /// constant under any size change.
    #[test]
    fn bicubic_preserves_constants(
        in_w in 1usize..12, in_h in 1usize..12,
        out_w in 1usize..12, out_h in 1usize..12,
        level in 0.0f32..1.0,
    ) {
        let img = ImageRgb::constant(in_w, in_h, [level; 3]).unwrap();
        let out = bicubic_resize(&img, out_w, out_h).unwrap();
        for &v in out.samples() {
            prop_assert!((v - level).abs() < 1e-6, "{v} vs {level}");
        }
    }

    /// Pixel shuffle is a bijection: unshuffle inverts it elementwise.
    #[test]
    fn pixel_shuffle_roundtrips(
        n in 1usize..3, c in 1usize..4, h in 1usize..5, w in 1usize..5,
        s in 1usize..4, seed in 0u64..1000,
    ) {
        let x = Tensor::<f64>::uniform(vec![n, c * s * s, h, w], -1.0, 1.0, seed).unwrap();
        let mut tape = Tape::disabled();
        let shuffled = ops::pixel_shuffle(&mut tape, &x, s).unwrap();
        prop_assert_eq!(shuffled.shape(), &[n, c, h * s, w * s]);
        let back = ops::pixel_unshuffle(&mut tape, &shuffled, s).unwrap();
        prop_assert_eq!(back.data(), x.data());
    }

    /// The gradient of sum(unfold(x)) counts, at every input pixel, how
    /// many k x k windows cover it — computable by brute force.
    #[test]
    fn unfold_backward_counts_covering_windows(
        h in 1usize..7, w in 1usize..7, k in prop::sample::select(vec![1usize, 3, 5]),
        seed in 0u64..1000,
    ) {
        let x0 = Tensor::<f64>::uniform(vec![1, 2, h, w], -1.0, 1.0, seed).unwrap();
        let mut tape = Tape::new();
        let x = tape.watch(&x0);
        let cols = ops::unfold(&mut tape, &x, k).unwrap();
        let total = ops::sum(&mut tape, &cols).unwrap();
        let grads = tape.backward(&total).unwrap();
        let gx = grads.wrt(&x).unwrap();

        let pad = (k / 2) as isize;
        for c in 0..2usize {
            for iy in 0..h {
                for ix in 0..w {
                    // Window at output (oy, ox) covers input (iy, ix) iff
                    // (iy - oy + pad, ix - ox + pad) is a valid tap.
                    let mut count = 0.0;
                    for oy in 0..h {
                        for ox in 0..w {
                            let dy = iy as isize - oy as isize + pad;
                            let dx = ix as isize - ox as isize + pad;
                            if (0..k as isize).contains(&dy) && (0..k as isize).contains(&dx) {
                                count += 1.0;
                            }
                        }
                    }
                    let got = gx[(c * h + iy) * w + ix];
                    prop_assert!((got - count).abs() < 1e-12, "({c},{iy},{ix}): {got} vs {count}");
                }
            }
        }
    }

    /// Luma is affine: interpolating inputs interpolates outputs.
    #[test]
    fn rgb_to_y_is_affine(
        r0 in 0.0f32..1.0, g0 in 0.0f32..1.0, b0 in 0.0f32..1.0,
        r1 in 0.0f32..1.0, g1 in 0.0f32..1.0, b1 in 0.0f32..1.0,
        alpha in 0.0f32..1.0,
    ) {
        let y = |rgb: [f32; 3]| {
            ibmdn_core::img::rgb_to_y(&ImageRgb::constant(1, 1, rgb).unwrap())[0] as f64
        };
        let mix = [
            alpha * r0 + (1.0 - alpha) * r1,
            alpha * g0 + (1.0 - alpha) * g1,
            alpha * b0 + (1.0 - alpha) * b1,
        ];
        let want = alpha as f64 * y([r0, g0, b0]) + (1.0 - alpha as f64) * y([r1, g1, b1]);
        prop_assert!((y(mix) - want).abs() < 1e-6);
    }
}
