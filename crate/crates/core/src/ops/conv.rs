//! 2-D convolution (stride 1, zero "same" padding, square odd kernels),
//! the blueprint-separable composition, and `unfold`.
//!
//! All spatial loops are organized as contiguous row-segment operations:
//! for each kernel tap the valid output range is computed once and the
//! inner loop walks two (or three) flat slices. That keeps bounds checks
//! out of the hot loop and lets the compiler vectorize, while the fixed
//! tap/channel iteration order keeps results bit-reproducible.

use alloc::vec;

use super::kern::{axpy, axpy4};
use crate::config_err;
use crate::error::{Error, Result};
use crate::scalar::{dot_lanes, dot_lanes4, sum_lanes, Scalar};
use crate::shape_err;
use crate::tape::Tape;
use crate::tensor::Tensor;

#[derive(Clone, Copy)]
struct ConvDims {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    k: usize,
    cin_g: usize,
    cout_g: usize,
}

fn validate_conv<T: Scalar>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    groups: usize,
) -> Result<ConvDims> {
    let (n, cin, h, w) = x.dims4("conv2d")?;
    let &[cout, cin_g, kh, kw] = weight.shape() else {
        return Err(shape_err!("conv2d", "weight must be rank 4, got {:?}", weight.shape()));
    };
    if kh != kw || kh % 2 == 0 {
        return Err(Error::UnsupportedKernel { op: "conv2d", k: kh.max(kw) });
    }
    if groups == 0 || cin % groups != 0 || cout % groups != 0 {
        return Err(config_err!(
            "conv2d groups ({groups}) must divide both input ({cin}) and output ({cout}) channels"
        ));
    }
    if cin_g != cin / groups {
        return Err(shape_err!(
            "conv2d",
            "weight expects {cin_g} channels per group, input provides {}",
            cin / groups
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(shape_err!(
                "conv2d",
                "bias must have shape [{cout}], got {:?}",
                b.shape()
            ));
        }
    }
    Ok(ConvDims { n, cin, h, w, cout, k: kh, cin_g, cout_g: cout / groups })
}

/// The in-bounds output range along one axis for kernel offset `s`:
/// positions `o` with `0 <= o + s < extent`.
fn tap_range(extent: usize, s: isize) -> (usize, usize) {
    let lo = (-s).max(0) as usize;
    let hi = (extent as isize - s).clamp(0, extent as isize) as usize;
    (lo, hi)
}

/// `out[oy, ox] += Σ_taps wk[dy, dx] * xp[oy + dy - pad, ox + dx - pad]`
/// over one (h, w) plane, skipping out-of-bounds taps (zero padding).
fn plane_conv_acc<T: Scalar>(out: &mut [T], xp: &[T], wk: &[T], h: usize, w: usize, k: usize) {
    let pad = (k / 2) as isize;
    for dy in 0..k {
        let sy = dy as isize - pad;
        let (oy_lo, oy_hi) = tap_range(h, sy);
        for dx in 0..k {
            let sx = dx as isize - pad;
            let (ox_lo, ox_hi) = tap_range(w, sx);
            if ox_lo >= ox_hi {
                continue;
            }
            let wgt = wk[dy * k + dx];
            for oy in oy_lo..oy_hi {
                let iy = (oy as isize + sy) as usize;
                let ib = iy * w + (ox_lo as isize + sx) as usize;
                let dst = &mut out[oy * w + ox_lo..oy * w + ox_hi];
                axpy(dst, wgt, &xp[ib..ib + (ox_hi - ox_lo)]);
            }
        }
    }
}

/// Transposed form: `gx[oy + dy - pad, ox + dx - pad] += wk[dy, dx] * gp[oy, ox]`.
/// Scatters an output-plane gradient back onto the input plane.
fn plane_conv_acc_t<T: Scalar>(gx: &mut [T], gp: &[T], wk: &[T], h: usize, w: usize, k: usize) {
    let pad = (k / 2) as isize;
    for dy in 0..k {
        let sy = dy as isize - pad;
        let (oy_lo, oy_hi) = tap_range(h, sy);
        for dx in 0..k {
            let sx = dx as isize - pad;
            let (ox_lo, ox_hi) = tap_range(w, sx);
            if ox_lo >= ox_hi {
                continue;
            }
            let wgt = wk[dy * k + dx];
            for oy in oy_lo..oy_hi {
                let iy = (oy as isize + sy) as usize;
                let ib = iy * w + (ox_lo as isize + sx) as usize;
                let dst = &mut gx[ib..ib + (ox_hi - ox_lo)];
                axpy(dst, wgt, &gp[oy * w + ox_lo..oy * w + ox_hi]);
            }
        }
    }
}

/// `gw[dy, dx] += Σ_valid gp[oy, ox] * xp[oy + dy - pad, ox + dx - pad]`
/// for one plane pair; row segments reduce through `dot_lanes`.
fn plane_weight_acc<T: Scalar>(gw: &mut [T], gp: &[T], xp: &[T], h: usize, w: usize, k: usize) {
    let pad = (k / 2) as isize;
    for dy in 0..k {
        let sy = dy as isize - pad;
        let (oy_lo, oy_hi) = tap_range(h, sy);
        for dx in 0..k {
            let sx = dx as isize - pad;
            let (ox_lo, ox_hi) = tap_range(w, sx);
            if ox_lo >= ox_hi {
                continue;
            }
            let mut s = T::zero();
            for oy in oy_lo..oy_hi {
                let iy = (oy as isize + sy) as usize;
                let ib = iy * w + (ox_lo as isize + sx) as usize;
                let a = &gp[oy * w + ox_lo..oy * w + ox_hi];
                s = s + dot_lanes(a, &xp[ib..ib + a.len()]);
            }
            gw[dy * k + dx] = gw[dy * k + dx] + s;
        }
    }
}

/// Grouped 2-D convolution with stride 1 and zero "same" padding, so the
/// spatial extent is preserved. `weight` is `(C_out, C_in/groups, k, k)`
/// with `k` odd; `bias`, if given, has shape `[C_out]`.
pub fn conv2d<T: Scalar>(
    tape: &mut Tape<T>,
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    groups: usize,
) -> Result<Tensor<T>> {
    let d = validate_conv(x, weight, bias, groups)?;
    let plane = d.h * d.w;
    let (xd, wd) = (x.data(), weight.data());
    let ksq = d.k * d.k;

    // Ungrouped pointwise convolutions dominate the network's cost; a
    // four-channel blocked pass keeps them fast without changing the
    // per-element accumulation order of the generic path.
    let pointwise = d.k == 1 && d.cin_g == d.cin;
    let mut out = vec![T::zero(); d.n * d.cout * plane];
    for ni in 0..d.n {
        let xs = &xd[ni * d.cin * plane..][..d.cin * plane];
        for co in 0..d.cout {
            let og = co / d.cout_g;
            let op = &mut out[(ni * d.cout + co) * plane..][..plane];
            if let Some(b) = bias {
                op.fill(b.data()[co]);
            }
            if pointwise {
                let wr = &wd[co * d.cin..][..d.cin];
                let mut ci = 0;
                while ci + 4 <= d.cin {
                    axpy4(
                        op,
                        [wr[ci], wr[ci + 1], wr[ci + 2], wr[ci + 3]],
                        [
                            &xs[ci * plane..][..plane],
                            &xs[(ci + 1) * plane..][..plane],
                            &xs[(ci + 2) * plane..][..plane],
                            &xs[(ci + 3) * plane..][..plane],
                        ],
                    );
                    ci += 4;
                }
                for ci in ci..d.cin {
                    axpy(op, wr[ci], &xs[ci * plane..][..plane]);
                }
                continue;
            }
            for cl in 0..d.cin_g {
                let ci = og * d.cin_g + cl;
                let xp = &xs[ci * plane..][..plane];
                let wk = &wd[(co * d.cin_g + cl) * ksq..][..ksq];
                plane_conv_acc(op, xp, wk, d.h, d.w, d.k);
            }
        }
    }
    let out = Tensor::from_op("conv2d", vec![d.n, d.cout, d.h, d.w], out)?;

    let (xn, wn, bn) = (x.node(), weight.node(), bias.and_then(|b| b.node()));
    Ok(tape.record(out, &[xn, wn, bn], || {
        let x = x.clone();
        let weight = weight.clone();
        Box::new(move |g, acc| {
            let (xd, wd) = (x.data(), weight.data());
            if let Some(xid) = xn {
                acc.accumulate(xid, x.len(), |gx| {
                    for ni in 0..d.n {
                        if pointwise {
                            // Transposed blocked pass; output channels still
                            // accumulate in index order per element.
                            let gs = &g[ni * d.cout * plane..][..d.cout * plane];
                            for ci in 0..d.cin {
                                let dst = &mut gx[(ni * d.cin + ci) * plane..][..plane];
                                let mut co = 0;
                                while co + 4 <= d.cout {
                                    axpy4(
                                        dst,
                                        [
                                            wd[co * d.cin + ci],
                                            wd[(co + 1) * d.cin + ci],
                                            wd[(co + 2) * d.cin + ci],
                                            wd[(co + 3) * d.cin + ci],
                                        ],
                                        [
                                            &gs[co * plane..][..plane],
                                            &gs[(co + 1) * plane..][..plane],
                                            &gs[(co + 2) * plane..][..plane],
                                            &gs[(co + 3) * plane..][..plane],
                                        ],
                                    );
                                    co += 4;
                                }
                                for co in co..d.cout {
                                    axpy(dst, wd[co * d.cin + ci], &gs[co * plane..][..plane]);
                                }
                            }
                            continue;
                        }
                        for co in 0..d.cout {
                            let og = co / d.cout_g;
                            let gp = &g[(ni * d.cout + co) * plane..][..plane];
                            for cl in 0..d.cin_g {
                                let ci = og * d.cin_g + cl;
                                let gxp = &mut gx[(ni * d.cin + ci) * plane..][..plane];
                                let wk = &wd[(co * d.cin_g + cl) * ksq..][..ksq];
                                plane_conv_acc_t(gxp, gp, wk, d.h, d.w, d.k);
                            }
                        }
                    }
                });
            }
            if let Some(wid) = wn {
                acc.accumulate(wid, weight.len(), |gw| {
                    for co in 0..d.cout {
                        let og = co / d.cout_g;
                        if pointwise {
                            // Four weight gradients share each pass over the
                            // output-gradient plane. Each dot reduces the
                            // whole plane with the fixed lane discipline of
                            // `dot_lanes`, so results stay reproducible.
                            let mut ci = 0;
                            while ci + 4 <= d.cin {
                                let mut s = [T::zero(); 4];
                                for ni in 0..d.n {
                                    let gp = &g[(ni * d.cout + co) * plane..][..plane];
                                    let xb = &xd[ni * d.cin * plane..];
                                    let dots = dot_lanes4(
                                        gp,
                                        [
                                            &xb[ci * plane..][..plane],
                                            &xb[(ci + 1) * plane..][..plane],
                                            &xb[(ci + 2) * plane..][..plane],
                                            &xb[(ci + 3) * plane..][..plane],
                                        ],
                                    );
                                    for j in 0..4 {
                                        s[j] = s[j] + dots[j];
                                    }
                                }
                                for j in 0..4 {
                                    gw[co * d.cin + ci + j] = gw[co * d.cin + ci + j] + s[j];
                                }
                                ci += 4;
                            }
                            for ci in ci..d.cin {
                                let mut s = T::zero();
                                for ni in 0..d.n {
                                    let gp = &g[(ni * d.cout + co) * plane..][..plane];
                                    let xp = &xd[(ni * d.cin + ci) * plane..][..plane];
                                    s = s + dot_lanes(gp, xp);
                                }
                                gw[co * d.cin + ci] = gw[co * d.cin + ci] + s;
                            }
                            continue;
                        }
                        for cl in 0..d.cin_g {
                            let ci = og * d.cin_g + cl;
                            let gwk = &mut gw[(co * d.cin_g + cl) * ksq..][..ksq];
                            for ni in 0..d.n {
                                let gp = &g[(ni * d.cout + co) * plane..][..plane];
                                let xp = &xd[(ni * d.cin + ci) * plane..][..plane];
                                plane_weight_acc(gwk, gp, xp, d.h, d.w, d.k);
                            }
                        }
                    }
                });
            }
            if let Some(bid) = bn {
                acc.accumulate(bid, d.cout, |gb| {
                    for co in 0..d.cout {
                        let mut s = T::zero();
                        for ni in 0..d.n {
                            s = s + sum_lanes(&g[(ni * d.cout + co) * plane..][..plane]);
                        }
                        gb[co] = gb[co] + s;
                    }
                });
            }
        })
    }))
}

/// Blueprint-separable convolution: a bias-free pointwise (1x1) mix over
/// channels followed by a per-channel depthwise k x k convolution that
/// carries the bias.
pub fn bsconv<T: Scalar>(
    tape: &mut Tape<T>,
    x: &Tensor<T>,
    pw_weight: &Tensor<T>,
    dw_weight: &Tensor<T>,
    dw_bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let &[cout, _, ph, pw] = pw_weight.shape() else {
        return Err(shape_err!("bsconv", "pointwise weight must be rank 4, got {:?}", pw_weight.shape()));
    };
    if (ph, pw) != (1, 1) {
        return Err(shape_err!("bsconv", "pointwise stage must use a 1x1 kernel, got {ph}x{pw}"));
    }
    if dw_weight.shape().first() != Some(&cout) || dw_weight.shape().get(1) != Some(&1) {
        return Err(shape_err!(
            "bsconv",
            "depthwise weight must have shape [{cout}, 1, k, k], got {:?}",
            dw_weight.shape()
        ));
    }
    let mixed = conv2d(tape, x, pw_weight, None, 1)?;
    conv2d(tape, &mixed, dw_weight, dw_bias, cout)
}

/// Extracts every k x k neighborhood (stride 1, zero "same" padding) as a
/// column: `(N, C, H, W) -> (N, C*k*k, H*W)`, with the k*k taps of each
/// input channel laid out contiguously in row-major tap order.
pub fn unfold<T: Scalar>(tape: &mut Tape<T>, x: &Tensor<T>, k: usize) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4("unfold")?;
    if k.is_multiple_of(2) || k == 0 {
        return Err(Error::UnsupportedKernel { op: "unfold", k });
    }
    let pad = (k / 2) as isize;
    let plane = h * w;
    let ksq = k * k;
    let xd = x.data();

    let mut out = vec![T::zero(); n * c * ksq * plane];
    for ni in 0..n {
        for ci in 0..c {
            let xp = &xd[(ni * c + ci) * plane..][..plane];
            for dy in 0..k {
                let sy = dy as isize - pad;
                let (oy_lo, oy_hi) = tap_range(h, sy);
                for dx in 0..k {
                    let sx = dx as isize - pad;
                    let (ox_lo, ox_hi) = tap_range(w, sx);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    let ch = ci * ksq + dy * k + dx;
                    let op = &mut out[(ni * c * ksq + ch) * plane..][..plane];
                    for oy in oy_lo..oy_hi {
                        let ib = ((oy as isize + sy) as usize) * w + (ox_lo as isize + sx) as usize;
                        op[oy * w + ox_lo..oy * w + ox_hi]
                            .copy_from_slice(&xp[ib..ib + (ox_hi - ox_lo)]);
                    }
                }
            }
        }
    }
    let out = Tensor::from_op("unfold", vec![n, c * ksq, plane], out)?;

    let xn = x.node();
    Ok(tape.record(out, &[xn], || {
        let x_len = x.len();
        Box::new(move |g, acc| {
            let xid = xn.expect("recorded with traced input");
            acc.accumulate(xid, x_len, |gx| {
                for ni in 0..n {
                    for ci in 0..c {
                        let gxp = &mut gx[(ni * c + ci) * plane..][..plane];
                        for dy in 0..k {
                            let sy = dy as isize - pad;
                            let (oy_lo, oy_hi) = tap_range(h, sy);
                            for dx in 0..k {
                                let sx = dx as isize - pad;
                                let (ox_lo, ox_hi) = tap_range(w, sx);
                                if ox_lo >= ox_hi {
                                    continue;
                                }
                                let ch = ci * ksq + dy * k + dx;
                                let gp = &g[(ni * c * ksq + ch) * plane..][..plane];
                                for oy in oy_lo..oy_hi {
                                    let ib = ((oy as isize + sy) as usize) * w
                                        + (ox_lo as isize + sx) as usize;
                                    let dst = &mut gxp[ib..ib + (ox_hi - ox_lo)];
                                    let src = &gp[oy * w + ox_lo..oy * w + ox_hi];
                                    super::kern::add_into(dst, src);
                                }
                            }
                        }
                    }
                }
            });
        })
    }))
}
