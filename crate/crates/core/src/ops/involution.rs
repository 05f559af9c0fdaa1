//! Involution: spatially-varying kernels generated from the input itself.
//!
//! `involution_apply` consumes a per-position kernel stack of shape
//! `(N, k*k*G, H, W)`: position `(h, w)` in group `g` is filtered by the
//! k x k window whose tap `(dy, dx)` lives in channel `g*k*k + dy*k + dx`.
//! All channels of a group share that window. `involution` additionally
//! generates the kernel stack with a two-layer bottleneck
//! (1x1 reduce -> leaky ReLU -> 1x1 span) before applying it.

use alloc::vec;

use super::conv::conv2d;
use super::act::leaky_relu;
use super::kern::mul_add_into;
use crate::config_err;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::shape_err;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// See `conv.rs`: in-bounds output range for kernel offset `s`.
fn tap_range(extent: usize, s: isize) -> (usize, usize) {
    let lo = (-s).max(0) as usize;
    let hi = (extent as isize - s).clamp(0, extent as isize) as usize;
    (lo, hi)
}

/// Applies position-dependent kernels: for each sample, group and tap,
/// `out[c, oy, ox] += kern[g*k*k + tap, oy, ox] * x[c, oy+dy-pad, ox+dx-pad]`.
pub fn involution_apply<T: Scalar>(
    tape: &mut Tape<T>,
    x: &Tensor<T>,
    kernels: &Tensor<T>,
    k: usize,
    groups: usize,
) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4("involution_apply")?;
    let (kn, kc, kh, kw) = kernels.dims4("involution_apply")?;
    if k.is_multiple_of(2) || k == 0 {
        return Err(Error::UnsupportedKernel { op: "involution_apply", k });
    }
    if groups == 0 || c % groups != 0 {
        return Err(config_err!(
            "involution groups ({groups}) must divide the channel count ({c})"
        ));
    }
    if (kn, kh, kw) != (n, h, w) || kc != k * k * groups {
        return Err(shape_err!(
            "involution_apply",
            "kernel stack must have shape [{n}, {}, {h}, {w}], got {:?}",
            k * k * groups,
            kernels.shape()
        ));
    }

    let plane = h * w;
    let ksq = k * k;
    let ch_per_g = c / groups;
    let pad = (k / 2) as isize;
    let (xd, kd) = (x.data(), kernels.data());

    let mut out = vec![T::zero(); n * c * plane];
    for ni in 0..n {
        for ci in 0..c {
            let g = ci / ch_per_g;
            let xp = &xd[(ni * c + ci) * plane..][..plane];
            let op = &mut out[(ni * c + ci) * plane..][..plane];
            for dy in 0..k {
                let sy = dy as isize - pad;
                let (oy_lo, oy_hi) = tap_range(h, sy);
                for dx in 0..k {
                    let sx = dx as isize - pad;
                    let (ox_lo, ox_hi) = tap_range(w, sx);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    let kp = &kd[(ni * kc + g * ksq + dy * k + dx) * plane..][..plane];
                    for oy in oy_lo..oy_hi {
                        let ib = ((oy as isize + sy) as usize) * w + (ox_lo as isize + sx) as usize;
                        let row = oy * w + ox_lo..oy * w + ox_hi;
                        let len = ox_hi - ox_lo;
                        mul_add_into(&mut op[row.clone()], &kp[row], &xp[ib..ib + len]);
                    }
                }
            }
        }
    }
    let out = Tensor::from_op("involution_apply", vec![n, c, h, w], out)?;

    let (xn, kn_node) = (x.node(), kernels.node());
    Ok(tape.record(out, &[xn, kn_node], || {
        let x = x.clone();
        let kernels = kernels.clone();
        Box::new(move |g_out, acc| {
            let (xd, kd) = (x.data(), kernels.data());
            if let Some(xid) = xn {
                acc.accumulate(xid, x.len(), |gx| {
                    for ni in 0..n {
                        for ci in 0..c {
                            let gr = ci / ch_per_g;
                            let gxp = &mut gx[(ni * c + ci) * plane..][..plane];
                            let gp = &g_out[(ni * c + ci) * plane..][..plane];
                            for dy in 0..k {
                                let sy = dy as isize - pad;
                                let (oy_lo, oy_hi) = tap_range(h, sy);
                                for dx in 0..k {
                                    let sx = dx as isize - pad;
                                    let (ox_lo, ox_hi) = tap_range(w, sx);
                                    if ox_lo >= ox_hi {
                                        continue;
                                    }
                                    let kp = &kd[(ni * kc + gr * ksq + dy * k + dx) * plane..][..plane];
                                    for oy in oy_lo..oy_hi {
                                        let ib = ((oy as isize + sy) as usize) * w
                                            + (ox_lo as isize + sx) as usize;
                                        let row = oy * w + ox_lo..oy * w + ox_hi;
                                        let len = ox_hi - ox_lo;
                                        mul_add_into(&mut gxp[ib..ib + len], &kp[row.clone()], &gp[row]);
                                    }
                                }
                            }
                        }
                    }
                });
            }
            if let Some(kid) = kn_node {
                acc.accumulate(kid, kernels.len(), |gk| {
                    for ni in 0..n {
                        for gr in 0..groups {
                            for dy in 0..k {
                                let sy = dy as isize - pad;
                                let (oy_lo, oy_hi) = tap_range(h, sy);
                                for dx in 0..k {
                                    let sx = dx as isize - pad;
                                    let (ox_lo, ox_hi) = tap_range(w, sx);
                                    if ox_lo >= ox_hi {
                                        continue;
                                    }
                                    let gkp = &mut gk
                                        [(ni * kc + gr * ksq + dy * k + dx) * plane..][..plane];
                                    for cl in 0..ch_per_g {
                                        let ci = gr * ch_per_g + cl;
                                        let gp = &g_out[(ni * c + ci) * plane..][..plane];
                                        let xp = &xd[(ni * c + ci) * plane..][..plane];
                                        for oy in oy_lo..oy_hi {
                                            let ib = ((oy as isize + sy) as usize) * w
                                                + (ox_lo as isize + sx) as usize;
                                            let row = oy * w + ox_lo..oy * w + ox_hi;
                                            let len = ox_hi - ox_lo;
                                            mul_add_into(
                                                &mut gkp[row.clone()],
                                                &gp[row],
                                                &xp[ib..ib + len],
                                            );
                                        }
                                    }
                                }
                            }
                        }
                    }
                });
            }
        })
    }))
}

/// Full involution: generates the kernel stack from the input with a
/// bottleneck (`reduce` 1x1 -> leaky ReLU -> `span` 1x1, both biased) and
/// applies it. `span_w` must produce exactly `k*k*groups` channels.
#[allow(clippy::too_many_arguments)]
pub fn involution<T: Scalar>(
    tape: &mut Tape<T>,
    x: &Tensor<T>,
    reduce_w: &Tensor<T>,
    reduce_b: &Tensor<T>,
    span_w: &Tensor<T>,
    span_b: &Tensor<T>,
    alpha: T,
    k: usize,
    groups: usize,
) -> Result<Tensor<T>> {
    let squeezed = conv2d(tape, x, reduce_w, Some(reduce_b), 1)?;
    let squeezed = leaky_relu(tape, &squeezed, alpha)?;
    let kernels = conv2d(tape, &squeezed, span_w, Some(span_b), 1)?;
    involution_apply(tape, x, &kernels, k, groups)
}
