//! Sub-pixel rearrangement between channel depth and spatial resolution.

use alloc::vec;

use crate::config_err;
use crate::error::Result;
use crate::scalar::Scalar;
use crate::shape_err;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// `(N, C*s^2, H, W) -> (N, C, H*s, W*s)`: each block of `s^2` channels
/// becomes the `s x s` sub-pixel grid of one output channel, with channel
/// `c*s^2 + dy*s + dx` landing at output offset `(dy, dx)` within each cell.
pub fn pixel_shuffle<T: Scalar>(tape: &mut Tape<T>, x: &Tensor<T>, s: usize) -> Result<Tensor<T>> {
    let (n, c_in, h, w) = x.dims4("pixel_shuffle")?;
    if s == 0 {
        return Err(config_err!("pixel_shuffle factor must be >= 1"));
    }
    let ssq = s * s;
    if c_in % ssq != 0 {
        return Err(shape_err!(
            "pixel_shuffle",
            "channel count {c_in} is not divisible by {s}^2"
        ));
    }
    let c_out = c_in / ssq;
    let (oh, ow) = (h * s, w * s);

    let xd = x.data();
    let mut out = vec![T::zero(); n * c_out * oh * ow];
    for ni in 0..n {
        for co in 0..c_out {
            for oy in 0..oh {
                let (iy, dy) = (oy / s, oy % s);
                let orow = &mut out[((ni * c_out + co) * oh + oy) * ow..][..ow];
                for (ox, o) in orow.iter_mut().enumerate() {
                    let (ix, dx) = (ox / s, ox % s);
                    let ci = co * ssq + dy * s + dx;
                    *o = xd[((ni * c_in + ci) * h + iy) * w + ix];
                }
            }
        }
    }
    let out = Tensor::from_op("pixel_shuffle", vec![n, c_out, oh, ow], out)?;

    let xn = x.node();
    Ok(tape.record(out, &[xn], || {
        let x_len = x.len();
        Box::new(move |g, acc| {
            let xid = xn.expect("recorded with traced input");
            acc.accumulate(xid, x_len, |gx| {
                // The map is a bijection, so each input slot receives
                // exactly one contribution.
                for ni in 0..n {
                    for co in 0..c_out {
                        for oy in 0..oh {
                            let (iy, dy) = (oy / s, oy % s);
                            let grow = &g[((ni * c_out + co) * oh + oy) * ow..][..ow];
                            for (ox, &gv) in grow.iter().enumerate() {
                                let (ix, dx) = (ox / s, ox % s);
                                let ci = co * ssq + dy * s + dx;
                                let idx = ((ni * c_in + ci) * h + iy) * w + ix;
                                gx[idx] = gx[idx] + gv;
                            }
                        }
                    }
                }
            });
        })
    }))
}

/// Inverse of [`pixel_shuffle`]: `(N, C, H*s, W*s) -> (N, C*s^2, H, W)`.
pub fn pixel_unshuffle<T: Scalar>(tape: &mut Tape<T>, x: &Tensor<T>, s: usize) -> Result<Tensor<T>> {
    let (n, c, ih, iw) = x.dims4("pixel_unshuffle")?;
    if s == 0 {
        return Err(config_err!("pixel_unshuffle factor must be >= 1"));
    }
    if ih % s != 0 || iw % s != 0 {
        return Err(shape_err!(
            "pixel_unshuffle",
            "spatial extent {ih}x{iw} is not divisible by {s}"
        ));
    }
    let ssq = s * s;
    let (oh, ow) = (ih / s, iw / s);
    let c_out = c * ssq;

    let xd = x.data();
    let mut out = vec![T::zero(); n * c_out * oh * ow];
    for ni in 0..n {
        for co in 0..c_out {
            let ci = co / ssq;
            let (dy, dx) = ((co % ssq) / s, (co % ssq) % s);
            for oy in 0..oh {
                let irow = &xd[((ni * c + ci) * ih + oy * s + dy) * iw..][..iw];
                let orow = &mut out[((ni * c_out + co) * oh + oy) * ow..][..ow];
                for (ox, o) in orow.iter_mut().enumerate() {
                    *o = irow[ox * s + dx];
                }
            }
        }
    }
    let out = Tensor::from_op("pixel_unshuffle", vec![n, c_out, oh, ow], out)?;

    let xn = x.node();
    Ok(tape.record(out, &[xn], || {
        let x_len = x.len();
        Box::new(move |g, acc| {
            let xid = xn.expect("recorded with traced input");
            acc.accumulate(xid, x_len, |gx| {
                for ni in 0..n {
                    for co in 0..c_out {
                        let ci = co / ssq;
                        let (dy, dx) = ((co % ssq) / s, (co % ssq) % s);
                        for oy in 0..oh {
                            let grow = &g[((ni * c_out + co) * oh + oy) * ow..][..ow];
                            let base = ((ni * c + ci) * ih + oy * s + dy) * iw;
                            for (ox, &gv) in grow.iter().enumerate() {
                                let idx = base + ox * s + dx;
                                gx[idx] = gx[idx] + gv;
                            }
                        }
                    }
                }
            });
        })
    }))
}
