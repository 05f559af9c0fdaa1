//! Batch normalization and per-sample channel statistics.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::{dot_lanes, sum_lanes, Scalar};
use crate::shape_err;
use crate::tape::Tape;
use crate::tensor::Tensor;

fn check_affine<T: Scalar>(
    op: &'static str,
    c: usize,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
) -> Result<()> {
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(shape_err!(
            op,
            "gamma/beta must have shape [{c}], got {:?} and {:?}",
            gamma.shape(),
            beta.shape()
        ));
    }
    Ok(())
}

/// Training-mode batch normalization over `(N, H, W)` per channel.
///
/// Normalizes with the biased (population) batch variance, then applies
/// the affine pair. Returns the batch mean and variance alongside the
/// output so the owning layer can fold them into its running estimates;
/// the op itself is pure. Fails with [`Error::DegenerateBatch`] when a
/// channel has fewer than two values.
pub fn batch_norm_train<T: Scalar>(
    tape: &mut Tape<T>,
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    let (n, c, h, w) = x.dims4("batch_norm")?;
    check_affine("batch_norm", c, gamma, beta)?;
    let m = n * h * w;
    if m < 2 {
        return Err(Error::DegenerateBatch { count: m });
    }
    let plane = h * w;
    let xd = x.data();
    let m_t = T::from_usize(m);

    // Per-channel batch statistics, accumulated plane by plane in batch
    // order so the result is independent of nothing and deterministic.
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for ci in 0..c {
        let mut s = T::zero();
        for ni in 0..n {
            s = s + sum_lanes(&xd[(ni * c + ci) * plane..][..plane]);
        }
        mean[ci] = s / m_t;
    }
    for ci in 0..c {
        let mu = mean[ci];
        let mut s = T::zero();
        for ni in 0..n {
            let xp = &xd[(ni * c + ci) * plane..][..plane];
            let mut lane = [T::zero(); 8];
            let mut chunks = xp.chunks_exact(8);
            for ch in &mut chunks {
                for l in 0..8 {
                    let d = ch[l] - mu;
                    lane[l] = lane[l] + d * d;
                }
            }
            for (l, &v) in chunks.remainder().iter().enumerate() {
                let d = v - mu;
                lane[l] = lane[l] + d * d;
            }
            let s01 = lane[0] + lane[1];
            let s23 = lane[2] + lane[3];
            let s45 = lane[4] + lane[5];
            let s67 = lane[6] + lane[7];
            s = s + ((s01 + s23) + (s45 + s67));
        }
        var[ci] = s / m_t;
    }

    let invstd: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let (gd, bd) = (gamma.data(), beta.data());
    let mut out = vec![T::zero(); x.len()];
    for ni in 0..n {
        for ci in 0..c {
            let scale = gd[ci] * invstd[ci];
            let shift = bd[ci] - mean[ci] * scale;
            let xp = &xd[(ni * c + ci) * plane..][..plane];
            let op = &mut out[(ni * c + ci) * plane..][..plane];
            for (o, &v) in op.iter_mut().zip(xp) {
                *o = v * scale + shift;
            }
        }
    }
    let out = Tensor::from_op("batch_norm", vec![n, c, h, w], out)?;

    let (xn, gn, bn) = (x.node(), gamma.node(), beta.node());
    let out = tape.record(out, &[xn, gn, bn], || {
        let x = x.clone();
        let gamma = gamma.clone();
        let mean = mean.clone();
        let invstd = invstd.clone();
        Box::new(move |g, acc| {
            let xd = x.data();
            let gd = gamma.data();
            // Per-channel reductions shared by all three gradients:
            // sum_g = sum of g, sum_gxh = sum of g * xhat.
            let mut sum_g = vec![T::zero(); c];
            let mut sum_gxh = vec![T::zero(); c];
            for ci in 0..c {
                let (mut a, mut b) = (T::zero(), T::zero());
                for ni in 0..n {
                    let gp = &g[(ni * c + ci) * plane..][..plane];
                    let xp = &xd[(ni * c + ci) * plane..][..plane];
                    a = a + sum_lanes(gp);
                    b = b + dot_lanes(gp, xp);
                }
                sum_g[ci] = a;
                // sum g*xhat = invstd * (sum g*x - mean * sum g)
                sum_gxh[ci] = invstd[ci] * (b - mean[ci] * a);
            }
            if let Some(xid) = xn {
                acc.accumulate(xid, x.len(), |gx| {
                    for ni in 0..n {
                        for ci in 0..c {
                            let k = gd[ci] * invstd[ci];
                            let mg = sum_g[ci] / m_t;
                            let mgx = sum_gxh[ci] / m_t;
                            let (mu, is) = (mean[ci], invstd[ci]);
                            let gp = &g[(ni * c + ci) * plane..][..plane];
                            let xp = &xd[(ni * c + ci) * plane..][..plane];
                            let dst = &mut gx[(ni * c + ci) * plane..][..plane];
                            for ((d, &gv), &xv) in dst.iter_mut().zip(gp).zip(xp) {
                                let xhat = (xv - mu) * is;
                                *d = *d + k * (gv - mg - xhat * mgx);
                            }
                        }
                    }
                });
            }
            if let Some(gid) = gn {
                acc.accumulate(gid, c, |gg| {
                    for ci in 0..c {
                        gg[ci] = gg[ci] + sum_gxh[ci];
                    }
                });
            }
            if let Some(bid) = bn {
                acc.accumulate(bid, c, |gb| {
                    for ci in 0..c {
                        gb[ci] = gb[ci] + sum_g[ci];
                    }
                });
            }
        })
    });
    Ok((out, mean, var))
}

/// Inference-mode batch normalization: a per-channel affine transform
/// using frozen running statistics.
pub fn batch_norm_eval<T: Scalar>(
    tape: &mut Tape<T>,
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &[T],
    running_var: &[T],
    eps: T,
) -> Result<Tensor<T>> {
    let (n, c, h, w) = x.dims4("batch_norm")?;
    check_affine("batch_norm", c, gamma, beta)?;
    if running_mean.len() != c || running_var.len() != c {
        return Err(shape_err!(
            "batch_norm",
            "running stats must have length {c}, got {} and {}",
            running_mean.len(),
            running_var.len()
        ));
    }
    let plane = h * w;
    let invstd: Vec<T> = running_var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let (xd, gd, bd) = (x.data(), gamma.data(), beta.data());

    let mut out = vec![T::zero(); x.len()];
    for ni in 0..n {
        for ci in 0..c {
            let scale = gd[ci] * invstd[ci];
            let shift = bd[ci] - running_mean[ci] * scale;
            let xp = &xd[(ni * c + ci) * plane..][..plane];
            let op = &mut out[(ni * c + ci) * plane..][..plane];
            for (o, &v) in op.iter_mut().zip(xp) {
                *o = v * scale + shift;
            }
        }
    }
    let out = Tensor::from_op("batch_norm", vec![n, c, h, w], out)?;

    let (xn, gn, bn) = (x.node(), gamma.node(), beta.node());
    Ok(tape.record(out, &[xn, gn, bn], || {
        let x = x.clone();
        let gamma = gamma.clone();
        let mean: Vec<T> = running_mean.to_vec();
        let invstd = invstd.clone();
        Box::new(move |g, acc| {
            let xd = x.data();
            let gd = gamma.data();
            if let Some(xid) = xn {
                acc.accumulate(xid, x.len(), |gx| {
                    for ni in 0..n {
                        for ci in 0..c {
                            let k = gd[ci] * invstd[ci];
                            let gp = &g[(ni * c + ci) * plane..][..plane];
                            let dst = &mut gx[(ni * c + ci) * plane..][..plane];
                            super::kern::axpy(dst, k, gp);
                        }
                    }
                });
            }
            if let Some(gid) = gn {
                acc.accumulate(gid, c, |gg| {
                    for ci in 0..c {
                        let mut s = T::zero();
                        for ni in 0..n {
                            let gp = &g[(ni * c + ci) * plane..][..plane];
                            let xp = &xd[(ni * c + ci) * plane..][..plane];
                            s = s + invstd[ci] * (dot_lanes(gp, xp) - mean[ci] * sum_lanes(gp));
                        }
                        gg[ci] = gg[ci] + s;
                    }
                });
            }
            if let Some(bid) = bn {
                acc.accumulate(bid, c, |gb| {
                    for ci in 0..c {
                        let mut s = T::zero();
                        for ni in 0..n {
                            s = s + sum_lanes(&g[(ni * c + ci) * plane..][..plane]);
                        }
                        gb[ci] = gb[ci] + s;
                    }
                });
            }
        })
    }))
}

/// Per-sample, per-channel spatial mean and population standard
/// deviation, both shaped `(N, C, 1, 1)` for broadcasting. The gradient
/// of the standard deviation at exactly zero spread is defined as zero.
pub fn channel_stats<T: Scalar>(
    tape: &mut Tape<T>,
    x: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, c, h, w) = x.dims4("channel_stats")?;
    let plane = h * w;
    let m_t = T::from_usize(plane);
    let xd = x.data();

    let mut mean = vec![T::zero(); n * c];
    let mut std = vec![T::zero(); n * c];
    for nc in 0..n * c {
        let xp = &xd[nc * plane..][..plane];
        let mu = sum_lanes(xp) / m_t;
        mean[nc] = mu;
        let mut lane = [T::zero(); 8];
        let mut chunks = xp.chunks_exact(8);
        for ch in &mut chunks {
            for l in 0..8 {
                let d = ch[l] - mu;
                lane[l] = lane[l] + d * d;
            }
        }
        for (l, &v) in chunks.remainder().iter().enumerate() {
            let d = v - mu;
            lane[l] = lane[l] + d * d;
        }
        let s01 = lane[0] + lane[1];
        let s23 = lane[2] + lane[3];
        let s45 = lane[4] + lane[5];
        let s67 = lane[6] + lane[7];
        std[nc] = (((s01 + s23) + (s45 + s67)) / m_t).sqrt();
    }

    let shape = vec![n, c, 1, 1];
    let mean_t = Tensor::from_op("channel_stats", shape.clone(), mean.clone())?;
    let std_t = Tensor::from_op("channel_stats", shape, std.clone())?;

    let xn = x.node();
    let mean_t = tape.record(mean_t, &[xn], || {
        let x_len = x.len();
        Box::new(move |g, acc| {
            let xid = xn.expect("recorded with traced input");
            acc.accumulate(xid, x_len, |gx| {
                for nc in 0..n * c {
                    let gv = g[nc] / m_t;
                    for d in gx[nc * plane..][..plane].iter_mut() {
                        *d = *d + gv;
                    }
                }
            });
        })
    });
    let std_t = tape.record(std_t, &[xn], || {
        let x = x.clone();
        let mean = mean.clone();
        let std = std.clone();
        Box::new(move |g, acc| {
            let xid = xn.expect("recorded with traced input");
            let xd = x.data();
            acc.accumulate(xid, x.len(), |gx| {
                for nc in 0..n * c {
                    if std[nc] <= T::zero() {
                        continue; // flat channel: treat d(std)/dx as zero
                    }
                    let k = g[nc] / (m_t * std[nc]);
                    let mu = mean[nc];
                    let xp = &xd[nc * plane..][..plane];
                    let dst = &mut gx[nc * plane..][..plane];
                    for (d, &v) in dst.iter_mut().zip(xp) {
                        *d = *d + k * (v - mu);
                    }
                }
            });
        })
    });
    Ok((mean_t, std_t))
}
