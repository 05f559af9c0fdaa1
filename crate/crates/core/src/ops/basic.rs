//! Elementwise arithmetic, reductions, and shape manipulation.

use alloc::vec;
use alloc::vec::Vec;

use super::kern::{add_into, axpy};
use crate::error::Result;
use crate::scalar::{sum_lanes, Scalar};
use crate::shape_err;
use crate::tape::Tape;
use crate::tensor::{strides_of, Tensor};

/// Binary elementwise operation selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElemOp {
    Add,
    Sub,
    Mul,
}

impl ElemOp {
    fn name(self) -> &'static str {
        match self {
            ElemOp::Add => "add",
            ElemOp::Sub => "sub",
            ElemOp::Mul => "mul",
        }
    }
}

/// Checks that `b` broadcasts into `a`: identical rank, and every axis of
/// `b` either matches `a` or is 1. The output always takes `a`'s shape.
fn check_broadcast(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    let ok = a.len() == b.len()
        && a.iter().zip(b).all(|(&da, &db)| db == da || db == 1);
    if ok {
        Ok(())
    } else {
        Err(shape_err!(op, "cannot broadcast {b:?} into {a:?}"))
    }
}

/// Calls `f(out_linear, b_linear)` for every output element, where
/// `b_linear` walks `b`'s storage with zero stride along broadcast axes.
/// Plain odometer loop; the visit order is fixed, so reductions built on
/// this are deterministic.
fn for_each_broadcast(out_shape: &[usize], b_shape: &[usize], mut f: impl FnMut(usize, usize)) {
    let rank = out_shape.len();
    let full = strides_of(b_shape);
    let bstride: Vec<usize> =
        (0..rank).map(|d| if b_shape[d] == 1 { 0 } else { full[d] }).collect();
    let numel: usize = out_shape.iter().product();
    let mut idx = vec![0usize; rank];
    let mut bi = 0usize;
    for i in 0..numel {
        f(i, bi);
        for d in (0..rank).rev() {
            idx[d] += 1;
            bi += bstride[d];
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
            bi -= bstride[d] * out_shape[d];
        }
    }
}

/// Elementwise `a (op) b` with `b` broadcastable into `a`.
pub fn elementwise<T: Scalar>(
    tape: &mut Tape<T>,
    a: &Tensor<T>,
    b: &Tensor<T>,
    op: ElemOp,
) -> Result<Tensor<T>> {
    let name = op.name();
    check_broadcast(name, a.shape(), b.shape())?;
    let same_shape = a.shape() == b.shape();

    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![T::zero(); a.len()];
    if same_shape {
        for ((o, &x), &y) in out.iter_mut().zip(ad).zip(bd) {
            *o = match op {
                ElemOp::Add => x + y,
                ElemOp::Sub => x - y,
                ElemOp::Mul => x * y,
            };
        }
    } else {
        for_each_broadcast(a.shape(), b.shape(), |i, bi| {
            out[i] = match op {
                ElemOp::Add => ad[i] + bd[bi],
                ElemOp::Sub => ad[i] - bd[bi],
                ElemOp::Mul => ad[i] * bd[bi],
            };
        });
    }
    let out = Tensor::from_op(name, a.shape().to_vec(), out)?;

    let (an, bn) = (a.node(), b.node());
    Ok(tape.record(out, &[an, bn], || {
        let (a, b) = (a.clone(), b.clone());
        Box::new(move |g, acc| {
            if let Some(aid) = an {
                acc.accumulate(aid, a.len(), |ga| match op {
                    ElemOp::Add | ElemOp::Sub => add_into(ga, g),
                    ElemOp::Mul => {
                        if a.shape() == b.shape() {
                            let bd = b.data();
                            for ((d, &gi), &y) in ga.iter_mut().zip(g).zip(bd) {
                                *d = *d + gi * y;
                            }
                        } else {
                            let bd = b.data();
                            for_each_broadcast(a.shape(), b.shape(), |i, bi| {
                                ga[i] = ga[i] + g[i] * bd[bi];
                            });
                        }
                    }
                });
            }
            if let Some(bid) = bn {
                acc.accumulate(bid, b.len(), |gb| {
                    let ad = a.data();
                    for_each_broadcast(a.shape(), b.shape(), |i, bi| {
                        gb[bi] = gb[bi]
                            + match op {
                                ElemOp::Add => g[i],
                                ElemOp::Sub => T::zero() - g[i],
                                ElemOp::Mul => g[i] * ad[i],
                            };
                    });
                });
            }
        })
    }))
}

pub fn add<T: Scalar>(tape: &mut Tape<T>, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    elementwise(tape, a, b, ElemOp::Add)
}

pub fn sub<T: Scalar>(tape: &mut Tape<T>, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    elementwise(tape, a, b, ElemOp::Sub)
}

pub fn mul<T: Scalar>(tape: &mut Tape<T>, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    elementwise(tape, a, b, ElemOp::Mul)
}

/// `x + c` for a scalar constant.
pub fn add_scalar<T: Scalar>(tape: &mut Tape<T>, x: &Tensor<T>, c: T) -> Result<Tensor<T>> {
    let out: Vec<T> = x.data().iter().map(|&v| v + c).collect();
    let out = Tensor::from_op("add_scalar", x.shape().to_vec(), out)?;
    let xn = x.node();
    let len = x.len();
    Ok(tape.record(out, &[xn], || {
        Box::new(move |g, acc| {
            let xid = xn.expect("recorded with traced input");
            acc.accumulate(xid, len, |gx| add_into(gx, g));
        })
    }))
}

/// `c * x` for a scalar constant.
pub fn mul_scalar<T: Scalar>(tape: &mut Tape<T>, x: &Tensor<T>, c: T) -> Result<Tensor<T>> {
    let out: Vec<T> = x.data().iter().map(|&v| v * c).collect();
    let out = Tensor::from_op("mul_scalar", x.shape().to_vec(), out)?;
    let xn = x.node();
    let len = x.len();
    Ok(tape.record(out, &[xn], || {
        Box::new(move |g, acc| {
            let xid = xn.expect("recorded with traced input");
            acc.accumulate(xid, len, |gx| axpy(gx, c, g));
        })
    }))
}

/// Sum of all elements; the result has shape `[1]`.
pub fn sum<T: Scalar>(tape: &mut Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let s = sum_lanes(x.data());
    let out = Tensor::from_op("sum", vec![1], vec![s])?;
    let xn = x.node();
    let len = x.len();
    Ok(tape.record(out, &[xn], || {
        Box::new(move |g, acc| {
            let xid = xn.expect("recorded with traced input");
            let g0 = g[0];
            acc.accumulate(xid, len, |gx| {
                for d in gx.iter_mut() {
                    *d = *d + g0;
                }
            });
        })
    }))
}

/// Arithmetic mean of all elements; the result has shape `[1]`.
pub fn mean<T: Scalar>(tape: &mut Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let n = T::from_usize(x.len());
    let s = sum_lanes(x.data()) / n;
    let out = Tensor::from_op("mean", vec![1], vec![s])?;
    let xn = x.node();
    let len = x.len();
    Ok(tape.record(out, &[xn], || {
        Box::new(move |g, acc| {
            let xid = xn.expect("recorded with traced input");
            let g0 = g[0] / n;
            acc.accumulate(xid, len, |gx| {
                for d in gx.iter_mut() {
                    *d = *d + g0;
                }
            });
        })
    }))
}

/// Clamps every element into `[lo, hi]`. This is an inference-time
/// finishing step, not a traced operation: the result is detached.
// The negated comparison rejects NaN bounds, which `lo > hi` would let
// through.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn clamp<T: Scalar>(x: &Tensor<T>, lo: T, hi: T) -> Result<Tensor<T>> {
    if !(lo <= hi) {
        return Err(crate::config_err!("clamp bounds must satisfy lo <= hi"));
    }
    let out: Vec<T> = x.data().iter().map(|&v| v.max(lo).min(hi)).collect();
    Tensor::from_op("clamp", x.shape().to_vec(), out)
}

/// Reinterprets `x` with a new shape of equal element count. Storage is
/// shared; no data moves.
pub fn reshape<T: Scalar>(tape: &mut Tape<T>, x: &Tensor<T>, shape: &[usize]) -> Result<Tensor<T>> {
    let numel: usize = shape.iter().product();
    if shape.is_empty() || shape.contains(&0) || numel != x.len() {
        return Err(shape_err!(
            "reshape",
            "cannot view {} elements as {shape:?}",
            x.len()
        ));
    }
    let out = x.share_with_shape(shape.to_vec());
    let xn = x.node();
    let len = x.len();
    Ok(tape.record(out, &[xn], || {
        Box::new(move |g, acc| {
            // Row-major flat data is unchanged by reshape, so the
            // gradient passes through untouched.
            let xid = xn.expect("recorded with traced input");
            acc.accumulate(xid, len, |gx| add_into(gx, g));
        })
    }))
}

/// Physically reorders axes: `out[i0, ..] = x[i_perm]` with
/// `out.shape[d] = x.shape[order[d]]`.
pub fn permute<T: Scalar>(tape: &mut Tape<T>, x: &Tensor<T>, order: &[usize]) -> Result<Tensor<T>> {
    let rank = x.rank();
    let mut seen = vec![false; rank];
    if order.len() != rank || order.iter().any(|&d| d >= rank || core::mem::replace(&mut seen[d], true)) {
        return Err(shape_err!(
            "permute",
            "order {order:?} is not a permutation of 0..{rank}"
        ));
    }
    let (out_shape, out) = permute_raw(x.data(), x.shape(), order);
    let out = Tensor::from_op("permute", out_shape, out)?;
    let xn = x.node();
    Ok(tape.record(out, &[xn], || {
        let mut inverse = vec![0usize; rank];
        for (d, &o) in order.iter().enumerate() {
            inverse[o] = d;
        }
        let x_len = x.len();
        let g_shape = out_shape_of(x.shape(), order);
        Box::new(move |g, acc| {
            let xid = xn.expect("recorded with traced input");
            let (_, gx_perm) = permute_raw(g, &g_shape, &inverse);
            acc.accumulate(xid, x_len, |gx| add_into(gx, &gx_perm));
        })
    }))
}

fn out_shape_of(shape: &[usize], order: &[usize]) -> Vec<usize> {
    order.iter().map(|&d| shape[d]).collect()
}

/// Raw axis permutation on a flat buffer. Returns the permuted shape and
/// data; visits outputs in row-major order, so it is deterministic.
fn permute_raw<T: Scalar>(data: &[T], shape: &[usize], order: &[usize]) -> (Vec<usize>, Vec<T>) {
    let rank = shape.len();
    let out_shape = out_shape_of(shape, order);
    let src_strides = strides_of(shape);
    let step: Vec<usize> = order.iter().map(|&d| src_strides[d]).collect();
    let mut out = vec![T::zero(); data.len()];
    let mut idx = vec![0usize; rank];
    let mut si = 0usize;
    for o in out.iter_mut() {
        *o = data[si];
        for d in (0..rank).rev() {
            idx[d] += 1;
            si += step[d];
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
            si -= step[d] * out_shape[d];
        }
    }
    (out_shape, out)
}

/// Concatenates NCHW tensors along the channel axis.
pub fn concat_channels<T: Scalar>(tape: &mut Tape<T>, parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    if parts.is_empty() {
        return Err(crate::config_err!("concat_channels needs at least one input"));
    }
    let (n, _, h, w) = parts[0].dims4("concat_channels")?;
    let mut c_total = 0usize;
    for p in parts {
        let (pn, pc, ph, pw) = p.dims4("concat_channels")?;
        if (pn, ph, pw) != (n, h, w) {
            return Err(shape_err!(
                "concat_channels",
                "parts disagree outside the channel axis: {:?} vs {:?}",
                parts[0].shape(),
                p.shape()
            ));
        }
        c_total += pc;
    }

    let plane = h * w;
    let mut out = vec![T::zero(); n * c_total * plane];
    let out_sample = c_total * plane;
    for ni in 0..n {
        let mut offset = 0usize;
        for p in parts {
            let pc = p.shape()[1];
            let block = pc * plane;
            let src = &p.data()[ni * block..(ni + 1) * block];
            out[ni * out_sample + offset..ni * out_sample + offset + block].copy_from_slice(src);
            offset += block;
        }
    }
    let out = Tensor::from_op("concat_channels", vec![n, c_total, h, w], out)?;

    let nodes: Vec<_> = parts.iter().map(|p| p.node()).collect();
    Ok(tape.record(out, &nodes, || {
        let meta: Vec<(Option<crate::tape::NodeId>, usize)> =
            parts.iter().map(|p| (p.node(), p.shape()[1])).collect();
        Box::new(move |g, acc| {
            for ni in 0..n {
                let mut offset = 0usize;
                for &(node, pc) in &meta {
                    let block = pc * plane;
                    if let Some(id) = node {
                        let src = &g[ni * out_sample + offset..ni * out_sample + offset + block];
                        acc.accumulate(id, n * block, |gp| {
                            add_into(&mut gp[ni * block..(ni + 1) * block], src);
                        });
                    }
                    offset += block;
                }
            }
        })
    }))
}
