//! Finite-difference certification of the reverse-mode gradients.
//!
//! [`grad_check`] compares the tape's analytic gradient of a scalar-valued
//! function against central differences, coordinate by coordinate, in
//! `f64`. [`registered_checks`] enumerates a fixed suite covering every
//! differentiable operator and the composite blocks; the CLI and the test
//! suite both drive that list.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use crate::arch;
use crate::config_err;
use crate::error::Result;
use crate::ops;
use crate::scalar::Scalar;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Maximum relative error between analytic and numeric gradients of `f`
/// at `x0`.
///
/// `f` must return a scalar (one-element) tensor. For every coordinate
/// `i` the numeric reference is `(f(x0 + eps*e_i) - f(x0 - eps*e_i)) /
/// (2*eps)` and the reported figure is
/// `max_i |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
///
/// `f` may be impure in hidden state (e.g. running statistics) but its
/// return value must depend only on `x0`; it is re-evaluated many times.
pub fn grad_check<F>(mut f: F, x0: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: FnMut(&mut Tape<f64>, &Tensor<f64>) -> Result<Tensor<f64>>,
{
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(config_err!("grad_check eps must lie in (0, 1e-2], got {eps}"));
    }

    // Analytic pass on a recording tape.
    let mut tape = Tape::new();
    let xw = tape.watch(x0);
    let loss = f(&mut tape, &xw)?;
    let _ = loss.scalar_value()?; // enforce scalar output
    let grads = tape.backward(&loss)?;
    let analytic: Vec<f64> = match grads.wrt(&xw) {
        Some(g) => g.to_vec(),
        None => vec![0.0; x0.len()],
    };
    drop(tape);

    // Numeric pass: one pair of untraced evaluations per coordinate.
    let shape = x0.shape().to_vec();
    let mut probe = x0.to_vec();
    let mut worst = 0.0f64;
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let fp = eval_scalar(&mut f, &shape, &probe)?;
        probe[i] = orig - eps;
        let fm = eval_scalar(&mut f, &shape, &probe)?;
        probe[i] = orig;
        let numeric = (fp - fm) / (2.0 * eps);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        let rel = (analytic[i] - numeric).abs() / denom;
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}

fn eval_scalar<F>(f: &mut F, shape: &[usize], data: &[f64]) -> Result<f64>
where
    F: FnMut(&mut Tape<f64>, &Tensor<f64>) -> Result<Tensor<f64>>,
{
    let mut tape = Tape::disabled();
    let x = Tensor::from_vec(shape.to_vec(), data.to_vec())?;
    f(&mut tape, &x)?.scalar_value()
}

/// `scale(x) = 2x` with a backward that deliberately drops the factor of
/// two. Exists so tests can demonstrate that [`grad_check`] catches a
/// miswired gradient (the relative error comes out as exactly 0.5).
#[doc(hidden)]
pub fn miswired_double<T: Scalar>(tape: &mut Tape<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let two = T::from_f64(2.0);
    let data: Vec<T> = x.data().iter().map(|&v| two * v).collect();
    let out = Tensor::from_op("miswired_double", x.shape().to_vec(), data)?;
    let xn = x.node();
    let len = x.len();
    Ok(tape.record(out, &[xn], || {
        Box::new(move |g, acc| {
            let xid = xn.expect("recorded with traced input");
            acc.accumulate(xid, len, |gx| {
                for (d, &gv) in gx.iter_mut().zip(g) {
                    *d = *d + gv; // wrong on purpose: should be 2*gv
                }
            });
        })
    }))
}

// ---------------------------------------------------------------------
// Registered suite
// ---------------------------------------------------------------------

/// Signature of one suite entry: `run(seed, eps)` yields a list of
/// `(gradient-target, max_rel_err)` pairs.
pub type CheckFn = fn(u64, f64) -> Result<Vec<(&'static str, f64)>>;

/// One entry of the certification suite.
pub struct RegisteredCheck {
    pub name: &'static str,
    pub run: CheckFn,
}

/// The full suite in a stable order.
pub fn registered_checks() -> Vec<RegisteredCheck> {
    vec![
        RegisteredCheck { name: "elementwise", run: check_elementwise },
        RegisteredCheck { name: "activations", run: check_activations },
        RegisteredCheck { name: "reductions", run: check_reductions },
        RegisteredCheck { name: "reshape_permute", run: check_reshape_permute },
        RegisteredCheck { name: "concat", run: check_concat },
        RegisteredCheck { name: "unfold", run: check_unfold },
        RegisteredCheck { name: "conv2d", run: check_conv2d },
        RegisteredCheck { name: "bsconv", run: check_bsconv },
        RegisteredCheck { name: "involution_apply", run: check_involution_apply },
        RegisteredCheck { name: "involution", run: check_involution },
        RegisteredCheck { name: "batch_norm", run: check_batch_norm },
        RegisteredCheck { name: "channel_stats", run: check_channel_stats },
        RegisteredCheck { name: "pixel_shuffle", run: check_pixel_shuffle },
        RegisteredCheck { name: "mae_loss", run: check_mae_loss },
        RegisteredCheck { name: "srb", run: check_srb },
        RegisteredCheck { name: "chfab", run: check_chfab },
        RegisteredCheck { name: "ibmdb", run: check_ibmdb },
        RegisteredCheck { name: "ibmdn", run: check_ibmdn },
    ]
}

/// Default probe shape for single operators.
const PROBE: [usize; 4] = [2, 4, 5, 5];

/// Mixes a label into a seed so each tensor of a case gets its own
/// deterministic stream.
pub(crate) fn sub_seed(seed: u64, label: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(label)
}

fn probe_input(seed: u64, label: u64) -> Result<Tensor<f64>> {
    Tensor::uniform(PROBE.to_vec(), -1.0, 1.0, sub_seed(seed, label))
}

/// Shifts every value away from zero by `margin` (sign of 0 counts as
/// positive), so kinked functions are probed at differentiable points.
fn away_from_zero(t: &Tensor<f64>, margin: f64) -> Tensor<f64> {
    let data: Vec<f64> = t
        .data()
        .iter()
        .map(|&v| if v >= 0.0 { v + margin } else { v - margin })
        .collect();
    Tensor::from_vec(t.shape().to_vec(), data).expect("same shape")
}

/// Reduces `y` to a scalar through a fixed random projection, so
/// element-routing mistakes in a backward cannot cancel out.
pub(crate) fn project(tape: &mut Tape<f64>, y: &Tensor<f64>, seed: u64) -> Result<Tensor<f64>> {
    let r = Tensor::uniform(y.shape().to_vec(), 0.25, 1.75, sub_seed(seed, 0xA11))?;
    let weighted = ops::mul(tape, y, &r)?;
    ops::sum(tape, &weighted)
}

fn check_elementwise(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    let a = probe_input(seed, 1)?;
    let b = probe_input(seed, 2)?;
    let b_chan = Tensor::uniform(vec![2, 4, 1, 1], -1.0, 1.0, sub_seed(seed, 3))?;
    let mut out = Vec::new();
    for op in [ops::ElemOp::Add, ops::ElemOp::Sub, ops::ElemOp::Mul] {
        let wrt_a = grad_check(
            |tape, x| {
                let y = ops::elementwise(tape, x, &b, op)?;
                project(tape, &y, seed)
            },
            &a,
            eps,
        )?;
        let wrt_b = grad_check(
            |tape, x| {
                let y = ops::elementwise(tape, &a, x, op)?;
                project(tape, &y, seed)
            },
            &b,
            eps,
        )?;
        // Broadcast along (N, C, 1, 1).
        let wrt_bcast = grad_check(
            |tape, x| {
                let y = ops::elementwise(tape, &a, x, op)?;
                project(tape, &y, seed)
            },
            &b_chan,
            eps,
        )?;
        let name = match op {
            ops::ElemOp::Add => "add",
            ops::ElemOp::Sub => "sub",
            ops::ElemOp::Mul => "mul",
        };
        out.push((name, wrt_a.max(wrt_b).max(wrt_bcast)));
    }
    let a2 = probe_input(seed, 4)?;
    let scalar = grad_check(
        |tape, x| {
            let y = ops::add_scalar(tape, x, 0.7)?;
            let y = ops::mul_scalar(tape, &y, -1.3)?;
            project(tape, &y, seed)
        },
        &a2,
        eps,
    )?;
    out.push(("scalar", scalar));
    Ok(out)
}

fn check_activations(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    // Keep probes clear of the kink at 0 by slightly more than eps.
    let x = away_from_zero(&probe_input(seed, 1)?, 0.05);
    let leaky = grad_check(
        |tape, v| {
            let y = ops::leaky_relu(tape, v, 0.05)?;
            project(tape, &y, seed)
        },
        &x,
        eps,
    )?;
    let relu = grad_check(
        |tape, v| {
            let y = ops::relu(tape, v)?;
            project(tape, &y, seed)
        },
        &x,
        eps,
    )?;
    let xs = probe_input(seed, 2)?;
    let sigmoid = grad_check(
        |tape, v| {
            let y = ops::sigmoid(tape, v)?;
            project(tape, &y, seed)
        },
        &xs,
        eps,
    )?;
    Ok(vec![("leaky_relu", leaky), ("relu", relu), ("sigmoid", sigmoid)])
}

fn check_reductions(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    let x = probe_input(seed, 1)?;
    let s = grad_check(ops::sum, &x, eps)?;
    let m = grad_check(ops::mean, &x, eps)?;
    Ok(vec![("sum", s), ("mean", m)])
}

fn check_reshape_permute(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    let x = probe_input(seed, 1)?;
    let r = grad_check(
        |tape, v| {
            let y = ops::reshape(tape, v, &[2, 2, 2, 25])?;
            project(tape, &y, seed)
        },
        &x,
        eps,
    )?;
    let p = grad_check(
        |tape, v| {
            let y = ops::permute(tape, v, &[2, 0, 3, 1])?;
            project(tape, &y, seed)
        },
        &x,
        eps,
    )?;
    Ok(vec![("reshape", r), ("permute", p)])
}

fn check_concat(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    let a = Tensor::uniform(vec![2, 2, 5, 5], -1.0, 1.0, sub_seed(seed, 1))?;
    let b = Tensor::uniform(vec![2, 3, 5, 5], -1.0, 1.0, sub_seed(seed, 2))?;
    let c = Tensor::uniform(vec![2, 4, 5, 5], -1.0, 1.0, sub_seed(seed, 3))?;
    let wrt_a = grad_check(
        |tape, x| {
            let y = ops::concat_channels(tape, &[x, &b, &c])?;
            project(tape, &y, seed)
        },
        &a,
        eps,
    )?;
    let wrt_b = grad_check(
        |tape, x| {
            let y = ops::concat_channels(tape, &[&a, x, &c])?;
            project(tape, &y, seed)
        },
        &b,
        eps,
    )?;
    Ok(vec![("part0", wrt_a), ("part1", wrt_b)])
}

fn check_unfold(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    let x = probe_input(seed, 1)?;
    let e = grad_check(
        |tape, v| {
            let y = ops::unfold(tape, v, 3)?;
            project(tape, &y, seed)
        },
        &x,
        eps,
    )?;
    Ok(vec![("input", e)])
}

fn check_conv2d(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    let x = probe_input(seed, 1)?;
    let w = Tensor::uniform(vec![3, 4, 3, 3], -0.5, 0.5, sub_seed(seed, 2))?;
    let b = Tensor::uniform(vec![3], -0.5, 0.5, sub_seed(seed, 3))?;
    let wrt_x = grad_check(
        |tape, v| {
            let y = ops::conv2d(tape, v, &w, Some(&b), 1)?;
            project(tape, &y, seed)
        },
        &x,
        eps,
    )?;
    let wrt_w = grad_check(
        |tape, v| {
            let y = ops::conv2d(tape, &x, v, Some(&b), 1)?;
            project(tape, &y, seed)
        },
        &w,
        eps,
    )?;
    let wrt_b = grad_check(
        |tape, v| {
            let y = ops::conv2d(tape, &x, &w, Some(v), 1)?;
            project(tape, &y, seed)
        },
        &b,
        eps,
    )?;
    // Grouped + pointwise variants, gradient wrt input and weight.
    let wg = Tensor::uniform(vec![4, 2, 3, 3], -0.5, 0.5, sub_seed(seed, 4))?;
    let grouped = grad_check(
        |tape, v| {
            let y = ops::conv2d(tape, v, &wg, None, 2)?;
            project(tape, &y, seed)
        },
        &x,
        eps,
    )?
    .max(grad_check(
        |tape, v| {
            let y = ops::conv2d(tape, &x, v, None, 2)?;
            project(tape, &y, seed)
        },
        &wg,
        eps,
    )?);
    let w1 = Tensor::uniform(vec![3, 4, 1, 1], -0.5, 0.5, sub_seed(seed, 5))?;
    let pointwise = grad_check(
        |tape, v| {
            let y = ops::conv2d(tape, v, &w1, None, 1)?;
            project(tape, &y, seed)
        },
        &x,
        eps,
    )?;
    Ok(vec![
        ("input", wrt_x),
        ("weight", wrt_w),
        ("bias", wrt_b),
        ("grouped", grouped),
        ("pointwise", pointwise),
    ])
}

fn check_bsconv(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    let x = probe_input(seed, 1)?;
    let pw = Tensor::uniform(vec![6, 4, 1, 1], -0.5, 0.5, sub_seed(seed, 2))?;
    let dw = Tensor::uniform(vec![6, 1, 3, 3], -0.5, 0.5, sub_seed(seed, 3))?;
    let b = Tensor::uniform(vec![6], -0.5, 0.5, sub_seed(seed, 4))?;
    let wrt_x = grad_check(
        |tape, v| {
            let y = ops::bsconv(tape, v, &pw, &dw, Some(&b))?;
            project(tape, &y, seed)
        },
        &x,
        eps,
    )?;
    let wrt_pw = grad_check(
        |tape, v| {
            let y = ops::bsconv(tape, &x, v, &dw, Some(&b))?;
            project(tape, &y, seed)
        },
        &pw,
        eps,
    )?;
    let wrt_dw = grad_check(
        |tape, v| {
            let y = ops::bsconv(tape, &x, &pw, v, Some(&b))?;
            project(tape, &y, seed)
        },
        &dw,
        eps,
    )?;
    Ok(vec![("input", wrt_x), ("pointwise", wrt_pw), ("depthwise", wrt_dw)])
}

fn check_involution_apply(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    let x = probe_input(seed, 1)?;
    let k1 = Tensor::uniform(vec![2, 9, 5, 5], -0.5, 0.5, sub_seed(seed, 2))?;
    let k2 = Tensor::uniform(vec![2, 18, 5, 5], -0.5, 0.5, sub_seed(seed, 3))?;
    let wrt_x = grad_check(
        |tape, v| {
            let y = ops::involution_apply(tape, v, &k1, 3, 1)?;
            project(tape, &y, seed)
        },
        &x,
        eps,
    )?;
    let wrt_k = grad_check(
        |tape, v| {
            let y = ops::involution_apply(tape, &x, v, 3, 1)?;
            project(tape, &y, seed)
        },
        &k1,
        eps,
    )?;
    let grouped = grad_check(
        |tape, v| {
            let y = ops::involution_apply(tape, &x, v, 3, 2)?;
            project(tape, &y, seed)
        },
        &k2,
        eps,
    )?
    .max(grad_check(
        |tape, v| {
            let y = ops::involution_apply(tape, v, &k2, 3, 2)?;
            project(tape, &y, seed)
        },
        &x,
        eps,
    )?);
    Ok(vec![("input", wrt_x), ("kernels", wrt_k), ("grouped", grouped)])
}

fn check_involution(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    let x = probe_input(seed, 1)?;
    let rw = Tensor::uniform(vec![1, 4, 1, 1], -0.5, 0.5, sub_seed(seed, 2))?;
    let rb = Tensor::uniform(vec![1], -0.25, 0.25, sub_seed(seed, 3))?;
    let sw = Tensor::uniform(vec![9, 1, 1, 1], -0.5, 0.5, sub_seed(seed, 4))?;
    let sb = Tensor::uniform(vec![9], -0.25, 0.25, sub_seed(seed, 5))?;
    let run = |tape: &mut Tape<f64>,
               x: &Tensor<f64>,
               rw: &Tensor<f64>,
               rb: &Tensor<f64>,
               sw: &Tensor<f64>,
               sb: &Tensor<f64>|
     -> Result<Tensor<f64>> {
        ops::involution(tape, x, rw, rb, sw, sb, 0.05, 3, 1)
    };
    let wrt_x = grad_check(
        |tape, v| {
            let y = run(tape, v, &rw, &rb, &sw, &sb)?;
            project(tape, &y, seed)
        },
        &x,
        eps,
    )?;
    let wrt_rw = grad_check(
        |tape, v| {
            let y = run(tape, &x, v, &rb, &sw, &sb)?;
            project(tape, &y, seed)
        },
        &rw,
        eps,
    )?;
    let wrt_sw = grad_check(
        |tape, v| {
            let y = run(tape, &x, &rw, &rb, v, &sb)?;
            project(tape, &y, seed)
        },
        &sw,
        eps,
    )?;
    let wrt_sb = grad_check(
        |tape, v| {
            let y = run(tape, &x, &rw, &rb, &sw, v)?;
            project(tape, &y, seed)
        },
        &sb,
        eps,
    )?;
    Ok(vec![
        ("input", wrt_x),
        ("reduce_w", wrt_rw),
        ("span_w", wrt_sw),
        ("span_b", wrt_sb),
    ])
}

fn check_batch_norm(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    let x = Tensor::uniform(vec![2, 3, 4, 4], -1.0, 1.0, sub_seed(seed, 1))?;
    let gamma = Tensor::uniform(vec![3], 0.5, 1.5, sub_seed(seed, 2))?;
    let beta = Tensor::uniform(vec![3], -0.5, 0.5, sub_seed(seed, 3))?;
    let bn_eps = 1e-5;
    let wrt_x = grad_check(
        |tape, v| {
            let (y, _, _) = ops::batch_norm_train(tape, v, &gamma, &beta, bn_eps)?;
            project(tape, &y, seed)
        },
        &x,
        eps,
    )?;
    let wrt_gamma = grad_check(
        |tape, v| {
            let (y, _, _) = ops::batch_norm_train(tape, &x, v, &beta, bn_eps)?;
            project(tape, &y, seed)
        },
        &gamma,
        eps,
    )?;
    let wrt_beta = grad_check(
        |tape, v| {
            let (y, _, _) = ops::batch_norm_train(tape, &x, &gamma, v, bn_eps)?;
            project(tape, &y, seed)
        },
        &beta,
        eps,
    )?;
    let r_mean = vec![0.1, -0.2, 0.05];
    let r_var = vec![0.9, 1.2, 0.6];
    let eval_mode = grad_check(
        |tape, v| {
            let y = ops::batch_norm_eval(tape, v, &gamma, &beta, &r_mean, &r_var, bn_eps)?;
            project(tape, &y, seed)
        },
        &x,
        eps,
    )?;
    Ok(vec![
        ("input", wrt_x),
        ("gamma", wrt_gamma),
        ("beta", wrt_beta),
        ("eval_input", eval_mode),
    ])
}

fn check_channel_stats(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    let x = probe_input(seed, 1)?;
    let e = grad_check(
        |tape, v| {
            let (mean, std) = ops::channel_stats(tape, v)?;
            let pm = project(tape, &mean, seed)?;
            let ps = project(tape, &std, sub_seed(seed, 7))?;
            ops::add(tape, &pm, &ps)
        },
        &x,
        eps,
    )?;
    Ok(vec![("input", e)])
}

fn check_pixel_shuffle(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    let x = Tensor::uniform(vec![2, 8, 3, 3], -1.0, 1.0, sub_seed(seed, 1))?;
    let shuffle = grad_check(
        |tape, v| {
            let y = ops::pixel_shuffle(tape, v, 2)?;
            project(tape, &y, seed)
        },
        &x,
        eps,
    )?;
    let xu = Tensor::uniform(vec![2, 2, 4, 6], -1.0, 1.0, sub_seed(seed, 2))?;
    let unshuffle = grad_check(
        |tape, v| {
            let y = ops::pixel_unshuffle(tape, v, 2)?;
            project(tape, &y, seed)
        },
        &xu,
        eps,
    )?;
    Ok(vec![("shuffle", shuffle), ("unshuffle", unshuffle)])
}

fn check_mae_loss(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    // Targets sit far from the predictions so no tie is within eps of a
    // probe point.
    let pred = probe_input(seed, 1)?;
    let target = Tensor::uniform(PROBE.to_vec(), 2.5, 3.5, sub_seed(seed, 2))?;
    let wrt_pred = grad_check(|tape, v| ops::mae_loss(tape, v, &target), &pred, eps)?;
    let wrt_target = grad_check(|tape, v| ops::mae_loss(tape, &pred, v), &target, eps)?;
    Ok(vec![("pred", wrt_pred), ("target", wrt_target)])
}

fn check_srb(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    arch::gradcheck_srb(seed, eps)
}

fn check_chfab(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    arch::gradcheck_chfab(seed, eps)
}

fn check_ibmdb(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    arch::gradcheck_ibmdb(seed, eps)
}

fn check_ibmdn(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    arch::gradcheck_ibmdn(seed, eps)
}
