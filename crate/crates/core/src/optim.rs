//! ADAM optimizer with the halving learning-rate schedule.

use alloc::vec;
use alloc::vec::Vec;

use crate::arch::ParamStore;
use crate::config_err;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Training hyper-parameters. Defaults follow the published recipe:
/// ADAM with beta1 0.9 / beta2 0.999, initial learning rate 2e-4 halved
/// every 200k iterations, mini-batches of 16 HR patches of 192x192.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr0: f64,
    pub halve_every: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub batch: usize,
    pub hr_patch: usize,
    pub iters: u64,
    pub seed: u64,
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 2e-4,
            halve_every: 200_000,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            batch: 16,
            hr_patch: 192,
            iters: 0,
            seed: 0,
            augment: true,
        }
    }
}

impl TrainConfig {
    /// Validates the configuration against a model's scale factor.
    pub fn validate(&self, scale: usize) -> Result<()> {
        // The negated form also rejects a NaN learning rate.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(self.lr0 > 0.0) {
            return Err(config_err!("initial learning rate must be positive, got {}", self.lr0));
        }
        if self.halve_every == 0 {
            return Err(config_err!("halve_every must be positive"));
        }
        if self.batch == 0 {
            return Err(config_err!("batch size must be at least 1"));
        }
        if self.hr_patch == 0 || !self.hr_patch.is_multiple_of(scale) {
            return Err(config_err!(
                "patch size {} must be a positive multiple of the scale {scale}",
                self.hr_patch
            ));
        }
        Ok(())
    }
}

/// Learning rate at a given iteration: `lr0 * 0.5^floor(iter/halve_every)`.
pub fn lr_at(iter: u64, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * 0.5f64.powi((iter / cfg.halve_every) as i32)
}

/// Per-parameter first and second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState<T: Scalar> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Scalar> AdamState<T> {
    /// Zero-initialized moments shaped after the store's parameters.
    pub fn new(store: &ParamStore<T>) -> Self {
        let m = store.iter().map(|(_, p)| vec![T::zero(); p.value().len()]).collect();
        let v = store.iter().map(|(_, p)| vec![T::zero(); p.value().len()]).collect();
        AdamState { m, v, t: 0 }
    }

    /// Number of optimizer steps taken so far.
    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected ADAM update over every trainable parameter:
/// `m <- b1*m + (1-b1)*g`, `v <- b2*v + (1-b2)*g^2`,
/// `theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)`.
///
/// Parameters without a gradient this step are treated as having gradient
/// zero (their values still decay nothing and stay bit-identical). Calling
/// before any backward pass at all is an error.
pub fn adam_step<T: Scalar>(
    store: &mut ParamStore<T>,
    state: &mut AdamState<T>,
    cfg: &TrainConfig,
    lr: f64,
) -> Result<()> {
    if state.m.len() != store.len() {
        return Err(config_err!(
            "optimizer state tracks {} parameters, store has {}",
            state.m.len(),
            store.len()
        ));
    }
    if !store.any_grads() {
        return Err(Error::EmptyGrads);
    }
    state.t += 1;
    let b1 = T::from_f64(cfg.beta1);
    let b2 = T::from_f64(cfg.beta2);
    let one = T::one();
    // Bias corrections, computed in f64 for the power.
    let c1 = T::from_f64(1.0 - cfg.beta1.powi(state.t as i32));
    let c2 = T::from_f64(1.0 - cfg.beta2.powi(state.t as i32));
    let lr_t = T::from_f64(lr);
    let eps = T::from_f64(cfg.eps_adam);

    // `iter` yields parameters in registration order, which is also the
    // order the moment buffers were laid out in.
    let ids: Vec<_> = store
        .iter()
        .enumerate()
        .filter(|(_, (_, p))| p.trainable())
        .map(|(idx, (id, _))| (idx, id))
        .collect();
    for (idx, id) in ids {
        let p = store.get(id);
        let grad: Vec<T> = match p.grad() {
            Some(g) => g.to_vec(),
            None => vec![T::zero(); p.value().len()],
        };
        let mut theta = store.value(id).to_vec();
        let (ms, vs) = (&mut state.m[idx], &mut state.v[idx]);
        for i in 0..theta.len() {
            let g = grad[i];
            ms[i] = b1 * ms[i] + (one - b1) * g;
            vs[i] = b2 * vs[i] + (one - b2) * g * g;
            let m_hat = ms[i] / c1;
            let v_hat = vs[i] / c2;
            theta[i] = theta[i] - lr_t * m_hat / (v_hat.sqrt() + eps);
        }
        let shape = store.value(id).shape().to_vec();
        store.set_value(id, &crate::tensor::Tensor::from_vec(shape, theta)?)?;
    }
    Ok(())
}
