//! Network building blocks: convolution wrappers, the shallow residual
//! block, the two-branch attention block and the multi-depth distillation
//! block.
//!
//! Layers are plain structs of [`ParamId`]s; the tensors live in the
//! [`ParamStore`] and are bound to a tape per forward pass through a
//! [`Session`]. Builders draw every weight from one caller-owned RNG stream
//! so a (spec, seed) pair reproduces a model exactly.

use alloc::format;
use alloc::vec::Vec;
use rand::Rng;

use crate::config_err;
use crate::error::Result;
use crate::ops;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::config::{
    OperatorKind, ALPHA, BN_EPS, BN_MOMENTUM, INVOLUTION_GROUPS, INVOLUTION_KERNEL,
    INVOLUTION_REDUCTION,
};
use super::store::{ParamId, ParamStore, Session};

/// Uniform initialization half-width for a convolution weight:
/// `1 / sqrt(fan_in)` with `fan_in = (c_in / groups) * k * k`.
///
/// The conservative bound keeps every branch's variance gain below one.
/// That matters here: residual paths stack six deep and the involution
/// kernels are themselves functions of the features, so a gain above one
/// compounds quadratically and overflows f32 within a single forward pass
/// at the full network depth.
fn init_bound(cin_per_group: usize, k: usize) -> f64 {
    1.0 / ((cin_per_group * k * k) as f64).sqrt()
}

fn alpha<T: Scalar>() -> T {
    T::from_f64(ALPHA)
}

/// Plain 2-D convolution layer (stride 1, "same" padding).
#[derive(Debug, Clone)]
pub struct Conv2dLayer {
    weight: ParamId,
    bias: Option<ParamId>,
    groups: usize,
}

impl Conv2dLayer {
    /// Registers a fresh `cin -> cout` convolution under `prefix`.
    /// Weights are uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases
    /// start at zero.
    #[allow(clippy::too_many_arguments)]
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
        prefix: &str,
        cin: usize,
        cout: usize,
        k: usize,
        groups: usize,
        bias: bool,
    ) -> Result<Self> {
        if groups == 0 || !cin.is_multiple_of(groups) || !cout.is_multiple_of(groups) {
            return Err(config_err!(
                "{prefix}: groups {groups} must divide c_in {cin} and c_out {cout}"
            ));
        }
        let cin_g = cin / groups;
        let b = init_bound(cin_g, k);
        let weight = store.register(
            format!("{prefix}.weight"),
            Tensor::uniform_from([cout, cin_g, k, k], -b, b, rng)?,
            true,
        )?;
        let bias = if bias {
            Some(store.register(format!("{prefix}.bias"), Tensor::zeros([cout])?, true)?)
        } else {
            None
        };
        Ok(Conv2dLayer { weight, bias, groups })
    }

    pub fn weight_id(&self) -> ParamId {
        self.weight
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let w = sess.param(self.weight);
        let b = self.bias.map(|id| sess.param(id));
        ops::conv2d(sess.tape(), x, &w, b.as_ref(), self.groups)
    }
}

/// Blueprint-separable convolution layer: bias-free pointwise mix, then a
/// biased depthwise k x k convolution.
#[derive(Debug, Clone)]
pub struct BsconvLayer {
    pw: ParamId,
    dw: ParamId,
    dw_bias: ParamId,
}

impl BsconvLayer {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
        prefix: &str,
        cin: usize,
        cout: usize,
        k: usize,
    ) -> Result<Self> {
        let bp = init_bound(cin, 1);
        let pw = store.register(
            format!("{prefix}.pw.weight"),
            Tensor::uniform_from([cout, cin, 1, 1], -bp, bp, rng)?,
            true,
        )?;
        let bd = init_bound(1, k);
        let dw = store.register(
            format!("{prefix}.dw.weight"),
            Tensor::uniform_from([cout, 1, k, k], -bd, bd, rng)?,
            true,
        )?;
        let dw_bias =
            store.register(format!("{prefix}.dw.bias"), Tensor::zeros([cout])?, true)?;
        Ok(BsconvLayer { pw, dw, dw_bias })
    }

    pub fn weight_id(&self) -> ParamId {
        self.pw
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let pw = sess.param(self.pw);
        let dw = sess.param(self.dw);
        let db = sess.param(self.dw_bias);
        ops::bsconv(sess.tape(), x, &pw, &dw, Some(&db))
    }
}

/// Involution layer: the kernel-generating bottleneck plus the application
/// step, all at the network-wide kernel size, group count and reduction.
#[derive(Debug, Clone)]
pub struct InvolutionLayer {
    reduce_w: ParamId,
    reduce_b: ParamId,
    span_w: ParamId,
    span_b: ParamId,
}

impl InvolutionLayer {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
        prefix: &str,
        channels: usize,
    ) -> Result<Self> {
        if !channels.is_multiple_of(INVOLUTION_GROUPS) {
            return Err(config_err!(
                "{prefix}: involution groups {INVOLUTION_GROUPS} must divide channels {channels}"
            ));
        }
        let mid = (channels / INVOLUTION_REDUCTION).max(1);
        let span_out = INVOLUTION_KERNEL * INVOLUTION_KERNEL * INVOLUTION_GROUPS;
        let br = init_bound(channels, 1);
        let reduce_w = store.register(
            format!("{prefix}.reduce.weight"),
            Tensor::uniform_from([mid, channels, 1, 1], -br, br, rng)?,
            true,
        )?;
        let reduce_b =
            store.register(format!("{prefix}.reduce.bias"), Tensor::zeros([mid])?, true)?;
        let bs = init_bound(mid, 1);
        let span_w = store.register(
            format!("{prefix}.span.weight"),
            Tensor::uniform_from([span_out, mid, 1, 1], -bs, bs, rng)?,
            true,
        )?;
        let span_b =
            store.register(format!("{prefix}.span.bias"), Tensor::zeros([span_out])?, true)?;
        Ok(InvolutionLayer { reduce_w, reduce_b, span_w, span_b })
    }

    pub fn weight_id(&self) -> ParamId {
        self.span_w
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let rw = sess.param(self.reduce_w);
        let rb = sess.param(self.reduce_b);
        let sw = sess.param(self.span_w);
        let sb = sess.param(self.span_b);
        ops::involution(
            sess.tape(),
            x,
            &rw,
            &rb,
            &sw,
            &sb,
            alpha(),
            INVOLUTION_KERNEL,
            INVOLUTION_GROUPS,
        )
    }
}

/// Batch normalization layer owning its affine pair and running statistics.
/// The running buffers are registered as non-trainable parameters so they
/// travel with checkpoints but stay out of optimizer updates and parameter
/// counts.
#[derive(Debug, Clone)]
pub struct BatchNormLayer {
    gamma: ParamId,
    beta: ParamId,
    running_mean: ParamId,
    running_var: ParamId,
}

impl BatchNormLayer {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        channels: usize,
    ) -> Result<Self> {
        let gamma =
            store.register(format!("{prefix}.gamma"), Tensor::ones([channels])?, true)?;
        let beta =
            store.register(format!("{prefix}.beta"), Tensor::zeros([channels])?, true)?;
        let running_mean = store.register(
            format!("{prefix}.running_mean"),
            Tensor::zeros([channels])?,
            false,
        )?;
        let running_var = store.register(
            format!("{prefix}.running_var"),
            Tensor::ones([channels])?,
            false,
        )?;
        Ok(BatchNormLayer { gamma, beta, running_mean, running_var })
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let gamma = sess.param(self.gamma);
        let beta = sess.param(self.beta);
        let eps = T::from_f64(BN_EPS);
        if sess.is_train() {
            let (y, mean, var) = ops::batch_norm_train(sess.tape(), x, &gamma, &beta, eps)?;
            let momentum = T::from_f64(BN_MOMENTUM);
            sess.update_running(self.running_mean, &mean, momentum)?;
            sess.update_running(self.running_var, &var, momentum)?;
            Ok(y)
        } else {
            let rm = sess.store().value(self.running_mean).to_vec();
            let rv = sess.store().value(self.running_var).to_vec();
            ops::batch_norm_eval(sess.tape(), x, &gamma, &beta, &rm, &rv, eps)
        }
    }
}

/// Shallow residual block: `leaky_relu(op(x) + x)` where the operator is a
/// 3x3 blueprint-separable convolution or a 3x3 involution, both
/// channel-preserving.
#[derive(Debug, Clone)]
pub struct Srb {
    kind: OperatorKind,
    conv: Option<BsconvLayer>,
    inv: Option<InvolutionLayer>,
}

/// Builds a shallow residual block of the given operator kind.
pub fn build_srb<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut impl Rng,
    prefix: &str,
    kind: OperatorKind,
    channels: usize,
) -> Result<Srb> {
    if channels == 0 {
        return Err(config_err!("{prefix}: channels must be positive"));
    }
    let body = format!("{prefix}.body");
    let (conv, inv) = match kind {
        OperatorKind::Bsconv => (
            Some(BsconvLayer::init(store, rng, &body, channels, channels, 3)?),
            None,
        ),
        OperatorKind::Involution => {
            (None, Some(InvolutionLayer::init(store, rng, &body, channels)?))
        }
    };
    Ok(Srb { kind, conv, inv })
}

impl Srb {
    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    /// Tensor id of the block's main weight, used by gradient checks.
    pub fn weight_id(&self) -> ParamId {
        match self.kind {
            OperatorKind::Bsconv => self.conv.as_ref().unwrap().weight_id(),
            OperatorKind::Involution => self.inv.as_ref().unwrap().weight_id(),
        }
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let body = match self.kind {
            OperatorKind::Bsconv => self.conv.as_ref().unwrap().forward(sess, x)?,
            OperatorKind::Involution => self.inv.as_ref().unwrap().forward(sess, x)?,
        };
        let summed = ops::add(sess.tape(), &body, x)?;
        ops::leaky_relu(sess.tape(), &summed, alpha())
    }
}

/// Coarse and fine feature attention block.
///
/// Two branches produce gate logits that are summed and squashed:
/// a distribution branch squeezes per-channel mean and standard deviation
/// through a bottleneck, and a spatial branch runs a convolution trunk with
/// an involution core. The input is multiplied by the resulting gate.
#[derive(Debug, Clone)]
pub struct Chfab {
    dist_squeeze: Conv2dLayer,
    dist_excite: Conv2dLayer,
    spat_in: BsconvLayer,
    spat_bn1: BatchNormLayer,
    spat_inv: InvolutionLayer,
    spat_bn2: BatchNormLayer,
    spat_out: BsconvLayer,
}

/// Builds an attention block over `channels` features with a spatial trunk
/// of `trunk` channels.
pub fn build_chfab<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut impl Rng,
    prefix: &str,
    channels: usize,
    trunk: usize,
) -> Result<Chfab> {
    if trunk == 0 || trunk > channels {
        return Err(config_err!(
            "{prefix}: attention trunk {trunk} must be in 1..={channels}"
        ));
    }
    // Bottleneck width of the distribution branch: a quarter, rounded up.
    let mid = channels.div_ceil(4);
    Ok(Chfab {
        dist_squeeze: Conv2dLayer::init(
            store,
            rng,
            &format!("{prefix}.dist.squeeze"),
            channels,
            mid,
            1,
            1,
            true,
        )?,
        dist_excite: Conv2dLayer::init(
            store,
            rng,
            &format!("{prefix}.dist.excite"),
            mid,
            channels,
            1,
            1,
            true,
        )?,
        spat_in: BsconvLayer::init(store, rng, &format!("{prefix}.spat.conv_in"), channels, trunk, 3)?,
        spat_bn1: BatchNormLayer::init(store, &format!("{prefix}.spat.bn1"), trunk)?,
        spat_inv: InvolutionLayer::init(store, rng, &format!("{prefix}.spat.inv"), trunk)?,
        spat_bn2: BatchNormLayer::init(store, &format!("{prefix}.spat.bn2"), trunk)?,
        spat_out: BsconvLayer::init(store, rng, &format!("{prefix}.spat.conv_out"), trunk, channels, 3)?,
    })
}

impl Chfab {
    /// Tensor id of a representative weight, used by gradient checks.
    pub fn weight_id(&self) -> ParamId {
        self.spat_in.weight_id()
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        // Distribution branch: per-channel mean + std, squeezed and
        // re-expanded; stays (N, C, 1, 1) and broadcasts over space.
        let (mean, std) = ops::channel_stats(sess.tape(), x)?;
        let stats = ops::add(sess.tape(), &mean, &std)?;
        let d = self.dist_squeeze.forward(sess, &stats)?;
        let d = ops::leaky_relu(sess.tape(), &d, alpha())?;
        let d = self.dist_excite.forward(sess, &d)?;

        // Spatial branch: narrow convolution trunk with an involution core.
        let s = self.spat_in.forward(sess, x)?;
        let s = self.spat_bn1.forward(sess, &s)?;
        let s = ops::leaky_relu(sess.tape(), &s, alpha())?;
        let s = self.spat_inv.forward(sess, &s)?;
        let s = self.spat_bn2.forward(sess, &s)?;
        let s = self.spat_out.forward(sess, &s)?;

        let logits = ops::add(sess.tape(), &s, &d)?;
        let gate = ops::sigmoid(sess.tape(), &logits)?;
        ops::mul(sess.tape(), x, &gate)
    }
}

#[derive(Debug, Clone)]
struct IbmdbStage {
    refine: Conv2dLayer,
    srb: Srb,
}

/// Multi-depth information distillation block.
///
/// Three chained residual blocks form the coarse path; a 1x1 refinement
/// taps the input of each, and a 3x3 blueprint-separable tail distills the
/// final coarse features. The four distilled slices are concatenated,
/// fused back to the feature width, gated by attention, and added to the
/// block input.
#[derive(Debug, Clone)]
pub struct Ibmdb {
    stages: Vec<IbmdbStage>,
    tail: BsconvLayer,
    fuse: Conv2dLayer,
    attn: Chfab,
}

/// Builds a distillation block: `nf` features in and out, `nd` distilled
/// channels per stage, residual-block operators from `triple`, attention
/// trunk of `trunk` channels.
pub fn build_ibmdb<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &mut impl Rng,
    prefix: &str,
    nf: usize,
    nd: usize,
    triple: [OperatorKind; 3],
    trunk: usize,
) -> Result<Ibmdb> {
    if nd >= nf {
        return Err(config_err!(
            "{prefix}: distilled width {nd} must be smaller than feature width {nf}"
        ));
    }
    let mut stages = Vec::with_capacity(3);
    for (j, kind) in triple.into_iter().enumerate() {
        stages.push(IbmdbStage {
            refine: Conv2dLayer::init(
                store,
                rng,
                &format!("{prefix}.stage.{j}.refine"),
                nf,
                nd,
                1,
                1,
                true,
            )?,
            srb: build_srb(store, rng, &format!("{prefix}.stage.{j}.srb"), kind, nf)?,
        });
    }
    Ok(Ibmdb {
        stages,
        tail: BsconvLayer::init(store, rng, &format!("{prefix}.tail"), nf, nd, 3)?,
        fuse: Conv2dLayer::init(store, rng, &format!("{prefix}.fuse"), 4 * nd, nf, 1, 1, true)?,
        attn: build_chfab(store, rng, &format!("{prefix}.attn"), nf, trunk)?,
    })
}

impl Ibmdb {
    /// Operator kinds of the three residual blocks, in order.
    pub fn kinds(&self) -> [OperatorKind; 3] {
        [
            self.stages[0].srb.kind(),
            self.stages[1].srb.kind(),
            self.stages[2].srb.kind(),
        ]
    }

    /// Tensor ids used by gradient checks: the fusion weight reaches every
    /// distilled path, the attention weight exercises the gate.
    pub fn fuse_weight_id(&self) -> ParamId {
        self.fuse.weight_id()
    }

    pub fn attn_weight_id(&self) -> ParamId {
        self.attn.weight_id()
    }

    pub fn forward<T: Scalar>(&self, sess: &mut Session<'_, T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut coarse = x.clone();
        let mut distilled: Vec<Tensor<T>> = Vec::with_capacity(4);
        for stage in &self.stages {
            // Refinement and the residual block both read the same input.
            distilled.push(stage.refine.forward(sess, &coarse)?);
            coarse = stage.srb.forward(sess, &coarse)?;
        }
        let tail = self.tail.forward(sess, &coarse)?;
        distilled.push(ops::leaky_relu(sess.tape(), &tail, alpha())?);

        let parts: Vec<&Tensor<T>> = distilled.iter().collect();
        let cat = ops::concat_channels(sess.tape(), &parts)?;
        let fused = self.fuse.forward(sess, &cat)?;
        let gated = self.attn.forward(sess, &fused)?;
        ops::add(sess.tape(), &gated, x)
    }
}
