//! The full super-resolution network and its training/inference entry
//! points.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::ops;
use crate::scalar::Scalar;
use crate::shape_err;
use crate::tape::Tape;
use crate::tensor::Tensor;

use super::config::ModelSpec;
use super::layers::{build_ibmdb, Conv2dLayer, Ibmdb};
use super::store::{ParamStore, Session};

/// Layer graph of the network; parameters live in the owning model's store.
#[derive(Debug, Clone)]
pub(crate) struct Net {
    pub(crate) shallow: Conv2dLayer,
    pub(crate) blocks: Vec<Ibmdb>,
    fuse_narrow: Conv2dLayer,
    fuse_smooth: Conv2dLayer,
    recon: Conv2dLayer,
    scale: usize,
}

impl Net {
    /// Shared forward pass: shallow features, the block chain, hierarchical
    /// fusion with the long skip, then expansion and pixel shuffle.
    pub(crate) fn forward<T: Scalar>(
        &self,
        sess: &mut Session<'_, T>,
        x: &Tensor<T>,
    ) -> Result<Tensor<T>> {
        let (_, c, _, _) = x.dims4("forward")?;
        if c != 3 {
            return Err(shape_err!("forward", "input must have 3 channels, got {c}"));
        }
        let f0 = self.shallow.forward(sess, x)?;
        let mut feats: Vec<Tensor<T>> = Vec::with_capacity(self.blocks.len());
        let mut f = f0.clone();
        for block in &self.blocks {
            f = block.forward(sess, &f)?;
            feats.push(f.clone());
        }
        let parts: Vec<&Tensor<T>> = feats.iter().collect();
        let cat = ops::concat_channels(sess.tape(), &parts)?;
        let fused = self.fuse_narrow.forward(sess, &cat)?;
        let fused = self.fuse_smooth.forward(sess, &fused)?;
        let pre = ops::add(sess.tape(), &fused, &f0)?;
        let expanded = self.recon.forward(sess, &pre)?;
        ops::pixel_shuffle(sess.tape(), &expanded, self.scale)
    }
}

/// A built network: spec, parameters and layer graph together.
#[derive(Debug, Clone)]
pub struct Model<T: Scalar> {
    spec: ModelSpec,
    store: ParamStore<T>,
    pub(crate) net: Net,
}

/// Builds the network described by `spec`, drawing every initial weight
/// from one seeded stream in registration order. The same (spec, seed)
/// pair always yields bit-identical parameters.
pub fn build_ibmdn<T: Scalar>(spec: &ModelSpec, seed: u64) -> Result<Model<T>> {
    spec.validate()?;
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let shallow = Conv2dLayer::init(&mut store, &mut rng, "shallow", 3, spec.nf, 3, 1, true)?;
    let mut blocks = Vec::with_capacity(spec.n_blocks);
    for (i, &triple) in spec.schedule.triples().iter().enumerate() {
        blocks.push(build_ibmdb(
            &mut store,
            &mut rng,
            &alloc::format!("blocks.{i}"),
            spec.nf,
            spec.nd,
            triple,
            spec.chfab_channels,
        )?);
    }
    let fuse_narrow = Conv2dLayer::init(
        &mut store,
        &mut rng,
        "fusion.narrow",
        spec.n_blocks * spec.nf,
        spec.nf,
        1,
        1,
        true,
    )?;
    let fuse_smooth =
        Conv2dLayer::init(&mut store, &mut rng, "fusion.smooth", spec.nf, spec.nf, 3, 1, true)?;
    let recon = Conv2dLayer::init(
        &mut store,
        &mut rng,
        "recon",
        spec.nf,
        3 * spec.scale * spec.scale,
        3,
        1,
        true,
    )?;

    Ok(Model {
        spec: spec.clone(),
        store,
        net: Net { shallow, blocks, fuse_narrow, fuse_smooth, recon, scale: spec.scale },
    })
}

impl<T: Scalar> Model<T> {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    /// Trainable parameter count, total and per top-level piece
    /// ("shallow", "blocks.N", "fusion", "recon"). Running statistics are
    /// not trainable and are excluded.
    pub fn count_params(&self) -> (usize, Vec<(String, usize)>) {
        let mut total = 0;
        let mut breakdown: Vec<(String, usize)> = Vec::new();
        for (_, p) in self.store.iter() {
            if !p.trainable() {
                continue;
            }
            let mut segs = p.name().split('.');
            let head = segs.next().unwrap_or("");
            let bucket = if head == "blocks" {
                let idx = segs.next().unwrap_or("?");
                alloc::format!("blocks.{idx}")
            } else {
                head.to_string()
            };
            total += p.value().len();
            match breakdown.iter_mut().find(|(name, _)| *name == bucket) {
                Some((_, n)) => *n += p.value().len(),
                None => breakdown.push((bucket, p.value().len())),
            }
        }
        (total, breakdown)
    }

    /// Clears all accumulated parameter gradients.
    pub fn zero_grads(&mut self) {
        self.store.zero_grads();
    }

    /// Full tracked forward pass on an explicit tape; `train` selects
    /// batch-statistics mode for the normalization layers.
    pub fn forward_traced(
        &mut self,
        tape: &mut Tape<T>,
        x: &Tensor<T>,
        train: bool,
    ) -> Result<Tensor<T>> {
        let mut sess = Session::new(tape, &mut self.store, train);
        self.net.forward(&mut sess, x)
    }

    /// Forward pass of a single distillation block, mainly for tests.
    pub fn block_forward(
        &mut self,
        tape: &mut Tape<T>,
        index: usize,
        x: &Tensor<T>,
        train: bool,
    ) -> Result<Tensor<T>> {
        let Some(block) = self.net.blocks.get(index) else {
            return Err(crate::config_err!(
                "block index {index} out of range 0..{}",
                self.net.blocks.len()
            ));
        };
        let mut sess = Session::new(tape, &mut self.store, train);
        block.forward(&mut sess, x)
    }

    /// Inference: upscales one `(1, 3, H, W)` image in `[0, 1]` to
    /// `(1, 3, s*H, s*W)`, clamped back to `[0, 1]`. Runs in eval mode
    /// (frozen normalization statistics) with no gradient recording.
    pub fn forward_sr(&mut self, lr: &Tensor<T>) -> Result<Tensor<T>> {
        let (n, _, _, _) = lr.dims4("forward_sr")?;
        if n != 1 {
            return Err(shape_err!("forward_sr", "expected a single image, got batch of {n}"));
        }
        let mut tape = Tape::disabled();
        let mut sess = Session::new(&mut tape, &mut self.store, false);
        let y = self.net.forward(&mut sess, lr)?;
        ops::clamp(&y, T::zero(), T::one())
    }

    /// One training step's forward and backward pass: mean absolute error
    /// between the upscaled batch and `hr`, gradients accumulated into the
    /// store. Returns the loss value. Does not zero gradients or update
    /// parameters; the optimizer owns that.
    pub fn train_batch(&mut self, lr: &Tensor<T>, hr: &Tensor<T>) -> Result<T> {
        let mut tape = Tape::new();
        let mut sess = Session::new(&mut tape, &mut self.store, true);
        let pred = self.net.forward(&mut sess, lr)?;
        let loss = ops::mae_loss(sess.tape(), &pred, hr)?;
        sess.backward(&loss)?;
        loss.scalar_value()
    }
}
