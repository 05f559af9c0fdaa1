//! Network architecture: hyper-parameters, parameter storage, the layer
//! zoo and the assembled super-resolution model.

mod checks;
mod config;
mod layers;
mod model;
mod store;

pub use config::{
    DepthSchedule, ModelSpec, OperatorKind, ALPHA, BN_EPS, BN_MOMENTUM, INVOLUTION_GROUPS,
    INVOLUTION_KERNEL, INVOLUTION_REDUCTION,
};
pub use layers::{
    build_chfab, build_ibmdb, build_srb, BatchNormLayer, BsconvLayer, Chfab, Conv2dLayer, Ibmdb,
    InvolutionLayer, Srb,
};
pub use model::{build_ibmdn, Model};
pub use store::{ParamId, ParamStore, Parameter, Session};

pub(crate) use checks::{gradcheck_chfab, gradcheck_ibmdb, gradcheck_ibmdn, gradcheck_srb};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::Tape;
    use crate::tensor::Tensor;
    use alloc::vec::Vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trainable_count(store: &ParamStore<f64>) -> usize {
        store
            .iter()
            .filter(|(_, p)| p.trainable())
            .map(|(_, p)| p.value().len())
            .sum()
    }

    fn tiny_spec(scale: usize) -> ModelSpec {
        ModelSpec {
            scale,
            nf: 8,
            nd: 4,
            n_blocks: 2,
            schedule: DepthSchedule::default_for(2).unwrap(),
            chfab_channels: 4,
        }
    }

    #[test]
    fn srb_parameter_counts_are_fixed() {
        for (kind, want) in [(OperatorKind::Bsconv, 3000), (OperatorKind::Involution, 729)] {
            let mut store: ParamStore<f64> = ParamStore::new();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            build_srb(&mut store, &mut rng, "srb", kind, 50).unwrap();
            assert_eq!(trainable_count(&store), want, "{kind:?}");
        }
    }

    #[test]
    fn chfab_parameter_count_is_fixed() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        build_chfab(&mut store, &mut rng, "attn", 50, 8).unwrap();
        assert_eq!(trainable_count(&store), 2820);
        // Four running-statistics buffers ride along but are not trainable.
        let frozen: usize = store
            .iter()
            .filter(|(_, p)| !p.trainable())
            .map(|(_, p)| p.value().len())
            .sum();
        assert_eq!(frozen, 4 * 8);
    }

    #[test]
    fn block_parameter_counts_follow_the_operator_mix() {
        use OperatorKind::{Bsconv as B, Involution as I};
        let cases = [
            ([B, B, B], 22195),
            ([B, I, B], 19924),
            ([I, B, I], 17653),
            ([I, I, I], 15382),
        ];
        for (triple, want) in cases {
            let mut store: ParamStore<f64> = ParamStore::new();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            build_ibmdb(&mut store, &mut rng, "block", 50, 25, triple, 8).unwrap();
            assert_eq!(trainable_count(&store), want, "{triple:?}");
        }
        // Swapping a conv residual block for an involution one saves
        // exactly three times the single-block difference.
        assert_eq!(22195 - 15382, 3 * (3000 - 729));
    }

    #[test]
    fn model_totals_match_the_published_budget() {
        let expect = [(2usize, 161685usize), (3, 168450), (4, 177921)];
        for (scale, want) in expect {
            let model = build_ibmdn::<f64>(&ModelSpec::standard(scale).unwrap(), 0).unwrap();
            let (total, breakdown) = model.count_params();
            assert_eq!(total, want, "scale {scale}");
            let lookup = |name: &str| -> usize {
                breakdown
                    .iter()
                    .find(|(n, _)| n == name)
                    .map(|(_, v)| *v)
                    .unwrap_or(0)
            };
            assert_eq!(lookup("shallow"), 1400);
            assert_eq!(lookup("fusion"), 37600);
            assert_eq!(lookup("recon"), 1353 * scale * scale);
            assert_eq!(breakdown.iter().map(|(_, v)| v).sum::<usize>(), total);
            // Within ten percent of the published sizes.
            let published = [(2, 170_000i64), (3, 178_000), (4, 187_000)];
            let p = published.iter().find(|(s, _)| *s == scale).unwrap().1;
            assert!((total as i64 - p).abs() * 10 <= p, "scale {scale}: {total} vs {p}");
        }
        // Only the reconstruction head depends on the scale.
        assert_eq!(168450 - 161685, 1353 * (9 - 4));
        assert_eq!(177921 - 161685, 1353 * (16 - 4));
    }

    #[test]
    fn built_blocks_follow_the_schedule() {
        let spec = ModelSpec::standard(2).unwrap();
        let model = build_ibmdn::<f32>(&spec, 1).unwrap();
        for (block, triple) in model.net.blocks.iter().zip(spec.schedule.triples()) {
            assert_eq!(block.kinds(), *triple);
        }
    }

    #[test]
    fn same_seed_rebuilds_identical_weights() {
        let spec = tiny_spec(2);
        let a = build_ibmdn::<f32>(&spec, 7).unwrap();
        let b = build_ibmdn::<f32>(&spec, 7).unwrap();
        let c = build_ibmdn::<f32>(&spec, 8).unwrap();
        let mut any_diff = false;
        for ((_, pa), ((_, pb), (_, pc))) in
            a.store().iter().zip(b.store().iter().zip(c.store().iter()))
        {
            assert_eq!(pa.name(), pb.name());
            assert_eq!(pa.value().data(), pb.value().data(), "{}", pa.name());
            if pa.value().data() != pc.value().data() {
                any_diff = true;
            }
        }
        assert!(any_diff, "different seeds must produce different weights");
    }

    #[test]
    fn f32_and_f64_models_share_the_init_stream() {
        let spec = tiny_spec(2);
        let a = build_ibmdn::<f32>(&spec, 3).unwrap();
        let b = build_ibmdn::<f64>(&spec, 3).unwrap();
        for ((_, pa), (_, pb)) in a.store().iter().zip(b.store().iter()) {
            let va = pa.value().data();
            let vb = pb.value().data();
            assert_eq!(va.len(), vb.len());
            for (x, y) in va.iter().zip(vb) {
                assert_eq!(*x, *y as f32, "{}", pa.name());
            }
        }
    }

    #[test]
    fn zeroed_fusion_makes_a_block_the_identity() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let triple = [OperatorKind::Bsconv, OperatorKind::Involution, OperatorKind::Bsconv];
        let block = build_ibmdb(&mut store, &mut rng, "block", 8, 4, triple, 4).unwrap();
        let wid = block.fuse_weight_id();
        let shape = store.value(wid).shape().to_vec();
        store.set_value(wid, &Tensor::zeros(shape).unwrap()).unwrap();
        let x = Tensor::uniform(vec![2, 8, 6, 6], -1.0, 1.0, 11).unwrap();
        for train in [true, false] {
            let mut tape = Tape::disabled();
            let mut sess = Session::new(&mut tape, &mut store, train);
            let y = block.forward(&mut sess, &x).unwrap();
            assert_eq!(y.data(), x.data(), "train={train}");
        }
    }

    #[test]
    fn zero_weight_srb_reduces_to_the_activation() {
        for kind in [OperatorKind::Bsconv, OperatorKind::Involution] {
            let mut store: ParamStore<f64> = ParamStore::new();
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let srb = build_srb(&mut store, &mut rng, "srb", kind, 6).unwrap();
            let ids: Vec<ParamId> = store.iter().map(|(id, _)| id).collect();
            for id in ids {
                let shape = store.value(id).shape().to_vec();
                store.set_value(id, &Tensor::zeros(shape).unwrap()).unwrap();
            }
            let x = Tensor::uniform(vec![1, 6, 4, 4], -1.0, 1.0, 13).unwrap();
            let mut tape = Tape::disabled();
            let mut sess = Session::new(&mut tape, &mut store, true);
            let y = srb.forward(&mut sess, &x).unwrap();
            let want: Vec<f64> = x
                .data()
                .iter()
                .map(|&v| if v >= 0.0 { v } else { ALPHA * v })
                .collect();
            assert_eq!(y.data(), &want[..], "{kind:?}");
        }
    }

    #[test]
    fn forward_sr_upscales_and_clamps() {
        for scale in [2usize, 3, 4] {
            let mut model = build_ibmdn::<f32>(&tiny_spec(scale), 5).unwrap();
            let lr = Tensor::uniform(vec![1, 3, 8, 6], 0.0, 1.0, 17).unwrap();
            let sr = model.forward_sr(&lr).unwrap();
            assert_eq!(sr.shape(), &[1, 3, 8 * scale, 6 * scale]);
            assert!(sr.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn forward_rejects_malformed_inputs() {
        let mut model = build_ibmdn::<f32>(&tiny_spec(2), 5).unwrap();
        let four_channels = Tensor::<f32>::zeros(vec![1, 4, 8, 8]).unwrap();
        assert!(model.forward_sr(&four_channels).is_err());
        let batch = Tensor::<f32>::zeros(vec![2, 3, 8, 8]).unwrap();
        assert!(model.forward_sr(&batch).is_err());
        let spec = ModelSpec { scale: 5, ..tiny_spec(2) };
        assert!(build_ibmdn::<f32>(&spec, 0).is_err());
    }

    #[test]
    fn train_batch_produces_gradients_for_every_trainable_parameter() {
        let mut model = build_ibmdn::<f64>(&tiny_spec(2), 21).unwrap();
        let lr = Tensor::uniform(vec![2, 3, 6, 6], 0.0, 1.0, 23).unwrap();
        let hr = Tensor::uniform(vec![2, 3, 12, 12], 0.0, 1.0, 29).unwrap();
        let loss = model.train_batch(&lr, &hr).unwrap();
        assert!(loss.is_finite() && loss > 0.0);
        for (_, p) in model.store().iter() {
            if p.trainable() {
                assert!(p.grad().is_some(), "no gradient for {}", p.name());
            } else {
                assert!(p.grad().is_none(), "unexpected gradient for {}", p.name());
            }
        }
        model.zero_grads();
        assert!(!model.store().any_grads());
    }

    #[test]
    fn training_updates_running_statistics() {
        let mut model = build_ibmdn::<f64>(&tiny_spec(2), 31).unwrap();
        let name = "blocks.0.attn.spat.bn1.running_var";
        let id = model.store().id_by_name(name).unwrap();
        let before = model.store().value(id).to_vec();
        let lr = Tensor::uniform(vec![2, 3, 6, 6], 0.0, 1.0, 37).unwrap();
        let hr = Tensor::uniform(vec![2, 3, 12, 12], 0.0, 1.0, 41).unwrap();
        model.train_batch(&lr, &hr).unwrap();
        let after = model.store().value(id).to_vec();
        assert_ne!(before, after, "running variance should move in train mode");

        // Inference leaves the running statistics untouched.
        let probe = Tensor::uniform(vec![1, 3, 6, 6], 0.0, 1.0, 43).unwrap();
        model.forward_sr(&probe).unwrap();
        assert_eq!(model.store().value(id).to_vec(), after);
    }
}
