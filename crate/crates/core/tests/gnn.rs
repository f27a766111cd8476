mod common;

use std::collections::BTreeSet;

use fgl_core::gnn::{self, adam_step, AdamState, Arch, GraphData, ModelParams};
use fgl_core::graph::{ClientGraph, NodeId};
use fgl_core::synthetic::{self, SyntheticSpec};
use ndarray::Array2;

#[test]
fn gradients_match_finite_differences() {
    for arch in [Arch::Gcn, Arch::Sage] {
        for i in 0..20u64 {
            let n = 5 + (i % 6) as usize;
            let inst = common::instance(arch, n, 3, 4, 100 + i);
            let err = common::max_gradient_error(&inst, i);
            assert!(err < 1e-4, "{arch} instance {i}: relative error {err}");
        }
    }
}

#[test]
fn gcn_is_permutation_equivariant() {
    let n = 9;
    let t = common::table(n, 3, 4);
    let g = common::random_graph(&t, 0.4, true, 4);
    let params = ModelParams::init(Arch::Gcn, 3, 8, 2);
    let order: Vec<NodeId> = (0..n).collect();
    let base = gnn::forward(
        &params,
        &GraphData::new(&g, &order, t.features().clone()),
        5,
        0,
    )
    .unwrap()
    .0;

    // perm[new] = old
    let perm = [4, 0, 7, 2, 8, 1, 6, 3, 5];
    let order: Vec<NodeId> = perm.to_vec();
    let x = Array2::from_shape_fn((n, 3), |(r, c)| t.features()[[perm[r], c]]);
    let permuted = gnn::forward(&params, &GraphData::new(&g, &order, x), 5, 0)
        .unwrap()
        .0;
    for r in 0..n {
        for c in 0..2 {
            assert!((permuted[[r, c]] - base[[perm[r], c]]).abs() < 1e-12);
        }
    }
}

fn train_losses(arch: Arch, steps: usize) -> (Vec<f64>, ModelParams) {
    let spec = SyntheticSpec {
        nodes: 200,
        ..SyntheticSpec::default()
    };
    let d = synthetic::generate(&spec, 3).unwrap();
    let order: Vec<NodeId> = (0..200).collect();
    let data = GraphData::new(&d.relations[0], &order, d.nodes.features().clone());
    let mask: Vec<usize> = (0..200).step_by(2).collect();
    let mut params = ModelParams::init(arch, spec.feature_dim, gnn::HIDDEN_UNITS, 1);
    let mut adam = AdamState::new(&params);
    let mut losses = Vec::new();
    for step in 0..steps {
        let (logits, cache) = gnn::forward(&params, &data, 5, step as u64).unwrap();
        let (loss, grads) =
            gnn::loss_and_grads(&params, &data, &logits, &cache, d.nodes.labels(), &mask).unwrap();
        adam_step(&mut params, &grads, &mut adam).unwrap();
        losses.push(loss);
    }
    (losses, params)
}

#[test]
fn loss_decreases_over_first_epochs() {
    for arch in [Arch::Gcn, Arch::Sage] {
        let (losses, params) = train_losses(arch, 10);
        assert!(losses[9] < losses[0], "{arch}: {losses:?}");
        assert!(params.is_finite());
    }
}

#[test]
fn training_is_bit_reproducible() {
    for arch in [Arch::Gcn, Arch::Sage] {
        let (la, pa) = train_losses(arch, 5);
        let (lb, pb) = train_losses(arch, 5);
        assert_eq!(la, lb);
        assert_eq!(pa.to_bytes(), pb.to_bytes());
    }
}

#[test]
fn params_round_trip_through_bytes() {
    let p = common::instance(Arch::Sage, 6, 3, 5, 9).params;
    assert_eq!(ModelParams::from_bytes(&p.to_bytes()).unwrap(), p);
    assert!(ModelParams::from_bytes(&p.to_bytes()[..20]).is_err());
}

#[test]
fn adjacency_over_fused_subgraph_is_symmetric() {
    let t = common::table(30, 1, 0);
    let g = common::random_graph(&t, 0.2, true, 8);
    let keep: BTreeSet<NodeId> = (0..30).filter(|v| v % 3 != 0).collect();
    let sub: ClientGraph = g.induced(&keep);
    let order: Vec<NodeId> = keep.iter().copied().collect();
    let a = gnn::normalized_adjacency_over(&sub, &order).to_dense();
    assert_eq!(a, a.t());
    assert!(a.iter().all(|v| v.is_finite() && *v >= 0.0));
}
