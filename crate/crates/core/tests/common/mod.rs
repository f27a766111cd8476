#![allow(dead_code)]

use std::sync::Arc;

use fgl_core::gnn::{self, Arch, GraphData, ModelParams};
use fgl_core::graph::{ClientGraph, NodeTable};
use fgl_core::seed;
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

/// `n` nodes with standard normal features and alternating labels.
pub fn table(n: usize, f: usize, seed: u64) -> Arc<NodeTable> {
    let mut rng = seed::rng(seed);
    let x = Array2::from_shape_fn((n, f), |_| rng.sample::<f64, _>(StandardNormal));
    Arc::new(NodeTable::new(x, (0..n).map(|i| (i % 2) as u8).collect()).unwrap())
}

/// Erdős–Rényi graph over every node of `nodes`, weights in `[0.5, 3)` or 1.
pub fn random_graph(nodes: &Arc<NodeTable>, p: f64, weighted: bool, seed: u64) -> ClientGraph {
    let n = nodes.len();
    let mut rng = seed::rng(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                let w = if weighted {
                    rng.random_range(0.5..3.0)
                } else {
                    1.0
                };
                edges.push((u, v, w));
            }
        }
    }
    ClientGraph::new("r", nodes.clone(), 0..n, edges).unwrap()
}

/// Random learning instance: `n` nodes, a random weighted graph, random
/// parameters and a random non-empty training mask.
pub struct Instance {
    pub params: ModelParams,
    pub data: GraphData,
    pub labels: Vec<u8>,
    pub mask: Vec<usize>,
}

pub fn instance(arch: Arch, n: usize, f: usize, hidden: usize, seed: u64) -> Instance {
    let t = table(n, f, seed);
    let g = random_graph(&t, 0.4, true, seed ^ 0x5a5a);
    let order: Vec<usize> = (0..n).collect();
    let data = GraphData::new(&g, &order, t.features().clone());
    let mut rng = seed::rng(seed ^ 0xa5a5);
    let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
    let mut mask: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < 0.7).collect();
    if mask.is_empty() {
        mask.push(0);
    }
    let mut params = ModelParams::init(arch, f, hidden, seed);
    // Non-zero biases so their gradients are exercised away from the origin.
    for b in [&mut params.b1, &mut params.b2] {
        b.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    Instance {
        params,
        data,
        labels,
        mask,
    }
}

fn loss_at(inst: &Instance, params: &ModelParams, sample_seed: u64) -> f64 {
    let (logits, _) = gnn::forward(params, &inst.data, gnn::DEFAULT_FANOUT, sample_seed).unwrap();
    gnn::cross_entropy(&logits, &inst.labels, &inst.mask)
        .unwrap()
        .0
}

/// Largest element-wise relative error between analytic gradients and
/// central differences with step `1e-5`. Denominators are floored at `1e-7`.
pub fn max_gradient_error(inst: &Instance, sample_seed: u64) -> f64 {
    let h = 1e-5;
    let (logits, cache) =
        gnn::forward(&inst.params, &inst.data, gnn::DEFAULT_FANOUT, sample_seed).unwrap();
    let (_, grads) = gnn::loss_and_grads(
        &inst.params,
        &inst.data,
        &logits,
        &cache,
        &inst.labels,
        &inst.mask,
    )
    .unwrap();
    let mut worst = 0.0f64;
    for k in 0..4 {
        let shape = inst.params.tensors()[k].dim();
        for r in 0..shape.0 {
            for c in 0..shape.1 {
                let mut plus = inst.params.clone();
                plus.tensors_mut()[k][[r, c]] += h;
                let mut minus = inst.params.clone();
                minus.tensors_mut()[k][[r, c]] -= h;
                let numeric = (loss_at(inst, &plus, sample_seed)
                    - loss_at(inst, &minus, sample_seed))
                    / (2.0 * h);
                let analytic = grads.tensors()[k][[r, c]];
                let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
                worst = worst.max(err);
            }
        }
    }
    worst
}
