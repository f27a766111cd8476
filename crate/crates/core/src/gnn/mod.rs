//! Graph neural network learners: a one-hidden-layer GCN and a GraphSAGE
//! variant with a mean aggregator, both trained with softmax cross-entropy
//! and Adam. Gradients are derived by hand.

pub mod adam;
pub mod adjacency;
pub mod gcn;
pub mod model;
pub mod sage;

use ndarray::Array2;

pub use adam::{adam_step, AdamState, LEARNING_RATE};
pub use adjacency::{normalized_adjacency, normalized_adjacency_over, NormalizedAdjacency};
pub use gcn::{gcn_forward, GcnCache};
pub use model::{Arch, ModelParams, HIDDEN_UNITS, NUM_CLASSES};
pub use sage::{mean_aggregate, sage_forward, NeighborLists, SageCache, DEFAULT_FANOUT};

use crate::error::{Error, Result};
use crate::graph::{ClientGraph, NodeId};

/// Everything a model needs about one graph, over a fixed row order.
#[derive(Debug, Clone)]
pub struct GraphData {
    pub x: Array2<f64>,
    pub adj: NormalizedAdjacency,
    pub neighbors: NeighborLists,
}

impl GraphData {
    pub fn new(graph: &ClientGraph, order: &[NodeId], x: Array2<f64>) -> Self {
        assert_eq!(order.len(), x.nrows(), "one feature row per ordered node");
        Self {
            adj: normalized_adjacency_over(graph, order),
            neighbors: NeighborLists::from_graph(graph, order),
            x,
        }
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }
}

#[derive(Debug, Clone)]
pub enum ForwardCache {
    Gcn(GcnCache),
    Sage(SageCache),
}

/// Runs the architecture named by `params`. `seed` drives SAGE neighbor
/// sampling and is ignored by GCN.
pub fn forward(
    params: &ModelParams,
    data: &GraphData,
    fanout: usize,
    seed: u64,
) -> Result<(Array2<f64>, ForwardCache)> {
    match params.arch {
        Arch::Gcn => {
            gcn_forward(params, &data.adj, &data.x).map(|(l, c)| (l, ForwardCache::Gcn(c)))
        }
        Arch::Sage => sage_forward(params, &data.neighbors, &data.x, fanout, seed)
            .map(|(l, c)| (l, ForwardCache::Sage(c))),
    }
}

/// Row-wise softmax.
pub fn softmax(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    p
}

/// Probability of class 1 per row.
pub fn fraud_scores(logits: &Array2<f64>) -> Vec<f64> {
    softmax(logits).column(1).to_vec()
}

/// Mean softmax cross-entropy over `mask` rows (duplicates count again) and
/// its gradient with respect to the logits.
pub fn cross_entropy(
    logits: &Array2<f64>,
    labels: &[u8],
    mask: &[usize],
) -> Result<(f64, Array2<f64>)> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let probs = softmax(logits);
    let m = mask.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(logits.raw_dim());
    for &r in mask {
        let y = labels[r] as usize;
        let row = logits.row(r);
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        for c in 0..logits.ncols() {
            let target = if c == y { 1.0 } else { 0.0 };
            grad[[r, c]] += (probs[[r, c]] - target) / m;
        }
    }
    Ok((loss / m, grad))
}

/// Loss and exact parameter gradients for the forward pass that produced
/// `cache`.
pub fn loss_and_grads(
    params: &ModelParams,
    data: &GraphData,
    logits: &Array2<f64>,
    cache: &ForwardCache,
    labels: &[u8],
    mask: &[usize],
) -> Result<(f64, ModelParams)> {
    let (loss, dlogits) = cross_entropy(logits, labels, mask)?;
    let grads = match cache {
        ForwardCache::Gcn(c) => gcn::gcn_backward(params, &data.adj, c, &dlogits),
        ForwardCache::Sage(c) => sage::sage_backward(params, c, &dlogits),
    };
    Ok((loss, grads))
}
