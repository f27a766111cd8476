use std::collections::HashMap;

use ndarray::{s, Array2, Axis};
use rand::seq::index;

use super::model::{Arch, ModelParams};
use crate::error::{Error, Result};
use crate::graph::{ClientGraph, NodeId};
use crate::seed;

pub const DEFAULT_FANOUT: usize = 5;

/// Row-indexed neighbor lists over a fixed node order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborLists {
    lists: Vec<Vec<usize>>,
}

impl NeighborLists {
    pub fn new(lists: Vec<Vec<usize>>) -> Self {
        Self { lists }
    }

    /// Neighbors of each `order[r]` that are themselves in `order`.
    pub fn from_graph(graph: &ClientGraph, order: &[NodeId]) -> Self {
        let index: HashMap<NodeId, usize> =
            order.iter().enumerate().map(|(r, &id)| (id, r)).collect();
        let lists = order
            .iter()
            .map(|&id| {
                graph
                    .neighbors(id)
                    .iter()
                    .filter_map(|(nb, _)| index.get(nb).copied())
                    .collect()
            })
            .collect();
        Self { lists }
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn of(&self, r: usize) -> &[usize] {
        &self.lists[r]
    }

    /// Up to `fanout` neighbors per row, drawn without replacement; rows with
    /// degree at most `fanout` keep all neighbors.
    pub fn sample(&self, fanout: usize, seed: u64) -> Vec<Vec<usize>> {
        let mut rng = seed::rng(seed);
        self.lists
            .iter()
            .map(|nbrs| {
                if nbrs.len() <= fanout {
                    nbrs.clone()
                } else {
                    index::sample(&mut rng, nbrs.len(), fanout)
                        .into_iter()
                        .map(|i| nbrs[i])
                        .collect()
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SageCache {
    /// `[x_v ‖ mean of sampled neighbor features]`
    pub concat: Array2<f64>,
    pub z1: Array2<f64>,
    pub h: Array2<f64>,
}

/// Mean of the sampled neighbors' rows of `x`; zero for empty samples.
pub fn mean_aggregate(x: &Array2<f64>, sampled: &[Vec<usize>]) -> Array2<f64> {
    let mut out = Array2::zeros((sampled.len(), x.ncols()));
    for (r, nbrs) in sampled.iter().enumerate() {
        if nbrs.is_empty() {
            continue;
        }
        let mut row = out.row_mut(r);
        for &c in nbrs {
            row += &x.row(c);
        }
        row /= nbrs.len() as f64;
    }
    out
}

/// `h = ReLU([x_v ‖ mean(x_u : u ∈ sample(N(v)))] · W1 + b1)`,
/// `logits = h · W2 + b2`.
pub fn sage_forward(
    params: &ModelParams,
    neighbors: &NeighborLists,
    x: &Array2<f64>,
    fanout: usize,
    seed: u64,
) -> Result<(Array2<f64>, SageCache)> {
    if params.arch != Arch::Sage {
        return Err(Error::ShapeMismatch(
            "sage_forward needs sage parameters".into(),
        ));
    }
    if fanout == 0 {
        return Err(Error::InvalidArgument("fanout must be at least 1".into()));
    }
    if x.nrows() != neighbors.len() || 2 * x.ncols() != params.w1.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "features {:?}, {} neighbor lists, w1 {:?}",
            x.dim(),
            neighbors.len(),
            params.w1.dim()
        )));
    }
    let hn = mean_aggregate(x, &neighbors.sample(fanout, seed));
    let f = x.ncols();
    let mut concat = Array2::zeros((x.nrows(), 2 * f));
    concat.slice_mut(s![.., ..f]).assign(x);
    concat.slice_mut(s![.., f..]).assign(&hn);
    let z1 = concat.dot(&params.w1) + &params.b1;
    let h = super::gcn::relu(&z1);
    let logits = h.dot(&params.w2) + &params.b2;
    Ok((logits, SageCache { concat, z1, h }))
}

pub(super) fn sage_backward(
    params: &ModelParams,
    cache: &SageCache,
    dlogits: &Array2<f64>,
) -> ModelParams {
    let w2 = cache.h.t().dot(dlogits);
    let b2 = dlogits.sum_axis(Axis(0)).insert_axis(Axis(0));
    let mut dz1 = dlogits.dot(&params.w2.t());
    dz1.zip_mut_with(&cache.z1, |g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
    let w1 = cache.concat.t().dot(&dz1);
    let b1 = dz1.sum_axis(Axis(0)).insert_axis(Axis(0));
    ModelParams {
        arch: params.arch,
        w1,
        b1,
        w2,
        b2,
    }
}
