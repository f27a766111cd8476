use std::collections::HashMap;

use ndarray::Array2;

use crate::graph::{ClientGraph, NodeId};

/// `D^{-1/2} (A + I) D^{-1/2}` in CSR form, where `A` holds edge weights and
/// `D` the row sums of `A + I`. Row `r` corresponds to `order[r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    /// Sparse-dense product `self · x`.
    pub fn matmul(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.n, "adjacency/feature row mismatch");
        let mut out = Array2::zeros((self.n, x.ncols()));
        for r in 0..self.n {
            let mut dst = out.row_mut(r);
            for (c, v) in self.row(r) {
                dst.scaled_add(v, &x.row(c));
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::zeros((self.n, self.n));
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                d[[r, c]] = v;
            }
        }
        d
    }
}

/// Builds the normalized adjacency over `order`. Ids in `order` that are not
/// in the graph get a self-loop only; edges leaving `order` are ignored.
pub fn normalized_adjacency_over(graph: &ClientGraph, order: &[NodeId]) -> NormalizedAdjacency {
    let index: HashMap<NodeId, usize> = order.iter().enumerate().map(|(r, &id)| (id, r)).collect();
    let rows: Vec<Vec<(usize, f64)>> = order
        .iter()
        .enumerate()
        .map(|(r, &id)| {
            let mut row: Vec<(usize, f64)> = graph
                .neighbors(id)
                .iter()
                .filter_map(|&(nb, w)| index.get(&nb).map(|&c| (c, w)))
                .collect();
            row.push((r, 1.0));
            row.sort_by_key(|&(c, _)| c);
            row
        })
        .collect();
    let degree: Vec<f64> = rows
        .iter()
        .map(|row| row.iter().map(|&(_, w)| w).sum())
        .collect();
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();

    let mut indptr = Vec::with_capacity(order.len() + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    indptr.push(0);
    for (r, row) in rows.iter().enumerate() {
        for &(c, w) in row {
            indices.push(c);
            values.push(w * (inv_sqrt[r] * inv_sqrt[c]));
        }
        indptr.push(indices.len());
    }
    NormalizedAdjacency {
        n: order.len(),
        indptr,
        indices,
        values,
    }
}

/// Normalized adjacency over all vertices of `graph` in ascending id order.
pub fn normalized_adjacency(graph: &ClientGraph) -> NormalizedAdjacency {
    let order: Vec<NodeId> = graph.vertices().iter().copied().collect();
    normalized_adjacency_over(graph, &order)
}
