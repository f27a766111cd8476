use ndarray::{Array2, Axis};

use super::adjacency::NormalizedAdjacency;
use super::model::{Arch, ModelParams};
use crate::error::{Error, Result};

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GcnCache {
    /// `Â X`
    pub ax: Array2<f64>,
    pub z1: Array2<f64>,
    /// `Â ReLU(z1)`
    pub ah: Array2<f64>,
}

pub(super) fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v.max(0.0))
}

/// `logits = Â · ReLU(Â X W1 + b1) · W2 + b2`
pub fn gcn_forward(
    params: &ModelParams,
    adj: &NormalizedAdjacency,
    x: &Array2<f64>,
) -> Result<(Array2<f64>, GcnCache)> {
    if params.arch != Arch::Gcn {
        return Err(Error::ShapeMismatch(
            "gcn_forward needs gcn parameters".into(),
        ));
    }
    if x.nrows() != adj.len() || x.ncols() != params.w1.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "features {:?}, adjacency {}x{}, w1 {:?}",
            x.dim(),
            adj.len(),
            adj.len(),
            params.w1.dim()
        )));
    }
    let ax = adj.matmul(x);
    let z1 = ax.dot(&params.w1) + &params.b1;
    let ah = adj.matmul(&relu(&z1));
    let logits = ah.dot(&params.w2) + &params.b2;
    Ok((logits, GcnCache { ax, z1, ah }))
}

pub(super) fn gcn_backward(
    params: &ModelParams,
    adj: &NormalizedAdjacency,
    cache: &GcnCache,
    dlogits: &Array2<f64>,
) -> ModelParams {
    let w2 = cache.ah.t().dot(dlogits);
    let b2 = dlogits.sum_axis(Axis(0)).insert_axis(Axis(0));
    // Â is symmetric, so Âᵀ · g = Â · g.
    let dh = adj.matmul(&dlogits.dot(&params.w2.t()));
    let mut dz1 = dh;
    dz1.zip_mut_with(&cache.z1, |g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
    let w1 = cache.ax.t().dot(&dz1);
    let b1 = dz1.sum_axis(Axis(0)).insert_axis(Axis(0));
    ModelParams {
        arch: params.arch,
        w1,
        b1,
        w2,
        b2,
    }
}
