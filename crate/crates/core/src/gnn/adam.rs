use ndarray::{Array2, Zip};

use super::model::ModelParams;
use crate::error::Result;

pub const LEARNING_RATE: f64 = 0.005;

/// Bias-corrected Adam moments for one client's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: [Array2<f64>; 4],
    pub v: [Array2<f64>; 4],
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros = params.tensors().map(|t| Array2::zeros(t.raw_dim()));
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            lr: LEARNING_RATE,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    state: &mut AdamState,
) -> Result<()> {
    params.check_shape(grads)?;
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::model::Arch;

    #[test]
    fn zero_grads_leave_params() {
        let mut p = ModelParams::init(Arch::Gcn, 3, 4, 1);
        let before = p.clone();
        let mut st = AdamState::new(&p);
        let zeros = p.zeros_like();
        adam_step(&mut p, &zeros, &mut st).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn moments_decay_under_zero_grads() {
        let mut p = ModelParams::init(Arch::Gcn, 3, 4, 1);
        let mut st = AdamState::new(&p);
        let mut g = p.zeros_like();
        g.w1.fill(2.0);
        adam_step(&mut p, &g, &mut st).unwrap();
        let (m, v) = (st.m[0][[0, 0]], st.v[0][[0, 0]]);
        let zeros = p.zeros_like();
        adam_step(&mut p, &zeros, &mut st).unwrap();
        assert_eq!(st.m[0][[0, 0]], 0.9 * m);
        assert_eq!(st.v[0][[0, 0]], 0.999 * v);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = ModelParams::init(Arch::Gcn, 3, 4, 1);
        let before = p.clone();
        let mut g = p.zeros_like();
        g.w1.fill(1e3);
        g.w2.fill(-2.5);
        g.b1.fill(1e-2);
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st).unwrap();
        for (after, (old, grad)) in p
            .tensors()
            .iter()
            .zip(before.tensors().iter().zip(g.tensors()))
        {
            for ((a, o), gr) in after.iter().zip(old.iter()).zip(grad.iter()) {
                let expected = if *gr == 0.0 {
                    0.0
                } else {
                    -LEARNING_RATE * gr.signum()
                };
                assert!((a - o - expected).abs() < 1e-8, "{a} {o} {gr}");
            }
        }
    }

    #[test]
    fn shape_mismatch_errors() {
        let mut p = ModelParams::init(Arch::Gcn, 3, 4, 1);
        let g = ModelParams::init(Arch::Gcn, 5, 4, 1);
        let mut st = AdamState::new(&p);
        assert!(adam_step(&mut p, &g, &mut st).is_err());
    }
}
