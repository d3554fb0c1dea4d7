//! Adam with coupled L2 weight decay.

use crate::tensor::Tensor;

/// Optimizer state for one list of parameters, in a fixed order.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl AdamState {
    /// Fresh state with standard moment constants (beta1 0.9, beta2 0.999,
    /// epsilon 1e-8).
    pub fn new(params: &[&Tensor], learning_rate: f64, weight_decay: f64) -> Self {
        assert!(weight_decay >= 0.0, "weight decay must be non-negative");
        AdamState {
            step_count: 0,
            first_moment: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            second_moment: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
            weight_decay,
        }
    }
}

/// One Adam update over congruent parameter/gradient lists. Weight decay is
/// coupled L2: the effective gradient is g + weight_decay * param.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[&Tensor], state: &mut AdamState) {
    assert_eq!(params.len(), grads.len(), "param/grad count mismatch");
    assert_eq!(params.len(), state.first_moment.len(), "param/state count mismatch");
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let p = params[i].data_mut();
        let g = grads[i].data();
        assert_eq!(p.len(), g.len(), "param/grad shape mismatch at index {i}");
        let m = state.first_moment[i].data_mut();
        let v = state.second_moment[i].data_mut();
        for j in 0..p.len() {
            let geff = g[j] + state.weight_decay * p[j];
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * geff;
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * geff * geff;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
}
