use serde::{Deserialize, Serialize};

use super::dense::Dense2;
use super::params::{Grads, ParamSet};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coupled L2 penalty: `weight_decay · w` is added to the gradient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.003,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

/// First/second moment accumulators and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Dense2>,
    v: Vec<Dense2>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros: Vec<Dense2> = params
            .tensors()
            .iter()
            .map(|t| Dense2::zeros(t.rows(), t.cols()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self, id: usize) -> &Dense2 {
        &self.m[id]
    }

    pub fn second_moment(&self, id: usize) -> &Dense2 {
        &self.v[id]
    }
}

/// One bias-corrected Adam update of every tensor in `params`.
///
/// Gradients are validated before anything is written, so a divergence error
/// leaves both `params` and `state` untouched.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn adam_step(
    params: &mut ParamSet,
    grads: &Grads,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(Error::Config(format!(
            "optimizer state tracks {} tensors, parameters have {}",
            state.m.len(),
            params.len()
        )));
    }
    if !(cfg.lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be positive, got {}", cfg.lr)));
    }
    for id in 0..params.len() {
        if params.get(id).shape() != grads.get(id).shape()
            || params.get(id).shape() != state.m[id].shape()
        {
            return Err(Error::Dimension {
                op: "adam_step",
                left: params.get(id).shape(),
                right: grads.get(id).shape(),
            });
        }
        if !grads.get(id).is_finite() {
            return Err(Error::Divergence {
                param: params.name(id).to_string(),
            });
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for id in 0..params.len() {
        let w = params.get_mut(id).data_mut();
        let g = grads.get(id).data();
        let m = state.m[id].data_mut();
        let v = state.v[id].data_mut();
        for i in 0..w.len() {
            let gi = g[i] + cfg.weight_decay * w[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            w[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.push("w", Dense2::scalar(w));
        p
    }

    fn grad(p: &ParamSet, g: f64) -> Grads {
        let mut gr = Grads::zeros_like(p);
        gr.get_mut(0).set(0, 0, g);
        gr
    }

    fn no_decay() -> AdamConfig {
        AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        // t=1: m̂ = g, v̂ = g², so the update is lr · g / (|g| + eps).
        let mut p = single(1.0);
        let mut st = AdamState::new(&p);
        let g = grad(&p, 1.0);
        adam_step(&mut p, &g, &mut st, &no_decay()).unwrap();
        let expected = 1.0 - 0.003 / (1.0 + 1e-8);
        assert!((p.get(0).item() - expected).abs() < 1e-15);
        assert!((1.0 - p.get(0).item() - 0.003).abs() < 1e-10);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn zero_gradient_is_a_noop_apart_from_the_counter() {
        let mut p = single(0.7);
        let mut st = AdamState::new(&p);
        let g = grad(&p, 0.0);
        adam_step(&mut p, &g, &mut st, &no_decay()).unwrap();
        assert_eq!(p.get(0).item(), 0.7);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn second_update_not_larger_than_first() {
        let mut p = single(0.0);
        let mut st = AdamState::new(&p);
        let g = grad(&p, 0.37);
        let w0 = p.get(0).item();
        adam_step(&mut p, &g, &mut st, &no_decay()).unwrap();
        let w1 = p.get(0).item();
        adam_step(&mut p, &g, &mut st, &no_decay()).unwrap();
        let w2 = p.get(0).item();
        assert!((w2 - w1).abs() <= (w1 - w0).abs() + 1e-9);
    }

    #[test]
    fn weight_decay_enters_the_gradient() {
        let mut p = single(2.0);
        let mut st = AdamState::new(&p);
        let g = grad(&p, 0.0);
        let cfg = AdamConfig {
            weight_decay: 0.5,
            ..AdamConfig::default()
        };
        adam_step(&mut p, &g, &mut st, &cfg).unwrap();
        assert!(p.get(0).item() < 2.0);
        assert!(st.second_moment(0).item() > 0.0);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut p = single(1.0);
        let mut st = AdamState::new(&p);
        let g = grad(&p, f64::NAN);
        let err = adam_step(&mut p, &g, &mut st, &no_decay()).unwrap_err();
        assert!(matches!(err, Error::Divergence { ref param } if param == "w"));
        assert_eq!(st.step_count(), 0);
        assert_eq!(p.get(0).item(), 1.0);
    }
}
