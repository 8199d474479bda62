use super::nn::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Gradients are validated first, so on a
/// non-finite gradient nothing is modified and the offending parameter is named.
pub fn adam_step(store: &mut ParamStore, grads: &[Vec<f64>], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(Error::ShapeError(format!(
            "{} gradients and {} moment slots for {} parameters",
            grads.len(),
            state.m.len(),
            store.len()
        )));
    }
    for (id, g) in store.ids().zip(grads) {
        if g.len() != store.get(id).len() {
            return Err(Error::ShapeError(format!("gradient size for {}", store.name(id))));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::OptimizerError {
                param: store.name(id).to_string(),
            });
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - cfg.beta1.powf(t);
    let c2 = 1.0 - cfg.beta2.powf(t);
    for ((id, g), (m, v)) in store.ids().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        let p = &mut store.get_mut(id).data;
        for i in 0..g.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            p[i] -= cfg.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = ParamStore::new();
        s.add("x", Tensor::row(vec![1.0, -1.0]));
        let mut st = AdamState::new(&s);
        let cfg = AdamConfig { lr: 0.1, ..Default::default() };
        adam_step(&mut s, &[vec![2.0, -0.5]], &mut st, &cfg).unwrap();
        let x = &s.get(crate::autodiff::ParamId(0)).data;
        assert!((x[0] - 0.9).abs() < 1e-7);
        assert!((x[1] + 0.9).abs() < 1e-7);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut s = ParamStore::new();
        s.add("head.0.w", Tensor::row(vec![1.0]));
        let mut st = AdamState::new(&s);
        let err = adam_step(&mut s, &[vec![f64::NAN]], &mut st, &AdamConfig::default()).unwrap_err();
        assert!(matches!(err, Error::OptimizerError { ref param } if param == "head.0.w"));
        assert_eq!(st.step, 0);
        assert_eq!(s.get(crate::autodiff::ParamId(0)).data, vec![1.0]);
    }
}
