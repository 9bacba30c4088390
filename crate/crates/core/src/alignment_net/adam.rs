use serde::{Deserialize, Serialize};

use super::network::{AlignmentNetwork, NetworkShape, Parameters};
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step_count: u64,
    pub first_moment: Parameters<T>,
    pub second_moment: Parameters<T>,
}

impl<T: Real> AdamState<T> {
    pub fn new(shape: &NetworkShape) -> Self {
        Self {
            step_count: 0,
            first_moment: Parameters::zeros(shape),
            second_moment: Parameters::zeros(shape),
        }
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step<T: Real>(
    net: &mut AlignmentNetwork<T>,
    grads: &Parameters<T>,
    state: &mut AdamState<T>,
    config: &AdamConfig,
) -> Result<()> {
    if grads.len() != net.params().len() || state.first_moment.len() != grads.len() {
        return Err(Error::Dimension("gradient and parameter shapes differ".into()));
    }
    state.step_count += 1;
    let t = i32::try_from(state.step_count).unwrap_or(i32::MAX);
    let beta1 = T::lit(config.beta1);
    let beta2 = T::lit(config.beta2);
    let lr = T::lit(config.learning_rate);
    let eps = T::lit(config.eps);
    let correction1 = T::one() - beta1.powi(t);
    let correction2 = T::one() - beta2.powi(t);

    let params = net.params_mut().tensors_mut();
    let m = state.first_moment.tensors_mut();
    let v = state.second_moment.tensors_mut();
    for (((p, g), m), v) in params.into_iter().zip(grads.tensors()).zip(m).zip(v) {
        for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = beta1 * *m + (T::one() - beta1) * g;
            *v = beta2 * *v + (T::one() - beta2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment_net::AlignmentSource;

    fn net() -> AlignmentNetwork<f64> {
        let shape = NetworkShape {
            visual_dim: 3,
            text_dim: 2,
            hidden_dim: 4,
            source: AlignmentSource::VisualSemantic,
            leaky_slope: 0.01,
            use_bias: true,
        };
        AlignmentNetwork::init(shape, 1).unwrap()
    }

    fn filled(shape: &NetworkShape, value: f64) -> Parameters<f64> {
        let mut p = Parameters::zeros(shape);
        for t in p.tensors_mut() {
            t.fill(value);
        }
        p
    }

    fn deltas(before: &AlignmentNetwork<f64>, after: &AlignmentNetwork<f64>) -> Vec<f64> {
        before
            .params()
            .tensors()
            .iter()
            .zip(after.params().tensors())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| y - x).collect::<Vec<_>>())
            .collect()
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut n = net();
        let start = n.clone();
        let shape = *n.shape();
        let mut state = AdamState::new(&shape);
        let cfg = AdamConfig::default();
        adam_step(&mut n, &filled(&shape, 1.0), &mut state, &cfg).unwrap();
        // m_hat = g and v_hat = g^2, so the step is lr / (1 + eps)
        let expected = -1e-4 / (1.0 + 1e-8);
        for d in deltas(&start, &n) {
            assert!((d - expected).abs() < 1e-15, "{d} vs {expected}");
        }
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut n = net();
        let start = n.clone();
        let shape = *n.shape();
        let mut state = AdamState::new(&shape);
        adam_step(&mut n, &filled(&shape, 0.0), &mut state, &AdamConfig::default()).unwrap();
        assert_eq!(n, start);
        assert_eq!(state.step_count, 1);
    }

    #[test]
    fn constant_gradient_steps_do_not_grow() {
        let mut n = net();
        let shape = *n.shape();
        let mut state = AdamState::new(&shape);
        let cfg = AdamConfig::default();
        let g = filled(&shape, 0.37);
        let p0 = n.clone();
        adam_step(&mut n, &g, &mut state, &cfg).unwrap();
        let p1 = n.clone();
        adam_step(&mut n, &g, &mut state, &cfg).unwrap();
        // closed form for a constant gradient: both bias-corrected moments
        // equal g and g^2 exactly, so |delta_2| = |delta_1|
        for (d1, d2) in deltas(&p0, &p1).into_iter().zip(deltas(&p1, &n)) {
            assert!(d2.abs() <= d1.abs() * (1.0 + 1e-6));
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut n = net();
        let other = NetworkShape {
            hidden_dim: 5,
            ..*n.shape()
        };
        let mut state = AdamState::new(n.shape());
        let g = Parameters::<f64>::zeros(&other);
        assert!(adam_step(&mut n, &g, &mut state, &AdamConfig::default()).is_err());
    }
}
