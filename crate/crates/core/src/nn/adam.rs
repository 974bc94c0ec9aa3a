use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{NnError, ParamSet, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-7, clip_norm: Some(5.0) }
    }
}

/// First/second moment estimates per parameter and the step counter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState<T: Real = f32> {
    pub step: u64,
    first_moment: BTreeMap<String, Tensor<T>>,
    second_moment: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new() -> Self {
        AdamState { step: 0, first_moment: BTreeMap::new(), second_moment: BTreeMap::new() }
    }
}

/// Scale factor applied to every gradient for global-norm clipping.
pub fn clip_factor(norm: f64, clip_norm: Option<f64>) -> f64 {
    match clip_norm {
        Some(max) if norm > max => max / norm,
        _ => 1.0,
    }
}

/// One Adam update with bias correction:
///
/// ```text
/// m = b1 m + (1 - b1) g;   v = b2 v + (1 - b2) g^2
/// p -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
/// ```
///
/// `grads` must name exactly the parameters of `params`. Non-finite gradients
/// abort the step before anything is modified.
pub fn adam_step<T: Real, P: ParamSet<T> + ?Sized, G: ParamSet<T> + ?Sized>(
    params: &mut P,
    grads: &G,
    state: &mut AdamState<T>,
    config: &AdamConfig,
) -> Result<(), NnError> {
    let grad_list = grads.named_params();
    let mut names = Vec::new();
    params.visit_params(&mut |name, t| names.push((name.to_string(), t.shape().to_vec())));
    if names.len() != grad_list.len() {
        return Err(NnError::GradientKeys(format!("{} gradients for {} parameters", grad_list.len(), names.len())));
    }
    let mut sq_norm = 0.0;
    for (name, shape) in &names {
        let g = grads.param(name).ok_or_else(|| NnError::GradientKeys(format!("missing gradient for {name}")))?;
        if g.shape() != shape.as_slice() {
            return Err(NnError::ShapeMismatch {
                context: "Adam gradient",
                expected: shape.clone(),
                found: g.shape().to_vec(),
            });
        }
        if !g.is_finite() {
            return Err(NnError::NonFinite(format!("gradient of {name}")));
        }
        sq_norm += g.sum_squares();
    }
    let scale = T::lit(clip_factor(sq_norm.sqrt(), config.clip_norm));

    state.step += 1;
    let t = state.step as i32;
    let b1 = T::lit(config.beta1);
    let b2 = T::lit(config.beta2);
    let lr = T::lit(config.learning_rate);
    let eps = T::lit(config.epsilon);
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    let one = T::one();

    params.visit_params_mut(&mut |name, p| {
        let g = grads.param(name).expect("checked above");
        let m = state.first_moment.entry(name.to_string()).or_insert_with(|| p.zeros_like());
        let v = state.second_moment.entry(name.to_string()).or_insert_with(|| p.zeros_like());
        for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            let gs = gv * scale;
            *mv = b1 * *mv + (one - b1) * gs;
            *vv = b2 * *vv + (one - b2) * gs * gs;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    });
    Ok(())
}
