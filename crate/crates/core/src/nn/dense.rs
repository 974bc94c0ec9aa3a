use rand::Rng;

use super::{check_len, glorot_uniform, NnError, ParamSet, Real, Tensor};

/// Probabilities are clamped to this before taking the log in [`cross_entropy`].
pub const PROB_FLOOR: f64 = 1e-12;

/// Output layer `logits = h * W + b` with `W` of shape `[hidden x classes]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<T: Real = f32> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> DenseParams<T> {
    pub fn new<R: Rng + ?Sized>(hidden: usize, classes: usize, rng: &mut R) -> Self {
        DenseParams { weights: glorot_uniform(hidden, classes, rng), bias: Tensor::zeros(&[classes]) }
    }

    pub fn zeros(hidden: usize, classes: usize) -> Self {
        DenseParams { weights: Tensor::zeros(&[hidden, classes]), bias: Tensor::zeros(&[classes]) }
    }

    pub fn from_tensors(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self, NnError> {
        if weights.shape().len() != 2 {
            return Err(NnError::BadTensor(format!("dense weights must be 2-d, got {:?}", weights.shape())));
        }
        bias.expect_shape("dense bias", &[weights.shape()[1]])?;
        Ok(DenseParams { weights, bias })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn classes(&self) -> usize {
        self.weights.shape()[1]
    }
}

impl<T: Real> ParamSet<T> for DenseParams<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&str, &'a Tensor<T>)) {
        f("weights", &self.weights);
        f("bias", &self.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        f("weights", &mut self.weights);
        f("bias", &mut self.bias);
    }
}

pub fn dense_logits<T: Real>(h: &[T], params: &DenseParams<T>) -> Result<Vec<T>, NnError> {
    check_len("dense input", h, params.input_dim())?;
    let classes = params.classes();
    let w = params.weights.data();
    let mut logits = params.bias.data().to_vec();
    for (k, &hk) in h.iter().enumerate() {
        for (l, &wk) in logits.iter_mut().zip(&w[k * classes..(k + 1) * classes]) {
            *l += hk * wk;
        }
    }
    Ok(logits)
}

/// Numerically stable softmax (the maximum logit is subtracted first).
pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn dense_softmax<T: Real>(h: &[T], params: &DenseParams<T>) -> Result<Vec<T>, NnError> {
    Ok(softmax(&dense_logits(h, params)?))
}

/// `-ln(max(probs[target], 1e-12))`.
pub fn cross_entropy<T: Real>(probs: &[T], target: usize) -> Result<T, NnError> {
    let p = *probs.get(target).ok_or(NnError::IndexOutOfRange { index: target, bound: probs.len() })?;
    Ok(-p.max(T::lit(PROB_FLOOR)).ln())
}

/// Backward pass of softmax + cross-entropy + dense. The clamp in
/// [`cross_entropy`] is ignored here: `d_logits = probs - onehot(target)`.
/// Accumulates parameter gradients and returns the gradient w.r.t. `h`.
pub fn dense_backward<T: Real>(
    params: &DenseParams<T>,
    h: &[T],
    probs: &[T],
    target: usize,
    grads: &mut DenseParams<T>,
) -> Result<Vec<T>, NnError> {
    let classes = params.classes();
    check_len("dense input", h, params.input_dim())?;
    check_len("softmax output", probs, classes)?;
    if target >= classes {
        return Err(NnError::IndexOutOfRange { index: target, bound: classes });
    }
    let mut d_logits = probs.to_vec();
    d_logits[target] -= T::one();
    Ok(dense_backward_logits(params, h, &d_logits, grads))
}

pub(crate) fn dense_backward_logits<T: Real>(
    params: &DenseParams<T>,
    h: &[T],
    d_logits: &[T],
    grads: &mut DenseParams<T>,
) -> Vec<T> {
    let classes = params.classes();
    let w = params.weights.data();
    let gw = grads.weights.data_mut();
    let mut d_h = vec![T::zero(); h.len()];
    for (k, &hk) in h.iter().enumerate() {
        let row = k * classes..(k + 1) * classes;
        for (g, &d) in gw[row.clone()].iter_mut().zip(d_logits) {
            *g += hk * d;
        }
        d_h[k] = w[row].iter().zip(d_logits).fold(T::zero(), |acc, (&wv, &d)| acc + wv * d);
    }
    for (g, &d) in grads.bias.data_mut().iter_mut().zip(d_logits) {
        *g += d;
    }
    d_h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_input_gives_uniform() {
        let p = DenseParams::<f64>::zeros(64, 42);
        let probs = dense_softmax(&[0.0; 64], &p).unwrap();
        assert!(probs.iter().all(|&x| (x - 1.0 / 42.0).abs() < 1e-15));
    }

    #[test]
    fn hand_softmax() {
        let probs = softmax(&[2f64.ln(), 0.0, 0.0]);
        for (p, e) in probs.iter().zip([0.5, 0.25, 0.25]) {
            assert!((p - e).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_entropy_values() {
        assert_eq!(cross_entropy(&[0.0, 1.0], 1).unwrap(), 0.0);
        let uniform = vec![1.0 / 42.0; 42];
        let ce: f64 = cross_entropy(&uniform, 7).unwrap();
        assert!((ce - 3.7376696).abs() < 1e-6);
        let clamped: f64 = cross_entropy(&[1.0, 0.0], 1).unwrap();
        assert!((clamped - 27.631021).abs() < 1e-5);
        assert!(matches!(cross_entropy(&[1.0f32], 1), Err(NnError::IndexOutOfRange { .. })));
    }

    #[test]
    fn shape_mismatch() {
        let p = DenseParams::<f32>::zeros(4, 3);
        assert!(dense_softmax(&[0.0; 3], &p).is_err());
        assert!(DenseParams::from_tensors(Tensor::<f32>::zeros(&[4, 3]), Tensor::zeros(&[4])).is_err());
    }

    proptest! {
        #[test]
        fn softmax_is_normalized_and_shift_invariant(
            logits in proptest::collection::vec(-30.0f64..30.0, 1..50),
            shift in -100.0f64..100.0,
        ) {
            let p = softmax(&logits);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
            let q = softmax(&shifted);
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }

        #[test]
        fn softmax_f32_sums_to_one(logits in proptest::collection::vec(-50.0f32..50.0, 42)) {
            let p = softmax(&logits);
            prop_assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }
}
