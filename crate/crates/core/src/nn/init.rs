use rand::Rng;

use super::{Real, Tensor};

/// Uniform in `[-limit, limit]` with `limit = sqrt(6 / (fan_in + fan_out))`,
/// where the fans are the two dimensions of a `[fan_in x fan_out]` matrix.
pub fn glorot_uniform<T: Real, R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(&[fan_in, fan_out], limit, rng)
}

pub fn uniform<T: Real, R: Rng + ?Sized>(shape: &[usize], limit: f64, rng: &mut R) -> Tensor<T> {
    let mut t = Tensor::zeros(shape);
    for x in t.data_mut() {
        *x = T::lit(rng.random_range(-limit..=limit));
    }
    t
}
