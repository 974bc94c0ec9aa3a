//! Single-layer LSTM with exact backpropagation through time.
//!
//! Pre-activations are `z = b + x * W_in + h_prev * W_rec` with `W_in` of shape
//! `[input_dim x 4H]` and `W_rec` of shape `[H x 4H]`; the `4H` axis is split
//! into input, forget, candidate and output gate blocks, in that order.
//!
//! ```text
//! i = sigmoid(z_i)   f = sigmoid(z_f)   g = tanh(z_g)   o = sigmoid(z_o)
//! c = f * c_prev + i * g
//! h = o * tanh(c)
//! ```

use rand::Rng;

use super::{check_len, glorot_uniform, sigmoid, NnError, ParamSet, Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams<T: Real = f32> {
    pub input_weights: Tensor<T>,
    pub recurrent_weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> LstmParams<T> {
    /// Glorot-uniform weights, zero biases except the forget gate (1.0).
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let input_weights = glorot_uniform(input_dim, 4 * hidden, rng);
        let recurrent_weights = glorot_uniform(hidden, 4 * hidden, rng);
        let mut bias = Tensor::zeros(&[4 * hidden]);
        bias.data_mut()[hidden..2 * hidden].iter_mut().for_each(|b| *b = T::one());
        LstmParams { input_weights, recurrent_weights, bias }
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmParams {
            input_weights: Tensor::zeros(&[input_dim, 4 * hidden]),
            recurrent_weights: Tensor::zeros(&[hidden, 4 * hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn from_tensors(
        input_weights: Tensor<T>,
        recurrent_weights: Tensor<T>,
        bias: Tensor<T>,
    ) -> Result<Self, NnError> {
        let p = LstmParams { input_weights, recurrent_weights, bias };
        p.validate()?;
        Ok(p)
    }

    pub fn input_dim(&self) -> usize {
        self.input_weights.shape()[0]
    }

    pub fn hidden(&self) -> usize {
        self.recurrent_weights.shape()[0]
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_weights.shape().len() != 2 || self.recurrent_weights.shape().len() != 2 {
            return Err(NnError::BadTensor("LSTM weights must be 2-d".into()));
        }
        let h = self.hidden();
        self.input_weights.expect_shape("LSTM input weights", &[self.input_dim(), 4 * h])?;
        self.recurrent_weights.expect_shape("LSTM recurrent weights", &[h, 4 * h])?;
        self.bias.expect_shape("LSTM bias", &[4 * h])
    }
}

impl<T: Real> ParamSet<T> for LstmParams<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&str, &'a Tensor<T>)) {
        f("input_weights", &self.input_weights);
        f("recurrent_weights", &self.recurrent_weights);
        f("bias", &self.bias);
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        f("input_weights", &mut self.input_weights);
        f("recurrent_weights", &mut self.recurrent_weights);
        f("bias", &mut self.bias);
    }
}

/// Intermediates of one step, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStepCache<T: Real = f32> {
    pub x: Vec<T>,
    pub h_prev: Vec<T>,
    pub c_prev: Vec<T>,
    /// Post-activation gates `[i | f | g | o]`, length `4H`.
    pub gates: Vec<T>,
    pub c: Vec<T>,
    pub tanh_c: Vec<T>,
}

/// Per-step caches from [`lstm_forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct LstmTrace<T: Real = f32> {
    pub input_dim: usize,
    pub hidden: usize,
    pub steps: Vec<LstmStepCache<T>>,
}

/// `acc[j] += sum_k v[k] * m[k, j]` for a row-major `[v.len() x acc.len()]` matrix.
fn accumulate_vec_mat<T: Real>(acc: &mut [T], v: &[T], m: &[T]) {
    let width = acc.len();
    for (k, &vk) in v.iter().enumerate() {
        let row = &m[k * width..(k + 1) * width];
        for (a, &w) in acc.iter_mut().zip(row) {
            *a += vk * w;
        }
    }
}

#[allow(clippy::type_complexity)]
pub fn lstm_step<T: Real>(
    x: &[T],
    h_prev: &[T],
    c_prev: &[T],
    params: &LstmParams<T>,
) -> Result<(Vec<T>, Vec<T>, LstmStepCache<T>), NnError> {
    let hidden = params.hidden();
    check_len("LSTM input", x, params.input_dim())?;
    check_len("LSTM previous hidden state", h_prev, hidden)?;
    check_len("LSTM previous cell state", c_prev, hidden)?;

    let mut z = params.bias.data().to_vec();
    accumulate_vec_mat(&mut z, x, params.input_weights.data());
    accumulate_vec_mat(&mut z, h_prev, params.recurrent_weights.data());

    let (zi, rest) = z.split_at_mut(hidden);
    let (zf, rest) = rest.split_at_mut(hidden);
    let (zg, zo) = rest.split_at_mut(hidden);
    zi.iter_mut().for_each(|v| *v = sigmoid(*v));
    zf.iter_mut().for_each(|v| *v = sigmoid(*v));
    zg.iter_mut().for_each(|v| *v = v.tanh());
    zo.iter_mut().for_each(|v| *v = sigmoid(*v));

    let mut c = vec![T::zero(); hidden];
    let mut tanh_c = vec![T::zero(); hidden];
    let mut h = vec![T::zero(); hidden];
    for j in 0..hidden {
        c[j] = zf[j] * c_prev[j] + zi[j] * zg[j];
        tanh_c[j] = c[j].tanh();
        h[j] = zo[j] * tanh_c[j];
    }
    let cache = LstmStepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates: z,
        c: c.clone(),
        tanh_c,
    };
    Ok((h, c, cache))
}

/// Run the LSTM over `seq` (`[len x input_dim]`) from a zero state and return
/// the final hidden state.
pub fn lstm_forward<T: Real>(seq: &Tensor<T>, params: &LstmParams<T>) -> Result<(Vec<T>, LstmTrace<T>), NnError> {
    if seq.shape().len() != 2 {
        return Err(NnError::BadTensor(format!("LSTM input must be 2-d, got {:?}", seq.shape())));
    }
    let hidden = params.hidden();
    let mut h = vec![T::zero(); hidden];
    let mut c = vec![T::zero(); hidden];
    let mut steps = Vec::with_capacity(seq.rows());
    for t in 0..seq.rows() {
        let (h_next, c_next, cache) = lstm_step(seq.row(t), &h, &c, params)?;
        h = h_next;
        c = c_next;
        steps.push(cache);
    }
    if steps.is_empty() {
        return Err(NnError::EmptySequence);
    }
    Ok((h, LstmTrace { input_dim: params.input_dim(), hidden, steps }))
}

/// Backpropagate `d_last_h` (gradient of the loss w.r.t. the final hidden
/// state) through the unrolled sequence. Parameter gradients are accumulated
/// into `grads`; the gradient w.r.t. each input row is returned.
pub fn lstm_backward<T: Real>(
    params: &LstmParams<T>,
    trace: &LstmTrace<T>,
    d_last_h: &[T],
    grads: &mut LstmParams<T>,
) -> Result<Tensor<T>, NnError> {
    let hidden = params.hidden();
    let input_dim = params.input_dim();
    if trace.hidden != hidden || trace.input_dim != input_dim {
        return Err(NnError::StaleCache(format!(
            "trace built for {}x{}, parameters are {input_dim}x{hidden}",
            trace.input_dim, trace.hidden
        )));
    }
    if trace.steps.is_empty() {
        return Err(NnError::EmptySequence);
    }
    check_len("LSTM upstream gradient", d_last_h, hidden)?;
    grads.input_weights.expect_shape("LSTM input weight gradient", params.input_weights.shape())?;
    grads.recurrent_weights.expect_shape("LSTM recurrent weight gradient", params.recurrent_weights.shape())?;
    grads.bias.expect_shape("LSTM bias gradient", params.bias.shape())?;

    let width = 4 * hidden;
    let w_in = params.input_weights.data();
    let w_rec = params.recurrent_weights.data();
    let mut d_inputs = Tensor::zeros(&[trace.steps.len(), input_dim]);
    let mut dh = d_last_h.to_vec();
    let mut dc = vec![T::zero(); hidden];
    let mut dz = vec![T::zero(); width];
    let one = T::one();

    for (t, step) in trace.steps.iter().enumerate().rev() {
        let (gi, rest) = step.gates.split_at(hidden);
        let (gf, rest) = rest.split_at(hidden);
        let (gg, go) = rest.split_at(hidden);
        for j in 0..hidden {
            let d_o = dh[j] * step.tanh_c[j];
            let dc_total = dc[j] + dh[j] * go[j] * (one - step.tanh_c[j] * step.tanh_c[j]);
            let d_i = dc_total * gg[j];
            let d_g = dc_total * gi[j];
            let d_f = dc_total * step.c_prev[j];
            dc[j] = dc_total * gf[j];
            dz[j] = d_i * gi[j] * (one - gi[j]);
            dz[hidden + j] = d_f * gf[j] * (one - gf[j]);
            dz[2 * hidden + j] = d_g * (one - gg[j] * gg[j]);
            dz[3 * hidden + j] = d_o * go[j] * (one - go[j]);
        }

        let g_in = grads.input_weights.data_mut();
        for (k, &xk) in step.x.iter().enumerate() {
            if xk.is_zero() {
                continue;
            }
            for (g, &d) in g_in[k * width..(k + 1) * width].iter_mut().zip(&dz) {
                *g += xk * d;
            }
        }
        let g_rec = grads.recurrent_weights.data_mut();
        for (k, &hk) in step.h_prev.iter().enumerate() {
            if hk.is_zero() {
                continue;
            }
            for (g, &d) in g_rec[k * width..(k + 1) * width].iter_mut().zip(&dz) {
                *g += hk * d;
            }
        }
        for (g, &d) in grads.bias.data_mut().iter_mut().zip(&dz) {
            *g += d;
        }

        let dx = d_inputs.row_mut(t);
        for (k, slot) in dx.iter_mut().enumerate() {
            *slot = dot(&w_in[k * width..(k + 1) * width], &dz);
        }
        for (k, slot) in dh.iter_mut().enumerate() {
            *slot = dot(&w_rec[k * width..(k + 1) * width], &dz);
        }
    }
    Ok(d_inputs)
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
