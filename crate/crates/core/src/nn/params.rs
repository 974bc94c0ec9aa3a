use std::collections::BTreeMap;

use super::{NnError, Real, Tensor};

/// A collection of named trainable tensors. Visit order is fixed per type and
/// defines the on-disk tensor order.
pub trait ParamSet<T: Real> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&str, &'a Tensor<T>));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>));

    fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.visit_params(&mut |name, t| out.push((name.to_string(), t)));
        out
    }

    fn param(&self, name: &str) -> Option<&Tensor<T>> {
        let mut found = None;
        self.visit_params(&mut |n, t| {
            if n == name {
                found = Some(t);
            }
        });
        found
    }

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |_, t| n += t.len());
        n
    }

    fn zero_all(&mut self) {
        self.visit_params_mut(&mut |_, t| t.fill_zero());
    }

    /// CRC-32 over the little-endian bytes of every parameter, in visit order.
    fn parameter_checksum(&self) -> u32 {
        let mut hasher = crc32fast::Hasher::new();
        self.visit_params(&mut |name, t| {
            hasher.update(name.as_bytes());
            for x in t.data() {
                hasher.update(&x.to_f64().unwrap().to_le_bytes());
            }
        });
        hasher.finalize()
    }
}

/// Gradients keyed by parameter name, each shaped like its parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientStore<T: Real = f32> {
    grads: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> GradientStore<T> {
    pub fn zeros_for<P: ParamSet<T> + ?Sized>(params: &P) -> Self {
        let mut grads = BTreeMap::new();
        params.visit_params(&mut |name, t| {
            grads.insert(name.to_string(), t.zeros_like());
        });
        GradientStore { grads }
    }

    /// Copy a parameter-shaped gradient holder into a store.
    pub fn from_params<P: ParamSet<T> + ?Sized>(params: &P) -> Self {
        let mut grads = BTreeMap::new();
        params.visit_params(&mut |name, t| {
            grads.insert(name.to_string(), t.clone());
        });
        GradientStore { grads }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.grads.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.grads.get_mut(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.grads.insert(name.into(), t);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.grads.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.grads.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn global_norm(&self) -> f64 {
        self.grads.values().map(Tensor::sum_squares).sum::<f64>().sqrt()
    }

    pub fn is_all_zero(&self) -> bool {
        self.grads.values().all(|t| t.data().iter().all(|x| x.is_zero()))
    }

    /// Check keys and shapes match `params` exactly.
    pub fn check_matches<P: ParamSet<T> + ?Sized>(&self, params: &P) -> Result<(), NnError> {
        let mut count = 0;
        let mut problem = None;
        params.visit_params(&mut |name, t| {
            count += 1;
            match self.grads.get(name) {
                None => problem = problem.take().or(Some(format!("missing gradient for {name}"))),
                Some(g) if g.shape() != t.shape() => {
                    problem = problem.take().or(Some(format!(
                        "gradient {name} has shape {:?}, parameter {:?}",
                        g.shape(),
                        t.shape()
                    )))
                }
                Some(_) => {}
            }
        });
        if let Some(p) = problem {
            return Err(NnError::GradientKeys(p));
        }
        if count != self.grads.len() {
            return Err(NnError::GradientKeys(format!("{} gradients for {count} parameters", self.grads.len())));
        }
        Ok(())
    }
}

impl<T: Real> ParamSet<T> for GradientStore<T> {
    fn visit_params<'a>(&'a self, f: &mut dyn FnMut(&str, &'a Tensor<T>)) {
        for (k, v) in &self.grads {
            f(k, v);
        }
    }

    fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>)) {
        for (k, v) in &mut self.grads {
            f(k, v);
        }
    }
}
