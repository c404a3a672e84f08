//! Named trainable parameters and the Adam optimizer.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use super::Tensor;
use crate::error::{Error, Result};

pub struct ParameterInner {
    pub name: String,
    value: RefCell<Tensor>,
    m: RefCell<Vec<f64>>,
    v: RefCell<Vec<f64>>,
}

/// A named leaf tensor with Adam moment buffers.
#[derive(Clone)]
pub struct Parameter(Rc<ParameterInner>);

impl Parameter {
    fn new(name: String, tensor: Tensor) -> Parameter {
        let n = tensor.len();
        Parameter(Rc::new(ParameterInner {
            name,
            value: RefCell::new(tensor),
            m: RefCell::new(vec![0.0; n]),
            v: RefCell::new(vec![0.0; n]),
        }))
    }

    pub fn name(&self) -> &str {
        &self.0.name
    }

    /// Current value as a graph leaf. Use this in every forward pass.
    pub fn tensor(&self) -> Tensor {
        self.0.value.borrow().clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.0.value.borrow().shape().to_vec()
    }

    pub fn len(&self) -> usize {
        self.0.value.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn zero_grad(&self) {
        self.0.value.borrow().zero_grad();
    }

    pub fn set_data(&self, data: Vec<f64>) {
        let shape = self.shape();
        *self.0.value.borrow_mut() = Tensor::leaf(shape, data);
    }
}

/// Ordered registry of parameters; registration order is deterministic.
#[derive(Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: BTreeMap<String, usize>,
    pub step: u64,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn register(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) -> Parameter {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name {}",
            name
        );
        let p = Parameter::new(name.to_string(), Tensor::leaf(shape, data));
        self.by_name.insert(name.to_string(), self.params.len());
        self.params.push(p.clone());
        p
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.by_name.get(name).map(|&i| &self.params[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.params.iter().map(|p| p.len()).sum()
    }

    pub fn zero_grads(&self) {
        for p in &self.params {
            p.zero_grad();
        }
    }

    /// One bias-corrected Adam step over all parameters; grads are then
    /// cleared. Parameters without a gradient are left untouched.
    pub fn adam_step(&mut self, lr: f64) {
        self.adam_step_with(lr, 0.9, 0.999, 1e-8)
    }

    pub fn adam_step_with(&mut self, lr: f64, beta1: f64, beta2: f64, eps: f64) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - beta1.powf(t);
        let bc2 = 1.0 - beta2.powf(t);
        for p in &self.params {
            let grad = match p.0.value.borrow().grad() {
                Some(g) => g,
                None => continue,
            };
            let mut m = p.0.m.borrow_mut();
            let mut v = p.0.v.borrow_mut();
            let mut data = p.0.value.borrow().data().to_vec();
            for i in 0..data.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                let mh = m[i] / bc1;
                let vh = v[i] / bc2;
                data[i] -= lr * mh / (vh.sqrt() + eps);
            }
            drop(m);
            drop(v);
            p.set_data(data);
        }
    }

    /// Snapshot of all parameter data, keyed by name.
    pub fn export(&self) -> BTreeMap<String, (Vec<usize>, Vec<f64>)> {
        self.params
            .iter()
            .map(|p| {
                (
                    p.name().to_string(),
                    (p.shape(), p.tensor().data().to_vec()),
                )
            })
            .collect()
    }

    /// Load data into existing parameters by name; shapes must match.
    pub fn import(&self, snapshot: &BTreeMap<String, (Vec<usize>, Vec<f64>)>) -> Result<()> {
        for p in &self.params {
            let (shape, data) = snapshot.get(p.name()).ok_or_else(|| {
                Error::validation(format!("checkpoint missing parameter {}", p.name()))
            })?;
            if *shape != p.shape() {
                return Err(Error::validation(format!(
                    "checkpoint shape mismatch for {}: {:?} vs {:?}",
                    p.name(),
                    shape,
                    p.shape()
                )));
            }
            p.set_data(data.clone());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ops;

    #[test]
    fn zero_grad_leaves_params_unchanged() {
        let mut store = ParamStore::new();
        let p = store.register("w", vec![2], vec![1.0, 2.0]);
        store.adam_step(0.1);
        assert_eq!(p.tensor().data(), &[1.0, 2.0]);
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        let mut store = ParamStore::new();
        let p = store.register("w", vec![1], vec![5.0]);
        let loss = p.tensor(); // d loss / d w = 1
        loss.backward().unwrap();
        store.adam_step(0.01);
        // bias-corrected first step is lr * g/|g| = lr
        assert!((p.tensor().data()[0] - (5.0 - 0.01)).abs() < 1e-9);
    }

    #[test]
    fn adam_decreases_quadratic() {
        let mut store = ParamStore::new();
        let p = store.register("x", vec![1], vec![1.0]);
        let mut prev = f64::INFINITY;
        for _ in 0..10 {
            let x = p.tensor();
            let f = ops::mul(&x, &x).unwrap();
            let val = f.value();
            assert!(val < prev);
            prev = val;
            f.backward().unwrap();
            store.adam_step(0.05);
            store.zero_grads();
        }
    }
}
