//! Named parameter tensors with gradient slots.
//!
//! Values sit behind `Arc`s so graphs can import them without copying; the
//! optimizer mutates them through `Arc::get_mut`, which requires that all
//! graphs referencing them have been dropped first.

use super::{Graph, Real, TensorData, TensorError, Var};
use indexmap::IndexMap;
use std::sync::Arc;

struct Param<T> {
    value: Arc<TensorData<T>>,
    grad: TensorData<T>,
    // whether any gradient has been accumulated since the last zeroing
    touched: bool,
}

pub struct ParamStore<T: Real> {
    params: IndexMap<String, Param<T>>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: IndexMap::new() }
    }

    pub fn insert(&mut self, name: &str, value: TensorData<T>) -> Result<(), TensorError> {
        if self.params.contains_key(name) {
            return Err(TensorError::DuplicateParam(name.to_string()));
        }
        let grad = TensorData::zeros(value.rows(), value.cols());
        self.params
            .insert(name.to_string(), Param { value: Arc::new(value), grad, touched: false });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn get(&self, name: &str) -> &Arc<TensorData<T>> {
        &self.params.get(name).unwrap_or_else(|| panic!("unknown parameter `{name}`")).value
    }

    /// Register the named parameter in `graph` and return its node.
    pub fn var(&self, graph: &Graph<T>, name: &str) -> Var {
        graph.param(name, self.get(name))
    }

    pub fn grad(&self, name: &str) -> &TensorData<T> {
        &self.params.get(name).unwrap_or_else(|| panic!("unknown parameter `{name}`")).grad
    }

    pub fn touched(&self, name: &str) -> bool {
        self.params.get(name).map(|p| p.touched).unwrap_or(false)
    }

    /// Pull gradients of every parameter registered in `graph` into the
    /// store, adding onto what is already there.
    pub fn accumulate(&mut self, graph: &Graph<T>) {
        for (name, var) in graph.registered_params() {
            if let Some(g) = graph.grad(var) {
                let p = self
                    .params
                    .get_mut(&name)
                    .unwrap_or_else(|| panic!("graph parameter `{name}` missing from store"));
                p.grad.add_assign(&g);
                p.touched = true;
            }
        }
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(T::zero());
            p.touched = false;
        }
    }

    pub fn global_grad_norm(&self) -> T {
        self.params.values().map(|p| p.grad.sum_of_squares()).sum::<T>().sqrt()
    }

    /// Scale all gradients so their global norm is at most `max_norm`;
    /// returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: T) -> T {
        let norm = self.global_grad_norm();
        if norm > max_norm {
            let s = max_norm / norm;
            for p in self.params.values_mut() {
                for g in p.grad.as_mut_slice() {
                    *g *= s;
                }
            }
        }
        norm
    }

    /// Mutable access to a parameter's values.  Panics if any graph still
    /// holds the parameter.
    pub fn value_mut(&mut self, name: &str) -> &mut TensorData<T> {
        let p = self.params.get_mut(name).unwrap_or_else(|| panic!("unknown parameter `{name}`"));
        Arc::get_mut(&mut p.value)
            .unwrap_or_else(|| panic!("parameter `{name}` still referenced by a live graph"))
    }

    /// In-place element nudge used by finite-difference checking; clones
    /// the storage if a graph still aliases it.
    pub fn perturb(&mut self, name: &str, elem: usize, delta: T) {
        let p = self.params.get_mut(name).unwrap_or_else(|| panic!("unknown parameter `{name}`"));
        Arc::make_mut(&mut p.value).as_mut_slice()[elem] += delta;
    }

    /// Replace a parameter's values, keeping its shape.
    pub fn load_value(&mut self, name: &str, value: TensorData<T>) -> Result<(), TensorError> {
        let p =
            self.params.get_mut(name).ok_or_else(|| TensorError::UnknownParam(name.to_string()))?;
        assert_eq!(
            p.value.shape(),
            value.shape(),
            "load_value `{name}`: {:?} vs {:?}",
            p.value.shape(),
            value.shape()
        );
        p.value = Arc::new(value);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Arc<TensorData<T>>)> {
        self.params.iter().map(|(n, p)| (n.as_str(), &p.value))
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(|p| p.value.all_finite())
    }
}
