//! Adam with bias correction.  Defaults: lr 0.001, beta1 0.9, beta2 0.999,
//! eps 1e-8.

use super::{real, ParamStore, Real, TensorData, TensorError};

pub struct AdamState<T: Real> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    step_count: u64,
    names: Vec<String>,
    m: Vec<TensorData<T>>,
    v: Vec<TensorData<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(store: &ParamStore<T>, lr: T) -> Self {
        let names: Vec<String> = store.names().map(|s| s.to_string()).collect();
        let m = names.iter().map(|n| zeros_like(store.get(n))).collect();
        let v = names.iter().map(|n| zeros_like(store.get(n))).collect();
        AdamState {
            lr,
            beta1: real(0.9),
            beta2: real(0.999),
            eps: real(1e-8),
            step_count: 0,
            names,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update over every parameter; gradients are zeroed afterwards.
    /// Errors if any parameter has had no gradient accumulated since the
    /// last step.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<(), TensorError> {
        for name in &self.names {
            if !store.touched(name) {
                return Err(TensorError::MissingGradient(name.clone()));
            }
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);
        for (i, name) in self.names.iter().enumerate() {
            let grad = store.grad(name).clone();
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            for ((mj, vj), &gj) in
                m.as_mut_slice().iter_mut().zip(v.as_mut_slice()).zip(grad.as_slice())
            {
                *mj = self.beta1 * *mj + (T::one() - self.beta1) * gj;
                *vj = self.beta2 * *vj + (T::one() - self.beta2) * gj * gj;
            }
            let theta = store.value_mut(name);
            for ((tj, &mj), &vj) in
                theta.as_mut_slice().iter_mut().zip(m.as_slice()).zip(v.as_slice())
            {
                let mhat = mj / bc1;
                let vhat = vj / bc2;
                *tj -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        store.zero_grads();
        Ok(())
    }
}

fn zeros_like<T: Real>(t: &TensorData<T>) -> TensorData<T> {
    TensorData::zeros(t.rows(), t.cols())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Graph;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut s = ParamStore::new();
        s.insert("w", TensorData::column(vec![1.0f64, -2.0])).unwrap();
        let mut opt = AdamState::new(&s, 0.001);
        let g = Graph::new();
        let w = s.var(&g, "w");
        let loss = g.scale(g.sum(w), 0.0);
        g.backward(loss).unwrap();
        s.accumulate(&g);
        drop(g);
        opt.step(&mut s).unwrap();
        assert_eq!(s.get("w").as_slice(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_lr() {
        let mut s = ParamStore::new();
        s.insert("w", TensorData::scalar(0.5f64)).unwrap();
        let mut opt = AdamState::new(&s, 0.001);
        let g = Graph::new();
        let w = s.var(&g, "w");
        let loss = g.sum(w);
        g.backward(loss).unwrap();
        s.accumulate(&g);
        drop(g);
        opt.step(&mut s).unwrap();
        // mhat = 1, vhat = 1 after bias correction, so the move is
        // lr / (1 + eps)
        let expect = 0.5 - 0.001 / (1.0 + 1e-8);
        assert!((s.get("w").as_slice()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn missing_gradient_is_an_error_naming_the_parameter() {
        let mut s = ParamStore::new();
        s.insert("translator.omega", TensorData::scalar(1.0f64)).unwrap();
        let mut opt = AdamState::new(&s, 0.001);
        match opt.step(&mut s) {
            Err(TensorError::MissingGradient(name)) => assert_eq!(name, "translator.omega"),
            other => panic!("expected missing-gradient error, got {other:?}"),
        }
    }

    #[test]
    fn moments_stay_finite_over_many_steps() {
        let mut s = ParamStore::new();
        s.insert("w", TensorData::column(vec![0.3f64, -0.7])).unwrap();
        let mut opt = AdamState::new(&s, 0.001);
        for _ in 0..10_000 {
            let g = Graph::new();
            let w = s.var(&g, "w");
            let loss = g.sum(g.tanh(w));
            g.backward(loss).unwrap();
            s.accumulate(&g);
            drop(g);
            opt.step(&mut s).unwrap();
        }
        assert!(s.all_finite());
        assert!(opt.m.iter().all(|t| t.all_finite()));
        assert!(opt.v.iter().all(|t| t.all_finite()));
        assert_eq!(opt.step_count(), 10_000);
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut s = ParamStore::new();
        s.insert("w", TensorData::column(vec![2.0f64, -3.0])).unwrap();
        let mut opt = AdamState::new(&s, 0.05);
        let mut first = None;
        let mut last = 0.0;
        for _ in 0..500 {
            let g = Graph::new();
            let w = s.var(&g, "w");
            let loss = g.sum(g.mul(w, w));
            g.backward(loss).unwrap();
            s.accumulate(&g);
            last = g.item(loss);
            first.get_or_insert(last);
            drop(g);
            opt.step(&mut s).unwrap();
        }
        assert!(last < first.unwrap() / 100.0, "loss {last} did not drop from {first:?}");
    }
}
