//! Central finite-difference validation of analytic gradients.

use super::{real, Graph, ParamStore, Real, Var};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub tolerance: f64,
    /// (parameter name, worst relative error over its elements)
    pub per_param: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.per_param.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() <= self.tolerance
    }
}

/// Compare the store's analytic gradients of a loss closure against
/// central finite differences elementwise.  The closure must be
/// deterministic; it builds a fresh graph over the store's parameters
/// and returns the graph with the scalar loss node.
///
/// Elementwise error is |a - n| / (max(|a|, |n|) + tolerance): relative
/// for gradients of ordinary size, absolute at tolerance^2 for entries
/// down at the finite-difference noise floor eta*|loss|/epsilon, which
/// no central difference can resolve relatively.
pub fn gradcheck<T: Real>(
    store: &mut ParamStore<T>,
    f: &mut dyn FnMut(&ParamStore<T>) -> (Graph<T>, Var),
    epsilon: f64,
    tolerance: f64,
) -> GradCheckReport {
    store.zero_grads();
    let analytic: Vec<(String, Vec<T>)> = {
        let (graph, loss) = f(store);
        graph.backward(loss).expect("scalar loss");
        store.accumulate(&graph);
        store.names().map(|n| (n.to_string(), store.grad(n).as_slice().to_vec())).collect()
    };
    store.zero_grads();

    let eps = real::<T>(epsilon);
    let mut eval = |store: &ParamStore<T>| -> f64 {
        let (graph, loss) = f(store);
        graph.item(loss).to_f64().expect("finite loss")
    };

    let mut per_param = Vec::with_capacity(analytic.len());
    for (name, grads) in &analytic {
        let mut worst = 0.0f64;
        for e in 0..grads.len() {
            store.perturb(name, e, eps);
            let plus = eval(store);
            store.perturb(name, e, -(eps + eps));
            let minus = eval(store);
            store.perturb(name, e, eps);
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = grads[e].to_f64().expect("finite gradient");
            let err = (a - numeric).abs() / (a.abs().max(numeric.abs()) + tolerance);
            worst = worst.max(err);
        }
        per_param.push((name.clone(), worst));
    }
    GradCheckReport { epsilon, tolerance, per_param }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::TensorData;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn composite_losses_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut s = ParamStore::<f64>::new();
        s.insert("a", TensorData::uniform(3, 4, 0.8, &mut rng)).unwrap();
        s.insert("b", TensorData::uniform(4, 2, 0.8, &mut rng)).unwrap();
        let report = gradcheck(
            &mut s,
            &mut |s| {
                let g = Graph::new();
                let a = s.var(&g, "a");
                let b = s.var(&g, "b");
                let h = g.tanh(g.matmul(a, b));
                let l = g.logsumexp(g.log_softmax(g.reshape(h, 6, 1)));
                (g, l)
            },
            1e-5,
            1e-4,
        );
        assert!(report.passed(), "max rel err {}", report.max_rel_err());
        assert_eq!(report.per_param.len(), 2);
    }

    #[test]
    fn kinked_loss_fails_as_negative_control() {
        let mut s = ParamStore::<f64>::new();
        // exact tie: the max subgradient picks one side while central
        // differences average both, so the check must flag it
        s.insert("w", TensorData::column(vec![1.0, 1.0])).unwrap();
        let report = gradcheck(
            &mut s,
            &mut |s| {
                let g = Graph::new();
                let w = s.var(&g, "w");
                let l = g.max_reduce(w);
                (g, l)
            },
            1e-5,
            1e-4,
        );
        assert!(!report.passed());
    }
}
