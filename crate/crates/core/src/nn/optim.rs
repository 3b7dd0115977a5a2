use super::{Gradients, ParamStore};
use crate::real::Real;

/// Adaptive-moment first-order optimizer with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: Vec<u64>,
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { beta1, beta2, eps, first: Vec::new(), second: Vec::new(), steps: Vec::new() }
    }

    /// Updates every parameter that has a gradient; others (frozen or unused) keep
    /// both their value and their moment estimates.
    pub fn step<T: Real>(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>, lr: f64) {
        if self.first.len() != params.len() {
            self.first = params.ids().map(|id| vec![0.0; params.get(id).len()]).collect();
            self.second = self.first.clone();
            self.steps = vec![0; params.len()];
        }
        for id in params.ids() {
            let Some(g) = grads.get(id) else { continue };
            self.steps[id.0] += 1;
            let t = self.steps[id.0] as i32;
            let c1 = 1.0 - self.beta1.powi(t);
            let c2 = 1.0 - self.beta2.powi(t);
            let (m, v) = (&mut self.first[id.0], &mut self.second[id.0]);
            for (((p, &g), m), v) in params.get_mut(id).data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                let g = g.to_f64_lossy();
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let update = lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
                *p = T::lit(p.to_f64_lossy() - update);
            }
        }
    }
}

impl Default for Adam {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}
