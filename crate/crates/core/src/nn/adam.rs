use super::{Gradients, ParamStore, Scalar};

/// Adam with bias correction and a fixed learning rate.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Apply one update. Parameters without a gradient are left untouched.
    pub fn step<T: Scalar>(&mut self, params: &mut ParamStore<T>, grads: &Gradients<T>) {
        if self.m.is_empty() {
            self.m = (0..params.len()).map(|i| vec![0.0; params.tensor(i).numel()]).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for idx in 0..params.len() {
            let Some(g) = grads.get(idx) else { continue };
            let (m, v) = (&mut self.m[idx], &mut self.v[idx]);
            let p = params.tensor_mut(idx);
            for (k, (pk, gk)) in p.data.iter_mut().zip(&g.data).enumerate() {
                let gk = gk.to_f64().unwrap_or(f64::NAN);
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let upd = self.lr * (m[k] / bc1) / ((v[k] / bc2).sqrt() + self.eps);
                *pk -= T::from_f64(upd).unwrap();
            }
        }
    }
}
