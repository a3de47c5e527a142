use super::params::{FactorDims, ParamTensors};

/// Adaptive moment estimation with bias correction.
pub(crate) struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: ParamTensors,
    v: ParamTensors,
}

impl Adam {
    pub fn new(dims: &FactorDims, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: ParamTensors::zeros(dims),
            v: ParamTensors::zeros(dims),
        }
    }

    pub fn update(&mut self, params: &mut ParamTensors, grads: &ParamTensors) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let targets = params.tensors_mut();
        let firsts = self.m.tensors_mut();
        let seconds = self.v.tensors_mut();
        let sources = grads.tensors();
        for (((( _, p), (_, m)), (_, v)), (_, g)) in
            targets.into_iter().zip(firsts).zip(seconds).zip(sources.iter())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Rescales `grads` in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub(crate) fn clip_global_norm(grads: &mut ParamTensors, max_norm: f64) -> f64 {
    let norm = grads.squared_norm().sqrt();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}
