use serde::{Deserialize, Serialize};

use super::param::ParamStore;

pub const CLIP_THRESHOLD: f64 = 40.0;

/// Rescales all gradients so their joint L2 norm is at most `threshold`.
/// Returns the norm before clipping.
pub fn clip_global_norm(store: &mut ParamStore, threshold: f64) -> f64 {
    let norm = store.grad_norm();
    if norm > threshold {
        let scale = threshold / norm;
        for p in store.iter_mut() {
            p.grad.scale_assign(scale);
        }
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
}

impl Default for Adam {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0 }
    }
}

impl Adam {
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for p in store.iter_mut() {
            let g = p.grad.data();
            let m = p.first_moment.data_mut();
            for (m, &g) in m.iter_mut().zip(g) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            }
            let v = p.second_moment.data_mut();
            for (v, &g) in v.iter_mut().zip(g) {
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            }
            let (m, v) = (p.first_moment.data(), p.second_moment.data());
            for ((theta, &m), &v) in p.value.data_mut().iter_mut().zip(m).zip(v) {
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                *theta -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

pub fn sgd_step(store: &mut ParamStore, lr: f64) {
    for p in store.iter_mut() {
        let g = p.grad.data().to_vec();
        for (theta, g) in p.value.data_mut().iter_mut().zip(g) {
            *theta -= lr * g;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Optimizer {
    Adam(Adam),
    Sgd,
}

impl Optimizer {
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) {
        match self {
            Optimizer::Adam(adam) => adam.step(store, lr),
            Optimizer::Sgd => sgd_step(store, lr),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn store_with(value: f64, grad: f64) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.add("theta", Tensor::scalar(value));
        s.get_mut(id).grad = Tensor::scalar(grad);
        s
    }

    #[test]
    fn adam_first_step() {
        // m_hat = 1, v_hat = 1 -> theta = -0.01 / (1 + 1e-8)
        let mut s = store_with(0.0, 1.0);
        let mut adam = Adam::default();
        adam.step(&mut s, 0.01);
        assert!((s.iter().next().unwrap().value.item() + 0.01).abs() < 1e-6);
        assert_eq!(adam.step, 1);
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut s = store_with(0.7, 0.0);
        Adam::default().step(&mut s, 0.01);
        assert_eq!(s.iter().next().unwrap().value.item(), 0.7);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut s = store_with(0.3, -0.2);
            let mut adam = Adam::default();
            for _ in 0..5 {
                adam.step(&mut s, 0.01);
            }
            (s, adam)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn sgd_arithmetic() {
        let mut s = store_with(1.0, 2.0);
        sgd_step(&mut s, 0.001);
        assert!((s.iter().next().unwrap().value.item() - 0.998).abs() < 1e-15);
        let mut s = store_with(1.0, 0.0);
        sgd_step(&mut s, 0.001);
        assert_eq!(s.iter().next().unwrap().value.item(), 1.0);
        let mut s = store_with(1.0, 2.0);
        sgd_step(&mut s, 0.0);
        assert_eq!(s.iter().next().unwrap().value.item(), 1.0);
    }

    fn two_param_store(g1: Vec<f64>, g2: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        let a = s.add("a", Tensor::zeros(&[g1.len()]));
        let b = s.add("b", Tensor::zeros(&[g2.len()]));
        s.get_mut(a).grad = Tensor::vector(g1);
        s.get_mut(b).grad = Tensor::vector(g2);
        s
    }

    #[test]
    fn clip_halves_norm_eighty() {
        let mut s = two_param_store(vec![48.0], vec![64.0, 0.0]);
        let before = clip_global_norm(&mut s, CLIP_THRESHOLD);
        assert!((before - 80.0).abs() < 1e-12);
        let grads: Vec<f64> = s.iter().flat_map(|p| p.grad.data().to_vec()).collect();
        assert_eq!(grads, vec![24.0, 32.0, 0.0]);
    }

    #[test]
    fn clip_leaves_small_and_zero_gradients() {
        let mut s = two_param_store(vec![6.0], vec![8.0]);
        clip_global_norm(&mut s, CLIP_THRESHOLD);
        assert_eq!(s.grad_norm(), 10.0);
        let mut z = two_param_store(vec![0.0], vec![0.0, 0.0]);
        clip_global_norm(&mut z, CLIP_THRESHOLD);
        assert_eq!(z.grad_norm(), 0.0);
    }

    proptest::proptest! {
        #[test]
        fn clipped_norm_never_exceeds_threshold(
            g in proptest::collection::vec(-1e4f64..1e4, 1..40),
        ) {
            let mut s = two_param_store(g.clone(), g);
            clip_global_norm(&mut s, CLIP_THRESHOLD);
            proptest::prop_assert!(s.grad_norm() <= CLIP_THRESHOLD + 1e-9);
        }
    }
}
