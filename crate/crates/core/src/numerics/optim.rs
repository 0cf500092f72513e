use serde::{Deserialize, Serialize};

use crate::error::{shape, Result};

use super::{Real, Tensor};

/// Adam moments and hyperparameters for a list of parameter tensors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &[Tensor<T>], lr: f64) -> Self {
        Self {
            step: 0,
            m: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.len()]).collect(),
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update, in place. Increments `state.step`.
pub fn adam_step<T: Real>(params: &mut [Tensor<T>], grads: &[Vec<T>], state: &mut AdamState<T>) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(shape(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.m[i].len() || p.len() != state.v[i].len() {
            return Err(shape(format!(
                "adam: parameter {i} has {} entries but gradient has {}",
                p.len(),
                g.len()
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(state.beta1), T::lit(state.beta2));
    let bc1 = T::lit(1.0 - state.beta1.powi(t));
    let bc2 = T::lit(1.0 - state.beta2.powi(t));
    let lr = T::lit(state.lr);
    let eps = T::lit(state.eps);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + (T::one() - b1) * gi;
            *vi = b2 * *vi + (T::one() - b2) * gi * gi;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *w -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Scales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Real>(grads: &mut [Vec<T>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flatten()
        .map(|g| g.as_f64() * g.as_f64())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = T::lit(max_norm / norm);
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}

/// Linear warmup followed by cosine decay to `min_ratio * base`.
pub fn cosine_lr(base: f64, step: u64, total: u64, warmup: u64, min_ratio: f64) -> f64 {
    if warmup > 0 && step < warmup {
        return base * (step + 1) as f64 / warmup as f64;
    }
    if total <= warmup {
        return base;
    }
    let progress = ((step - warmup) as f64 / (total - warmup) as f64).min(1.0);
    let cos = 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
    base * (min_ratio + (1.0 - min_ratio) * cos)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut params = vec![Tensor::from_vec(vec![0.5f64, -1.0])];
        let mut st = AdamState::new(&params, 1e-3);
        for _ in 0..5 {
            adam_step(&mut params, &[vec![0.0, 0.0]], &mut st).unwrap();
        }
        assert_eq!(params[0].data(), &[0.5, -1.0]);
        assert_eq!(st.step, 5);
    }

    #[test]
    fn constant_gradient_moves_against_its_sign() {
        let mut params = vec![Tensor::from_vec(vec![0.0f64, 0.0])];
        let mut st = AdamState::new(&params, 1e-2);
        for _ in 0..100 {
            adam_step(&mut params, &[vec![3.0, -0.2]], &mut st).unwrap();
        }
        assert!(params[0].data()[0] < -0.5);
        assert!(params[0].data()[1] > 0.5);
    }

    #[test]
    fn first_step_matches_hand_evaluation() {
        // m1 = 0.1 g, v1 = 0.001 g^2; mhat = g, vhat = g^2.
        let g = 0.37f64;
        let lr = 3e-4;
        let mut params = vec![Tensor::from_vec(vec![1.0f64])];
        let mut st = AdamState::new(&params, lr);
        adam_step(&mut params, &[vec![g]], &mut st).unwrap();
        let m1 = 0.1 * g;
        let v1 = 0.001 * g * g;
        let mhat = m1 / (1.0 - 0.9);
        let vhat = v1 / (1.0 - 0.999);
        let want = 1.0 - lr * mhat / (vhat.sqrt() + 1e-8);
        assert!((params[0].data()[0] - want).abs() < 1e-15);
        assert!((params[0].data()[0] - (1.0 - lr * g / (g.abs() + 1e-8))).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut params = vec![Tensor::from_vec(vec![0.0f64, 0.0])];
        let mut st = AdamState::new(&params, 1e-3);
        assert!(adam_step(&mut params, &[vec![1.0]], &mut st).is_err());
        assert!(adam_step(&mut params, &[], &mut st).is_err());
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut g = vec![vec![3.0f64], vec![4.0]];
        let n = clip_grad_norm(&mut g, 1.0);
        assert_eq!(n, 5.0);
        assert!((g[0][0] - 0.6).abs() < 1e-15 && (g[1][0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(cosine_lr(1.0, 0, 100, 0, 0.0), 1.0);
        assert!(cosine_lr(1.0, 100, 100, 0, 0.1) - 0.1 < 1e-12);
        assert!((cosine_lr(1.0, 50, 100, 0, 0.0) - 0.5).abs() < 1e-12);
        assert!((cosine_lr(1.0, 4, 100, 10, 0.0) - 0.5).abs() < 1e-12);
    }
}
