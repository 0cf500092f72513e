//! Tape-free versions of the core operations.

use crate::error::{invalid, shape, Error, Result};

use super::kernels;
use super::{Real, Tensor};

/// Variance epsilon used by every layer normalisation.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Softmax along `axis`, stabilised by subtracting the maximum.
pub fn softmax<T: Real>(x: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    if axis >= x.rank() {
        return Err(invalid(format!(
            "softmax axis {axis} out of range for rank {}",
            x.rank()
        )));
    }
    if x.data().iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("NaN in softmax input".into()));
    }
    let dims = x.shape();
    let len = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    let src = x.data();
    let mut out = vec![T::zero(); src.len()];
    let mut row = vec![T::zero(); len];
    let mut res = vec![T::zero(); len];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            for j in 0..len {
                row[j] = src[base + j * inner];
            }
            kernels::softmax_row(&row, len, &mut res);
            for j in 0..len {
                out[base + j * inner] = res[j];
            }
        }
    }
    Tensor::new(dims.to_vec(), out)
}

/// Layer normalisation over the last axis: `(x - mean) / sqrt(var + eps) * gain + bias`.
pub fn layer_norm<T: Real>(x: &Tensor<T>, gain: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let n = x.last_dim();
    if gain.len() != n || bias.len() != n {
        return Err(shape(format!(
            "layer_norm over {n} features with gain of {} and bias of {}",
            gain.len(),
            bias.len()
        )));
    }
    let eps = T::lit(LAYER_NORM_EPS);
    let mut out = vec![T::zero(); x.len()];
    for (row, o) in x.data().chunks(n).zip(out.chunks_mut(n)) {
        kernels::normalize_row(row, eps, o);
        for ((v, &g), &b) in o.iter_mut().zip(gain.data()).zip(bias.data()) {
            *v = *v * g + b;
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

/// Mean negative log-likelihood of `targets` over the rows selected by
/// `mask`. `logits` is `[rows, vocab]`.
pub fn cross_entropy<T: Real>(logits: &Tensor<T>, targets: &[usize], mask: &[bool]) -> Result<T> {
    let vocab = logits.last_dim();
    let rows = logits.len() / vocab;
    if targets.len() != rows || mask.len() != rows {
        return Err(shape(format!(
            "{rows} logit rows but {} targets and {} mask entries",
            targets.len(),
            mask.len()
        )));
    }
    let mut total = T::zero();
    let mut count = 0usize;
    for ((row, &t), &m) in logits.data().chunks(vocab).zip(targets).zip(mask) {
        if !m {
            continue;
        }
        if t >= vocab {
            return Err(invalid(format!("target id {t} >= vocabulary size {vocab}")));
        }
        total += kernels::logsumexp(row) - row[t];
        count += 1;
    }
    if count == 0 {
        return Err(invalid("cross_entropy mask selects no positions"));
    }
    Ok(total / T::lit(count as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_logits_give_uniform_probabilities() {
        let p = softmax(&Tensor::from_vec(vec![0.0f64; 3]), 0).unwrap();
        for &v in p.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let t = 7;
        let p = softmax(&Tensor::from_vec(vec![-41.25f64; t]), 0).unwrap();
        for &v in p.data() {
            assert!((v - 1.0 / t as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_errors() {
        let x = Tensor::from_vec(vec![0.0f64, f64::NAN]);
        assert!(softmax(&x, 0).is_err());
        assert!(softmax(&Tensor::from_vec(vec![0.0f64; 2]), 1).is_err());
    }

    #[test]
    fn softmax_matches_extended_precision_reference() {
        // Reference values from exp/sum evaluated with 50-digit arithmetic.
        let x = Tensor::from_vec(vec![0.3f64, -1.2, 2.5, 0.0, 1.7]);
        let want = [
            0.066_470_967_951_742_113,
            0.014_831_677_724_293_364,
            0.599_901_383_084_925_39,
            0.049_242_904_205_001_085,
            0.269_553_067_034_038_05,
        ];
        let p = softmax(&x, 0).unwrap();
        for (a, b) in p.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn softmax_along_inner_axis() {
        let x = Tensor::<f64>::from_fn(&[2, 3], |i| i as f64);
        let p = softmax(&x, 0).unwrap();
        for col in 0..3 {
            let s = p.at(&[0, col]) + p.at(&[1, col]);
            assert!((s - 1.0).abs() < 1e-15);
            assert!((p.at(&[1, col]) - 1.0 / (1.0 + (-3.0f64).exp())).abs() < 1e-15);
        }
    }

    #[test]
    fn layer_norm_cases() {
        let ones = Tensor::from_vec(vec![1.0f64; 4]);
        let zeros = Tensor::from_vec(vec![0.0f64; 4]);
        let y = layer_norm(&Tensor::from_vec(vec![5.0f64; 4]), &ones, &zeros).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));

        let g2 = Tensor::from_vec(vec![1.0f64; 2]);
        let b2 = Tensor::from_vec(vec![0.0f64; 2]);
        let y = layer_norm(&Tensor::from_vec(vec![1.0f64, -1.0]), &g2, &b2).unwrap();
        let expect = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((y.data()[0] - expect).abs() < 1e-15);
        assert!((y.data()[1] + expect).abs() < 1e-15);
    }

    #[test]
    fn layer_norm_matches_two_pass_oracle() {
        let x = [0.7f64, -2.3, 4.1, 0.05, 1.9, -0.6];
        let gain = [1.5f64, 0.5, -1.0, 2.0, 1.0, 0.25];
        let bias = [0.1f64, 0.0, -0.3, 0.2, 0.0, 1.0];
        let mean = x.iter().sum::<f64>() / 6.0;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 6.0;
        let y = layer_norm(
            &Tensor::from_vec(x.to_vec()),
            &Tensor::from_vec(gain.to_vec()),
            &Tensor::from_vec(bias.to_vec()),
        )
        .unwrap();
        for j in 0..6 {
            let want = (x[j] - mean) / (var + 1e-5).sqrt() * gain[j] + bias[j];
            assert!((y.data()[j] - want).abs() < 1e-13);
        }
    }

    #[test]
    fn cross_entropy_cases() {
        // Near-certain logits.
        let logits = Tensor::new(vec![2, 3], vec![800.0f64, 0.0, 0.0, 0.0, 0.0, 800.0]).unwrap();
        let loss = cross_entropy(&logits, &[0, 2], &[true, true]).unwrap();
        assert!(loss.abs() < 1e-300);

        let uniform = Tensor::new(vec![3, 4], vec![0.25f64; 12]).unwrap();
        let loss = cross_entropy(&uniform, &[0, 1, 3], &[true, false, true]).unwrap();
        assert!((loss - 4.0f64.ln()).abs() < 1e-15);

        assert!(cross_entropy(&uniform, &[0, 1, 3], &[false; 3]).is_err());
        assert!(cross_entropy(&uniform, &[0, 4, 3], &[true; 3]).is_err());
    }

    #[test]
    fn cross_entropy_matches_log_softmax_gather_oracle() {
        let data: Vec<f64> = (0..15).map(|i| ((i * 7 % 11) as f64 - 5.0) * 0.37).collect();
        let logits = Tensor::new(vec![3, 5], data.clone()).unwrap();
        let targets = [4usize, 0, 2];
        let mask = [true, true, false];
        let mut want = 0.0;
        for r in 0..2 {
            let row = &data[r * 5..(r + 1) * 5];
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            want += -(row[targets[r]].exp() / z).ln();
        }
        want /= 2.0;
        let got = cross_entropy(&logits, &targets, &mask).unwrap();
        assert!((got - want).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(v in proptest::collection::vec(-50.0f64..50.0, 1..32)) {
            let p = softmax(&Tensor::from_vec(v), 0).unwrap();
            let total: f64 = p.data().iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(p.data().iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn layer_norm_ignores_constant_shift(
            v in proptest::collection::vec(-10.0f64..10.0, 2..24),
            c in -100.0f64..100.0,
        ) {
            let n = v.len();
            let ones = Tensor::from_vec(vec![1.0; n]);
            let zeros = Tensor::from_vec(vec![0.0; n]);
            let a = layer_norm(&Tensor::from_vec(v.clone()), &ones, &zeros).unwrap();
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let b = layer_norm(&Tensor::from_vec(shifted), &ones, &zeros).unwrap();
            prop_assert!(a.max_abs_diff(&b) < 1e-9);
        }

        #[test]
        fn consistent_logits_beat_perturbed_ones(
            noise in proptest::collection::vec(-1.0f64..1.0, 12),
            target in 0usize..4,
        ) {
            let mut base = vec![0.0; 4];
            base[target] = 30.0;
            let clean = Tensor::new(vec![1, 4], base.clone()).unwrap();
            let l0 = cross_entropy(&clean, &[target], &[true]).unwrap();
            for k in 0..3 {
                let mut p = base.clone();
                for (j, v) in p.iter_mut().enumerate() {
                    *v += noise[k * 4 + j].abs();
                }
                p[target] = base[target] - noise[k * 4 + target].abs() - 1e-3;
                let l1 = cross_entropy(&Tensor::new(vec![1, 4], p).unwrap(), &[target], &[true]).unwrap();
                prop_assert!(l0 < l1);
            }
        }
    }
}
