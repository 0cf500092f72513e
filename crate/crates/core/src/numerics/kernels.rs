//! Slice-level kernels shared by the pure operations and the tape.

use super::Real;

/// `c[m x n] += op(a)[m x k] * op(b)[k x n]`.
///
/// `a` is stored row-major as `[m, k]`, or as `[k, m]` when `a_trans` is set;
/// likewise `b` is `[k, n]` or `[n, k]`.
#[allow(clippy::too_many_arguments)]
pub fn gemm_acc<T: Real>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_trans: bool,
    b: &[T],
    b_trans: bool,
    c: &mut [T],
) {
    assert_eq!(a.len(), m * k, "gemm: lhs length");
    assert_eq!(b.len(), k * n, "gemm: rhs length");
    assert_eq!(c.len(), m * n, "gemm: output length");
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above pin each buffer to exactly the extent the
    // strides address, and `c` is uniquely borrowed.
    unsafe {
        T::raw_gemm(
            m,
            k,
            n,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Softmax over one row, reading only `row[..active]`; entries past
/// `active` are written as zero.
pub fn softmax_row<T: Real>(row: &[T], active: usize, out: &mut [T]) {
    let max = row[..active]
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for (o, &x) in out[..active].iter_mut().zip(&row[..active]) {
        *o = (x - max).exp();
        total += *o;
    }
    for o in &mut out[..active] {
        *o /= total;
    }
    for o in &mut out[active..] {
        *o = T::zero();
    }
}

/// Vector-Jacobian product of softmax for one row given its output `p`.
pub fn softmax_row_backward<T: Real>(p: &[T], dy: &[T], dx: &mut [T]) {
    let dot: T = p.iter().zip(dy).map(|(&a, &b)| a * b).sum();
    for ((g, &pi), &dyi) in dx.iter_mut().zip(p).zip(dy) {
        *g += pi * (dyi - dot);
    }
}

/// Stable `log(sum(exp(row)))`.
pub fn logsumexp<T: Real>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let total: T = row.iter().map(|&x| (x - max).exp()).sum();
    max + total.ln()
}

/// Normalises `x` into `xhat` (zero mean, unit variance) and returns the
/// reciprocal standard deviation.
pub fn normalize_row<T: Real>(x: &[T], eps: T, xhat: &mut [T]) -> T {
    let n = T::lit(x.len() as f64);
    let mean = x.iter().copied().sum::<T>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let rstd = T::one() / (var + eps).sqrt();
    for (h, &v) in xhat.iter_mut().zip(x) {
        *h = (v - mean) * rstd;
    }
    rstd
}

/// Input gradient of layer normalisation for one row, accumulated into `dx`.
/// `dxhat` is the upstream gradient already multiplied by the gain.
pub fn normalize_row_backward<T: Real>(xhat: &[T], rstd: T, dxhat: &[T], dx: &mut [T]) {
    let n = T::lit(xhat.len() as f64);
    let mean_d = dxhat.iter().copied().sum::<T>() / n;
    let mean_dx = dxhat.iter().zip(xhat).map(|(&a, &b)| a * b).sum::<T>() / n;
    for ((g, &d), &h) in dx.iter_mut().zip(dxhat).zip(xhat) {
        *g += rstd * (d - mean_d - h * mean_dx);
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

/// GeLU, tanh approximation.
pub fn gelu<T: Real>(x: T) -> T {
    let c = T::lit(GELU_C);
    let k = T::lit(GELU_K);
    let half = T::lit(0.5);
    half * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

pub fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::lit(GELU_C);
    let k = T::lit(GELU_K);
    let half = T::lit(0.5);
    let th = (c * (x + k * x * x * x)).tanh();
    half * (T::one() + th) + half * x * (T::one() - th * th) * c * (T::one() + T::lit(3.0) * k * x * x)
}
