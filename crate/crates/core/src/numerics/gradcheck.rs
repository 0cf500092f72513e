use crate::error::{shape, Result};

use super::{Graph, Tensor, Var};

/// Denominator floor of the relative error.
pub const GRAD_CHECK_EPS: f64 = 1e-8;

/// Compares the tape gradient of a scalar function against central finite
/// differences with step `h`.
///
/// Returns `max_i |analytic_i - numeric_i| / (|analytic_i| + |numeric_i| + eps)`.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, h: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let eval = |input: Tensor<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let v = g.constant(input);
        let out = f(&mut g, v)?;
        scalar(&g, out)
    };

    let mut g = Graph::new();
    let v = g.param(x.clone());
    let out = f(&mut g, v)?;
    scalar(&g, out)?;
    g.backward(out)?;
    let analytic = g
        .grad(v)
        .map(<[f64]>::to_vec)
        .unwrap_or_else(|| vec![0.0; x.len()]);

    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = eval(probe.clone())?;
        probe.data_mut()[i] = orig - h;
        let down = eval(probe.clone())?;
        probe.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs() + GRAD_CHECK_EPS);
        worst = worst.max(err);
    }
    Ok(worst)
}

fn scalar(g: &Graph<f64>, v: Var) -> Result<f64> {
    let t = g.value(v);
    if t.len() != 1 {
        return Err(shape(format!(
            "grad_check needs a scalar function, got shape {:?}",
            t.shape()
        )));
    }
    Ok(t.data()[0])
}
