//! The five positional-encoding schemes.
//!
//! Each scheme acts at a different point of the network:
//!
//! | scheme            | where                                         |
//! |-------------------|-----------------------------------------------|
//! | NoPE              | nowhere; logits are raw `q . k`               |
//! | sinusoidal APE    | added to token embeddings before layer 0      |
//! | T5 relative bias  | learned per-head bias on pre-softmax logits   |
//! | ALiBi             | fixed linear distance penalty on logits       |
//! | Rotary            | rotation of `q` and `k` in every layer        |

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::{Real, Tensor};

/// Default T5 bucket count.
pub const T5_NUM_BUCKETS: usize = 32;
/// Default T5 maximum distance.
pub const T5_MAX_DISTANCE: usize = 128;
/// Frequency base shared by sinusoidal APE and rotary.
pub const FREQ_BASE: f64 = 10_000.0;

/// Which positional encoding a model uses, with its static parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PositionalScheme {
    Nope,
    SinusoidalApe,
    T5RelativeBias {
        #[serde(default = "default_buckets")]
        num_buckets: usize,
        #[serde(default = "default_max_distance")]
        max_distance: usize,
    },
    Alibi,
    Rotary {
        #[serde(default = "default_base")]
        base: f64,
    },
}

fn default_buckets() -> usize {
    T5_NUM_BUCKETS
}

fn default_max_distance() -> usize {
    T5_MAX_DISTANCE
}

fn default_base() -> f64 {
    FREQ_BASE
}

impl PositionalScheme {
    pub fn t5() -> Self {
        Self::T5RelativeBias {
            num_buckets: T5_NUM_BUCKETS,
            max_distance: T5_MAX_DISTANCE,
        }
    }

    pub fn rotary() -> Self {
        Self::Rotary { base: FREQ_BASE }
    }

    /// All five schemes with default parameters, in reporting order.
    pub fn all() -> Vec<Self> {
        vec![
            Self::Nope,
            Self::SinusoidalApe,
            Self::t5(),
            Self::Alibi,
            Self::rotary(),
        ]
    }

    /// Stable short name used in file names and report keys.
    pub fn name(&self) -> &'static str {
        match self {
            Self::Nope => "nope",
            Self::SinusoidalApe => "sinusoidal_ape",
            Self::T5RelativeBias { .. } => "t5_relative_bias",
            Self::Alibi => "alibi",
            Self::Rotary { .. } => "rotary",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::all()
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| invalid(format!("unknown positional scheme `{name}`")))
    }

    /// Checks the scheme against the model geometry.
    pub fn validate(&self, model_dim: usize, num_heads: usize, head_dim: usize) -> Result<()> {
        match *self {
            Self::Nope | Self::Alibi => {
                if num_heads == 0 {
                    return Err(invalid("at least one head is required"));
                }
                Ok(())
            }
            Self::SinusoidalApe => ApeParams::new(model_dim).map(|_| ()),
            Self::T5RelativeBias {
                num_buckets,
                max_distance,
            } => T5Geometry::new(num_buckets, max_distance).map(|_| ()),
            Self::Rotary { base } => RotaryParams::new(head_dim, base).map(|_| ()),
        }
    }
}

impl fmt::Display for PositionalScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Sinusoidal APE geometry.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApeParams {
    pub model_dim: usize,
}

impl ApeParams {
    pub fn new(model_dim: usize) -> Result<Self> {
        if model_dim == 0 || model_dim % 2 != 0 {
            return Err(invalid(format!(
                "sinusoidal embedding needs an even positive width, got {model_dim}"
            )));
        }
        Ok(Self { model_dim })
    }
}

/// Sinusoidal position vector for position `j`:
/// `[sin(w_0 j), cos(w_0 j), sin(w_1 j), cos(w_1 j), ...]` with
/// `w_i = 10000^(-2i/d)`, `i = 0..d/2`.
///
/// Frequencies are indexed from zero as in the original Transformer; a
/// one-based index only relabels the frequencies.
pub fn sinusoidal_embedding(position: usize, d: usize) -> Result<Vec<f64>> {
    ApeParams::new(d)?;
    let j = position as f64;
    let mut out = Vec::with_capacity(d);
    for i in 0..d / 2 {
        let w = FREQ_BASE.powf(-2.0 * i as f64 / d as f64);
        out.push((w * j).sin());
        out.push((w * j).cos());
    }
    Ok(out)
}

/// `[seq_len, d]` table of sinusoidal embeddings for positions `0..seq_len`.
pub fn sinusoidal_table<T: Real>(seq_len: usize, d: usize) -> Result<Tensor<T>> {
    let mut data = Vec::with_capacity(seq_len * d);
    for j in 0..seq_len {
        data.extend(sinusoidal_embedding(j, d)?.into_iter().map(T::lit));
    }
    Tensor::new(vec![seq_len, d], data)
}

/// Validated `(num_buckets, max_distance)` pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct T5Geometry {
    pub num_buckets: usize,
    pub max_distance: usize,
}

impl T5Geometry {
    pub fn new(num_buckets: usize, max_distance: usize) -> Result<Self> {
        if num_buckets < 2 {
            return Err(invalid(format!("T5 needs at least 2 buckets, got {num_buckets}")));
        }
        if 2 * max_distance <= num_buckets {
            return Err(invalid(format!(
                "T5 max distance {max_distance} must exceed half the bucket count {num_buckets}"
            )));
        }
        Ok(Self {
            num_buckets,
            max_distance,
        })
    }

    pub fn bucket(&self, distance: usize) -> usize {
        bucket_unchecked(distance, self.num_buckets, self.max_distance)
    }
}

/// T5 relative bias parameters: geometry plus a `[num_heads, num_buckets]`
/// learned table.
#[derive(Clone, Debug, PartialEq)]
pub struct T5BiasParams<T> {
    pub geometry: T5Geometry,
    pub bias_table: Tensor<T>,
}

impl<T: Real> T5BiasParams<T> {
    pub fn new(geometry: T5Geometry, bias_table: Tensor<T>) -> Result<Self> {
        if bias_table.rank() != 2 || bias_table.shape()[1] != geometry.num_buckets {
            return Err(invalid(format!(
                "T5 bias table must be [heads, {}], got {:?}",
                geometry.num_buckets,
                bias_table.shape()
            )));
        }
        Ok(Self {
            geometry,
            bias_table,
        })
    }

    pub fn num_heads(&self) -> usize {
        self.bias_table.shape()[0]
    }
}

/// Maps a causal distance `t - i` to a T5 bucket.
///
/// Distances below `max_exact = floor(B / 2)` get their own bucket; larger
/// ones are log-spaced over the remaining `B - max_exact` buckets up to
/// `max_distance`, and everything beyond shares bucket `B - 1`.
pub fn t5_bucket(distance: i64, num_buckets: usize, max_distance: usize) -> Result<usize> {
    if distance < 0 {
        return Err(invalid(format!(
            "T5 bucket of negative distance {distance}; causal attention never looks ahead"
        )));
    }
    let geo = T5Geometry::new(num_buckets, max_distance)?;
    Ok(geo.bucket(distance as usize))
}

fn bucket_unchecked(n: usize, num_buckets: usize, max_distance: usize) -> usize {
    let max_exact = num_buckets / 2;
    if n < max_exact {
        return n;
    }
    let ratio = (n as f64 / max_exact as f64).ln() / (max_distance as f64 / max_exact as f64).ln();
    let large = max_exact + (ratio * (num_buckets - max_exact) as f64).floor() as usize;
    large.min(num_buckets - 1)
}

/// Flat indices into a `[heads, buckets]` table for a `[heads, T, T]` bias.
/// Entries above the diagonal point at bucket 0; causal masking discards them.
pub fn t5_bias_index(geometry: T5Geometry, num_heads: usize, seq_len: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(num_heads * seq_len * seq_len);
    for m in 0..num_heads {
        for t in 0..seq_len {
            for i in 0..seq_len {
                let b = if i <= t { geometry.bucket(t - i) } else { 0 };
                idx.push(m * geometry.num_buckets + b);
            }
        }
    }
    idx
}

/// `[heads, T, T]` bias; entries with `i > t` are `-inf`.
pub fn t5_bias_matrix<T: Real>(seq_len: usize, params: &T5BiasParams<T>) -> Result<Tensor<T>> {
    if seq_len == 0 {
        return Err(invalid("sequence length must be positive"));
    }
    let heads = params.num_heads();
    let table = params.bias_table.data();
    let nb = params.geometry.num_buckets;
    let mut data = Vec::with_capacity(heads * seq_len * seq_len);
    for m in 0..heads {
        for t in 0..seq_len {
            for i in 0..seq_len {
                data.push(if i <= t {
                    table[m * nb + params.geometry.bucket(t - i)]
                } else {
                    T::neg_infinity()
                });
            }
        }
    }
    Tensor::new(vec![heads, seq_len, seq_len], data)
}

/// ALiBi head slopes.
#[derive(Clone, Debug, PartialEq)]
pub struct AlibiParams {
    pub num_heads: usize,
    pub slopes: Vec<f64>,
}

impl AlibiParams {
    pub fn new(num_heads: usize) -> Result<Self> {
        Ok(Self {
            num_heads,
            slopes: alibi_slopes(num_heads)?,
        })
    }
}

/// Slope of head `m` (1-based) is `2^(-8 m / num_heads)`.
pub fn alibi_slopes(num_heads: usize) -> Result<Vec<f64>> {
    if num_heads < 1 {
        return Err(invalid("ALiBi needs at least one head"));
    }
    let h = num_heads as f64;
    Ok((1..=num_heads)
        .map(|m| (-8.0 * m as f64 / h).exp2())
        .collect())
}

/// `[heads, T, T]` ALiBi bias, `-(t - i) * slope_m`; entries with `i > t`
/// are `-inf`.
pub fn alibi_bias_matrix<T: Real>(seq_len: usize, params: &AlibiParams) -> Result<Tensor<T>> {
    if seq_len == 0 {
        return Err(invalid("sequence length must be positive"));
    }
    let mut data = Vec::with_capacity(params.num_heads * seq_len * seq_len);
    for &slope in &params.slopes {
        data.extend(alibi_head_bias::<T>(seq_len, slope, f64::NEG_INFINITY));
    }
    Tensor::new(vec![params.num_heads, seq_len, seq_len], data)
}

/// One head's `[T, T]` ALiBi bias with `masked` above the diagonal.
pub fn alibi_head_bias<T: Real>(seq_len: usize, slope: f64, masked: f64) -> Vec<T> {
    let mut out = Vec::with_capacity(seq_len * seq_len);
    for t in 0..seq_len {
        for i in 0..seq_len {
            out.push(T::lit(if i <= t {
                -((t - i) as f64) * slope
            } else {
                masked
            }));
        }
    }
    out
}

/// Rotary geometry: one angle per consecutive pair of a head vector.
#[derive(Clone, Debug, PartialEq)]
pub struct RotaryParams {
    pub head_dim: usize,
    pub thetas: Vec<f64>,
}

impl RotaryParams {
    /// `thetas[i] = base^(-2i/h)` for `i = 0..h/2`.
    pub fn new(head_dim: usize, base: f64) -> Result<Self> {
        if head_dim == 0 || head_dim % 2 != 0 {
            return Err(invalid(format!("rotary needs an even head dim, got {head_dim}")));
        }
        if !(base > 1.0) {
            return Err(invalid(format!("rotary base must exceed 1, got {base}")));
        }
        let thetas = (0..head_dim / 2)
            .map(|i| base.powf(-2.0 * i as f64 / head_dim as f64))
            .collect();
        Self::with_thetas(head_dim, thetas)
    }

    pub fn with_thetas(head_dim: usize, thetas: Vec<f64>) -> Result<Self> {
        if head_dim == 0 || head_dim % 2 != 0 || thetas.len() != head_dim / 2 {
            return Err(invalid("rotary needs an even head dim and one angle per pair"));
        }
        if thetas.iter().any(|&t| !(t > 0.0)) || thetas.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("rotary angles must be positive and strictly decreasing"));
        }
        Ok(Self { head_dim, thetas })
    }

    /// Cosine and sine tables of shape `[seq_len, h/2]` for positions `0..seq_len`.
    pub fn tables<T: Real>(&self, seq_len: usize) -> (Vec<T>, Vec<T>) {
        let mut cos = Vec::with_capacity(seq_len * self.thetas.len());
        let mut sin = Vec::with_capacity(seq_len * self.thetas.len());
        for t in 0..seq_len {
            for &theta in &self.thetas {
                let angle = t as f64 * theta;
                cos.push(T::lit(angle.cos()));
                sin.push(T::lit(angle.sin()));
            }
        }
        (cos, sin)
    }
}

/// Rotates each pair `(x[2i], x[2i+1])` by `position * thetas[i]`.
pub fn rotary_apply(x: &[f64], position: usize, params: &RotaryParams) -> Result<Vec<f64>> {
    if x.len() % 2 != 0 {
        return Err(invalid(format!("rotary input must have even length, got {}", x.len())));
    }
    if x.len() != params.head_dim {
        return Err(invalid(format!(
            "rotary input has {} entries but head dim is {}",
            x.len(),
            params.head_dim
        )));
    }
    let mut out = Vec::with_capacity(x.len());
    for (pair, &theta) in x.chunks(2).zip(&params.thetas) {
        let angle = position as f64 * theta;
        let (s, c) = angle.sin_cos();
        out.push(pair[0] * c - pair[1] * s);
        out.push(pair[0] * s + pair[1] * c);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoidal_at_origin_alternates_zero_one() {
        let p = sinusoidal_embedding(0, 8).unwrap();
        assert_eq!(p, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert!(sinusoidal_embedding(3, 7).is_err());
    }

    #[test]
    fn sinusoidal_first_frequency_is_one() {
        // w_0 = 10000^0 = 1.
        let p = sinusoidal_embedding(1, 2).unwrap();
        assert_eq!(p, vec![1.0f64.sin(), 1.0f64.cos()]);
    }

    #[test]
    fn sinusoidal_matches_per_frequency_oracle() {
        // sin/cos(10 * 10000^(-i/4)) for i = 0..4, evaluated independently.
        let want = [
            -0.544_021_110_889_369_8,
            -0.839_071_529_076_452_4,
            0.841_470_984_807_896_5,
            0.540_302_305_868_139_8,
            0.099_833_416_646_828_15,
            0.995_004_165_278_025_8,
            0.009_999_833_334_166_666,
            0.999_950_000_416_665_3,
        ];
        let got = sinusoidal_embedding(10, 8).unwrap();
        for (a, b) in got.iter().zip(want) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn sinusoidal_is_finite_far_out() {
        let p = sinusoidal_embedding(1_000_000, 128).unwrap();
        assert!(p.iter().all(|v| v.is_finite() && v.abs() <= 1.0));
    }

    #[test]
    fn t5_small_example() {
        let got: Vec<usize> = (0..10).map(|n| t5_bucket(n, 5, 6).unwrap()).collect();
        assert_eq!(got, vec![0, 1, 2, 3, 3, 4, 4, 4, 4, 4]);
        assert!(t5_bucket(-1, 5, 6).is_err());
        assert_eq!(t5_bucket(0, 32, 128).unwrap(), 0);
        assert!(t5_bucket(0, 1, 128).is_err());
        assert!(t5_bucket(0, 8, 4).is_err());
    }

    /// Threshold enumeration: bucket `max_exact + j` starts at the smallest
    /// distance `n` with `n >= max_exact * (D / max_exact)^(j / (B - max_exact))`.
    fn t5_threshold_oracle(n: usize, b: usize, d: usize) -> usize {
        let max_exact = b / 2;
        if n < max_exact {
            return n;
        }
        let span = (b - max_exact) as f64;
        let mut bucket = max_exact;
        for j in 1..(b - max_exact) {
            let edge = max_exact as f64 * (d as f64 / max_exact as f64).powf(j as f64 / span);
            if n as f64 >= edge - 1e-9 {
                bucket = max_exact + j;
            }
        }
        bucket
    }

    #[test]
    fn t5_default_geometry_matches_threshold_oracle() {
        for n in 0..400 {
            assert_eq!(
                t5_bucket(n as i64, 32, 128).unwrap(),
                t5_threshold_oracle(n, 32, 128),
                "distance {n}"
            );
        }
        // Spot values.
        assert_eq!(t5_bucket(15, 32, 128).unwrap(), 15);
        assert_eq!(t5_bucket(16, 32, 128).unwrap(), 16);
        assert_eq!(t5_bucket(32, 32, 128).unwrap(), 21);
        assert_eq!(t5_bucket(64, 32, 128).unwrap(), 26);
        assert_eq!(t5_bucket(127, 32, 128).unwrap(), 31);
        assert_eq!(t5_bucket(10_000, 32, 128).unwrap(), 31);
    }

    #[test]
    fn t5_bias_matrix_gathers_table() {
        let geo = T5Geometry::new(5, 6).unwrap();
        let identity = Tensor::new(vec![1, 5], vec![0.0f64, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let params = T5BiasParams::new(geo, identity).unwrap();
        let m = t5_bias_matrix(10, &params).unwrap();
        let expect = [0, 1, 2, 3, 3, 4, 4, 4, 4, 4];
        for t in 0..10 {
            for i in 0..10 {
                let v = m.at(&[0, t, i]);
                if i <= t {
                    assert_eq!(v, expect[t - i] as f64);
                } else {
                    assert_eq!(v, f64::NEG_INFINITY);
                }
            }
        }

        let one = t5_bias_matrix(1, &params).unwrap();
        assert_eq!(one.data(), &[0.0]);
    }

    #[test]
    fn t5_bias_matrix_matches_nested_loop_oracle() {
        let geo = T5Geometry::new(8, 20).unwrap();
        let table = Tensor::from_fn(&[3, 8], |i| ((i * 37 % 17) as f64 - 8.0) / 3.0);
        let params = T5BiasParams::new(geo, table.clone()).unwrap();
        let m = t5_bias_matrix(30, &params).unwrap();
        for h in 0..3 {
            for t in 0..30 {
                for i in 0..=t {
                    let b = t5_threshold_oracle(t - i, 8, 20);
                    assert_eq!(m.at(&[h, t, i]), table.at(&[h, b]));
                }
            }
        }
    }

    #[test]
    fn alibi_slopes_cases() {
        let s = alibi_slopes(8).unwrap();
        let want: Vec<f64> = (1..=8).map(|k| 1.0 / (1u32 << k) as f64).collect();
        assert_eq!(s, want);
        assert_eq!(alibi_slopes(1).unwrap(), vec![1.0 / 256.0]);
        assert!(alibi_slopes(0).is_err());
        let s16 = alibi_slopes(16).unwrap();
        for (m, v) in s16.iter().enumerate() {
            assert_eq!(*v, 2f64.powf(-(m as f64 + 1.0) / 2.0));
        }
    }

    #[test]
    fn alibi_matrix_cases() {
        let p = AlibiParams::new(8).unwrap();
        let m: Tensor<f64> = alibi_bias_matrix(12, &p).unwrap();
        for h in 0..8 {
            for t in 0..12 {
                assert_eq!(m.at(&[h, t, t]), 0.0);
            }
        }
        assert_eq!(m.at(&[0, 5, 2]), -1.5);
        for h in 0..8 {
            for t in 0..12 {
                for i in 0..12 {
                    let want = if i <= t {
                        -((t - i) as f64) * p.slopes[h]
                    } else {
                        f64::NEG_INFINITY
                    };
                    assert_eq!(m.at(&[h, t, i]), want);
                }
            }
        }
    }

    #[test]
    fn rotary_cases() {
        let p = RotaryParams::new(8, FREQ_BASE).unwrap();
        let x = [0.3, -1.0, 2.0, 0.5, 0.0, 1.0, -0.7, 0.2];
        assert_eq!(rotary_apply(&x, 0, &p).unwrap(), x.to_vec());
        assert!(rotary_apply(&x[..7], 0, &p).is_err());

        let quarter = RotaryParams::with_thetas(2, vec![std::f64::consts::FRAC_PI_2]).unwrap();
        let r = rotary_apply(&[1.0, 0.0], 1, &quarter).unwrap();
        assert!(r[0].abs() < 1e-16 && (r[1] - 1.0).abs() < 1e-16);

        assert!(RotaryParams::new(7, FREQ_BASE).is_err());
        assert!(RotaryParams::with_thetas(4, vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in PositionalScheme::all() {
            assert_eq!(PositionalScheme::from_name(s.name()).unwrap(), s);
            let json = serde_json::to_string(&s).unwrap();
            let back: PositionalScheme = serde_json::from_str(&json).unwrap();
            assert_eq!(back, s);
        }
        let t5: PositionalScheme = serde_json::from_str(r#"{"kind":"t5_relative_bias"}"#).unwrap();
        assert_eq!(t5, PositionalScheme::t5());
        assert!(PositionalScheme::from_name("learned").is_err());
    }
}
