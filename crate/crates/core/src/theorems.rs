//! Explicit NoPE weight constructions, checked numerically.
//!
//! The absolute construction makes one first-layer head write `1/t` into the
//! third hidden dimension at position `t`, using only the causal mask and a
//! `<bos>` anchor. The relative construction makes a later-layer head's
//! logit `<q_t, k_i>` split into a content term plus `-(t - i)`, given
//! hidden states that carry the absolute position in dimension three.
//!
//! Both checks go through [`Transformer::attention_head`], the code path used
//! in training. Layer normalization is not part of the constructed path.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{Transformer, TransformerConfig};
use crate::numerics::{Graph, Tensor};
use crate::posenc::PositionalScheme;
use crate::tasks::BOS;

/// Vocabulary used by the absolute construction; `<bos>` is id 0.
const ABS_VOCAB: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub theorem: String,
    #[serde(rename = "T")]
    pub seq_len: usize,
    pub d: usize,
    pub h: usize,
    pub seeds: Vec<u64>,
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn check_dims(d: usize, h: usize, min_h: usize) -> Result<usize> {
    if d < 3 {
        return Err(invalid(format!("the construction needs d >= 3, got {d}")));
    }
    if h < min_h {
        return Err(invalid(format!("the construction needs h >= {min_h}, got {h}")));
    }
    if h > d || d % h != 0 {
        return Err(invalid(format!("head dimension {h} must divide d = {d}")));
    }
    Ok(d / h)
}

fn nope_model(d: usize, h: usize, layers: usize, vocab: usize, seed: u64) -> Result<Transformer<f64>> {
    let cfg = TransformerConfig {
        num_layers: layers,
        model_dim: d,
        num_heads: d / h,
        vocab_size: vocab,
        scheme: PositionalScheme::Nope,
        init_std: 1.0,
        ..Default::default()
    };
    Transformer::new(cfg, seed)
}

fn head_param(layer: usize, head: usize, w: &str) -> String {
    format!("layers.{layer}.heads.{head}.{w}")
}

/// Outcome of the absolute construction for one input.
#[derive(Clone, Debug, PartialEq)]
pub struct AbsoluteRun {
    /// `o_t[3]` for `t = 1..=T+1`.
    pub third_dim: Vec<f64>,
    /// `max_t |o_t[3] - 1/t|`.
    pub max_error: f64,
    /// Every other output coordinate is exactly zero.
    pub others_zero: bool,
    /// All key vectors are bitwise identical.
    pub keys_identical: bool,
}

/// Runs the absolute construction on `<bos>` followed by `seq_len` random
/// tokens. Free entries (`W_Q`, embedding rows 4..d, other heads) are N(0, 1)
/// draws from `seed`.
pub fn run_absolute(seq_len: usize, d: usize, h: usize, seed: u64) -> Result<AbsoluteRun> {
    check_dims(d, h, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = nope_model(d, h, 1, ABS_VOCAB, seed)?;

    let embed = Tensor::from_fn(&[ABS_VOCAB, d], |i| {
        let (tok, dim) = (i / d, i % d);
        match dim {
            0 => 1.0,
            1 => f64::from(tok == BOS),
            2 => 0.0,
            _ => normal(&mut rng),
        }
    });
    let wk = Tensor::from_fn(&[h, d], |i| f64::from(i % d == 0));
    let wv = Tensor::from_fn(&[h, d], |i| f64::from(i == 1));
    let wo = Tensor::from_fn(&[d, h], |i| f64::from(i == 2 * h));
    let wq = Tensor::from_fn(&[h, d], |_| normal(&mut rng));
    model.set("embed", embed)?;
    model.set(&head_param(0, 0, "wq"), wq)?;
    model.set(&head_param(0, 0, "wk"), wk)?;
    model.set(&head_param(0, 0, "wv"), wv)?;
    model.set(&head_param(0, 0, "wo"), wo)?;

    let mut ids = vec![BOS];
    ids.extend((0..seq_len).map(|_| 1 + (rand::Rng::random_range(&mut rng, 0..ABS_VOCAB - 1))));
    let n = ids.len();

    let mut g = Graph::new();
    let vars = model.bind(&mut g, false);
    let x = model.embed(&mut g, &vars, &ids, 1, n)?;
    let keys = g.matmul(x, vars[model.layout().layers[0].heads[0].wk], false, true)?;
    let keys = g.value(keys).data();
    let keys_identical = keys.chunks(h).all(|k| k == &keys[..h]);
    let hidden = g.value(x).clone().reshape(&[n, d])?;

    let trace = model.attention_head(0, 0, &hidden)?;
    let out = trace.out.data();
    let mut third_dim = Vec::with_capacity(n);
    let mut max_error: f64 = 0.0;
    let mut others_zero = true;
    for (t, row) in out.chunks(d).enumerate() {
        third_dim.push(row[2]);
        max_error = max_error.max((row[2] - 1.0 / (t + 1) as f64).abs());
        others_zero &= row.iter().enumerate().all(|(j, &v)| j == 2 || v == 0.0);
    }
    Ok(AbsoluteRun {
        third_dim,
        max_error,
        others_zero,
        keys_identical,
    })
}

/// Absolute construction over several seeds. Passes when the error is below
/// `tolerance`, the other coordinates vanish, keys coincide and `1/t` is
/// strictly decreasing (so `t` is recoverable from it).
pub fn verify_absolute(seq_len: usize, d: usize, h: usize, seeds: &[u64], tolerance: f64) -> Result<Certificate> {
    if seeds.is_empty() {
        return Err(invalid("at least one seed is required"));
    }
    let mut max_error: f64 = 0.0;
    let mut structural = true;
    for &seed in seeds {
        let run = run_absolute(seq_len, d, h, seed)?;
        max_error = max_error.max(run.max_error);
        structural &= run.others_zero && run.keys_identical && run.third_dim.windows(2).all(|w| w[1] < w[0]);
    }
    Ok(Certificate {
        theorem: "absolute".into(),
        seq_len,
        d,
        h,
        seeds: seeds.to_vec(),
        max_error,
        tolerance,
        pass: structural && max_error < tolerance,
    })
}

/// Hidden states `[T+1, d]`: dimension 1 is ones, 2 flags `<bos>`, 3 holds
/// the 1-based position, and the rest are `content(position)`.
fn relative_hidden(n: usize, d: usize, mut content: impl FnMut(usize, usize) -> f64) -> Tensor<f64> {
    Tensor::from_fn(&[n, d], |i| {
        let (t, dim) = (i / d, i % d);
        match dim {
            0 => 1.0,
            1 => f64::from(t == 0),
            2 => (t + 1) as f64,
            _ => content(t, dim),
        }
    })
}

/// `W_Q` and `W_K` of the relative construction. With `content_only`, the
/// free rows ignore the `<bos>` flag and position dimensions.
fn relative_weights(d: usize, h: usize, content_only: bool, rng: &mut ChaCha8Rng) -> (Tensor<f64>, Tensor<f64>) {
    let mut free = |row: usize, col: usize, fixed: [(usize, f64); 2]| -> f64 {
        if row < 2 {
            let (c, v) = fixed[row];
            return if col == c { v } else { 0.0 };
        }
        if content_only && (col == 1 || col == 2) {
            return 0.0;
        }
        normal(rng)
    };
    let wq = Tensor::from_fn(&[h, d], |i| free(i / d, i % d, [(0, 1.0), (2, -1.0)]));
    let wk = Tensor::from_fn(&[h, d], |i| free(i / d, i % d, [(2, 1.0), (0, 1.0)]));
    (wq, wk)
}

fn relative_scores(
    seq_len: usize,
    d: usize,
    h: usize,
    seed: u64,
    content_only: bool,
    hidden: impl FnOnce(&mut ChaCha8Rng) -> Tensor<f64>,
) -> Result<(Tensor<f64>, Tensor<f64>, Tensor<f64>, Tensor<f64>)> {
    check_dims(d, h, 2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = nope_model(d, h, 2, ABS_VOCAB, seed)?;
    let (wq, wk) = relative_weights(d, h, content_only, &mut rng);
    model.set(&head_param(1, 0, "wq"), wq.clone())?;
    model.set(&head_param(1, 0, "wk"), wk.clone())?;
    let hidden = hidden(&mut rng);
    debug_assert_eq!(hidden.shape(), &[seq_len + 1, d]);
    let trace = model.attention_head(1, 0, &hidden)?;
    Ok((trace.scores, hidden, wq, wk))
}

fn project(w: &Tensor<f64>, x: &[f64], row: usize) -> f64 {
    let d = x.len();
    w.data()[row * d..(row + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Max over `1 <= i <= t <= T+1` of `|<q_t, k_i> - (content - (t - i))|`,
/// where the content term sums rows `3..h` of the projections, recomputed
/// outside the model.
pub fn run_relative(seq_len: usize, d: usize, h: usize, seed: u64) -> Result<f64> {
    let n = seq_len + 1;
    let (scores, hidden, wq, wk) = relative_scores(seq_len, d, h, seed, false, |rng| {
        relative_hidden(n, d, |_, _| normal(rng))
    })?;
    let s = scores.data();
    let x = hidden.data();
    let mut max_error: f64 = 0.0;
    for t in 0..n {
        let xt = &x[t * d..(t + 1) * d];
        for i in 0..=t {
            let xi = &x[i * d..(i + 1) * d];
            let content: f64 = (2..h).map(|j| project(&wq, xt, j) * project(&wk, xi, j)).sum();
            let expected = content - (t - i) as f64;
            max_error = max_error.max((s[t * n + i] - expected).abs());
        }
    }
    Ok(max_error)
}

pub fn verify_relative(seq_len: usize, d: usize, h: usize, seeds: &[u64], tolerance: f64) -> Result<Certificate> {
    if seeds.is_empty() {
        return Err(invalid("at least one seed is required"));
    }
    let mut max_error: f64 = 0.0;
    for &seed in seeds {
        max_error = max_error.max(run_relative(seq_len, d, h, seed)?);
    }
    Ok(Certificate {
        theorem: "relative".into(),
        seq_len,
        d,
        h,
        seeds: seeds.to_vec(),
        max_error,
        tolerance,
        pass: max_error < tolerance,
    })
}

/// Max of `|<q_{t+delta}, k_{i+delta}> - <q_t, k_i>|` over valid pairs when
/// the content dimensions are the same at every position.
pub fn verify_shift_invariance(seq_len: usize, delta: usize, d: usize, h: usize, seed: u64) -> Result<f64> {
    if delta > seq_len {
        return Err(invalid(format!("shift {delta} leaves no pairs in {} positions", seq_len + 1)));
    }
    let n = seq_len + 1;
    let (scores, _, _, _) = relative_scores(seq_len, d, h, seed, true, |rng| {
        let content: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
        relative_hidden(n, d, |_, dim| content[dim])
    })?;
    let s = scores.data();
    let mut max_error: f64 = 0.0;
    for t in 0..n - delta {
        for i in 0..=t {
            max_error = max_error.max((s[(t + delta) * n + i + delta] - s[t * n + i]).abs());
        }
    }
    Ok(max_error)
}
