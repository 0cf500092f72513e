//! Decoder-only causal transformer with a pluggable positional scheme.
//!
//! Block `l` computes, for hidden states `h^(l-1)`:
//!
//! ```text
//! a   = sum_m Head_m(h^(l-1))
//! h^l = FF(LN(a + h^(l-1))) + a + h^(l-1)      FF(x) = W_2 act(W_1^T x)
//! ```
//!
//! Logits are `LN_final(h^L) W_E^T` with the token embedding `W_E` tied.

mod attention;
mod config;
mod dump;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::numerics::{read_checkpoint, write_checkpoint, Graph, Real, Tensor, Var, LAYER_NORM_EPS};
use crate::posenc::{alibi_head_bias, sinusoidal_table, AlibiParams, PositionalScheme, RotaryParams, T5Geometry};

pub use attention::{attention_head, HeadOutput, HeadVars, PositionHook};
pub use config::{Activation, AttentionScale, HeadIds, LayerIds, Layout, NormPlacement, TransformerConfig};
pub use dump::{
    load_attention_dump, read_attention_dump, save_attention_dump, sidecar_path, write_attention_dump,
    AttentionRecord,
};

use config::InitKind;

/// One head's output `[T, d]`, probabilities `[T, T]` and raw logits `[T, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadTrace<T> {
    pub out: Tensor<T>,
    pub probs: Tensor<T>,
    pub scores: Tensor<T>,
}

/// Graph handles produced by [`Transformer::build`].
#[derive(Clone, Debug)]
pub struct Forward {
    /// `[B, T, V]`.
    pub logits: Var,
    /// `[B, T, T]` per `(layer, head)`, layer-major.
    pub probs: Vec<Var>,
    /// `[B, T, d]` per `(layer, head)`, layer-major.
    pub head_outputs: Vec<Var>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transformer<T> {
    config: TransformerConfig,
    layout: Layout,
    params: Vec<Tensor<T>>,
}

impl<T: Real> Transformer<T> {
    /// Fresh model with weights drawn from `N(0, init_std)`.
    pub fn new(config: TransformerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, config.init_std).map_err(|e| invalid(e.to_string()))?;
        let params = (0..layout.len())
            .map(|i| {
                let shape = &layout.shapes[i];
                match layout.init_kind(i) {
                    InitKind::Zero => Tensor::zeros(shape),
                    InitKind::One => Tensor::full(shape, T::one()),
                    InitKind::Normal => Tensor::from_fn(shape, |_| T::lit(normal.sample(&mut rng))),
                }
            })
            .collect();
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    /// Model from explicit parameters in layout order.
    pub fn from_params(config: TransformerConfig, params: Vec<Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, got {}",
                layout.len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if p.shape() != layout.shapes[i].as_slice() {
                return Err(Error::Checkpoint(format!(
                    "{} has shape {:?}, expected {:?}",
                    layout.names[i],
                    p.shape(),
                    layout.shapes[i]
                )));
            }
            if !p.all_finite() {
                return Err(Error::NonFinite(format!("{} has non-finite entries", layout.names[i])));
            }
        }
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.layout
            .position(name)
            .map(|i| &self.params[i])
            .ok_or_else(|| invalid(format!("no parameter named `{name}`")))
    }

    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let i = self
            .layout
            .position(name)
            .ok_or_else(|| invalid(format!("no parameter named `{name}`")))?;
        if value.shape() != self.layout.shapes[i].as_slice() {
            return Err(invalid(format!(
                "{name} expects shape {:?}, got {:?}",
                self.layout.shapes[i],
                value.shape()
            )));
        }
        self.params[i] = value;
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> Transformer<U> {
        Transformer {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(Tensor::cast).collect(),
        }
    }

    /// Places the parameters on `g`, trainable or frozen.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                if trainable {
                    g.param(p.clone())
                } else {
                    g.constant(p.clone())
                }
            })
            .collect()
    }

    fn scale(&self) -> Option<T> {
        match self.config.attention_scale {
            AttentionScale::None => None,
            AttentionScale::InvSqrtHeadDim => Some(T::lit(1.0 / (self.config.head_dim() as f64).sqrt())),
        }
    }

    /// Positional hook shared by every layer of a pass over `seq_len` tokens.
    pub fn position_hook(&self, g: &mut Graph<T>, vars: &[Var], seq_len: usize) -> Result<PositionHook<T>> {
        let heads = self.config.num_heads;
        Ok(match self.config.scheme {
            PositionalScheme::Nope | PositionalScheme::SinusoidalApe => PositionHook::None,
            PositionalScheme::T5RelativeBias {
                num_buckets,
                max_distance,
            } => {
                let geo = T5Geometry::new(num_buckets, max_distance)?;
                let table = vars[self.layout.t5_table.expect("t5 layout has a table")];
                let idx = crate::posenc::t5_bias_index(geo, heads, seq_len);
                let per = seq_len * seq_len;
                let mut biases = Vec::with_capacity(heads);
                for m in 0..heads {
                    biases.push(g.gather(table, idx[m * per..(m + 1) * per].to_vec(), &[seq_len, seq_len])?);
                }
                PositionHook::Bias(biases)
            }
            PositionalScheme::Alibi => {
                let params = AlibiParams::new(heads)?;
                let biases = params
                    .slopes
                    .iter()
                    .map(|&s| {
                        let data = alibi_head_bias::<T>(seq_len, s, 0.0);
                        Tensor::new(vec![seq_len, seq_len], data).map(|t| g.constant(t))
                    })
                    .collect::<Result<Vec<_>>>()?;
                PositionHook::Bias(biases)
            }
            PositionalScheme::Rotary { base } => {
                let rp = RotaryParams::new(self.config.head_dim(), base)?;
                let (cos, sin) = rp.tables(seq_len);
                PositionHook::Rotary { cos, sin }
            }
        })
    }

    fn head_vars(&self, vars: &[Var], layer: usize, head: usize) -> HeadVars {
        let ids = self.layout.layers[layer].heads[head];
        HeadVars {
            wq: vars[ids.wq],
            wk: vars[ids.wk],
            wv: vars[ids.wv],
            wo: vars[ids.wo],
        }
    }

    /// Token and (for APE) position embedding of `ids`, viewed as `[B, T]`.
    pub fn embed(&self, g: &mut Graph<T>, vars: &[Var], ids: &[usize], batch: usize, seq_len: usize) -> Result<Var> {
        if seq_len == 0 || batch == 0 {
            return Err(invalid("empty input"));
        }
        if ids.len() != batch * seq_len {
            return Err(invalid(format!(
                "{} ids cannot be viewed as [{batch}, {seq_len}]",
                ids.len()
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.config.vocab_size) {
            return Err(Error::UnknownToken(format!(
                "id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        let x = g.embedding(vars[self.layout.embed], ids)?;
        let mut x = g.reshape(x, &[batch, seq_len, self.config.model_dim])?;
        if self.config.scale_embeddings {
            x = g.scale(x, T::lit((self.config.model_dim as f64).sqrt()));
        }
        if self.config.scheme == PositionalScheme::SinusoidalApe {
            let table = g.constant(sinusoidal_table(seq_len, self.config.model_dim)?);
            x = g.add_broadcast(x, table)?;
        }
        Ok(x)
    }

    /// Full forward pass from token ids viewed as `[B, T]`.
    pub fn build(&self, g: &mut Graph<T>, vars: &[Var], ids: &[usize], batch: usize, seq_len: usize) -> Result<Forward> {
        let x = self.embed(g, vars, ids, batch, seq_len)?;
        self.build_from_embedded(g, vars, x)
    }

    /// Forward pass from an embedded input `[B, T, d]`.
    pub fn build_from_embedded(&self, g: &mut Graph<T>, vars: &[Var], x: Var) -> Result<Forward> {
        let seq_len = g.shape(x)[1];
        let hook = self.position_hook(g, vars, seq_len)?;
        let scale = self.scale();
        let eps = T::lit(LAYER_NORM_EPS);
        let mut h = x;
        let mut probs = Vec::new();
        let mut head_outputs = Vec::new();
        for (l, ids) in self.layout.layers.iter().enumerate() {
            let attn_in = match ids.ln_attn {
                Some((gain, bias)) => g.layer_norm(h, vars[gain], vars[bias], eps)?,
                None => h,
            };
            let mut a: Option<Var> = None;
            for m in 0..self.config.num_heads {
                let out = attention_head(g, attn_in, self.head_vars(vars, l, m), &hook, m, scale)?;
                probs.push(out.probs);
                head_outputs.push(out.out);
                a = Some(match a {
                    Some(acc) => g.add(acc, out.out)?,
                    None => out.out,
                });
            }
            let s = g.add(a.expect("at least one head"), h)?;
            let n = g.layer_norm(s, vars[ids.ln_gain], vars[ids.ln_bias], eps)?;
            let u = g.matmul(n, vars[ids.w1], false, false)?;
            let u = match self.config.activation {
                Activation::Relu => g.relu(u),
                Activation::Gelu => g.gelu(u),
            };
            let f = g.matmul(u, vars[ids.w2], false, true)?;
            h = g.add(f, s)?;
        }
        let n = g.layer_norm(h, vars[self.layout.final_gain], vars[self.layout.final_bias], eps)?;
        let logits = g.matmul(n, vars[self.layout.embed], false, true)?;
        Ok(Forward {
            logits,
            probs,
            head_outputs,
        })
    }

    /// Logits `[T, V]` for one sequence, with attention probabilities if asked.
    pub fn forward(&self, tokens: &[usize], capture: bool) -> Result<(Tensor<T>, Option<AttentionRecord>)> {
        if tokens.is_empty() {
            return Err(invalid("forward needs at least one token"));
        }
        let t = tokens.len();
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let fwd = self.build(&mut g, &vars, tokens, 1, t)?;
        let logits = g.value(fwd.logits).clone().reshape(&[t, self.config.vocab_size])?;
        let record = capture
            .then(|| -> Result<AttentionRecord> {
                let probs = fwd
                    .probs
                    .iter()
                    .map(|&p| g.value(p).cast::<f64>().reshape(&[t, t]))
                    .collect::<Result<Vec<_>>>()?;
                Ok(AttentionRecord {
                    num_layers: self.config.num_layers,
                    num_heads: self.config.num_heads,
                    seq_len: t,
                    probs,
                })
            })
            .transpose()?;
        Ok((logits, record))
    }

    /// Logits `[B, T, V]` for equal-length sequences.
    pub fn forward_batch(&self, ids: &[usize], batch: usize, seq_len: usize) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let fwd = self.build(&mut g, &vars, ids, batch, seq_len)?;
        Ok(g.value(fwd.logits).clone())
    }

    /// One attention head of one layer applied to hidden states `[T, d]`,
    /// through the same code path as training.
    pub fn attention_head(&self, layer: usize, head: usize, hidden: &Tensor<T>) -> Result<HeadTrace<T>> {
        if layer >= self.config.num_layers || head >= self.config.num_heads {
            return Err(invalid(format!("no head {head} in layer {layer}")));
        }
        let d = self.config.model_dim;
        if hidden.rank() != 2 || hidden.shape()[1] != d {
            return Err(invalid(format!(
                "hidden states must be [T, {d}], got {:?}",
                hidden.shape()
            )));
        }
        let t = hidden.shape()[0];
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let x = g.constant(hidden.clone().reshape(&[1, t, d])?);
        let hook = self.position_hook(&mut g, &vars, t)?;
        let out = attention_head(&mut g, x, self.head_vars(&vars, layer, head), &hook, head, self.scale())?;
        Ok(HeadTrace {
            out: g.value(out.out).clone().reshape(&[t, d])?,
            probs: g.value(out.probs).clone().reshape(&[t, t])?,
            scores: g.value(out.scores).clone().reshape(&[t, t])?,
        })
    }

    /// Greedy continuation of `prompt`, excluding the terminating `eos`.
    pub fn generate(&self, prompt: &[usize], max_new: usize, eos: usize) -> Result<Vec<usize>> {
        Ok(self
            .generate_batch(&[prompt.to_vec()], max_new, eos)?
            .pop()
            .expect("one prompt in, one continuation out"))
    }

    /// Greedy decoding of several prompts; prompts of equal length share
    /// forward passes. Ties go to the lowest token id.
    pub fn generate_batch(&self, prompts: &[Vec<usize>], max_new: usize, eos: usize) -> Result<Vec<Vec<usize>>> {
        if max_new == 0 {
            return Err(invalid("max_new must be positive"));
        }
        if prompts.iter().any(Vec::is_empty) {
            return Err(invalid("prompt must be non-empty"));
        }
        let mut out = vec![Vec::new(); prompts.len()];
        let mut lengths: Vec<usize> = prompts.iter().map(Vec::len).collect();
        lengths.sort_unstable();
        lengths.dedup();
        for len in lengths {
            let members: Vec<usize> = (0..prompts.len()).filter(|&i| prompts[i].len() == len).collect();
            let mut seqs: Vec<Vec<usize>> = members.iter().map(|&i| prompts[i].clone()).collect();
            let mut active: Vec<usize> = (0..members.len()).collect();
            for _ in 0..max_new {
                if active.is_empty() {
                    break;
                }
                let t = seqs[active[0]].len();
                let ids: Vec<usize> = active.iter().flat_map(|&j| seqs[j].iter().copied()).collect();
                let logits = self.forward_batch(&ids, active.len(), t)?;
                let v = self.config.vocab_size;
                let mut still = Vec::with_capacity(active.len());
                for (row, &j) in active.iter().enumerate() {
                    let last = &logits.data()[(row * t + t - 1) * v..(row * t + t) * v];
                    let next = argmax(last)?;
                    if next == eos {
                        continue;
                    }
                    seqs[j].push(next);
                    still.push(j);
                }
                active = still;
            }
            for (j, &i) in members.iter().enumerate() {
                out[i] = seqs[j][len..].to_vec();
            }
        }
        Ok(out)
    }

    pub fn named_params(&self) -> Vec<(String, Tensor<T>)> {
        self.layout.names.iter().cloned().zip(self.params.iter().cloned()).collect()
    }

    /// Writes weights to `path` and the config to its `.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_checkpoint(BufWriter::new(File::create(path)?), &self.named_params())?;
        let mut side = BufWriter::new(File::create(path.with_extension("json"))?);
        serde_json::to_writer_pretty(&mut side, &self.config)?;
        side.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let config: TransformerConfig =
            serde_json::from_reader(BufReader::new(File::open(path.with_extension("json"))?))?;
        let named: Vec<(String, Tensor<T>)> = read_checkpoint(BufReader::new(File::open(path)?))?;
        let layout = Layout::new(&config);
        if named.iter().map(|(n, _)| n).ne(layout.names.iter()) {
            return Err(Error::Checkpoint(format!(
                "{} does not match the parameter layout of its config",
                path.display()
            )));
        }
        Self::from_params(config, named.into_iter().map(|(_, t)| t).collect())
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax<T: Real>(row: &[T]) -> Result<usize> {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x.is_nan() {
            return Err(Error::NonFinite("NaN logit during decoding".into()));
        }
        if x > row[best] {
            best = i;
        }
    }
    Ok(best)
}
