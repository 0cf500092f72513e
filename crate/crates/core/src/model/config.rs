use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::posenc::PositionalScheme;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Gelu,
}

/// Where layer normalisation sits in a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormPlacement {
    /// `h = FF(LN(a + h_prev)) + a + h_prev`; attention reads `h_prev` raw.
    Literal,
    /// Conventional pre-LN: attention reads `LN(h_prev)` as well.
    PreLn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionScale {
    /// Raw `q . k` logits.
    None,
    /// `q . k / sqrt(h)`.
    InvSqrtHeadDim,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransformerConfig {
    pub num_layers: usize,
    pub model_dim: usize,
    pub num_heads: usize,
    pub ff_multiplier: usize,
    pub vocab_size: usize,
    pub activation: Activation,
    pub scheme: PositionalScheme,
    /// Longest position seen in training; recorded, not enforced.
    pub max_train_position: usize,
    pub norm: NormPlacement,
    pub attention_scale: AttentionScale,
    /// Multiply token embeddings by `sqrt(d)` before positional terms.
    pub scale_embeddings: bool,
    pub init_std: f64,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self {
            num_layers: 4,
            model_dim: 128,
            num_heads: 4,
            ff_multiplier: 4,
            vocab_size: 64,
            activation: Activation::Relu,
            scheme: PositionalScheme::Nope,
            max_train_position: 0,
            norm: NormPlacement::Literal,
            attention_scale: AttentionScale::None,
            scale_embeddings: false,
            init_std: 0.02,
        }
    }
}

impl TransformerConfig {
    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads.max(1)
    }

    pub fn ff_dim(&self) -> usize {
        self.model_dim * self.ff_multiplier
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 {
            return Err(invalid("num_layers must be at least 1"));
        }
        if self.num_heads == 0 || self.model_dim == 0 || self.model_dim % self.num_heads != 0 {
            return Err(invalid(format!(
                "model_dim {} must be a positive multiple of num_heads {}",
                self.model_dim, self.num_heads
            )));
        }
        if self.ff_multiplier < 1 {
            return Err(invalid("ff_multiplier must be at least 1"));
        }
        if self.vocab_size < 4 {
            return Err(invalid(format!(
                "vocab_size {} leaves no room for the special tokens",
                self.vocab_size
            )));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            return Err(invalid(format!("init_std must be finite and non-negative, got {}", self.init_std)));
        }
        self.scheme
            .validate(self.model_dim, self.num_heads, self.head_dim())
    }
}

/// Indices of one head's projections in the flat parameter list.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeadIds {
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerIds {
    pub heads: Vec<HeadIds>,
    pub w1: usize,
    pub w2: usize,
    pub ln_gain: usize,
    pub ln_bias: usize,
    /// Only present with [`NormPlacement::PreLn`].
    pub ln_attn: Option<(usize, usize)>,
}

/// Names, shapes and positions of every parameter for a config.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub names: Vec<String>,
    pub shapes: Vec<Vec<usize>>,
    pub embed: usize,
    pub t5_table: Option<usize>,
    pub layers: Vec<LayerIds>,
    pub final_gain: usize,
    pub final_bias: usize,
}

impl Layout {
    pub fn new(cfg: &TransformerConfig) -> Self {
        let mut names = Vec::new();
        let mut shapes = Vec::new();
        let mut add = |name: String, shape: Vec<usize>| {
            names.push(name);
            shapes.push(shape);
            names.len() - 1
        };
        let (d, h, f) = (cfg.model_dim, cfg.head_dim(), cfg.ff_dim());
        let embed = add("embed".into(), vec![cfg.vocab_size, d]);
        let t5_table = match cfg.scheme {
            PositionalScheme::T5RelativeBias { num_buckets, .. } => {
                Some(add("t5_bias".into(), vec![cfg.num_heads, num_buckets]))
            }
            _ => None,
        };
        let mut layers = Vec::with_capacity(cfg.num_layers);
        for l in 0..cfg.num_layers {
            let heads = (0..cfg.num_heads)
                .map(|m| {
                    let p = format!("layers.{l}.heads.{m}");
                    HeadIds {
                        wq: add(format!("{p}.wq"), vec![h, d]),
                        wk: add(format!("{p}.wk"), vec![h, d]),
                        wv: add(format!("{p}.wv"), vec![h, d]),
                        wo: add(format!("{p}.wo"), vec![d, h]),
                    }
                })
                .collect();
            let ln_attn = (cfg.norm == NormPlacement::PreLn).then(|| {
                (
                    add(format!("layers.{l}.ln_attn.gain"), vec![d]),
                    add(format!("layers.{l}.ln_attn.bias"), vec![d]),
                )
            });
            let w1 = add(format!("layers.{l}.ff.w1"), vec![d, f]);
            let w2 = add(format!("layers.{l}.ff.w2"), vec![d, f]);
            let ln_gain = add(format!("layers.{l}.ln.gain"), vec![d]);
            let ln_bias = add(format!("layers.{l}.ln.bias"), vec![d]);
            layers.push(LayerIds {
                heads,
                w1,
                w2,
                ln_gain,
                ln_bias,
                ln_attn,
            });
        }
        let final_gain = add("final_ln.gain".into(), vec![d]);
        let final_bias = add("final_ln.bias".into(), vec![d]);
        Self {
            names,
            shapes,
            embed,
            t5_table,
            layers,
            final_gain,
            final_bias,
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Gains of layer norms start at one, the T5 table at zero, the rest random.
    pub(crate) fn init_kind(&self, i: usize) -> InitKind {
        let name = &self.names[i];
        if name.ends_with(".gain") {
            InitKind::One
        } else if name.ends_with(".bias") || Some(i) == self.t5_table {
            InitKind::Zero
        } else {
            InitKind::Normal
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum InitKind {
    Zero,
    One,
    Normal,
}
