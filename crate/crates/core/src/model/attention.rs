use crate::error::{shape, Result};
use crate::numerics::{Graph, Real, Var};

/// Graph handles of one head's projections: `wq`, `wk`, `wv` are `[h, d]`,
/// `wo` is `[d, h]`.
#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
}

/// How position enters the attention logits of one forward pass.
#[derive(Clone, Debug)]
pub enum PositionHook<T> {
    /// Nothing at the attention level (NoPE, and APE which acts on the input).
    None,
    /// One `[T, T]` additive bias per head.
    Bias(Vec<Var>),
    /// `q` and `k` rotated with `[T, h/2]` cosine/sine tables.
    Rotary { cos: Vec<T>, sin: Vec<T> },
}

#[derive(Clone, Copy, Debug)]
pub struct HeadOutput {
    /// `[B, T, d]`, this head's contribution to the residual stream.
    pub out: Var,
    /// `[B, T, T]` causal attention probabilities.
    pub probs: Var,
    /// `[B, T, T]` logits before the causal softmax; entries above the
    /// diagonal are not meaningful.
    pub scores: Var,
}

/// One causal attention head in the additive multi-head view:
/// `o_t = W_O sum_{i<=t} softmax_i(q_t . k_i * scale + bias_{t,i}) v_i`.
///
/// `x` is `[B, T, d]`. Rows of the bias above the diagonal are ignored.
pub fn attention_head<T: Real>(
    g: &mut Graph<T>,
    x: Var,
    w: HeadVars,
    hook: &PositionHook<T>,
    head: usize,
    scale: Option<T>,
) -> Result<HeadOutput> {
    if g.shape(x).len() != 3 {
        return Err(shape(format!("attention input must be [B, T, d], got {:?}", g.shape(x))));
    }
    let mut q = g.matmul(x, w.wq, false, true)?;
    let mut k = g.matmul(x, w.wk, false, true)?;
    let v = g.matmul(x, w.wv, false, true)?;
    if let PositionHook::Rotary { cos, sin } = hook {
        let t = g.shape(x)[1];
        let h = g.shape(q)[2];
        if cos.len() != t * h / 2 {
            return Err(shape(format!(
                "rotary tables cover {} angles, need {} for T={t}, h={h}",
                cos.len(),
                t * h / 2
            )));
        }
        q = g.rotate_pairs(q, cos.clone(), sin.clone())?;
        k = g.rotate_pairs(k, cos.clone(), sin.clone())?;
    }
    let mut scores = g.bmm(q, k, false, true)?;
    if let Some(s) = scale {
        scores = g.scale(scores, s);
    }
    if let PositionHook::Bias(biases) = hook {
        let b = *biases
            .get(head)
            .ok_or_else(|| shape(format!("no positional bias for head {head}")))?;
        scores = g.add_broadcast(scores, b)?;
    }
    let probs = g.softmax(scores, true)?;
    let ctx = g.bmm(probs, v, false, false)?;
    let out = g.matmul(ctx, w.wo, false, true)?;
    Ok(HeadOutput { out, probs, scores })
}
