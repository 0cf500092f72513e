//! Attention-pattern distances, attended-distance histograms and mean-rank
//! aggregation across scenarios.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};
use crate::harness::BucketAccuracy;
use crate::model::{AttentionRecord, Transformer};
use crate::numerics::{Real, Tensor};
use crate::tasks::{encode_example, Encoded, TaskInstance, Vocab};

/// Tolerance on row sums when reading distributions from f32 dumps.
const ROW_SUM_TOL: f64 = 1e-4;

/// Causal attention distribution of one head: row `t` covers keys `0..=t`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadDistribution {
    rows: Vec<Vec<f64>>,
}

impl HeadDistribution {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        for (t, row) in rows.iter().enumerate() {
            if row.len() != t + 1 {
                return Err(shape(format!("row {t} has {} entries, expected {}", row.len(), t + 1)));
            }
            if row.iter().any(|&p| !(p.is_finite() && p >= 0.0)) {
                return Err(invalid(format!("row {t} has a negative or non-finite probability")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(invalid(format!("row {t} sums to {s}")));
            }
        }
        Ok(Self { rows })
    }

    /// Lower triangle of a `[T, T]` attention matrix. Mass above the
    /// diagonal is an error.
    pub fn from_matrix(m: &Tensor<f64>) -> Result<Self> {
        let [t, t2] = m.shape() else {
            return Err(shape(format!("attention matrix must be rank 2, got {:?}", m.shape())));
        };
        if t != t2 {
            return Err(shape(format!("attention matrix must be square, got {:?}", m.shape())));
        }
        let t = *t;
        let d = m.data();
        let mut rows = Vec::with_capacity(t);
        for i in 0..t {
            let row = &d[i * t..(i + 1) * t];
            if row[i + 1..].iter().any(|&p| p.abs() > ROW_SUM_TOL) {
                return Err(invalid(format!("query {i} attends to a future key")));
            }
            rows.push(row[..=i].to_vec());
        }
        Self::new(rows)
    }

    pub fn seq_len(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.rows[t]
    }
}

fn kl2(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &mi)| pi * (pi / mi).log2())
        .sum()
}

/// Jensen-Shannon divergence in bits, so it lies in `[0, 1]`.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(shape(format!("distributions of length {} and {}", p.len(), q.len())));
    }
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok((0.5 * kl2(p, &m) + 0.5 * kl2(q, &m)).clamp(0.0, 1.0))
}

/// Mean over query positions of the per-row JSD.
pub fn head_distance(p: &HeadDistribution, q: &HeadDistribution) -> Result<f64> {
    if p.seq_len() != q.seq_len() {
        return Err(shape(format!("heads over {} and {} positions", p.seq_len(), q.seq_len())));
    }
    if p.seq_len() == 0 {
        return Err(invalid("heads over an empty sequence"));
    }
    let mut total = 0.0;
    for (a, b) in p.rows.iter().zip(&q.rows) {
        total += jsd(a, b)?;
    }
    Ok(total / p.seq_len() as f64)
}

/// Smallest head distance over all cross pairs.
pub fn layer_distance(a: &[HeadDistribution], b: &[HeadDistribution]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("layer distance needs at least one head on each side"));
    }
    let mut best = f64::INFINITY;
    for p in a {
        for q in b {
            best = best.min(head_distance(p, q)?);
        }
    }
    Ok(best)
}

pub fn layer_heads(rec: &AttentionRecord, layer: usize) -> Result<Vec<HeadDistribution>> {
    if layer >= rec.num_layers {
        return Err(invalid(format!("layer {layer} out of range for {} layers", rec.num_layers)));
    }
    (0..rec.num_heads)
        .map(|h| HeadDistribution::from_matrix(rec.get(layer, h)))
        .collect()
}

/// Per-layer distance between two records of the same sequence.
pub fn layer_distances(a: &AttentionRecord, b: &AttentionRecord) -> Result<Vec<f64>> {
    if a.num_layers != b.num_layers || a.seq_len != b.seq_len {
        return Err(shape(format!(
            "records differ: {} layers x {} positions vs {} x {}",
            a.num_layers, a.seq_len, b.num_layers, b.seq_len
        )));
    }
    (0..a.num_layers)
        .map(|l| layer_distance(&layer_heads(a, l)?, &layer_heads(b, l)?))
        .collect()
}

/// Attention of `model` over the gold `<bos> input <sep> output <eos>`
/// sequence, so that different models see identical tokens.
pub fn capture_gold<T: Real>(
    model: &Transformer<T>,
    vocab: &Vocab,
    instance: &TaskInstance,
) -> Result<(AttentionRecord, Encoded)> {
    let enc = encode_example(vocab, &instance.input, &instance.output)?;
    let (_, rec) = model.forward(&enc.ids, true)?;
    let rec = rec.ok_or_else(|| invalid("model did not return attention"))?;
    Ok((rec, enc))
}

/// Query positions that predict answer tokens: `<sep>` up to the last
/// output token.
pub fn output_region(enc: &Encoded) -> Range<usize> {
    enc.prompt_len - 1..enc.ids.len() - 1
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// Every key contributes its attention probability.
    #[default]
    Weighted,
    /// Only the most attended key counts.
    Argmax,
}

/// Histogram over `[0, 1]` with equal-width bins; the last bin is closed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub mass: Vec<f64>,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.mass.len()
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Averages histograms with equal weight.
    pub fn mean(hists: &[Histogram]) -> Result<Histogram> {
        let first = hists.first().ok_or_else(|| invalid("no histograms to average"))?;
        if hists.iter().any(|h| h.bins() != first.bins()) {
            return Err(shape("histograms with different bin counts"));
        }
        let mut mass = vec![0.0; first.bins()];
        for h in hists {
            for (m, x) in mass.iter_mut().zip(&h.mass) {
                *m += x / hists.len() as f64;
            }
        }
        Ok(Histogram { mass })
    }

    pub fn to_csv(&self) -> String {
        let k = self.bins() as f64;
        let mut s = String::from("bin_lo,bin_hi,mass\n");
        for (i, m) in self.mass.iter().enumerate() {
            s.push_str(&format!("{},{},{}\n", i as f64 / k, (i + 1) as f64 / k, m));
        }
        s
    }
}

/// Normalized distance `(t - n + 1) / t` between 1-based query `t` and key `n`.
pub fn normalized_distance(query: usize, key: usize) -> f64 {
    let (t, n) = (query + 1, key + 1);
    (t - n + 1) as f64 / t as f64
}

fn bin_of(d: f64, bins: usize) -> usize {
    ((d * bins as f64) as usize).min(bins - 1)
}

/// Distribution of attended distance over the queries in `region`, pooled
/// over all layers and heads. Each (layer, head, query) contributes unit mass.
pub fn attended_distance_histogram(
    rec: &AttentionRecord,
    region: Range<usize>,
    bins: usize,
    mode: DistanceMode,
) -> Result<Histogram> {
    if bins == 0 {
        return Err(invalid("histogram needs at least one bin"));
    }
    if region.is_empty() {
        return Err(invalid("empty query region"));
    }
    if region.end > rec.seq_len {
        return Err(invalid(format!("query region {region:?} exceeds {} positions", rec.seq_len)));
    }
    if rec.probs.is_empty() {
        return Err(invalid("attention record has no heads"));
    }
    let t_len = rec.seq_len;
    let mut mass = vec![0.0; bins];
    for p in &rec.probs {
        let d = p.data();
        for t in region.clone() {
            let row = &d[t * t_len..t * t_len + t + 1];
            let norm: f64 = row.iter().sum();
            if !(norm.is_finite() && norm > 0.0) {
                return Err(invalid(format!("query {t} has no attention mass")));
            }
            match mode {
                DistanceMode::Weighted => {
                    for (n, &w) in row.iter().enumerate() {
                        mass[bin_of(normalized_distance(t, n), bins)] += w / norm;
                    }
                }
                DistanceMode::Argmax => {
                    let n = crate::model::argmax(row)?;
                    mass[bin_of(normalized_distance(t, n), bins)] += 1.0;
                }
            }
        }
    }
    let units = (rec.probs.len() * region.len()) as f64;
    mass.iter_mut().for_each(|m| *m /= units);
    Ok(Histogram { mass })
}

/// Ranking score: unweighted mean accuracy over buckets `L+1..=2L`.
pub fn extrapolation_score(acc: &BucketAccuracy, length_threshold: usize) -> Option<f64> {
    acc.mean_over_buckets(length_threshold + 1, 2 * length_threshold)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    /// scheme -> mean rank (1 is best).
    pub mean_rank: BTreeMap<String, f64>,
    /// scenario -> scheme -> rank.
    pub ranks: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Ranks schemes within each scenario by descending score, averaging the
/// ranks of tied scores, then averages each scheme's rank across scenarios.
///
/// `scores` maps scheme -> scenario -> score. Every scheme must be scored on
/// every scenario.
pub fn mean_rank(scores: &BTreeMap<String, BTreeMap<String, f64>>) -> Result<RankTable> {
    let schemes: Vec<&String> = scores.keys().collect();
    let first = scores.values().next().ok_or_else(|| invalid("no schemes to rank"))?;
    let scenarios: Vec<&String> = first.keys().collect();
    if scenarios.is_empty() {
        return Err(invalid("no scenarios to rank"));
    }
    for (scheme, row) in scores {
        if row.len() != scenarios.len() || scenarios.iter().any(|s| !row.contains_key(*s)) {
            return Err(invalid(format!("scheme `{scheme}` is not scored on every scenario")));
        }
        if let Some((s, v)) = row.iter().find(|(_, v)| v.is_nan()) {
            return Err(invalid(format!("scheme `{scheme}` has score {v} on `{s}`")));
        }
    }

    let mut ranks = BTreeMap::new();
    let mut totals: BTreeMap<String, f64> = BTreeMap::new();
    for scenario in &scenarios {
        let mut order: Vec<(&String, f64)> = schemes.iter().map(|s| (*s, scores[*s][*scenario])).collect();
        order.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut row = BTreeMap::new();
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && order[j + 1].1 == order[i].1 {
                j += 1;
            }
            // Positions i..=j share the average of ranks i+1..=j+1.
            let r = (i + j + 2) as f64 / 2.0;
            for (scheme, _) in &order[i..=j] {
                row.insert((*scheme).clone(), r);
                *totals.entry((*scheme).clone()).or_default() += r;
            }
            i = j + 1;
        }
        ranks.insert((*scenario).clone(), row);
    }
    let k = scenarios.len() as f64;
    Ok(RankTable {
        mean_rank: totals.into_iter().map(|(s, t)| (s, t / k)).collect(),
        ranks,
    })
}
