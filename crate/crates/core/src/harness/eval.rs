use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{argmax, Transformer};
use crate::numerics::{Graph, Real};
use crate::tasks::{encode_example, tokenize, Encoded, TaskInstance, Vocab, EOS, PAD};

/// Anything that can continue prompts greedily.
pub trait Decoder {
    fn decode_batch(&self, prompts: &[Vec<usize>], max_new: usize) -> Result<Vec<Vec<usize>>>;
}

impl<T: Real> Decoder for Transformer<T> {
    fn decode_batch(&self, prompts: &[Vec<usize>], max_new: usize) -> Result<Vec<Vec<usize>>> {
        self.generate_batch(prompts, max_new, EOS)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketStat {
    pub bucket: usize,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// `bucket <= L`.
    pub iid: bool,
}

/// Exact-match accuracy per length bucket, ascending by bucket.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BucketAccuracy {
    pub buckets: Vec<BucketStat>,
}

impl BucketAccuracy {
    pub fn from_outcomes(outcomes: impl IntoIterator<Item = (usize, bool)>, threshold: usize) -> Self {
        let mut map: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for (bucket, ok) in outcomes {
            let e = map.entry(bucket).or_default();
            e.0 += 1;
            e.1 += ok as usize;
        }
        Self {
            buckets: map
                .into_iter()
                .map(|(bucket, (n, correct))| BucketStat {
                    bucket,
                    n,
                    correct,
                    accuracy: correct as f64 / n as f64,
                    iid: bucket <= threshold,
                })
                .collect(),
        }
    }

    fn pooled(&self, keep: impl Fn(&BucketStat) -> bool) -> Option<f64> {
        let (n, c) = self
            .buckets
            .iter()
            .filter(|b| keep(b))
            .fold((0, 0), |(n, c), b| (n + b.n, c + b.correct));
        (n > 0).then(|| c as f64 / n as f64)
    }

    /// Instance-weighted accuracy over I.I.D. buckets.
    pub fn iid_accuracy(&self) -> Option<f64> {
        self.pooled(|b| b.iid)
    }

    /// Instance-weighted accuracy over extrapolation buckets.
    pub fn extrapolation_accuracy(&self) -> Option<f64> {
        self.pooled(|b| !b.iid)
    }

    pub fn overall(&self) -> Option<f64> {
        self.pooled(|_| true)
    }

    /// Unweighted mean of per-bucket accuracies over `lo..=hi`.
    pub fn mean_over_buckets(&self, lo: usize, hi: usize) -> Option<f64> {
        let accs: Vec<f64> = self
            .buckets
            .iter()
            .filter(|b| (lo..=hi).contains(&b.bucket))
            .map(|b| b.accuracy)
            .collect();
        (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bucket,n,accuracy\n");
        for b in &self.buckets {
            s.push_str(&format!("{},{},{}\n", b.bucket, b.n, b.accuracy));
        }
        s
    }
}

/// One dumped generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub input: String,
    pub gold: String,
    pub prediction: String,
    pub bucket: usize,
    pub correct: bool,
}

impl Generation {
    /// Exact match on the answer region, recomputed from the texts.
    pub fn recompute_correct(&self) -> bool {
        tokenize(&self.gold) == tokenize(&self.prediction)
    }
}

pub fn encode_all(vocab: &Vocab, instances: &[TaskInstance]) -> Result<Vec<Encoded>> {
    instances
        .iter()
        .map(|t| encode_example(vocab, &t.input, &t.output))
        .collect()
}

/// Greedy-generation exact match per bucket, with every generation.
pub fn evaluate<D: Decoder + ?Sized>(
    decoder: &D,
    vocab: &Vocab,
    instances: &[TaskInstance],
    threshold: usize,
    batch_size: usize,
) -> Result<(BucketAccuracy, Vec<Generation>)> {
    let encoded = encode_all(vocab, instances)?;
    let mut order: Vec<usize> = (0..instances.len()).collect();
    // Equal prompt lengths decode together.
    order.sort_by_key(|&i| (encoded[i].prompt_len, i));
    let mut predictions: Vec<Vec<usize>> = vec![Vec::new(); instances.len()];
    for chunk in order.chunks(batch_size.max(1)) {
        let prompts: Vec<Vec<usize>> = chunk.iter().map(|&i| encoded[i].prompt().to_vec()).collect();
        let max_new = chunk.iter().map(|&i| encoded[i].answer().len()).max().unwrap_or(0) + 1;
        let outs = decoder.decode_batch(&prompts, max_new)?;
        for (&i, out) in chunk.iter().zip(outs) {
            predictions[i] = out;
        }
    }
    let generations: Vec<Generation> = instances
        .iter()
        .zip(&encoded)
        .zip(&predictions)
        .map(|((inst, enc), pred)| Generation {
            input: inst.input.clone(),
            gold: inst.output.clone(),
            prediction: vocab.decode(pred),
            bucket: inst.bucket,
            correct: pred.as_slice() == enc.answer(),
        })
        .collect();
    let acc = BucketAccuracy::from_outcomes(generations.iter().map(|g| (g.bucket, g.correct)), threshold);
    Ok((acc, generations))
}

/// Right-padded batch of encoded examples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub ids: Vec<usize>,
    pub targets: Vec<usize>,
    pub mask: Vec<bool>,
    pub batch: usize,
    pub seq_len: usize,
}

/// Model input is each sequence without its final `<eos>`; targets are the
/// next tokens. Padding is masked out of the loss.
pub fn make_batch(examples: &[&Encoded]) -> Result<Batch> {
    if examples.is_empty() {
        return Err(invalid("empty batch"));
    }
    let seq_len = examples.iter().map(|e| e.ids.len() - 1).max().unwrap();
    let mut b = Batch {
        ids: Vec::with_capacity(examples.len() * seq_len),
        targets: Vec::with_capacity(examples.len() * seq_len),
        mask: Vec::with_capacity(examples.len() * seq_len),
        batch: examples.len(),
        seq_len,
    };
    for e in examples {
        let (targets, mask) = e.targets();
        let n = targets.len();
        b.ids.extend_from_slice(&e.ids[..n]);
        b.targets.extend_from_slice(targets);
        b.mask.extend(mask);
        for _ in n..seq_len {
            b.ids.push(PAD);
            b.targets.push(PAD);
            b.mask.push(false);
        }
    }
    Ok(b)
}

/// Whether every scored position's argmax equals its target, per example.
/// This coincides with greedy generation reproducing the gold answer.
pub fn teacher_forced_correct<T: Real>(model: &Transformer<T>, batch: &Batch) -> Result<Vec<bool>> {
    let mut g = Graph::new();
    let vars = model.bind(&mut g, false);
    let fwd = model.build(&mut g, &vars, &batch.ids, batch.batch, batch.seq_len)?;
    let logits = g.value(fwd.logits).data();
    let v = model.config().vocab_size;
    let mut out = vec![true; batch.batch];
    for (row, (&target, &scored)) in batch.targets.iter().zip(&batch.mask).enumerate() {
        if scored && argmax(&logits[row * v..(row + 1) * v])? != target {
            out[row / batch.seq_len] = false;
        }
    }
    Ok(out)
}

/// Teacher-forced exact match per bucket.
pub fn evaluate_teacher_forced<T: Real>(
    model: &Transformer<T>,
    vocab: &Vocab,
    instances: &[TaskInstance],
    threshold: usize,
    batch_size: usize,
) -> Result<BucketAccuracy> {
    let encoded = encode_all(vocab, instances)?;
    let mut outcomes = Vec::with_capacity(instances.len());
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.sort_by_key(|&i| (encoded[i].ids.len(), i));
    for chunk in order.chunks(batch_size.max(1)) {
        let refs: Vec<&Encoded> = chunk.iter().map(|&i| &encoded[i]).collect();
        let ok = teacher_forced_correct(model, &make_batch(&refs)?)?;
        outcomes.extend(chunk.iter().zip(ok).map(|(&i, c)| (instances[i].bucket, c)));
    }
    Ok(BucketAccuracy::from_outcomes(outcomes, threshold))
}
