//! Vocabulary construction, the training loop and exact-match evaluation.

mod eval;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{AttentionScale, NormPlacement, Transformer, TransformerConfig};
use crate::numerics::{adam_step, clip_grad_norm, cosine_lr, AdamState, Graph, Real};
use crate::tasks::{Dataset, Encoded, SplitSpec, TaskInstance, Vocab};

pub use eval::{
    encode_all, evaluate, evaluate_teacher_forced, make_batch, teacher_forced_correct, Batch, BucketAccuracy,
    BucketStat, Decoder, Generation,
};

/// Vocabulary over every split so that test-only tokens still encode.
pub fn build_vocab(dataset: &Dataset) -> Result<Vocab> {
    let all: Vec<&TaskInstance> = dataset
        .train
        .iter()
        .chain(&dataset.validation)
        .chain(&dataset.test)
        .collect();
    if all.is_empty() {
        return Err(invalid("cannot build a vocabulary from an empty dataset"));
    }
    Ok(Vocab::build(all.iter().flat_map(|t| [t.input.as_str(), t.output.as_str()])))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: TransformerConfig,
    pub batch_size: usize,
    /// Upper bound on optimizer steps.
    pub steps: usize,
    pub lr: f64,
    pub warmup_steps: usize,
    /// Final learning rate as a fraction of `lr`.
    pub min_lr_ratio: f64,
    pub grad_clip: f64,
    /// Validation exact match is measured every `eval_every` steps.
    pub eval_every: usize,
    /// Validation instances scored at each check; 0 means all.
    pub eval_limit: usize,
    /// Stop once validation accuracy reaches this value.
    pub stop_at_accuracy: Option<f64>,
    /// Stop after this many checks without improvement.
    pub patience: Option<usize>,
    pub checkpoint_every: Option<usize>,
    /// Test instances evaluated per bucket; 0 means all.
    pub test_per_bucket: usize,
    pub eval_batch_size: usize,
}

/// Model defaults for training: pre-LN, `1/sqrt(h)` logits and `sqrt(d)`
/// embedding scale. The literal block without them trains poorly at this
/// size, and unscaled embeddings are swamped by the sinusoidal table.
pub fn training_model_config() -> TransformerConfig {
    TransformerConfig {
        norm: NormPlacement::PreLn,
        attention_scale: AttentionScale::InvSqrtHeadDim,
        scale_embeddings: true,
        ..Default::default()
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: training_model_config(),
            batch_size: 64,
            steps: 5_000,
            lr: 3e-4,
            warmup_steps: 100,
            min_lr_ratio: 0.1,
            grad_clip: 1.0,
            eval_every: 250,
            eval_limit: 512,
            stop_at_accuracy: Some(1.0),
            patience: None,
            checkpoint_every: None,
            test_per_bucket: 0,
            eval_batch_size: 64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_batch_size == 0 {
            return Err(invalid("batch sizes must be positive"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.eval_every == 0 {
            return Err(invalid("eval_every must be positive"));
        }
        if !(0.0..=1.0).contains(&self.min_lr_ratio) {
            return Err(invalid("min_lr_ratio must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: usize,
    pub validation_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub task: String,
    pub seed: u64,
    pub scheme: String,
    pub length_threshold: usize,
    pub num_parameters: usize,
    pub steps_run: usize,
    pub stopped_early: bool,
    /// Training loss after each step.
    pub loss: Vec<f64>,
    pub evals: Vec<EvalPoint>,
    pub validation: BucketAccuracy,
    pub test: BucketAccuracy,
    pub wall_clock_secs: f64,
}

/// Where training writes checkpoints, if anywhere. A stem `dir/run` gives
/// `dir/run.step0000100.bin` at intervals and `dir/run.bin` at the end.
#[derive(Clone, Debug, Default)]
pub struct TrainOutputs {
    pub checkpoint_stem: Option<PathBuf>,
}

impl TrainOutputs {
    fn path(&self, suffix: &str) -> Option<PathBuf> {
        let stem = self.checkpoint_stem.as_ref()?;
        let mut name = stem.file_name()?.to_os_string();
        name.push(suffix);
        Some(stem.with_file_name(name))
    }

    fn save<T: Real>(&self, model: &Transformer<T>, suffix: &str) -> Result<()> {
        if let Some(path) = self.path(suffix) {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            model.save(&path)?;
        }
        Ok(())
    }
}

fn take_per_bucket(instances: &[TaskInstance], per_bucket: usize) -> Vec<TaskInstance> {
    if per_bucket == 0 {
        return instances.to_vec();
    }
    let mut seen = std::collections::HashMap::new();
    instances
        .iter()
        .filter(|t| {
            let c = seen.entry(t.bucket).or_insert(0usize);
            *c += 1;
            *c <= per_bucket
        })
        .cloned()
        .collect()
}

/// One optimizer step on `batch`; returns the pre-update loss.
pub fn train_step<T: Real>(
    model: &mut Transformer<T>,
    state: &mut AdamState<T>,
    batch: &Batch,
    lr: f64,
    grad_clip: f64,
) -> Result<f64> {
    let mut g = Graph::new();
    let vars = model.bind(&mut g, true);
    let fwd = model.build(&mut g, &vars, &batch.ids, batch.batch, batch.seq_len)?;
    let loss = g.cross_entropy(fwd.logits, &batch.targets, &batch.mask)?;
    let value = g.value(loss).data()[0].as_f64();
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("training loss became {value}")));
    }
    g.backward(loss)?;
    let mut grads: Vec<Vec<T>> = vars
        .iter()
        .zip(model.params())
        .map(|(&v, p)| g.grad(v).map(<[T]>::to_vec).unwrap_or_else(|| vec![T::zero(); p.len()]))
        .collect();
    if grad_clip > 0.0 {
        clip_grad_norm(&mut grads, grad_clip);
    }
    state.lr = lr;
    adam_step(model.params_mut(), &grads, state)?;
    Ok(value)
}

/// Trains a fresh model on `dataset` and evaluates it.
///
/// Validation checks use teacher-forced exact match; the final test score
/// uses greedy generation. Everything is a pure function of the inputs and
/// `seed`.
pub fn train<T: Real>(
    config: &TrainConfig,
    spec: &SplitSpec,
    dataset: &Dataset,
    vocab: &Vocab,
    seed: u64,
    outputs: &TrainOutputs,
) -> Result<(Transformer<T>, TrainReport, Vec<Generation>)> {
    config.validate()?;
    let length_threshold = spec.length_threshold;
    if dataset.train.is_empty() && config.steps > 0 {
        return Err(invalid("training split is empty"));
    }
    let started = Instant::now();
    let mut model_cfg = config.model.clone();
    model_cfg.vocab_size = vocab.len();
    model_cfg.max_train_position = dataset
        .train
        .iter()
        .map(|t| crate::tasks::tokenize(&t.input).len() + crate::tasks::tokenize(&t.output).len() + 3)
        .max()
        .unwrap_or(0);
    let mut model = Transformer::<T>::new(model_cfg, seed)?;
    let mut state = AdamState::new(model.params(), config.lr);
    let train_enc: Vec<Encoded> = encode_all(vocab, &dataset.train)?;
    let val_subset: Vec<TaskInstance> = if config.eval_limit == 0 {
        dataset.validation.clone()
    } else {
        dataset.validation.iter().take(config.eval_limit).cloned().collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_da7a);
    let mut order: Vec<usize> = (0..train_enc.len()).collect();
    let mut cursor = order.len();

    let val_check = |m: &Transformer<T>| -> Result<f64> {
        if val_subset.is_empty() {
            return Ok(0.0);
        }
        let acc = evaluate_teacher_forced(m, vocab, &val_subset, length_threshold, config.eval_batch_size)?;
        Ok(acc.overall().unwrap_or(0.0))
    };

    let mut loss = Vec::with_capacity(config.steps);
    let mut evals = vec![EvalPoint {
        step: 0,
        validation_accuracy: val_check(&model)?,
    }];
    let mut best = evals[0].validation_accuracy;
    let mut since_best = 0usize;
    let mut stopped_early = false;

    for step in 0..config.steps {
        let mut picks = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            picks.push(&train_enc[order[cursor]]);
            cursor += 1;
        }
        let batch = make_batch(&picks)?;
        let lr = cosine_lr(
            config.lr,
            step as u64,
            config.steps as u64,
            config.warmup_steps as u64,
            config.min_lr_ratio,
        );
        let l = train_step(&mut model, &mut state, &batch, lr, config.grad_clip)
            .map_err(|e| match e {
                Error::NonFinite(msg) => Error::NonFinite(format!("step {step}: {msg}")),
                other => other,
            })?;
        loss.push(l);

        let done = step + 1;
        if config.checkpoint_every.is_some_and(|every| every > 0 && done % every == 0) {
            outputs.save(&model, &format!(".step{done:07}.bin"))?;
        }
        if done % config.eval_every == 0 || done == config.steps {
            let acc = val_check(&model)?;
            evals.push(EvalPoint {
                step: done,
                validation_accuracy: acc,
            });
            if acc > best {
                best = acc;
                since_best = 0;
            } else {
                since_best += 1;
            }
            let reached = config.stop_at_accuracy.is_some_and(|target| acc >= target);
            let plateau = config.patience.is_some_and(|p| since_best >= p);
            if (reached || plateau) && done < config.steps {
                stopped_early = true;
                break;
            }
        }
    }

    let validation = evaluate_teacher_forced(&model, vocab, &dataset.validation, length_threshold, config.eval_batch_size)?;
    let test_set = take_per_bucket(&dataset.test, config.test_per_bucket);
    let (test, generations) = evaluate(&model, vocab, &test_set, length_threshold, config.eval_batch_size)?;
    outputs.save(&model, ".bin")?;
    let report = TrainReport {
        task: spec.task.to_string(),
        seed,
        scheme: model.config().scheme.name().to_string(),
        length_threshold,
        num_parameters: model.num_parameters(),
        steps_run: loss.len(),
        stopped_early,
        loss,
        evals,
        validation,
        test,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((model, report, generations))
}

pub fn write_generations(path: &Path, generations: &[Generation]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for g in generations {
        serde_json::to_writer(&mut w, g)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_generations(path: &Path) -> Result<Vec<Generation>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                msg: e.to_string(),
            })
        })
        .collect()
}
