use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use lengen::analysis::{
    attended_distance_histogram, capture_gold, extrapolation_score, layer_distances, mean_rank, output_region,
    Histogram,
};
use lengen::harness::{build_vocab, evaluate, train, write_generations, BucketAccuracy, TrainOutputs, TrainReport};
use lengen::model::{save_attention_dump, AttentionRecord, Transformer};
use lengen::numerics::Real;
use lengen::tasks::{generate_split, load_external_split, Dataset, SplitSpec, TaskInstance, Vocab};
use lengen::theorems::{verify_absolute, verify_relative, Certificate};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Precision, Resolved};
use crate::CliError;

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Serialize)]
struct Manifest<'a> {
    subcommand: &'a str,
    code_version: &'a str,
    config_file: Option<&'a Path>,
    overrides: &'a [(String, String)],
    config_sha256: String,
    config: &'a Value,
    started_unix: u64,
    finished_unix: u64,
    artifacts: Vec<String>,
}

pub fn dispatch(name: &str, r: &Resolved) -> Result<(), CliError> {
    let started = now();
    let out = &r.config.out;
    fs::create_dir_all(out)?;
    let artifacts = match name {
        "gen-data" => gen_data(r)?,
        "train" => train_cmd(r)?,
        "eval" => eval_cmd(r)?,
        "analyze" => analyze_cmd(r)?,
        "verify-theorems" => theorems_cmd(r)?,
        "rank" => rank_cmd(r)?,
        other => return Err(CliError::Usage(format!("error: unknown subcommand `{other}`\n"))),
    };
    let manifest = Manifest {
        subcommand: name,
        code_version: env!("CARGO_PKG_VERSION"),
        config_file: r.file.as_deref(),
        overrides: &r.overrides,
        config_sha256: r.sha256(),
        config: &r.json,
        started_unix: started,
        finished_unix: now(),
        artifacts: artifacts
            .iter()
            .map(|p| p.strip_prefix(out).unwrap_or(p).display().to_string())
            .collect(),
    };
    write_json(&out.join(format!("{name}.manifest.json")), &manifest)?;
    Ok(())
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// File-name prefix shared by a dataset and the runs trained on it.
pub fn dataset_prefix(spec: &SplitSpec) -> String {
    let mut s = format!(
        "{}_L{}_seed{}",
        spec.task.to_string().replace(':', "-"),
        spec.length_threshold,
        spec.seed
    );
    if let Some(mask) = spec.scratchpad {
        if let Ok(Value::String(bits)) = serde_json::to_value(mask) {
            s.push_str(&format!("_sp{bits}"));
        }
    }
    s
}

pub fn run_label(spec: &SplitSpec, scheme: &str, seed: u64) -> String {
    format!("{}_{scheme}_s{seed}", dataset_prefix(spec))
}

/// Vocabulary file stored beside checkpoint `dir/label[.stepN].bin`.
pub fn vocab_path(checkpoint: &Path) -> PathBuf {
    let name = checkpoint.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let label = name.split('.').next().unwrap_or(name);
    checkpoint.with_file_name(format!("{label}.vocab.json"))
}

fn make_dataset(r: &Resolved) -> Result<(Dataset, Vec<PathBuf>), CliError> {
    let spec = &r.config.data;
    spec.validate().map_err(config_err)?;
    let ds = generate_split(spec)?;
    let paths = ds.save(&r.config.out.join("datasets"), &dataset_prefix(spec), r.config.gzip)?;
    Ok((ds, paths))
}

fn gen_data(r: &Resolved) -> Result<Vec<PathBuf>, CliError> {
    let (ds, paths) = make_dataset(r)?;
    println!(
        "{}: {} train, {} validation, {} test",
        dataset_prefix(&r.config.data),
        ds.train.len(),
        ds.validation.len(),
        ds.test.len()
    );
    Ok(paths)
}

fn load_vocab(path: &Path) -> Result<Vocab, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Runtime(anyhow::anyhow!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn train_cmd(r: &Resolved) -> Result<Vec<PathBuf>, CliError> {
    let c = &r.config;
    if !r.user_sets("train.model.scheme") {
        return Err(config_err("train.model.scheme must be named explicitly"));
    }
    if c.seeds.is_empty() {
        return Err(config_err("seeds must not be empty"));
    }
    c.train.validate().map_err(config_err)?;
    let mut probe = c.train.model.clone();
    probe.vocab_size = probe.vocab_size.max(4);
    probe.validate().map_err(config_err)?;

    let (ds, mut artifacts) = make_dataset(r)?;
    let vocab = build_vocab(&ds)?;
    let scheme = c.train.model.scheme.name();
    for &seed in &c.seeds {
        let label = run_label(&c.data, scheme, seed);
        let ckpt_dir = c.out.join("checkpoints");
        let reports = c.out.join("reports");
        let outputs = TrainOutputs {
            checkpoint_stem: Some(ckpt_dir.join(&label)),
        };
        let (report, generations) = match c.precision {
            Precision::F32 => {
                let (_, rep, gens) = train::<f32>(&c.train, &c.data, &ds, &vocab, seed, &outputs)?;
                (rep, gens)
            }
            Precision::F64 => {
                let (_, rep, gens) = train::<f64>(&c.train, &c.data, &ds, &vocab, seed, &outputs)?;
                (rep, gens)
            }
        };
        let vocab_file = ckpt_dir.join(format!("{label}.vocab.json"));
        write_json(&vocab_file, &vocab)?;
        let report_file = reports.join(format!("{label}.json"));
        write_json(&report_file, &report)?;
        let csv = reports.join(format!("{label}.buckets.csv"));
        fs::write(&csv, report.test.to_csv())?;
        let gens = reports.join(format!("{label}.generations.jsonl"));
        write_generations(&gens, &generations)?;
        println!(
            "{label}: {} steps, validation {:.4}, test iid {:.4}, extrapolation {:.4}",
            report.steps_run,
            report.validation.overall().unwrap_or(f64::NAN),
            report.test.iid_accuracy().unwrap_or(f64::NAN),
            extrapolation_score(&report.test, c.data.length_threshold).unwrap_or(f64::NAN),
        );
        artifacts.extend([ckpt_dir.join(format!("{label}.bin")), vocab_file, report_file, csv, gens]);
    }
    Ok(artifacts)
}

fn eval_instances(r: &Resolved) -> Result<Vec<TaskInstance>, CliError> {
    let c = &r.config;
    if let Some(path) = &c.eval.external {
        return Ok(load_external_split(path, c.eval.format)?);
    }
    c.data.validate().map_err(config_err)?;
    let ds = generate_split(&c.data)?;
    ds.split(&c.eval.split)
        .map(<[TaskInstance]>::to_vec)
        .ok_or_else(|| config_err(format!("unknown split `{}`", c.eval.split)))
}

#[derive(Serialize)]
struct EvalReport<'a> {
    checkpoint: &'a Path,
    source: String,
    length_threshold: usize,
    iid_accuracy: Option<f64>,
    extrapolation_accuracy: Option<f64>,
    extrapolation_score: Option<f64>,
    accuracy: &'a BucketAccuracy,
}

fn eval_with<T: Real>(
    r: &Resolved,
    checkpoint: &Path,
    vocab: &Vocab,
    instances: &[TaskInstance],
) -> Result<(BucketAccuracy, Vec<lengen::harness::Generation>), CliError> {
    let model = Transformer::<T>::load(checkpoint)?;
    Ok(evaluate(
        &model,
        vocab,
        instances,
        r.config.data.length_threshold,
        r.config.eval.batch_size,
    )?)
}

fn eval_cmd(r: &Resolved) -> Result<Vec<PathBuf>, CliError> {
    let c = &r.config;
    let checkpoint = c
        .eval
        .checkpoint
        .clone()
        .ok_or_else(|| config_err("eval.checkpoint is required"))?;
    let vocab = load_vocab(&c.eval.vocab.clone().unwrap_or_else(|| vocab_path(&checkpoint)))?;
    let instances = eval_instances(r)?;
    let (acc, gens) = match c.precision {
        Precision::F32 => eval_with::<f32>(r, &checkpoint, &vocab, &instances)?,
        Precision::F64 => eval_with::<f64>(r, &checkpoint, &vocab, &instances)?,
    };
    let stem = checkpoint.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
    let reports = c.out.join("reports");
    let l = c.data.length_threshold;
    let report = EvalReport {
        checkpoint: &checkpoint,
        source: match &c.eval.external {
            Some(p) => p.display().to_string(),
            None => format!("{}.{}", dataset_prefix(&c.data), c.eval.split),
        },
        length_threshold: l,
        iid_accuracy: acc.iid_accuracy(),
        extrapolation_accuracy: acc.extrapolation_accuracy(),
        extrapolation_score: extrapolation_score(&acc, l),
        accuracy: &acc,
    };
    let json_path = reports.join(format!("eval_{stem}.json"));
    write_json(&json_path, &report)?;
    let csv = reports.join(format!("eval_{stem}.buckets.csv"));
    fs::write(&csv, acc.to_csv())?;
    let gen_path = reports.join(format!("eval_{stem}.generations.jsonl"));
    write_generations(&gen_path, &gens)?;
    println!(
        "{stem}: iid {:.4}, extrapolation {:.4} over {} instances",
        report.iid_accuracy.unwrap_or(f64::NAN),
        report.extrapolation_accuracy.unwrap_or(f64::NAN),
        instances.len()
    );
    Ok(vec![json_path, csv, gen_path])
}

#[derive(Serialize)]
struct AnalysisReport {
    models: Vec<String>,
    instances: usize,
    bins: usize,
    /// `[a][b][layer]`, averaged over instances.
    layer_distance: Vec<Vec<Vec<f64>>>,
    histograms: BTreeMap<String, Vec<f64>>,
}

fn analyze_cmd(r: &Resolved) -> Result<Vec<PathBuf>, CliError> {
    let c = &r.config;
    let a = &c.analysis;
    if a.checkpoints.is_empty() {
        return Err(config_err("analysis.checkpoints must list at least one checkpoint"));
    }
    if a.instances == 0 || a.bins == 0 {
        return Err(config_err("analysis.instances and analysis.bins must be positive"));
    }
    let instances: Vec<TaskInstance> = eval_instances(r)?.into_iter().take(a.instances).collect();
    if instances.is_empty() {
        return Err(config_err("no instances to analyze"));
    }
    let mut models = Vec::new();
    let mut labels = Vec::new();
    for path in &a.checkpoints {
        let vocab = load_vocab(&vocab_path(path))?;
        models.push((Transformer::<f64>::load(path)?, vocab));
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
        let mut label = stem.to_string();
        let mut k = 1;
        while labels.contains(&label) {
            k += 1;
            label = format!("{stem}#{k}");
        }
        labels.push(label);
    }
    let n = models.len();
    let num_layers = models[0].0.config().num_layers;
    if models.iter().any(|(m, _)| m.config().num_layers != num_layers) {
        return Err(config_err("analyzed checkpoints must have the same number of layers"));
    }

    let attention_dir = c.out.join("attention");
    let mut artifacts = Vec::new();
    let mut dist = vec![vec![vec![0.0; num_layers]; n]; n];
    let mut hists: Vec<Vec<Histogram>> = vec![Vec::new(); n];
    for (i, inst) in instances.iter().enumerate() {
        let mut records: Vec<AttentionRecord> = Vec::with_capacity(n);
        for (m, ((model, vocab), label)) in models.iter().zip(&labels).enumerate() {
            let (rec, enc) = capture_gold(model, vocab, inst)?;
            hists[m].push(attended_distance_histogram(&rec, output_region(&enc), a.bins, a.mode)?);
            if i < a.dumps {
                let path = attention_dir.join(format!("{label}.{i}.bin"));
                fs::create_dir_all(&attention_dir)?;
                let meta = json!({
                    "checkpoint": a.checkpoints[m],
                    "input": inst.input,
                    "output": inst.output,
                    "bucket": inst.bucket,
                    "tokens": enc.ids.iter().map(|&t| vocab.token(t)).collect::<Vec<_>>(),
                });
                save_attention_dump(&path, &rec, &meta)?;
                artifacts.push(path);
            }
            records.push(rec);
        }
        for x in 0..n {
            for y in 0..n {
                let d = layer_distances(&records[x], &records[y])?;
                for (acc, v) in dist[x][y].iter_mut().zip(d) {
                    *acc += v / instances.len() as f64;
                }
            }
        }
    }
    let reports = c.out.join("reports");
    let mut histograms = BTreeMap::new();
    for (label, hs) in labels.iter().zip(&hists) {
        let mean = Histogram::mean(hs)?;
        let csv = reports.join(format!("analysis_{label}.hist.csv"));
        fs::create_dir_all(&reports)?;
        fs::write(&csv, mean.to_csv())?;
        artifacts.push(csv);
        histograms.insert(label.clone(), mean.mass);
    }
    let report = AnalysisReport {
        models: labels,
        instances: instances.len(),
        bins: a.bins,
        layer_distance: dist,
        histograms,
    };
    let path = reports.join("analysis.json");
    write_json(&path, &report)?;
    artifacts.push(path);
    println!("analyzed {n} models on {} instances", instances.len());
    Ok(artifacts)
}

fn theorems_cmd(r: &Resolved) -> Result<Vec<PathBuf>, CliError> {
    let t = &r.config.theorems;
    if t.absolute_seeds.is_empty() || t.relative_seeds.is_empty() {
        return Err(config_err("theorem seeds must not be empty"));
    }
    let mut certs: Vec<Certificate> = Vec::new();
    for &len in &t.absolute_lengths {
        certs.push(verify_absolute(len, t.absolute_d, t.absolute_h, &t.absolute_seeds, t.tolerance).map_err(config_err)?);
    }
    for &h in &t.relative_heads {
        certs.push(verify_relative(t.relative_length, t.relative_d, h, &t.relative_seeds, t.tolerance).map_err(config_err)?);
    }
    for c in &certs {
        println!(
            "{} T={} d={} h={}: max error {:.3e} {}",
            c.theorem,
            c.seq_len,
            c.d,
            c.h,
            c.max_error,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
    let path = r.config.out.join("reports").join("theorems.json");
    write_json(&path, &certs)?;
    if let Some(bad) = certs.iter().find(|c| !c.pass) {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "{} certificate failed at T={}, h={}: max error {}",
            bad.theorem,
            bad.seq_len,
            bad.h,
            bad.max_error
        )));
    }
    Ok(vec![path])
}

fn collect_reports(r: &Resolved) -> Result<Vec<(PathBuf, TrainReport)>, CliError> {
    let sources = if r.config.rank.reports.is_empty() {
        vec![r.config.out.join("reports")]
    } else {
        r.config.rank.reports.clone()
    };
    let mut out = Vec::new();
    for src in sources {
        if src.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(&src)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            for f in files {
                // Directories also hold eval and analysis reports.
                if let Ok(rep) = serde_json::from_str::<TrainReport>(&fs::read_to_string(&f)?) {
                    out.push((f, rep));
                }
            }
        } else {
            let text = fs::read_to_string(&src)
                .map_err(|e| CliError::Runtime(anyhow::anyhow!("{}: {e}", src.display())))?;
            let rep = serde_json::from_str::<TrainReport>(&text)
                .map_err(|e| CliError::Runtime(anyhow::anyhow!("{}: {e}", src.display())))?;
            out.push((src, rep));
        }
    }
    Ok(out)
}

fn rank_cmd(r: &Resolved) -> Result<Vec<PathBuf>, CliError> {
    let reports = collect_reports(r)?;
    if reports.is_empty() {
        return Err(CliError::Runtime(anyhow::anyhow!("no training reports found")));
    }
    // scheme -> scenario -> per-seed scores
    let mut raw: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for (path, rep) in &reports {
        let score = extrapolation_score(&rep.test, rep.length_threshold).ok_or_else(|| {
            CliError::Runtime(anyhow::anyhow!("{} has no extrapolation buckets", path.display()))
        })?;
        let scenario = format!("{} L={}", rep.task, rep.length_threshold);
        raw.entry(rep.scheme.clone())
            .or_default()
            .entry(scenario)
            .or_default()
            .push(score);
    }
    let scores: BTreeMap<String, BTreeMap<String, f64>> = raw
        .iter()
        .map(|(scheme, row)| {
            (
                scheme.clone(),
                row.iter()
                    .map(|(sc, v)| (sc.clone(), v.iter().sum::<f64>() / v.len() as f64))
                    .collect(),
            )
        })
        .collect();
    let table = mean_rank(&scores).map_err(|e| CliError::Runtime(e.into()))?;
    let dir = r.config.out.join("reports");
    let json_path = dir.join("rank.json");
    write_json(
        &json_path,
        &json!({ "reports": reports.len(), "scores": scores, "ranks": table.ranks, "mean_rank": table.mean_rank }),
    )?;
    let mut order: Vec<(&String, &f64)> = table.mean_rank.iter().collect();
    order.sort_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(b.0)));
    let mut csv = String::from("scheme,mean_rank\n");
    for (scheme, rank) in &order {
        csv.push_str(&format!("{scheme},{rank}\n"));
        println!("{scheme:>18}  {rank:.3}");
    }
    let csv_path = dir.join("rank.csv");
    fs::write(&csv_path, csv)?;
    Ok(vec![json_path, csv_path])
}
