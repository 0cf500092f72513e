use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scratchpad::{render_scratchpad, ScratchpadMask};

use super::{Problem, Task, TaskInstance};

pub const DATASET_SCHEMA: u32 = 1;
/// Redraws of one test bucket before a new bucket is sampled.
pub const MAX_REJECTIONS: usize = 64;

const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub task: Task,
    /// Train buckets are drawn from `U(min, L)`, test buckets from `U(min, 2L)`.
    pub length_threshold: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    pub scratchpad: Option<ScratchpadMask>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            task: Task::Addition,
            length_threshold: 20,
            train_count: 100_000,
            test_count: 10_000,
            validation_fraction: 0.15,
            seed: 0,
            scratchpad: None,
        }
    }
}

impl SplitSpec {
    /// Threshold used when none is given: 20, or 8 with a scratchpad.
    pub fn default_threshold(scratchpad: bool) -> usize {
        if scratchpad {
            8
        } else {
            20
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length_threshold < self.task.min_bucket() {
            return Err(invalid(format!(
                "length threshold {} is below the smallest {} bucket {}",
                self.length_threshold,
                self.task,
                self.task.min_bucket()
            )));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(invalid(format!(
                "validation fraction {} must lie in [0, 1)",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dataset {
    pub train: Vec<TaskInstance>,
    pub validation: Vec<TaskInstance>,
    pub test: Vec<TaskInstance>,
}

/// RNG for the `index`-th draw of a split stream; independent of any other draw.
pub fn instance_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream << 48) | index);
    rng
}

fn finish(spec: &SplitSpec, mut inst: TaskInstance) -> Result<TaskInstance> {
    if let Some(mask) = spec.scratchpad {
        let problem = Problem::parse(spec.task, &inst.input)?;
        inst.output = render_scratchpad(&problem, mask)?;
    }
    Ok(inst)
}

/// Generates train, validation and test sets. Validation is the tail of the
/// train draw; test instances never repeat a train or validation input.
pub fn generate_split(spec: &SplitSpec) -> Result<Dataset> {
    spec.validate()?;
    let lo = spec.task.min_bucket();
    let l = spec.length_threshold;

    let mut train = Vec::with_capacity(spec.train_count);
    let mut i = 0u64;
    while train.len() < spec.train_count {
        let mut rng = instance_rng(spec.seed, TRAIN_STREAM, i);
        i += 1;
        let bucket = rng.random_range(lo..=l);
        for inst in spec.task.generate(bucket, &mut rng)? {
            if train.len() < spec.train_count {
                train.push(finish(spec, inst)?);
            }
        }
    }
    let n_val = (spec.train_count as f64 * spec.validation_fraction).round() as usize;
    let validation = train.split_off(spec.train_count - n_val);

    let seen: HashSet<&str> = train.iter().chain(&validation).map(|t| t.input.as_str()).collect();
    let mut test = Vec::with_capacity(spec.test_count);
    let mut i = 0u64;
    while test.len() < spec.test_count {
        let mut rng = instance_rng(spec.seed, TEST_STREAM, i);
        i += 1;
        let mut bucket = rng.random_range(lo..=2 * l);
        let mut rejections = 0;
        loop {
            let fresh: Vec<TaskInstance> = spec
                .task
                .generate(bucket, &mut rng)?
                .into_iter()
                .filter(|t| !seen.contains(t.input.as_str()))
                .collect();
            if !fresh.is_empty() {
                for inst in fresh {
                    if test.len() < spec.test_count {
                        test.push(finish(spec, inst)?);
                    }
                }
                break;
            }
            rejections += 1;
            if rejections >= MAX_REJECTIONS {
                bucket = rng.random_range(lo..=2 * l);
                rejections = 0;
            }
        }
    }
    Ok(Dataset {
        train,
        validation,
        test,
    })
}

/// One JSONL line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    #[serde(default = "schema_version")]
    pub schema: u32,
    pub input: String,
    pub output: String,
    pub bucket: usize,
    #[serde(default)]
    pub oracle: Option<String>,
}

fn schema_version() -> u32 {
    DATASET_SCHEMA
}

impl From<&TaskInstance> for Record {
    fn from(t: &TaskInstance) -> Self {
        Self {
            schema: DATASET_SCHEMA,
            input: t.input.clone(),
            output: t.output.clone(),
            bucket: t.bucket,
            oracle: Some(t.oracle.clone()),
        }
    }
}

impl From<Record> for TaskInstance {
    fn from(r: Record) -> Self {
        let oracle = r.oracle.unwrap_or_else(|| r.output.clone());
        Self {
            input: r.input,
            output: r.output,
            bucket: r.bucket,
            oracle,
        }
    }
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

/// Writes one record per line; gzip when the path ends in `.gz`.
pub fn write_jsonl(path: &Path, instances: &[TaskInstance]) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    if is_gz(path) {
        let mut gz = GzEncoder::new(file, Compression::default());
        write_records(&mut gz, instances)?;
        gz.finish()?.flush()?;
    } else {
        let mut file = file;
        write_records(&mut file, instances)?;
        file.flush()?;
    }
    Ok(())
}

fn write_records<W: Write>(w: &mut W, instances: &[TaskInstance]) -> Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut *w, &Record::from(inst))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn open_lines(path: &Path) -> Result<Box<dyn BufRead>> {
    let file = File::open(path)?;
    let r: Box<dyn Read> = if is_gz(path) {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    Ok(Box::new(BufReader::new(r)))
}

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: PathBuf::from(path),
        line,
        msg: msg.into(),
    }
}

pub fn read_jsonl(path: &Path) -> Result<Vec<TaskInstance>> {
    let mut out = Vec::new();
    for (n, line) in open_lines(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| parse_error(path, n + 1, e.to_string()))?;
        if rec.schema != DATASET_SCHEMA {
            return Err(parse_error(path, n + 1, format!("unsupported schema {}", rec.schema)));
        }
        out.push(rec.into());
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExternalFormat {
    /// `input<TAB>output<TAB>bucket[<TAB>oracle]` per line.
    Tsv,
    /// Records with `input`, `output`, `bucket` and optional `oracle`.
    Jsonl,
}

/// Loads a pre-made split; buckets come from the file.
pub fn load_external_split(path: &Path, format: ExternalFormat) -> Result<Vec<TaskInstance>> {
    match format {
        ExternalFormat::Jsonl => read_jsonl(path),
        ExternalFormat::Tsv => {
            let mut out = Vec::new();
            for (n, line) in open_lines(path)?.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split('\t').collect();
                if !(3..=4).contains(&fields.len()) {
                    return Err(parse_error(
                        path,
                        n + 1,
                        format!("expected 3 or 4 tab-separated fields, found {}", fields.len()),
                    ));
                }
                let bucket = fields[2]
                    .trim()
                    .parse()
                    .map_err(|_| parse_error(path, n + 1, format!("bucket `{}` is not an integer", fields[2])))?;
                out.push(TaskInstance {
                    input: fields[0].to_string(),
                    output: fields[1].to_string(),
                    bucket,
                    oracle: fields.get(3).unwrap_or(&fields[1]).to_string(),
                });
            }
            Ok(out)
        }
    }
}

impl Dataset {
    pub const SPLITS: [&'static str; 3] = ["train", "validation", "test"];

    pub fn split(&self, name: &str) -> Option<&[TaskInstance]> {
        match name {
            "train" => Some(&self.train),
            "validation" => Some(&self.validation),
            "test" => Some(&self.test),
            _ => None,
        }
    }

    /// Writes `{prefix}.{split}.jsonl[.gz]` under `dir`; returns the paths.
    pub fn save(&self, dir: &Path, prefix: &str, gzip: bool) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let ext = if gzip { "jsonl.gz" } else { "jsonl" };
        Self::SPLITS
            .iter()
            .map(|s| {
                let path = dir.join(format!("{prefix}.{s}.{ext}"));
                write_jsonl(&path, self.split(s).unwrap())?;
                Ok(path)
            })
            .collect()
    }

    pub fn load(dir: &Path, prefix: &str) -> Result<Self> {
        let find = |s: &str| -> Result<Vec<TaskInstance>> {
            let plain = dir.join(format!("{prefix}.{s}.jsonl"));
            let gz = dir.join(format!("{prefix}.{s}.jsonl.gz"));
            if plain.exists() {
                read_jsonl(&plain)
            } else {
                read_jsonl(&gz)
            }
        };
        Ok(Self {
            train: find("train")?,
            validation: find("validation")?,
            test: find("test")?,
        })
    }
}
