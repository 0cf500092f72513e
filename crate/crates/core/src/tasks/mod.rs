//! Seeded generators for the algorithmic tasks, plus vocabulary and
//! dataset plumbing.

mod dataset;
mod problem;
mod vocab;

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use dataset::{
    generate_split, instance_rng, load_external_split, read_jsonl, write_jsonl, Dataset, ExternalFormat, Record,
    SplitSpec, DATASET_SCHEMA, MAX_REJECTIONS,
};
pub use problem::{
    add_digits, eval_mod10, gen_addition, gen_copy, gen_lego, gen_parity, gen_polynomial, gen_reverse, gen_sorting,
    gen_summation, lego_name, Problem,
};
pub use vocab::{encode_example, tokenize, Encoded, Vocab, BOS, EOS, PAD, SEP, SPECIALS};

const ALPHABET_V1: &str = include_str!("../../resources/alphabet_v1.txt");

/// The 50-symbol alphabet in canonical order.
pub fn alphabet() -> &'static [&'static str] {
    static CELL: OnceLock<Vec<&'static str>> = OnceLock::new();
    CELL.get_or_init(|| {
        ALPHABET_V1
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect()
    })
}

/// One generated example.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskInstance {
    pub input: String,
    pub output: String,
    pub bucket: usize,
    pub oracle: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SortVariant {
    SingleToken,
    MultiDigit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CopyVariant {
    RepeatSameToken,
    TokenSubstitute,
    RandomTokens,
    RepeatSameToken2x,
    RandomTokens2x,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReverseVariant {
    Reverse,
    DoubleReverse,
}

impl CopyVariant {
    pub const ALL: [Self; 5] = [
        Self::RepeatSameToken,
        Self::TokenSubstitute,
        Self::RandomTokens,
        Self::RepeatSameToken2x,
        Self::RandomTokens2x,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::RepeatSameToken => "repeat_same_token",
            Self::TokenSubstitute => "token_substitute",
            Self::RandomTokens => "random_tokens",
            Self::RepeatSameToken2x => "repeat_same_token_2x",
            Self::RandomTokens2x => "random_tokens_2x",
        }
    }
}

impl FromStr for CopyVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| invalid(format!("unknown copy variant `{s}`")))
    }
}

/// A task together with its variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Task {
    Addition,
    Polynomial,
    Sorting(SortVariant),
    Summation,
    Parity,
    Lego,
    Copy(CopyVariant),
    Reverse(ReverseVariant),
}

impl Task {
    pub fn all() -> Vec<Self> {
        let mut v = vec![
            Self::Addition,
            Self::Polynomial,
            Self::Sorting(SortVariant::SingleToken),
            Self::Sorting(SortVariant::MultiDigit),
            Self::Summation,
            Self::Parity,
            Self::Lego,
        ];
        v.extend(CopyVariant::ALL.map(Self::Copy));
        v.push(Self::Reverse(ReverseVariant::Reverse));
        v.push(Self::Reverse(ReverseVariant::DoubleReverse));
        v
    }

    /// Smallest meaningful bucket.
    pub fn min_bucket(self) -> usize {
        match self {
            Self::Lego => 2,
            _ => 1,
        }
    }

    /// Draws instances of bucket `bucket`. Every task yields exactly one
    /// instance except LEGO, which yields one per queried variable.
    pub fn generate(self, bucket: usize, rng: &mut impl Rng) -> Result<Vec<TaskInstance>> {
        Ok(match self {
            Self::Addition => {
                // The longer operand sets the bucket; the other is U(1, bucket).
                let other = rng.random_range(1..=bucket.max(1));
                if rng.random_bool(0.5) {
                    vec![gen_addition(bucket, other, rng)?]
                } else {
                    vec![gen_addition(other, bucket, rng)?]
                }
            }
            Self::Polynomial => vec![gen_polynomial(bucket, rng)?],
            Self::Sorting(v) => vec![gen_sorting(bucket, v, rng)?],
            Self::Summation => vec![gen_summation(bucket, rng)?],
            Self::Parity => vec![gen_parity(bucket, rng)?],
            Self::Lego => gen_lego(bucket, rng)?,
            Self::Copy(v) => vec![gen_copy(bucket, v, rng)?],
            Self::Reverse(v) => vec![gen_reverse(bucket, v, rng)?],
        })
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Addition => f.write_str("addition"),
            Self::Polynomial => f.write_str("polynomial"),
            Self::Sorting(SortVariant::SingleToken) => f.write_str("sorting:single_token"),
            Self::Sorting(SortVariant::MultiDigit) => f.write_str("sorting:multi_digit"),
            Self::Summation => f.write_str("summation"),
            Self::Parity => f.write_str("parity"),
            Self::Lego => f.write_str("lego"),
            Self::Copy(v) => write!(f, "copy:{}", v.name()),
            Self::Reverse(ReverseVariant::Reverse) => f.write_str("reverse:reverse"),
            Self::Reverse(ReverseVariant::DoubleReverse) => f.write_str("reverse:double_reverse"),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    /// Accepts the canonical `task:variant` names and bare `sorting`,
    /// `copy`, `reverse` for their default variants.
    fn from_str(s: &str) -> Result<Self> {
        let (name, variant) = match s.split_once(':') {
            Some((n, v)) => (n, Some(v)),
            None => (s, None),
        };
        let task = match (name, variant) {
            ("addition", None) => Self::Addition,
            ("polynomial", None) => Self::Polynomial,
            ("summation", None) => Self::Summation,
            ("parity", None) => Self::Parity,
            ("lego", None) => Self::Lego,
            ("sorting", None | Some("single_token")) => Self::Sorting(SortVariant::SingleToken),
            ("sorting", Some("multi_digit")) => Self::Sorting(SortVariant::MultiDigit),
            ("copy", None) => Self::Copy(CopyVariant::RandomTokens),
            ("copy", Some(v)) => Self::Copy(v.parse()?),
            ("reverse", None | Some("reverse")) => Self::Reverse(ReverseVariant::Reverse),
            ("reverse", Some("double_reverse")) => Self::Reverse(ReverseVariant::DoubleReverse),
            _ => return Err(invalid(format!("unknown task `{s}`"))),
        };
        Ok(task)
    }
}

impl TryFrom<String> for Task {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Task> for String {
    fn from(t: Task) -> Self {
        t.to_string()
    }
}
