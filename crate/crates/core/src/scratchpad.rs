//! Step-by-step traces for the mathematical and reasoning tasks.
//!
//! A rendered scratchpad puts one step per line. Each line holds the enabled
//! components in the fixed order below, each introduced by its tag:
//!
//! ```text
//! <in>  consumed input tokens
//! <cmp> the operation performed
//! <out> the step's output
//! <var> the updated state
//! <rem> input not yet consumed
//! ```
//!
//! The usual answer line always follows. With every component disabled the
//! output is exactly the plain answer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::tasks::{alphabet, lego_name, Problem};

pub const TAGS: [&str; 5] = ["<in>", "<cmp>", "<out>", "<var>", "<rem>"];

/// Which of the five components each step shows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ScratchpadMask {
    pub input: bool,
    pub computation: bool,
    pub output: bool,
    pub variable_update: bool,
    pub remaining_input: bool,
}

impl ScratchpadMask {
    pub const FULL: Self = Self::from_bits(0b11111);
    pub const NONE: Self = Self::from_bits(0);

    /// Bit 4 is `input`, bit 0 is `remaining_input`, matching the string form.
    pub const fn from_bits(bits: u8) -> Self {
        Self {
            input: bits & 16 != 0,
            computation: bits & 8 != 0,
            output: bits & 4 != 0,
            variable_update: bits & 2 != 0,
            remaining_input: bits & 1 != 0,
        }
    }

    pub fn flags(self) -> [bool; 5] {
        [
            self.input,
            self.computation,
            self.output,
            self.variable_update,
            self.remaining_input,
        ]
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..32u8).map(Self::from_bits)
    }
}

impl fmt::Display for ScratchpadMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.flags() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for ScratchpadMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() != 5 || !s.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(invalid(format!("scratchpad mask must be five 0/1 characters, got `{s}`")));
        }
        let bits = s.bytes().fold(0u8, |acc, b| acc << 1 | (b - b'0'));
        Ok(Self::from_bits(bits))
    }
}

impl TryFrom<String> for ScratchpadMask {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ScratchpadMask> for String {
    fn from(m: ScratchpadMask) -> Self {
        m.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceStep {
    pub consumed: Vec<String>,
    pub computation: String,
    pub output: Vec<String>,
    /// Rendered state after the step.
    pub state: String,
    pub remaining: Vec<String>,
    /// Answer so far in the task's oracle form.
    pub value: String,
}

fn s<T: ToString>(x: T) -> String {
    x.to_string()
}

fn spaced_digits(n: u64) -> Vec<String> {
    n.to_string().chars().map(String::from).collect()
}

fn signed(v: i64) -> String {
    if v < 0 {
        format!("{v}")
    } else {
        format!("+{v}")
    }
}

/// The token sequence a trace consumes, in consumption order.
pub fn trace_input(problem: &Problem) -> Result<Vec<Vec<String>>> {
    let a = alphabet();
    Ok(match problem {
        Problem::Addition { a: x, b: y } => {
            let n = x.len().max(y.len());
            (0..n)
                .map(|k| {
                    let mut col = Vec::new();
                    if k < x.len() {
                        col.push(s(x[x.len() - 1 - k]));
                    }
                    if k < y.len() {
                        col.push(s(y[y.len() - 1 - k]));
                    }
                    col
                })
                .collect()
        }
        Problem::Polynomial { terms, .. } => terms
            .iter()
            .enumerate()
            .map(|(i, (c, e))| {
                let mut v = if i > 0 { vec![s("+")] } else { Vec::new() };
                v.extend([s(c), s("x"), s("**"), s(e)]);
                v
            })
            .collect(),
        Problem::SortSingle { symbols } => symbols.iter().map(|&i| vec![s(a[i])]).collect(),
        Problem::SortMulti { numbers } => numbers
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let mut v = spaced_digits(n as u64);
                if i + 1 < numbers.len() {
                    v.push(s(","));
                }
                v
            })
            .collect(),
        Problem::Summation { digits } => digits
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let mut v = if i > 0 { vec![s("+")] } else { Vec::new() };
                v.push(s(d));
                v
            })
            .collect(),
        Problem::Parity { bits } => bits.iter().map(|b| vec![s(b)]).collect(),
        Problem::Lego { first, ops, .. } => {
            let n = ops.len() + 1;
            (0..n)
                .map(|j| {
                    let rhs = if j == 0 {
                        format!("{}1", if *first < 0 { '-' } else { '+' })
                    } else {
                        format!("{}{}", if ops[j - 1] < 0 { '-' } else { '+' }, lego_name(j - 1))
                    };
                    vec![lego_name(j), s("="), rhs, s(if j + 1 == n { "." } else { ";" })]
                })
                .collect()
        }
        Problem::Copy { .. } | Problem::Reverse { .. } => {
            return Err(invalid(format!(
                "no scratchpad for {}; only mathematical and reasoning tasks are traced",
                problem.task()
            )))
        }
    })
}

/// Decomposes an instance into steps.
pub fn trace(problem: &Problem) -> Result<Vec<TraceStep>> {
    let chunks = trace_input(problem)?;
    let a = alphabet();
    let mut steps = Vec::with_capacity(chunks.len());
    let remaining_after = |i: usize| -> Vec<String> { chunks[i + 1..].concat() };
    match problem {
        Problem::Addition { a: x, b: y } => {
            let mut carry = 0u8;
            let mut total: Vec<u8> = Vec::new();
            let n = chunks.len();
            for k in 0..n {
                let dx = if k < x.len() { x[x.len() - 1 - k] } else { 0 };
                let dy = if k < y.len() { y[y.len() - 1 - k] } else { 0 };
                let sum = dx + dy + carry;
                let computation = format!("{dx} + {dy} + {carry} = {}", spaced_digits(sum as u64).join(" "));
                carry = sum / 10;
                total.insert(0, sum % 10);
                if k + 1 == n && carry > 0 {
                    total.insert(0, carry);
                }
                let digits: Vec<String> = total.iter().map(u8::to_string).collect();
                steps.push(TraceStep {
                    consumed: chunks[k].clone(),
                    computation,
                    output: vec![s(sum % 10)],
                    state: format!("carry = {carry} , total = {}", digits.join(" ")),
                    remaining: remaining_after(k),
                    value: digits.concat(),
                });
            }
        }
        Problem::Polynomial { x, terms } => {
            let mut acc = 0i64;
            for (i, &(c, e)) in terms.iter().enumerate() {
                let term = c * x.pow(e);
                acc = (acc + term).rem_euclid(10);
                steps.push(TraceStep {
                    consumed: chunks[i].clone(),
                    computation: format!("{c} * {x} ** {e} = {term}"),
                    output: vec![s(term)],
                    state: format!("total = {acc}"),
                    remaining: remaining_after(i),
                    value: s(acc),
                });
            }
        }
        Problem::SortSingle { symbols } => {
            let mut sorted: Vec<usize> = Vec::new();
            for (i, &sym) in symbols.iter().enumerate() {
                let pos = sorted.partition_point(|&v| v <= sym);
                sorted.insert(pos, sym);
                let rendered: Vec<&str> = sorted.iter().map(|&v| a[v]).collect();
                steps.push(TraceStep {
                    consumed: chunks[i].clone(),
                    computation: format!("insert {} at {}", a[sym], pos),
                    output: vec![s(pos)],
                    state: format!("sorted = {}", rendered.join(" ")),
                    remaining: remaining_after(i),
                    value: rendered.join(" "),
                });
            }
        }
        Problem::SortMulti { numbers } => {
            let mut sorted: Vec<u32> = Vec::new();
            for (i, &num) in numbers.iter().enumerate() {
                let pos = sorted.partition_point(|&v| v <= num);
                sorted.insert(pos, num);
                let rendered = sorted
                    .iter()
                    .map(|&v| spaced_digits(v as u64).join(" "))
                    .collect::<Vec<_>>()
                    .join(" , ");
                steps.push(TraceStep {
                    consumed: chunks[i].clone(),
                    computation: format!("insert {} at {}", spaced_digits(num as u64).join(" "), pos),
                    output: vec![s(pos)],
                    state: format!("sorted = {rendered}"),
                    remaining: remaining_after(i),
                    value: sorted.iter().map(u32::to_string).collect::<Vec<_>>().join(" "),
                });
            }
        }
        Problem::Summation { digits } => {
            let mut acc = 0u32;
            for (i, &d) in digits.iter().enumerate() {
                let before = acc;
                acc = (acc + d as u32) % 10;
                steps.push(TraceStep {
                    consumed: chunks[i].clone(),
                    computation: format!("( {before} + {d} ) % 10 = {acc}"),
                    output: vec![s(acc)],
                    state: format!("sum = {acc}"),
                    remaining: remaining_after(i),
                    value: s(acc),
                });
            }
        }
        Problem::Parity { bits } => {
            let word = |odd: bool| if odd { "odd" } else { "even" };
            let mut odd = false;
            for (i, &b) in bits.iter().enumerate() {
                let before = odd;
                odd ^= b == 1;
                steps.push(TraceStep {
                    consumed: chunks[i].clone(),
                    computation: format!("{} + {b} = {}", word(before), word(odd)),
                    output: vec![s(word(odd))],
                    state: format!("parity = {}", word(odd)),
                    remaining: remaining_after(i),
                    value: s(if odd { "No" } else { "Yes" }),
                });
            }
        }
        Problem::Lego { first, ops, query } => {
            let values = problem.lego_values();
            for j in 0..=ops.len() {
                let v = values[j] as i64;
                let computation = if j == 0 {
                    format!("{} = {}", lego_name(0), signed(*first as i64))
                } else {
                    let op = if ops[j - 1] < 0 { '-' } else { '+' };
                    format!("{} = {op} ( {} ) = {}", lego_name(j), signed(values[j - 1] as i64), signed(v))
                };
                let value = if j >= *query {
                    signed(values[*query] as i64)
                } else {
                    s("?")
                };
                steps.push(TraceStep {
                    consumed: chunks[j].clone(),
                    computation,
                    output: vec![signed(v)],
                    state: format!("{} = {}", lego_name(j), signed(v)),
                    remaining: remaining_after(j),
                    value,
                });
            }
        }
        Problem::Copy { .. } | Problem::Reverse { .. } => unreachable!("rejected by trace_input"),
    }
    Ok(steps)
}

/// One line of the rendered scratchpad, or `None` if the mask hides everything.
pub fn render_step(step: &TraceStep, mask: ScratchpadMask) -> Option<String> {
    let parts = [
        step.consumed.join(" "),
        step.computation.clone(),
        step.output.join(" "),
        step.state.clone(),
        step.remaining.join(" "),
    ];
    let line: Vec<String> = mask
        .flags()
        .iter()
        .zip(TAGS)
        .zip(parts)
        .filter(|((&on, _), _)| on)
        .map(|((_, tag), body)| if body.is_empty() { tag.to_string() } else { format!("{tag} {body}") })
        .collect();
    (!line.is_empty()).then(|| line.join(" "))
}

/// Steps rendered under `mask`, followed by the plain answer line.
pub fn render(steps: &[TraceStep], mask: ScratchpadMask, answer: &str) -> String {
    let mut lines: Vec<String> = steps.iter().filter_map(|st| render_step(st, mask)).collect();
    lines.push(answer.to_string());
    lines.join("\n")
}

/// Scratchpad output for an instance.
pub fn render_scratchpad(problem: &Problem, mask: ScratchpadMask) -> Result<String> {
    Ok(render(&trace(problem)?, mask, &problem.render_output()))
}

/// The answer line of a rendered scratchpad.
pub fn strip_scratchpad(text: &str) -> &str {
    text.rsplit('\n').next().unwrap_or(text)
}
