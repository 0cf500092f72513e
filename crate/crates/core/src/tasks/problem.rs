//! Structured task instances: sampling, rendering, parsing and solving.

use rand::Rng;

use crate::error::{invalid, Result};

use super::{alphabet, tokenize, CopyVariant, ReverseVariant, SortVariant, Task, TaskInstance};

const ANSWER_PREFIX: &str = "The answer is";

/// A task instance in structured form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Problem {
    /// Digits most significant first.
    Addition { a: Vec<u8>, b: Vec<u8> },
    /// `(coefficient, degree)` per term.
    Polynomial { x: i64, terms: Vec<(i64, u32)> },
    /// Indices into the symbol alphabet.
    SortSingle { symbols: Vec<usize> },
    SortMulti { numbers: Vec<u32> },
    Summation { digits: Vec<u8> },
    Parity { bits: Vec<u8> },
    /// `ops[j]` is the sign applied to variable `j` to obtain variable
    /// `j + 1`; `query` is a 0-based variable index.
    Lego { first: i8, ops: Vec<i8>, query: usize },
    Copy { variant: CopyVariant, words: Vec<usize> },
    Reverse { variant: ReverseVariant, words: Vec<usize> },
}

/// Name of the `i`-th LEGO variable: `a`..`z`, then `a1`..`z1`, ...
pub fn lego_name(i: usize) -> String {
    let letter = (b'a' + (i % 26) as u8) as char;
    match i / 26 {
        0 => letter.to_string(),
        k => format!("{letter}{k}"),
    }
}

fn lego_index(name: &str) -> Option<usize> {
    let mut chars = name.chars();
    let c = chars.next()?;
    if !c.is_ascii_lowercase() {
        return None;
    }
    let rest: String = chars.collect();
    let k = if rest.is_empty() {
        0
    } else {
        let k: usize = rest.parse().ok()?;
        if k == 0 || rest.starts_with('0') {
            return None;
        }
        k
    };
    Some(k * 26 + (c as u8 - b'a') as usize)
}

fn signed(v: i64) -> String {
    if v < 0 {
        format!("-{}", -v)
    } else {
        format!("+{v}")
    }
}

fn sign_char(s: i8) -> char {
    if s < 0 {
        '-'
    } else {
        '+'
    }
}

fn spaced<I: IntoIterator<Item = String>>(items: I) -> String {
    items.into_iter().collect::<Vec<_>>().join(" ")
}

fn digit_string(n: u32) -> String {
    spaced(n.to_string().chars().map(String::from))
}

fn words_text(words: &[usize]) -> String {
    let a = alphabet();
    spaced(words.iter().map(|&w| a[w].to_string()))
}

impl Problem {
    pub fn task(&self) -> Task {
        match self {
            Self::Addition { .. } => Task::Addition,
            Self::Polynomial { .. } => Task::Polynomial,
            Self::SortSingle { .. } => Task::Sorting(SortVariant::SingleToken),
            Self::SortMulti { .. } => Task::Sorting(SortVariant::MultiDigit),
            Self::Summation { .. } => Task::Summation,
            Self::Parity { .. } => Task::Parity,
            Self::Lego { .. } => Task::Lego,
            Self::Copy { variant, .. } => Task::Copy(*variant),
            Self::Reverse { variant, .. } => Task::Reverse(*variant),
        }
    }

    /// The task's length bucket.
    pub fn bucket(&self) -> usize {
        match self {
            Self::Addition { a, b } => a.len().max(b.len()),
            Self::Polynomial { terms, .. } => terms.len(),
            Self::SortSingle { symbols } => symbols.len(),
            Self::SortMulti { numbers } => numbers.len(),
            Self::Summation { digits } => digits.len(),
            Self::Parity { bits } => bits.len(),
            Self::Lego { ops, .. } => ops.len() + 1,
            Self::Copy { words, .. } | Self::Reverse { words, .. } => words.len(),
        }
    }

    pub fn render_input(&self) -> String {
        match self {
            Self::Addition { a, b } => {
                let d = |v: &[u8]| spaced(v.iter().map(u8::to_string));
                format!("Compute: {} + {} ?", d(a), d(b))
            }
            Self::Polynomial { x, terms } => {
                let body = terms
                    .iter()
                    .map(|(c, e)| format!("{c} x ** {e}"))
                    .collect::<Vec<_>>()
                    .join(" + ");
                format!("Evaluate x = {x} in ( {body} ) % 10 ?")
            }
            Self::SortSingle { symbols } => format!("Sort the following numbers: {} ?", words_text(symbols)),
            Self::SortMulti { numbers } => {
                let body = numbers.iter().map(|&n| digit_string(n)).collect::<Vec<_>>().join(", ");
                format!("Sort the following numbers: {body} ?")
            }
            Self::Summation { digits } => {
                let body = digits.iter().map(u8::to_string).collect::<Vec<_>>().join(" + ");
                format!("Compute: ( {body} ) % 10 ?")
            }
            Self::Parity { bits } => {
                format!("Is the number of 1's even in [ {} ] ?", spaced(bits.iter().map(u8::to_string)))
            }
            Self::Lego { first, ops, query } => {
                let mut stmts = vec![format!("{} = {}1", lego_name(0), sign_char(*first))];
                for (j, &op) in ops.iter().enumerate() {
                    stmts.push(format!("{} = {}{}", lego_name(j + 1), sign_char(op), lego_name(j)));
                }
                format!("If {}. Then what is {}?", stmts.join("; "), lego_name(*query))
            }
            Self::Copy { words, .. } => format!("Copy the following words: {} .", words_text(words)),
            Self::Reverse { words, .. } => format!("Reverse the following words: {} .", words_text(words)),
        }
    }

    /// Canonical answer value.
    pub fn oracle(&self) -> String {
        match self {
            Self::Addition { a, b } => add_digits(a, b).iter().map(u8::to_string).collect(),
            Self::Polynomial { x, terms } => eval_mod10(*x, terms).to_string(),
            Self::SortSingle { symbols } => {
                let mut s = symbols.clone();
                s.sort_unstable();
                words_text(&s)
            }
            Self::SortMulti { numbers } => {
                let mut s = numbers.clone();
                s.sort_unstable();
                s.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
            }
            Self::Summation { digits } => (digits.iter().map(|&d| d as u32).sum::<u32>() % 10).to_string(),
            Self::Parity { bits } => {
                if bits.iter().filter(|&&b| b == 1).count() % 2 == 0 {
                    "Yes".into()
                } else {
                    "No".into()
                }
            }
            Self::Lego { .. } => signed(self.lego_values()[self.lego_query()] as i64),
            Self::Copy { .. } | Self::Reverse { .. } => words_text(&self.word_answer()),
        }
    }

    /// The gold output text.
    pub fn render_output(&self) -> String {
        match self {
            Self::Addition { a, b } => {
                let sum = add_digits(a, b);
                format!("{ANSWER_PREFIX} {}.", spaced(sum.iter().map(u8::to_string)))
            }
            Self::SortMulti { numbers } => {
                let mut s = numbers.clone();
                s.sort_unstable();
                let body = s.iter().map(|&n| digit_string(n)).collect::<Vec<_>>().join(", ");
                format!("{ANSWER_PREFIX} {body}.")
            }
            Self::Copy { .. } => words_text(&self.word_answer()),
            Self::Reverse { variant, words } => match variant {
                ReverseVariant::Reverse => format!("{} .", words_text(&self.word_answer())),
                ReverseVariant::DoubleReverse => {
                    let rev: Vec<usize> = words.iter().rev().copied().collect();
                    format!("{} . {} .", words_text(&rev), words_text(words))
                }
            },
            _ => format!("{ANSWER_PREFIX} {}.", self.oracle()),
        }
    }

    pub fn to_instance(&self) -> TaskInstance {
        TaskInstance {
            input: self.render_input(),
            output: self.render_output(),
            bucket: self.bucket(),
            oracle: self.oracle(),
        }
    }

    /// Values of every LEGO variable in order.
    pub fn lego_values(&self) -> Vec<i8> {
        match self {
            Self::Lego { first, ops, .. } => {
                let mut vals = vec![*first];
                for &op in ops {
                    vals.push(op * vals.last().unwrap());
                }
                vals
            }
            _ => Vec::new(),
        }
    }

    fn lego_query(&self) -> usize {
        match self {
            Self::Lego { query, .. } => *query,
            _ => 0,
        }
    }

    /// Output words of a copy or reverse instance.
    pub fn word_answer(&self) -> Vec<usize> {
        match self {
            Self::Copy { variant, words } => {
                let n = alphabet().len();
                match variant {
                    CopyVariant::RepeatSameToken | CopyVariant::RandomTokens => words.clone(),
                    CopyVariant::TokenSubstitute => words.iter().map(|&w| (w + 1) % n).collect(),
                    CopyVariant::RepeatSameToken2x | CopyVariant::RandomTokens2x => {
                        words.iter().chain(words.iter()).copied().collect()
                    }
                }
            }
            Self::Reverse { variant, words } => {
                let rev = words.iter().rev().copied();
                match variant {
                    ReverseVariant::Reverse => rev.collect(),
                    ReverseVariant::DoubleReverse => rev.chain(words.iter().copied()).collect(),
                }
            }
            _ => Vec::new(),
        }
    }

    /// Recovers the structured instance from rendered input text.
    pub fn parse(task: Task, input: &str) -> Result<Self> {
        let toks = tokenize(input);
        let t: Vec<&str> = toks.iter().map(String::as_str).collect();
        let bad = || invalid(format!("input does not match the {task} template: `{input}`"));
        let strip = |prefix: &[&str], suffix: &[&str]| -> Option<Vec<&str>> {
            if t.len() < prefix.len() + suffix.len() || t[..prefix.len()] != *prefix || t[t.len() - suffix.len()..] != *suffix {
                return None;
            }
            Some(t[prefix.len()..t.len() - suffix.len()].to_vec())
        };
        let digit = |s: &str| -> Option<u8> {
            (s.len() == 1).then(|| s.as_bytes()[0]).filter(u8::is_ascii_digit).map(|b| b - b'0')
        };
        let word = |s: &str| alphabet().iter().position(|a| *a == s);
        let words = |body: &[&str]| -> Option<Vec<usize>> {
            if body.is_empty() {
                return None;
            }
            body.iter().map(|s| word(s)).collect()
        };
        let parsed = match task {
            Task::Addition => {
                let body = strip(&["Compute:"], &["?"]).ok_or_else(bad)?;
                let plus = body.iter().position(|&s| s == "+").ok_or_else(bad)?;
                let a: Option<Vec<u8>> = body[..plus].iter().map(|s| digit(s)).collect();
                let b: Option<Vec<u8>> = body[plus + 1..].iter().map(|s| digit(s)).collect();
                match (a, b) {
                    (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => Self::Addition { a, b },
                    _ => return Err(bad()),
                }
            }
            Task::Polynomial => {
                if t.len() < 4 || t[..3] != ["Evaluate", "x", "="] {
                    return Err(bad());
                }
                let x: i64 = t[3].parse().map_err(|_| bad())?;
                let rest = &t[4..];
                if rest.len() < 2 || rest[..2] != ["in", "("] {
                    return Err(bad());
                }
                let tail = [")", "%", "10", "?"];
                if rest.len() < 2 + tail.len() || rest[rest.len() - tail.len()..] != tail {
                    return Err(bad());
                }
                let body = &rest[2..rest.len() - tail.len()];
                let mut terms = Vec::new();
                for chunk in body.split(|&s| s == "+") {
                    match chunk {
                        [c, "x", "**", e] => {
                            terms.push((c.parse().map_err(|_| bad())?, e.parse().map_err(|_| bad())?))
                        }
                        _ => return Err(bad()),
                    }
                }
                Self::Polynomial { x, terms }
            }
            Task::Sorting(SortVariant::SingleToken) => {
                let body = strip(&["Sort", "the", "following", "numbers:"], &["?"]).ok_or_else(bad)?;
                Self::SortSingle {
                    symbols: words(&body).ok_or_else(bad)?,
                }
            }
            Task::Sorting(SortVariant::MultiDigit) => {
                let body = strip(&["Sort", "the", "following", "numbers:"], &["?"]).ok_or_else(bad)?;
                let mut numbers = Vec::new();
                for chunk in body.split(|&s| s == ",") {
                    if chunk.is_empty() {
                        return Err(bad());
                    }
                    let s: Option<String> = chunk.iter().map(|c| digit(c).map(|d| (b'0' + d) as char)).collect();
                    numbers.push(s.ok_or_else(bad)?.parse().map_err(|_| bad())?);
                }
                Self::SortMulti { numbers }
            }
            Task::Summation => {
                let body = strip(&["Compute:", "("], &[")", "%", "10", "?"]).ok_or_else(bad)?;
                let mut digits = Vec::new();
                for (i, s) in body.iter().enumerate() {
                    if i % 2 == 1 {
                        if *s != "+" {
                            return Err(bad());
                        }
                    } else {
                        digits.push(digit(s).ok_or_else(bad)?);
                    }
                }
                if digits.is_empty() || body.len() % 2 == 0 {
                    return Err(bad());
                }
                Self::Summation { digits }
            }
            Task::Parity => {
                let body = strip(&["Is", "the", "number", "of", "1's", "even", "in", "["], &["]", "?"])
                    .ok_or_else(bad)?;
                let bits: Option<Vec<u8>> = body.iter().map(|s| digit(s).filter(|&d| d <= 1)).collect();
                match bits {
                    Some(bits) if !bits.is_empty() => Self::Parity { bits },
                    _ => return Err(bad()),
                }
            }
            Task::Lego => {
                let body = strip(&["If"], &["?"]).ok_or_else(bad)?;
                let then = body.iter().position(|&s| s == "Then").ok_or_else(bad)?;
                if then < 1 || body[then - 1] != "." || body[then..].len() != 4 || body[then..then + 3] != ["Then", "what", "is"] {
                    return Err(bad());
                }
                let query = lego_index(body[then + 3]).ok_or_else(bad)?;
                let mut first = 0;
                let mut ops = Vec::new();
                for (j, stmt) in body[..then - 1].split(|&s| s == ";").enumerate() {
                    let [name, "=", rhs] = stmt else {
                        return Err(bad());
                    };
                    if lego_index(name) != Some(j) {
                        return Err(bad());
                    }
                    let (sign, operand) = rhs.split_at(1);
                    let s: i8 = match sign {
                        "+" => 1,
                        "-" => -1,
                        _ => return Err(bad()),
                    };
                    if j == 0 {
                        if operand != "1" {
                            return Err(bad());
                        }
                        first = s;
                    } else {
                        if lego_index(operand) != Some(j - 1) {
                            return Err(bad());
                        }
                        ops.push(s);
                    }
                }
                if first == 0 || ops.is_empty() || query > ops.len() {
                    return Err(bad());
                }
                Self::Lego { first, ops, query }
            }
            Task::Copy(variant) => {
                let body = strip(&["Copy", "the", "following", "words:"], &["."]).ok_or_else(bad)?;
                Self::Copy {
                    variant,
                    words: words(&body).ok_or_else(bad)?,
                }
            }
            Task::Reverse(variant) => {
                let body = strip(&["Reverse", "the", "following", "words:"], &["."]).ok_or_else(bad)?;
                Self::Reverse {
                    variant,
                    words: words(&body).ok_or_else(bad)?,
                }
            }
        };
        Ok(parsed)
    }
}

/// Schoolbook addition of most-significant-first digit strings.
pub fn add_digits(a: &[u8], b: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(a.len().max(b.len()) + 1);
    let mut carry = 0u8;
    let mut ia = a.iter().rev();
    let mut ib = b.iter().rev();
    loop {
        let (x, y) = (ia.next(), ib.next());
        if x.is_none() && y.is_none() {
            break;
        }
        let s = x.copied().unwrap_or(0) + y.copied().unwrap_or(0) + carry;
        out.push(s % 10);
        carry = s / 10;
    }
    if carry > 0 {
        out.push(carry);
    }
    while out.len() > 1 && *out.last().unwrap() == 0 {
        out.pop();
    }
    out.reverse();
    out
}

/// Polynomial value modulo 10 as the non-negative residue.
pub fn eval_mod10(x: i64, terms: &[(i64, u32)]) -> i64 {
    terms
        .iter()
        .map(|&(c, e)| c * x.pow(e))
        .sum::<i64>()
        .rem_euclid(10)
}

fn random_digits(n: usize, rng: &mut impl Rng) -> Vec<u8> {
    (0..n)
        .map(|i| {
            if i == 0 && n > 1 {
                rng.random_range(1..=9)
            } else {
                rng.random_range(0..=9)
            }
        })
        .collect()
}

fn need(n: usize, min: usize, what: &str) -> Result<()> {
    if n < min {
        return Err(invalid(format!("{what} must be at least {min}, got {n}")));
    }
    Ok(())
}

/// Two random numbers with the given digit counts (no leading zeros).
pub fn gen_addition(digits_a: usize, digits_b: usize, rng: &mut impl Rng) -> Result<TaskInstance> {
    need(digits_a, 1, "digit count")?;
    need(digits_b, 1, "digit count")?;
    let a = random_digits(digits_a, rng);
    let b = random_digits(digits_b, rng);
    Ok(Problem::Addition { a, b }.to_instance())
}

/// `x ~ U{-2..2}`, degrees `~ U{0..3}`, coefficients `~ U{-3..3}`.
pub fn gen_polynomial(num_terms: usize, rng: &mut impl Rng) -> Result<TaskInstance> {
    need(num_terms, 1, "term count")?;
    let x = rng.random_range(-2..=2);
    let terms = (0..num_terms)
        .map(|_| (rng.random_range(-3..=3), rng.random_range(0..=3)))
        .collect();
    Ok(Problem::Polynomial { x, terms }.to_instance())
}

pub fn gen_sorting(count: usize, variant: SortVariant, rng: &mut impl Rng) -> Result<TaskInstance> {
    need(count, 1, "list length")?;
    let p = match variant {
        SortVariant::SingleToken => Problem::SortSingle {
            symbols: (0..count).map(|_| rng.random_range(0..alphabet().len())).collect(),
        },
        SortVariant::MultiDigit => Problem::SortMulti {
            numbers: (0..count).map(|_| rng.random_range(0..=10_000)).collect(),
        },
    };
    Ok(p.to_instance())
}

/// Digits `~ U{1..9}`.
pub fn gen_summation(count: usize, rng: &mut impl Rng) -> Result<TaskInstance> {
    need(count, 1, "list length")?;
    let digits = (0..count).map(|_| rng.random_range(1..=9)).collect();
    Ok(Problem::Summation { digits }.to_instance())
}

pub fn gen_parity(count: usize, rng: &mut impl Rng) -> Result<TaskInstance> {
    need(count, 1, "bit count")?;
    let bits = (0..count).map(|_| rng.random_range(0..=1)).collect();
    Ok(Problem::Parity { bits }.to_instance())
}

/// Samples every variable's value uniformly from {-1, +1}, derives the
/// operations, and returns one instance per variable from the middle of
/// the chain (`ceil(n/2)`, 1-based) to the end.
pub fn gen_lego(chain_length: usize, rng: &mut impl Rng) -> Result<Vec<TaskInstance>> {
    need(chain_length, 2, "chain length")?;
    let values: Vec<i8> = (0..chain_length)
        .map(|_| if rng.random_bool(0.5) { 1 } else { -1 })
        .collect();
    let ops: Vec<i8> = values.windows(2).map(|w| w[0] * w[1]).collect();
    let start = chain_length.div_ceil(2) - 1;
    Ok((start..chain_length)
        .map(|query| {
            Problem::Lego {
                first: values[0],
                ops: ops.clone(),
                query,
            }
            .to_instance()
        })
        .collect())
}

pub fn gen_copy(count: usize, variant: CopyVariant, rng: &mut impl Rng) -> Result<TaskInstance> {
    need(count, 1, "word count")?;
    let n = alphabet().len();
    let words = match variant {
        CopyVariant::RepeatSameToken | CopyVariant::RepeatSameToken2x => vec![rng.random_range(0..n); count],
        _ => (0..count).map(|_| rng.random_range(0..n)).collect(),
    };
    Ok(Problem::Copy { variant, words }.to_instance())
}

pub fn gen_reverse(count: usize, variant: ReverseVariant, rng: &mut impl Rng) -> Result<TaskInstance> {
    need(count, 1, "word count")?;
    let n = alphabet().len();
    let words = (0..count).map(|_| rng.random_range(0..n)).collect();
    Ok(Problem::Reverse { variant, words }.to_instance())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sym(s: &str) -> usize {
        alphabet().iter().position(|a| *a == s).unwrap()
    }

    #[test]
    fn worked_examples() {
        let add = Problem::Addition {
            a: vec![5, 3, 7, 2, 6],
            b: vec![1, 9, 1, 7],
        };
        assert_eq!(add.render_input(), "Compute: 5 3 7 2 6 + 1 9 1 7 ?");
        assert_eq!(add.render_output(), "The answer is 5 5 6 4 3.");
        let zero = Problem::Addition { a: vec![0], b: vec![0] };
        assert_eq!(zero.render_output(), "The answer is 0.");

        let poly = Problem::Polynomial {
            x: 3,
            terms: vec![(3, 0), (1, 1), (1, 2)],
        };
        assert_eq!(poly.render_input(), "Evaluate x = 3 in ( 3 x ** 0 + 1 x ** 1 + 1 x ** 2 ) % 10 ?");
        assert_eq!(poly.render_output(), "The answer is 5.");
        let zero_poly = Problem::Polynomial {
            x: -2,
            terms: vec![(0, 3), (0, 1)],
        };
        assert_eq!(zero_poly.oracle(), "0");

        let sort = Problem::SortSingle {
            symbols: ["3", "1", "4", "1", "5"].iter().map(|s| sym(s)).collect(),
        };
        assert_eq!(sort.render_input(), "Sort the following numbers: 3 1 4 1 5 ?");
        assert_eq!(sort.render_output(), "The answer is 1 1 3 4 5.");

        let multi = Problem::SortMulti {
            numbers: vec![533, 31, 126, 59, 41],
        };
        assert_eq!(multi.render_output(), "The answer is 3 1, 4 1, 5 9, 1 2 6, 5 3 3.");

        let sum = Problem::Summation {
            digits: vec![1, 2, 3, 4, 7],
        };
        assert_eq!(sum.render_input(), "Compute: ( 1 + 2 + 3 + 4 + 7 ) % 10 ?");
        assert_eq!(sum.render_output(), "The answer is 7.");
        assert_eq!(Problem::Summation { digits: vec![5] }.oracle(), "5");

        let par = Problem::Parity {
            bits: vec![1, 0, 0, 1, 1],
        };
        assert_eq!(par.render_input(), "Is the number of 1's even in [ 1 0 0 1 1 ] ?");
        assert_eq!(par.render_output(), "The answer is No.");
        assert_eq!(Problem::Parity { bits: vec![0; 6] }.oracle(), "Yes");

        let lego = Problem::Lego {
            first: -1,
            ops: vec![-1, 1, 1],
            query: 2,
        };
        assert_eq!(lego.render_input(), "If a = -1; b = -a; c = +b; d = +c. Then what is c?");
        assert_eq!(lego.render_output(), "The answer is +1.");

        let abc: Vec<usize> = ["a", "b", "c"].iter().map(|s| sym(s)).collect();
        let copy = Problem::Copy {
            variant: CopyVariant::RandomTokens,
            words: abc.clone(),
        };
        assert_eq!(copy.render_input(), "Copy the following words: a b c .");
        assert_eq!(copy.render_output(), "a b c");
        let rev = Problem::Reverse {
            variant: ReverseVariant::Reverse,
            words: abc,
        };
        assert_eq!(rev.render_output(), "c b a .");
        let ab: Vec<usize> = ["a", "b"].iter().map(|s| sym(s)).collect();
        let dbl = Problem::Reverse {
            variant: ReverseVariant::DoubleReverse,
            words: ab.clone(),
        };
        assert_eq!(dbl.render_output(), "b a . a b .");
        let twice = Problem::Copy {
            variant: CopyVariant::RandomTokens2x,
            words: ab,
        };
        assert_eq!(twice.render_output(), "a b a b");
    }

    #[test]
    fn lego_names() {
        assert_eq!(lego_name(0), "a");
        assert_eq!(lego_name(25), "z");
        assert_eq!(lego_name(26), "a1");
        assert_eq!(lego_name(57), "f2");
        for i in 0..100 {
            assert_eq!(lego_index(&lego_name(i)), Some(i));
        }
        assert_eq!(lego_index("a0"), None);
        assert_eq!(lego_index("A"), None);
    }

    #[test]
    fn generators_reject_empty_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(gen_addition(0, 3, &mut rng).is_err());
        assert!(gen_polynomial(0, &mut rng).is_err());
        assert!(gen_lego(1, &mut rng).is_err());
        assert!(gen_copy(0, CopyVariant::RandomTokens, &mut rng).is_err());
    }

    #[test]
    fn lego_queries_cover_middle_to_end() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 2..12 {
            let inst = gen_lego(n, &mut rng).unwrap();
            assert_eq!(inst.len(), n - n.div_ceil(2) + 1);
            let last = Problem::parse(Task::Lego, &inst.last().unwrap().input).unwrap();
            assert!(matches!(last, Problem::Lego { query, .. } if query == n - 1));
        }
    }

    #[test]
    fn parse_inverts_render() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for task in Task::all() {
            for n in [1usize, 2, 7, 30] {
                let n = n.max(task.min_bucket());
                for inst in task.generate(n, &mut rng).unwrap() {
                    let p = Problem::parse(task, &inst.input).unwrap();
                    assert_eq!(p.to_instance(), inst, "{task}");
                }
            }
        }
    }

    #[test]
    fn parse_rejects_malformed() {
        assert!(Problem::parse(Task::Addition, "Compute: 1 2 ?").is_err());
        assert!(Problem::parse(Task::Parity, "Is the number of 1's even in [ 2 ] ?").is_err());
        assert!(Problem::parse(Task::Lego, "If a = -1; c = -a. Then what is c?").is_err());
        assert!(Problem::parse(Task::Copy(CopyVariant::RandomTokens), "Copy the following words: .").is_err());
    }
}
