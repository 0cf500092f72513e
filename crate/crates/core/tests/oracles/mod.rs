//! Brute-force answer checkers that read rendered instances directly.

use std::collections::HashMap;

use lengen::tasks::{CopyVariant, ReverseVariant, SortVariant, Task, TaskInstance};
use num_bigint::BigUint;

const SYMBOLS: &str = "0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMN";

fn between<'a>(text: &'a str, prefix: &str, suffix: &str) -> Result<&'a str, String> {
    text.strip_prefix(prefix)
        .and_then(|t| t.strip_suffix(suffix))
        .ok_or_else(|| format!("`{text}` is not `{prefix}...{suffix}`"))
}

fn answer(body: &str) -> String {
    format!("The answer is {body}.")
}

fn spaced_chars(s: &str) -> String {
    s.chars().map(String::from).collect::<Vec<_>>().join(" ")
}

fn rank(sym: &str) -> usize {
    SYMBOLS.find(sym).expect("symbol from the alphabet")
}

fn next_symbol(sym: &str) -> String {
    let i = (rank(sym) + 1) % SYMBOLS.len();
    SYMBOLS[i..i + 1].to_string()
}

/// Expected `(output, bucket)` of an instance.
pub fn expected(task: Task, input: &str) -> Result<(String, usize), String> {
    Ok(match task {
        Task::Addition => {
            let body = between(input, "Compute: ", " ?")?;
            let (a, b) = body.split_once(" + ").ok_or("missing +")?;
            let (a, b) = (a.replace(' ', ""), b.replace(' ', ""));
            let sum = a.parse::<BigUint>().map_err(|e| e.to_string())? + b.parse::<BigUint>().map_err(|e| e.to_string())?;
            (answer(&spaced_chars(&sum.to_string())), a.len().max(b.len()))
        }
        Task::Polynomial => {
            let rest = between(input, "Evaluate x = ", " ) % 10 ?")?;
            let (x, body) = rest.split_once(" in ( ").ok_or("missing body")?;
            let x: i128 = x.parse().map_err(|_| "bad x")?;
            let mut coef = [0i128; 4];
            let terms: Vec<&str> = body.split(" + ").collect();
            for term in &terms {
                let parts: Vec<&str> = term.split(' ').collect();
                let [c, "x", "**", e] = parts[..] else {
                    return Err(format!("bad term `{term}`"));
                };
                coef[e.parse::<usize>().map_err(|_| "bad degree")?] += c.parse::<i128>().map_err(|_| "bad coef")?;
            }
            let value = coef.iter().rev().fold(0i128, |acc, &c| acc * x + c);
            (answer(&value.rem_euclid(10).to_string()), terms.len())
        }
        Task::Sorting(SortVariant::SingleToken) => {
            let body = between(input, "Sort the following numbers: ", " ?")?;
            let mut items: Vec<&str> = body.split(' ').collect();
            items.sort_by_key(|s| rank(s));
            (answer(&items.join(" ")), items.len())
        }
        Task::Sorting(SortVariant::MultiDigit) => {
            let body = between(input, "Sort the following numbers: ", " ?")?;
            let mut nums: Vec<u64> = body
                .split(", ")
                .map(|n| n.replace(' ', "").parse().map_err(|_| format!("bad number `{n}`")))
                .collect::<Result<_, _>>()?;
            nums.sort();
            let rendered: Vec<String> = nums.iter().map(|n| spaced_chars(&n.to_string())).collect();
            (answer(&rendered.join(", ")), nums.len())
        }
        Task::Summation => {
            let body = between(input, "Compute: ( ", " ) % 10 ?")?;
            let digits: Vec<u32> = body.split(" + ").map(|d| d.parse().map_err(|_| "bad digit")).collect::<Result<_, _>>()?;
            if digits.iter().any(|d| !(1..=9).contains(d)) {
                return Err("digit outside 1..9".into());
            }
            (answer(&(digits.iter().sum::<u32>() % 10).to_string()), digits.len())
        }
        Task::Parity => {
            let body = between(input, "Is the number of 1's even in [ ", " ] ?")?;
            let bits: Vec<&str> = body.split(' ').collect();
            let ones = bits.iter().filter(|&&b| b == "1").count();
            if bits.iter().any(|&b| b != "0" && b != "1") {
                return Err("non-bit".into());
            }
            (answer(if ones % 2 == 0 { "Yes" } else { "No" }), bits.len())
        }
        Task::Lego => {
            let rest = between(input, "If ", "?")?;
            let (stmts, query) = rest.split_once(". Then what is ").ok_or("missing query")?;
            let mut values: HashMap<&str, i64> = HashMap::new();
            let mut count = 0;
            for stmt in stmts.split("; ") {
                let (name, rhs) = stmt.split_once(" = ").ok_or("bad statement")?;
                let (sign, operand) = rhs.split_at(1);
                let base = if operand == "1" {
                    1
                } else {
                    *values.get(operand).ok_or_else(|| format!("`{operand}` used before assignment"))?
                };
                let v = if sign == "-" { -base } else { base };
                values.insert(name, v);
                count += 1;
            }
            let v = values.get(query).ok_or("unknown query")?;
            (answer(if *v > 0 { "+1" } else { "-1" }), count)
        }
        Task::Copy(variant) => {
            let body = between(input, "Copy the following words: ", " .")?;
            let words: Vec<&str> = body.split(' ').collect();
            let same = words.iter().all(|w| *w == words[0]);
            let out = match variant {
                CopyVariant::RepeatSameToken | CopyVariant::RandomTokens => {
                    if variant == CopyVariant::RepeatSameToken && !same {
                        return Err("repeat variant with differing tokens".into());
                    }
                    body.to_string()
                }
                CopyVariant::TokenSubstitute => words.iter().map(|w| next_symbol(w)).collect::<Vec<_>>().join(" "),
                CopyVariant::RepeatSameToken2x | CopyVariant::RandomTokens2x => {
                    if variant == CopyVariant::RepeatSameToken2x && !same {
                        return Err("repeat variant with differing tokens".into());
                    }
                    format!("{body} {body}")
                }
            };
            (out, words.len())
        }
        Task::Reverse(variant) => {
            let body = between(input, "Reverse the following words: ", " .")?;
            let words: Vec<&str> = body.split(' ').collect();
            let rev: Vec<&str> = words.iter().rev().copied().collect();
            let out = match variant {
                ReverseVariant::Reverse => format!("{} .", rev.join(" ")),
                ReverseVariant::DoubleReverse => format!("{} . {body} .", rev.join(" ")),
            };
            (out, words.len())
        }
    })
}

pub fn check(task: Task, inst: &TaskInstance) -> Result<(), String> {
    let (output, bucket) = expected(task, &inst.input)?;
    if output != inst.output {
        return Err(format!("{task}: `{}` -> `{}`, oracle says `{output}`", inst.input, inst.output));
    }
    if bucket != inst.bucket {
        return Err(format!("{task}: `{}` has bucket {}, oracle says {bucket}", inst.input, inst.bucket));
    }
    Ok(())
}
