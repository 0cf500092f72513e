use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BOS: usize = 0;
pub const EOS: usize = 1;
pub const PAD: usize = 2;
pub const SEP: usize = 3;
pub const SPECIALS: [&str; 4] = ["<bos>", "<eos>", "<pad>", "<sep>"];

/// Splits on whitespace, then detaches one trailing `.`, `,`, `;` or `?`
/// from any longer word (`"3."` becomes `"3"`, `"."`).
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        match word.char_indices().last() {
            Some((i, c)) if i > 0 && matches!(c, '.' | ',' | ';' | '?') => {
                out.push(word[..i].to_string());
                out.push(c.to_string());
            }
            _ => out.push(word.to_string()),
        }
    }
    out
}

/// Token inventory: the four specials, then every other token in sorted order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    pub fn build<'a, I: IntoIterator<Item = &'a str>>(texts: I) -> Self {
        let mut set = BTreeSet::new();
        for text in texts {
            set.extend(tokenize(text));
        }
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(set.into_iter().filter(|t| !SPECIALS.contains(&t.as_str())));
        Self::from(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Result<usize> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| Error::UnknownToken(token.to_string()))
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map(String::as_str).unwrap_or("<unk>")
    }

    pub fn encode(&self, text: &str) -> Result<Vec<usize>> {
        tokenize(text).iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter().map(|&i| self.token(i)).collect::<Vec<_>>().join(" ")
    }
}

/// `<bos> input <sep> output <eos>` with the answer span marked.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Encoded {
    pub ids: Vec<usize>,
    /// Length of `<bos> input <sep>`, the generation prompt.
    pub prompt_len: usize,
}

impl Encoded {
    pub fn prompt(&self) -> &[usize] {
        &self.ids[..self.prompt_len]
    }

    /// Output tokens without the closing `<eos>`.
    pub fn answer(&self) -> &[usize] {
        &self.ids[self.prompt_len..self.ids.len() - 1]
    }

    /// Per-id flag: true on output tokens and the closing `<eos>`.
    pub fn loss_mask(&self) -> Vec<bool> {
        (0..self.ids.len()).map(|j| j >= self.prompt_len).collect()
    }

    /// Next-token targets for positions `0..len-1` and whether each one is
    /// scored (output tokens and `<eos>` only).
    pub fn targets(&self) -> (&[usize], Vec<bool>) {
        let n = self.ids.len();
        let mask = (1..n).map(|j| j >= self.prompt_len).collect();
        (&self.ids[1..], mask)
    }
}

pub fn encode_example(vocab: &Vocab, input: &str, output: &str) -> Result<Encoded> {
    let mut ids = vec![BOS];
    ids.extend(vocab.encode(input)?);
    ids.push(SEP);
    let prompt_len = ids.len();
    let out = vocab.encode(output)?;
    if out.is_empty() {
        return Err(crate::error::invalid("an example needs a non-empty output"));
    }
    ids.extend(out);
    ids.push(EOS);
    Ok(Encoded { ids, prompt_len })
}
