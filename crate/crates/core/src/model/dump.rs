//! Attention dumps.
//!
//! ```text
//! layers  u32 LE
//! heads   u32 LE
//! T       u32 LE
//! probs   f32 LE x layers*heads*T*T, row-major [layer][head][query][key]
//! ```
//!
//! A JSON sidecar next to the binary carries free-form metadata.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Attention probabilities of one sequence, one `[T, T]` matrix per
/// `(layer, head)`, layer-major.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionRecord {
    pub num_layers: usize,
    pub num_heads: usize,
    pub seq_len: usize,
    pub probs: Vec<Tensor<f64>>,
}

impl AttentionRecord {
    pub fn get(&self, layer: usize, head: usize) -> &Tensor<f64> {
        &self.probs[layer * self.num_heads + head]
    }

    /// Largest deviation of any row sum from one.
    pub fn max_row_error(&self) -> f64 {
        let t = self.seq_len;
        self.probs
            .iter()
            .flat_map(|p| p.data().chunks(t).map(|r| (r.iter().sum::<f64>() - 1.0).abs()))
            .fold(0.0, f64::max)
    }
}

pub fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

pub fn write_attention_dump<W: Write>(mut w: W, rec: &AttentionRecord) -> Result<()> {
    for v in [rec.num_layers, rec.num_heads, rec.seq_len] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(rec.probs.len() * rec.seq_len * rec.seq_len * 4);
    for p in &rec.probs {
        for &x in p.data() {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_attention_dump<R: Read>(mut r: R) -> Result<AttentionRecord> {
    let mut header = [0u8; 12];
    r.read_exact(&mut header)?;
    let field = |i: usize| u32::from_le_bytes(header[i * 4..i * 4 + 4].try_into().unwrap()) as usize;
    let (layers, heads, t) = (field(0), field(1), field(2));
    if layers == 0 || heads == 0 || t == 0 {
        return Err(Error::Checkpoint(format!(
            "attention dump header has a zero extent: {layers}x{heads}x{t}"
        )));
    }
    let mut payload = vec![0u8; layers * heads * t * t * 4];
    r.read_exact(&mut payload)?;
    let values: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let probs = values
        .chunks(t * t)
        .map(|c| Tensor::new(vec![t, t], c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok(AttentionRecord {
        num_layers: layers,
        num_heads: heads,
        seq_len: t,
        probs,
    })
}

/// Writes `path` and its JSON sidecar.
pub fn save_attention_dump(path: &Path, rec: &AttentionRecord, meta: &Value) -> Result<()> {
    write_attention_dump(BufWriter::new(File::create(path)?), rec)?;
    let mut side = BufWriter::new(File::create(sidecar_path(path))?);
    serde_json::to_writer_pretty(&mut side, meta)?;
    side.flush()?;
    Ok(())
}

pub fn load_attention_dump(path: &Path) -> Result<(AttentionRecord, Value)> {
    let rec = read_attention_dump(BufReader::new(File::open(path)?))?;
    let side = sidecar_path(path);
    let meta = if side.exists() {
        serde_json::from_reader(BufReader::new(File::open(side)?))?
    } else {
        Value::Null
    };
    Ok((rec, meta))
}
