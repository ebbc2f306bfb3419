//! Line-delimited provenance log: one JSON object per manipulation step,
//! floats written with 17 significant digits so parsing restores them
//! bit-exactly.

use crate::{CoreError, Result};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// One manipulated sample inside a step.
#[derive(Debug, Clone, PartialEq, serde::Deserialize)]
pub struct ChoiceRecord {
    pub sample_id: usize,
    pub transform: usize,
    pub mixup: usize,
    pub lambda: f64,
    /// Hex-encoded 32-byte sample seed.
    pub seed: String,
}

/// Everything needed to regenerate one step's augmented batch bit-exactly.
#[derive(Debug, Clone, PartialEq, serde::Deserialize)]
pub struct ProvenanceRecord {
    pub step: u64,
    pub epoch: u64,
    pub sample_ids: Vec<usize>,
    pub alpha: f64,
    pub p_rows: usize,
    pub p_cols: usize,
    /// Row-major probability matrix.
    pub p: Vec<f64>,
    /// Row-major strength matrix.
    pub lambda: Vec<f64>,
    pub choices: Vec<ChoiceRecord>,
    pub config_hash: String,
    pub batch_checksum: String,
}

fn push_f64(out: &mut String, v: f64) {
    // 17 significant digits uniquely identify any f64
    write!(out, "{v:.16e}").expect("string write");
}

fn push_f64_slice(out: &mut String, vs: &[f64]) {
    out.push('[');
    for (i, v) in vs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        push_f64(out, *v);
    }
    out.push(']');
}

fn push_usize_slice(out: &mut String, vs: &[usize]) {
    out.push('[');
    for (i, v) in vs.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{v}").expect("string write");
    }
    out.push(']');
}

impl ProvenanceRecord {
    /// Serialize as a single JSON line.
    pub fn to_json_line(&self) -> String {
        let mut s = String::with_capacity(512);
        s.push('{');
        write!(s, "\"step\":{},\"epoch\":{},", self.step, self.epoch).unwrap();
        s.push_str("\"sample_ids\":");
        push_usize_slice(&mut s, &self.sample_ids);
        s.push_str(",\"alpha\":");
        push_f64(&mut s, self.alpha);
        write!(s, ",\"p_rows\":{},\"p_cols\":{},", self.p_rows, self.p_cols).unwrap();
        s.push_str("\"p\":");
        push_f64_slice(&mut s, &self.p);
        s.push_str(",\"lambda\":");
        push_f64_slice(&mut s, &self.lambda);
        s.push_str(",\"choices\":[");
        for (i, c) in self.choices.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            write!(
                s,
                "{{\"sample_id\":{},\"transform\":{},\"mixup\":{},\"lambda\":",
                c.sample_id, c.transform, c.mixup
            )
            .unwrap();
            push_f64(&mut s, c.lambda);
            write!(s, ",\"seed\":\"{}\"}}", c.seed).unwrap();
        }
        s.push_str("],");
        write!(
            s,
            "\"config_hash\":\"{}\",\"batch_checksum\":\"{}\"}}",
            self.config_hash, self.batch_checksum
        )
        .unwrap();
        s
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        serde_json::from_str(line)
            .map_err(|e| CoreError::InvalidData(format!("malformed provenance record: {e}")))
    }
}

/// Append-only provenance log writer.
pub struct ProvenanceWriter {
    file: std::fs::File,
}

impl ProvenanceWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(Self {
            file: std::fs::File::create(path)?,
        })
    }

    pub fn append(&mut self, record: &ProvenanceRecord) -> Result<()> {
        self.file.write_all(record.to_json_line().as_bytes())?;
        self.file.write_all(b"\n")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.file.flush()?;
        Ok(())
    }
}

/// Read a whole log back.
pub fn read_provenance_log(path: &Path) -> Result<Vec<ProvenanceRecord>> {
    let f = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(ProvenanceRecord::from_json_line(&line)?);
    }
    Ok(out)
}
