//! Plain-text parameter checkpoints.
//!
//! Format: a header line `diffcore-checkpoint v1`, then for each parameter
//! (sorted by name) one line `<name> <rows> <cols>` followed by one line of
//! whitespace-separated values in row-major order. Values use Rust's
//! shortest round-trip float formatting, so loading restores bit-identical
//! parameters.

use crate::{DiffError, ParameterStore, Result};
use ndarray::Array2;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

const HEADER: &str = "diffcore-checkpoint v1";

pub fn save_checkpoint(store: &ParameterStore, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    for name in store.names() {
        let t = store.get(&name)?;
        writeln!(out, "{} {} {}", name, t.nrows(), t.ncols()).expect("string write");
        let mut first = true;
        for v in t.iter() {
            if !first {
                out.push(' ');
            }
            write!(out, "{v}").expect("string write");
            first = false;
        }
        out.push('\n');
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ParameterStore> {
    let f = std::fs::File::open(path)?;
    let mut lines = BufReader::new(f).lines();
    let header = lines
        .next()
        .ok_or_else(|| DiffError::Checkpoint("empty file".into()))??;
    if header.trim() != HEADER {
        return Err(DiffError::Checkpoint(format!(
            "unexpected header `{header}`"
        )));
    }
    let mut store = ParameterStore::new();
    while let Some(meta) = lines.next() {
        let meta = meta?;
        if meta.trim().is_empty() {
            continue;
        }
        let mut parts = meta.split_whitespace();
        let name = parts
            .next()
            .ok_or_else(|| DiffError::Checkpoint("missing name".into()))?
            .to_string();
        let rows: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| DiffError::Checkpoint(format!("bad rows for `{name}`")))?;
        let cols: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| DiffError::Checkpoint(format!("bad cols for `{name}`")))?;
        let data_line = lines
            .next()
            .ok_or_else(|| DiffError::Checkpoint(format!("missing values for `{name}`")))??;
        let values: Vec<f64> = data_line
            .split_whitespace()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| DiffError::Checkpoint(format!("bad value `{s}` in `{name}`")))
            })
            .collect::<Result<_>>()?;
        if values.len() != rows * cols {
            return Err(DiffError::Checkpoint(format!(
                "`{name}` expects {} values, found {}",
                rows * cols,
                values.len()
            )));
        }
        let t = Array2::from_shape_vec((rows, cols), values)
            .map_err(|e| DiffError::Checkpoint(e.to_string()))?;
        store.insert(&name, t);
    }
    Ok(store)
}
