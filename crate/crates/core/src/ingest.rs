//! CSV ingestion: one file per stock or a single long-format file, aligned
//! onto a shared timestamp grid with forward- then back-filling of gaps.

use crate::data::PanelSeries;
use crate::{CoreError, Result};
use ndarray::Array3;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Column mapping for ingestion.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    /// Timestamp column; values are RFC 3339 strings or epoch seconds.
    pub timestamp_column: String,
    /// Present for long-format files holding several stocks.
    pub stock_column: Option<String>,
    /// Numeric feature columns in panel order. The conventional first five
    /// are open, high, low, close, volume.
    pub feature_columns: Vec<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            timestamp_column: "timestamp".into(),
            stock_column: None,
            feature_columns: ["open", "high", "low", "close", "volume"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

/// What ingestion did: row counts and how many gaps were filled.
#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub per_stock_rows: Vec<(String, usize)>,
    pub grid_len: usize,
    pub filled_cells: usize,
}

type StockRows = BTreeMap<i64, Vec<Option<f64>>>;

/// Load and align one or more CSV files into a dense panel.
///
/// Gaps (absent rows on the union grid, or empty cells) are forward-filled
/// then back-filled per (stock, feature). Non-numeric cells and unparsable
/// timestamps are hard errors naming the file and line.
pub fn load_panel_csv(paths: &[PathBuf], schema: &CsvSchema) -> Result<(PanelSeries, IngestReport)> {
    if paths.is_empty() {
        return Err(CoreError::Config("no input files given".into()));
    }
    let mut stocks: Vec<(String, StockRows)> = Vec::new();
    for path in paths {
        read_file(path, schema, &mut stocks)?;
    }
    if let Some(col) = &schema.stock_column {
        let _ = col;
        stocks.sort_by(|a, b| a.0.cmp(&b.0));
    }

    let mut grid: Vec<i64> = stocks
        .iter()
        .flat_map(|(_, rows)| rows.keys().copied())
        .collect();
    grid.sort_unstable();
    grid.dedup();
    if grid.is_empty() {
        return Err(CoreError::InvalidData("no data rows found".into()));
    }

    let t = grid.len();
    let s = stocks.len();
    let f = schema.feature_columns.len();
    let mut values = Array3::from_elem((t, s, f), f64::NAN);
    for (si, (_, rows)) in stocks.iter().enumerate() {
        for (ti, ts) in grid.iter().enumerate() {
            if let Some(cells) = rows.get(ts) {
                for (fi, cell) in cells.iter().enumerate() {
                    if let Some(v) = cell {
                        values[(ti, si, fi)] = *v;
                    }
                }
            }
        }
    }

    let mut filled = 0usize;
    for si in 0..s {
        for fi in 0..f {
            let mut last: Option<f64> = None;
            for ti in 0..t {
                if values[(ti, si, fi)].is_nan() {
                    if let Some(v) = last {
                        values[(ti, si, fi)] = v;
                        filled += 1;
                    }
                } else {
                    last = Some(values[(ti, si, fi)]);
                }
            }
            let mut next: Option<f64> = None;
            for ti in (0..t).rev() {
                if values[(ti, si, fi)].is_nan() {
                    if let Some(v) = next {
                        values[(ti, si, fi)] = v;
                        filled += 1;
                    }
                } else {
                    next = Some(values[(ti, si, fi)]);
                }
            }
            if values[(0, si, fi)].is_nan() {
                return Err(CoreError::InvalidData(format!(
                    "stock `{}` has no values at all for feature `{}`",
                    stocks[si].0, schema.feature_columns[fi]
                )));
            }
        }
    }

    validate_price_columns(&values, &stocks, schema)?;

    let report = IngestReport {
        per_stock_rows: stocks
            .iter()
            .map(|(id, rows)| (id.clone(), rows.len()))
            .collect(),
        grid_len: t,
        filled_cells: filled,
    };
    let panel = PanelSeries::new(
        values,
        grid,
        stocks.into_iter().map(|(id, _)| id).collect(),
        schema.feature_columns.clone(),
    )?;
    Ok((panel, report))
}

fn validate_price_columns(
    values: &Array3<f64>,
    stocks: &[(String, StockRows)],
    schema: &CsvSchema,
) -> Result<()> {
    let (t, s, _) = values.dim();
    for (fi, name) in schema.feature_columns.iter().enumerate() {
        let lower = name.to_ascii_lowercase();
        let is_price = matches!(lower.as_str(), "open" | "high" | "low" | "close");
        let is_volume = lower == "volume";
        if !is_price && !is_volume {
            continue;
        }
        for si in 0..s {
            for ti in 0..t {
                let v = values[(ti, si, fi)];
                if is_price && v <= 0.0 {
                    return Err(CoreError::InvalidData(format!(
                        "non-positive {name} {v} for stock `{}` at row {ti}",
                        stocks[si].0
                    )));
                }
                if is_volume && v < 0.0 {
                    return Err(CoreError::InvalidData(format!(
                        "negative volume {v} for stock `{}` at row {ti}",
                        stocks[si].0
                    )));
                }
            }
        }
    }
    Ok(())
}

fn read_file(
    path: &Path,
    schema: &CsvSchema,
    stocks: &mut Vec<(String, StockRows)>,
) -> Result<()> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| CoreError::InvalidData(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CoreError::InvalidData(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            CoreError::Config(format!(
                "{}: missing column `{name}` (headers: {})",
                path.display(),
                headers.iter().collect::<Vec<_>>().join(",")
            ))
        })
    };
    let ts_col = col(&schema.timestamp_column)?;
    let stock_col = schema.stock_column.as_deref().map(col).transpose()?;
    let feat_cols: Vec<usize> = schema
        .feature_columns
        .iter()
        .map(|c| col(c))
        .collect::<Result<_>>()?;

    let default_stock = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| path.display().to_string());

    for record in reader.records() {
        let record = record.map_err(|e| CoreError::InvalidData(format!("{}: {e}", path.display())))?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or_default();
        let ts_raw = record.get(ts_col).unwrap_or("").trim();
        let ts = parse_timestamp(ts_raw).ok_or_else(|| CoreError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("unparsable timestamp `{ts_raw}`"),
        })?;
        let stock_id = match stock_col {
            Some(c) => record.get(c).unwrap_or("").trim().to_string(),
            None => default_stock.clone(),
        };
        if stock_id.is_empty() {
            return Err(CoreError::Parse {
                path: path.to_path_buf(),
                line,
                message: "empty stock id".into(),
            });
        }
        let mut cells = Vec::with_capacity(feat_cols.len());
        for (&c, name) in feat_cols.iter().zip(&schema.feature_columns) {
            let raw = record.get(c).unwrap_or("").trim();
            if raw.is_empty() {
                cells.push(None);
            } else {
                let v: f64 = raw.parse().map_err(|_| CoreError::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("non-numeric `{name}` cell `{raw}`"),
                })?;
                cells.push(Some(v));
            }
        }
        let entry = match stocks.iter_mut().find(|(id, _)| *id == stock_id) {
            Some((_, rows)) => rows,
            None => {
                stocks.push((stock_id, BTreeMap::new()));
                &mut stocks.last_mut().unwrap().1
            }
        };
        entry.insert(ts, cells);
    }
    Ok(())
}

fn parse_timestamp(raw: &str) -> Option<i64> {
    if let Ok(epoch) = raw.parse::<i64>() {
        return Some(epoch);
    }
    if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp());
    }
    // bare dates are common in daily files
    if let Ok(d) = chrono::NaiveDate::parse_from_str(raw, "%Y-%m-%d") {
        return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp());
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn two_files_assemble_aligned_panel() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_csv(
            dir.path(),
            "aaa.csv",
            "timestamp,open,high,low,close,volume\n1,1,2,0.5,1.5,10\n2,1.5,2.5,1,2,11\n3,2,3,1.5,2.5,12\n",
        );
        let b = write_csv(
            dir.path(),
            "bbb.csv",
            "timestamp,open,high,low,close,volume\n1,5,6,4,5.5,20\n2,5.5,6.5,5,6,21\n3,6,7,5.5,6.5,22\n",
        );
        let (panel, report) = load_panel_csv(&[a, b], &CsvSchema::default()).unwrap();
        assert_eq!(panel.values().dim(), (3, 2, 5));
        assert_eq!(panel.stock_ids(), &["aaa".to_string(), "bbb".to_string()]);
        assert_eq!(report.filled_cells, 0);
    }

    #[test]
    fn missing_close_is_forward_filled() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_csv(
            dir.path(),
            "s.csv",
            "timestamp,open,high,low,close,volume\n1,1,2,0.5,1.5,10\n2,1.5,2.5,1,,11\n3,2,3,1.5,2.5,12\n",
        );
        let (panel, report) = load_panel_csv(&[a], &CsvSchema::default()).unwrap();
        assert_eq!(panel.get(1, 0, crate::data::CLOSE), 1.5);
        assert_eq!(report.filled_cells, 1);
    }

    #[test]
    fn non_numeric_cell_errors_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_csv(
            dir.path(),
            "s.csv",
            "timestamp,open,high,low,close,volume\n1,1,2,0.5,1.5,10\n2,1.5,2.5,1,oops,11\n",
        );
        let err = load_panel_csv(&[a], &CsvSchema::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("s.csv"), "{msg}");
        assert!(msg.contains(":3"), "{msg}");
        assert!(msg.contains("close"), "{msg}");
    }

    #[test]
    fn long_format_with_stock_column() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_csv(
            dir.path(),
            "all.csv",
            "timestamp,stock,open,high,low,close,volume\n\
             1,B,5,6,4,5.5,20\n1,A,1,2,0.5,1.5,10\n\
             2,A,1.5,2.5,1,2,11\n2,B,5.5,6.5,5,6,21\n",
        );
        let schema = CsvSchema {
            stock_column: Some("stock".into()),
            ..CsvSchema::default()
        };
        let (panel, _) = load_panel_csv(&[a], &schema).unwrap();
        assert_eq!(panel.stock_ids(), &["A".to_string(), "B".to_string()]);
        assert_eq!(panel.get(0, 0, crate::data::OPEN), 1.0);
        assert_eq!(panel.get(0, 1, crate::data::OPEN), 5.0);
    }

    #[test]
    fn rfc3339_and_date_timestamps_parse() {
        assert_eq!(parse_timestamp("1970-01-02T00:00:00Z"), Some(86_400));
        assert_eq!(parse_timestamp("1970-01-02"), Some(86_400));
        assert_eq!(parse_timestamp("86400"), Some(86_400));
        assert_eq!(parse_timestamp("not a time"), None);
    }

    #[test]
    fn union_grid_fills_absent_rows() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_csv(
            dir.path(),
            "a.csv",
            "timestamp,open,high,low,close,volume\n1,1,2,0.5,1.5,10\n3,2,3,1.5,2.5,12\n",
        );
        let b = write_csv(
            dir.path(),
            "b.csv",
            "timestamp,open,high,low,close,volume\n1,5,6,4,5.5,20\n2,5.5,6.5,5,6,21\n3,6,7,5.5,6.5,22\n",
        );
        let (panel, report) = load_panel_csv(&[a, b], &CsvSchema::default()).unwrap();
        assert_eq!(panel.len(), 3);
        // stock `a` row at ts=2 is carried forward from ts=1
        assert_eq!(panel.get(1, 0, crate::data::CLOSE), 1.5);
        assert_eq!(report.filled_cells, 5);
    }
}
