//! CSV time-series ingestion and return symbolization.
//!
//! Each step of a value series is classified by its relative change
//! `r_t = (v_t − v_{t−1}) / v_{t−1}` against a threshold (default 1e-4,
//! i.e. 0.01%):
//!
//! * `A` — fell by more than the threshold (`r < −threshold`),
//! * `B` — fell by less (`−threshold ≤ r < 0`),
//! * `C` — gained by less (`0 ≤ r < threshold`),
//! * `D` — gained by more (`r ≥ threshold`).
//!
//! The bands are half-open so every return maps to exactly one symbol:
//! `r = 0` is a `C`, `r = −threshold` a `B`, `r = +threshold` a `D`.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Default threshold: a relative change of 0.01%.
pub const DEFAULT_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Symbol {
    A,
    B,
    C,
    D,
}

impl Symbol {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Symbol::A => "A",
            Symbol::B => "B",
            Symbol::C => "C",
            Symbol::D => "D",
        }
    }
}

/// Symbolized return series with per-symbol frequencies.
#[derive(Debug, Clone, Serialize)]
pub struct SymbolSeries {
    pub symbols: Vec<Symbol>,
    /// Frequencies in A, B, C, D order; they sum to 1.
    pub frequencies: [f64; 4],
    /// Number of input values (one more than the symbol count).
    pub source_len: usize,
    pub threshold: f64,
}

/// Classifies consecutive relative changes of a value series.
pub fn symbolize(values: &[f64], threshold: f64) -> Result<SymbolSeries> {
    if values.len() < 2 {
        return Err(Error::TooShort(values.len()));
    }
    let mut symbols = Vec::with_capacity(values.len() - 1);
    let mut counts = [0usize; 4];
    for t in 1..values.len() {
        let prev = values[t - 1];
        if prev == 0.0 {
            return Err(Error::ZeroPreviousValue { row: t - 1 });
        }
        let r = (values[t] - prev) / prev;
        let symbol = if r < -threshold {
            Symbol::A
        } else if r < 0.0 {
            Symbol::B
        } else if r < threshold {
            Symbol::C
        } else {
            Symbol::D
        };
        counts[symbol.index()] += 1;
        symbols.push(symbol);
    }
    let n = symbols.len() as f64;
    let frequencies = [
        counts[0] as f64 / n,
        counts[1] as f64 / n,
        counts[2] as f64 / n,
        counts[3] as f64 / n,
    ];
    Ok(SymbolSeries {
        symbols,
        frequencies,
        source_len: values.len(),
        threshold,
    })
}

/// Reads one numeric column from a CSV file and symbolizes it.
///
/// Single-column files need no column selector. Multi-column files require
/// `column`, either a 0-based index or a header name; selection by name
/// keeps the result independent of the order of unrelated columns. A
/// leading non-numeric row in the selected column is treated as a header.
pub fn ingest_timeseries(
    path: impl AsRef<Path>,
    threshold: f64,
    column: Option<&str>,
) -> Result<SymbolSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path.as_ref())
        .map_err(|e| Error::Invalid(format!("csv: {e}")))?;
    let mut rows: Vec<csv::StringRecord> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Invalid(format!("csv: {e}")))?;
        rows.push(record);
    }
    if rows.is_empty() {
        return Err(Error::TooShort(0));
    }

    let width = rows[0].len();
    let col_index = match column {
        None => {
            if width != 1 {
                return Err(Error::Invalid(format!(
                    "{width} columns; select one with a column name or index"
                )));
            }
            0
        }
        Some(selector) => match selector.parse::<usize>() {
            Ok(i) if i < width => i,
            Ok(i) => {
                return Err(Error::Invalid(format!(
                    "column index {i} out of range for {width} columns"
                )))
            }
            Err(_) => {
                let header = &rows[0];
                header
                    .iter()
                    .position(|h| h.trim() == selector)
                    .ok_or_else(|| {
                        Error::Invalid(format!("no column named `{selector}` in the header"))
                    })?
            }
        },
    };

    let mut values = Vec::with_capacity(rows.len());
    for (row_idx, record) in rows.iter().enumerate() {
        let cell = record.get(col_index).unwrap_or("").trim();
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            _ if row_idx == 0 => continue, // header row
            _ => {
                return Err(Error::NonNumericCell {
                    row: row_idx,
                    cell: cell.to_string(),
                })
            }
        }
    }
    if values.len() < 2 {
        return Err(Error::TooShort(values.len()));
    }
    symbolize(&values, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn worked_example() {
        // r = −0.01 → A; r ≈ +0.0101 → D; r ≈ +5e-7 → C; r ≈ +0.0099995 → D
        let series = symbolize(&[100.0, 99.0, 99.9999, 100.00005, 101.0], 1e-4).unwrap();
        assert_eq!(
            series.symbols,
            vec![Symbol::A, Symbol::D, Symbol::C, Symbol::D]
        );
        assert_eq!(series.source_len, 5);
        assert_eq!(series.frequencies, [0.25, 0.0, 0.25, 0.5]);
    }

    #[test]
    fn constant_series_is_all_c() {
        let series = symbolize(&[3.0; 10], 1e-4).unwrap();
        assert!(series.symbols.iter().all(|s| *s == Symbol::C));
        assert_eq!(series.frequencies, [0.0, 0.0, 1.0, 0.0]);
        assert_eq!(series.symbols.len(), series.source_len - 1);
    }

    #[test]
    fn boundary_returns_use_half_open_bands() {
        // threshold 0.25 keeps the boundary returns exactly representable
        let thr = 0.25;
        let series = symbolize(&[1.0, 0.75], thr).unwrap();
        assert_eq!(series.symbols, vec![Symbol::B]); // r = −threshold
        let series = symbolize(&[1.0, 1.25], thr).unwrap();
        assert_eq!(series.symbols, vec![Symbol::D]); // r = +threshold
        let series = symbolize(&[1.0, 1.0], thr).unwrap();
        assert_eq!(series.symbols, vec![Symbol::C]); // r = 0
        let series = symbolize(&[1.0, 0.5], thr).unwrap();
        assert_eq!(series.symbols, vec![Symbol::A]);
    }

    #[test]
    fn error_cases() {
        assert!(matches!(symbolize(&[1.0], 1e-4), Err(Error::TooShort(1))));
        assert!(matches!(
            symbolize(&[1.0, 0.0, 2.0], 1e-4),
            Err(Error::ZeroPreviousValue { row: 1 })
        ));
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_with_header_and_column_selection() {
        let f = write_temp("noise,value\n9,100\n8,99\n7,101\n");
        let by_name = ingest_timeseries(f.path(), 1e-4, Some("value")).unwrap();
        assert_eq!(by_name.symbols, vec![Symbol::A, Symbol::D]);

        // permuting the unrelated column does not change the result
        let g = write_temp("value,noise\n100,9\n99,8\n101,7\n");
        let permuted = ingest_timeseries(g.path(), 1e-4, Some("value")).unwrap();
        assert_eq!(permuted.symbols, by_name.symbols);
        assert_eq!(permuted.frequencies, by_name.frequencies);
    }

    #[test]
    fn csv_single_column_without_header() {
        let f = write_temp("100\n99\n101\n");
        let series = ingest_timeseries(f.path(), 1e-4, None).unwrap();
        assert_eq!(series.symbols, vec![Symbol::A, Symbol::D]);
    }

    #[test]
    fn csv_error_reporting() {
        let f = write_temp("value\n100\nnot-a-number\n101\n");
        match ingest_timeseries(f.path(), 1e-4, Some("value")) {
            Err(Error::NonNumericCell { row, cell }) => {
                assert_eq!(row, 2);
                assert_eq!(cell, "not-a-number");
            }
            other => panic!("expected NonNumericCell, got {other:?}"),
        }
        let g = write_temp("a,b\n1,2\n3,4\n");
        assert!(ingest_timeseries(g.path(), 1e-4, None).is_err());
        let h = write_temp("value\n100\n");
        assert!(matches!(
            ingest_timeseries(h.path(), 1e-4, Some("value")),
            Err(Error::TooShort(1))
        ));
    }
}
