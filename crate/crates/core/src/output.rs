//! Tabular results and their serialization.
//!
//! Floats are written in CSV with 17 significant digits (`{:.16e}`), which
//! round-trips every `f64` exactly. JSON output uses the shortest round-trip
//! representation; non-finite floats become the strings `"inf"`, `"-inf"` and
//! `"nan"` in both formats.

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};

/// A single table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Bool(bool),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Text(String::new()), Cell::Float)
    }
}

fn non_finite(v: f64) -> &'static str {
    if v.is_nan() {
        "nan"
    } else if v > 0.0 {
        "inf"
    } else {
        "-inf"
    }
}

/// `{:.16e}` formatting, 17 significant digits.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        non_finite(v).to_string()
    }
}

impl Cell {
    fn to_csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(f) => format_float(*f),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(i) => json!(i),
            Cell::Float(f) if f.is_finite() => json!(f),
            Cell::Float(f) => json!(non_finite(*f)),
            Cell::Bool(b) => json!(b),
            Cell::Text(s) => json!(s),
        }
    }

    fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Float(f) => Some(*f),
            _ => None,
        }
    }
}

/// A table with a fixed column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

/// Summary statistics of one numeric column over its finite values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnSummary {
    pub column: String,
    pub count: usize,
    pub mean: f64,
    pub stderr: f64,
    pub min: f64,
    pub max: f64,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match the header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[k]).collect())
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Numerical(format!("csv serialization failed: {e}"));
        w.write_record(&self.columns).map_err(io)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::to_csv)).map_err(io)?;
        }
        w.into_inner().map_err(|e| Error::Numerical(format!("csv serialization failed: {e}")))
    }

    /// Rows as an array of objects keyed by column name, in column order.
    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| {
                    let mut m = serde_json::Map::new();
                    for (c, v) in self.columns.iter().zip(r) {
                        m.insert(c.clone(), v.to_json());
                    }
                    Value::Object(m)
                })
                .collect(),
        )
    }

    /// Mean, standard error, minimum and maximum of every numeric column.
    pub fn summary(&self) -> Vec<ColumnSummary> {
        let mut out = Vec::new();
        for (k, name) in self.columns.iter().enumerate() {
            let vals: Vec<f64> = self
                .rows
                .iter()
                .filter_map(|r| r[k].as_f64())
                .filter(|v| v.is_finite())
                .collect();
            let numeric = self.rows.iter().all(|r| matches!(r[k], Cell::Int(_) | Cell::Float(_)));
            if !numeric || vals.is_empty() {
                continue;
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let stderr = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
            } else {
                0.0
            };
            out.push(ColumnSummary {
                column: name.clone(),
                count: vals.len(),
                mean,
                stderr,
                min: vals.iter().cloned().fold(f64::INFINITY, f64::min),
                max: vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_csv() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = format_float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let digits = s.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).count();
            assert_eq!(digits, 17);
        }
        assert_eq!(format_float(f64::NEG_INFINITY), "-inf");
    }

    #[test]
    fn csv_and_json_shapes() {
        let mut t = Table::new(&["trial", "value", "ok"]);
        t.push(vec![0usize.into(), 0.5.into(), true.into()]);
        t.push(vec![1usize.into(), f64::NAN.into(), false.into()]);
        let csv = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(csv, "trial,value,ok\n0,5.0000000000000000e-1,true\n1,nan,false\n");
        assert_eq!(t.to_json()[1]["value"], "nan");
        let s = t.summary();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].count, 1);
        assert_eq!(s[0].mean, 0.5);
    }
}
