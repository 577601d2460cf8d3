use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldKind {
    Categorical,
    Numeric,
}

/// Logarithm used when bucketing numeric values as `floor(log(x)^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    #[default]
    Natural,
    Two,
    Ten,
}

impl LogBase {
    fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Two => x.log2(),
            LogBase::Ten => x.log10(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LogBase::Natural => "natural",
            LogBase::Two => "2",
            LogBase::Ten => "10",
        }
    }
}

impl FromStr for LogBase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "natural" | "e" | "ln" => Ok(LogBase::Natural),
            "2" | "e2" => Ok(LogBase::Two),
            "10" => Ok(LogBase::Ten),
            other => Err(Error::Config(format!(
                "discretize.log_base must be natural, 2 or 10, got {other:?}"
            ))),
        }
    }
}

/// Buckets a numeric value: `"1"` when `x <= 2` or missing, otherwise the
/// decimal rendering of `floor(log(x)^2)`.
pub fn discretize_numeric(x: Option<f64>, base: LogBase) -> String {
    match x {
        Some(v) if v > 2.0 => {
            let l = base.log(v);
            format!("{}", (l * l).floor() as i64)
        }
        _ => "1".to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRow {
    pub label: u8,
    pub values: Vec<String>,
}

/// Labelled rows of raw string tokens, one token per field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDataset {
    pub field_names: Vec<String>,
    pub field_kinds: Vec<FieldKind>,
    pub rows: Vec<RawRow>,
}

impl RawDataset {
    pub fn new(field_names: Vec<String>, field_kinds: Vec<FieldKind>) -> Result<Self> {
        if field_names.len() != field_kinds.len() {
            return Err(Error::Length {
                what: "field kinds",
                expected: field_names.len(),
                found: field_kinds.len(),
            });
        }
        Ok(Self {
            field_names,
            field_kinds,
            rows: Vec::new(),
        })
    }

    pub fn n_fields(&self) -> usize {
        self.field_names.len()
    }

    pub fn push(&mut self, label: u8, values: Vec<String>) -> Result<()> {
        if label > 1 {
            return Err(Error::InvalidArgument(format!(
                "label must be 0 or 1, got {label}"
            )));
        }
        if values.len() != self.n_fields() {
            return Err(Error::RowArity {
                row: self.rows.len(),
                expected: self.n_fields(),
                found: values.len(),
            });
        }
        self.rows.push(RawRow { label, values });
        Ok(())
    }

    /// Replaces every numeric field's tokens by their discretized bucket.
    pub fn discretize(&mut self, base: LogBase) {
        let numeric: Vec<usize> = self
            .field_kinds
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == FieldKind::Numeric)
            .map(|(i, _)| i)
            .collect();
        for row in &mut self.rows {
            for &i in &numeric {
                let x = row.values[i]
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite());
                row.values[i] = discretize_numeric(x, base);
            }
        }
    }

    /// Parses delimiter-separated text with a header line and a `label` column.
    /// Fields named in `numeric_fields` are numeric, the rest categorical.
    pub fn parse_delimited(text: &str, delimiter: char, numeric_fields: &[String]) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::EmptyInput)?;
        let columns: Vec<&str> = header.split(delimiter).map(str::trim).collect();
        let label_col = columns
            .iter()
            .position(|c| *c == "label")
            .ok_or_else(|| Error::Parse {
                line: 1,
                msg: "header has no `label` column".into(),
            })?;
        let names: Vec<String> = columns
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != label_col)
            .map(|(_, c)| c.to_string())
            .collect();
        for nf in numeric_fields {
            if !names.contains(nf) {
                return Err(Error::Config(format!(
                    "numeric field {nf:?} not present in header"
                )));
            }
        }
        let kinds = names
            .iter()
            .map(|n| {
                if numeric_fields.contains(n) {
                    FieldKind::Numeric
                } else {
                    FieldKind::Categorical
                }
            })
            .collect();
        let mut ds = RawDataset::new(names, kinds)?;
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(delimiter).collect();
            if cells.len() != columns.len() {
                return Err(Error::RowArity {
                    row: lineno + 1,
                    expected: columns.len(),
                    found: cells.len(),
                });
            }
            let label = match cells[label_col].trim() {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        msg: format!("label must be 0 or 1, got {other:?}"),
                    })
                }
            };
            let values = cells
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != label_col)
                .map(|(_, c)| c.to_string())
                .collect();
            ds.rows.push(RawRow { label, values });
        }
        Ok(ds)
    }

    pub fn load_delimited(path: &Path, delimiter: char, numeric_fields: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse_delimited(&text, delimiter, numeric_fields)
    }

    pub fn to_delimited(&self, delimiter: char) -> String {
        let mut out = String::from("label");
        for n in &self.field_names {
            out.push(delimiter);
            out.push_str(n);
        }
        out.push('\n');
        for row in &self.rows {
            write!(out, "{}", row.label).unwrap();
            for v in &row.values {
                out.push(delimiter);
                out.push_str(v);
            }
            out.push('\n');
        }
        out
    }
}
