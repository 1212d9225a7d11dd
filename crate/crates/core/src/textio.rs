//! Delimited-text helpers shared by the file formats.
//!
//! Every format is: `# key=value` header lines, one column-name line, then
//! comma-separated rows. Blank lines are ignored.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub meta: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Self::default()
        }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        self.rows.push(row);
    }

    /// Serialises with metadata in key order, after an optional title line.
    pub fn render(&self, title: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {title}");
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}={v}");
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format_num(*v)).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut table = Table::default();
        let mut have_header = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let line_no = lineno + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((k, v)) = comment.trim().split_once('=') {
                    table.meta.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            if !have_header {
                table.columns = line.split(',').map(|c| c.trim().to_string()).collect();
                have_header = true;
                continue;
            }
            let row: Result<Vec<f64>> = line
                .split(',')
                .map(|c| {
                    c.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line: line_no,
                        msg: format!("bad number {c:?}: {e}"),
                    })
                })
                .collect();
            let row = row?;
            if row.len() != table.columns.len() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected {} columns, found {}", table.columns.len(), row.len()),
                });
            }
            table.rows.push(row);
        }
        if !have_header {
            return Err(Error::Parse {
                line: 0,
                msg: "missing column header".into(),
            });
        }
        Ok(table)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn require_column(&self, name: &str) -> Result<Vec<f64>> {
        self.column(name).ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("missing column {name:?}"),
        })
    }

    pub fn meta_f64(&self, key: &str) -> Option<f64> {
        self.meta.get(key).and_then(|v| v.parse().ok())
    }
}

/// Shortest round-trip representation, so output is stable byte for byte.
pub fn format_num(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v}")
    }
}
