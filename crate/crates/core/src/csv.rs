//! Plain-text tables shared by every on-disk artifact.
//!
//! A table is a block of `#`-prefixed comment lines, one header row of
//! comma-separated column names and rows of numbers. Numbers are written in
//! shortest round-trip scientific notation so reloading is bit exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    /// Comment lines without the leading `# `.
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Formats a float so that parsing it back yields the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Table {
            columns,
            ..Default::default()
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            let _ = writeln!(out, "# {c}");
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(',');
                }
                first = false;
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, what: &str) -> Result<Self> {
        let mut table = Table::default();
        let mut have_header = false;
        for (lineno, line) in text.lines().enumerate() {
            if let Some(c) = line.strip_prefix('#') {
                table.comments.push(c.trim_start().to_string());
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            if !have_header {
                table.columns = line.split(',').map(|s| s.trim().to_string()).collect();
                have_header = true;
                continue;
            }
            let row = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(what, format!("line {}: {e}", lineno + 1)))?;
            if row.len() != table.columns.len() {
                return Err(Error::parse(
                    what,
                    format!(
                        "line {} has {} fields, header has {}",
                        lineno + 1,
                        row.len(),
                        table.columns.len()
                    ),
                ));
            }
            table.rows.push(row);
        }
        if !have_header {
            return Err(Error::parse(what, "missing header row"));
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Value of a `key=value` pair in any comment line.
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.comments.iter().find_map(|line| {
            line.split(',').find_map(|field| {
                let (k, v) = field.split_once('=')?;
                (k.trim() == key).then(|| v.trim())
            })
        })
    }
}

/// First comment line of every emitted data file:
/// `quantity, units, T_t, solver_mode`.
pub fn quantity_header(quantity: &str, units: &str, train_end: Option<f64>, mode: Option<&str>) -> String {
    format!(
        "{quantity}, {units}, {}, {}",
        train_end.map_or_else(|| "-".to_string(), fmt_f64),
        mode.unwrap_or("-")
    )
}
