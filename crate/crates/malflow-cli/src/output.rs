//! Table rendering and file emission.
//!
//! Every run ends in the same place: a table (CSV or JSON), an optional
//! JSON report, and a run manifest.  Rendering happens entirely in
//! memory and files are written only after the computation has finished,
//! so a failed run leaves no partial output behind.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Value};

use malliavin_flow::{CSV_SCHEMA, VERSION};

/// One table cell; numbers render in shortest round-trip form.
#[derive(Clone, Debug)]
pub enum Cell {
    UInt(u64),
    Num(f64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::UInt(v) => v.to_string(),
            Cell::Num(v) => format!("{v}"),
            Cell::Text(s) => s.clone(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::UInt(v) => json!(v),
            Cell::Num(v) => serde_json::Number::from_f64(*v)
                .map(Value::Number)
                .unwrap_or(Value::Null),
            Cell::Text(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::UInt(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::UInt(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Column-labelled rows destined for one output file.
#[derive(Clone, Debug)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: Vec<S>) -> Self {
        Table {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width mismatch");
        self.rows.push(row);
    }

    /// CSV with the versioned schema header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# malliavin-flow v{VERSION} schema={CSV_SCHEMA}");
        let _ = writeln!(out, "{}", self.columns.join(","));
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(Cell::render).collect();
            let _ = writeln!(out, "{}", line.join(","));
        }
        out
    }

    /// The same content as a self-describing JSON document.
    pub fn to_json(&self) -> Value {
        json!({
            "version": VERSION,
            "schema": CSV_SCHEMA,
            "columns": self.columns,
            "rows": self.rows.iter()
                .map(|r| Value::Array(r.iter().map(Cell::to_json).collect()))
                .collect::<Vec<Value>>(),
        })
    }
}

/// A named pass/fail outcome of one in-run check.
#[derive(Clone, Debug)]
pub struct CheckFlag {
    pub name: String,
    pub pass: bool,
}

impl CheckFlag {
    pub fn new(name: impl Into<String>, pass: bool) -> Self {
        CheckFlag {
            name: name.into(),
            pass,
        }
    }
}

/// Everything a subcommand produced, ready to be written.
#[derive(Debug, Default)]
pub struct Outcome {
    /// The main tabular output (absent for report-only runs).
    pub table: Option<Table>,
    /// A full JSON report replacing the table (the suite battery).
    pub report: Option<Value>,
    /// Checks the run performed; any failure turns the exit code to 1.
    pub checks: Vec<CheckFlag>,
    /// Human summary lines for stdout.
    pub summary: Vec<String>,
    /// Extra files: `(path, contents)`, written verbatim.
    pub extra_files: Vec<(PathBuf, String)>,
}

impl Outcome {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// The manifest path sitting next to an output file.
pub fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating directory {}", parent.display()))?;
        }
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}
