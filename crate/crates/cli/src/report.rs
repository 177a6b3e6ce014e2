//! Phase reports.
//!
//! Each phase writes `<phase>.json`:
//!
//! ```json
//! {
//!   "config_hash": "<sha256 of the canonical run config>",
//!   "notes": ["..."],
//!   "phase": "phase1",
//!   "provenance": "features.csv sha256:…",
//!   "seed": 42,
//!   "tables": { "<name>": { "columns": ["..."], "rows": [{"column": value}] } },
//!   "version": "0.1.0"
//! }
//! ```
//!
//! plus `<phase>_<table>.csv` for every table, `<phase>_timings.json` with
//! wall-clock measurements, and optionally `<phase>.md`. Object keys are
//! sorted and nothing scheduling-dependent enters `<phase>.json`, so reruns
//! with identical inputs are byte-identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

pub type Row = Map<String, Value>;

/// Builds a row from a `json!` object literal.
pub fn row(v: Value) -> Row {
    match v {
        Value::Object(m) => m,
        other => panic!("row expects an object, got {other}"),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Row) {
        debug_assert!(row.keys().all(|k| self.columns.contains(k)), "row {row:?} has columns outside {:?}", self.columns);
        self.rows.push(row);
    }

    fn to_json(&self) -> Value {
        let rows = self
            .rows
            .iter()
            .map(|r| Value::Object(self.columns.iter().map(|c| (c.clone(), r.get(c).cloned().unwrap_or(Value::Null))).collect()))
            .collect();
        serde_json::json!({ "columns": self.columns, "rows": Value::Array(rows) })
    }
}

/// Fields shared by every report of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub config_hash: String,
    pub seed: u64,
    pub provenance: String,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub phase: String,
    pub notes: Vec<String>,
    pub tables: BTreeMap<String, Table>,
    pub timings: BTreeMap<String, f64>,
}

fn sorted(v: Value) -> Value {
    match v {
        Value::Object(m) => {
            let b: BTreeMap<String, Value> = m.into_iter().map(|(k, v)| (k, sorted(v))).collect();
            Value::Object(b.into_iter().collect())
        }
        Value::Array(a) => Value::Array(a.into_iter().map(sorted).collect()),
        other => other,
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn md_cell(v: &Value) -> String {
    match v {
        Value::Number(n) if n.is_f64() => format!("{:.4}", n.as_f64().unwrap_or(f64::NAN)),
        other => cell(other).replace('|', "\\|"),
    }
}

impl Report {
    pub fn new(phase: &str) -> Self {
        Self { phase: phase.into(), ..Self::default() }
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn table(&mut self, name: &str, columns: &[&str]) -> &mut Table {
        self.tables.entry(name.to_string()).or_insert_with(|| Table::new(columns))
    }

    pub fn add_table(&mut self, name: &str, table: Table) {
        self.tables.insert(name.to_string(), table);
    }

    pub fn time(&mut self, key: impl Into<String>, seconds: f64) {
        self.timings.insert(key.into(), seconds);
    }

    pub fn to_json(&self, header: &Header) -> Value {
        let tables: Map<String, Value> = self.tables.iter().map(|(k, t)| (k.clone(), t.to_json())).collect();
        sorted(serde_json::json!({
            "config_hash": header.config_hash,
            "notes": self.notes,
            "phase": self.phase,
            "provenance": header.provenance,
            "seed": header.seed,
            "tables": tables,
            "version": env!("CARGO_PKG_VERSION"),
        }))
    }

    pub fn to_markdown(&self, header: &Header) -> String {
        let mut s = format!("# {}\n\n", self.phase);
        let _ = writeln!(s, "- data: {}\n- seed: {}\n- config: {}\n", header.provenance, header.seed, header.config_hash);
        for n in &self.notes {
            let _ = writeln!(s, "> {n}\n");
        }
        for (name, t) in &self.tables {
            let _ = writeln!(s, "## {name}\n");
            let _ = writeln!(s, "| {} |", t.columns.join(" | "));
            let _ = writeln!(s, "|{}", "---|".repeat(t.columns.len()));
            for r in &t.rows {
                let cells: Vec<String> = t.columns.iter().map(|c| r.get(c).map(md_cell).unwrap_or_default()).collect();
                let _ = writeln!(s, "| {} |", cells.join(" | "));
            }
            s.push('\n');
        }
        s
    }

    /// Writes the JSON document, the CSV tables, the timings and optionally
    /// Markdown into `dir`. Returns the written paths.
    pub fn write(&self, dir: &Path, header: &Header, markdown: bool) -> CliResult<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(CliError::write(dir))?;
        let mut written = Vec::new();
        let mut put = |name: String, bytes: Vec<u8>| -> CliResult<()> {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(CliError::write(&path))?;
            written.push(path);
            Ok(())
        };
        let mut json = serde_json::to_vec_pretty(&self.to_json(header))?;
        json.push(b'\n');
        put(format!("{}.json", self.phase), json)?;
        for (name, t) in &self.tables {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&t.columns)?;
            for r in &t.rows {
                w.write_record(t.columns.iter().map(|c| r.get(c).map(cell).unwrap_or_default()))?;
            }
            let bytes = w.into_inner().map_err(|e| CliError::write(dir.join(name))(e.into_error()))?;
            put(format!("{}_{name}.csv", self.phase), bytes)?;
        }
        let mut timings = serde_json::to_vec_pretty(&self.timings)?;
        timings.push(b'\n');
        put(format!("{}_timings.json", self.phase), timings)?;
        if markdown {
            put(format!("{}.md", self.phase), self.to_markdown(header).into_bytes())?;
        }
        Ok(written)
    }
}

/// A previously written report, if present and readable.
pub fn load_report(dir: &Path, phase: &str) -> Option<Value> {
    let text = std::fs::read_to_string(dir.join(format!("{phase}.json"))).ok()?;
    serde_json::from_str(&text).ok()
}

/// Rows of `table` in a loaded report.
pub fn report_rows<'a>(report: &'a Value, table: &str) -> Vec<&'a Row> {
    report["tables"][table]["rows"].as_array().map(|a| a.iter().filter_map(Value::as_object).collect()).unwrap_or_default()
}
