//! Artifacts collected in memory and written once a verb has succeeded.

use std::fs;
use std::path::{Path, PathBuf};

use ppe_core::AnySignal;
use serde_json::{json, Map, Value};

use crate::error::{CliError, CliResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Bool(bool),
    Text(String),
    Missing,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Bool(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            // JSON has no infinities
            Cell::Num(v) if !v.is_finite() => Value::String(v.to_string()),
            Cell::Num(v) => json!(v),
            Cell::Int(v) => json!(v),
            Cell::Bool(v) => json!(v),
            Cell::Text(s) => json!(s),
            Cell::Missing => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<isize> for Cell {
    fn from(v: isize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Missing, Into::into)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&'static str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let i = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| &r[i]).collect())
    }

    fn render(&self, format: OutputFormat, stamp: &Stamp) -> (String, String) {
        match format {
            OutputFormat::Csv => {
                let mut s = format!("# scenario_hash={} version={}\n", stamp.hash, stamp.version);
                s.push_str(&self.columns.join(","));
                s.push('\n');
                for r in &self.rows {
                    s.push_str(&r.iter().map(Cell::csv).collect::<Vec<_>>().join(","));
                    s.push('\n');
                }
                (format!("{}.csv", self.name), s)
            }
            OutputFormat::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| {
                        let m: Map<String, Value> = self
                            .columns
                            .iter()
                            .zip(r)
                            .map(|(c, v)| (c.to_string(), v.to_json()))
                            .collect();
                        Value::Object(m)
                    })
                    .collect();
                let v = json!({ "scenario_hash": stamp.hash, "version": stamp.version, "rows": rows });
                (
                    format!("{}.json", self.name),
                    serde_json::to_string_pretty(&v).expect("json value") + "\n",
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stamp {
    pub hash: String,
    pub version: String,
}

impl Stamp {
    pub fn new(hash: String) -> Self {
        Self {
            hash,
            version: VERSION.to_string(),
        }
    }
}

/// Everything one verb produces.
#[derive(Debug, Default)]
pub struct Outputs {
    pub tables: Vec<Table>,
    /// `(relative path, signal)`.
    pub captures: Vec<(PathBuf, AnySignal)>,
    pub manifest: Map<String, Value>,
}

impl Outputs {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Writes every artifact under `dir` (created if missing) and returns the
    /// written paths.
    pub fn write(&self, dir: &Path, format: OutputFormat, stamp: &Stamp) -> CliResult<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut written = Vec::new();
        for t in &self.tables {
            let (name, text) = t.render(format, stamp);
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
            written.push(p);
        }
        let origin = format!("ppe {} scenario_hash={}", stamp.version, stamp.hash);
        for (rel, sig) in &self.captures {
            let p = dir.join(rel);
            if let Some(parent) = p.parent() {
                fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
            }
            ppe_core::iq::write_capture_with_origin(&p, sig, Some(origin.clone()))?;
            written.push(p);
        }
        let mut m = self.manifest.clone();
        m.insert("scenario_hash".into(), json!(stamp.hash));
        m.insert("version".into(), json!(stamp.version));
        m.insert(
            "files".into(),
            json!(written
                .iter()
                .map(|p| p.strip_prefix(dir).unwrap_or(p).display().to_string())
                .collect::<Vec<_>>()),
        );
        let p = dir.join("manifest.json");
        fs::write(&p, serde_json::to_string_pretty(&Value::Object(m)).expect("json value") + "\n")
            .map_err(|e| CliError::io(&p, e))?;
        written.push(p);
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> Table {
        let mut t = Table::new("demo", &["z_km", "ok", "note"]);
        t.push(vec![0.5.into(), true.into(), Cell::Missing]);
        t.push(vec![f64::INFINITY.into(), false.into(), "x".to_string().into()]);
        t
    }

    #[test]
    fn csv_has_stamp_and_rows() {
        let (name, s) = table().render(OutputFormat::Csv, &Stamp::new("abc".into()));
        assert_eq!(name, "demo.csv");
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], format!("# scenario_hash=abc version={VERSION}"));
        assert_eq!(lines[1], "z_km,ok,note");
        assert_eq!(lines[2], "5e-1,true,");
        assert_eq!(lines[3], "inf,false,x");
    }

    #[test]
    fn json_rows_are_objects() {
        let (name, s) = table().render(OutputFormat::Json, &Stamp::new("abc".into()));
        assert_eq!(name, "demo.json");
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["scenario_hash"], "abc");
        assert_eq!(v["rows"][0]["z_km"], 0.5);
        assert_eq!(v["rows"][1]["z_km"], "inf");
        assert!(v["rows"][0]["note"].is_null());
    }
}
