//! Tables and all-or-nothing output writing.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use coag_core::format::float17;
use serde_json::{Map, Value};

use crate::config::Format;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(k) => k.to_string(),
            Cell::Float(x) => float17(*x),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(k) => Value::from(*k),
            Cell::Float(x) => serde_json::Number::from_f64(*x).map_or(Value::Null, Value::Number),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> =
                    self.columns.iter().zip(row).map(|(k, v)| (k.to_string(), v.json())).collect();
                Value::Object(obj)
            })
            .collect();
        Value::Array(rows)
    }
}

pub fn json_text(value: &Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    text
}

/// Files of one command, written together once everything has been computed.
#[derive(Debug, Default)]
pub struct OutputSet {
    files: Vec<(String, String)>,
}

impl OutputSet {
    pub fn add(&mut self, name: impl Into<String>, contents: String) {
        self.files.push((name.into(), contents));
    }

    pub fn add_table(&mut self, stem: &str, table: &Table, format: Format) {
        match format {
            Format::Csv => self.add(format!("{stem}.csv"), table.to_csv()),
            Format::Json => self.add(format!("{stem}.json"), json_text(&table.to_json())),
        }
    }

    pub fn add_json(&mut self, name: &str, value: &Value) {
        self.add(name, json_text(value));
    }

    /// Writes each file through a temporary sibling and renames it into place;
    /// on failure the files already placed by this call are removed again.
    pub fn write(self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        fs::create_dir_all(dir)?;
        let mut placed = Vec::new();
        for (name, contents) in &self.files {
            let target = dir.join(name);
            let result = (|| -> std::io::Result<()> {
                let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
                tmp.write_all(contents.as_bytes())?;
                tmp.flush()?;
                tmp.persist(&target).map_err(|e| e.error)?;
                Ok(())
            })();
            if let Err(e) = result {
                for p in &placed {
                    let _ = fs::remove_file(p);
                }
                return Err(e.into());
            }
            placed.push(target);
        }
        Ok(placed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_render() {
        let mut t = Table::new(&["m", "value"]);
        t.push(vec![Cell::Int(2), Cell::Float(0.25)]);
        assert_eq!(t.to_csv(), "m,value\n2,2.5000000000000000e-1\n");
        assert_eq!(t.to_json(), serde_json::json!([{"m": 2, "value": 0.25}]));
    }

    #[test]
    fn writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputSet::default();
        out.add("a.txt", "x\n".into());
        out.add("b.txt", "y\n".into());
        let written = out.write(dir.path()).unwrap();
        assert_eq!(written.len(), 2);
        assert_eq!(fs::read_to_string(dir.path().join("b.txt")).unwrap(), "y\n");
    }
}
