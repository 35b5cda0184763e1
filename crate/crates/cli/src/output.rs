//! JSON and CSV rendering. Every number in either format goes through
//! [`number_text`], so both carry the same digits.

use std::io::Write;
use std::path::Path;

use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

pub enum Output {
    /// A nested result; CSV flattens it into `key,value` rows.
    Document(Value),
    /// Rows of a table; JSON renders a single row as an object and several
    /// as an array of objects.
    Table {
        columns: Vec<String>,
        rows: Vec<Vec<Value>>,
        single: bool,
    },
}

/// Shortest decimal text that parses back to the same f64.
pub fn number_text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => serde_json::to_string(other).expect("scalar serializes"),
    }
}

impl Output {
    pub fn render(&self, format: Format) -> Result<String, CliError> {
        match format {
            Format::Json => {
                let value = self.to_json();
                Ok(serde_json::to_string_pretty(&value).expect("json values serialize") + "\n")
            }
            Format::Csv => self.to_csv(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Output::Document(v) => v.clone(),
            Output::Table { columns, rows, single } => {
                let objects: Vec<Value> = rows
                    .iter()
                    .map(|row| Value::Object(columns.iter().cloned().zip(row.iter().cloned()).collect::<Map<_, _>>()))
                    .collect();
                match (single, objects.len()) {
                    (true, 1) => objects.into_iter().next().unwrap(),
                    _ => Value::Array(objects),
                }
            }
        }
    }

    fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::io(e.to_string());
        match self {
            Output::Document(v) => {
                w.write_record(["key", "value"]).map_err(io)?;
                let mut rows = Vec::new();
                flatten("", v, &mut rows);
                for (k, v) in rows {
                    w.write_record([k, v]).map_err(io)?;
                }
            }
            Output::Table { columns, rows, .. } => {
                w.write_record(columns).map_err(io)?;
                for row in rows {
                    w.write_record(row.iter().map(number_text)).map_err(io)?;
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| CliError::io(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), child, out);
            }
        }
        leaf => out.push((prefix.to_string(), number_text(leaf))),
    }
}

pub fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::io(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::io(e.to_string()))
        }
    }
}
