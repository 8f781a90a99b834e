//! Artifact emission: CSV for plot pipelines, JSON as the superset format,
//! both carrying the provenance header with the exact config hash.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;

use crate::config::FormatSpec;
use crate::CliError;

pub struct Provenance {
    pub command: &'static str,
    pub config_hash: String,
    pub mode: &'static str,
    pub seed: u64,
}

impl Provenance {
    fn json(&self) -> serde_json::Value {
        json!({
            "tool": "juliatherm",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config_hash": self.config_hash,
            "mode": self.mode,
            "seed": self.seed,
        })
    }

    fn csv_header(&self) -> String {
        format!(
            "# juliatherm {} {}\n# config-hash {}\n# mode {} seed {}\n",
            env!("CARGO_PKG_VERSION"),
            self.command,
            self.config_hash,
            self.mode,
            self.seed,
        )
    }
}

/// Tabular payload plus free-form notes. The JSON form carries the same
/// table as an array of objects along with the notes verbatim.
pub struct Body {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub notes: Vec<(&'static str, String)>,
}

impl Body {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Body {
            columns,
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn note(&mut self, key: &'static str, value: impl ToString) {
        self.notes.push((key, value.to_string()));
    }

    fn to_csv(&self, prov: &Provenance) -> String {
        let mut out = prov.csv_header();
        for (key, value) in &self.notes {
            // Notes keep the comment prefix so the column block below stays
            // machine-readable without a schema.
            out.push_str(&format!("# {key} {value}\n"));
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    fn to_json(&self, prov: &Provenance) -> String {
        let mut notes = serde_json::Map::new();
        for (key, value) in &self.notes {
            notes.insert((*key).to_string(), json!(value));
        }
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut obj = serde_json::Map::new();
                for (col, cell) in self.columns.iter().zip(row) {
                    obj.insert((*col).to_string(), parse_cell(cell));
                }
                serde_json::Value::Object(obj)
            })
            .collect();
        let doc = json!({
            "provenance": prov.json(),
            "notes": notes,
            "data": rows,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("json never fails");
        text.push('\n');
        text
    }
}

/// Cells are produced from typed values; recover numbers and bools so the
/// JSON superset is typed rather than stringly.
fn parse_cell(cell: &str) -> serde_json::Value {
    if cell.is_empty() {
        return serde_json::Value::Null;
    }
    if cell == "true" || cell == "false" {
        return json!(cell == "true");
    }
    if let Ok(i) = cell.parse::<i64>() {
        return json!(i);
    }
    if let Ok(x) = cell.parse::<f64>() {
        if x.is_finite() {
            return json!(x);
        }
    }
    json!(cell)
}

/// Render to the requested format and write to `path` when given. Returns
/// the path actually written.
pub fn emit(
    prov: &Provenance,
    body: &Body,
    format: FormatSpec,
    path: Option<&Path>,
) -> Result<Option<PathBuf>, CliError> {
    let Some(path) = path else {
        return Ok(None);
    };
    let text = match format {
        FormatSpec::Csv => body.to_csv(prov),
        FormatSpec::Json => body.to_json(prov),
    };
    let mut file = std::fs::File::create(path).map_err(|e| {
        CliError::Config(format!("cannot write `{}`: {e}", path.display()))
    })?;
    file.write_all(text.as_bytes())
        .and_then(|()| file.flush())
        .map_err(|e| CliError::Config(format!("cannot write `{}`: {e}", path.display())))?;
    Ok(Some(path.to_path_buf()))
}

/// Shortest round-trip decimal form; stable across runs and platforms.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x}")
    }
}
