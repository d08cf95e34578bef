//! Tables, provenance headers and atomic file output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use datadefect_core::ingest::csv_field;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Cell {
    Text(String),
    Int(u64),
    /// Proportion or percentage, written with 6 decimals.
    Fixed(f64),
    /// Written in the shortest form that reads back to the same value.
    Real(f64),
    Bool(bool),
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Self {
        Cell::Text(s.into())
    }

    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => csv_field(s),
            Cell::Int(v) => v.to_string(),
            Cell::Fixed(v) => format!("{v:.6}"),
            Cell::Real(v) => shortest(*v),
            Cell::Bool(v) => v.to_string(),
        }
    }

    fn json(&self) -> Value {
        let num = |v: f64| {
            serde_json::Number::from_f64(v)
                .map(Value::Number)
                .unwrap_or(Value::Null)
        };
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Int(v) => json!(v),
            // round-trip through the fixed text so both formats agree
            Cell::Fixed(v) => num(format!("{v:.6}").parse().unwrap_or(*v)),
            Cell::Real(v) => num(*v),
            Cell::Bool(v) => Value::Bool(*v),
        }
    }
}

/// Shortest round-trip text, in exponent form for very small or large
/// magnitudes.
fn shortest(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

pub struct Table {
    pub name: &'static str,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &'static str, columns: &[&'static str]) -> Self {
        Self {
            name,
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

pub struct Input {
    pub role: &'static str,
    pub path: String,
    pub sha256: String,
}

/// Inputs and settings that identify a run. No timestamps, so identical runs
/// produce identical bytes.
pub struct Provenance {
    pub command: &'static str,
    pub config: Vec<(&'static str, String)>,
    pub inputs: Vec<Input>,
}

impl Provenance {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            config: Vec::new(),
            inputs: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &'static str, value: impl ToString) {
        self.config.push((key, value.to_string()));
    }

    /// Reads an input file and records its digest; the returned text is what
    /// gets parsed, so the digest always describes the data used.
    pub fn read(&mut self, role: &'static str, path: &Path) -> std::io::Result<String> {
        let bytes = fs::read(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        let digest = Sha256::digest(&bytes);
        self.inputs.push(Input {
            role,
            path: path.display().to_string(),
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        });
        String::from_utf8(bytes).map_err(|_| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("{}: not valid UTF-8", path.display()),
            )
        })
    }

    fn csv_header(&self) -> String {
        let mut out = format!(
            "# {} {}\n# command: {}\n",
            env!("CARGO_PKG_NAME"),
            env!("CARGO_PKG_VERSION"),
            self.command
        );
        for (k, v) in &self.config {
            out.push_str(&format!("# config: {k}={v}\n"));
        }
        for i in &self.inputs {
            out.push_str(&format!(
                "# input: {}={} sha256={}\n",
                i.role, i.path, i.sha256
            ));
        }
        out
    }

    fn json(&self) -> Value {
        let config: Map<String, Value> = self
            .config
            .iter()
            .map(|(k, v)| (k.to_string(), Value::String(v.clone())))
            .collect();
        let inputs: Vec<Value> = self
            .inputs
            .iter()
            .map(|i| json!({"role": i.role, "path": i.path, "sha256": i.sha256}))
            .collect();
        json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "config": config,
            "inputs": inputs,
        })
    }
}

pub fn render(table: &Table, provenance: &Provenance, format: Format) -> String {
    match format {
        Format::Csv => {
            let mut out = provenance.csv_header();
            out.push_str(&table.columns.join(","));
            out.push('\n');
            for row in &table.rows {
                let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            out
        }
        Format::Json => {
            let rows: Vec<Value> = table
                .rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> = table
                        .columns
                        .iter()
                        .zip(row)
                        .map(|(c, v)| (c.to_string(), v.json()))
                        .collect();
                    Value::Object(obj)
                })
                .collect();
            let doc = json!({"provenance": provenance.json(), "rows": rows});
            let mut s = serde_json::to_string_pretty(&doc).expect("JSON values always serialize");
            s.push('\n');
            s
        }
    }
}

/// Writes every table into `dir`, each through a temporary file and a
/// rename so readers never see a partial file.
pub fn write_tables(
    dir: &Path,
    tables: &[Table],
    provenance: &Provenance,
    format: Format,
) -> std::io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(tables.len());
    for table in tables {
        let target = dir.join(format!("{}.{}", table.name, format.extension()));
        let tmp = dir.join(format!(".{}.{}.tmp", table.name, format.extension()));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(render(table, provenance, format).as_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &target)?;
        written.push(target);
    }
    Ok(written)
}
