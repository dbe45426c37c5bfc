use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::cli::Format;
use crate::error::CliError;

/// A column-oriented table with a comment header.
pub struct Table {
    /// Comment lines written as `# ...` before the data (CSV) or as `"notes"` (JSON).
    pub notes: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(notes: Vec<String>, columns: &[&str]) -> Self {
        Self {
            notes,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Output directory, format and the list of files written so far.
pub struct Sink {
    dir: PathBuf,
    format: Format,
    written: Vec<String>,
}

impl Sink {
    pub fn new(dir: &Path, format: Format) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            format,
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    /// Writes `table` as `<stem>.csv` or `<stem>.json` depending on the format.
    pub fn table(&mut self, stem: &str, table: &Table) -> Result<PathBuf, CliError> {
        match self.format {
            Format::Csv => {
                let name = format!("{stem}.csv");
                let mut out = self.create(&name)?;
                write_csv(&mut out, table).map_err(|e| CliError::io(&self.path(&name), e))?;
                Ok(self.path(&name))
            }
            Format::Json => {
                let rows: Vec<Value> = table
                    .rows
                    .iter()
                    .map(|r| {
                        let obj: Map<String, Value> =
                            table.columns.iter().cloned().zip(r.iter().map(|&v| number(v))).collect();
                        Value::Object(obj)
                    })
                    .collect();
                self.json(stem, &json!({ "notes": table.notes, "columns": table.columns, "rows": rows }))
            }
        }
    }

    /// Writes `value` as pretty JSON to `<stem>.json`.
    pub fn json<T: Serialize>(&mut self, stem: &str, value: &T) -> Result<PathBuf, CliError> {
        let name = format!("{stem}.json");
        self.json_file(&name, value)
    }

    pub fn json_file<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let mut out = self.create(name)?;
        serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::other(e.to_string()))?;
        writeln!(out).and_then(|_| out.flush()).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    /// Writes a file through `write`, preceded by `notes` as comment lines.
    pub fn text<F>(&mut self, name: &str, notes: &[String], write: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    {
        let path = self.path(name);
        let mut out = self.create(name)?;
        for n in notes {
            writeln!(out, "# {n}").map_err(|e| CliError::io(&path, e))?;
        }
        write(&mut out)?;
        out.flush().map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    /// Writes raw bytes (no header) through `write`.
    pub fn binary<F>(&mut self, name: &str, write: F) -> Result<PathBuf, CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
    {
        let path = self.path(name);
        let mut out = self.create(name)?;
        write(&mut out)?;
        out.flush().map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    /// Writes `manifest.json`: tool version, the full run configuration and
    /// the files written. Contains nothing run-dependent beyond the inputs, so
    /// identical configurations give identical manifests.
    pub fn manifest<C: Serialize>(mut self, config: &C, extra: Value) -> Result<(), CliError> {
        let files = std::mem::take(&mut self.written);
        let manifest = json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "core_version": fishbridge_core::VERSION,
            "config": config,
            "inputs": extra,
            "outputs": files,
        });
        self.json_file("manifest.json", &manifest)?;
        Ok(())
    }
}

/// JSON number, or `null` for non-finite values.
fn number(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

fn write_csv<W: Write>(out: &mut W, table: &Table) -> std::io::Result<()> {
    for n in &table.notes {
        writeln!(out, "# {n}")?;
    }
    writeln!(out, "{}", table.columns.join(","))?;
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()
}
