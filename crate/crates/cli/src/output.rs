use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
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

/// A rectangular result: CSV with a header row, or a JSON array of objects.
pub struct Rows {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Rows {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn cell(v: &Value) -> String {
        match v {
            Value::Null => String::new(),
            Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }

    pub fn to_csv(&self) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| CliError::Input(format!("formatting CSV: {e}"));
        w.write_record(&self.columns).map_err(err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Self::cell)).map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Input(e.to_string()))
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> = self
                        .columns
                        .iter()
                        .cloned()
                        .zip(row.iter().cloned())
                        .collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }

    pub fn render(&self, format: Format) -> CliResult<String> {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => pretty(&self.to_json()),
        }
    }
}

pub fn pretty<T: Serialize + ?Sized>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes result files into the output directory and records them for the manifest.
pub struct OutputDir {
    dir: PathBuf,
    format: Format,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path, format: Format) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            format,
            written: Vec::new(),
        })
    }

    pub fn format(&self) -> Format {
        self.format
    }

    fn write(&mut self, file: String, contents: &str) -> CliResult<()> {
        let path = self.dir.join(&file);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        self.written.push(file);
        Ok(())
    }

    /// Writes `stem.csv` or `stem.json` and returns the rendered text.
    pub fn rows(&mut self, stem: &str, rows: &Rows) -> CliResult<String> {
        let text = rows.render(self.format)?;
        self.write(format!("{stem}.{}", self.format.extension()), &text)?;
        Ok(text)
    }

    /// Writes a JSON document regardless of the output format.
    pub fn json<T: Serialize + ?Sized>(&mut self, stem: &str, value: &T) -> CliResult<String> {
        let text = pretty(value)?;
        self.write(format!("{stem}.json"), &text)?;
        Ok(text)
    }

    /// Writes `manifest.json` with the resolved configuration and output list.
    pub fn finish(
        mut self,
        command: &str,
        seed: Option<u64>,
        config: Value,
        extra: Map<String, Value>,
    ) -> CliResult<()> {
        let mut manifest = Map::new();
        manifest.insert("command".into(), Value::from(command));
        manifest.insert("version".into(), Value::from(env!("CARGO_PKG_VERSION")));
        manifest.insert("seed".into(), seed.map(Value::from).unwrap_or(Value::Null));
        manifest.insert(
            "format".into(),
            serde_json::to_value(self.format).unwrap_or(Value::Null),
        );
        manifest.insert("config".into(), config);
        manifest.extend(extra);
        manifest.insert("outputs".into(), Value::from(self.written.clone()));
        let text = pretty(&Value::Object(manifest))?;
        self.write("manifest.json".into(), &text)
    }
}
