//! CSV output with a provenance comment line ahead of the header.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// What every emitted table records about the run that produced it.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub config_hash: String,
}

impl Provenance {
    fn line(&self) -> String {
        let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        format!(
            "# rcrte {} seed={seed} config={}\n",
            env!("CARGO_PKG_VERSION"),
            self.config_hash
        )
    }
}

pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self, prov: &Provenance) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        let body = w
            .into_inner()
            .map_err(|e| CliError::Input(format!("csv output: {e}")))?;
        Ok(prov.line() + &String::from_utf8_lossy(&body))
    }

    pub fn write(&self, dir: &Path, name: &str, prov: &Provenance) -> Result<PathBuf, CliError> {
        let path = dir.join(name);
        fs::write(&path, self.render(prov)?).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Input(format!("csv output: {e}"))
}

/// Shortest representation that reads back to the same value.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NA".to_string()
    } else {
        format!("{x}")
    }
}
