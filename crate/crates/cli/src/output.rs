//! Output directory helpers. Floats in CSV files carry 17 significant digits.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

/// Column documentation for every CSV the runner writes.
pub const CSV_SCHEMA: &str = include_str!("../csv_schema.json");

/// Scientific notation with 17 significant digits, enough to round-trip an `f64`.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn opt_float(x: Option<f64>) -> String {
    x.map(float).unwrap_or_default()
}

/// An output directory being filled by one command.
pub struct OutDir {
    path: PathBuf,
    wrote_csv: bool,
}

impl OutDir {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            wrote_csv: false,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(self.file(name), text)?;
        Ok(())
    }

    /// Writes a CSV file from a header and pre-formatted rows.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(self.file(name))?));
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        self.mark_csv()
    }

    /// Records that a CSV was written by other means; the schema file is
    /// copied next to the first one.
    pub fn mark_csv(&mut self) -> Result<(), CliError> {
        if !self.wrote_csv {
            std::fs::write(self.file("csv_schema.json"), CSV_SCHEMA)?;
            self.wrote_csv = true;
        }
        Ok(())
    }

    pub fn writer(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        Ok(BufWriter::new(File::create(self.file(name))?))
    }
}
