//! CSV and JSON emission. Floats carry 17 significant digits so that every
//! value round-trips exactly; files are staged and renamed into place only
//! after every report of a run has been rendered.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::ser::Formatter;

use crate::config::{Experiment, ExperimentConfig};
use crate::error::CliError;

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// One CSV cell.
pub enum Cell {
    Int(u64),
    Float(f64),
    Flag(bool),
}

impl Cell {
    fn render(&self) -> String {
        match *self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => fmt_f64(v),
            Cell::Flag(v) => u8::from(v).to_string(),
        }
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Flag(v)
    }
}

pub struct Csv {
    header: Vec<String>,
    body: String,
}

impl Csv {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            body: String::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        assert_eq!(cells.len(), self.header.len(), "csv row width");
        let line: Vec<String> = cells.iter().map(Cell::render).collect();
        self.body.push_str(&line.join(","));
        self.body.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        let mut out = self.header.join(",");
        out.push('\n');
        out.push_str(&self.body);
        out.into_bytes()
    }
}

/// Compact JSON with `{:.16e}` floats; non-finite values become `null`.
struct SignificantDigits;

impl Formatter for SignificantDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SignificantDigits);
    value
        .serialize(&mut ser)
        .map_err(|e| CliError::Numeric(format!("json encoding: {e}")))?;
    out.push(b'\n');
    Ok(out)
}

#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub software: &'static str,
    pub version: &'static str,
    pub experiment: Experiment,
    pub config_digest: String,
    pub master_seed: u64,
    pub config: &'a ExperimentConfig,
    pub results: T,
}

impl<'a, T: Serialize> Envelope<'a, T> {
    pub fn new(config: &'a ExperimentConfig, results: T) -> Self {
        Self {
            software: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            experiment: config.experiment,
            config_digest: config.digest(),
            master_seed: config.master_seed,
            config,
            results,
        }
    }
}

/// A rendered report file.
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Stage every artifact in `dir`, then rename them all into place.
pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let mut staged = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_error(dir, e))?;
        tmp.write_all(&a.bytes)
            .map_err(|e| io_error(tmp.path(), e))?;
        tmp.as_file()
            .sync_all()
            .map_err(|e| io_error(tmp.path(), e))?;
        staged.push((tmp, dir.join(&a.name)));
    }
    let mut written = Vec::with_capacity(staged.len());
    for (tmp, target) in staged {
        tmp.persist(&target)
            .map_err(|e| io_error(&target, e.error))?;
        written.push(target);
    }
    Ok(written)
}
