//! File input, report output and the error type behind the exit codes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::Value;
use svspec::potential::MatrixPotential;
use svspec::spectraldata::SpectralDataset;

use crate::Global;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Lib(#[from] svspec::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(e) => e.exit_code(),
            CliError::Usage(_) => 64,
            CliError::Io(_) => 74,
        }
    }
}

macro_rules! lib_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Lib(e.into())
            }
        }
    )*};
}

lib_error!(
    svspec::potential::PotentialError,
    svspec::matode::MatodeError,
    svspec::spectrum::SpectrumError,
    svspec::spectraldata::SpectralDataError,
    svspec::weylm::WeylError,
    svspec::inversekit::InverseError,
    svspec::scalartools::ScalarError
);

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn read_json(path: &Path) -> Result<Value, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub fn load_potential(path: &Path) -> Result<MatrixPotential, CliError> {
    Ok(MatrixPotential::from_json_str(&read_text(path)?)?)
}

pub fn load_dataset(path: &Path) -> Result<SpectralDataset, CliError> {
    Ok(SpectralDataset::from_json(&read_json(path)?)?)
}

/// A file holding either a potential or a dataset, told apart by `records`.
pub enum Input {
    Potential(MatrixPotential),
    Dataset(Box<SpectralDataset>),
}

pub fn load_input(path: &Path) -> Result<Input, CliError> {
    let v = read_json(path)?;
    if v.get("records").is_some() {
        Ok(Input::Dataset(Box::new(SpectralDataset::from_json(&v)?)))
    } else {
        Ok(Input::Potential(MatrixPotential::from_json_str(&v.to_string())?))
    }
}

/// Write to `--out` or standard output.
pub fn emit(g: &Global, text: &str) -> Result<(), CliError> {
    match &g.out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
                // a closed reader (`| head`) is not an error
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io(format!("stdout: {e}"))),
                _ => Ok(()),
            }
        }
    }
}

pub fn emit_json(g: &Global, v: &Value) -> Result<(), CliError> {
    let mut text = svspec::serial::to_text(v);
    text.push('\n');
    emit(g, &text)
}

/// Rows of string cells as CSV text.
pub fn csv_text(header: &[String], rows: &[Vec<String>]) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn num(x: f64) -> String {
    x.to_string()
}

/// Comma-separated list of integers, or an inclusive range `a:b`.
pub fn parse_index_list(s: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Usage(format!("`{s}` is not an index list (e.g. 1,2,5 or 10:40)"));
    if let Some((a, b)) = s.split_once(':') {
        let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}
