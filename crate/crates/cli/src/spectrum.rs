use std::path::PathBuf;

use serde_json::{json, Value};
use svspec::spectraldata::{assemble_dataset, check_condition_a, check_condition_b, DatasetConfig, SpectralDataset};
use svspec::spectrum::SpectrumConfig;

use crate::io::{self, CliError};
use crate::{Format, Global};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Potential JSON file.
    potential: PathBuf,
    /// Upper end of the located spectrum.
    #[arg(long)]
    lmax: f64,
}

pub fn spectrum_config(g: &Global) -> SpectrumConfig {
    g.rel_tol.map(SpectrumConfig::with_tol).unwrap_or_default()
}

pub fn build_dataset(g: &Global, v: &svspec::potential::MatrixPotential, lmax: f64) -> Result<SpectralDataset, CliError> {
    if !(lmax > 0.0 && lmax.is_finite()) {
        return Err(CliError::Usage(format!("--lmax {lmax} must be positive")));
    }
    let cfg = DatasetConfig { spectrum: spectrum_config(g), ..Default::default() };
    Ok(assemble_dataset(v, lmax, &cfg)?.0)
}

pub fn run(g: &Global, a: Args) -> Result<(), CliError> {
    let v = io::load_potential(&a.potential)?;
    let ds = build_dataset(g, &v, a.lmax)?;
    match g.format_or(Format::Json) {
        Format::Json => {
            let mut out = ds.to_json();
            let tail = match check_condition_b(&ds) {
                Ok(t) => serde_json::to_value(t).expect("diagnostics serialise"),
                Err(e) => json!({ "error": e.to_string() }),
            };
            let obj = out.as_object_mut().expect("dataset is an object");
            obj.insert("lambda_max".into(), Value::from(a.lmax));
            obj.insert("condition_a".into(), serde_json::to_value(check_condition_a(&ds)).expect("report serialises"));
            obj.insert("tail_diagnostics".into(), tail);
            io::emit_json(g, &out)
        }
        Format::Csv => {
            let header: Vec<String> = ["lambda", "k", "n", "j"].map(String::from).to_vec();
            let rows: Vec<Vec<String>> = ds
                .records
                .iter()
                .map(|r| {
                    let (n, j) = r.index.map_or((String::new(), String::new()), |(n, j)| (n.to_string(), (j + 1).to_string()));
                    vec![io::num(r.lambda), r.k.to_string(), n, j]
                })
                .collect();
            io::emit(g, &io::csv_text(&header, &rows)?)
        }
    }
}
