use std::fs::File;
use std::path::PathBuf;

use serde_json::json;
use svspec::scalartools::{
    check_scalar_characterization, convert, discrete_hilbert, l2_norm, read_sequences, write_sequences, HilbertKind, SeqKind,
    SequenceTable,
};

use crate::io::{self, CliError};
use crate::{Format, Global};

#[derive(Debug, clap::Args)]
#[command(group(clap::ArgGroup::new("action").required(true).args(["convert", "hilbert", "characterize"])))]
pub struct Args {
    /// Sequence CSV with an `n` column and `lambda`, `mu`, `alpha` or `nu` columns.
    sequences: PathBuf,
    /// Convert `from:to` among mu, alpha and nu.
    #[arg(long)]
    convert: Option<String>,
    /// Discrete Hilbert transform: half_shifted, full_integer or full_integer_normalized.
    #[arg(long)]
    hilbert: Option<HilbertKind>,
    /// Check the scalar two-spectra characterization.
    #[arg(long)]
    characterize: bool,
    /// Column transformed by --hilbert; the only value column by default.
    #[arg(long)]
    column: Option<String>,
    /// Output length of --hilbert.
    #[arg(long, default_value_t = 10_000)]
    l_out: usize,
}

fn parse_pair(s: &str) -> Result<(SeqKind, SeqKind), CliError> {
    let (a, b) = s.split_once(':').ok_or_else(|| CliError::Usage(format!("--convert expects from:to, got `{s}`")))?;
    let kind = |t: &str| t.trim().parse::<SeqKind>().map_err(CliError::Usage);
    Ok((kind(a)?, kind(b)?))
}

pub fn run(g: &Global, a: Args) -> Result<(), CliError> {
    let file = File::open(&a.sequences).map_err(|e| CliError::Io(format!("{}: {e}", a.sequences.display())))?;
    let table = read_sequences(file)?;
    if let Some(pair) = &a.convert {
        let (from, to) = parse_pair(pair)?;
        let spectra = table.to_spectra()?;
        spectra.validate()?;
        let out = convert(&spectra, from, to)?;
        let table = SequenceTable::from_spectra(&out);
        return match g.format_or(Format::Csv) {
            Format::Csv => {
                let mut buf = Vec::new();
                write_sequences(&mut buf, &table)?;
                io::emit(g, &String::from_utf8(buf).expect("csv output is utf-8"))
            }
            Format::Json => {
                let mut obj = serde_json::Map::new();
                obj.insert("from".into(), from.name().into());
                obj.insert("to".into(), to.name().into());
                obj.insert("seed".into(), g.seed.into());
                for (name, values) in &table.columns {
                    obj.insert(name.clone(), json!(values));
                }
                io::emit_json(g, &obj.into())
            }
        };
    }
    if let Some(kind) = a.hilbert {
        let input = match &a.column {
            Some(c) => table.get(c).ok_or_else(|| CliError::Usage(format!("no column `{c}`")))?,
            None if table.columns.len() == 1 => &table.columns[0].1,
            None => return Err(CliError::Usage("several value columns; pick one with --column".into())),
        };
        let b = discrete_hilbert(input, kind, a.l_out);
        return match g.format_or(Format::Csv) {
            Format::Csv => {
                let table = SequenceTable { columns: vec![("value".into(), b)] };
                let mut buf = Vec::new();
                write_sequences(&mut buf, &table)?;
                io::emit(g, &String::from_utf8(buf).expect("csv output is utf-8"))
            }
            Format::Json => io::emit_json(
                g,
                &json!({
                    "kind": kind.name(),
                    "seed": g.seed,
                    "l_out": b.len(),
                    "norm_in": l2_norm(input),
                    "norm_out": l2_norm(&b),
                    "values": b,
                }),
            ),
        };
    }
    g.json_only("characterize")?;
    let mut spectra = table.to_spectra()?;
    spectra.validate()?;
    if spectra.alpha.is_none() {
        let from = if spectra.mixed.is_some() { SeqKind::Mu } else { SeqKind::Nu };
        if spectra.get(from).is_some() {
            spectra = convert(&spectra, from, SeqKind::Alpha)?;
        }
    }
    let report = check_scalar_characterization(&spectra)?;
    io::emit_json(g, &json!({ "seed": g.seed, "pass": report.pass, "report": report }))
}
