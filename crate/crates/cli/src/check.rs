use std::path::PathBuf;

use clap::ValueEnum;
use serde_json::{json, to_value};
use svspec::spectraldata::{check_bn_asymptote, check_condition_a, check_condition_b, projector_equivalence};

use crate::io::{self, CliError};
use crate::Global;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Which {
    /// Multiplicity structure, double indexing and record invariants.
    #[value(name = "A")]
    A,
    /// Tail sequences and their decay.
    #[value(name = "B")]
    B,
    /// Projector and Gram equivalences per shell.
    Equiv,
    /// Remainder decay of the shell residues.
    #[value(name = "Bn")]
    Bn,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Dataset JSON file.
    dataset: PathBuf,
    #[arg(long, value_enum)]
    which: Which,
    /// Potential of the dataset, required by `Bn`.
    #[arg(long)]
    potential: Option<PathBuf>,
    /// Shells used by `Bn` (list or `a:b`); defaults to 10..40 clipped to the dataset.
    #[arg(long)]
    shells: Option<String>,
}

pub fn run(g: &Global, a: Args) -> Result<(), CliError> {
    g.json_only("check")?;
    let ds = io::load_dataset(&a.dataset)?;
    let (pass, report) = match a.which {
        Which::A => {
            let r = check_condition_a(&ds);
            (r.pass, to_value(r))
        }
        Which::B => {
            let r = check_condition_b(&ds)?;
            (r.pass, to_value(r))
        }
        Which::Equiv => {
            let r = projector_equivalence(&ds);
            (r.ratios_bounded, to_value(r))
        }
        Which::Bn => {
            let p = a.potential.as_ref().ok_or_else(|| CliError::Usage("--which Bn needs --potential".into()))?;
            let v = io::load_potential(p)?;
            let shells = match &a.shells {
                Some(s) => io::parse_index_list(s)?,
                None => (ds.n_diamond.max(10)..=ds.n_max.min(40)).collect(),
            };
            let r = check_bn_asymptote(&v, &ds, &shells)?;
            (r.pass, to_value(r))
        }
    };
    let which = a.which.to_possible_value().expect("no skipped variants").get_name().to_string();
    io::emit_json(g, &json!({ "which": which, "seed": g.seed, "pass": pass, "report": report.expect("report serialises") }))
}
