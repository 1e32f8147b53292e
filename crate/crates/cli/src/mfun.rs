use std::path::PathBuf;

use clap::ValueEnum;
use num_complex::Complex64;
use serde_json::{json, Value};
use svspec::matode::OdeConfig;
use svspec::serial::mat_to_json;
use svspec::spectraldata::SpectralDataset;
use svspec::weylm::{evaluate_m_sharp, reconstruct_m, SeriesConfig, WeylError};
use svspec::CMat;

use crate::io::{self, CliError, Input};
use crate::{Format, Global};

/// Rows closer than this (relative) to a known eigenvalue are flagged.
const POLE_MARGIN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Integrate the ODE at each point.
    Direct,
    /// Sum the pole series of a dataset.
    Series,
    /// Both, with the relative Frobenius gap.
    Compare,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Potential or dataset JSON file.
    input: PathBuf,
    /// Real grid `start:stop:count`, or a comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    lambda_grid: String,
    /// Imaginary part added to every grid point.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    imag: f64,
    #[arg(long, value_enum, default_value_t = Mode::Direct)]
    mode: Mode,
    /// Dataset for series/compare when the input is a potential.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Build the dataset up to this eigenvalue when none is given.
    #[arg(long)]
    lmax: Option<f64>,
    /// Shells summed by the series; the dataset's last shell by default.
    #[arg(long)]
    n_max: Option<usize>,
}

pub fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("`{s}` is not a grid (start:stop:count or a,b,c)"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        return match n {
            0 => Err(bad()),
            1 => Ok(vec![a]),
            _ => Ok((0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()),
        };
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

struct Row {
    lambda: Complex64,
    direct: Option<CMat>,
    series: Option<CMat>,
    near_pole: bool,
}

impl Row {
    fn gap(&self) -> Option<f64> {
        let (d, s) = (self.direct.as_ref()?, self.series.as_ref()?);
        Some((s - d).norm() / d.norm().max(1.0))
    }

    fn shown(&self, mode: Mode) -> Option<&CMat> {
        match mode {
            Mode::Series => self.series.as_ref(),
            _ => self.direct.as_ref(),
        }
    }
}

fn near_known_pole(ds: Option<&SpectralDataset>, z: Complex64) -> bool {
    ds.is_some_and(|ds| ds.records.iter().any(|r| (z - r.lambda).norm() < POLE_MARGIN * z.norm().max(1.0)))
}

pub fn run(g: &Global, a: Args) -> Result<(), CliError> {
    let grid = parse_grid(&a.lambda_grid)?;
    let (potential, mut dataset) = match io::load_input(&a.input)? {
        Input::Potential(v) => (Some(v), None),
        Input::Dataset(ds) => (None, Some(*ds)),
    };
    if let Some(p) = &a.dataset {
        dataset = Some(io::load_dataset(p)?);
    }
    let need_direct = a.mode != Mode::Series;
    let need_series = a.mode != Mode::Direct;
    if need_direct && potential.is_none() {
        return Err(CliError::Usage("direct evaluation needs a potential file as input".into()));
    }
    if need_series && dataset.is_none() {
        match (&potential, a.lmax) {
            (Some(v), Some(lmax)) => dataset = Some(crate::spectrum::build_dataset(g, v, lmax)?),
            _ => return Err(CliError::Usage("series evaluation needs a dataset (input, --dataset, or --lmax with a potential)".into())),
        }
    }
    let ode = g.rel_tol.map(OdeConfig::with_tol).unwrap_or_default();
    let v_sharp = potential.as_ref().map(|v| v.reflect());
    let series_cfg = match &dataset {
        Some(ds) => SeriesConfig::new(a.n_max.unwrap_or(ds.n_max)),
        None => SeriesConfig::new(0),
    };
    let points: Vec<Complex64> = grid.iter().map(|x| Complex64::new(*x, a.imag)).collect();
    let rows = svspec::exec::try_par_map(&points, |&z| -> Result<Row, CliError> {
        let mut near_pole = near_known_pole(dataset.as_ref(), z);
        let direct = match (&v_sharp, need_direct) {
            (Some(vs), true) => match evaluate_m_sharp(vs, z, &ode) {
                Ok(e) => Some(e.m),
                Err(WeylError::NearPole { .. }) => {
                    near_pole = true;
                    None
                }
                Err(e) => return Err(e.into()),
            },
            _ => None,
        };
        let series = match (&dataset, need_series, near_pole) {
            (Some(ds), true, false) => Some(reconstruct_m(ds, z, &series_cfg)?.m),
            _ => None,
        };
        Ok(Row { lambda: z, direct, series, near_pole })
    })?;
    let dim = rows.iter().find_map(|r| r.shown(a.mode)).map_or(0, |m| m.nrows());
    match g.format_or(Format::Csv) {
        Format::Csv => {
            let mut header = vec!["lambda_re".to_string(), "lambda_im".to_string()];
            for j in 1..=dim {
                for k in 1..=dim {
                    header.push(format!("M{j}{k}_re"));
                    header.push(format!("M{j}{k}_im"));
                }
            }
            if a.mode == Mode::Compare {
                header.push("gap".into());
            }
            header.push("flag".into());
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    let mut cells = vec![io::num(r.lambda.re), io::num(r.lambda.im)];
                    for j in 0..dim {
                        for k in 0..dim {
                            match r.shown(a.mode) {
                                Some(m) => cells.extend([io::num(m[(j, k)].re), io::num(m[(j, k)].im)]),
                                None => cells.extend([String::new(), String::new()]),
                            }
                        }
                    }
                    if a.mode == Mode::Compare {
                        cells.push(r.gap().map(io::num).unwrap_or_default());
                    }
                    cells.push(if r.near_pole { "near_pole".into() } else { String::new() });
                    cells
                })
                .collect();
            io::emit(g, &io::csv_text(&header, &body)?)
        }
        Format::Json => {
            let entries: Vec<Value> = rows
                .iter()
                .map(|r| {
                    json!({
                        "lambda": [r.lambda.re, r.lambda.im],
                        "direct": r.direct.as_ref().map(mat_to_json),
                        "series": r.series.as_ref().map(mat_to_json),
                        "gap": r.gap(),
                        "near_pole": r.near_pole,
                    })
                })
                .collect();
            let max_gap = rows.iter().filter_map(Row::gap).fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));
            io::emit_json(
                g,
                &json!({
                    "mode": format!("{:?}", a.mode).to_lowercase(),
                    "seed": g.seed,
                    "n_max": need_series.then_some(series_cfg.n_max),
                    "max_gap": max_gap,
                    "rows": entries,
                }),
            )
        }
    }
}
