use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use serde::Deserialize;
use serde_json::{json, Value};
use svspec::inversekit::{
    biortho_identity_check, condition_c_finite, forbidden_subspace, frechet_fd_check, make_reference, tilde_data, BiorthoVariant,
    ExceptionalSet, FrameConfig, ReferenceFrame,
};
use svspec::linalg::max_abs;
use svspec::matode::OdeConfig;
use svspec::potential::MatrixPotential;
use svspec::serial::{mat_from_rows, mat_to_json, JsonMatrix};
use svspec::spectrum::SpectrumConfig;
use svspec::CMat;

use crate::io::{self, CliError};
use crate::{Format, Global};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    /// Level coordinates Ã, B̃, C, E at every frame level.
    Tildes,
    /// Fréchet derivatives of shell data against central differences.
    FrechetCheck,
    /// Product-Wronskian identities between frame levels.
    Biortho,
    /// Forbidden subspaces of dataset records by two constructions.
    Forbidden,
    /// Finite admissibility test of an exceptional set.
    #[value(name = "condC")]
    CondC,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, value_enum)]
    task: Task,
    /// Frame JSON: `{"diagonals": [...], "lambda_max": ...}`.
    #[arg(long)]
    frame: Option<PathBuf>,
    /// Potential; the frame's diagonal reference for `tildes` when absent.
    #[arg(long)]
    potential: Option<PathBuf>,
    /// Dataset for `forbidden`; built from --potential and --lmax when absent.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    lmax: Option<f64>,
    /// Record indices for `forbidden` (list or `a:b`); all low records by default.
    #[arg(long)]
    records: Option<String>,
    /// Exceptional set JSON for `condC`.
    #[arg(long)]
    set: Option<PathBuf>,
    /// Positivity threshold of the condition-(C) matrix, relative to its mean eigenvalue.
    #[arg(long, default_value_t = 1e-10)]
    pd_tol: f64,
    /// Shells checked by `frechet-check`.
    #[arg(long, default_value = "1,2")]
    shells: String,
    /// Random directions for `frechet-check`.
    #[arg(long, default_value_t = 20)]
    directions: u64,
    /// Levels paired by `biortho`.
    #[arg(long, default_value_t = 8)]
    levels: usize,
}

#[derive(Deserialize)]
struct FrameFile {
    /// Constants or scalar potential objects.
    diagonals: Vec<Value>,
    lambda_max: f64,
    #[serde(default)]
    grid: Option<usize>,
}

fn load_frame(g: &Global, path: &Path) -> Result<ReferenceFrame, CliError> {
    let f: FrameFile = serde_json::from_value(io::read_json(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let diagonals = f
        .diagonals
        .iter()
        .map(|d| match d.as_f64() {
            Some(c) => Ok(MatrixPotential::scalar_fourier(c, &[], &[])),
            None => Ok(MatrixPotential::from_json_str(&d.to_string())?),
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut cfg = FrameConfig::default();
    if let Some(t) = g.rel_tol {
        cfg.ode = OdeConfig::with_tol(t);
        cfg.spectrum = SpectrumConfig::with_tol(t);
    }
    if let Some(n) = f.grid {
        cfg.grid = n;
    }
    Ok(make_reference(&diagonals, f.lambda_max, &cfg)?)
}

fn need<'a, T>(x: &'a Option<T>, what: &str) -> Result<&'a T, CliError> {
    x.as_ref().ok_or_else(|| CliError::Usage(format!("this task needs --{what}")))
}

pub fn run(g: &Global, a: Args) -> Result<(), CliError> {
    match a.task {
        Task::Tildes => tildes(g, &a),
        Task::FrechetCheck => frechet(g, &a),
        Task::Biortho => biortho(g, &a),
        Task::Forbidden => forbidden(g, &a),
        Task::CondC => cond_c(g, &a),
    }
}

fn tildes(g: &Global, a: &Args) -> Result<(), CliError> {
    g.json_only("tildes")?;
    let frame = load_frame(g, need(&a.frame, "frame")?)?;
    let (v, at_reference) = match &a.potential {
        Some(p) => (io::load_potential(p)?, false),
        None => (frame.v_diamond.clone(), true),
    };
    let mut levels = Vec::new();
    let mut pass = true;
    for (alpha, lv) in frame.levels.iter().enumerate() {
        let t = tilde_data(&frame, &v, alpha)?;
        let a_norm = max_abs(&t.a_tilde);
        let ok = t.hermitian_defect <= 1e-8 * max_abs(&t.b_tilde).max(1.0) && (!at_reference || (a_norm <= 1e-8 && t.rank == lv.k));
        pass &= ok;
        levels.push(json!({
            "alpha": alpha,
            "lambda": lv.lambda,
            "k": lv.k,
            "channels": lv.channels,
            "a_tilde_max": a_norm,
            "b_tilde_rank": t.rank,
            "hermitian_defect": t.hermitian_defect,
            "factor_residual": t.factor_residual,
            "A_tilde": mat_to_json(&t.a_tilde),
            "B_tilde": mat_to_json(&t.b_tilde),
            "C": mat_to_json(&t.c),
            "E": mat_to_json(&t.e),
        }));
    }
    io::emit_json(g, &json!({ "task": "tildes", "seed": g.seed, "at_reference": at_reference, "pass": pass, "levels": levels }))
}

fn frechet(g: &Global, a: &Args) -> Result<(), CliError> {
    let frame = load_frame(g, need(&a.frame, "frame")?)?;
    let shells = io::parse_index_list(&a.shells)?;
    let mut rows = Vec::new();
    let mut passing = 0;
    for d in 0..a.directions {
        let w = MatrixPotential::random_trig(frame.dim, 3, 0.3, g.seed.wrapping_add(d));
        let mut ok = true;
        for &n in &shells {
            for eps in [1e-4, 1e-5] {
                for c in frechet_fd_check(&frame, n, &w, eps)? {
                    let within = c.rel_error <= (50.0 * eps).max(1e-4);
                    ok &= within;
                    rows.push((d, c, within));
                }
            }
        }
        passing += ok as u64;
    }
    match g.format_or(Format::Json) {
        Format::Json => {
            let worst = rows.iter().map(|(_, c, _)| c.rel_error).fold(0.0, f64::max);
            let list: Vec<Value> = rows
                .iter()
                .map(|(d, c, ok)| json!({ "direction": d, "quantity": c.quantity, "n": c.n, "eps": c.eps, "rel_error": c.rel_error, "within": ok }))
                .collect();
            io::emit_json(
                g,
                &json!({
                    "task": "frechet-check",
                    "seed": g.seed,
                    "directions": a.directions,
                    "passing": passing,
                    "pass": passing == a.directions,
                    "worst_rel_error": worst,
                    "comparisons": list,
                }),
            )
        }
        Format::Csv => {
            let header = ["direction", "quantity", "n", "eps", "rel_error", "within"].map(String::from).to_vec();
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|(d, c, ok)| vec![d.to_string(), c.quantity.clone(), c.n.to_string(), io::num(c.eps), io::num(c.rel_error), ok.to_string()])
                .collect();
            io::emit(g, &io::csv_text(&header, &body)?)
        }
    }
}

fn biortho(g: &Global, a: &Args) -> Result<(), CliError> {
    let frame = load_frame(g, need(&a.frame, "frame")?)?;
    let variants = [BiorthoVariant::Plain, BiorthoVariant::ChiDot, BiorthoVariant::PhiDot, BiorthoVariant::BothDot];
    let levels = a.levels.min(frame.levels.len());
    let mut rows = Vec::new();
    for alpha in 0..levels {
        for beta in 0..levels {
            for j in 0..frame.dim {
                for k in 0..frame.dim {
                    for var in variants {
                        if alpha == beta && var == BiorthoVariant::BothDot {
                            continue;
                        }
                        let r = biortho_identity_check(&frame, alpha, beta, j, k, var, true)?;
                        rows.push((alpha, beta, j, k, var, r));
                    }
                }
            }
        }
    }
    let worst = rows.iter().map(|r| r.5.residual).fold(0.0, f64::max);
    match g.format_or(Format::Json) {
        Format::Json => {
            let list: Vec<Value> = rows
                .iter()
                .map(|(al, be, j, k, v, r)| json!({ "alpha": al, "beta": be, "j": j, "k": k, "variant": v, "left": r.left, "right": r.right, "residual": r.residual }))
                .collect();
            io::emit_json(
                g,
                &json!({ "task": "biortho", "seed": g.seed, "levels": levels, "worst_residual": worst, "pass": worst < 1e-7, "checks": list }),
            )
        }
        Format::Csv => {
            let header = ["alpha", "beta", "j", "k", "variant", "left", "right", "residual"].map(String::from).to_vec();
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|(al, be, j, k, v, r)| {
                    vec![al.to_string(), be.to_string(), j.to_string(), k.to_string(), format!("{v:?}"), io::num(r.left), io::num(r.right), io::num(r.residual)]
                })
                .collect();
            io::emit(g, &io::csv_text(&header, &body)?)
        }
    }
}

fn forbidden(g: &Global, a: &Args) -> Result<(), CliError> {
    g.json_only("forbidden")?;
    let v = io::load_potential(need(&a.potential, "potential")?)?;
    let ds = match &a.dataset {
        Some(p) => io::load_dataset(p)?,
        None => crate::spectrum::build_dataset(g, &v, *need(&a.lmax, "lmax")?)?,
    };
    let records = match &a.records {
        Some(s) => io::parse_index_list(s)?,
        None => (0..ds.alpha_diamond.max(1).min(ds.records.len())).collect(),
    };
    let cfg = crate::spectrum::spectrum_config(g);
    let mut list = Vec::new();
    let mut worst: f64 = 0.0;
    for beta in records {
        let f = forbidden_subspace(&v, &ds, beta, &cfg)?;
        worst = worst.max(f.principal_angle);
        let rec = &ds.records[beta];
        list.push(json!({
            "record": beta,
            "lambda": rec.lambda,
            "k": rec.k,
            "principal_angle": f.principal_angle,
            "basis": mat_to_json(&f.basis),
        }));
    }
    io::emit_json(g, &json!({ "task": "forbidden", "seed": g.seed, "worst_angle": worst, "pass": worst < 1e-6, "records": list }))
}

/// Either explicit regular lists or a frame with replaced levels.
#[derive(Deserialize)]
struct SetFile {
    dim: Option<usize>,
    #[serde(default)]
    exceptional: Vec<PointEntry>,
    #[serde(default)]
    regular: Vec<RegularEntry>,
    #[serde(default)]
    tail_shift: Vec<f64>,
    /// Frame levels to replace, with their new projectors.
    #[serde(default)]
    replaced: Vec<ReplacedEntry>,
}

#[derive(Deserialize)]
struct PointEntry {
    lambda: f64,
    #[serde(rename = "P")]
    p: JsonMatrix,
}

#[derive(Deserialize)]
struct ReplacedEntry {
    level: usize,
    #[serde(rename = "P")]
    p: JsonMatrix,
}

/// A channel's regular eigenvalues, listed or as free shells `π²n² + shift`.
#[derive(Deserialize)]
#[serde(untagged)]
enum RegularEntry {
    List(Vec<f64>),
    Shells { shells: [usize; 2], shift: f64 },
}

fn projector(rows: &JsonMatrix) -> Result<CMat, CliError> {
    mat_from_rows(rows).ok_or_else(|| CliError::Usage("ragged projector matrix".into()))
}

fn load_set(g: &Global, a: &Args) -> Result<ExceptionalSet, CliError> {
    let path = need(&a.set, "set")?;
    let f: SetFile = serde_json::from_value(io::read_json(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    if !f.replaced.is_empty() {
        let frame = load_frame(g, need(&a.frame, "frame")?)?;
        let replaced = f.replaced.iter().map(|r| Ok((r.level, projector(&r.p)?))).collect::<Result<Vec<_>, CliError>>()?;
        return Ok(ExceptionalSet::from_frame(&frame, &replaced)?);
    }
    let regular: Vec<Vec<f64>> = f
        .regular
        .into_iter()
        .map(|r| match r {
            RegularEntry::List(v) => v,
            RegularEntry::Shells { shells: [lo, hi], shift } => (lo..=hi).map(|n| PI * PI * (n * n) as f64 + shift).collect(),
        })
        .collect();
    let dim = f.dim.unwrap_or(regular.len());
    let exceptional = f.exceptional.iter().map(|e| Ok((e.lambda, projector(&e.p)?))).collect::<Result<Vec<_>, CliError>>()?;
    let tail_shift = if f.tail_shift.is_empty() { vec![0.0; dim] } else { f.tail_shift };
    if regular.len() != dim || tail_shift.len() != dim || exceptional.iter().any(|(_, p)| p.nrows() != dim || p.ncols() != dim) {
        return Err(CliError::Usage(format!("exceptional set entries do not match dim = {dim}")));
    }
    Ok(ExceptionalSet { dim, exceptional, regular, tail_shift })
}

fn cond_c(g: &Global, a: &Args) -> Result<(), CliError> {
    g.json_only("condC")?;
    let set = load_set(g, a)?;
    let m = set.validate()?;
    let c = condition_c_finite(&set, a.pd_tol)?;
    // The Hankel form against its defining sum, on seeded random vectors.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(g.seed);
    let mut gap: f64 = 0.0;
    for _ in 0..20 {
        let y: Vec<Complex64> = (0..c.matrix.nrows()).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        gap = gap.max(c.quadratic_form_gap(&set, &y));
    }
    io::emit_json(
        g,
        &json!({
            "task": "condC",
            "seed": g.seed,
            "m": m,
            "pd_tol": a.pd_tol,
            "holds": c.holds,
            "min_eig": c.min_eig,
            "rank_sum_matches": c.rank_sum_matches,
            "quadratic_form_gap": gap,
            "T": c.t,
            "pass": c.holds,
        }),
    )
}
