//! Spectral data `(λ_α, P_α, g_α, B_α)` and the asymptotic checks on it.
//!
//! A dataset is assembled in the eigenbasis of the mean of `V`, so the
//! reference projectors are the coordinate projectors `P_j⁰ = e_j e_j*`.
//! Large simple eigenvalues are double-indexed as `λ_{n,j} ≈ π²n² + v_j⁰`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::exec;
use crate::linalg::{self, c, CMat};
use crate::matode::{self, MatodeError, OdeConfig, Want};
use crate::potential::{self, CoefficientKind, MatrixPotential};
use crate::serial;
use crate::spectrum::{self, EigenLocation, Spectrum, SpectrumConfig, SpectrumError};
use crate::weylm;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralDataError {
    #[error("normalizing matrix at λ = {lambda} is not positive (smallest eigenvalue {min_eig:e})")]
    GramNotPositive { lambda: f64, min_eig: f64 },
    #[error("need at least {need} double-indexed shells, have {have}")]
    InsufficientShells { have: usize, need: usize },
    #[error("ambiguous (n,j) assignment at λ = {lambda}")]
    IndexingAmbiguous { lambda: f64 },
    #[error("contour passes too close to an eigenvalue near λ = {at}")]
    ZeroOnContour { at: Complex64 },
    #[error("malformed dataset: {0}")]
    Format(String),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Matode(#[from] MatodeError),
    #[error(transparent)]
    Potential(#[from] potential::PotentialError),
}

/// One eigenvalue with its eigenspace data.
#[derive(Debug, Clone)]
pub struct EigenRecord {
    pub lambda: f64,
    pub k: usize,
    /// `N×k` orthonormal basis of `Ker φ(1,λ)`.
    pub h: CMat,
    pub p: CMat,
    pub g: CMat,
    pub b: CMat,
    pub index: Option<(usize, usize)>,
}

/// Normalise kernel columns: largest entry of each column real positive.
fn fix_phases(h: &mut CMat) {
    for j in 0..h.ncols() {
        let mut best = 0;
        for r in 0..h.nrows() {
            if h[(r, j)].norm() > h[(best, j)].norm() + 1e-12 {
                best = r;
            }
        }
        let z = h[(best, j)];
        if z.norm() > 0.0 {
            let ph = z.conj() / z.norm();
            for r in 0..h.nrows() {
                h[(r, j)] *= ph;
            }
        }
    }
}

/// Record from a kernel basis and the Gram integral `S(λ)`.
pub fn record_from_gram(lambda: f64, h: CMat, s: &CMat) -> Result<EigenRecord, SpectralDataError> {
    let g = linalg::herm_part(&(h.adjoint() * s * &h));
    let (ev, _) = linalg::herm_eig(&g);
    if !(ev[0] > 0.0) {
        return Err(SpectralDataError::GramNotPositive { lambda, min_eig: ev[0] });
    }
    let ginv = linalg::inverse(&g).ok_or(SpectralDataError::GramNotPositive { lambda, min_eig: ev[0] })?;
    let p = &h * h.adjoint();
    let b = linalg::herm_part(&(&h * ginv * h.adjoint()));
    Ok(EigenRecord { lambda, k: h.ncols(), h, p, g, b, index: None })
}

/// Build the record at a refined eigenvalue.
pub fn build_record(v: &MatrixPotential, loc: &EigenLocation, cfg: &SpectrumConfig) -> Result<EigenRecord, SpectralDataError> {
    let want = Want { gram: true, ..Want::PLAIN };
    let e = matode::endpoint(v, c(loc.lambda, 0.0), &cfg.ode, want)?;
    let (_, mut h) = spectrum::kernel_of(&e.p, loc.lambda, cfg.sv_threshold)?;
    fix_phases(&mut h);
    record_from_gram(loc.lambda, h, &e.gram.expect("gram requested"))
}

/// `−(1/2πi)∮ M(λ)dλ` over a circle, trapezoid rule with node doubling.
pub fn residue_via_contour(v: &MatrixPotential, center: f64, radius: f64, ode: &OdeConfig) -> Result<CMat, SpectralDataError> {
    residue_via_contour_sharp(&v.reflect(), c(center, 0.0), radius, ode)
}

pub fn residue_via_contour_sharp(v_sharp: &MatrixPotential, center: Complex64, radius: f64, ode: &OdeConfig) -> Result<CMat, SpectralDataError> {
    let term = |theta: f64| -> Result<CMat, SpectralDataError> {
        let e = Complex64::from_polar(1.0, theta);
        let lam = center + e * radius;
        match weylm::evaluate_m_sharp(v_sharp, lam, ode) {
            Ok(w) => Ok(w.m * (e * radius)),
            Err(weylm::WeylError::NearPole { .. }) => Err(SpectralDataError::ZeroOnContour { at: lam }),
            Err(weylm::WeylError::Matode(m)) => Err(m.into()),
            Err(other) => Err(SpectralDataError::Format(other.to_string())),
        }
    };
    // The rule converges geometrically, so the last change overstates the error.
    let stop = (10.0 * ode.rel_tol).max(1e-13);
    let mut k = 64usize;
    let thetas: Vec<f64> = (0..k).map(|i| 2.0 * PI * i as f64 / k as f64).collect();
    let mut sum = exec::try_par_map(&thetas, |t| term(*t))?.into_iter().fold(linalg::zeros(v_sharp.dim(), v_sharp.dim()), |a, b| a + b);
    let mut prev = &sum * c(-1.0 / k as f64, 0.0);
    loop {
        let odd: Vec<f64> = (0..k).map(|i| 2.0 * PI * (2 * i + 1) as f64 / (2 * k) as f64).collect();
        for t in exec::try_par_map(&odd, |t| term(*t))? {
            sum += t;
        }
        k *= 2;
        let cur = &sum * c(-1.0 / k as f64, 0.0);
        let change = linalg::max_abs(&(&cur - &prev));
        if change < stop * linalg::max_abs(&cur).max(1.0) || k >= 1 << 14 {
            return Ok(cur);
        }
        prev = cur;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetConfig {
    pub spectrum: SpectrumConfig,
    pub gap_min: f64,
    /// Relative tie tolerance in the `(n,j)` assignment.
    pub tie_tol: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { spectrum: SpectrumConfig::default(), gap_min: potential::GAP_MIN, tie_tol: 1e-12 }
    }
}

/// Records, reference values and the double-index map.
#[derive(Debug, Clone)]
pub struct SpectralDataset {
    pub dim: usize,
    pub v0: Vec<f64>,
    /// Columns: eigenvectors of the mean; the dataset basis is `U*·V·U`.
    pub unitary: CMat,
    pub records: Vec<EigenRecord>,
    pub n_diamond: usize,
    /// Number of records below the double-indexed range.
    pub alpha_diamond: usize,
    /// Last complete shell.
    pub n_max: usize,
    /// Window radius used for shell circles.
    pub radius: f64,
    pub index_map: BTreeMap<(usize, usize), usize>,
}

impl SpectralDataset {
    pub fn record_at(&self, n: usize, j: usize) -> Option<&EigenRecord> {
        self.index_map.get(&(n, j)).map(|&i| &self.records[i])
    }

    /// Number of double-indexed shells.
    pub fn indexed_shells(&self) -> usize {
        (self.n_diamond..=self.n_max).filter(|n| (0..self.dim).all(|j| self.record_at(*n, j).is_some())).count()
    }

    /// `B_n = Σ_j B_{n,j}` for a double-indexed shell.
    pub fn shell_b(&self, n: usize) -> Option<CMat> {
        let mut acc = linalg::zeros(self.dim, self.dim);
        for j in 0..self.dim {
            acc += &self.record_at(n, j)?.b;
        }
        Some(acc)
    }

    /// Keep only shells up to `n_max` (records above are dropped).
    pub fn truncated(&self, n_max: usize) -> SpectralDataset {
        let cut = PI * PI * (n_max as f64 + 0.5).powi(2);
        let mut out = self.clone();
        out.records.retain(|r| r.lambda < cut && r.index.is_none_or(|(n, _)| n <= n_max));
        out.index_map = out.records.iter().enumerate().filter_map(|(i, r)| r.index.map(|k| (k, i))).collect();
        out.n_max = n_max.min(self.n_max);
        out.n_diamond = self.n_diamond.min(out.n_max + 1);
        out.alpha_diamond = out.records.iter().filter(|r| r.index.is_none()).count();
        out
    }

    pub fn to_json(&self) -> Value {
        let records: Vec<Value> = self
            .records
            .iter()
            .map(|r| {
                json!({
                    "lambda": r.lambda,
                    "k": r.k,
                    "h": serial::mat_to_json(&r.h),
                    "P": serial::mat_to_json(&r.p),
                    "g": serial::mat_to_json(&r.g),
                    "B": serial::mat_to_json(&r.b),
                    "index": r.index.map(|(n, j)| json!([n, j + 1])),
                })
            })
            .collect();
        json!({
            "N": self.dim,
            "v0": self.v0,
            "U": serial::mat_to_json(&self.unitary),
            "n_diamond": self.n_diamond,
            "alpha_diamond": self.alpha_diamond,
            "n_max": self.n_max,
            "radius": self.radius,
            "records": records,
        })
    }

    pub fn from_json(v: &Value) -> Result<SpectralDataset, SpectralDataError> {
        let raw: RawDataset = serde_json::from_value(v.clone()).map_err(|e| SpectralDataError::Format(e.to_string()))?;
        let mat = |m: &serial::JsonMatrix| serial::mat_from_rows(m).ok_or_else(|| SpectralDataError::Format("ragged matrix".into()));
        let mut records = Vec::with_capacity(raw.records.len());
        let mut index_map = BTreeMap::new();
        for (i, r) in raw.records.iter().enumerate() {
            let index = match r.index {
                Some([n, j]) if j >= 1 => Some((n, j - 1)),
                Some(_) => return Err(SpectralDataError::Format("channel index starts at 1".into())),
                None => None,
            };
            if let Some(key) = index {
                index_map.insert(key, i);
            }
            records.push(EigenRecord { lambda: r.lambda, k: r.k, h: mat(&r.h)?, p: mat(&r.p)?, g: mat(&r.g)?, b: mat(&r.b)?, index });
        }
        let unitary = match &raw.u {
            Some(u) => mat(u)?,
            None => linalg::eye(raw.n),
        };
        if raw.v0.len() != raw.n {
            return Err(SpectralDataError::Format("v0 length differs from N".into()));
        }
        let n_max = raw.n_max.unwrap_or_else(|| index_map.keys().map(|k| k.0).max().unwrap_or(0));
        Ok(SpectralDataset {
            dim: raw.n,
            v0: raw.v0,
            unitary,
            records,
            n_diamond: raw.n_diamond,
            alpha_diamond: raw.alpha_diamond.unwrap_or(0),
            n_max,
            radius: raw.radius.unwrap_or(1.0),
            index_map,
        })
    }
}

#[derive(Deserialize, Serialize)]
struct RawRecord {
    lambda: f64,
    k: usize,
    h: serial::JsonMatrix,
    #[serde(rename = "P")]
    p: serial::JsonMatrix,
    g: serial::JsonMatrix,
    #[serde(rename = "B")]
    b: serial::JsonMatrix,
    index: Option<[usize; 2]>,
}

#[derive(Deserialize, Serialize)]
struct RawDataset {
    #[serde(rename = "N")]
    n: usize,
    v0: Vec<f64>,
    #[serde(rename = "U")]
    u: Option<serial::JsonMatrix>,
    n_diamond: usize,
    alpha_diamond: Option<usize>,
    n_max: Option<usize>,
    radius: Option<f64>,
    records: Vec<RawRecord>,
}

/// Locate the spectrum up to `lambda_max` and build the full dataset.
///
/// A repeated mean eigenvalue (for instance `V = 0` with `N > 1`) is accepted:
/// the records are built but nothing is double-indexed.
pub fn assemble_dataset(v: &MatrixPotential, lambda_max: f64, cfg: &DatasetConfig) -> Result<(SpectralDataset, Spectrum), SpectralDataError> {
    let d = potential::diagonalize_mean_unchecked(v);
    let degenerate = d.v0.windows(2).any(|w| w[1] - w[0] <= cfg.gap_min);
    let vd = &d.potential;
    let sp = spectrum::locate_all(vd, lambda_max, &cfg.spectrum)?;
    let n = v.dim();
    let p2 = PI * PI;
    let locs: Vec<EigenLocation> = sp.locations.clone();
    let mut records = exec::try_par_map(&locs, |l| build_record(vd, l, &cfg.spectrum))?;

    let n_max = sp.windows.iter().filter_map(|w| w.shell).max().unwrap_or(0);
    let n_diamond = if degenerate { n_max + 1 } else { sp.n_diamond };
    let mut index_map = BTreeMap::new();
    if !degenerate {
        for w in sp.windows.iter().filter(|w| matches!(w.shell, Some(s) if s >= n_diamond)) {
            let s = w.shell.unwrap();
            let base = p2 * (s * s) as f64;
            // Sorted-to-sorted matching minimises total displacement in 1-D.
            for (j, root) in w.roots.iter().enumerate() {
                let mut dist: Vec<f64> = d.v0.iter().map(|vj| (root.lambda - base - vj).abs()).collect();
                dist.sort_by(|a, b| a.total_cmp(b));
                if n > 1 && dist[1] - dist[0] <= cfg.tie_tol * root.lambda.abs().max(1.0) {
                    return Err(SpectralDataError::IndexingAmbiguous { lambda: root.lambda });
                }
                let i = records.iter().position(|r| r.lambda == root.lambda).expect("record per root");
                // Sign convention ⟨h_{n,j}, e_j⟩ > 0.
                let z = records[i].h[(j, 0)];
                if z.norm() > 0.0 {
                    let ph = z.conj() / z.norm();
                    records[i].h *= ph;
                }
                records[i].index = Some((s, j));
                index_map.insert((s, j), i);
            }
        }
    }
    let alpha_diamond = records.iter().filter(|r| r.index.is_none()).count();
    let ds = SpectralDataset {
        dim: n,
        v0: d.v0.clone(),
        unitary: d.unitary.clone(),
        records,
        n_diamond,
        alpha_diamond,
        n_max,
        radius: sp.radius,
        index_map,
    };
    Ok((ds, sp))
}

/// Residue sum over a shell circle `|λ − π²n²| = R` of the dataset basis.
pub fn shell_residue(v_dataset_basis: &MatrixPotential, ds: &SpectralDataset, n: usize, ode: &OdeConfig) -> Result<CMat, SpectralDataError> {
    residue_via_contour(v_dataset_basis, PI * PI * (n * n) as f64, ds.radius, ode)
}

/// Fit of one tail sequence.
#[derive(Debug, Clone, Serialize)]
pub struct SequenceFit {
    pub name: &'static str,
    pub values: Vec<f64>,
    pub l2_partial: f64,
    pub slope: Option<f64>,
    /// Share of `Σxₙ²` coming from the last half of the shells.
    pub cauchy: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailDiagnostics {
    pub shells: Vec<usize>,
    /// Per shell, per channel.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub d: Vec<f64>,
    pub fits: Vec<SequenceFit>,
    pub pass: bool,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(_, y)| **y > 0.0).map(|(x, y)| (x.ln(), y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / m, sy / m);
    let (num, den) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mx) * (p.1 - my), a.1 + (p.0 - mx).powi(2)));
    if den == 0.0 {
        None
    } else {
        Some(num / den)
    }
}

/// Slope threshold for the plain sequences (square-summable needs < −1/2).
pub const SLOPE_MAX: f64 = -0.7;
/// Cauchy threshold for the weighted sequences.
pub const CAUCHY_MAX: f64 = 0.05;
const MIN_FIT_POINTS: usize = 5;

pub(crate) fn fit_plain(name: &'static str, shells: &[usize], values: Vec<f64>) -> SequenceFit {
    let x: Vec<f64> = shells.iter().map(|n| *n as f64).collect();
    let l2_partial = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nonzero = values.iter().filter(|v| **v > 0.0).count();
    let slope = loglog_slope(&x, &values);
    let pass = nonzero < MIN_FIT_POINTS || slope.is_some_and(|s| s <= SLOPE_MAX);
    SequenceFit { name, values, l2_partial, slope, cauchy: None, pass }
}

pub(crate) fn fit_weighted(name: &'static str, shells: &[usize], values: Vec<f64>) -> SequenceFit {
    let x: Vec<f64> = shells.iter().map(|n| *n as f64).collect();
    let total: f64 = values.iter().map(|v| v * v).sum();
    let half = values.len() / 2;
    let late: f64 = values[half..].iter().map(|v| v * v).sum();
    let cauchy = if total > 0.0 { Some(late / total) } else { None };
    let pass = cauchy.is_none_or(|r| r <= CAUCHY_MAX);
    SequenceFit { name, l2_partial: total.sqrt(), slope: loglog_slope(&x, &values), values, cauchy, pass }
}

/// Structure of condition (A) and the per-record invariants.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionA {
    /// `Σ_{α≤α⋄} k_α` against `N(n⋄−1)`.
    pub low_multiplicity: usize,
    pub low_expected: usize,
    /// Records past `α⋄` that are not simple.
    pub non_simple_tail: Vec<usize>,
    /// Every `(n,j)` with `n⋄ ≤ n ≤ n_max` maps to a distinct record.
    pub index_bijective: bool,
    /// Largest of `‖P²−P‖`, `‖P−P*‖`, `‖B−B*‖` and `‖B − h g⁻¹h*‖` over records.
    pub record_defect: f64,
    /// Smallest eigenvalue of any `g`.
    pub min_g: f64,
    pub pass: bool,
}

pub fn check_condition_a(ds: &SpectralDataset) -> ConditionA {
    let nd = ds.dim;
    let low: usize = ds.records.iter().filter(|r| r.index.is_none()).map(|r| r.k).sum();
    let low_expected = nd * ds.n_diamond.saturating_sub(1);
    let non_simple_tail: Vec<usize> = ds.records.iter().enumerate().filter(|(_, r)| r.index.is_some() && r.k != 1).map(|(i, _)| i).collect();
    let mut seen = std::collections::BTreeSet::new();
    let mut index_bijective = true;
    for n in ds.n_diamond..=ds.n_max {
        for j in 0..nd {
            match ds.index_map.get(&(n, j)) {
                Some(&i) if seen.insert(i) && ds.records[i].index == Some((n, j)) => {}
                _ => index_bijective = false,
            }
        }
    }
    let mut record_defect: f64 = 0.0;
    let mut min_g = f64::INFINITY;
    for r in &ds.records {
        let p2 = &r.p * &r.p;
        let scale = r.b.norm().max(1.0);
        let b_from_g = linalg::inverse(&r.g).map(|gi| &r.h * gi * r.h.adjoint());
        record_defect = record_defect
            .max(linalg::max_abs(&(p2 - &r.p)))
            .max(linalg::max_abs(&(&r.p - r.p.adjoint())))
            .max(linalg::max_abs(&(&r.b - r.b.adjoint())) / scale)
            .max(b_from_g.map_or(f64::INFINITY, |b| linalg::max_abs(&(b - &r.b)) / scale));
        min_g = min_g.min(linalg::herm_eig(&r.g).0.first().copied().unwrap_or(f64::NAN));
    }
    let pass = (ds.n_diamond > ds.n_max || low == low_expected)
        && non_simple_tail.is_empty()
        && index_bijective
        && record_defect <= 1e-8
        && min_g > 0.0;
    ConditionA { low_multiplicity: low, low_expected, non_simple_tail, index_bijective, record_defect, min_g, pass }
}

/// Condition (B) diagnostics on the double-indexed shells.
pub fn check_condition_b(ds: &SpectralDataset) -> Result<TailDiagnostics, SpectralDataError> {
    const NEED: usize = 20;
    let shells: Vec<usize> = (ds.n_diamond..=ds.n_max).filter(|n| (0..ds.dim).all(|j| ds.record_at(*n, j).is_some())).collect();
    if shells.len() < NEED {
        return Err(SpectralDataError::InsufficientShells { have: shells.len(), need: NEED });
    }
    let nd = ds.dim;
    let eye = linalg::eye(nd);
    let (mut a, mut b, mut cc, mut d) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for &n in &shells {
        let nf = n as f64;
        let w = PI * PI * nf * nf;
        // Noise floors from the integrator accuracy; smaller values count as zero.
        let floor = |x: f64, f: f64| if x <= f { 0.0 } else { x };
        let mut sum_p = linalg::zeros(nd, nd);
        let (mut an, mut bn, mut cn) = (Vec::new(), Vec::new(), Vec::new());
        for j in 0..nd {
            let r = ds.record_at(n, j).unwrap();
            an.push(floor((r.lambda - w - ds.v0[j]).abs(), 1e-8 * w));
            bn.push(floor((PI * nf * (2.0 * w * r.g[(0, 0)].re - 1.0)).abs(), 1e-8 * PI * nf));
            cn.push(floor(linalg::op_norm(&(&r.p - linalg::coord_projector(nd, j))), 1e-8));
            sum_p += &r.p;
        }
        d.push(floor(PI * nf * linalg::op_norm(&(sum_p - &eye)), 1e-8 * PI * nf));
        a.push(an);
        b.push(bn);
        cc.push(cn);
    }
    let shell_max = |s: &Vec<Vec<f64>>| -> Vec<f64> { s.iter().map(|r| r.iter().cloned().fold(0.0, f64::max)).collect() };
    let fits = vec![
        fit_plain("a", &shells, shell_max(&a)),
        fit_weighted("b", &shells, shell_max(&b)),
        fit_plain("c", &shells, shell_max(&cc)),
        fit_weighted("d", &shells, d.clone()),
    ];
    let pass = fits.iter().all(|f| f.pass);
    Ok(TailDiagnostics { shells, a, b, c: cc, d, fits, pass })
}

#[derive(Debug, Clone, Serialize)]
pub struct ShellEquivalence {
    pub n: usize,
    /// `‖Σ_j P_{n,j} − I‖`.
    pub projector_defect: f64,
    /// `max_{j≠k} |⟨h_{n,j}, h_{n,k}⟩|`.
    pub max_overlap: f64,
    /// `‖B_n − 2π²n²I‖`.
    pub b_defect: f64,
    /// `‖H_n*H_n − 2π²n²I‖`.
    pub h_defect: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub shells: Vec<ShellEquivalence>,
    /// Largest of `defect/overlap` and its inverse over shells where both are resolved.
    pub worst_ratio: f64,
    pub ratios_bounded: bool,
    /// Largest relative mismatch between `b_defect` and `h_defect`.
    pub b_h_mismatch: f64,
}

pub fn projector_equivalence(ds: &SpectralDataset) -> EquivalenceReport {
    let nd = ds.dim;
    let mut shells = Vec::new();
    for n in ds.n_diamond..=ds.n_max {
        let recs: Option<Vec<&EigenRecord>> = (0..nd).map(|j| ds.record_at(n, j)).collect();
        let Some(recs) = recs else { continue };
        let w = 2.0 * PI * PI * (n * n) as f64;
        let mut hn = linalg::zeros(nd, nd);
        let mut big = linalg::zeros(nd, nd);
        let mut sum_p = linalg::zeros(nd, nd);
        for (j, r) in recs.iter().enumerate() {
            let s = 1.0 / r.g[(0, 0)].re.sqrt();
            for i in 0..nd {
                hn[(i, j)] = r.h[(i, 0)];
                big[(i, j)] = r.h[(i, 0)] * s;
            }
            sum_p += &r.p;
        }
        let gram = hn.adjoint() * &hn;
        let mut ov: f64 = 0.0;
        for j in 0..nd {
            for k in 0..nd {
                if j != k {
                    ov = ov.max(gram[(j, k)].norm());
                }
            }
        }
        let eye_w = linalg::eye(nd) * c(w, 0.0);
        shells.push(ShellEquivalence {
            n,
            projector_defect: linalg::op_norm(&(sum_p - linalg::eye(nd))),
            max_overlap: ov,
            b_defect: linalg::op_norm(&(ds.shell_b(n).unwrap() - &eye_w)),
            h_defect: linalg::op_norm(&(big.adjoint() * &big - &eye_w)),
        });
    }
    let mut worst: f64 = 1.0;
    let mut mism: f64 = 0.0;
    for s in &shells {
        if s.projector_defect > 1e-9 && s.max_overlap > 1e-9 {
            let r = s.projector_defect / s.max_overlap;
            worst = worst.max(r).max(1.0 / r);
        }
        let scale = s.b_defect.max(s.h_defect);
        if scale > 1e-9 * 2.0 * PI * PI * (s.n * s.n) as f64 {
            mism = mism.max((s.b_defect - s.h_defect).abs() / scale);
        }
    }
    EquivalenceReport { shells, worst_ratio: worst, ratios_bounded: worst <= 10.0, b_h_mismatch: mism }
}

#[derive(Debug, Clone, Serialize)]
pub struct BnReport {
    pub n: Vec<usize>,
    pub r: Vec<f64>,
    pub exponent: Option<f64>,
    pub pass: bool,
}

/// Remainders `r_n = ‖B_n/(2π²n²) − I + (πn)⁻¹∫(1−t)V sin 2πnt dt‖` and their
/// decay exponent. `v` is the potential in the original basis.
pub fn check_bn_asymptote(v: &MatrixPotential, ds: &SpectralDataset, n_list: &[usize]) -> Result<BnReport, SpectralDataError> {
    let vd = v.conjugate_by(&ds.unitary);
    let eye = linalg::eye(ds.dim);
    let mut ns = Vec::new();
    let mut rs = Vec::new();
    for &n in n_list {
        let Some(bn) = ds.shell_b(n) else {
            return Err(SpectralDataError::InsufficientShells { have: ds.indexed_shells(), need: n_list.len() });
        };
        let nf = n as f64;
        let ws = vd.fourier_coefficient(CoefficientKind::WeightedSin, n)?.matrix;
        let r = bn * c(1.0 / (2.0 * PI * PI * nf * nf), 0.0) - &eye + ws * c(1.0 / (PI * nf), 0.0);
        ns.push(n);
        rs.push(linalg::op_norm(&r));
    }
    let x: Vec<f64> = ns.iter().map(|n| *n as f64).collect();
    // Values at roundoff level carry no decay information.
    let resolved: Vec<f64> = rs.iter().map(|r| if *r < 1e-11 { 0.0 } else { *r }).collect();
    let exponent = loglog_slope(&x, &resolved);
    let pass = match exponent {
        Some(e) => e <= -1.8,
        None => resolved.iter().all(|r| *r == 0.0),
    };
    Ok(BnReport { n: ns, r: rs, exponent, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::diag;

    #[test]
    fn free_record() {
        let v = MatrixPotential::zero(2);
        let loc = EigenLocation { lambda: PI * PI, multiplicity: 2, certified_count: true, residual: 0.0 };
        let r = build_record(&v, &loc, &SpectrumConfig::default()).unwrap();
        assert_eq!(r.k, 2);
        assert!(linalg::max_abs(&(&r.p - linalg::eye(2))) < 1e-10);
        assert!(linalg::max_abs(&(&r.g - linalg::eye(2) * c(0.5 / (PI * PI), 0.0))) < 1e-12);
        assert!(linalg::max_abs(&(&r.b - linalg::eye(2) * c(2.0 * PI * PI, 0.0))) < 1e-7);
    }

    #[test]
    fn free_contour_residue() {
        let v = MatrixPotential::zero(2);
        let b = residue_via_contour(&v, PI * PI, 1.0, &OdeConfig::default()).unwrap();
        assert!(linalg::max_abs(&(b - linalg::eye(2) * c(2.0 * PI * PI, 0.0))) < 1e-7);
        let z = residue_via_contour(&v, 25.0, 3.0, &OdeConfig::default()).unwrap();
        assert!(linalg::max_abs(&z) < 1e-9);
    }

    #[test]
    fn shifted_constant_dataset() {
        let v = MatrixPotential::constant(diag(&[1.0, 2.0])).unwrap();
        let (ds, _) = assemble_dataset(&v, PI * PI * 25.0 * 25.0, &DatasetConfig::default()).unwrap();
        // R = 6 merges shell 1 into the low window.
        assert_eq!(ds.n_diamond, 2);
        assert_eq!(ds.alpha_diamond, 2);
        for n in 2..=25 {
            for j in 0..2 {
                let r = ds.record_at(n, j).unwrap();
                let w = PI * PI * (n * n) as f64;
                assert!((r.lambda - w - (j + 1) as f64).abs() < 1e-8 * w);
                assert!((r.g[(0, 0)].re * 2.0 * w - 1.0).abs() < 1e-8);
                assert!(r.h[(j, 0)].re > 0.0);
            }
        }
        let t = check_condition_b(&ds).unwrap();
        assert!(t.pass);
        let a = check_condition_a(&ds);
        assert!(a.pass, "{a:?}");
        assert_eq!(a.low_multiplicity, 2);
        let mut broken = ds.clone();
        broken.index_map.remove(&(3, 1));
        assert!(!check_condition_a(&broken).index_bijective);
        let json = ds.to_json();
        let back = SpectralDataset::from_json(&json).unwrap();
        assert_eq!(back.records.len(), ds.records.len());
        assert_eq!(back.index_map, ds.index_map);
    }

    #[test]
    fn short_dataset_is_rejected() {
        let v = MatrixPotential::constant(diag(&[1.0, 2.0])).unwrap();
        let (ds, _) = assemble_dataset(&v, PI * PI * 10.0 * 10.0, &DatasetConfig::default()).unwrap();
        assert!(matches!(check_condition_b(&ds), Err(SpectralDataError::InsufficientShells { .. })));
    }
}
