//! Certified location of Dirichlet eigenvalues.
//!
//! Eigenvalues are the zeros of `det χ(0,λ)`. Counts inside a contour come
//! from the winding number of that determinant; roots are then refined by a
//! Newton iteration on the linear pencil `χ(0,λ) + μχ̇(0,λ)` and their
//! multiplicities read off the singular values of `φ(1,λ)`.
//!
//! Windows follow the shell structure of the free spectrum: one disk of
//! radius `R = max(3‖V‖, 1)` around each `π²n²` that is separated from its
//! neighbour, and a single rectangle holding the low-lying cluster.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::exec;
use crate::linalg::{self, c, CMat};
use crate::matode::{self, MatodeError, OdeConfig, Want};
use crate::potential::MatrixPotential;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectrumError {
    #[error("det χ(0,λ) nearly vanishes on the contour near λ = {at} (ratio {ratio:e})")]
    ZeroOnContour { at: Complex64, ratio: f64 },
    #[error("phase tracking failed: winding {winding}")]
    NonIntegerWinding { winding: f64 },
    #[error("window {window}: counted {counted} zeros but refined roots account for {found}")]
    CountMismatch { window: String, counted: usize, found: usize },
    #[error("λ = {lambda} is not an eigenvalue (smallest relative singular value {sigma_min:e})")]
    NotAnEigenvalue { lambda: f64, sigma_min: f64 },
    #[error("eigenvalue search requires a self-adjoint potential")]
    NotSelfAdjoint,
    #[error(transparent)]
    Matode(#[from] MatodeError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Disk { center: Complex64, radius: f64 },
    Rect { re_lo: f64, re_hi: f64, im_lo: f64, im_hi: f64 },
}

/// Closed contour with its initial node count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountingContour {
    pub shape: Shape,
    pub nodes: usize,
}

impl CountingContour {
    pub fn disk(center: Complex64, radius: f64) -> Self {
        CountingContour { shape: Shape::Disk { center, radius }, nodes: 64 }
    }

    pub fn rect(re_lo: f64, re_hi: f64, im_lo: f64, im_hi: f64) -> Self {
        CountingContour { shape: Shape::Rect { re_lo, re_hi, im_lo, im_hi }, nodes: 64 }
    }

    /// Point at parameter `t ∈ [0,1)`, counter-clockwise.
    pub fn point(&self, t: f64) -> Complex64 {
        match self.shape {
            Shape::Disk { center, radius } => center + Complex64::from_polar(radius, 2.0 * PI * t),
            Shape::Rect { re_lo, re_hi, im_lo, im_hi } => {
                let (w, h) = (re_hi - re_lo, im_hi - im_lo);
                let mut s = t.rem_euclid(1.0) * 2.0 * (w + h);
                if s < w {
                    return c(re_lo + s, im_lo);
                }
                s -= w;
                if s < h {
                    return c(re_hi, im_lo + s);
                }
                s -= h;
                if s < w {
                    return c(re_hi - s, im_hi);
                }
                s -= w;
                c(re_lo, im_hi - s)
            }
        }
    }

    pub fn contains(&self, z: Complex64) -> bool {
        match self.shape {
            Shape::Disk { center, radius } => (z - center).norm() < radius,
            Shape::Rect { re_lo, re_hi, im_lo, im_hi } => z.re > re_lo && z.re < re_hi && z.im > im_lo && z.im < im_hi,
        }
    }

    /// Real interval covered by the contour's interior.
    pub fn real_span(&self) -> (f64, f64) {
        match self.shape {
            Shape::Disk { center, radius } => (center.re - radius, center.re + radius),
            Shape::Rect { re_lo, re_hi, .. } => (re_lo, re_hi),
        }
    }

    /// Grow the contour by factor `f` (the rectangle keeps its right edge).
    pub fn inflated(&self, f: f64) -> Self {
        let shape = match self.shape {
            Shape::Disk { center, radius } => Shape::Disk { center, radius: radius * f },
            Shape::Rect { re_lo, re_hi, im_lo, im_hi } => {
                Shape::Rect { re_lo: re_hi - (re_hi - re_lo) * f, re_hi, im_lo: im_lo * f, im_hi: im_hi * f }
            }
        };
        CountingContour { shape, nodes: self.nodes }
    }

    pub fn describe(&self) -> String {
        match self.shape {
            Shape::Disk { center, radius } => format!("disk(center {center}, radius {radius})"),
            Shape::Rect { re_lo, re_hi, im_lo, im_hi } => format!("rect([{re_lo}, {re_hi}] x [{im_lo}, {im_hi}])"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumConfig {
    /// Integration settings for refinement and multiplicities.
    pub ode: OdeConfig,
    /// Integration settings for phase tracking along contours.
    pub count_ode: OdeConfig,
    pub max_nodes: usize,
    /// Relative singular-value threshold for kernels of `φ(1,λ)`.
    pub sv_threshold: f64,
    /// Smallest admissible `|det|` on a contour relative to its maximum.
    pub det_floor: f64,
    pub max_inflations: usize,
    pub newton_max_iter: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            ode: OdeConfig::default(),
            count_ode: OdeConfig::counting(),
            max_nodes: 1 << 14,
            sv_threshold: 1e-7,
            det_floor: 1e-12,
            max_inflations: 5,
            newton_max_iter: 40,
        }
    }
}

impl SpectrumConfig {
    pub fn with_tol(rel_tol: f64) -> Self {
        SpectrumConfig { ode: OdeConfig::with_tol(rel_tol), ..Default::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenLocation {
    pub lambda: f64,
    pub multiplicity: usize,
    pub certified_count: bool,
    /// Smallest singular value of `φ(1,λ)` relative to `1/max(1,√|λ|)`.
    pub residual: f64,
}

/// One certified window and the roots found inside it.
#[derive(Debug, Clone)]
pub struct Window {
    pub contour: CountingContour,
    /// Shell index for isolated disks, `None` for the low cluster.
    pub shell: Option<usize>,
    pub count: usize,
    pub roots: Vec<EigenLocation>,
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    pub windows: Vec<Window>,
    pub locations: Vec<EigenLocation>,
    /// Sampled sup of `‖V(x)‖`.
    pub vnorm: f64,
    pub radius: f64,
    /// First shell from which every window holds `N` simple roots.
    pub n_diamond: usize,
}

fn natural_scale(lambda: f64) -> f64 {
    1.0 / lambda.abs().sqrt().max(1.0)
}

/// Zeros of `det χ(0,·)` inside the contour, with `V♯` supplied.
pub fn count_zeros_sharp(v_sharp: &MatrixPotential, contour: &CountingContour, cfg: &SpectrumConfig) -> Result<usize, SpectrumError> {
    let det_at = |t: &f64| -> Result<Complex64, MatodeError> {
        let (chi, _) = matode::chi0(v_sharp, contour.point(*t), &cfg.count_ode, false)?;
        Ok(linalg::det(&chi))
    };
    let n0 = contour.nodes.max(64);
    let mut ts: Vec<f64> = (0..n0).map(|k| k as f64 / n0 as f64).collect();
    let mut ds = exec::try_par_map(&ts, det_at)?;
    loop {
        let dmax = ds.iter().map(|d| d.norm()).fold(0.0, f64::max);
        if let Some((k, d)) = ds.iter().enumerate().min_by(|a, b| a.1.norm().total_cmp(&b.1.norm())) {
            if !(d.norm() > cfg.det_floor * dmax) {
                return Err(SpectrumError::ZeroOnContour { at: contour.point(ts[k]), ratio: d.norm() / dmax });
            }
        }
        let m = ts.len();
        let mut mids = Vec::new();
        for k in 0..m {
            let (d0, d1) = (ds[k], ds[(k + 1) % m]);
            if (d1 / d0).arg().abs() >= PI / 2.0 {
                let t1 = if k + 1 == m { 1.0 } else { ts[k + 1] };
                mids.push(0.5 * (ts[k] + t1));
            }
        }
        if mids.is_empty() {
            let total: f64 = (0..m).map(|k| (ds[(k + 1) % m] / ds[k]).arg()).sum();
            let w = total / (2.0 * PI);
            if (w - w.round()).abs() > 0.1 || w.round() < 0.0 {
                return Err(SpectrumError::NonIntegerWinding { winding: w });
            }
            return Ok(w.round() as usize);
        }
        if m + mids.len() > cfg.max_nodes {
            let total: f64 = (0..m).map(|k| (ds[(k + 1) % m] / ds[k]).arg()).sum();
            return Err(SpectrumError::NonIntegerWinding { winding: total / (2.0 * PI) });
        }
        let new = exec::try_par_map(&mids, det_at)?;
        let mut merged: Vec<(f64, Complex64)> = ts.into_iter().zip(ds).chain(mids.into_iter().zip(new)).collect();
        merged.sort_by(|a, b| a.0.total_cmp(&b.0));
        (ts, ds) = merged.into_iter().unzip();
    }
}

/// Number of Dirichlet eigenvalues of `V` inside the contour.
pub fn count_zeros(v: &MatrixPotential, contour: &CountingContour, cfg: &SpectrumConfig) -> Result<usize, SpectrumError> {
    count_zeros_sharp(&v.reflect(), contour, cfg)
}

/// Eigenvalues `μ` of the pencil `χ + μχ̇` at `λ`: first-order predictions
/// of the offsets to nearby zeros.
fn pencil_offsets(v_sharp: &MatrixPotential, lambda: Complex64, ode: &OdeConfig) -> Result<Vec<Complex64>, MatodeError> {
    let (chi, dot) = matode::chi0(v_sharp, lambda, ode, true)?;
    let dot = dot.expect("derivatives requested");
    match linalg::solve(&dot, &chi) {
        Some(m) => Ok(linalg::eigenvalues(&(-m))),
        None => Ok(Vec::new()),
    }
}

fn sigma_min_rel(v: &MatrixPotential, lambda: f64, ode: &OdeConfig) -> Result<f64, MatodeError> {
    let e = matode::endpoint(v, c(lambda, 0.0), ode, Want::PLAIN)?;
    let s = linalg::singular_values(&e.p);
    Ok(s.last().copied().unwrap_or(0.0) / natural_scale(lambda))
}

/// Refine a real root from `start` within `[lo, hi]`.
fn refine_root(
    v: &MatrixPotential,
    v_sharp: &MatrixPotential,
    start: f64,
    lo: f64,
    hi: f64,
    cfg: &SpectrumConfig,
) -> Result<Option<f64>, SpectrumError> {
    let mut lam = start;
    let width = hi - lo;
    let mut last = f64::INFINITY;
    let mut converged = false;
    for it in 0..cfg.newton_max_iter {
        let mus = pencil_offsets(v_sharp, c(lam, 0.0), &cfg.ode)?;
        let Some(mu) = mus.iter().min_by(|a, b| a.norm().total_cmp(&b.norm())) else { break };
        let step = mu.re.clamp(-0.25 * width, 0.25 * width);
        lam += step;
        if lam <= lo || lam >= hi {
            return Ok(None);
        }
        let a = step.abs();
        if a <= 1e-13 * lam.abs().max(1.0) || (it > 4 && a >= 0.5 * last && a <= 1e-9 * lam.abs().max(1.0)) {
            converged = true;
            break;
        }
        last = a;
    }
    if !converged {
        // Golden-section search on the smallest singular value near the last iterate.
        let w = (0.01 * width).max(1e-6 * lam.abs().max(1.0));
        let (mut a, mut b) = ((lam - w).max(lo), (lam + w).min(hi));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let mut f1 = sigma_min_rel(v, x1, &cfg.ode)?;
        let mut f2 = sigma_min_rel(v, x2, &cfg.ode)?;
        while b - a > 1e-12 * lam.abs().max(1.0) {
            if f1 < f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = sigma_min_rel(v, x1, &cfg.ode)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = sigma_min_rel(v, x2, &cfg.ode)?;
            }
        }
        lam = 0.5 * (a + b);
    }
    Ok(Some(lam))
}

/// Kernel dimension and orthonormal kernel basis of `φ(1,λ)`.
pub fn multiplicity(v: &MatrixPotential, lambda: f64, cfg: &SpectrumConfig) -> Result<(usize, CMat), SpectrumError> {
    let e = matode::endpoint(v, c(lambda, 0.0), &cfg.ode, Want::PLAIN)?;
    kernel_of(&e.p, lambda, cfg.sv_threshold)
}

pub(crate) fn kernel_of(phi1: &CMat, lambda: f64, sv_threshold: f64) -> Result<(usize, CMat), SpectrumError> {
    let n = phi1.nrows();
    let (_, s, vv) = linalg::svd(phi1);
    let scale = s[0].max(natural_scale(lambda));
    let k = s.iter().filter(|x| **x < sv_threshold * scale).count();
    if k == 0 {
        return Err(SpectrumError::NotAnEigenvalue { lambda, sigma_min: s[n - 1] / natural_scale(lambda) });
    }
    let idx: Vec<usize> = (n - k..n).collect();
    Ok((k, linalg::select_cols(&vv, &idx)))
}

fn locate_in_window(
    v: &MatrixPotential,
    v_sharp: &MatrixPotential,
    contour: CountingContour,
    hints: &[f64],
    cfg: &SpectrumConfig,
) -> Result<(CountingContour, usize, Vec<EigenLocation>), SpectrumError> {
    let mut contour = contour;
    let mut tries = 0;
    let count = loop {
        match count_zeros_sharp(v_sharp, &contour, cfg) {
            Ok(k) => break k,
            Err(SpectrumError::ZeroOnContour { .. }) if tries < cfg.max_inflations => {
                contour = contour.inflated(1.03);
                tries += 1;
            }
            Err(e) => return Err(e),
        }
    };
    if count == 0 {
        return Ok((contour, 0, Vec::new()));
    }
    let (lo, hi) = contour.real_span();
    let mut roots: Vec<(f64, usize, f64)> = Vec::new();
    let mut found = 0;
    let mut starts: Vec<f64> = hints.iter().copied().filter(|h| *h > lo && *h < hi).collect();
    let mut samples = 8;
    loop {
        for s in &starts {
            let Some(r) = refine_root(v, v_sharp, *s, lo, hi, cfg)? else { continue };
            let tol = 1e-9 * r.abs().max(1.0);
            if roots.iter().any(|(x, _, _)| (x - r).abs() < tol) {
                continue;
            }
            let e = matode::endpoint(v, c(r, 0.0), &cfg.ode, Want::PLAIN)?;
            // A starting point that drifted to a spurious stationary point is skipped.
            let Ok((k, _)) = kernel_of(&e.p, r, cfg.sv_threshold) else { continue };
            let sv = linalg::singular_values(&e.p);
            roots.push((r, k, sv[sv.len() - 1] / natural_scale(r)));
            found += k;
        }
        if found >= count || samples > 512 {
            break;
        }
        starts = (0..samples).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / samples as f64).collect();
        samples *= 4;
    }
    if found != count {
        return Err(SpectrumError::CountMismatch { window: contour.describe(), counted: count, found });
    }
    roots.sort_by(|a, b| a.0.total_cmp(&b.0));
    let locs = roots
        .into_iter()
        .map(|(lambda, multiplicity, residual)| EigenLocation { lambda, multiplicity, certified_count: true, residual })
        .collect();
    Ok((contour, count, locs))
}

/// Window geometry for `V`: `(R, first isolated shell, low-cluster rectangle)`.
pub fn window_layout(vnorm: f64) -> (f64, usize, CountingContour) {
    let r = (3.0 * vnorm).max(1.0);
    let mut n0 = 1usize;
    while PI * PI * (2.0 * n0 as f64 - 1.0) <= 2.0 * r {
        n0 += 1;
    }
    let p2 = PI * PI;
    let a = (n0 - 1) as f64;
    let re_hi = 0.5 * p2 * (a * a + (n0 * n0) as f64);
    let h = vnorm + 1.0;
    (r, n0, CountingContour::rect(-vnorm - 1.0, re_hi, -h, h))
}

/// All eigenvalues in the windows meeting `(−‖V‖−1, lambda_max]`.
///
/// Windows are counted and refined independently; the low rectangle is
/// always included, and every shell disk whose left end lies below
/// `lambda_max` is included whole.
pub fn locate_all(v: &MatrixPotential, lambda_max: f64, cfg: &SpectrumConfig) -> Result<Spectrum, SpectrumError> {
    if !v.is_hermitian() {
        return Err(SpectrumError::NotSelfAdjoint);
    }
    let n = v.dim();
    let vnorm = v.sup_norm();
    let (r, n0, rect) = window_layout(vnorm);
    let v_sharp = v.reflect();
    let (v0, _) = linalg::herm_eig(&linalg::herm_part(&v.mean()));
    let p2 = PI * PI;
    let mut jobs: Vec<(Option<usize>, CountingContour)> = vec![(None, rect)];
    let mut s = n0;
    while p2 * (s * s) as f64 - r <= lambda_max {
        jobs.push((Some(s), CountingContour::disk(c(p2 * (s * s) as f64, 0.0), r)));
        s += 1;
    }
    let results = exec::try_par_map(&jobs, |(shell, contour)| {
        let hints: Vec<f64> = match shell {
            Some(s) => {
                let base = p2 * (s * s) as f64;
                std::iter::once(base).chain(v0.iter().map(|d| base + d)).collect()
            }
            None => (1..n0).flat_map(|s| v0.iter().map(move |d| p2 * (s * s) as f64 + d)).collect(),
        };
        locate_in_window(v, &v_sharp, *contour, &hints, cfg).map(|(contour, count, roots)| Window { contour, shell: *shell, count, roots })
    })?;
    let mut locations: Vec<EigenLocation> = results.iter().flat_map(|w| w.roots.iter().cloned()).collect();
    locations.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let mut n_diamond = s;
    for w in results.iter().rev() {
        match w.shell {
            Some(sh) if w.count == n && w.roots.len() == n && w.roots.iter().all(|l| l.multiplicity == 1) => n_diamond = sh,
            _ => break,
        }
    }
    Ok(Spectrum { windows: results, locations, vnorm, radius: r, n_diamond })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::diag;

    #[test]
    fn free_double_zero() {
        let v = MatrixPotential::zero(2);
        let k = count_zeros(&v, &CountingContour::disk(c(PI * PI, 0.0), 1.0), &SpectrumConfig::default()).unwrap();
        assert_eq!(k, 2);
    }

    #[test]
    fn free_scalar_disk_at_origin() {
        let v = MatrixPotential::zero(1);
        let r = (1.5 * PI).powi(2);
        let k = count_zeros(&v, &CountingContour::disk(c(0.0, 0.0), r), &SpectrumConfig::default()).unwrap();
        assert_eq!(k, 1);
    }

    #[test]
    fn shifted_constant_count() {
        let v = MatrixPotential::constant(diag(&[1.0, 4.0])).unwrap();
        let k = count_zeros(&v, &CountingContour::disk(c(PI * PI + 1.0, 0.0), 0.5), &SpectrumConfig::default()).unwrap();
        assert_eq!(k, 1);
    }

    #[test]
    fn rectangle_parametrisation_closes() {
        let ct = CountingContour::rect(-1.0, 3.0, -2.0, 2.0);
        assert!((ct.point(0.0) - c(-1.0, -2.0)).norm() < 1e-14);
        assert!((ct.point(0.999999999) - c(-1.0, -2.0)).norm() < 1e-6);
        assert!(ct.contains(c(0.0, 0.0)) && !ct.contains(c(4.0, 0.0)));
    }

    #[test]
    fn free_spectrum_to_100() {
        let v = MatrixPotential::zero(2);
        let sp = locate_all(&v, 100.0, &SpectrumConfig::default()).unwrap();
        let got: Vec<(f64, usize)> = sp.locations.iter().filter(|l| l.lambda <= 100.0).map(|l| (l.lambda, l.multiplicity)).collect();
        assert_eq!(got.len(), 3);
        for (i, (l, k)) in got.iter().enumerate() {
            let e = PI * PI * ((i + 1) * (i + 1)) as f64;
            assert!((l - e).abs() < 1e-9 * e, "{l} vs {e}");
            assert_eq!(*k, 2);
        }
    }

    #[test]
    fn pauli_constant_spectrum() {
        let m = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let v = MatrixPotential::constant(m).unwrap();
        let sp = locate_all(&v, 100.0, &SpectrumConfig::default()).unwrap();
        let got: Vec<f64> = sp.locations.iter().filter(|l| l.lambda <= 100.0).map(|l| l.lambda).collect();
        let mut want = Vec::new();
        for n in 1..=3 {
            let b = PI * PI * (n * n) as f64;
            want.extend([b - 1.0, b + 1.0]);
        }
        want.retain(|x| *x <= 100.0);
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-8 * w.abs());
        }
        assert!(sp.locations.iter().all(|l| l.multiplicity == 1));
    }

    #[test]
    fn kernel_basis_of_shifted_constant() {
        let v = MatrixPotential::constant(diag(&[1.0, 4.0])).unwrap();
        let (k, h) = multiplicity(&v, PI * PI + 1.0, &SpectrumConfig::default()).unwrap();
        assert_eq!(k, 1);
        assert!((h[(0, 0)].norm() - 1.0).abs() < 1e-10);
        assert!(multiplicity(&v, 12.0, &SpectrumConfig::default()).is_err());
    }
}
