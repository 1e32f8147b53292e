//! The Weyl–Titchmarsh function `M(λ) = χ′(0,λ)χ(0,λ)⁻¹`.
//!
//! [`evaluate_m`] integrates `χ` directly. [`reconstruct_m`] rebuilds `M` from
//! a spectral dataset using the regularised series in which every shell
//! residue is paired with the matching free-operator term; the pairing is
//! what makes the sum converge.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::exec;
use crate::linalg::{self, c, CMat};
use crate::matode::{self, MatodeError, OdeConfig, Want};
use crate::potential::MatrixPotential;
use crate::spectraldata::SpectralDataset;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeylError {
    #[error("λ = {lambda} is too close to a pole (cond χ(0) = {cond:e})")]
    NearPole { lambda: Complex64, cond: f64 },
    #[error("estimated truncation error {estimate:e} above tolerance {tol:e}")]
    TailTooLarge { estimate: f64, tol: f64 },
    #[error("series needs n_max ≥ {need} but the dataset ends at shell {have}")]
    ShortDataset { need: usize, have: usize },
    #[error(transparent)]
    Matode(#[from] MatodeError),
}

/// Conditioning guard on `χ(0,λ)`.
pub const MAX_COND: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct WeylEvaluation {
    pub lambda: Complex64,
    pub m: CMat,
    /// `‖χ(0)⁻¹‖·max(‖χ(0)‖, ‖χ′(0)‖/max(1,√|λ|))`: large near poles.
    pub cond: f64,
}

/// `M(λ)` for a potential whose reflection `V♯` is given.
pub fn evaluate_m_sharp(v_sharp: &MatrixPotential, lambda: Complex64, ode: &OdeConfig) -> Result<WeylEvaluation, WeylError> {
    let e = matode::endpoint(v_sharp, lambda, ode, Want::PLAIN)?;
    let inv = linalg::inverse(&e.p).ok_or(WeylError::NearPole { lambda, cond: f64::INFINITY })?;
    let size = linalg::op_norm(&e.p).max(linalg::op_norm(&e.q) / lambda.norm().sqrt().max(1.0));
    let cond = linalg::op_norm(&inv) * size;
    if !(cond <= MAX_COND) {
        return Err(WeylError::NearPole { lambda, cond });
    }
    // χ(0) = φ♯(1), χ′(0) = −φ♯′(1).
    Ok(WeylEvaluation { lambda, m: -(&e.q * inv), cond })
}

pub fn evaluate_m(v: &MatrixPotential, lambda: Complex64, ode: &OdeConfig) -> Result<WeylEvaluation, WeylError> {
    evaluate_m_sharp(&v.reflect(), lambda, ode)
}

/// `cot z`, evaluated without overflow for large `|Im z|`.
pub fn cot(z: Complex64) -> Complex64 {
    let i = c(0.0, 1.0);
    if z.im > 0.0 {
        let e = (2.0 * i * z).exp();
        i * (e + 1.0) / (e - 1.0)
    } else {
        let e = (-2.0 * i * z).exp();
        -i * (e + 1.0) / (e - 1.0)
    }
}

/// `√μ cot √μ`, which depends on `μ` only (either square root gives the
/// same value); meromorphic with poles at `μ = π²n²`.
pub fn sqrt_cot(mu: Complex64) -> Complex64 {
    if mu.norm() < 1e-4 {
        return c(1.0, 0.0) - mu / 3.0 - mu * mu / 45.0 - mu * mu * mu * (2.0 / 945.0);
    }
    let s = mu.sqrt();
    s * cot(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailMode {
    Truncate,
    Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesConfig {
    pub n_max: usize,
    pub tail_mode: TailMode,
    /// Raise [`WeylError::TailTooLarge`] when the estimate exceeds this.
    pub tol: Option<f64>,
}

impl SeriesConfig {
    pub fn new(n_max: usize) -> Self {
        SeriesConfig { n_max, tail_mode: TailMode::Estimate, tol: None }
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// `M(λ)` in the basis of the original potential.
    pub m: CMat,
    /// Bound on the omitted shells (zero in truncate mode).
    pub tail_estimate: f64,
}

/// `M(λ)` from spectral data, summing shells `n ≤ cfg.n_max`.
pub fn reconstruct_m(ds: &SpectralDataset, lambda: Complex64, cfg: &SeriesConfig) -> Result<Reconstruction, WeylError> {
    if cfg.n_max > ds.n_max {
        return Err(WeylError::ShortDataset { need: cfg.n_max, have: ds.n_max });
    }
    let n = ds.dim;
    let p2 = PI * PI;
    let cnt = |nn: usize, j: usize| -> Complex64 {
        let w = p2 * (nn * nn) as f64;
        c(2.0 * w, 0.0) / (c(w + ds.v0[j], 0.0) - lambda)
    };
    // Free counter-terms and the explicit cotangent part.
    let mut md = linalg::zeros(n, n);
    for j in 0..n {
        md[(j, j)] -= sqrt_cot(lambda - ds.v0[j]);
    }
    // Records below the doubly indexed range, with counter-terms of the
    // shells n < n⋄ (or all shells when nothing is double-indexed).
    let low_top = ds.n_diamond.min(cfg.n_max + 1);
    let cut = if low_top == ds.n_diamond { f64::INFINITY } else { p2 * ((low_top as f64) - 0.5).powi(2) };
    for r in ds.records.iter().filter(|r| r.index.is_none() && r.lambda < cut) {
        md += &r.b * (c(1.0, 0.0) / (c(r.lambda, 0.0) - lambda));
    }
    for nn in 1..low_top {
        for j in 0..n {
            md[(j, j)] -= cnt(nn, j);
        }
    }
    let shells: Vec<usize> = (ds.n_diamond..=cfg.n_max).collect();
    let terms = exec::par_map(&shells, |&nn| {
        let mut t = linalg::zeros(n, n);
        for j in 0..n {
            if let Some(r) = ds.record_at(nn, j) {
                t += &r.b * (c(1.0, 0.0) / (c(r.lambda, 0.0) - lambda));
            }
            t[(j, j)] -= cnt(nn, j);
        }
        t
    });
    for t in &terms {
        md += t;
    }
    let tail_estimate = match (cfg.tail_mode, terms.last()) {
        (TailMode::Estimate, Some(last)) => {
            let z = lambda / p2;
            let nm = cfg.n_max as f64;
            let far = 10 * cfg.n_max.max(10);
            let mut s = 0.0;
            for k in cfg.n_max + 1..=far {
                s += 1.0 / (c((k * k) as f64, 0.0) - z).norm();
            }
            s += 1.0 / far as f64;
            linalg::op_norm(last) * (c(nm * nm, 0.0) - z).norm() * s
        }
        _ => 0.0,
    };
    if let Some(tol) = cfg.tol {
        if tail_estimate > tol {
            return Err(WeylError::TailTooLarge { estimate: tail_estimate, tol });
        }
    }
    let u = &ds.unitary;
    Ok(Reconstruction { m: u * md * u.adjoint(), tail_estimate })
}

/// Scalar specialisation: `m(λ)` from `N = 1` spectral data.
pub fn scalar_m(ds: &SpectralDataset, lambda: Complex64, cfg: &SeriesConfig) -> Result<Complex64, WeylError> {
    Ok(reconstruct_m(ds, lambda, cfg)?.m[(0, 0)])
}
