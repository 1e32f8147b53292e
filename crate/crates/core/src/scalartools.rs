//! Scalar (`N = 1`) tools: the three classical choices of extra spectral
//! data, Hadamard products for `φ(1,λ)` and `φ′(1,λ)`, the scalar
//! characterisation test and two discrete Hilbert transforms.
//!
//! Sequences are 1-based in the mathematics and 0-based in the vectors:
//! `dirichlet[0]` is `λ₁`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::str::FromStr;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::exec;
use crate::linalg::c;
use crate::spectraldata::{self, SequenceFit, SpectralDataset};
use crate::weylm::sqrt_cot;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScalarError {
    #[error("product did not converge at λ = {lambda}")]
    ProductNotConverged { lambda: Complex64 },
    #[error("interlacing μ₁ < λ₁ < μ₂ < … fails at n = {n}")]
    InterlacingViolated { n: usize },
    #[error("α_{n} = {value} is not positive")]
    NonPositiveAlpha { n: usize, value: f64 },
    #[error("sequence is not strictly increasing at n = {n}")]
    NotMonotone { n: usize },
    #[error("sequence `{0}` is required but missing")]
    MissingSequence(&'static str),
    #[error("need at least {need} terms, have {have}")]
    TooFewTerms { have: usize, need: usize },
    #[error("`{name}` has {have} terms but the Dirichlet spectrum has {want}")]
    LengthMismatch { name: &'static str, have: usize, want: usize },
    #[error("csv: {0}")]
    Csv(String),
}

/// Which extra sequence accompanies the Dirichlet spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SeqKind {
    /// Mixed (Dirichlet–Neumann) spectrum.
    Mu,
    /// Normalising constants `α_n = ‖φ(·,λ_n)‖²`.
    Alpha,
    /// Norming constants `ν_n = log[(−1)ⁿφ′(1,λ_n)]`.
    Nu,
}

impl SeqKind {
    pub fn name(self) -> &'static str {
        match self {
            SeqKind::Mu => "mu",
            SeqKind::Alpha => "alpha",
            SeqKind::Nu => "nu",
        }
    }
}

impl FromStr for SeqKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mu" => Ok(SeqKind::Mu),
            "alpha" => Ok(SeqKind::Alpha),
            "nu" => Ok(SeqKind::Nu),
            other => Err(format!("unknown sequence `{other}` (mu, alpha, nu)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ScalarSpectra {
    pub dirichlet: Vec<f64>,
    pub mixed: Option<Vec<f64>>,
    pub alpha: Option<Vec<f64>>,
    pub nu: Option<Vec<f64>>,
}

fn first_non_increasing(s: &[f64]) -> Option<usize> {
    s.windows(2).position(|w| !(w[1] > w[0])).map(|i| i + 2)
}

impl ScalarSpectra {
    pub fn new(dirichlet: Vec<f64>) -> Self {
        ScalarSpectra { dirichlet, ..Default::default() }
    }

    pub fn with_mixed(mut self, mu: Vec<f64>) -> Self {
        self.mixed = Some(mu);
        self
    }

    pub fn with_alpha(mut self, alpha: Vec<f64>) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_nu(mut self, nu: Vec<f64>) -> Self {
        self.nu = Some(nu);
        self
    }

    /// Free operator: `λ_n = π²n²`, `μ_n = π²(n−½)²`, `α_n = 1/(2π²n²)`, `ν_n = 0`.
    pub fn free(len: usize) -> Self {
        let n = |i: usize| (i + 1) as f64;
        ScalarSpectra {
            dirichlet: (0..len).map(|i| PI * PI * n(i) * n(i)).collect(),
            mixed: Some((0..len).map(|i| PI * PI * (n(i) - 0.5).powi(2)).collect()),
            alpha: Some((0..len).map(|i| 1.0 / (2.0 * PI * PI * n(i) * n(i))).collect()),
            nu: Some(vec![0.0; len]),
        }
    }

    /// Dirichlet eigenvalues and normalising constants of a scalar dataset.
    pub fn from_dataset(ds: &SpectralDataset) -> Self {
        let mut recs: Vec<_> = ds.records.iter().collect();
        recs.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
        ScalarSpectra {
            dirichlet: recs.iter().map(|r| r.lambda).collect(),
            alpha: Some(recs.iter().map(|r| r.g[(0, 0)].re).collect()),
            ..Default::default()
        }
    }

    pub fn get(&self, kind: SeqKind) -> Option<&Vec<f64>> {
        match kind {
            SeqKind::Mu => self.mixed.as_ref(),
            SeqKind::Alpha => self.alpha.as_ref(),
            SeqKind::Nu => self.nu.as_ref(),
        }
    }

    fn set(&mut self, kind: SeqKind, v: Vec<f64>) {
        match kind {
            SeqKind::Mu => self.mixed = Some(v),
            SeqKind::Alpha => self.alpha = Some(v),
            SeqKind::Nu => self.nu = Some(v),
        }
    }

    /// Monotonicity, interlacing, positivity and matching lengths.
    pub fn validate(&self) -> Result<(), ScalarError> {
        if let Some(n) = first_non_increasing(&self.dirichlet) {
            return Err(ScalarError::NotMonotone { n });
        }
        if let Some(mu) = &self.mixed {
            if let Some(n) = first_non_increasing(mu) {
                return Err(ScalarError::NotMonotone { n });
            }
            for (i, m) in mu.iter().enumerate() {
                let below = self.dirichlet.get(i).is_none_or(|l| m < l);
                let above = i == 0 || self.dirichlet.get(i - 1).is_some_and(|l| m > l);
                if !(below && above) {
                    return Err(ScalarError::InterlacingViolated { n: i + 1 });
                }
            }
        }
        let want = self.dirichlet.len();
        for (name, s) in [("alpha", &self.alpha), ("nu", &self.nu)] {
            if let Some(s) = s {
                if s.len() != want {
                    return Err(ScalarError::LengthMismatch { name, have: s.len(), want });
                }
            }
        }
        if let Some(a) = &self.alpha {
            if let Some(i) = a.iter().position(|x| !(*x > 0.0)) {
                return Err(ScalarError::NonPositiveAlpha { n: i + 1, value: a[i] });
            }
        }
        Ok(())
    }
}

/// Zeros of an entire function of the sine/cosine type, with the free
/// comparison zeros `π²(m−o)²` used beyond the supplied ones.
struct ZeroSet<'a> {
    zeros: &'a [f64],
    offset: f64,
    /// Free model `π²(m−o)² + shift + decay/(m−o)²`, fitted to the tail.
    shift: f64,
    decay: f64,
}

/// `Σ_{j≥0} (a+j)^{−s}` by Euler–Maclaurin; accurate for `a ≫ s`.
fn hurwitz_tail(a: f64, s: i32) -> f64 {
    let sf = s as f64;
    a.powi(1 - s) / (sf - 1.0) + 0.5 * a.powi(-s) + sf * a.powi(-s - 1) / 12.0
        - sf * (sf + 1.0) * (sf + 2.0) * a.powi(-s - 3) / 720.0
        + sf * (sf + 1.0) * (sf + 2.0) * (sf + 3.0) * (sf + 4.0) * a.powi(-s - 5) / 30240.0
}

/// Average of `z_m − π²(m−o)²` over the last third of the terms.
fn tail_shift(zeros: &[f64], offset: f64) -> f64 {
    tail_average(&defects(zeros, offset))
}

fn defects(zeros: &[f64], offset: f64) -> Vec<f64> {
    zeros.iter().enumerate().map(|(i, z)| z - free_zero(i + 1, offset)).collect()
}

/// Least-squares `(ρ, σ)` in `d_m ≈ ρ + σ/(m−o)²` over the last two thirds
/// of `d_1, d_2, …`.
fn fit_tail(d: &[f64], offset: f64) -> (f64, f64) {
    let l = d.len();
    if l < 6 {
        return (tail_average(d), 0.0);
    }
    let pts: Vec<(f64, f64)> = (l / 3..l).map(|i| (((i + 1) as f64 - offset).powi(-2), d[i])).collect();
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / m, sy / m);
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mx) * (p.1 - my), a.1 + (p.0 - mx).powi(2)));
    let sigma = sxy / sxx;
    (my - sigma * mx, sigma)
}

fn tail_average(d: &[f64]) -> f64 {
    let l = d.len();
    if l < 3 {
        return 0.0;
    }
    let from = l - l / 3;
    d[from..].iter().sum::<f64>() / (l - from) as f64
}

fn free_zero(m: usize, offset: f64) -> f64 {
    PI * PI * (m as f64 - offset).powi(2)
}

impl<'a> ZeroSet<'a> {
    fn new(zeros: &'a [f64], offset: f64) -> Self {
        let (shift, decay) = fit_tail(&defects(zeros, offset), offset);
        ZeroSet { zeros, offset, shift, decay }
    }

    /// `log Π (z_m − λ)/w_m` and its λ-derivative, leaving out factor `skip`.
    /// `None` when a kept factor vanishes exactly.
    fn log_product(&self, lambda: Complex64, skip: Option<usize>) -> Result<Option<(Complex64, Complex64)>, ScalarError> {
        let l = self.zeros.len();
        let y = (lambda - self.shift) / (PI * PI);
        if !(y.norm() < (l as f64 - self.offset + 1.0).powi(2)) && l > 0 {
            return Err(ScalarError::ProductNotConverged { lambda });
        }
        let mut log = c(0.0, 0.0);
        let mut dlog = c(0.0, 0.0);
        for (i, z) in self.zeros.iter().enumerate() {
            if skip == Some(i) {
                log -= free_zero(i + 1, self.offset).ln();
                continue;
            }
            let d = c(*z, 0.0) - lambda;
            if d == c(0.0, 0.0) {
                return Ok(None);
            }
            log += (d / free_zero(i + 1, self.offset)).ln();
            dlog -= 1.0 / d;
        }
        // Free model beyond the data: explicit factors up to K, then the
        // power series of the remaining log-sum.
        let k = (2 * l).max(1000).max((1000.0 * y.norm()).sqrt().ceil() as usize);
        for m in l + 1..=k {
            let w = free_zero(m, self.offset);
            let d = c(w + self.shift + self.decay / (m as f64 - self.offset).powi(2), 0.0) - lambda;
            log += (d / w).ln();
            dlog -= 1.0 / d;
        }
        let a = k as f64 + 1.0 - self.offset;
        let mut yp = c(1.0, 0.0);
        for p in 1..=8 {
            let z = hurwitz_tail(a, 2 * p);
            dlog -= yp * z / (PI * PI);
            yp *= y;
            log -= yp * z / p as f64;
        }
        if !(log.re.is_finite() && dlog.norm().is_finite()) {
            return Err(ScalarError::ProductNotConverged { lambda });
        }
        Ok(Some((log, dlog)))
    }

    /// Value and derivative of the product.
    fn eval(&self, lambda: Complex64) -> Result<(Complex64, Complex64), ScalarError> {
        match self.log_product(lambda, None)? {
            Some((log, dlog)) => {
                let v = log.exp();
                Ok((v, v * dlog))
            }
            None => {
                let i = self.zeros.iter().position(|z| c(*z, 0.0) == lambda).unwrap();
                Ok((c(0.0, 0.0), self.derivative_at_zero(i)?))
            }
        }
    }

    /// Derivative at the `i`-th zero: `−(1/w_i) Π_{m≠i}(z_m − z_i)/w_m`.
    fn derivative_at_zero(&self, i: usize) -> Result<Complex64, ScalarError> {
        let lambda = c(self.zeros[i], 0.0);
        match self.log_product(lambda, Some(i))? {
            Some((log, _)) => Ok(-log.exp()),
            None => Err(ScalarError::NotMonotone { n: i + 1 }),
        }
    }
}

/// `f(λ) = φ(1,λ)`, `g(λ) = φ′(1,λ)` and `ḟ(λ)` from the two spectra.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hadamard {
    #[serde(serialize_with = "crate::serial::ser_complex")]
    pub f: Complex64,
    #[serde(serialize_with = "crate::serial::ser_complex")]
    pub g: Complex64,
    #[serde(serialize_with = "crate::serial::ser_complex")]
    pub f_dot: Complex64,
}

/// `f(λ) = Π(λ_m−λ)/π²m²` and `g(λ) = Π(μ_m−λ)/π²(m−½)²`, continued past
/// the data with the free zeros shifted by the tail average.
pub fn hadamard_products(spectra: &ScalarSpectra, lambda: Complex64) -> Result<Hadamard, ScalarError> {
    let mu = spectra.mixed.as_ref().ok_or(ScalarError::MissingSequence("mu"))?;
    let (f, f_dot) = ZeroSet::new(&spectra.dirichlet, 0.0).eval(lambda)?;
    let (g, _) = ZeroSet::new(mu, 0.5).eval(lambda)?;
    Ok(Hadamard { f, g, f_dot })
}

/// `ḟ(λ_n)` for every Dirichlet eigenvalue.
pub fn dirichlet_derivatives(spectra: &ScalarSpectra) -> Result<Vec<f64>, ScalarError> {
    let zs = ZeroSet::new(&spectra.dirichlet, 0.0);
    let out = exec::par_map_range(spectra.dirichlet.len(), |i| zs.derivative_at_zero(i).map(|d| d.re));
    out.into_iter().collect()
}

fn sign(n: usize) -> f64 {
    if n % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Fill `to` from `from`. The Dirichlet spectrum is always required.
pub fn convert(spectra: &ScalarSpectra, from: SeqKind, to: SeqKind) -> Result<ScalarSpectra, ScalarError> {
    spectra.validate()?;
    let src = spectra.get(from).ok_or(ScalarError::MissingSequence(from.name()))?;
    let mut out = spectra.clone();
    if from == to {
        return Ok(out);
    }
    let lam = &spectra.dirichlet;
    let fdot = dirichlet_derivatives(spectra)?;
    // g(λ_n) = φ′(1,λ_n) is the common intermediate.
    let g: Vec<f64> = match from {
        SeqKind::Mu => {
            let zs = ZeroSet::new(src, 0.5);
            let vals = exec::par_map(lam, |l| zs.eval(c(*l, 0.0)).map(|v| v.0.re));
            vals.into_iter().collect::<Result<_, _>>()?
        }
        SeqKind::Alpha => src.iter().zip(&fdot).map(|(a, d)| a / d).collect(),
        SeqKind::Nu => src.iter().enumerate().map(|(i, v)| sign(i + 1) * v.exp()).collect(),
    };
    let target = match to {
        SeqKind::Alpha => {
            let a: Vec<f64> = g.iter().zip(&fdot).map(|(g, d)| g * d).collect();
            if let Some(i) = a.iter().position(|x| !(*x > 0.0)) {
                return Err(ScalarError::NonPositiveAlpha { n: i + 1, value: a[i] });
            }
            a
        }
        SeqKind::Nu => {
            let mut nu = Vec::with_capacity(g.len());
            for (i, g) in g.iter().enumerate() {
                let s = sign(i + 1) * g;
                if !(s > 0.0) {
                    return Err(ScalarError::InterlacingViolated { n: i + 1 });
                }
                nu.push(s.ln());
            }
            nu
        }
        SeqKind::Mu => {
            let r: Vec<f64> = g.iter().zip(&fdot).map(|(g, d)| g / d).collect();
            mixed_from_residues(lam, &r)?
        }
    };
    out.set(to, target);
    Ok(out)
}

/// Zeros of `g/f`, given the residues `r_n = g(λ_n)/ḟ(λ_n)` of `g/f`.
///
/// `g/f` equals `√(λ−q̂)cot√(λ−q̂)` plus a convergent sum in which each
/// residue is paired with its free counterpart `2π²n²`; it decreases from
/// `+∞` to `−∞` between consecutive poles, so each `μ_n` is bracketed by
/// `λ_{n−1}` and `λ_n`. Past the data the residue defect `r_n − 2π²n²` is
/// taken constant, its limit `ρ` fitted from the data as `ρ + σ/n²`.
fn mixed_from_residues(lam: &[f64], r: &[f64]) -> Result<Vec<f64>, ScalarError> {
    let q = fit_tail(&defects(lam, 0.0), 0.0).0;
    let l = lam.len();
    let (rho, _) = fit_tail(&r.iter().enumerate().map(|(i, r)| r - 2.0 * free_zero(i + 1, 0.0)).collect::<Vec<_>>(), 0.0);
    let far = (10 * l).max(1000);
    let ratio = |x: f64| -> f64 {
        let mut s = sqrt_cot(c(x - q, 0.0)).re;
        for (i, (l, r)) in lam.iter().zip(r).enumerate() {
            let w = free_zero(i + 1, 0.0);
            s += r / (x - l) - 2.0 * w / (x - w - q);
        }
        let mut tail = 1.0 / (PI * PI * far as f64);
        for m in l + 1..=far {
            tail += 1.0 / (free_zero(m, 0.0) + q - x);
        }
        s - rho * tail
    };
    if let Some(i) = r.iter().position(|x| !(*x > 0.0)) {
        return Err(ScalarError::InterlacingViolated { n: i + 1 });
    }
    let out = exec::par_map_range(lam.len(), |i| {
        let hi0 = lam[i];
        let scale = hi0.abs().max(1.0);
        let mut hi = hi0 - 1e-13 * scale;
        let mut lo = if i == 0 {
            let mut step = 1.0;
            let mut lo = hi0 - step;
            while ratio(lo) <= 0.0 {
                step *= 2.0;
                lo = hi0 - step;
                if step > 1e12 {
                    return Err(ScalarError::InterlacingViolated { n: 1 });
                }
            }
            lo
        } else {
            lam[i - 1] + 1e-13 * lam[i - 1].abs().max(1.0)
        };
        if !(ratio(lo) > 0.0 && ratio(hi) < 0.0) {
            return Err(ScalarError::InterlacingViolated { n: i + 1 });
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if ratio(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    });
    out.into_iter().collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalarReport {
    pub terms: usize,
    pub monotone: bool,
    /// Tail average of `λ_n − π²n²`.
    pub q0: f64,
    /// `λ_n − π²n² − q₀` and `πn(2π²n²α_n − 1)`.
    pub fits: Vec<SequenceFit>,
    pub pass: bool,
}

/// The scalar characterisation: strictly increasing `λ`, and both
/// `λ_n − π²n² − q₀` and `πn(2π²n²α_n − 1)` square-summable.
pub fn check_scalar_characterization(spectra: &ScalarSpectra) -> Result<ScalarReport, ScalarError> {
    const NEED: usize = 30;
    let lam = &spectra.dirichlet;
    if let Some(n) = first_non_increasing(lam) {
        return Err(ScalarError::NotMonotone { n });
    }
    let alpha = spectra.alpha.as_ref().ok_or(ScalarError::MissingSequence("alpha"))?;
    let terms = lam.len().min(alpha.len());
    if terms < NEED {
        return Err(ScalarError::TooFewTerms { have: terms, need: NEED });
    }
    let q0 = tail_shift(&lam[..terms], 0.0);
    let shells: Vec<usize> = (1..=terms).collect();
    let floor = |x: f64, f: f64| if x <= f { 0.0 } else { x };
    let mut a = Vec::with_capacity(terms);
    let mut b = Vec::with_capacity(terms);
    for &n in &shells {
        let nf = n as f64;
        let w = PI * PI * nf * nf;
        a.push(floor((lam[n - 1] - w - q0).abs(), 1e-8 * w));
        b.push(floor((PI * nf * (2.0 * w * alpha[n - 1] - 1.0)).abs(), 1e-8 * PI * nf));
    }
    let fits = vec![spectraldata::fit_plain("lambda", &shells, a), spectraldata::fit_weighted("alpha", &shells, b)];
    let pass = fits.iter().all(|f| f.pass);
    Ok(ScalarReport { terms, monotone: true, q0, fits, pass })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HilbertKind {
    /// `b_n = (1/π)Σ_m a_m[1/(n−m+½) + 1/(n+m−½)]`, an isometry of ℓ².
    HalfShifted,
    /// `b_n = Σ_{m≠n} a_m/(n−m) + Σ_m a_m/(n+m)`, bounded on ℓ².
    FullInteger,
    /// [`HilbertKind::FullInteger`] divided by `π`.
    FullIntegerNormalized,
}

impl HilbertKind {
    pub fn name(self) -> &'static str {
        match self {
            HilbertKind::HalfShifted => "half_shifted",
            HilbertKind::FullInteger => "full_integer",
            HilbertKind::FullIntegerNormalized => "full_integer_normalized",
        }
    }
}

impl FromStr for HilbertKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "half_shifted" => Ok(HilbertKind::HalfShifted),
            "full_integer" => Ok(HilbertKind::FullInteger),
            "full_integer_normalized" => Ok(HilbertKind::FullIntegerNormalized),
            other => Err(format!("unknown transform `{other}` (half_shifted, full_integer, full_integer_normalized)")),
        }
    }
}

/// Dense evaluation of `b_1, …, b_{L_out}` from `a_1, …, a_L`.
/// The output length is at least `L`.
pub fn discrete_hilbert(a: &[f64], kind: HilbertKind, l_out: usize) -> Vec<f64> {
    let l_out = l_out.max(a.len());
    let support: Vec<(f64, f64)> = a.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(i, x)| ((i + 1) as f64, *x)).collect();
    exec::par_map_range(l_out, |i| {
        let n = (i + 1) as f64;
        let mut s = 0.0;
        match kind {
            HilbertKind::HalfShifted => {
                for &(m, am) in &support {
                    s += am * (1.0 / (n - m + 0.5) + 1.0 / (n + m - 0.5));
                }
                s / PI
            }
            HilbertKind::FullInteger | HilbertKind::FullIntegerNormalized => {
                for &(m, am) in &support {
                    if m != n {
                        s += am / (n - m);
                    }
                    s += am / (n + m);
                }
                if kind == HilbertKind::FullIntegerNormalized {
                    s / PI
                } else {
                    s
                }
            }
        }
    })
}

/// `(Σ x²)^{1/2}`.
pub fn l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// A CSV with a named value column per sequence and one `n` column.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceTable {
    pub columns: Vec<(String, Vec<f64>)>,
}

impl SequenceTable {
    pub fn get(&self, name: &str) -> Option<&Vec<f64>> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    /// Spectra from columns `lambda` and optional `mu`, `alpha`, `nu`.
    /// A two-column file `(n, value)` is read as the Dirichlet spectrum.
    pub fn to_spectra(&self) -> Result<ScalarSpectra, ScalarError> {
        let lam = self.get("lambda").or_else(|| (self.columns.len() == 1).then(|| &self.columns[0].1));
        let lam = lam.ok_or(ScalarError::MissingSequence("lambda"))?.clone();
        Ok(ScalarSpectra {
            dirichlet: lam,
            mixed: self.get("mu").cloned(),
            alpha: self.get("alpha").cloned(),
            nu: self.get("nu").cloned(),
        })
    }

    pub fn from_spectra(s: &ScalarSpectra) -> Self {
        let mut columns = vec![("lambda".to_string(), s.dirichlet.clone())];
        for kind in [SeqKind::Mu, SeqKind::Alpha, SeqKind::Nu] {
            if let Some(v) = s.get(kind) {
                columns.push((kind.name().to_string(), v.clone()));
            }
        }
        SequenceTable { columns }
    }
}

/// Read a table whose first column is `n = 1, 2, …`. Missing cells end a
/// column early.
pub fn read_sequences<R: Read>(r: R) -> Result<SequenceTable, ScalarError> {
    let err = |e: csv::Error| ScalarError::Csv(e.to_string());
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rd.headers().map_err(err)?.iter().map(|s| s.to_string()).collect();
    if header.len() < 2 {
        return Err(ScalarError::Csv("expected an `n` column and at least one value column".into()));
    }
    let mut columns: Vec<(String, Vec<f64>)> = header[1..].iter().map(|h| (h.clone(), Vec::new())).collect();
    for (row, rec) in rd.records().enumerate() {
        let rec = rec.map_err(err)?;
        let n: usize = rec.get(0).unwrap_or("").parse().map_err(|_| ScalarError::Csv(format!("row {}: bad index", row + 1)))?;
        if n != row + 1 {
            return Err(ScalarError::Csv(format!("row {}: index {n} out of sequence", row + 1)));
        }
        for (k, col) in columns.iter_mut().enumerate() {
            let cell = rec.get(k + 1).unwrap_or("");
            if cell.is_empty() {
                continue;
            }
            if col.1.len() != row {
                return Err(ScalarError::Csv(format!("column `{}` has a gap before row {}", col.0, row + 1)));
            }
            let v: f64 = cell.parse().map_err(|_| ScalarError::Csv(format!("row {}: bad number `{cell}`", row + 1)))?;
            col.1.push(v);
        }
    }
    Ok(SequenceTable { columns })
}

/// Write `n` plus one column per sequence; shorter columns leave blanks.
pub fn write_sequences<W: Write>(w: W, table: &SequenceTable) -> Result<(), ScalarError> {
    let err = |e: csv::Error| ScalarError::Csv(e.to_string());
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["n".to_string()];
    header.extend(table.columns.iter().map(|(n, _)| n.clone()));
    wr.write_record(&header).map_err(err)?;
    let rows = table.columns.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    for i in 0..rows {
        let mut rec = vec![(i + 1).to_string()];
        rec.extend(table.columns.iter().map(|(_, v)| v.get(i).map(|x| x.to_string()).unwrap_or_default()));
        wr.write_record(&rec).map_err(err)?;
    }
    wr.flush().map_err(|e| ScalarError::Csv(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_products() {
        let s = ScalarSpectra::free(200);
        let h = hadamard_products(&s, c(-1.0, 0.0)).unwrap();
        assert!((h.f.re - 1f64.sinh()).abs() < 1e-12);
        assert!((h.g.re - 1f64.cosh()).abs() < 1e-12);
        let z = c(3.0, 1.5);
        let h = hadamard_products(&s, z * z).unwrap();
        assert!((h.f - z.sin() / z).norm() < 1e-11);
        assert!((h.g - z.cos()).norm() < 1e-11);
        let h = hadamard_products(&s, c(PI * PI, 0.0)).unwrap();
        assert_eq!(h.f, c(0.0, 0.0));
        assert!((h.f_dot.re + 1.0 / (2.0 * PI * PI)).abs() < 1e-13);
    }

    #[test]
    fn free_conversions() {
        let s = ScalarSpectra::free(100);
        let bare = ScalarSpectra { alpha: None, nu: None, ..s.clone() };
        let a = convert(&bare, SeqKind::Mu, SeqKind::Alpha).unwrap().alpha.unwrap();
        let nu = convert(&bare, SeqKind::Mu, SeqKind::Nu).unwrap().nu.unwrap();
        let only_alpha = ScalarSpectra { mixed: None, nu: None, ..s.clone() };
        let mu = convert(&only_alpha, SeqKind::Alpha, SeqKind::Mu).unwrap().mixed.unwrap();
        for i in 0..100 {
            let want = s.alpha.as_ref().unwrap()[i];
            assert!((a[i] - want).abs() <= 1e-9 * want);
            assert!(nu[i].abs() < 1e-9);
            let want = s.mixed.as_ref().unwrap()[i];
            assert!((mu[i] - want).abs() <= 1e-9 * want, "{i} {} {want}", mu[i]);
        }
    }

    #[test]
    fn validation_errors() {
        let mut s = ScalarSpectra::free(40);
        s.dirichlet[1] = s.dirichlet[0];
        assert_eq!(check_scalar_characterization(&s).unwrap_err(), ScalarError::NotMonotone { n: 2 });
        let mut s = ScalarSpectra::free(10);
        s.mixed.as_mut().unwrap()[3] = s.dirichlet[3] + 1.0;
        assert!(matches!(s.validate(), Err(ScalarError::InterlacingViolated { n: 4 })));
        let mut s = ScalarSpectra::free(10);
        s.alpha.as_mut().unwrap()[2] = -1.0;
        assert!(matches!(convert(&s, SeqKind::Alpha, SeqKind::Nu), Err(ScalarError::NonPositiveAlpha { n: 3, .. })));
    }

    #[test]
    fn free_characterization() {
        let r = check_scalar_characterization(&ScalarSpectra::free(60)).unwrap();
        assert!(r.pass);
        assert!(r.q0.abs() < 1e-12);
        assert!(r.fits.iter().all(|f| f.values.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn hilbert_on_delta() {
        let b = discrete_hilbert(&[1.0], HilbertKind::HalfShifted, 10);
        assert!((b[0] - 8.0 / (3.0 * PI)).abs() < 1e-15);
        for (i, x) in b.iter().enumerate() {
            let n = (i + 1) as f64;
            assert!((x - 2.0 * n / PI / (n * n - 0.25)).abs() < 1e-14);
        }
        let s: f64 = b.iter().map(|x| x * x).sum();
        assert!((s - 0.961).abs() < 1e-3, "{s}");
        let b = discrete_hilbert(&[1.0], HilbertKind::HalfShifted, 10_000);
        assert!((l2_norm(&b) - 1.0).abs() < 1e-3);
        assert!(discrete_hilbert(&[0.0; 5], HilbertKind::FullInteger, 8).iter().all(|x| *x == 0.0));
    }

    #[test]
    fn csv_round_trip() {
        let t = SequenceTable::from_spectra(&ScalarSpectra::free(5));
        let mut buf = Vec::new();
        write_sequences(&mut buf, &t).unwrap();
        let back = read_sequences(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    fn cos_data() -> (crate::potential::MatrixPotential, ScalarSpectra) {
        use crate::spectraldata::{assemble_dataset, DatasetConfig};
        // q(x) = cos 2πx.
        let v = crate::potential::MatrixPotential::scalar_fourier(0.0, &[(1, 0.5)], &[]);
        assert!((v.evaluate(0.0).unwrap()[(0, 0)].re - 1.0).abs() < 1e-14);
        let (ds, _) = assemble_dataset(&v, PI * PI * 40.5f64.powi(2), &DatasetConfig::default()).unwrap();
        (v, ScalarSpectra::from_dataset(&ds))
    }

    /// `φ′(1,λ)` by direct integration, for bisection.
    fn dphi1(v: &crate::potential::MatrixPotential, l: f64) -> f64 {
        use crate::matode::{solve_bundle, OdeConfig, Want};
        solve_bundle(v, c(l, 0.0), &OdeConfig::default(), Want::PLAIN).unwrap().dphi1[(0, 0)].re
    }

    #[test]
    fn cosine_potential_against_ode() {
        use crate::matode::{solve_bundle, OdeConfig, Want};
        let (v, s) = cos_data();
        assert_eq!(s.dirichlet.len(), 40);
        let nu = convert(&s, SeqKind::Alpha, SeqKind::Nu).unwrap();
        let back = convert(&ScalarSpectra { alpha: None, ..nu.clone() }, SeqKind::Nu, SeqKind::Alpha).unwrap();
        for (a, b) in s.alpha.as_ref().unwrap().iter().zip(back.alpha.as_ref().unwrap()) {
            assert!((a - b).abs() <= 1e-7 * a);
        }
        // Mixed spectrum from α, against zeros of φ′(1,·) found by bisection.
        let mu = convert(&s, SeqKind::Alpha, SeqKind::Mu).unwrap().mixed.unwrap();
        let mut worst: f64 = 0.0;
        for (i, m) in mu.iter().enumerate().take(10) {
            let (mut lo, mut hi) = (if i == 0 { -20.0 } else { s.dirichlet[i - 1] }, s.dirichlet[i]);
            let slo = dphi1(&v, lo).signum();
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if dphi1(&v, mid).signum() == slo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            worst = worst.max((m - lo).abs() / lo.abs().max(1.0));
        }
        assert!(worst < 1e-6, "mu worst {worst:e}");
        let both = s.clone().with_mixed(mu);
        let h = hadamard_products(&both, c(-2.0, 0.0)).unwrap();
        let b = solve_bundle(&v, c(-2.0, 0.0), &OdeConfig::default(), Want::PLAIN).unwrap();
        assert!((h.f.re - b.phi1[(0, 0)].re).abs() < 1e-5, "{} {}", h.f, b.phi1[(0, 0)]);
        assert!((h.g.re - b.dphi1[(0, 0)].re).abs() < 1e-5, "{} {}", h.g, b.dphi1[(0, 0)]);
        let r = check_scalar_characterization(&s).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.q0.abs() < 1e-4);
    }

}
