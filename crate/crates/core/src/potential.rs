//! Matrix potentials on `[0,1]`.
//!
//! Two representations are supported: a truncated real Fourier series
//! `V(x) = V̂⁰ + 2 Σₙ (V̂ᶜⁿ cos 2πnx + V̂ˢⁿ sin 2πnx)` and uniform grid samples
//! with 4-point Lagrange interpolation. The synthesis convention makes
//! `∫V cos 2πnx = V̂ᶜⁿ` and `∫V sin 2πnx = V̂ˢⁿ`.

use std::f64::consts::PI;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, c, herm_eig, hermitian_defect, max_abs, op_norm, zeros, CMat};
use crate::serial::{mat_from_rows, mat_to_rows, JsonMatrix};

pub const TOL_HERM: f64 = 1e-12;
pub const GAP_MIN: f64 = 1e-8;
pub const MIN_GRID: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("matrix not Hermitian: entry ({row},{col}) off by {defect:e}")]
    NotHermitian { row: usize, col: usize, defect: f64 },
    #[error("x = {0} outside [0,1]")]
    OutOfDomain(f64),
    #[error("bad coefficient kind: {0}")]
    BadKind(String),
    #[error("mean has eigenvalues {gap:e} apart (gap_min {gap_min:e})")]
    DegenerateMean { gap: f64, gap_min: f64 },
    #[error("grid needs at least {MIN_GRID} intervals, got {0}")]
    GridTooCoarse(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Storage for a potential.
#[derive(Debug, Clone, PartialEq)]
pub enum Repr {
    /// Mean plus cosine/sine harmonics, each paired with its index `n ≥ 1`.
    Fourier {
        mean: CMat,
        cos: Vec<(usize, CMat)>,
        sin: Vec<(usize, CMat)>,
    },
    /// `M+1` samples at `x = i/M`.
    Grid { samples: Vec<CMat> },
}

/// An `N×N` matrix-valued potential on `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPotential {
    dim: usize,
    repr: Repr,
    hermitian: bool,
    // Dense harmonic table (cos, sin) for n = 1..=kmax, flattened row-major.
    table: Vec<(Vec<Complex64>, Vec<Complex64>)>,
}

/// Kind selector for [`MatrixPotential::fourier_coefficient`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientKind {
    Mean,
    Cos,
    Sin,
    /// `∫₀¹ (1−t) V(t) sin 2πnt dt`.
    WeightedSin,
}

impl FromStr for CoefficientKind {
    type Err = PotentialError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Self::Mean),
            "cos" => Ok(Self::Cos),
            "sin" => Ok(Self::Sin),
            "weighted_sin" => Ok(Self::WeightedSin),
            other => Err(PotentialError::BadKind(other.to_string())),
        }
    }
}

/// A Fourier coefficient; only `WeightedSin` can be non-Hermitian.
#[derive(Debug, Clone)]
pub struct Coefficient {
    pub matrix: CMat,
    pub hermitian: bool,
}

/// Potential conjugated into the eigenbasis of its mean.
#[derive(Debug, Clone)]
pub struct DiagonalizedPotential {
    pub potential: MatrixPotential,
    pub unitary: CMat,
    pub v0: Vec<f64>,
}

fn check_herm(m: &CMat) -> Result<(), PotentialError> {
    let (d, row, col) = hermitian_defect(m);
    if d > TOL_HERM {
        // Report the lower-triangle entry, which is the one that must be conj of its mirror.
        let (row, col) = if row >= col { (row, col) } else { (col, row) };
        return Err(PotentialError::NotHermitian { row, col, defect: d });
    }
    Ok(())
}

impl MatrixPotential {
    fn build(dim: usize, repr: Repr, hermitian: bool) -> Result<Self, PotentialError> {
        let mats: Vec<&CMat> = match &repr {
            Repr::Fourier { mean, cos, sin } => std::iter::once(mean)
                .chain(cos.iter().map(|(_, m)| m))
                .chain(sin.iter().map(|(_, m)| m))
                .collect(),
            Repr::Grid { samples } => {
                if samples.len() < MIN_GRID + 1 {
                    return Err(PotentialError::GridTooCoarse(samples.len().saturating_sub(1)));
                }
                samples.iter().collect()
            }
        };
        for m in &mats {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(PotentialError::Dimension(format!(
                    "expected {dim}x{dim}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            if hermitian {
                check_herm(m)?;
            }
        }
        if let Repr::Fourier { cos, sin, .. } = &repr {
            if cos.iter().chain(sin.iter()).any(|(n, _)| *n == 0) {
                return Err(PotentialError::Parse("harmonic index must be ≥ 1".into()));
            }
        }
        let mut p = MatrixPotential { dim, repr, hermitian, table: Vec::new() };
        p.rebuild_table();
        Ok(p)
    }

    fn rebuild_table(&mut self) {
        self.table.clear();
        if let Repr::Fourier { cos, sin, .. } = &self.repr {
            let kmax = cos.iter().chain(sin.iter()).map(|(n, _)| *n).max().unwrap_or(0);
            let nn = self.dim * self.dim;
            self.table = vec![(vec![Complex64::new(0.0, 0.0); nn], vec![Complex64::new(0.0, 0.0); nn]); kmax];
            for (n, m) in cos {
                for (i, z) in m.transpose().iter().enumerate() {
                    self.table[n - 1].0[i] += *z;
                }
            }
            for (n, m) in sin {
                for (i, z) in m.transpose().iter().enumerate() {
                    self.table[n - 1].1[i] += *z;
                }
            }
        }
    }

    /// Hermitian Fourier potential.
    pub fn fourier(mean: CMat, cos: Vec<(usize, CMat)>, sin: Vec<(usize, CMat)>) -> Result<Self, PotentialError> {
        let dim = mean.nrows();
        Self::build(dim, Repr::Fourier { mean, cos, sin }, true)
    }

    /// Fourier potential without the Hermitian requirement.
    pub fn fourier_general(mean: CMat, cos: Vec<(usize, CMat)>, sin: Vec<(usize, CMat)>) -> Result<Self, PotentialError> {
        let dim = mean.nrows();
        Self::build(dim, Repr::Fourier { mean, cos, sin }, false)
    }

    /// Hermitian grid potential from `M+1` samples.
    pub fn grid(samples: Vec<CMat>) -> Result<Self, PotentialError> {
        let dim = samples.first().map_or(0, |m| m.nrows());
        Self::build(dim, Repr::Grid { samples }, true)
    }

    pub fn grid_general(samples: Vec<CMat>) -> Result<Self, PotentialError> {
        let dim = samples.first().map_or(0, |m| m.nrows());
        Self::build(dim, Repr::Grid { samples }, false)
    }

    /// Constant potential.
    pub fn constant(m: CMat) -> Result<Self, PotentialError> {
        Self::fourier(m, Vec::new(), Vec::new())
    }

    pub fn zero(dim: usize) -> Self {
        Self::constant(zeros(dim, dim)).expect("zero potential is valid")
    }

    /// Scalar potential `q₀ + 2Σ(aₙ cos 2πnx + bₙ sin 2πnx)`.
    pub fn scalar_fourier(q0: f64, cos: &[(usize, f64)], sin: &[(usize, f64)]) -> Self {
        let one = |v: f64| CMat::from_element(1, 1, c(v, 0.0));
        Self::fourier(
            one(q0),
            cos.iter().map(|(n, v)| (*n, one(*v))).collect(),
            sin.iter().map(|(n, v)| (*n, one(*v))).collect(),
        )
        .expect("real scalar potential is Hermitian")
    }

    /// Seeded random Hermitian trigonometric potential with zero mean: cosine
    /// and sine coefficients of harmonics `1..=harmonics`, entries uniform in
    /// `[−scale, scale]` before Hermitian symmetrisation.
    pub fn random_trig(dim: usize, harmonics: usize, scale: f64, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut herm = || {
            let mut m = zeros(dim, dim);
            for v in m.iter_mut() {
                *v = c(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale));
            }
            linalg::herm_part(&m)
        };
        let cos = (1..=harmonics).map(|k| (k, herm())).collect();
        let sin = (1..=harmonics).map(|k| (k, herm())).collect();
        Self::fourier(zeros(dim, dim), cos, sin).expect("Hermitian by construction")
    }

    /// Sample a function on a uniform grid with `m` intervals.
    pub fn sample<F: Fn(f64) -> CMat>(m: usize, f: F) -> Result<Self, PotentialError> {
        Self::grid((0..=m).map(|i| f(i as f64 / m as f64)).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn repr(&self) -> &Repr {
        &self.repr
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Breakpoints where the representation is not smooth (grid nodes).
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.repr {
            Repr::Fourier { .. } => Vec::new(),
            Repr::Grid { samples } => {
                let m = samples.len() - 1;
                (1..m).map(|i| i as f64 / m as f64).collect()
            }
        }
    }

    /// Evaluate `V(x)` into a row-major buffer of length `N²`. No domain check.
    pub fn eval_into(&self, x: f64, out: &mut [Complex64]) {
        let n = self.dim;
        match &self.repr {
            Repr::Fourier { mean, .. } => {
                for r in 0..n {
                    for s in 0..n {
                        out[r * n + s] = mean[(r, s)];
                    }
                }
                if self.table.is_empty() {
                    return;
                }
                let (s1, c1) = (2.0 * PI * x).sin_cos();
                let (mut ck, mut sk) = (1.0, 0.0);
                for (kc, ks) in &self.table {
                    // Angle-addition recurrence for cos/sin of 2πkx.
                    let cn = ck * c1 - sk * s1;
                    let sn = sk * c1 + ck * s1;
                    ck = cn;
                    sk = sn;
                    let (a, b) = (2.0 * ck, 2.0 * sk);
                    for i in 0..n * n {
                        out[i] += kc[i] * a + ks[i] * b;
                    }
                }
            }
            Repr::Grid { samples } => {
                let m = samples.len() - 1;
                let t = x.clamp(0.0, 1.0) * m as f64;
                let i = (t.floor() as usize).min(m - 1);
                let lo = i.saturating_sub(1).min(m - 3);
                let u = t - lo as f64;
                // Lagrange weights on nodes lo..lo+3 at local coordinate u.
                let w = [
                    -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0,
                    u * (u - 2.0) * (u - 3.0) / 2.0,
                    -u * (u - 1.0) * (u - 3.0) / 2.0,
                    u * (u - 1.0) * (u - 2.0) / 6.0,
                ];
                for r in 0..n {
                    for s in 0..n {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (k, wk) in w.iter().enumerate() {
                            acc += samples[lo + k][(r, s)] * *wk;
                        }
                        out[r * n + s] = acc;
                    }
                }
            }
        }
    }

    /// `V(x)` for `x ∈ [0,1]`.
    pub fn evaluate(&self, x: f64) -> Result<CMat, PotentialError> {
        if !(0.0..=1.0).contains(&x) || x.is_nan() {
            return Err(PotentialError::OutOfDomain(x));
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: f64) -> CMat {
        let n = self.dim;
        let mut buf = vec![Complex64::new(0.0, 0.0); n * n];
        self.eval_into(x, &mut buf);
        CMat::from_row_slice(n, n, &buf)
    }

    /// Mean matrix `∫₀¹ V`.
    pub fn mean(&self) -> CMat {
        match &self.repr {
            Repr::Fourier { mean, .. } => mean.clone(),
            Repr::Grid { .. } => self.quadrature(|_| 1.0),
        }
    }

    /// Composite 8-point Gauss–Legendre quadrature of `w(t) V(t)`.
    fn quadrature<W: Fn(f64) -> f64>(&self, w: W) -> CMat {
        let panels = match &self.repr {
            Repr::Grid { samples } => ((samples.len() - 1) / 8).max(1),
            Repr::Fourier { .. } => 64,
        };
        let (nodes, weights) = gauss_legendre_8();
        let mut acc = zeros(self.dim, self.dim);
        let h = 1.0 / panels as f64;
        for p in 0..panels {
            let a = p as f64 * h;
            for (x, wt) in nodes.iter().zip(weights.iter()) {
                let t = a + 0.5 * h * (x + 1.0);
                acc += self.eval_unchecked(t) * c(0.5 * h * wt * w(t), 0.0);
            }
        }
        acc
    }

    /// Fourier-type integrals of the potential.
    pub fn fourier_coefficient(&self, kind: CoefficientKind, n: usize) -> Result<Coefficient, PotentialError> {
        if kind != CoefficientKind::Mean && n == 0 {
            return Err(PotentialError::BadKind(format!("{kind:?} needs n ≥ 1")));
        }
        let herm = self.hermitian && kind != CoefficientKind::WeightedSin;
        let matrix = match &self.repr {
            Repr::Fourier { mean, cos, sin } => {
                let pick = |list: &Vec<(usize, CMat)>, k: usize| {
                    list.iter().filter(|(m, _)| *m == k).fold(zeros(self.dim, self.dim), |a, (_, b)| a + b)
                };
                match kind {
                    CoefficientKind::Mean => mean.clone(),
                    CoefficientKind::Cos => pick(cos, n),
                    CoefficientKind::Sin => pick(sin, n),
                    CoefficientKind::WeightedSin => {
                        let nf = n as f64;
                        let mut acc = mean * c(1.0 / (2.0 * PI * nf), 0.0);
                        for (k, m) in cos {
                            let kf = *k as f64;
                            let mut w = 1.0 / (2.0 * PI * (nf + kf));
                            if *k != n {
                                w += 1.0 / (2.0 * PI * (nf - kf));
                            }
                            acc += m * c(w, 0.0);
                        }
                        acc + pick(sin, n) * c(0.5, 0.0)
                    }
                }
            }
            Repr::Grid { .. } => {
                let w = 2.0 * PI * n as f64;
                match kind {
                    CoefficientKind::Mean => self.quadrature(|_| 1.0),
                    CoefficientKind::Cos => self.quadrature(|t| (w * t).cos()),
                    CoefficientKind::Sin => self.quadrature(|t| (w * t).sin()),
                    CoefficientKind::WeightedSin => self.quadrature(|t| (1.0 - t) * (w * t).sin()),
                }
            }
        };
        Ok(Coefficient { matrix, hermitian: herm })
    }

    /// Apply `M ↦ f(M)` to every stored matrix.
    fn map_matrices<F: Fn(&CMat) -> CMat>(&self, f: F, hermitian: bool) -> Self {
        let repr = match &self.repr {
            Repr::Fourier { mean, cos, sin } => Repr::Fourier {
                mean: f(mean),
                cos: cos.iter().map(|(n, m)| (*n, f(m))).collect(),
                sin: sin.iter().map(|(n, m)| (*n, f(m))).collect(),
            },
            Repr::Grid { samples } => Repr::Grid { samples: samples.iter().map(&f).collect() },
        };
        let dim = match &repr {
            Repr::Fourier { mean, .. } => mean.nrows(),
            Repr::Grid { samples } => samples[0].nrows(),
        };
        let mut p = MatrixPotential { dim, repr, hermitian, table: Vec::new() };
        p.rebuild_table();
        p
    }

    /// `V♯(x) = V(1−x)`.
    pub fn reflect(&self) -> Self {
        match &self.repr {
            Repr::Fourier { mean, cos, sin } => {
                let mut p = MatrixPotential {
                    dim: self.dim,
                    repr: Repr::Fourier {
                        mean: mean.clone(),
                        cos: cos.clone(),
                        sin: sin.iter().map(|(n, m)| (*n, -m)).collect(),
                    },
                    hermitian: self.hermitian,
                    table: Vec::new(),
                };
                p.rebuild_table();
                p
            }
            Repr::Grid { samples } => {
                let mut rev = samples.clone();
                rev.reverse();
                MatrixPotential { dim: self.dim, repr: Repr::Grid { samples: rev }, hermitian: self.hermitian, table: Vec::new() }
            }
        }
    }

    /// `U* V(x) U`.
    pub fn conjugate_by(&self, u: &CMat) -> Self {
        let ua = u.adjoint();
        let herm = self.hermitian;
        self.map_matrices(
            |m| {
                let r = &ua * m * u;
                if herm {
                    linalg::herm_part(&r)
                } else {
                    r
                }
            },
            herm,
        )
    }

    /// `V + s·I`.
    pub fn shifted(&self, s: f64) -> Self {
        let id = linalg::eye(self.dim) * c(s, 0.0);
        match &self.repr {
            Repr::Fourier { mean, cos, sin } => {
                let mut p = self.clone();
                p.repr = Repr::Fourier { mean: mean + &id, cos: cos.clone(), sin: sin.clone() };
                p
            }
            Repr::Grid { .. } => self.map_matrices(|m| m + &id, self.hermitian),
        }
    }

    /// `self + s·other`; both must share representation (and grid size).
    pub fn add_scaled(&self, other: &MatrixPotential, s: Complex64) -> Result<Self, PotentialError> {
        if self.dim != other.dim {
            return Err(PotentialError::Dimension("potentials differ in N".into()));
        }
        let hermitian = self.hermitian && other.hermitian && s.im == 0.0;
        let repr = match (&self.repr, &other.repr) {
            (Repr::Fourier { mean, cos, sin }, Repr::Fourier { mean: m2, cos: c2, sin: s2 }) => {
                let mut cos = cos.clone();
                cos.extend(c2.iter().map(|(n, m)| (*n, m * s)));
                let mut sin = sin.clone();
                sin.extend(s2.iter().map(|(n, m)| (*n, m * s)));
                Repr::Fourier { mean: mean + m2 * s, cos: merge_harmonics(cos), sin: merge_harmonics(sin) }
            }
            (Repr::Grid { samples }, Repr::Grid { samples: s2 }) if samples.len() == s2.len() => {
                Repr::Grid { samples: samples.iter().zip(s2).map(|(a, b)| a + b * s).collect() }
            }
            _ => return Err(PotentialError::Dimension("representations differ".into())),
        };
        let mut p = MatrixPotential { dim: self.dim, repr, hermitian, table: Vec::new() };
        p.rebuild_table();
        Ok(p)
    }

    /// Scalar potential formed by the `(j,j)` entry.
    pub fn diagonal_entry(&self, j: usize) -> Self {
        let pick = |m: &CMat| CMat::from_element(1, 1, m[(j, j)]);
        self.map_matrices(pick, self.hermitian)
    }

    /// Diagonal potential from scalar ones sharing a representation.
    pub fn from_diagonal(entries: &[MatrixPotential]) -> Result<Self, PotentialError> {
        let n = entries.len();
        if n == 0 || entries.iter().any(|e| e.dim != 1) {
            return Err(PotentialError::Dimension("diagonal entries must be scalar".into()));
        }
        let all_fourier = entries.iter().all(|e| matches!(e.repr, Repr::Fourier { .. }));
        if all_fourier {
            let mut mean = zeros(n, n);
            let mut cos = Vec::new();
            let mut sin = Vec::new();
            for (j, e) in entries.iter().enumerate() {
                if let Repr::Fourier { mean: m0, cos: cj, sin: sj } = &e.repr {
                    mean[(j, j)] = m0[(0, 0)];
                    let lift = |m: &CMat| {
                        let mut z = zeros(n, n);
                        z[(j, j)] = m[(0, 0)];
                        z
                    };
                    cos.extend(cj.iter().map(|(k, m)| (*k, lift(m))));
                    sin.extend(sj.iter().map(|(k, m)| (*k, lift(m))));
                }
            }
            let herm = entries.iter().all(|e| e.hermitian);
            return Self::build(n, Repr::Fourier { mean, cos: merge_harmonics(cos), sin: merge_harmonics(sin) }, herm);
        }
        let m = entries
            .iter()
            .find_map(|e| match &e.repr {
                Repr::Grid { samples } => Some(samples.len() - 1),
                _ => None,
            })
            .unwrap_or(1024);
        let samples = (0..=m)
            .map(|i| {
                let x = i as f64 / m as f64;
                let mut z = zeros(n, n);
                for (j, e) in entries.iter().enumerate() {
                    z[(j, j)] = e.eval_unchecked(x)[(0, 0)];
                }
                z
            })
            .collect();
        Self::build(n, Repr::Grid { samples }, entries.iter().all(|e| e.hermitian))
    }

    /// `sup_x ‖V(x)‖` sampled at 1025 uniform points (plus grid nodes).
    pub fn sup_norm(&self) -> f64 {
        let mut best: f64 = 0.0;
        let m = 1024;
        for i in 0..=m {
            best = best.max(op_norm(&self.eval_unchecked(i as f64 / m as f64)));
        }
        if let Repr::Grid { samples } = &self.repr {
            for s in samples {
                best = best.max(op_norm(s));
            }
        }
        best
    }

    /// Whether the mean-zero condition `∫V = 0` holds to `tol`.
    pub fn has_zero_mean(&self, tol: f64) -> bool {
        max_abs(&self.mean()) <= tol
    }

    /// Parse the JSON file format.
    pub fn from_json_str(text: &str) -> Result<Self, PotentialError> {
        let f: PotentialFile = serde_json::from_str(text).map_err(|e| PotentialError::Parse(e.to_string()))?;
        f.into_potential()
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(PotentialFile::from_potential(self)).expect("potential serialises")
    }
}

fn merge_harmonics(list: Vec<(usize, CMat)>) -> Vec<(usize, CMat)> {
    let mut out: Vec<(usize, CMat)> = Vec::new();
    for (n, m) in list {
        match out.iter_mut().find(|(k, _)| *k == n) {
            Some((_, acc)) => *acc += m,
            None => out.push((n, m)),
        }
    }
    out.sort_by_key(|(n, _)| *n);
    out
}

/// Read and validate a potential file.
pub fn load_potential(path: &Path) -> Result<MatrixPotential, PotentialError> {
    let text = std::fs::read_to_string(path).map_err(|e| PotentialError::Parse(format!("{}: {e}", path.display())))?;
    MatrixPotential::from_json_str(&text)
}

/// Conjugate `V` into the eigenbasis of its mean, sorted by increasing
/// eigenvalue, with each eigenvector's largest entry made real positive.
pub fn diagonalize_mean(v: &MatrixPotential, gap_min: f64) -> Result<DiagonalizedPotential, PotentialError> {
    let d = diagonalize_mean_unchecked(v);
    for w in d.v0.windows(2) {
        if w[1] - w[0] <= gap_min {
            return Err(PotentialError::DegenerateMean { gap: w[1] - w[0], gap_min });
        }
    }
    Ok(d)
}

/// As [`diagonalize_mean`] but accepting repeated mean eigenvalues.
pub fn diagonalize_mean_unchecked(v: &MatrixPotential) -> DiagonalizedPotential {
    let mean = linalg::herm_part(&v.mean());
    let (vals, mut u) = herm_eig(&mean);
    let n = v.dim();
    for j in 0..n {
        let mut best = 0;
        for r in 0..n {
            if u[(r, j)].norm() > u[(best, j)].norm() + 1e-12 {
                best = r;
            }
        }
        let z = u[(best, j)];
        if z.norm() > 0.0 {
            let ph = z.conj() / z.norm();
            for r in 0..n {
                u[(r, j)] *= ph;
            }
        }
    }
    // Snap near-identity unitaries so diagonal input stays exactly diagonal.
    if max_abs(&(&u - linalg::eye(n))) < 1e-14 {
        u = linalg::eye(n);
    }
    let potential = v.conjugate_by(&u);
    DiagonalizedPotential { potential, unitary: u, v0: vals }
}

/// 8-point Gauss–Legendre nodes and weights on `[-1,1]`.
pub fn gauss_legendre_8() -> ([f64; 8], [f64; 8]) {
    let x = [
        -0.960_289_856_497_536_2,
        -0.796_666_477_413_626_7,
        -0.525_532_409_916_329,
        -0.183_434_642_495_649_8,
        0.183_434_642_495_649_8,
        0.525_532_409_916_329,
        0.796_666_477_413_626_7,
        0.960_289_856_497_536_2,
    ];
    let w = [
        0.101_228_536_290_376_3,
        0.222_381_034_453_374_5,
        0.313_706_645_877_887_3,
        0.362_683_783_378_362,
        0.362_683_783_378_362,
        0.313_706_645_877_887_3,
        0.222_381_034_453_374_5,
        0.101_228_536_290_376_3,
    ];
    (x, w)
}

#[derive(Debug, Serialize, Deserialize)]
struct HarmonicEntry {
    n: usize,
    #[serde(rename = "M")]
    m: JsonMatrix,
}

#[derive(Debug, Serialize, Deserialize)]
struct GridEntry {
    #[serde(rename = "M")]
    m: usize,
    samples: Vec<JsonMatrix>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PotentialFile {
    #[serde(rename = "N")]
    n: usize,
    repr: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean: Option<JsonMatrix>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    cos: Vec<HarmonicEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    sin: Vec<HarmonicEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grid: Option<GridEntry>,
}

impl PotentialFile {
    fn into_potential(self) -> Result<MatrixPotential, PotentialError> {
        let mat = |rows: &JsonMatrix| {
            let m = mat_from_rows(rows).ok_or_else(|| PotentialError::Parse("ragged matrix".into()))?;
            if m.nrows() != self.n || m.ncols() != self.n {
                return Err(PotentialError::Dimension(format!("matrix is {}x{}, N = {}", m.nrows(), m.ncols(), self.n)));
            }
            Ok(m)
        };
        match self.repr.as_str() {
            "fourier" => {
                let mean = match &self.mean {
                    Some(m) => mat(m)?,
                    None => zeros(self.n, self.n),
                };
                let cos = self.cos.iter().map(|h| Ok((h.n, mat(&h.m)?))).collect::<Result<Vec<_>, PotentialError>>()?;
                let sin = self.sin.iter().map(|h| Ok((h.n, mat(&h.m)?))).collect::<Result<Vec<_>, PotentialError>>()?;
                MatrixPotential::fourier(mean, cos, sin)
            }
            "grid" => {
                let g = self.grid.as_ref().ok_or_else(|| PotentialError::Parse("grid repr without grid field".into()))?;
                if g.samples.len() != g.m + 1 {
                    return Err(PotentialError::Parse(format!("grid M = {} needs {} samples, got {}", g.m, g.m + 1, g.samples.len())));
                }
                let samples = g.samples.iter().map(mat).collect::<Result<Vec<_>, _>>()?;
                MatrixPotential::grid(samples)
            }
            other => Err(PotentialError::Parse(format!("unknown repr '{other}'"))),
        }
    }

    fn from_potential(p: &MatrixPotential) -> Self {
        match &p.repr {
            Repr::Fourier { mean, cos, sin } => PotentialFile {
                n: p.dim,
                repr: "fourier".into(),
                mean: Some(mat_to_rows(mean)),
                cos: cos.iter().map(|(n, m)| HarmonicEntry { n: *n, m: mat_to_rows(m) }).collect(),
                sin: sin.iter().map(|(n, m)| HarmonicEntry { n: *n, m: mat_to_rows(m) }).collect(),
                grid: None,
            },
            Repr::Grid { samples } => PotentialFile {
                n: p.dim,
                repr: "grid".into(),
                mean: None,
                cos: Vec::new(),
                sin: Vec::new(),
                grid: Some(GridEntry { m: samples.len() - 1, samples: samples.iter().map(mat_to_rows).collect() }),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diag, eye};

    #[test]
    fn trig_convention_at_zero() {
        let v = MatrixPotential::fourier(zeros(2, 2), vec![(1, diag(&[1.0, 0.0]))], vec![]).unwrap();
        let m = v.evaluate(0.0).unwrap();
        assert!(max_abs(&(m - diag(&[2.0, 0.0]))) < 1e-15);
    }

    #[test]
    fn grid_cosine_interpolation() {
        let v = MatrixPotential::sample(256, |x| CMat::from_element(1, 1, c((2.0 * PI * x).cos(), 0.0))).unwrap();
        assert!(v.evaluate(0.25).unwrap()[(0, 0)].norm() < 1e-6);
        let x = 0.123_456;
        let err = (v.evaluate(x).unwrap()[(0, 0)].re - (2.0 * PI * x).cos()).abs();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn weighted_sin_closed_form() {
        let q = MatrixPotential::scalar_fourier(0.0, &[(1, 0.5)], &[]);
        let w = q.fourier_coefficient(CoefficientKind::WeightedSin, 1).unwrap();
        assert!((w.matrix[(0, 0)].re - 1.0 / (8.0 * PI)).abs() < 1e-15);
        assert!(!w.hermitian);
        // Same integral through quadrature on a sampled copy.
        let g = MatrixPotential::sample(512, |x| CMat::from_element(1, 1, c((2.0 * PI * x).cos(), 0.0))).unwrap();
        let wg = g.fourier_coefficient(CoefficientKind::WeightedSin, 1).unwrap();
        assert!((wg.matrix[(0, 0)].re - 1.0 / (8.0 * PI)).abs() < 1e-9);
    }

    #[test]
    fn orthogonality() {
        let v = MatrixPotential::fourier(zeros(2, 2), vec![(2, diag(&[0.3, -0.1]))], vec![]).unwrap();
        let c2 = v.fourier_coefficient(CoefficientKind::Cos, 2).unwrap().matrix;
        assert!(max_abs(&(c2 - diag(&[0.3, -0.1]))) < 1e-15);
        assert!(max_abs(&v.fourier_coefficient(CoefficientKind::Cos, 3).unwrap().matrix) == 0.0);
        assert!(v.fourier_coefficient(CoefficientKind::Cos, 0).is_err());
    }

    #[test]
    fn pauli_mean() {
        let x = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let d = diagonalize_mean(&MatrixPotential::constant(x).unwrap(), GAP_MIN).unwrap();
        assert!((d.v0[0] + 1.0).abs() < 1e-14 && (d.v0[1] - 1.0).abs() < 1e-14);
        assert!((d.unitary[(0, 0)].norm() - 0.5f64.sqrt()).abs() < 1e-14);
        assert!(max_abs(&(d.potential.mean() - diag(&[-1.0, 1.0]))) < 1e-14);
    }

    #[test]
    fn diagonal_mean_is_identity() {
        let d = diagonalize_mean(&MatrixPotential::constant(diag(&[2.0, 5.0])).unwrap(), GAP_MIN).unwrap();
        assert_eq!(d.unitary, eye(2));
        let e = diagonalize_mean(&MatrixPotential::constant(diag(&[1.0, 1.0 + 1e-12])).unwrap(), GAP_MIN);
        assert!(matches!(e, Err(PotentialError::DegenerateMean { .. })));
    }

    #[test]
    fn json_rejects_anti_hermitian() {
        let text = r#"{"N":2,"repr":"fourier","mean":[[[0,0],[0,1]],[[0,1],[0,0]]]}"#;
        match MatrixPotential::from_json_str(text) {
            Err(PotentialError::NotHermitian { row, col, .. }) => assert_eq!((row, col), (1, 0)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_round_trip() {
        let v = MatrixPotential::fourier(
            diag(&[0.0, 1.0]),
            vec![(1, diag(&[0.2, 0.1]))],
            vec![(2, CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, 0.3), c(0.0, -0.3), c(0.0, 0.0)]))],
        )
        .unwrap();
        let back = MatrixPotential::from_json_str(&v.to_json_value().to_string()).unwrap();
        assert_eq!(v, back);
    }

    #[test]
    fn sine_reflection() {
        let v = MatrixPotential::fourier(zeros(2, 2), vec![], vec![(1, diag(&[1.0, 0.0]))]).unwrap();
        let r = v.reflect();
        assert!(max_abs(&(r.fourier_coefficient(CoefficientKind::Sin, 1).unwrap().matrix + diag(&[1.0, 0.0]))) == 0.0);
        for x in [0.1, 0.37, 0.8] {
            assert!(max_abs(&(r.eval_unchecked(x) - v.eval_unchecked(1.0 - x))) < 1e-14);
        }
    }
}
