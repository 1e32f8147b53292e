//! Local coordinates for the inverse problem near a diagonal reference
//! potential `V⋄ = diag(v₁₁, …, v_NN)`.
//!
//! The reference spectrum is the merged union of the scalar spectra, with
//! coincidences forming multiple levels `λ_α⋄`. For a nearby potential `V`
//! the level data are the isospectrality detector `Ã_α`, the continued
//! residue `B̃_α` and its factorisation `(C_α, E_α)`; simple shells are
//! repackaged as `Y_n = U_n S_n`. Derivatives at `V⋄` are inner products of
//! `W` entries with kernels built from scalar solutions.
//!
//! Level indices `alpha` are 0-based positions in [`ReferenceFrame::levels`];
//! shell indices `n` start at 1.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::exec;
use crate::linalg::{self, c, CMat};
use crate::matode::{self, MatodeError, OdeConfig, Want};
use crate::potential::{self, MatrixPotential, PotentialError};
use crate::spectraldata::{self, SpectralDataError, SpectralDataset};
use crate::spectrum::{self, SpectrumConfig, SpectrumError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InverseError {
    #[error("diagonal entries have coinciding means")]
    DegenerateMean,
    #[error("levels {a} and {b} are closer than the merge tolerance can resolve")]
    SpectraTooClose { a: f64, b: f64 },
    #[error("the reference frame holds fewer than two levels")]
    FrameTooSmall,
    #[error("no level {0} in the frame")]
    NoSuchLevel(usize),
    #[error("shell ({n},{j}) is missing from the frame or not simple")]
    NotSimpleShell { n: usize, j: usize },
    #[error("potential left the validated neighbourhood ({what}: cond {cond:e})")]
    OutOfNeighborhood { what: &'static str, cond: f64 },
    #[error("contour passes too close to an eigenvalue near λ = {at}")]
    ZeroOnContour { at: Complex64 },
    #[error("upper block of B̃ is singular (cond {cond:e})")]
    SingularUpperBlock { cond: f64 },
    #[error("C at level {alpha} is not positive ({value:e})")]
    NotPositive { alpha: usize, value: f64 },
    #[error("Y_n is singular")]
    SingularY,
    #[error("log series diverges: ‖U − I‖ = {norm}")]
    LogDivergent { norm: f64 },
    #[error("kernel ({j},{k}) is undefined at level {alpha}")]
    WrongIndexCombination { alpha: usize, j: usize, k: usize },
    #[error("direction has nonzero mean (max entry {0:e})")]
    MeanNotZero(f64),
    #[error("levels coincide; a limit variant is required")]
    CoincidentEigenvalues,
    #[error("Gram image has rank {rank}, expected {expected}")]
    RankDeficientGram { rank: usize, expected: usize },
    #[error("counting hypothesis violated: {0}")]
    CountingHypothesisViolated(String),
    #[error("truncated product did not stabilise at λ = {lambda}")]
    ProductNotConverged { lambda: f64 },
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    SpectralData(#[from] SpectralDataError),
    #[error(transparent)]
    Matode(#[from] MatodeError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

type Res<T> = Result<T, InverseError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameConfig {
    pub spectrum: SpectrumConfig,
    /// Integrator settings for every solve at a reference level.
    pub ode: OdeConfig,
    /// Relative gap below which two scalar eigenvalues form one level.
    pub coincide_tol: f64,
    /// Relative gaps in `[coincide_tol, ambiguous_tol)` are rejected.
    pub ambiguous_tol: f64,
    /// Conditioning guard standing in for the neighbourhood radius.
    pub cond_max: f64,
    /// Kernel grid subintervals.
    pub grid: usize,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            spectrum: SpectrumConfig::with_tol(1e-12),
            ode: OdeConfig::with_tol(1e-12),
            coincide_tol: 1e-9,
            ambiguous_tol: 1e-6,
            cond_max: 1e10,
            grid: 1024,
        }
    }
}

/// One reference level `λ_α⋄` with its channels `I(α)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Level {
    pub lambda: f64,
    pub k: usize,
    /// Sorted channels whose scalar spectrum contains the level.
    pub channels: Vec<usize>,
    /// `(channel, n)`: the level is the `n`-th eigenvalue of that channel.
    pub shells: Vec<(usize, usize)>,
}

/// Scalar solutions of one channel at one level, sampled on the kernel grid.
#[derive(Debug, Clone)]
struct Channel {
    chi: Vec<f64>,
    chi_dot: Vec<f64>,
    phi: Vec<f64>,
    dphi: Vec<f64>,
    phi_dot: Vec<f64>,
    dphi_dot: Vec<f64>,
    chi0: f64,
    dchi0: f64,
    chi_dot0: f64,
    chi_ddot0: f64,
}

impl Channel {
    /// `ξ = χ̇ − χ̈(0)/(2χ̇(0))·χ`.
    fn xi(&self) -> Vec<f64> {
        let r = self.chi_ddot0 / (2.0 * self.chi_dot0);
        self.chi_dot.iter().zip(&self.chi).map(|(d, x)| d - r * x).collect()
    }
}

#[derive(Debug)]
struct LevelSolutions {
    channels: Vec<Channel>,
}

#[derive(Debug, Clone)]
pub struct ReferenceFrame {
    pub dim: usize,
    pub diagonals: Vec<MatrixPotential>,
    pub v_diamond: MatrixPotential,
    pub means: Vec<f64>,
    /// Sorted eigenvalues of each `v_jj` up to the frame limit.
    pub scalar_spectra: Vec<Vec<f64>>,
    pub levels: Vec<Level>,
    /// Half the smallest gap between consecutive levels.
    pub d_diamond: f64,
    pub cfg: FrameConfig,
    grid: Vec<f64>,
    cache: Vec<OnceLock<Arc<LevelSolutions>>>,
}

impl ReferenceFrame {
    pub fn level(&self, alpha: usize) -> Res<&Level> {
        self.levels.get(alpha).ok_or(InverseError::NoSuchLevel(alpha))
    }

    /// Level holding the `n`-th eigenvalue of channel `j`.
    pub fn level_of(&self, n: usize, j: usize) -> Option<usize> {
        self.levels.iter().position(|l| l.shells.contains(&(j, n)))
    }

    /// Level of a simple shell `(n,j)`.
    pub fn shell_level(&self, n: usize, j: usize) -> Res<usize> {
        match self.level_of(n, j) {
            Some(a) if self.levels[a].k == 1 => Ok(a),
            _ => Err(InverseError::NotSimpleShell { n, j }),
        }
    }

    /// `I(α)` and its complement.
    pub fn index_sets(&self, alpha: usize) -> Res<(Vec<usize>, Vec<usize>)> {
        let l = self.level(alpha)?;
        let rest = (0..self.dim).filter(|s| !l.channels.contains(s)).collect();
        Ok((l.channels.clone(), rest))
    }

    /// Coordinate projectors `p_α⋄ : ℂᴺ → ℰ_α⋄` and `q_α⋄` as row selections.
    pub fn projectors(&self, alpha: usize) -> Res<(CMat, CMat)> {
        let (i, j) = self.index_sets(alpha)?;
        let eye = linalg::eye(self.dim);
        let all: Vec<usize> = (0..self.dim).collect();
        Ok((linalg::submatrix(&eye, &i, &all), linalg::submatrix(&eye, &j, &all)))
    }

    /// Kernel grid `tᵢ = i/grid`.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    fn solutions(&self, alpha: usize) -> Res<Arc<LevelSolutions>> {
        let cell = self.cache.get(alpha).ok_or(InverseError::NoSuchLevel(alpha))?;
        if let Some(s) = cell.get() {
            return Ok(s.clone());
        }
        let lam = c(self.levels[alpha].lambda, 0.0);
        let want = Want { lambda_derivs: true, second_derivs: true, gram: false };
        let rev: Vec<f64> = self.grid.iter().map(|t| 1.0 - t).collect();
        let chans = exec::try_par_map(&self.diagonals, |v| -> Res<Channel> {
            let left = matode::integrate(v, lam, &self.cfg.ode, want, &self.grid)?;
            let right = matode::integrate(&v.reflect(), lam, &self.cfg.ode, want, &rev)?;
            let m = self.grid.len();
            let e = |a: CMat| a[(0, 0)].re;
            let d = |a: Option<CMat>| a.expect("derivatives requested")[(0, 0)].re;
            Ok(Channel {
                chi: (0..m).map(|i| e(right.phi(i))).collect(),
                chi_dot: (0..m).map(|i| d(right.phi_deriv(i, 1))).collect(),
                phi: (0..m).map(|i| e(left.phi(i))).collect(),
                dphi: (0..m).map(|i| e(left.dphi(i))).collect(),
                phi_dot: (0..m).map(|i| d(left.phi_deriv(i, 1))).collect(),
                dphi_dot: (0..m).map(|i| d(left.dphi_deriv(i, 1))).collect(),
                chi0: e(right.phi(0)),
                dchi0: -e(right.dphi(0)),
                chi_dot0: d(right.phi_deriv(0, 1)),
                chi_ddot0: d(right.phi_deriv(0, 2)),
            })
        })?;
        let _ = cell.set(Arc::new(LevelSolutions { channels: chans }));
        Ok(cell.get().expect("just set").clone())
    }
}

/// Build the frame from scalar diagonal entries, using levels up to `lambda_max`.
///
/// The topmost computed level is dropped: its upper neighbour is not known,
/// so the contour radius could not be certified for it.
pub fn make_reference(diagonals: &[MatrixPotential], lambda_max: f64, cfg: &FrameConfig) -> Res<ReferenceFrame> {
    let v_diamond = MatrixPotential::from_diagonal(diagonals)?;
    let means: Vec<f64> = diagonals.iter().map(|v| v.mean()[(0, 0)].re).collect();
    for a in 0..means.len() {
        for b in a + 1..means.len() {
            if (means[a] - means[b]).abs() <= potential::GAP_MIN {
                return Err(InverseError::DegenerateMean);
            }
        }
    }
    let spectra = exec::try_par_map(diagonals, |v| spectrum::locate_all(v, lambda_max, &cfg.spectrum))?;
    let scalar_spectra: Vec<Vec<f64>> =
        spectra.iter().map(|s| s.locations.iter().map(|l| l.lambda).filter(|l| *l <= lambda_max).collect()).collect();

    let mut all: Vec<(f64, usize, usize)> = Vec::new();
    for (j, sp) in scalar_spectra.iter().enumerate() {
        all.extend(sp.iter().enumerate().map(|(i, l)| (*l, j, i + 1)));
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut levels: Vec<Level> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    for (l, j, n) in all {
        if let Some(last) = levels.last_mut() {
            let scale = l.abs().max(1.0);
            let gap = (l - last.lambda).abs();
            if gap < cfg.coincide_tol * scale {
                let s = sums.last_mut().expect("parallel to levels");
                *s += l;
                last.shells.push((j, n));
                last.k += 1;
                continue;
            }
            if gap < cfg.ambiguous_tol * scale {
                return Err(InverseError::SpectraTooClose { a: last.lambda, b: l });
            }
        }
        levels.push(Level { lambda: l, k: 1, channels: Vec::new(), shells: vec![(j, n)] });
        sums.push(l);
    }
    for (l, s) in levels.iter_mut().zip(&sums) {
        l.lambda = s / l.k as f64;
        l.channels = l.shells.iter().map(|(j, _)| *j).collect();
        l.channels.sort_unstable();
    }
    if levels.len() < 3 {
        return Err(InverseError::FrameTooSmall);
    }
    let d_diamond = 0.5 * levels.windows(2).map(|w| w[1].lambda - w[0].lambda).fold(f64::INFINITY, f64::min);
    levels.pop();
    let grid: Vec<f64> = (0..=cfg.grid).map(|i| i as f64 / cfg.grid as f64).collect();
    let cache = (0..levels.len()).map(|_| OnceLock::new()).collect();
    Ok(ReferenceFrame {
        dim: diagonals.len(),
        diagonals: diagonals.to_vec(),
        v_diamond,
        means,
        scalar_spectra,
        levels,
        d_diamond,
        cfg: *cfg,
        grid,
        cache,
    })
}

fn guarded_inverse(m: &CMat, what: &'static str, cond_max: f64) -> Res<CMat> {
    let k = linalg::cond(m);
    if !(k < cond_max) {
        return Err(InverseError::OutOfNeighborhood { what, cond: k });
    }
    linalg::inverse(m).ok_or(InverseError::OutOfNeighborhood { what, cond: f64::INFINITY })
}

/// `Ã_α(V) = A¹¹ − A¹²(A²²)⁻¹A²¹` with `A = χ(χ′)⁻¹(0, λ_α⋄, V)`.
pub fn tilde_a(frame: &ReferenceFrame, v: &MatrixPotential, alpha: usize) -> Res<CMat> {
    tilde_a_sharp(frame, &v.reflect(), alpha)
}

fn tilde_a_sharp(frame: &ReferenceFrame, v_sharp: &MatrixPotential, alpha: usize) -> Res<CMat> {
    let lam = c(frame.level(alpha)?.lambda, 0.0);
    let e = matode::endpoint(v_sharp, lam, &frame.cfg.ode, Want::PLAIN)?;
    let dchi = -&e.q;
    let a = &e.p * guarded_inverse(&dchi, "χ′(0)", frame.cfg.cond_max)?;
    let (i, j) = frame.index_sets(alpha)?;
    let a11 = linalg::submatrix(&a, &i, &i);
    if j.is_empty() {
        return Ok(a11);
    }
    let a12 = linalg::submatrix(&a, &i, &j);
    let a21 = linalg::submatrix(&a, &j, &i);
    let a22 = linalg::submatrix(&a, &j, &j);
    Ok(a11 - a12 * guarded_inverse(&a22, "A²²", frame.cfg.cond_max)? * a21)
}

/// `B̃_α(V) = −(1/2πi)∮ M(λ,V)dλ` over `|λ − λ_α⋄| = d⋄`.
pub fn tilde_b(frame: &ReferenceFrame, v: &MatrixPotential, alpha: usize) -> Res<CMat> {
    tilde_b_sharp(frame, &v.reflect(), alpha)
}

fn tilde_b_sharp(frame: &ReferenceFrame, v_sharp: &MatrixPotential, alpha: usize) -> Res<CMat> {
    let lam = frame.level(alpha)?.lambda;
    spectraldata::residue_via_contour_sharp(v_sharp, c(lam, 0.0), frame.d_diamond, &frame.cfg.ode).map_err(|e| match e {
        SpectralDataError::ZeroOnContour { at } => InverseError::ZeroOnContour { at },
        other => other.into(),
    })
}

#[derive(Debug, Clone)]
pub struct FactorCe {
    /// `C = B̃¹¹` (`k×k`).
    pub c: CMat,
    /// `E = B̃²¹(B̃¹¹)⁻¹` (`(N−k)×k`).
    pub e: CMat,
    /// `max|[(p*+q*E)C(p+E*q)] − B̃|`.
    pub residual: f64,
}

pub fn factor_ce(frame: &ReferenceFrame, b_tilde: &CMat, alpha: usize) -> Res<FactorCe> {
    let (i, j) = frame.index_sets(alpha)?;
    let cm = linalg::submatrix(b_tilde, &i, &i);
    let k = linalg::cond(&cm);
    if !(k < frame.cfg.cond_max) {
        return Err(InverseError::SingularUpperBlock { cond: k });
    }
    let cinv = linalg::inverse(&cm).ok_or(InverseError::SingularUpperBlock { cond: f64::INFINITY })?;
    let e = linalg::submatrix(b_tilde, &j, &i) * cinv;
    let (p, q) = frame.projectors(alpha)?;
    let left = p.adjoint() + q.adjoint() * &e;
    let rebuilt = &left * &cm * left.adjoint();
    let residual = linalg::max_abs(&(rebuilt - b_tilde));
    Ok(FactorCe { c: cm, e, residual })
}

/// All level coordinates of `V` at one level.
#[derive(Debug, Clone)]
pub struct TildeData {
    pub alpha: usize,
    pub a_tilde: CMat,
    pub b_tilde: CMat,
    pub c: CMat,
    pub e: CMat,
    pub factor_residual: f64,
    /// `max|B̃ − B̃*|`.
    pub hermitian_defect: f64,
    /// Numerical rank of `B̃` at relative threshold 1e-8.
    pub rank: usize,
}

pub fn tilde_data(frame: &ReferenceFrame, v: &MatrixPotential, alpha: usize) -> Res<TildeData> {
    tilde_data_sharp(frame, &v.reflect(), alpha)
}

fn tilde_data_sharp(frame: &ReferenceFrame, v_sharp: &MatrixPotential, alpha: usize) -> Res<TildeData> {
    let a_tilde = tilde_a_sharp(frame, v_sharp, alpha)?;
    let b_tilde = tilde_b_sharp(frame, v_sharp, alpha)?;
    let f = factor_ce(frame, &b_tilde, alpha)?;
    let s = linalg::singular_values(&b_tilde);
    let rank = s.iter().filter(|x| **x > 1e-8 * s[0]).count();
    let hermitian_defect = linalg::max_abs(&(&b_tilde - b_tilde.adjoint()));
    Ok(TildeData { alpha, a_tilde, b_tilde, c: f.c, e: f.e, factor_residual: f.residual, hermitian_defect, rank })
}

/// Analytic directional derivative against a central difference.
#[derive(Debug, Clone, Serialize)]
pub struct FdComparison {
    pub quantity: String,
    pub n: usize,
    pub eps: f64,
    /// `‖FD − analytic‖_max / ‖analytic‖_max` (absolute when the analytic value vanishes).
    pub rel_error: f64,
}

/// Compare [`frechet_shell`] with central differences of [`modified_shell`]
/// at `V⋄ ± εW`, for `Y, S, U` and every level's `Ã, C, E`.
pub fn frechet_fd_check(frame: &ReferenceFrame, n: usize, w: &MatrixPotential, eps: f64) -> Res<Vec<FdComparison>> {
    let an = frechet_shell(frame, n, w)?;
    let vp = frame.v_diamond.add_scaled(w, c(eps, 0.0))?;
    let vm = frame.v_diamond.add_scaled(w, c(-eps, 0.0))?;
    let (sp, sm) = (modified_shell(frame, &vp, n)?, modified_shell(frame, &vm, n)?);
    let mut out = Vec::new();
    let mut push = |name: String, plus: &CMat, minus: &CMat, exact: &CMat| {
        let fd = (plus - minus) * c(0.5 / eps, 0.0);
        let scale = linalg::max_abs(exact);
        let err = linalg::max_abs(&(fd - exact));
        out.push(FdComparison { quantity: name, n, eps, rel_error: if scale > 0.0 { err / scale } else { err } });
    };
    push("Y".into(), &sp.y, &sm.y, &an.d_y);
    push("S".into(), &sp.s, &sm.s, &an.d_s);
    push("U".into(), &sp.u, &sm.u, &an.d_u);
    for (j, lv) in an.levels.iter().enumerate() {
        let (p, m) = (&sp.levels[j], &sm.levels[j]);
        push(format!("A~[{}]", lv.alpha), &p.a_tilde, &m.a_tilde, &lv.d_a_tilde);
        push(format!("C[{}]", lv.alpha), &p.c, &m.c, &lv.d_c);
        push(format!("E[{}]", lv.alpha), &p.e, &m.e, &lv.d_e);
    }
    Ok(out)
}

fn shell_weight(n: usize) -> f64 {
    2.0 * PI * PI * (n * n) as f64
}

/// Modified data of one simple shell.
#[derive(Debug, Clone)]
pub struct ModifiedShellData {
    pub n: usize,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    /// Columns `e_{n,j}` with `⟨e_{n,j}, e_j⟩ = 1`.
    pub e: CMat,
    pub y: CMat,
    pub u: CMat,
    pub s: CMat,
    /// `(−i log U_n, 2πn(S_n − I))`.
    pub phi2: (CMat, CMat),
    /// `Σ_j B̃_{n,j}`.
    pub b_shell: CMat,
    pub levels: Vec<TildeData>,
}

/// `log U` by its series in `U − I`.
pub fn log_unitary(u: &CMat) -> Res<CMat> {
    let n = u.nrows();
    let x = u - linalg::eye(n);
    let norm = linalg::op_norm(&x);
    if !(norm < 1.0) {
        return Err(InverseError::LogDivergent { norm });
    }
    let mut sum = linalg::zeros(n, n);
    let mut pow = x.clone();
    for m in 1..=4000 {
        let term = &pow * c(if m % 2 == 1 { 1.0 } else { -1.0 } / m as f64, 0.0);
        sum += &term;
        if linalg::max_abs(&term) < 1e-17 * linalg::max_abs(&sum).max(1.0) {
            break;
        }
        pow = &pow * &x;
    }
    Ok(sum)
}

pub fn modified_shell(frame: &ReferenceFrame, v: &MatrixPotential, n: usize) -> Res<ModifiedShellData> {
    let dim = frame.dim;
    let alphas: Vec<usize> = (0..dim).map(|j| frame.shell_level(n, j)).collect::<Res<_>>()?;
    let v_sharp = v.reflect();
    let levels = exec::try_par_map(&alphas, |a| tilde_data_sharp(frame, &v_sharp, *a))?;
    let w = shell_weight(n);
    let mut a = Vec::with_capacity(dim);
    let mut cs = Vec::with_capacity(dim);
    let mut e = linalg::zeros(dim, dim);
    let mut y = linalg::zeros(dim, dim);
    let mut b_shell = linalg::zeros(dim, dim);
    for (j, td) in levels.iter().enumerate() {
        let (_, rest) = frame.index_sets(alphas[j])?;
        let aj = w * td.a_tilde[(0, 0)].re;
        let cval = td.c[(0, 0)].re;
        if !(cval > 0.0) {
            return Err(InverseError::NotPositive { alpha: alphas[j], value: cval });
        }
        let cj = (cval / w).sqrt();
        e[(j, j)] = c(1.0, 0.0);
        for (r, &row) in rest.iter().enumerate() {
            e[(row, j)] = td.e[(r, 0)];
        }
        let ph = Complex64::from_polar(cj, aj);
        for r in 0..dim {
            y[(r, j)] = e[(r, j)] * ph;
        }
        a.push(aj);
        cs.push(cj);
        b_shell += &td.b_tilde;
    }
    let sv = linalg::singular_values(&y);
    if !(sv[dim - 1] > 1e-12 * sv[0]) {
        return Err(InverseError::SingularY);
    }
    let (u, s) = linalg::polar(&y);
    let log_u = log_unitary(&u)?;
    let phi2 = (log_u * c(0.0, -1.0), (&s - linalg::eye(dim)) * c(2.0 * PI * n as f64, 0.0));
    Ok(ModifiedShellData { n, a, c: cs, e, y, u, s, phi2, b_shell, levels })
}

/// Which of the two kernel formulas applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KernelKind {
    /// Both channels contain the level: `u` and `ũ` are defined.
    Shared,
    /// Only channel `k` contains the level; `u` feeds `dE`.
    Coupling,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradientKernel {
    pub alpha: usize,
    pub j: usize,
    pub k: usize,
    pub kind: KernelKind,
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub u_tilde: Option<Vec<f64>>,
}

impl GradientKernel {
    /// CSV with columns `t,u,u_tilde`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,u,u_tilde\n");
        for (i, t) in self.t.iter().enumerate() {
            let ut = self.u_tilde.as_ref().map(|v| format!("{:.17e}", v[i])).unwrap_or_default();
            out.push_str(&format!("{:.17e},{:.17e},{}\n", t, self.u[i], ut));
        }
        out
    }
}

pub fn gradient_kernel(frame: &ReferenceFrame, alpha: usize, j: usize, k: usize) -> Res<GradientKernel> {
    let (inside, _) = frame.index_sets(alpha)?;
    if j >= frame.dim || k >= frame.dim || !inside.contains(&k) {
        return Err(InverseError::WrongIndexCombination { alpha, j, k });
    }
    let sol = frame.solutions(alpha)?;
    let (cj, ck) = (&sol.channels[j], &sol.channels[k]);
    let prod: Vec<f64> = cj.chi.iter().zip(&ck.chi).map(|(a, b)| a * b).collect();
    let t = frame.grid.clone();
    if inside.contains(&j) {
        let s = 1.0 / (cj.dchi0 * ck.dchi0);
        let st = 1.0 / (cj.chi_dot0 * ck.chi_dot0);
        let (xj, xk) = (cj.xi(), ck.xi());
        let ut = (0..t.len()).map(|i| st * (xj[i] * ck.chi[i] + cj.chi[i] * xk[i])).collect();
        Ok(GradientKernel { alpha, j, k, kind: KernelKind::Shared, t, u: prod.iter().map(|p| s * p).collect(), u_tilde: Some(ut) })
    } else {
        let s = -1.0 / (cj.chi0 * ck.dchi0);
        Ok(GradientKernel { alpha, j, k, kind: KernelKind::Coupling, t, u: prod.iter().map(|p| s * p).collect(), u_tilde: None })
    }
}

fn simpson_weights(m: usize) -> Vec<f64> {
    let h = 1.0 / m as f64;
    (0..=m)
        .map(|i| {
            let w = if i == 0 || i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            w * h / 3.0
        })
        .collect()
}

fn inner(w: &[f64], f: &[Complex64], u: &[f64]) -> Complex64 {
    w.iter().zip(f).zip(u).map(|((a, b), c)| b * (a * c)).sum()
}

/// Directional derivatives of the level coordinates at `V⋄`.
#[derive(Debug, Clone)]
pub struct LevelDerivative {
    pub alpha: usize,
    pub d_a_tilde: CMat,
    pub d_c: CMat,
    pub d_e: CMat,
}

/// Directional derivatives of the shell matrices at `V⋄`.
#[derive(Debug, Clone)]
pub struct ShellDerivative {
    pub n: usize,
    pub levels: Vec<LevelDerivative>,
    pub d_y: CMat,
    pub d_s: CMat,
    pub d_u: CMat,
}

fn direction_samples(frame: &ReferenceFrame, w: &MatrixPotential) -> Res<Vec<CMat>> {
    if w.dim() != frame.dim {
        return Err(PotentialError::Dimension(format!("direction is {}×{}, frame is {}", w.dim(), w.dim(), frame.dim)).into());
    }
    let mean = linalg::max_abs(&w.mean());
    if mean > 1e-10 {
        return Err(InverseError::MeanNotZero(mean));
    }
    Ok(frame.grid.iter().map(|t| w.eval_unchecked(*t)).collect())
}

fn entry(samples: &[CMat], j: usize, k: usize) -> Vec<Complex64> {
    samples.iter().map(|m| m[(j, k)]).collect()
}

fn level_derivative(frame: &ReferenceFrame, alpha: usize, ws: &[CMat]) -> Res<LevelDerivative> {
    let (inside, rest) = frame.index_sets(alpha)?;
    let q = simpson_weights(frame.cfg.grid);
    let k = inside.len();
    let mut d_a = linalg::zeros(k, k);
    let mut d_c = linalg::zeros(k, k);
    for (a, &j) in inside.iter().enumerate() {
        for (b, &l) in inside.iter().enumerate() {
            let g = gradient_kernel(frame, alpha, j, l)?;
            let f = entry(ws, j, l);
            d_a[(a, b)] = inner(&q, &f, &g.u);
            d_c[(a, b)] = inner(&q, &f, g.u_tilde.as_ref().expect("shared kernel"));
        }
    }
    let mut d_e = linalg::zeros(rest.len(), k);
    for (r, &j) in rest.iter().enumerate() {
        for (b, &l) in inside.iter().enumerate() {
            let g = gradient_kernel(frame, alpha, j, l)?;
            d_e[(r, b)] = inner(&q, &entry(ws, j, l), &g.u);
        }
    }
    Ok(LevelDerivative { alpha, d_a_tilde: d_a, d_c, d_e })
}

/// `(dÃ_α)W`, `(dC_α)W`, `(dE_α)W` for a mean-zero direction `W`.
pub fn frechet_level(frame: &ReferenceFrame, alpha: usize, w: &MatrixPotential) -> Res<LevelDerivative> {
    let ws = direction_samples(frame, w)?;
    level_derivative(frame, alpha, &ws)
}

/// `(dY_n)W`, `(dS_n)W`, `(dU_n)W` for a mean-zero direction `W`.
///
/// At a general diagonal frame `Y_n(V⋄) = diag(c_j)` rather than `I`, and
/// the polar split is solved entrywise: `dY = dU·D + dS`.
pub fn frechet_shell(frame: &ReferenceFrame, n: usize, w: &MatrixPotential) -> Res<ShellDerivative> {
    let dim = frame.dim;
    let ws = direction_samples(frame, w)?;
    let alphas: Vec<usize> = (0..dim).map(|j| frame.shell_level(n, j)).collect::<Res<_>>()?;
    let levels: Vec<LevelDerivative> = alphas.iter().map(|a| level_derivative(frame, *a, &ws)).collect::<Res<_>>()?;
    let wt = shell_weight(n);
    let mut cs = vec![0.0; dim];
    let mut d_y = linalg::zeros(dim, dim);
    for j in 0..dim {
        let sol = frame.solutions(alphas[j])?;
        let ch = &sol.channels[j];
        // Reference residue of a diagonal potential: −χ′(0)/χ̇(0).
        let cval = -ch.dchi0 / ch.chi_dot0;
        let cj = (cval / wt).sqrt();
        cs[j] = cj;
        let lv = &levels[j];
        d_y[(j, j)] = lv.d_c[(0, 0)] / (2.0 * wt * cj) + c(0.0, wt * cj) * lv.d_a_tilde[(0, 0)];
        let (_, rest) = frame.index_sets(alphas[j])?;
        for (r, &row) in rest.iter().enumerate() {
            d_y[(row, j)] = lv.d_e[(r, 0)] * cj;
        }
    }
    let mut d_u = linalg::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            d_u[(i, j)] = (d_y[(i, j)] - d_y[(j, i)].conj()) / (cs[i] + cs[j]);
        }
    }
    let mut dd = linalg::zeros(dim, dim);
    for j in 0..dim {
        dd[(j, j)] = c(cs[j], 0.0);
    }
    let d_s = &d_y - &d_u * dd;
    Ok(ShellDerivative { n, levels, d_y, d_s, d_u })
}

/// Which λ-derivatives enter the pairing `⟨χ_α^j χ_α^k, [φ_β^j φ_β^k]′⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BiorthoVariant {
    Plain,
    /// `χχ` replaced by `∂_λ(χ^jχ^k)`.
    ChiDot,
    /// `φφ` replaced by `∂_λ(φ^jφ^k)`.
    PhiDot,
    BothDot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiorthoCheck {
    pub left: f64,
    pub right: f64,
    pub residual: f64,
}

/// Both sides of the product-Wronskian identity
/// `⟨χ_α^jχ_α^k, [φ_β^jφ_β^k]′⟩ = ([φ^jφ^k](1,λ_β) − [χ^jχ^k](0,λ_α)) / (2(λ_α − λ_β))`
/// and of its λ-derivatives.
///
/// The left side is Simpson quadrature on the stored solutions. With
/// `λ_α = λ_β` (allowed when `limit` is set) the right side is the diagonal
/// limit: writing `h(λ) = [χ^jχ^k](0,λ) = [φ^jφ^k](1,λ)`, the plain value is
/// `−h′/2` and the single-derivative variants are `−h″/4`. The double
/// derivative would need `h‴` and is not offered.
pub fn biortho_identity_check(
    frame: &ReferenceFrame,
    alpha: usize,
    beta: usize,
    j: usize,
    k: usize,
    variant: BiorthoVariant,
    limit: bool,
) -> Res<BiorthoCheck> {
    if j >= frame.dim || k >= frame.dim {
        return Err(InverseError::WrongIndexCombination { alpha, j, k });
    }
    let la = frame.level(alpha)?.lambda;
    let lb = frame.level(beta)?.lambda;
    let same = alpha == beta;
    if same && (!limit || variant == BiorthoVariant::BothDot) {
        return Err(InverseError::CoincidentEigenvalues);
    }
    let sa = frame.solutions(alpha)?;
    let sb = frame.solutions(beta)?;
    let (aj, ak) = (&sa.channels[j], &sa.channels[k]);
    let (bj, bk) = (&sb.channels[j], &sb.channels[k]);
    let m = frame.grid.len();
    let chi_d = matches!(variant, BiorthoVariant::ChiDot | BiorthoVariant::BothDot);
    let phi_d = matches!(variant, BiorthoVariant::PhiDot | BiorthoVariant::BothDot);
    let q = simpson_weights(frame.cfg.grid);
    let mut left = 0.0;
    for i in 0..m {
        let f = if chi_d { aj.chi_dot[i] * ak.chi[i] + aj.chi[i] * ak.chi_dot[i] } else { aj.chi[i] * ak.chi[i] };
        let g = if phi_d {
            bj.dphi_dot[i] * bk.phi[i] + bj.phi_dot[i] * bk.dphi[i] + bj.dphi[i] * bk.phi_dot[i] + bj.phi[i] * bk.dphi_dot[i]
        } else {
            bj.dphi[i] * bk.phi[i] + bj.phi[i] * bk.dphi[i]
        };
        left += q[i] * f * g;
    }
    let last = m - 1;
    let right = if same {
        let h1 = aj.chi_dot0 * ak.chi0 + aj.chi0 * ak.chi_dot0;
        let h2 = aj.chi_ddot0 * ak.chi0 + 2.0 * aj.chi_dot0 * ak.chi_dot0 + aj.chi0 * ak.chi_ddot0;
        match variant {
            BiorthoVariant::Plain => -0.5 * h1,
            _ => -0.25 * h2,
        }
    } else {
        let f = bj.phi[last] * bk.phi[last];
        let fd = bj.phi_dot[last] * bk.phi[last] + bj.phi[last] * bk.phi_dot[last];
        let g = aj.chi0 * ak.chi0;
        let gd = aj.chi_dot0 * ak.chi0 + aj.chi0 * ak.chi_dot0;
        let d = la - lb;
        match variant {
            BiorthoVariant::Plain => (f - g) / (2.0 * d),
            BiorthoVariant::ChiDot => -gd / (2.0 * d) - (f - g) / (2.0 * d * d),
            BiorthoVariant::PhiDot => fd / (2.0 * d) + (f - g) / (2.0 * d * d),
            BiorthoVariant::BothDot => -(fd + gd) / (2.0 * d * d) - (f - g) / (d * d * d),
        }
    };
    Ok(BiorthoCheck { left, right, residual: (left - right).abs() })
}

#[derive(Debug, Clone)]
pub struct ForbiddenSubspace {
    /// Orthonormal basis of `[S_β(ℰ_β)]^⊥` in the dataset basis.
    pub basis: CMat,
    /// The same subspace from `[Ran χ̇(0,λ_β)P_β^♯]^⊥`.
    pub dual_basis: CMat,
    pub principal_angle: f64,
}

/// Forbidden subspace of record `beta`; `v` is in the original basis.
pub fn forbidden_subspace(v: &MatrixPotential, ds: &SpectralDataset, beta: usize, cfg: &SpectrumConfig) -> Res<ForbiddenSubspace> {
    let rec = ds.records.get(beta).ok_or(InverseError::NoSuchLevel(beta))?;
    let vd = v.conjugate_by(&ds.unitary);
    let lam = c(rec.lambda, 0.0);
    let k = rec.k;
    let left = matode::endpoint(&vd, lam, &cfg.ode, Want { gram: true, ..Want::PLAIN })?;
    let s = left.gram.expect("gram requested");
    let image = &s * &rec.h;
    let rank_of = |m: &CMat| {
        let sv = linalg::singular_values(m);
        sv.iter().filter(|x| **x > 1e-8 * sv[0]).count()
    };
    let r = rank_of(&image);
    if r != k {
        return Err(InverseError::RankDeficientGram { rank: r, expected: k });
    }
    let basis = linalg::complement_basis(&image, k);
    let right = matode::endpoint(&vd.reflect(), lam, &cfg.ode, Want::DERIVS)?;
    let (ks, hs) = spectrum::kernel_of(&right.p, rec.lambda, cfg.sv_threshold)?;
    let xi = right.p_dot.expect("derivatives requested") * hs;
    let rx = rank_of(&xi);
    if ks != k || rx != k {
        return Err(InverseError::RankDeficientGram { rank: rx.min(ks), expected: k });
    }
    let dual_basis = linalg::complement_basis(&xi, k);
    let principal_angle = linalg::max_principal_angle(&basis, &dual_basis);
    Ok(ForbiddenSubspace { basis, dual_basis, principal_angle })
}

/// Data for the finitely-perturbed admissibility test.
///
/// Outside the exceptional set every eigenvalue carries a coordinate
/// projector; `regular` lists those eigenvalues per channel (a multiple one
/// appears once per channel). Each channel has lost the same number `m` of
/// points to the exceptional set, which may hold more than `m` points when
/// their ranks are below `N`. Beyond the listed range channel `j` continues
/// as `π²(i+1+m)² + tail_shift[j]` for its `i`-th point (0-based).
#[derive(Debug, Clone)]
pub struct ExceptionalSet {
    pub dim: usize,
    pub exceptional: Vec<(f64, CMat)>,
    pub regular: Vec<Vec<f64>>,
    pub tail_shift: Vec<f64>,
}

impl ExceptionalSet {
    /// Reference frame levels with some of them replaced.
    pub fn from_frame(frame: &ReferenceFrame, replaced: &[(usize, CMat)]) -> Res<Self> {
        let mut regular = vec![Vec::new(); frame.dim];
        for (a, l) in frame.levels.iter().enumerate() {
            if replaced.iter().all(|(r, _)| *r != a) {
                for &j in &l.channels {
                    regular[j].push(l.lambda);
                }
            }
        }
        let exceptional = replaced.iter().map(|(a, p)| Ok((frame.level(*a)?.lambda, p.clone()))).collect::<Res<_>>()?;
        Ok(ExceptionalSet { dim: frame.dim, exceptional, regular, tail_shift: frame.means.clone() })
    }

    /// Dataset records with some of them replaced. Every other record must
    /// carry a coordinate projector in the dataset basis.
    pub fn from_dataset(ds: &SpectralDataset, replaced: &[(usize, CMat)]) -> Res<Self> {
        let mut regular = vec![Vec::new(); ds.dim];
        for (i, r) in ds.records.iter().enumerate() {
            if replaced.iter().any(|(a, _)| *a == i) {
                continue;
            }
            for j in 0..ds.dim {
                let d = r.p[(j, j)].re;
                if d > 0.5 {
                    regular[j].push(r.lambda);
                }
            }
            let coord = (0..ds.dim).map(|j| if r.p[(j, j)].re > 0.5 { 1.0 } else { 0.0 }).collect::<Vec<_>>();
            if linalg::max_abs(&(&r.p - linalg::diag(&coord))) > 1e-6 {
                return Err(InverseError::CountingHypothesisViolated(format!("record {i} has a non-coordinate projector")));
            }
        }
        let exceptional = replaced
            .iter()
            .map(|(a, p)| ds.records.get(*a).map(|r| (r.lambda, p.clone())).ok_or(InverseError::NoSuchLevel(*a)))
            .collect::<Res<_>>()?;
        Ok(ExceptionalSet { dim: ds.dim, exceptional, regular, tail_shift: ds.v0.clone() })
    }

    /// Whether the replacement ranks add up to `Nm`.
    pub fn rank_sum_matches(&self, m: usize) -> bool {
        let total: f64 = self.exceptional.iter().map(|(_, p)| p.trace().re).sum();
        (total - (self.dim * m) as f64).abs() <= 1e-6
    }

    /// The number `m` of points each channel has lost: checks
    /// `#{λ ∈ A_j⁰ : λ < π²(n+½)² + v_j} = n − m` with one `m` for all channels
    /// over the upper half of the listed shells.
    pub fn validate(&self) -> Res<usize> {
        let p2 = PI * PI;
        let mut found: Option<usize> = None;
        for (j, list) in self.regular.iter().enumerate() {
            let top = list.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let shift = self.tail_shift[j];
            let bound = |n: usize| p2 * (n as f64 + 0.5).powi(2) + shift;
            let mut n_top = 0;
            while bound(n_top + 1) <= top {
                n_top += 1;
            }
            if n_top < 2 {
                return Err(InverseError::CountingHypothesisViolated(format!("channel {j} lists too few eigenvalues")));
            }
            for n in (n_top / 2).max(1)..=n_top {
                let count = list.iter().filter(|l| **l < bound(n)).count();
                let ok = count <= n && found.is_none_or(|m| count + m == n);
                if !ok {
                    let expected = found.map_or("at most n".to_string(), |m| (n - m).to_string());
                    return Err(InverseError::CountingHypothesisViolated(format!("channel {j}: {count} points below shell {n}, expected {expected}")));
                }
                found = Some(n - count);
            }
        }
        Ok(found.unwrap_or(0))
    }

    /// `f_j(λ) = Π_{α∈A_j⁰}(1 − λ/λ_α)` with the modelled tail, truncated at
    /// `K` factors plus the first-order correction `−λ Σ_{i>K} 1/λ_i`, and `K`
    /// doubled until two values agree to 1e-10.
    pub fn channel_factor(&self, j: usize, lambda: f64) -> Res<f64> {
        let m = self.validate()?;
        let mut list = self.regular[j].clone();
        list.sort_by(|a, b| a.total_cmp(b));
        let p2 = PI * PI;
        let shift = self.tail_shift[j];
        let point = |i: usize| if i < list.len() { list[i] } else { p2 * ((i + 1 + m) as f64).powi(2) + shift };
        // Σ_{k>K} 1/k² ≈ 1/(K + ½).
        let tail = |kk: usize| -lambda / p2 / ((kk + m) as f64 + 0.5);
        let mut kk = list.len().max(64);
        let mut prod = 1.0;
        for i in 0..kk {
            prod *= 1.0 - lambda / point(i);
        }
        let mut prev = prod * tail(kk).exp();
        while kk < 1 << 24 {
            for i in kk..2 * kk {
                prod *= 1.0 - lambda / point(i);
            }
            kk *= 2;
            let cur = prod * tail(kk).exp();
            if (cur - prev).abs() <= 1e-10 * cur.abs().max(1e-300) {
                return Ok(cur);
            }
            prev = cur;
        }
        Err(InverseError::ProductNotConverged { lambda })
    }
}

/// `Π_{n≥1}(1 − λ/(π²n² + v))` with the factors at `removed` divided out,
/// in closed form. A removed factor that vanishes at `λ` is replaced by the
/// derivative of the vanishing product (its analytic limit).
pub fn free_channel_factor(lambda: f64, shift: f64, removed: &[f64]) -> f64 {
    let mu = lambda - shift;
    let norm = matode::sinc_sqrt(c(-shift, 0.0)).re;
    let mut denom = 1.0;
    let mut vanishing = false;
    for &r in removed {
        if (lambda - r).abs() <= 1e-12 * r.abs().max(1.0) {
            vanishing = true;
            denom *= -1.0 / r;
        } else {
            denom *= 1.0 - lambda / r;
        }
    }
    let top = if vanishing { sinc_sqrt_derivative(mu) } else { matode::sinc_sqrt(c(mu, 0.0)).re };
    top / norm / denom
}

/// `d/dμ (sin√μ/√μ)`.
fn sinc_sqrt_derivative(mu: f64) -> f64 {
    if mu.abs() < 1e-3 {
        return -1.0 / 6.0 + mu / 60.0 - mu * mu / 1680.0;
    }
    let s = c(mu, 0.0).sqrt();
    ((s * s.cos() - s.sin()) / (s * s * s * 2.0)).re
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionC {
    pub t: Vec<Vec<[f64; 2]>>,
    pub holds: bool,
    pub min_eig: f64,
    /// `Σ rank P_α = Nm`; a mismatch is reported, not raised.
    pub rank_sum_matches: bool,
    /// `F(λ_α)` diagonals per exceptional point.
    #[serde(skip)]
    pub factors: Vec<Vec<f64>>,
    #[serde(skip)]
    pub matrix: CMat,
}

impl ConditionC {
    /// `|y*Ty − Σ_α |P_α F(λ_α) Q(λ_α)|²|` relative to the larger side, where
    /// `Q(λ) = Σ_p λᵖ y_p`.
    pub fn quadratic_form_gap(&self, set: &ExceptionalSet, y: &[Complex64]) -> f64 {
        let n = set.dim;
        let m = self.matrix.nrows() / n.max(1);
        let yv = CMat::from_column_slice(n * m, 1, y);
        let lhs = (yv.adjoint() * &self.matrix * &yv)[(0, 0)].re;
        let mut rhs = 0.0;
        for (a, (lam, p)) in set.exceptional.iter().enumerate() {
            let mut qv = linalg::zeros(n, 1);
            for pw in 0..m {
                for s in 0..n {
                    qv[(s, 0)] += y[pw * n + s] * lam.powi(pw as i32);
                }
            }
            for s in 0..n {
                qv[(s, 0)] *= self.factors[a][s];
            }
            rhs += (p * qv).norm_squared();
        }
        (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300)
    }
}

/// Block Hankel matrix `𝒯 = (T_{p+q})` with `T_k = Σ_{α∈A} λ_αᵏ F P_α F`;
/// the collection is admissible iff `𝒯 > 0`, decided at
/// `min eig > pd_tol·tr 𝒯/(Nm)`.
pub fn condition_c_finite(set: &ExceptionalSet, pd_tol: f64) -> Res<ConditionC> {
    let m = set.validate()?;
    let n = set.dim;
    if m == 0 {
        return Err(InverseError::CountingHypothesisViolated("no channel has lost a point".into()));
    }
    let factors: Vec<Vec<f64>> =
        set.exceptional.iter().map(|(lam, _)| (0..n).map(|j| set.channel_factor(j, *lam)).collect::<Res<_>>()).collect::<Res<_>>()?;
    let mut tk = vec![linalg::zeros(n, n); 2 * m - 1];
    for (a, (lam, p)) in set.exceptional.iter().enumerate() {
        let f = linalg::diag(&factors[a]);
        let fpf = &f * p * &f;
        for (k, t) in tk.iter_mut().enumerate() {
            *t += &fpf * c(lam.powi(k as i32), 0.0);
        }
    }
    let mut big = linalg::zeros(n * m, n * m);
    for p in 0..m {
        for q in 0..m {
            big.view_mut((p * n, q * n), (n, n)).copy_from(&tk[p + q]);
        }
    }
    let big = linalg::herm_part(&big);
    let (ev, _) = linalg::herm_eig(&big);
    let min_eig = ev[0];
    let trace = big.trace().re;
    let holds = min_eig > pd_tol * trace / (n * m) as f64;
    let t = (0..n * m).map(|r| (0..n * m).map(|s| [big[(r, s)].re, big[(r, s)].im]).collect()).collect();
    Ok(ConditionC { t, holds, min_eig, rank_sum_matches: set.rank_sum_matches(m), factors, matrix: big })
}
