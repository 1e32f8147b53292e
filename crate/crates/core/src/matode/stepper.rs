//! Adaptive driver for the embedded pair, shared by both formulations.

use num_complex::Complex64;

use super::tableau::{A, B_HIGH, B_LOW, C as CNODES, ORDER, STAGES};
use super::{MatodeError, OdeConfig};

pub(super) trait Rhs {
    fn eval(&mut self, x: f64, y: &[Complex64], dy: &mut [Complex64]);
}

/// Error-norm layout: block pairs with the first block weighted by `weight`,
/// plus standalone (Gram) blocks. All blocks are `nn` long. Errors are
/// relative to each block's size, floored by the natural magnitude of a
/// level-`d` λ-derivative, `|φ|·(x/2√|λ|)ᵈ`, so blocks that start at zero do
/// not demand impossible relative accuracy.
pub(super) struct Control {
    /// `(first, second, derivative level)`; the first entry must be level 0.
    pub pairs: Vec<(usize, usize, u32)>,
    pub singles: Vec<usize>,
    pub nn: usize,
    pub weight: f64,
    pub cap: f64,
}

struct Sparse {
    rows: Vec<Vec<(usize, f64)>>,
    high: Vec<(usize, f64)>,
    err: Vec<(usize, f64)>,
}

fn sparse_tableau() -> &'static Sparse {
    use std::sync::OnceLock;
    static T: OnceLock<Sparse> = OnceLock::new();
    T.get_or_init(|| {
        let rows = (0..STAGES).map(|i| (0..i).filter(|&j| A[i][j] != 0.0).map(|j| (j, A[i][j])).collect()).collect();
        let high = (0..STAGES).filter(|&j| B_HIGH[j] != 0.0).map(|j| (j, B_HIGH[j])).collect();
        let err = (0..STAGES).filter(|&j| B_HIGH[j] != B_LOW[j]).map(|j| (j, B_HIGH[j] - B_LOW[j])).collect();
        Sparse { rows, high, err }
    })
}

#[inline]
fn axpy(dst: &mut [Complex64], src: &[Complex64], f: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        d.re += s.re * f;
        d.im += s.im * f;
    }
}

/// Integrate from 0 through every stop in increasing order, calling
/// `at_stop(i, y)` on arrival at `stops[i]`. Returns (steps, summed local error).
pub(super) fn drive<R: Rhs, F: FnMut(usize, &[Complex64])>(
    rhs: &mut R,
    y: &mut Vec<Complex64>,
    stops: &[f64],
    cfg: &OdeConfig,
    ctl: &Control,
    mut at_stop: F,
) -> Result<(usize, f64), MatodeError> {
    let len = y.len();
    let tab = sparse_tableau();
    let zero = Complex64::new(0.0, 0.0);
    let mut k = vec![vec![zero; len]; STAGES];
    let mut ys = vec![zero; len];
    let mut ynew = vec![zero; len];
    let mut errv = vec![zero; len];
    let w2 = ctl.weight * ctl.weight;
    let nn = ctl.nn;

    let mut x = 0.0f64;
    let mut h = 0.1 * ctl.cap;
    let mut steps = 0usize;
    let mut est = 0.0;

    for (si, &stop) in stops.iter().enumerate() {
        while stop - x > 1e-15 {
            let mut hh = h.min(ctl.cap);
            let land = x + hh >= stop - 1e-14;
            if land {
                hh = stop - x;
            }
            if steps >= cfg.max_steps {
                return Err(MatodeError::StepLimitExceeded(cfg.max_steps));
            }
            steps += 1;
            for i in 0..STAGES {
                ys.copy_from_slice(y);
                for &(j, a) in &tab.rows[i] {
                    axpy(&mut ys, &k[j], hh * a);
                }
                rhs.eval(x + CNODES[i] * hh, &ys, &mut k[i]);
            }
            ynew.copy_from_slice(y);
            for &(j, b) in &tab.high {
                axpy(&mut ynew, &k[j], hh * b);
            }
            errv.fill(zero);
            for &(j, b) in &tab.err {
                axpy(&mut errv, &k[j], hh * b);
            }
            let mut ratio2: f64 = 0.0;
            let xr = (x + hh) / (2.0 * ctl.weight);
            let mut base = 0.0;
            for &(po, qo, lvl) in &ctl.pairs {
                let (mut num, mut d0, mut d1) = (0.0, 0.0, 0.0);
                for t in 0..nn {
                    num += w2 * errv[po + t].norm_sqr() + errv[qo + t].norm_sqr();
                    d0 += w2 * y[po + t].norm_sqr() + y[qo + t].norm_sqr();
                    d1 += w2 * ynew[po + t].norm_sqr() + ynew[qo + t].norm_sqr();
                }
                if lvl == 0 && base == 0.0 {
                    base = d0.max(d1);
                }
                let floor = base * xr.powi(2 * lvl as i32);
                ratio2 = ratio2.max(num / d0.max(d1).max(floor).max(1e-300));
            }
            for &go in &ctl.singles {
                let (mut num, mut d0, mut d1) = (0.0, 0.0, 0.0);
                for t in 0..nn {
                    num += errv[go + t].norm_sqr();
                    d0 += y[go + t].norm_sqr();
                    d1 += ynew[go + t].norm_sqr();
                }
                let floor = ((x + hh) * base / w2).powi(2);
                ratio2 = ratio2.max(num / d0.max(d1).max(floor).max(1e-300));
            }
            let err = ratio2.sqrt() / cfg.rel_tol;
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-1.0 / ORDER as f64)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                std::mem::swap(y, &mut ynew);
                x = if land { stop } else { x + hh };
                est += err * cfg.rel_tol;
                if !land || hh * fac > h {
                    h = hh * fac;
                }
            } else {
                h = hh * fac;
                if h < 1e-14 {
                    return Err(MatodeError::ToleranceNotMet { x, h });
                }
            }
        }
        at_stop(si, y);
    }
    Ok((steps, est))
}
