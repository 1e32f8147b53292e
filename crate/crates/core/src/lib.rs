//! Direct and inverse spectral quantities for the vector Sturm–Liouville
//! operator `−ψ″ + V(x)ψ` on `[0,1]` with Dirichlet conditions, where `V` is
//! an `N×N` Hermitian matrix potential.
//!
//! The crate is organised bottom-up:
//!
//! - [`potential`]: matrix potentials, Fourier data, mean diagonalisation.
//! - [`matode`]: adaptive integration of the fundamental solutions, their
//!   λ-derivatives and Gram integrals.
//! - [`spectrum`]: certified eigenvalue location via the argument principle.
//! - [`spectraldata`]: normalising matrices, residues, double indexing and
//!   asymptotic checks.
//! - [`weylm`]: the Weyl–Titchmarsh function, direct and from spectral data.
//! - [`inversekit`]: reference frames, tilde data, modified shell data,
//!   Fréchet kernels and the finite admissibility test.
//! - [`scalartools`]: scalar conversions, Hadamard products and discrete
//!   Hilbert transforms.
//!
//! Heavy loops (contour nodes, eigenvalue windows, residues) run through
//! [`exec::par_map`], which uses rayon when the `parallel` feature is on and
//! can be forced sequential at runtime.

pub mod exec;
pub mod inversekit;
pub mod linalg;
pub mod matode;
pub mod potential;
pub mod scalartools;
pub mod serial;
pub mod spectraldata;
pub mod spectrum;
pub mod weylm;

mod error;

pub use error::{Error, EXIT_CODES};
pub use linalg::CMat;
pub use num_complex::Complex64;
