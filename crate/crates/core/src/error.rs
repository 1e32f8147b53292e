//! Crate-level error with stable process exit codes.

use thiserror::Error;

use crate::inversekit::InverseError;
use crate::matode::MatodeError;
use crate::potential::PotentialError;
use crate::scalartools::ScalarError;
use crate::spectraldata::SpectralDataError;
use crate::spectrum::SpectrumError;
use crate::weylm::WeylError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Matode(#[from] MatodeError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    SpectralData(#[from] SpectralDataError),
    #[error(transparent)]
    Weyl(#[from] WeylError),
    #[error(transparent)]
    Inverse(#[from] InverseError),
    #[error(transparent)]
    Scalar(#[from] ScalarError),
}

/// Exit code of each error class, for `--help` texts.
pub const EXIT_CODES: [(i32, &str); 6] = [
    (1, "potential: unreadable or invalid potential file"),
    (2, "spectrum: eigenvalue location or counting failed"),
    (3, "spectral data: records, residues or checks failed"),
    (4, "scalar tools: invalid or inconsistent scalar sequences"),
    (5, "ODE integration or Weyl function evaluation failed"),
    (6, "inverse-problem toolkit: frame, tilde data or kernels failed"),
];

impl Error {
    /// Exit code of the innermost error class, so a spectrum failure met
    /// while assembling a dataset still exits with the spectrum code.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Potential(_) => 1,
            Error::Matode(_) | Error::Weyl(_) => 5,
            Error::Spectrum(e) => spectrum_code(e),
            Error::SpectralData(e) => data_code(e),
            Error::Scalar(_) => 4,
            Error::Inverse(e) => match e {
                InverseError::Spectrum(e) => spectrum_code(e),
                InverseError::SpectralData(e) => data_code(e),
                InverseError::Matode(_) => 5,
                InverseError::Potential(_) => 1,
                _ => 6,
            },
        }
    }
}

fn spectrum_code(e: &SpectrumError) -> i32 {
    match e {
        SpectrumError::Matode(_) => 5,
        _ => 2,
    }
}

fn data_code(e: &SpectralDataError) -> i32 {
    match e {
        SpectralDataError::Spectrum(e) => spectrum_code(e),
        SpectralDataError::Matode(_) => 5,
        SpectralDataError::Potential(_) => 1,
        _ => 3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn innermost_class_wins() {
        let e: Error = SpectralDataError::Spectrum(SpectrumError::NotSelfAdjoint).into();
        assert_eq!(e.exit_code(), 2);
        let e: Error = ScalarError::NotMonotone { n: 2 }.into();
        assert_eq!(e.exit_code(), 4);
        let e: Error = InverseError::DegenerateMean.into();
        assert_eq!(e.exit_code(), 6);
    }
}
