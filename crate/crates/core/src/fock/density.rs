use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::FockError;
use crate::analytic::PhotonDistribution;

pub(crate) const TRACE_TOL: f64 = 1e-10;
pub(crate) const HERMITIAN_TOL: f64 = 1e-10;
pub(crate) const EIGEN_TOL: f64 = 1e-10;

/// Density operator of one mode in the Fock basis `|0⟩ … |n_max⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    rho: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Validates trace, hermiticity and positivity.
    pub fn new(rho: DMatrix<Complex64>) -> Result<Self, FockError> {
        validate(&rho)?;
        Ok(Self { rho })
    }

    pub(crate) fn from_unchecked(rho: DMatrix<Complex64>) -> Self {
        Self { rho }
    }

    pub fn fock(n: usize, n_max: usize) -> Self {
        let mut rho = DMatrix::zeros(n_max + 1, n_max + 1);
        rho[(n, n)] = Complex64::new(1.0, 0.0);
        Self { rho }
    }

    pub fn diagonal(dist: &PhotonDistribution) -> Self {
        let d = dist.probs().len();
        let mut rho = DMatrix::zeros(d, d);
        for (n, &p) in dist.probs().iter().enumerate() {
            rho[(n, n)] = Complex64::new(p, 0.0);
        }
        Self { rho }
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn purity(&self) -> f64 {
        (&self.rho * &self.rho).trace().re
    }

    /// Largest off-diagonal magnitude.
    pub fn max_coherence(&self) -> f64 {
        let d = self.dim();
        let mut m: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    m = m.max(self.rho[(i, j)].norm());
                }
            }
        }
        m
    }

    pub fn to_json(&self) -> DensityJson {
        let d = self.dim();
        let mut real = Vec::with_capacity(d * d);
        let mut imag = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                real.push(self.rho[(i, j)].re);
                imag.push(self.rho[(i, j)].im);
            }
        }
        DensityJson {
            dimension: d,
            real,
            imag,
        }
    }

    pub fn from_json(json: &DensityJson) -> Result<Self, FockError> {
        let d = json.dimension;
        if json.real.len() != d * d || json.imag.len() != d * d {
            return Err(FockError::InvalidDensity(
                "array length does not match dimension".into(),
            ));
        }
        let rho = DMatrix::from_fn(d, d, |i, j| Complex64::new(json.real[i * d + j], json.imag[i * d + j]));
        Self::new(rho)
    }
}

/// Serialized form: row-major real and imaginary parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityJson {
    pub dimension: usize,
    pub real: Vec<f64>,
    pub imag: Vec<f64>,
}

/// Diagonal of a single-mode density matrix.
pub fn photon_distribution(rho: &DensityMatrix) -> PhotonDistribution {
    PhotonDistribution::from_raw((0..rho.dim()).map(|n| rho.rho[(n, n)].re).collect())
}

pub(crate) fn validate(rho: &DMatrix<Complex64>) -> Result<(), FockError> {
    if !rho.is_square() || rho.nrows() == 0 {
        return Err(FockError::InvalidDensity("matrix is not square".into()));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
        return Err(FockError::InvalidDensity(format!("trace = {tr}")));
    }
    let dev = (rho - rho.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
    if dev > HERMITIAN_TOL {
        return Err(FockError::InvalidDensity(format!(
            "not Hermitian (deviation {dev:.3e})"
        )));
    }
    let min = SymmetricEigen::new(rho.clone()).eigenvalues.min();
    if min < -EIGEN_TOL {
        return Err(FockError::InvalidDensity(format!("negative eigenvalue {min:.3e}")));
    }
    Ok(())
}
