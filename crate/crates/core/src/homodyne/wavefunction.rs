use std::f64::consts::PI;

use crate::analytic::PhotonDistribution;
use crate::fock::DensityMatrix;

use super::HomodyneError;

/// Highest Fock number the quadrature wavefunctions are evaluated for.
pub const MAX_FOCK: usize = 32;

/// `ψ_0(x) … ψ_n_max(x)` with `ψ_0 = π^(-1/4) e^(−x²/2)` (vacuum variance 1/2),
/// by the stable three-term recurrence.
pub fn hermite_functions(n_max: usize, x: f64) -> Vec<f64> {
    let mut psi = Vec::with_capacity(n_max + 1);
    psi.push(PI.powf(-0.25) * (-0.5 * x * x).exp());
    if n_max >= 1 {
        psi.push(2f64.sqrt() * x * psi[0]);
    }
    for n in 1..n_max {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * x * psi[n] - (nf / (nf + 1.0)).sqrt() * psi[n - 1];
        psi.push(next);
    }
    psi
}

/// `|ψ_n(x)|²`.
pub fn fock_quadrature_pdf(n: usize, x: f64) -> Result<f64, HomodyneError> {
    if n > MAX_FOCK {
        return Err(HomodyneError::CutoffExceeded { n, max: MAX_FOCK });
    }
    Ok(hermite_functions(n, x)[n].powi(2))
}

/// Phase-independent density of a Fock-diagonal state, `Σ_n P_n |ψ_n(x)|²`.
pub fn mixture_pdf(dist: &PhotonDistribution, x: f64) -> f64 {
    let n_max = dist.max_photons().min(MAX_FOCK);
    let psi = hermite_functions(n_max, x);
    dist.probs().iter().zip(&psi).map(|(p, v)| p * v * v).sum()
}

/// `⟨x,θ|ρ|x,θ⟩ = Σ_mn ρ_mn e^(−i(m−n)θ) ψ_m(x) ψ_n(x)`.
pub fn quadrature_pdf(rho: &DensityMatrix, x: f64, theta: f64) -> f64 {
    let d = rho.dim();
    let psi = hermite_functions(d - 1, x);
    let m = rho.matrix();
    let mut p = 0.0;
    for a in 0..d {
        for b in 0..d {
            let phase = -((a as f64) - (b as f64)) * theta;
            let c = m[(a, b)];
            p += (c.re * phase.cos() - c.im * phase.sin()) * psi[a] * psi[b];
        }
    }
    p
}
