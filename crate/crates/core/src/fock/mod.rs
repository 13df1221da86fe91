//! Truncated multimode Fock-space engine.
//!
//! A [`MultimodeState`] is a density operator over occupation tuples of `M` modes
//! (lexicographic order, total photon number `≤ n_max`). Its modes are fixed
//! complex combinations (the *frame*) of the real, orthonormal functions held by
//! a [`ModeRegister`], so arbitrary passive basis changes stay exact while the
//! register itself only ever stores real mode functions.
//!
//! Loss never increases photon number and passive transformations conserve it,
//! so the cutoff is exact for every operation here.

mod basis;
mod density;

pub use basis::FockBasis;
pub use density::{photon_distribution, DensityJson, DensityMatrix};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

use crate::analytic::PhotonDistribution;
use crate::modes::{overlap, ModeError, ModeFunction};
pub use basis::binomial;
use density::{EIGEN_TOL, HERMITIAN_TOL};

/// Largest supported total-photon cutoff.
pub const MAX_N_MAX: usize = 4;
/// Residual L2 mass of a trigger mode outside the register that is still accepted.
pub const MAX_SPAN_DEFICIT: f64 = 1e-6;
pub const UNITARY_TOL: f64 = 1e-10;
const STATE_TRACE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error(transparent)]
    Mode(#[from] ModeError),
    #[error("register is not orthonormal: ⟨h{a}, h{b}⟩ = {value}")]
    NotOrthonormal { a: usize, b: usize, value: f64 },
    #[error("register is empty")]
    EmptyRegister,
    #[error("photon cutoff {0} outside 1..={MAX_N_MAX}")]
    InvalidCutoff(usize),
    #[error("register misses {deficit:.3e} of a trigger mode's L2 mass")]
    SpanDeficit { deficit: f64 },
    #[error("matrix is not unitary (max deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },
    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),
    #[error("transmission {0} outside [0, 1]")]
    InvalidEta(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Ordered orthonormal mode functions `h_1 … h_M` on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeRegister {
    modes: Vec<ModeFunction>,
    gram_tolerance: f64,
}

impl ModeRegister {
    pub const DEFAULT_GRAM_TOLERANCE: f64 = 1e-8;

    pub fn new(modes: Vec<ModeFunction>) -> Result<Self, FockError> {
        Self::with_tolerance(modes, Self::DEFAULT_GRAM_TOLERANCE)
    }

    pub fn with_tolerance(modes: Vec<ModeFunction>, gram_tolerance: f64) -> Result<Self, FockError> {
        if modes.is_empty() {
            return Err(FockError::EmptyRegister);
        }
        for a in 0..modes.len() {
            for b in a..modes.len() {
                let value = overlap(&modes[a], &modes[b])?;
                let expect = if a == b { 1.0 } else { 0.0 };
                if (value - expect).abs() > gram_tolerance {
                    return Err(FockError::NotOrthonormal { a, b, value });
                }
            }
        }
        Ok(Self { modes, gram_tolerance })
    }

    pub fn modes(&self) -> &[ModeFunction] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn gram_tolerance(&self) -> f64 {
        self.gram_tolerance
    }

    /// `⟨h_k, f⟩` for every register mode.
    pub fn coefficients(&self, f: &ModeFunction) -> Result<Vec<f64>, ModeError> {
        self.modes.iter().map(|h| overlap(h, f)).collect()
    }
}

/// Expansion of the two trigger modes over a register: `α_m = ⟨h_m, g1⟩`,
/// `β_n = ⟨h_n, g2⟩`, `C_mn = α_m β_n`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionCoeffs {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub c: DMatrix<f64>,
}

impl DecompositionCoeffs {
    /// Overlap of the trigger modes as seen inside the register, `Σ α_m β_m`.
    pub fn overlap(&self) -> f64 {
        self.alpha.iter().zip(&self.beta).map(|(a, b)| a * b).sum()
    }

    pub fn alpha_mass(&self) -> f64 {
        self.alpha.iter().map(|a| a * a).sum()
    }

    pub fn beta_mass(&self) -> f64 {
        self.beta.iter().map(|b| b * b).sum()
    }
}

pub fn decomposition_coeffs(
    g1: &ModeFunction,
    g2: &ModeFunction,
    register: &ModeRegister,
) -> Result<DecompositionCoeffs, FockError> {
    let alpha = register.coefficients(g1)?;
    let beta = register.coefficients(g2)?;
    let c = DMatrix::from_fn(alpha.len(), beta.len(), |m, n| alpha[m] * beta[n]);
    Ok(DecompositionCoeffs { alpha, beta, c })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultimodeState {
    register: ModeRegister,
    frame: DMatrix<Complex64>,
    basis: FockBasis,
    rho: DMatrix<Complex64>,
}

fn real_to_complex(v: &[f64]) -> Vec<Complex64> {
    v.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

fn check_cutoff(n_max: usize) -> Result<(), FockError> {
    if (1..=MAX_N_MAX).contains(&n_max) {
        Ok(())
    } else {
        Err(FockError::InvalidCutoff(n_max))
    }
}

impl MultimodeState {
    /// Pure state `|ψ⟩⟨ψ|` in the register's own modes; `amplitudes` follows the
    /// lexicographic tuple order of [`FockBasis`] and is normalized here.
    pub fn pure(register: ModeRegister, n_max: usize, amplitudes: &[Complex64]) -> Result<Self, FockError> {
        check_cutoff(n_max)?;
        let basis = FockBasis::new(register.len(), n_max);
        if amplitudes.len() != basis.dim() {
            return Err(FockError::DimensionMismatch {
                expected: basis.dim(),
                got: amplitudes.len(),
            });
        }
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(FockError::InvalidDensity("zero state vector".into()));
        }
        let psi = nalgebra::DVector::from_iterator(basis.dim(), amplitudes.iter().map(|a| a / norm));
        let rho = &psi * psi.adjoint();
        let m = register.len();
        Ok(Self {
            register,
            frame: DMatrix::identity(m, m),
            basis,
            rho,
        })
    }

    /// Mixed state in the register's own modes.
    pub fn from_density(register: ModeRegister, n_max: usize, rho: DMatrix<Complex64>) -> Result<Self, FockError> {
        check_cutoff(n_max)?;
        let basis = FockBasis::new(register.len(), n_max);
        if rho.nrows() != basis.dim() {
            return Err(FockError::DimensionMismatch {
                expected: basis.dim(),
                got: rho.nrows(),
            });
        }
        density::validate(&rho)?;
        let m = register.len();
        Ok(Self {
            register,
            frame: DMatrix::identity(m, m),
            basis,
            rho,
        })
    }

    pub fn register(&self) -> &ModeRegister {
        &self.register
    }

    /// Row `j` gives the state's mode `j` as `Σ_k frame[j,k]·h_k`.
    pub fn frame(&self) -> &DMatrix<Complex64> {
        &self.frame
    }

    pub fn basis(&self) -> &FockBasis {
        &self.basis
    }

    pub fn rho(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    pub fn modes(&self) -> usize {
        self.basis.modes()
    }

    pub fn n_max(&self) -> usize {
        self.basis.n_max()
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn purity(&self) -> f64 {
        (&self.rho * &self.rho).trace().re
    }

    /// Amplitude of a tuple if the state is pure (largest-eigenvector phase convention
    /// chosen so the largest amplitude is real positive).
    pub fn pure_amplitudes(&self) -> Option<Vec<Complex64>> {
        let eig = SymmetricEigen::new(self.rho.clone());
        let (k, &lmax) = eig.eigenvalues.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
        if (lmax - 1.0).abs() > 1e-9 {
            return None;
        }
        let v = eig.eigenvectors.column(k);
        let (_, big) = v.iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))?;
        let phase = big.conj() / big.norm();
        Some(v.iter().map(|a| a * phase).collect())
    }

    pub fn amplitude_of(&self, tuple: &[u8]) -> Option<Complex64> {
        let i = self.basis.index_of(tuple)?;
        self.pure_amplitudes().map(|a| a[i])
    }

    /// Probability of finding `N` photons in total.
    pub fn total_photon_distribution(&self) -> PhotonDistribution {
        let mut p = vec![0.0; self.n_max() + 1];
        for i in 0..self.basis.dim() {
            p[self.basis.total(i)] += self.rho[(i, i)].re;
        }
        PhotonDistribution::from_raw(p)
    }

    /// Trace, hermiticity and positivity within the engine tolerances.
    pub fn check_invariants(&self) -> Result<(), FockError> {
        let tr = self.rho.trace();
        if (tr.re - 1.0).abs() > STATE_TRACE_TOL {
            return Err(FockError::InvalidDensity(format!("trace = {tr}")));
        }
        let dev = (&self.rho - self.rho.adjoint())
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        if dev > HERMITIAN_TOL {
            return Err(FockError::InvalidDensity(format!("not Hermitian ({dev:.3e})")));
        }
        let min = SymmetricEigen::new(self.rho.clone()).eigenvalues.min();
        if min < -EIGEN_TOL {
            return Err(FockError::InvalidDensity(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    /// Reduced state of the state's mode `j`.
    pub fn marginal(&self, j: usize) -> DensityMatrix {
        let d = self.n_max() + 1;
        let mut out = DMatrix::zeros(d, d);
        let dim = self.basis.dim();
        for a in 0..dim {
            let ta = self.basis.tuple(a);
            for b in 0..dim {
                let tb = self.basis.tuple(b);
                let rest_equal = ta.iter().zip(tb).enumerate().all(|(k, (x, y))| k == j || x == y);
                if rest_equal {
                    out[(ta[j] as usize, tb[j] as usize)] += self.rho[(a, b)];
                }
            }
        }
        DensityMatrix::from_unchecked(out)
    }
}

/// `(1/√(1+I²))·a†[g1] a†[g2]|0⟩` over the register, with `n_max` as cutoff (≥ 2).
pub fn build_heralded_state(
    g1: &ModeFunction,
    g2: &ModeFunction,
    register: &ModeRegister,
    n_max: usize,
) -> Result<MultimodeState, FockError> {
    let (psi, _) = heralded_vector(g1, g2, register, n_max)?;
    MultimodeState::pure(register.clone(), n_max, &psi)
}

/// Norm of `a†[g1] a†[g2]|0⟩` before normalization; `√(1+I²)` for normalized modes.
pub fn heralded_raw_norm(g1: &ModeFunction, g2: &ModeFunction, register: &ModeRegister) -> Result<f64, FockError> {
    Ok(heralded_vector(g1, g2, register, 2)?.1)
}

fn heralded_vector(
    g1: &ModeFunction,
    g2: &ModeFunction,
    register: &ModeRegister,
    n_max: usize,
) -> Result<(Vec<Complex64>, f64), FockError> {
    check_cutoff(n_max)?;
    if n_max < 2 {
        return Err(FockError::InvalidCutoff(n_max));
    }
    let coeffs = decomposition_coeffs(g1, g2, register)?;
    let deficit = (g1.norm_sq() - coeffs.alpha_mass()).max(g2.norm_sq() - coeffs.beta_mass());
    if deficit > MAX_SPAN_DEFICIT {
        return Err(FockError::SpanDeficit { deficit });
    }
    let basis = FockBasis::new(register.len(), n_max);
    let psi = basis.create(
        &real_to_complex(&coeffs.alpha),
        &basis.create(&real_to_complex(&coeffs.beta), &basis.vacuum()),
    );
    let norm = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    Ok((psi, norm))
}

fn loss_kraus(basis: &FockBasis, mode: usize, k: usize, eta: f64) -> Vec<(usize, usize, f64)> {
    let mut entries = Vec::new();
    let mut buf = Vec::with_capacity(basis.modes());
    for i in 0..basis.dim() {
        let n = basis.tuple(i)[mode] as usize;
        if n < k {
            continue;
        }
        buf.clear();
        buf.extend_from_slice(basis.tuple(i));
        buf[mode] -= k as u8;
        let j = basis.index_of(&buf).expect("lowered tuple stays in basis");
        let amp = (binomial(n, k) * eta.powi((n - k) as i32) * (1.0 - eta).powi(k as i32)).sqrt();
        entries.push((j, i, amp));
    }
    entries
}

fn apply_sparse_kraus(rho: &DMatrix<Complex64>, entries: &[(usize, usize, f64)]) -> DMatrix<Complex64> {
    // K ρ K† with K[j, i] = amp
    let d = rho.nrows();
    let mut out = DMatrix::zeros(d, d);
    for &(j1, i1, a1) in entries {
        for &(j2, i2, a2) in entries {
            out[(j1, j2)] += rho[(i1, i2)] * (a1 * a2);
        }
    }
    out
}

fn loss_on_mode(rho: &DMatrix<Complex64>, basis: &FockBasis, mode: usize, eta: f64) -> DMatrix<Complex64> {
    let mut out = DMatrix::zeros(rho.nrows(), rho.ncols());
    for k in 0..=basis.n_max() {
        let kraus = loss_kraus(basis, mode, k, eta);
        if !kraus.is_empty() {
            out += apply_sparse_kraus(rho, &kraus);
        }
    }
    out
}

/// Same pure-loss channel (beam splitter of transmission `eta` with vacuum) on every mode.
pub fn apply_loss_channel(state: &MultimodeState, eta: f64) -> Result<MultimodeState, FockError> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(FockError::InvalidEta(eta));
    }
    let mut rho = state.rho.clone();
    for m in 0..state.modes() {
        rho = loss_on_mode(&rho, &state.basis, m, eta);
    }
    Ok(MultimodeState { rho, ..state.clone() })
}

/// Pure loss on a single-mode state.
pub fn single_mode_loss(rho: &DensityMatrix, eta: f64) -> Result<DensityMatrix, FockError> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(FockError::InvalidEta(eta));
    }
    let basis = FockBasis::new(1, rho.dim() - 1);
    Ok(DensityMatrix::from_unchecked(loss_on_mode(
        rho.matrix(),
        &basis,
        0,
        eta,
    )))
}

fn unitarity_deviation(u: &DMatrix<Complex64>) -> f64 {
    let id = DMatrix::<Complex64>::identity(u.nrows(), u.ncols());
    (u * u.adjoint() - id).iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Passive basis change: new creation operators `b†_m = Σ_k U[m,k]·a†_k`.
pub fn change_mode_basis(state: &MultimodeState, unitary: &DMatrix<Complex64>) -> Result<MultimodeState, FockError> {
    let m = state.modes();
    if unitary.nrows() != m || unitary.ncols() != m {
        return Err(FockError::DimensionMismatch {
            expected: m,
            got: unitary.nrows(),
        });
    }
    let deviation = unitarity_deviation(unitary);
    if deviation > UNITARY_TOL {
        return Err(FockError::NotUnitary { deviation });
    }
    let basis = &state.basis;
    let dim = basis.dim();
    // a†_k = Σ_m conj(U[m,k])·b†_m
    let old_ops: Vec<Vec<Complex64>> = (0..m)
        .map(|k| (0..m).map(|r| unitary[(r, k)].conj()).collect())
        .collect();
    let mut t = DMatrix::<Complex64>::zeros(dim, dim);
    for i in 0..dim {
        let mut v = basis.vacuum();
        let mut fact = 1.0;
        for (k, &n) in basis.tuple(i).iter().enumerate() {
            for q in 0..n {
                v = basis.create(&old_ops[k], &v);
                fact *= (q + 1) as f64;
            }
        }
        let scale = 1.0 / fact.sqrt();
        for (j, a) in v.iter().enumerate() {
            t[(j, i)] = a * scale;
        }
    }
    let rho = &t * &state.rho * t.adjoint();
    Ok(MultimodeState {
        register: state.register.clone(),
        frame: unitary * &state.frame,
        basis: state.basis.clone(),
        rho,
    })
}

/// Unitary whose first row is the unit vector `first`, completed by Gram–Schmidt.
fn complete_unitary(first: &[Complex64]) -> DMatrix<Complex64> {
    let m = first.len();
    let mut rows: Vec<Vec<Complex64>> = vec![first.to_vec()];
    let mut e = 0;
    while rows.len() < m {
        let mut v = vec![Complex64::new(0.0, 0.0); m];
        v[e] = Complex64::new(1.0, 0.0);
        e += 1;
        for _ in 0..2 {
            for r in &rows {
                let c: Complex64 = r.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                v.iter_mut().zip(r).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            rows.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    DMatrix::from_fn(m, m, |i, j| rows[i][j])
}

/// Reduced single-mode state of the temporal mode `xi`.
///
/// The part of `xi` outside the register sees vacuum, which acts as pure loss with
/// transmission equal to the captured fraction `Σ_k ⟨h_k, ξ⟩²`.
pub fn reduce_to_mode(state: &MultimodeState, xi: &ModeFunction) -> Result<DensityMatrix, FockError> {
    let norm_sq = xi.norm_sq();
    if (norm_sq - 1.0).abs() > 1e-9 {
        return Err(ModeError::NotNormalized { norm_sq }.into());
    }
    let d = state.register.coefficients(xi)?;
    let m = state.modes();
    // c_j = ⟨e_j, ξ⟩ with e_j = Σ_k frame[j,k] h_k
    let c: Vec<Complex64> = (0..m)
        .map(|j| (0..m).map(|k| state.frame[(j, k)].conj() * d[k]).sum())
        .collect();
    let captured: f64 = c.iter().map(|x| x.norm_sqr()).sum();
    if captured < 1e-15 {
        return Ok(DensityMatrix::fock(0, state.n_max()));
    }
    let norm = captured.sqrt();
    let u = complete_unitary(&c.iter().map(|x| x / norm).collect::<Vec<_>>());
    let rotated = change_mode_basis(state, &u)?;
    let reduced = rotated.marginal(0);
    single_mode_loss(&reduced, captured.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{apply_loss, fidelity_optimal, fixed_mode_distribution};
    use crate::modes::{adapted_mode_pair, extend_orthonormal_basis, make_trigger_mode, TimeGrid};

    const GAMMA: f64 = 53e6;

    struct Setup {
        g1: ModeFunction,
        g2: ModeFunction,
        f1: ModeFunction,
        f2: ModeFunction,
        i: f64,
    }

    fn setup(dt: f64) -> Setup {
        let grid = TimeGrid::default();
        let g1 = make_trigger_mode(200e-9, GAMMA, &grid).unwrap();
        let g2 = make_trigger_mode(200e-9 + dt, GAMMA, &grid).unwrap();
        let (f1, f2) = adapted_mode_pair(&g1, &g2).unwrap();
        let i = overlap(&g1, &g2).unwrap();
        Setup { g1, g2, f1, f2, i }
    }

    fn g_register(s: &Setup, k: usize) -> ModeRegister {
        let grid = *s.g1.grid();
        ModeRegister::new(extend_orthonormal_basis(&[s.g1.clone(), s.g2.clone()], &grid, k).unwrap()).unwrap()
    }

    #[test]
    fn decomposition_with_first_mode_aligned() {
        let s = setup(12e-9);
        let reg = g_register(&s, 4);
        let c = decomposition_coeffs(&s.g1, &s.g2, &reg).unwrap();
        assert!((c.alpha[0] - 1.0).abs() < 1e-12);
        for m in 1..4 {
            assert!(c.alpha[m].abs() < 1e-12);
            for n in 0..4 {
                assert!(c.c[(m, n)].abs() < 1e-12);
            }
        }
        assert!((c.beta[0] - s.i).abs() < 1e-12);
        assert!((c.beta[0] - crate::modes::overlap_closed_form(12e-9, GAMMA).unwrap()).abs() < 1e-4);
        assert!((c.beta_mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn decomposition_coincident() {
        let s = setup(0.0);
        let grid = *s.g1.grid();
        let reg = ModeRegister::new(extend_orthonormal_basis(&[s.g1.clone()], &grid, 3).unwrap()).unwrap();
        let c = decomposition_coeffs(&s.g1, &s.g1, &reg).unwrap();
        assert!((c.c[(0, 0)] - 1.0).abs() < 1e-12);
        let rest: f64 = c.c.iter().skip(1).map(|v| v.abs()).sum();
        assert!(rest < 1e-10);
    }

    #[test]
    fn heralded_state_in_symmetric_modes() {
        for dt in [3e-9, 10e-9, 40e-9] {
            let s = setup(dt);
            let reg = ModeRegister::new(vec![s.f1.clone(), s.f2.clone()]).unwrap();
            let st = build_heralded_state(&s.g1, &s.g2, &reg, 2).unwrap();
            let d = (2.0 * (1.0 + s.i * s.i)).sqrt();
            let a20 = st.amplitude_of(&[2, 0]).unwrap();
            let a02 = st.amplitude_of(&[0, 2]).unwrap();
            assert!((a20.re - (1.0 + s.i) / d).abs() < 1e-10);
            assert!((a02.re + (1.0 - s.i) / d).abs() < 1e-10);
            assert!(st.amplitude_of(&[1, 1]).unwrap().norm() < 1e-10);
            assert!((st.trace() - 1.0).abs() < 1e-12);
        }
        let s = setup(40e-9);
        let reg = ModeRegister::new(vec![s.f1.clone(), s.f2.clone()]).unwrap();
        let st = build_heralded_state(&s.g1, &s.g2, &reg, 2).unwrap();
        let ratio = st.amplitude_of(&[2, 0]).unwrap().re / -st.amplitude_of(&[0, 2]).unwrap().re;
        assert!((ratio - 1.0198).abs() < 1e-3);
    }

    #[test]
    fn coincident_herald_is_two_photon_fock() {
        let s = setup(0.0);
        let reg = ModeRegister::new(vec![s.g1.clone()]).unwrap();
        let st = build_heralded_state(&s.g1, &s.g1, &reg, 2).unwrap();
        assert!((st.rho()[(2, 2)].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn raw_norm_matches_normalization() {
        for dt in [0.5e-9, 6e-9, 30e-9] {
            let s = setup(dt);
            let reg = g_register(&s, 2);
            let n = heralded_raw_norm(&s.g1, &s.g2, &reg).unwrap();
            assert!((n - (1.0 + s.i * s.i).sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn span_deficit_detected() {
        let s = setup(40e-9);
        let reg = ModeRegister::new(vec![s.g1.clone()]).unwrap();
        assert!(matches!(
            build_heralded_state(&s.g1, &s.g2, &reg, 2),
            Err(FockError::SpanDeficit { .. })
        ));
    }

    #[test]
    fn register_rejects_non_orthogonal() {
        let s = setup(5e-9);
        assert!(matches!(
            ModeRegister::new(vec![s.g1.clone(), s.g2.clone()]),
            Err(FockError::NotOrthonormal { .. })
        ));
    }

    #[test]
    fn loss_on_two_photon_fock() {
        let s = setup(0.0);
        let reg = ModeRegister::new(vec![s.g1.clone()]).unwrap();
        let st = build_heralded_state(&s.g1, &s.g1, &reg, 2).unwrap();
        let lossy = apply_loss_channel(&st, 0.76).unwrap();
        let diag: Vec<f64> = (0..3).map(|i| lossy.rho()[(i, i)].re).collect();
        for (a, b) in diag.iter().zip([0.0576, 0.3648, 0.5776]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(lossy.purity() <= st.purity() + 1e-12);
        let same = apply_loss_channel(&st, 1.0).unwrap();
        assert!((same.rho() - st.rho()).norm() < 1e-14);
        assert!(apply_loss_channel(&st, 1.1).is_err());
    }

    #[test]
    fn rotation_reproduces_symmetric_form() {
        let s = setup(8e-9);
        let reg = g_register(&s, 2);
        let h = reg.modes().to_vec();
        let st = build_heralded_state(&s.g1, &s.g2, &reg, 2).unwrap();
        // f_j = Σ_k U[j,k] h_k
        let u = DMatrix::from_fn(2, 2, |j, k| {
            let f = if j == 0 { &s.f1 } else { &s.f2 };
            Complex64::new(overlap(&h[k], f).unwrap(), 0.0)
        });
        let rotated = change_mode_basis(&st, &u).unwrap();
        let direct = build_heralded_state(
            &s.g1,
            &s.g2,
            &ModeRegister::new(vec![s.f1.clone(), s.f2.clone()]).unwrap(),
            2,
        )
        .unwrap();
        assert!((rotated.rho() - direct.rho()).norm() < 1e-10);
    }

    #[test]
    fn basis_change_errors_and_inverse() {
        let s = setup(8e-9);
        let st = build_heralded_state(&s.g1, &s.g2, &g_register(&s, 2), 2).unwrap();
        let bad = DMatrix::from_element(2, 2, Complex64::new(1.0, 0.0));
        assert!(matches!(
            change_mode_basis(&st, &bad),
            Err(FockError::NotUnitary { .. })
        ));
        let th = 0.3f64;
        let u = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(th.cos(), 0.0),
                Complex64::from_polar(th.sin(), 0.7),
                Complex64::from_polar(-th.sin(), -0.7),
                Complex64::new(th.cos(), 0.0),
            ],
        );
        let there = change_mode_basis(&st, &u).unwrap();
        let back = change_mode_basis(&there, &u.adjoint()).unwrap();
        assert!((back.rho() - st.rho()).norm() < 1e-10);
        let a = st.total_photon_distribution();
        let b = there.total_photon_distribution();
        for n in 0..3 {
            assert!((a.get(n) - b.get(n)).abs() < 1e-10);
        }
    }

    #[test]
    fn reduced_states_match_closed_forms() {
        for dt in [0.7e-9, 4e-9, 17e-9, 40e-9] {
            let s = setup(dt);
            let st = build_heralded_state(&s.g1, &s.g2, &g_register(&s, 4), 2).unwrap();
            let g1 = photon_distribution(&reduce_to_mode(&st, &s.g1).unwrap());
            let want = fixed_mode_distribution(s.i).unwrap();
            for n in 0..3 {
                assert!((g1.get(n) - want.get(n)).abs() < 1e-10);
            }
            let f1 = photon_distribution(&reduce_to_mode(&st, &s.f1).unwrap());
            let (fp, fm) = fidelity_optimal(s.i).unwrap();
            assert!((f1.get(2) - fp).abs() < 1e-10);
            assert!((f1.get(0) - fm).abs() < 1e-10);

            let lossy = apply_loss_channel(&st, 0.76).unwrap();
            let g1l = photon_distribution(&reduce_to_mode(&lossy, &s.g1).unwrap());
            let wantl = apply_loss(&want, 0.76).unwrap();
            for n in 0..3 {
                assert!((g1l.get(n) - wantl.get(n)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn reduction_values_at_forty_ns() {
        let s = setup(40e-9);
        let st = apply_loss_channel(
            &build_heralded_state(&s.g1, &s.g2, &g_register(&s, 4), 2).unwrap(),
            0.76,
        )
        .unwrap();
        let g1 = photon_distribution(&reduce_to_mode(&st, &s.g1).unwrap());
        // 0.76·(1−I²)/(1+I²) + 2η(1−η)·2I²/(1+I²) with I from the grid
        let want =
            0.76 * (1.0 - s.i * s.i) / (1.0 + s.i * s.i) + 2.0 * 0.76 * 0.24 * 2.0 * s.i * s.i / (1.0 + s.i * s.i);
        assert!((g1.get(1) - want).abs() < 1e-10);
        assert!((g1.get(1) - 0.7599).abs() < 5e-4);
        let f1 = photon_distribution(&reduce_to_mode(&st, &s.f1).unwrap());
        assert!((f1.get(2) - 0.289).abs() < 0.006);
    }

    #[test]
    fn orthogonal_mode_is_vacuum() {
        let s = setup(20e-9);
        let grid = *s.g1.grid();
        let reg = g_register(&s, 4);
        let st = build_heralded_state(&s.g1, &s.g2, &reg, 2).unwrap();
        let far = make_trigger_mode(420e-9, GAMMA, &grid).unwrap();
        let extra = extend_orthonormal_basis(&[s.g1.clone(), s.g2.clone(), far], &grid, 3).unwrap();
        let rho = reduce_to_mode(&st, &extra[2]).unwrap();
        let d = photon_distribution(&rho);
        assert!((d.get(0) - 1.0).abs() < 1e-10);
        let f1_lossless = reduce_to_mode(
            &build_heralded_state(&s.g1, &s.g1, &ModeRegister::new(vec![s.g1.clone()]).unwrap(), 2).unwrap(),
            &s.g1,
        )
        .unwrap();
        assert!((photon_distribution(&f1_lossless).get(2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn marginal_of_two_mode_state() {
        let s = setup(40e-9);
        let reg = ModeRegister::new(vec![s.f1.clone(), s.f2.clone()]).unwrap();
        let st = build_heralded_state(&s.g1, &s.g2, &reg, 2).unwrap();
        let m = st.marginal(0);
        let via = reduce_to_mode(&st, &s.f1).unwrap();
        assert!((m.matrix() - via.matrix()).norm() < 1e-10);
        st.check_invariants().unwrap();
    }
}
