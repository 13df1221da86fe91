//! Maximum-likelihood photon statistics from homodyne samples.
//!
//! The primary path is phase-averaged: with a randomized LO only the Fock diagonal
//! is visible, and the binned likelihood is a linear mixture solved by EM. A full
//! `RρR` reconstruction over `(x, θ)` bins is available for phase-resolved data.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::PhotonDistribution;
use crate::fock::DensityMatrix;
use crate::homodyne::{hermite_functions, QuadratureSample, MAX_FOCK, X_RANGE};
use crate::par::Execution;

/// Gauss–Legendre order used inside each bin.
const GL_ORDER: usize = 12;
/// Probabilities below this count as on the simplex boundary for error bars.
const ACTIVE_FLOOR: f64 = 1e-6;
/// Phase bins of the phase-resolved reconstruction.
pub const PHASE_BINS: usize = 32;

#[derive(Debug, Error)]
pub enum TomoError {
    #[error("no samples")]
    EmptyInput,
    #[error("photon number {n} exceeds cutoff {cutoff}")]
    CutoffExceeded { n: usize, cutoff: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no convergence after {iterations} iterations")]
    NotConverged { iterations: usize },
}

/// Gauss–Legendre nodes and weights on `[−1, 1]` (Newton on `P_n`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let step = pn / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Phase-averaged binned POVM: `elements[n][b] = ∫_bin |ψ_n(x)|² dx` on uniform bins
/// over `[−8, 8]`, plus the bin-integrated products `∫ψ_mψ_n` for phase-resolved use.
#[derive(Clone, Debug, PartialEq)]
pub struct BinnedPovm {
    pub edges: Vec<f64>,
    pub elements: Vec<Vec<f64>>,
    /// `products[b][(m, n)]`, symmetric.
    products: Vec<DMatrix<f64>>,
}

impl BinnedPovm {
    pub fn cutoff(&self) -> usize {
        self.elements.len() - 1
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }

    pub fn center(&self, b: usize) -> f64 {
        0.5 * (self.edges[b] + self.edges[b + 1])
    }

    /// Bin of `x`; values outside the range fall into the edge bins.
    pub fn bin_of(&self, x: f64) -> usize {
        let b = ((x - self.edges[0]) / self.width()).floor();
        (b.max(0.0) as usize).min(self.n_bins() - 1)
    }

    pub fn products(&self, b: usize) -> &DMatrix<f64> {
        &self.products[b]
    }

    /// Counts per bin; integer sums, so independent of sample order.
    pub fn histogram(&self, xs: &[f64], exec: Execution) -> Vec<u64> {
        const CHUNK: usize = 1 << 16;
        let parts = exec.map(xs.len().div_ceil(CHUNK), |c| {
            let mut h = vec![0u64; self.n_bins()];
            for &x in &xs[c * CHUNK..((c + 1) * CHUNK).min(xs.len())] {
                h[self.bin_of(x)] += 1;
            }
            h
        });
        let mut total = vec![0u64; self.n_bins()];
        for h in parts {
            total.iter_mut().zip(h).for_each(|(t, v)| *t += v);
        }
        total
    }
}

pub fn build_povm(cutoff: usize, n_bins: usize) -> Result<BinnedPovm, TomoError> {
    if n_bins < 64 {
        return Err(TomoError::InvalidConfig(format!("n_bins = {n_bins} is below 64")));
    }
    if cutoff > MAX_FOCK {
        return Err(TomoError::CutoffExceeded {
            n: cutoff,
            cutoff: MAX_FOCK,
        });
    }
    let d = cutoff + 1;
    let h = 2.0 * X_RANGE / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins).map(|b| -X_RANGE + b as f64 * h).collect();
    let (nodes, weights) = gauss_legendre(GL_ORDER);
    let mut elements = vec![vec![0.0; n_bins]; d];
    let mut products = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let mid = 0.5 * (edges[b] + edges[b + 1]);
        let mut prod = DMatrix::<f64>::zeros(d, d);
        for (t, w) in nodes.iter().zip(&weights) {
            let psi = hermite_functions(cutoff, mid + 0.5 * h * t);
            for m in 0..d {
                for n in 0..=m {
                    prod[(m, n)] += 0.5 * h * w * psi[m] * psi[n];
                }
            }
        }
        for m in 0..d {
            for n in 0..m {
                prod[(n, m)] = prod[(m, n)];
            }
            elements[m][b] = prod[(m, m)];
        }
        products.push(prod);
    }
    Ok(BinnedPovm {
        edges,
        elements,
        products,
    })
}

/// Settings for both reconstructions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlConfig {
    pub cutoff: usize,
    pub max_iters: usize,
    /// Relative change of the log-likelihood that stops the iteration.
    pub tol: f64,
    pub n_bins: usize,
}

impl Default for MlConfig {
    fn default() -> Self {
        Self {
            cutoff: 5,
            max_iters: 2000,
            tol: 1e-10,
            n_bins: 256,
        }
    }
}

impl MlConfig {
    pub fn validate(&self) -> Result<(), TomoError> {
        if self.cutoff < 2 || self.cutoff > MAX_FOCK {
            return Err(TomoError::InvalidConfig(format!(
                "cutoff {} outside 2..={MAX_FOCK}",
                self.cutoff
            )));
        }
        if !(self.tol > 0.0) {
            return Err(TomoError::InvalidConfig(format!("tol {} must be positive", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(TomoError::InvalidConfig("max_iters must be positive".into()));
        }
        if self.n_bins < 64 {
            return Err(TomoError::InvalidConfig(format!(
                "n_bins = {} is below 64",
                self.n_bins
            )));
        }
        Ok(())
    }
}

/// Output of [`ml_diagonal`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlResult {
    pub cutoff: usize,
    pub probs: Vec<f64>,
    /// Binned log-likelihood `Σ_b c_b ln p_b` at `probs`.
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Asymptotic standard errors from the observed information on the simplex;
    /// zero for components pinned at the boundary.
    pub stderr: Vec<f64>,
    pub samples: usize,
    #[serde(skip)]
    pub history: Vec<f64>,
}

impl MlResult {
    pub fn distribution(&self) -> PhotonDistribution {
        PhotonDistribution::new(self.probs.clone()).expect("EM keeps the simplex")
    }

    /// The estimate, or `NotConverged` when the iteration budget ran out.
    pub fn require_converged(self) -> Result<Self, TomoError> {
        if self.converged {
            Ok(self)
        } else {
            Err(TomoError::NotConverged {
                iterations: self.iterations,
            })
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "cutoff": self.cutoff,
            "probs": self.probs,
            "log_likelihood": self.log_likelihood,
            "iterations": self.iterations,
            "converged": self.converged,
            "stderr": self.stderr,
            "samples": self.samples,
        })
    }
}

fn log_likelihood(counts: &[u64], p: &[f64]) -> f64 {
    counts
        .iter()
        .zip(p)
        .filter(|(c, _)| **c > 0)
        .map(|(&c, &q)| c as f64 * q.max(f64::MIN_POSITIVE).ln())
        .sum()
}

fn mixture(povm: &BinnedPovm, probs: &[f64]) -> Vec<f64> {
    let mut p = vec![0.0; povm.n_bins()];
    for (row, w) in povm.elements.iter().zip(probs) {
        p.iter_mut().zip(row).for_each(|(q, e)| *q += w * e);
    }
    p
}

/// EM fixed point for the Fock-diagonal weights from phase-randomized samples.
pub fn ml_diagonal(samples: &[f64], config: &MlConfig) -> Result<MlResult, TomoError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(TomoError::EmptyInput);
    }
    if samples.len() < 1000 {
        log::warn!("only {} samples; the reconstruction will be noisy", samples.len());
    }
    let povm = build_povm(config.cutoff, config.n_bins)?;
    let counts = povm.histogram(samples, Execution::default());
    Ok(em_from_counts(&povm, &counts, config))
}

/// EM on pre-binned counts.
pub fn em_from_counts(povm: &BinnedPovm, counts: &[u64], config: &MlConfig) -> MlResult {
    let d = povm.cutoff() + 1;
    let total: u64 = counts.iter().sum();
    let n = total as f64;
    let mut probs = vec![1.0 / d as f64; d];
    let mut p = mixture(povm, &probs);
    let mut ll = log_likelihood(counts, &p);
    let mut history = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters {
        iterations += 1;
        let ratio: Vec<f64> = counts
            .iter()
            .zip(&p)
            .map(|(&c, &q)| if c == 0 { 0.0 } else { c as f64 / q })
            .collect();
        for (w, row) in probs.iter_mut().zip(&povm.elements) {
            *w *= row.iter().zip(&ratio).map(|(e, r)| e * r).sum::<f64>() / n;
        }
        let s: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|w| *w /= s);
        p = mixture(povm, &probs);
        let next = log_likelihood(counts, &p);
        debug_assert!(
            next >= ll - 1e-9 * ll.abs().max(1.0),
            "log-likelihood decreased from {ll} to {next}"
        );
        history.push(next);
        let change = (next - ll).abs() / ll.abs().max(f64::MIN_POSITIVE);
        ll = next;
        if change < config.tol {
            converged = true;
            break;
        }
    }
    let stderr = simplex_stderr(povm, counts, &probs, &p);
    MlResult {
        cutoff: povm.cutoff(),
        probs,
        log_likelihood: ll,
        iterations,
        converged,
        stderr,
        samples: total as usize,
        history,
    }
}

/// Covariance of the constrained MLE, `F⁻¹ − F⁻¹11ᵀF⁻¹/(1ᵀF⁻¹1)` with `F` the observed
/// information. Components at the boundary are kept in `F` so that they still get
/// an error scale; if that makes `F` singular they are dropped and reported as zero.
fn simplex_stderr(povm: &BinnedPovm, counts: &[u64], probs: &[f64], p: &[f64]) -> Vec<f64> {
    let all: Vec<usize> = (0..probs.len()).collect();
    constrained_stderr(povm, counts, p, &all, probs.len()).unwrap_or_else(|| {
        let active: Vec<usize> = all.into_iter().filter(|&k| probs[k] > ACTIVE_FLOOR).collect();
        constrained_stderr(povm, counts, p, &active, probs.len()).unwrap_or_else(|| vec![0.0; probs.len()])
    })
}

fn constrained_stderr(povm: &BinnedPovm, counts: &[u64], p: &[f64], active: &[usize], d: usize) -> Option<Vec<f64>> {
    let k = active.len();
    if k < 2 {
        return None;
    }
    let mut fisher = DMatrix::<f64>::zeros(k, k);
    for (b, &c) in counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let w = c as f64 / (p[b] * p[b]);
        for (i, &a) in active.iter().enumerate() {
            for (j, &e) in active.iter().enumerate() {
                fisher[(i, j)] += w * povm.elements[a][b] * povm.elements[e][b];
            }
        }
    }
    let inv = fisher.cholesky()?.inverse();
    let ones = DVector::<f64>::from_element(k, 1.0);
    let u = &inv * &ones;
    let cov = &inv - (&u * u.transpose()) / ones.dot(&u);
    let mut out = vec![0.0; d];
    for (i, &a) in active.iter().enumerate() {
        out[a] = cov[(i, i)].max(0.0).sqrt();
    }
    Some(out)
}

/// Undoes a known transmission `eta` on photon-number weights by inverting the
/// binomial channel. Statistical errors are amplified by roughly `η^(−n)`, and the
/// result may leave the simplex.
pub fn loss_corrected(probs: &[f64], eta: f64) -> Result<Vec<f64>, TomoError> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(TomoError::InvalidConfig(format!("eta {eta} outside (0, 1]")));
    }
    let d = probs.len();
    let mut out = vec![0.0; d];
    for m in (0..d).rev() {
        let mut rest = probs[m];
        for (n, v) in out.iter().enumerate().skip(m + 1) {
            rest -= crate::fock::binomial(n, m) * eta.powi(m as i32) * (1.0 - eta).powi((n - m) as i32) * v;
        }
        out[m] = rest / eta.powi(m as i32);
    }
    Ok(out)
}

/// Fidelity of a Fock-diagonal state with `|n⟩`, which is `P_n`.
pub fn fock_fidelity(dist: &PhotonDistribution, n: usize) -> Result<f64, TomoError> {
    if n > dist.max_photons() {
        return Err(TomoError::CutoffExceeded {
            n,
            cutoff: dist.max_photons(),
        });
    }
    Ok(dist.get(n))
}

/// Output of [`ml_full`].
#[derive(Clone, Debug)]
pub struct MlFullResult {
    pub rho: DensityMatrix,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterative `ρ ← RρR / Tr(RρR)` over `(x, θ)` bins.
pub fn ml_full(samples: &[QuadratureSample], config: &MlConfig) -> Result<MlFullResult, TomoError> {
    config.validate()?;
    if samples.is_empty() {
        return Err(TomoError::EmptyInput);
    }
    if samples.len() < 10_000 {
        log::warn!("only {} phase-resolved samples", samples.len());
    }
    let povm = build_povm(config.cutoff, config.n_bins)?;
    let d = config.cutoff + 1;
    let nb = povm.n_bins();
    let mut counts = vec![0u64; nb * PHASE_BINS];
    for s in samples {
        let k = ((s.theta.rem_euclid(TAU) / TAU * PHASE_BINS as f64) as usize).min(PHASE_BINS - 1);
        counts[k * nb + povm.bin_of(s.x)] += 1;
    }
    // phase-bin average of e^{i(m−n)θ}
    let dtheta = TAU / PHASE_BINS as f64;
    let phase = |k: usize, diff: i64| -> Complex64 {
        if diff == 0 {
            return Complex64::new(1.0, 0.0);
        }
        let df = diff as f64;
        let (a, b) = (k as f64 * dtheta, (k as f64 + 1.0) * dtheta);
        (Complex64::new(0.0, df * b).exp() - Complex64::new(0.0, df * a).exp()) / Complex64::new(0.0, df * dtheta)
    };
    let element = |k: usize, b: usize| -> DMatrix<Complex64> {
        let x = povm.products(b);
        DMatrix::from_fn(d, d, |m, n| phase(k, m as i64 - n as i64) * x[(m, n)])
    };
    let active: Vec<(usize, usize, f64)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(idx, &c)| (idx / nb, idx % nb, c as f64))
        .collect();
    let elements: Vec<DMatrix<Complex64>> = active.iter().map(|&(k, b, _)| element(k, b)).collect();
    let n = samples.len() as f64;

    let prob = |rho: &DMatrix<Complex64>, e: &DMatrix<Complex64>| -> f64 {
        // Tr(ρE) for Hermitian ρ, E
        rho.iter()
            .zip(e.transpose().iter())
            .map(|(r, v)| (r * v).re)
            .sum::<f64>()
    };
    let ll_of = |rho: &DMatrix<Complex64>| -> f64 {
        active
            .iter()
            .zip(&elements)
            .map(|(&(_, _, c), e)| c * prob(rho, e).max(f64::MIN_POSITIVE).ln())
            .sum()
    };

    let mut rho = DMatrix::<Complex64>::identity(d, d) / Complex64::new(d as f64, 0.0);
    let mut ll = ll_of(&rho);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_iters {
        iterations += 1;
        let mut r = DMatrix::<Complex64>::zeros(d, d);
        for (&(_, _, c), e) in active.iter().zip(&elements) {
            let p = prob(&rho, e).max(f64::MIN_POSITIVE);
            r += e * Complex64::new(c / (n * p), 0.0);
        }
        let mut next = &r * &rho * &r;
        next = (&next + next.adjoint()) * Complex64::new(0.5, 0.0);
        let tr: f64 = (0..d).map(|i| next[(i, i)].re).sum();
        next /= Complex64::new(tr, 0.0);
        rho = next;
        let new_ll = ll_of(&rho);
        let change = (new_ll - ll).abs() / ll.abs().max(f64::MIN_POSITIVE);
        ll = new_ll;
        if change < config.tol {
            converged = true;
            break;
        }
    }
    let rho = DensityMatrix::new(rho).map_err(|e| TomoError::InvalidConfig(e.to_string()))?;
    Ok(MlFullResult {
        rho,
        log_likelihood: ll,
        iterations,
        converged,
    })
}
