//! Closed-form photon statistics of the two-click heralded state.
//!
//! Everything here is a function of the trigger-mode overlap `I`, the delay, the
//! cavity bandwidth and the overall transmission. These are the reference curves
//! for the Fock engine and the Monte-Carlo pipeline.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::modes::overlap_closed_form;

/// Small-delay expansions are only evaluated for `πγ|Δt|` below this.
pub const EXPANSION_LIMIT: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("cavity bandwidth must be positive, got {0} Hz")]
    InvalidGamma(f64),
    #[error("small-delay expansion invalid: πγ|Δt| = {0} ≥ {EXPANSION_LIMIT}")]
    ExpansionInvalid(f64),
    #[error("loss formula needs support ≤ 2, found P[{index}] = {value}")]
    UnsupportedSupport { index: usize, value: f64 },
    #[error("not a probability distribution: {0}")]
    InvalidDistribution(String),
}

/// OPO linewidth (FWHM, Hz) and overall intensity transmission.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpoParams {
    pub gamma: f64,
    pub eta: f64,
}

impl OpoParams {
    pub fn new(gamma: f64, eta: f64) -> Result<Self, AnalyticError> {
        check_gamma(gamma)?;
        unit_interval("eta", eta)?;
        Ok(Self { gamma, eta })
    }

    /// 53 MHz linewidth, 76 % transmission.
    pub fn experiment() -> Self {
        Self { gamma: 53e6, eta: 0.76 }
    }

    pub fn overlap(&self, delta_t: f64) -> f64 {
        overlap_closed_form(delta_t, self.gamma).expect("gamma validated at construction")
    }
}

/// Photon-number probabilities `P_0 … P_N` in one analysis mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhotonDistribution {
    probs: Vec<f64>,
}

impl PhotonDistribution {
    const SUM_TOL: f64 = 1e-9;

    /// Validates entries in `[0, 1]` and a unit sum (to 1e-9; the closed forms
    /// themselves sum to 1 at machine precision).
    pub fn new(probs: Vec<f64>) -> Result<Self, AnalyticError> {
        if probs.is_empty() {
            return Err(AnalyticError::InvalidDistribution("empty".into()));
        }
        for (n, &p) in probs.iter().enumerate() {
            if !(-1e-12..=1.0 + 1e-12).contains(&p) || !p.is_finite() {
                return Err(AnalyticError::InvalidDistribution(format!("P[{n}] = {p}")));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOL {
            return Err(AnalyticError::InvalidDistribution(format!("sum = {sum}")));
        }
        Ok(Self { probs })
    }

    pub(crate) fn from_raw(probs: Vec<f64>) -> Self {
        Self { probs }
    }

    pub fn fock(n: usize) -> Self {
        let mut probs = vec![0.0; n + 1];
        probs[n] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `P_n`, zero beyond the stored support.
    pub fn get(&self, n: usize) -> f64 {
        self.probs.get(n).copied().unwrap_or(0.0)
    }

    pub fn max_photons(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Pads with zeros up to `P_n`.
    pub fn padded(&self, n: usize) -> Self {
        let mut probs = self.probs.clone();
        if probs.len() < n + 1 {
            probs.resize(n + 1, 0.0);
        }
        Self { probs }
    }
}

fn check_gamma(gamma: f64) -> Result<(), AnalyticError> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(AnalyticError::InvalidGamma(gamma))
    }
}

fn unit_interval(name: &'static str, value: f64) -> Result<(), AnalyticError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(AnalyticError::OutOfRange { name, value })
    }
}

/// Two-photon weights `(F+, F−) = 1/2 ± I/(1 + I²)` in the symmetric and
/// antisymmetric modes.
pub fn fidelity_optimal(i: f64) -> Result<(f64, f64), AnalyticError> {
    unit_interval("I", i)?;
    let d = 1.0 + i * i;
    Ok(((1.0 + i).powi(2) / (2.0 * d), (1.0 - i).powi(2) / (2.0 * d)))
}

fn expansion_argument(delta_t: f64, gamma: f64) -> Result<f64, AnalyticError> {
    check_gamma(gamma)?;
    let x = PI * gamma * delta_t.abs();
    if x >= EXPANSION_LIMIT {
        return Err(AnalyticError::ExpansionInvalid(x));
    }
    Ok(x)
}

/// Adapted-mode fidelity to leading order, `1 − (πγΔt/2)⁴`.
pub fn fidelity_smalldelay_adapted(delta_t: f64, gamma: f64) -> Result<f64, AnalyticError> {
    let x = expansion_argument(delta_t, gamma)?;
    Ok(1.0 - (x / 2.0).powi(4))
}

/// Fixed-mode fidelity to leading order, `1 − (πγΔt/√2)²`.
pub fn fidelity_smalldelay_fixed(delta_t: f64, gamma: f64) -> Result<f64, AnalyticError> {
    let x = expansion_argument(delta_t, gamma)?;
    Ok(1.0 - (x / SQRT_2).powi(2))
}

/// Lossless statistics of the mode matched to the first click:
/// `P2 = 2I²/(1+I²)`, `P1 = (1−I²)/(1+I²)`, `P0 = 0`.
pub fn fixed_mode_distribution(i: f64) -> Result<PhotonDistribution, AnalyticError> {
    unit_interval("I", i)?;
    let d = 1.0 + i * i;
    let p2 = 2.0 * i * i / d;
    let p1 = (1.0 - i * i) / d;
    Ok(PhotonDistribution::from_raw(vec![0.0, p1, p2]))
}

/// Pure loss of transmission `eta` on a state with at most two photons.
pub fn apply_loss(dist: &PhotonDistribution, eta: f64) -> Result<PhotonDistribution, AnalyticError> {
    unit_interval("eta", eta)?;
    if let Some((index, &value)) = dist.probs.iter().enumerate().skip(3).find(|(_, &p)| p > 0.0) {
        return Err(AnalyticError::UnsupportedSupport { index, value });
    }
    let (p0, p1, p2) = (dist.get(0), dist.get(1), dist.get(2));
    let l = 1.0 - eta;
    Ok(PhotonDistribution::from_raw(vec![
        p2 * l * l + p1 * l + p0,
        2.0 * p2 * eta * l + p1 * eta,
        p2 * eta * eta,
    ]))
}

/// Normalized intensity correlation of the filtered idler, `1 + e^(−2πγ|Δt|)(1 + πγ|Δt|)²`.
pub fn g2_closed_form(delta_t: f64, gamma: f64) -> Result<f64, AnalyticError> {
    check_gamma(gamma)?;
    let x = PI * gamma * delta_t.abs();
    Ok(1.0 + (-2.0 * x).exp() * (1.0 + x).powi(2))
}

/// Two-photon weight of the adapted mode after loss, `η²·F+(I(Δt))`.
pub fn loss_dressed_two_photon_weight(params: &OpoParams, delta_t: f64) -> f64 {
    let (f_plus, _) = fidelity_optimal(params.overlap(delta_t)).expect("overlap lies in (0, 1]");
    params.eta * params.eta * f_plus
}

/// Adapted-mode statistics after loss, with the exact channel acting on
/// `F−|0⟩⟨0| + F+|2⟩⟨2|`.
pub fn adapted_mode_lossy(params: &OpoParams, delta_t: f64) -> PhotonDistribution {
    let (f_plus, f_minus) = fidelity_optimal(params.overlap(delta_t)).expect("overlap lies in (0, 1]");
    let lossless = PhotonDistribution::from_raw(vec![f_minus, 0.0, f_plus]);
    apply_loss(&lossless, params.eta).expect("eta validated at construction")
}

/// Fixed-mode statistics after loss.
pub fn fixed_mode_lossy(params: &OpoParams, delta_t: f64) -> PhotonDistribution {
    let lossless = fixed_mode_distribution(params.overlap(delta_t)).expect("overlap lies in (0, 1]");
    apply_loss(&lossless, params.eta).expect("eta validated at construction")
}

/// Overlap at which the fixed-mode `P2` falls to half its zero-delay value (`I² = 1/3`).
pub fn fixed_mode_half_decay_overlap() -> f64 {
    (1.0f64 / 3.0).sqrt()
}

/// Delay where `I(Δt)` equals `target`, by bisection on the monotone closed form.
pub fn delay_for_overlap(target: f64, gamma: f64) -> Result<f64, AnalyticError> {
    check_gamma(gamma)?;
    if !(target > 0.0 && target <= 1.0) {
        return Err(AnalyticError::OutOfRange {
            name: "I",
            value: target,
        });
    }
    let f = |t: f64| overlap_closed_form(t, gamma).expect("gamma checked") - target;
    let (mut lo, mut hi) = (0.0, 1.0 / gamma);
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
