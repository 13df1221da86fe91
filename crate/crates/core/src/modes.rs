//! Real temporal mode functions sampled on a uniform time grid.
//!
//! Amplitudes carry units of s^(-1/2) so that `Σ f[i]² dt` is dimensionless.
//! Every inner product in the crate is the plain Riemann sum `Σ a[i] b[i] dt`.

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

/// Modes whose overlap reaches `1 - DEGENERACY_EPS` are treated as identical.
pub const DEGENERACY_EPS: f64 = 1e-6;
/// Largest L2 mass a trigger mode may lose outside the grid.
pub const MAX_TAIL_MASS: f64 = 1e-6;
/// Seeds whose Gram matrix is worse conditioned than this are rejected.
pub const MAX_GRAM_CONDITION: f64 = 1e8;

const NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModeError {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("cavity bandwidth must be positive, got {0} Hz")]
    InvalidGamma(f64),
    #[error("grid cannot hold the mode tails: {mass:.3e} of the L2 mass falls outside")]
    MarginTooSmall { mass: f64 },
    #[error("mode functions live on different time grids")]
    GridMismatch,
    #[error("trigger modes are degenerate (overlap {overlap})")]
    DegenerateModes { overlap: f64 },
    #[error("seed modes are numerically dependent (Gram condition number {condition:.3e})")]
    RankDeficient { condition: f64 },
    #[error("mode has zero norm")]
    ZeroNorm,
    #[error("mode is not normalized (norm² = {norm_sq})")]
    NotNormalized { norm_sq: f64 },
    #[error("requested {requested} modes but the grid only has {available} samples")]
    TooManyModes { requested: usize, available: usize },
}

/// Uniform sampling grid `t_k = t_start + k·dt`, `k = 0..n_samples`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    t_start: f64,
    dt: f64,
    n_samples: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, dt: f64, n_samples: usize) -> Result<Self, ModeError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ModeError::InvalidGrid(format!("dt must be positive, got {dt}")));
        }
        if n_samples < 2 {
            return Err(ModeError::InvalidGrid(format!(
                "need at least two samples, got {n_samples}"
            )));
        }
        if !t_start.is_finite() {
            return Err(ModeError::InvalidGrid("t_start is not finite".into()));
        }
        Ok(Self { t_start, dt, n_samples })
    }

    /// Grid starting at zero that covers `window` seconds at resolution `dt`.
    pub fn with_window(dt: f64, window: f64) -> Result<Self, ModeError> {
        if !(window > 0.0) {
            return Err(ModeError::InvalidGrid(format!("window must be positive, got {window}")));
        }
        Self::new(0.0, dt, (window / dt).round() as usize)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }

    /// Time of the last sample.
    pub fn t_end(&self) -> f64 {
        self.time(self.n_samples - 1)
    }

    pub fn span(&self) -> f64 {
        self.n_samples as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_samples).map(move |k| self.time(k))
    }
}

impl Default for TimeGrid {
    /// 10 GS/s over 500 ns.
    fn default() -> Self {
        Self {
            t_start: 0.0,
            dt: 0.1e-9,
            n_samples: 5000,
        }
    }
}

/// Times of the two heralding clicks. The delay may be negative; formulas use `|Δt|`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HeraldPair {
    pub t1: f64,
    pub t2: f64,
}

impl HeraldPair {
    pub fn new(t1: f64, t2: f64) -> Self {
        Self { t1, t2 }
    }

    pub fn delay(&self) -> f64 {
        self.t2 - self.t1
    }

    pub fn abs_delay(&self) -> f64 {
        self.delay().abs()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeFunction {
    grid: TimeGrid,
    samples: Vec<f64>,
    normalized: bool,
}

impl ModeFunction {
    /// Wraps raw samples; the result is flagged as not normalized.
    pub fn from_samples(grid: TimeGrid, samples: Vec<f64>) -> Result<Self, ModeError> {
        if samples.len() != grid.n_samples() {
            return Err(ModeError::GridMismatch);
        }
        Ok(Self {
            grid,
            samples,
            normalized: false,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm_sq(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum::<f64>() * self.grid.dt
    }

    /// Divides by the discrete norm.
    pub fn normalized(mut self) -> Result<Self, ModeError> {
        let norm = self.norm_sq().sqrt();
        if !(norm > 0.0) {
            return Err(ModeError::ZeroNorm);
        }
        self.samples.iter_mut().for_each(|v| *v /= norm);
        self.normalized = true;
        Ok(self)
    }

    /// `Σ c_j·m_j` over modes sharing one grid. The result is not flagged normalized.
    pub fn linear_combination(terms: &[(f64, &ModeFunction)]) -> Result<Self, ModeError> {
        let (_, first) = terms.first().ok_or(ModeError::ZeroNorm)?;
        let grid = first.grid;
        let mut samples = vec![0.0; grid.n_samples()];
        for (c, m) in terms {
            if m.grid != grid {
                return Err(ModeError::GridMismatch);
            }
            for (s, v) in samples.iter_mut().zip(&m.samples) {
                *s += c * v;
            }
        }
        Ok(Self {
            grid,
            samples,
            normalized: false,
        })
    }

    fn require_normalized(&self) -> Result<(), ModeError> {
        let norm_sq = self.norm_sq();
        if (norm_sq - 1.0).abs() > NORM_TOL {
            return Err(ModeError::NotNormalized { norm_sq });
        }
        Ok(())
    }

    /// Writes `(t_seconds, amplitude)` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_seconds", "amplitude"])?;
        for (t, v) in self.grid.times().zip(&self.samples) {
            w.write_record([t.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_gamma(gamma: f64) -> Result<(), ModeError> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(ModeError::InvalidGamma(gamma))
    }
}

/// Double-sided exponential mode `√(πγ)·exp(−πγ|t − t_i|)` carried by a click at `t_i`,
/// renormalized on the grid after sampling.
pub fn make_trigger_mode(t_i: f64, gamma: f64, grid: &TimeGrid) -> Result<ModeFunction, ModeError> {
    check_gamma(gamma)?;
    let rate = PI * gamma;
    let left = t_i - grid.t_start();
    let right = grid.t_end() - t_i;
    let mass = if left < 0.0 || right < 0.0 {
        1.0
    } else {
        0.5 * (-2.0 * rate * left).exp() + 0.5 * (-2.0 * rate * right).exp()
    };
    if mass > MAX_TAIL_MASS {
        return Err(ModeError::MarginTooSmall { mass });
    }
    let peak = rate.sqrt();
    let samples = grid.times().map(|t| peak * (-rate * (t - t_i).abs()).exp()).collect();
    ModeFunction {
        grid: *grid,
        samples,
        normalized: false,
    }
    .normalized()
}

/// Discrete inner product `Σ a[i]·b[i]·dt`.
pub fn overlap(a: &ModeFunction, b: &ModeFunction) -> Result<f64, ModeError> {
    if a.grid != b.grid {
        return Err(ModeError::GridMismatch);
    }
    Ok(a.samples.iter().zip(&b.samples).map(|(x, y)| x * y).sum::<f64>() * a.grid.dt)
}

/// Continuous-time overlap of two trigger modes, `e^(−πγ|Δt|)(1 + πγ|Δt|)`.
pub fn overlap_closed_form(delta_t: f64, gamma: f64) -> Result<f64, ModeError> {
    check_gamma(gamma)?;
    let x = PI * gamma * delta_t.abs();
    Ok((-x).exp() * (1.0 + x))
}

/// Symmetric and antisymmetric combinations `(g1 ± g2)/√(2(1 ± I))`.
pub fn make_symmetric_antisymmetric(
    g1: &ModeFunction,
    g2: &ModeFunction,
) -> Result<(ModeFunction, ModeFunction), ModeError> {
    g1.require_normalized()?;
    g2.require_normalized()?;
    let i = overlap(g1, g2)?;
    if i >= 1.0 - DEGENERACY_EPS {
        return Err(ModeError::DegenerateModes { overlap: i });
    }
    let cp = 1.0 / (2.0 * (1.0 + i)).sqrt();
    let cm = 1.0 / (2.0 * (1.0 - i)).sqrt();
    let f1 = ModeFunction::linear_combination(&[(cp, g1), (cp, g2)])?.normalized()?;
    let f2 = ModeFunction::linear_combination(&[(cm, g1), (-cm, g2)])?.normalized()?;
    Ok((f1, f2))
}

/// Analysis pair for a herald pair: `(f1, f2)` from [`make_symmetric_antisymmetric`],
/// or `(g1, h)` when the two trigger modes nearly coincide (`I ≥ 1 − DEGENERACY_EPS`).
/// There `h` is the Gram–Schmidt remainder of `g2`, so the pair still spans both
/// trigger modes, or an arbitrary filler if `g2` equals `g1` to working precision.
pub fn adapted_mode_pair(g1: &ModeFunction, g2: &ModeFunction) -> Result<(ModeFunction, ModeFunction), ModeError> {
    match make_symmetric_antisymmetric(g1, g2) {
        Err(ModeError::DegenerateModes { .. }) => {
            let both = [g1.clone(), g2.clone()];
            let mut modes = match extend_orthonormal_basis(&both, &g1.grid, 2) {
                Err(ModeError::RankDeficient { .. }) => extend_orthonormal_basis(&both[..1], &g1.grid, 2)?,
                other => other?,
            };
            let h = modes.pop().expect("two modes");
            Ok((modes.pop().expect("two modes"), h))
        }
        other => other,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}

/// Orthonormal register whose leading modes span `seeds`.
///
/// Seeds are orthonormalized by Gram–Schmidt with one re-orthogonalization pass;
/// the first output is the first seed itself (only rescaled if it was not already
/// normalized). The remaining `k - seeds.len()` modes are drawn from the discrete
/// cosine family `cos(πj(k + 1/2)/n)`, `j = 0, 1, …`, orthogonalized against
/// everything already accepted. Any orthonormal completion works for the reduced
/// photon statistics, which depend only on the seed span.
pub fn extend_orthonormal_basis(
    seeds: &[ModeFunction],
    grid: &TimeGrid,
    k: usize,
) -> Result<Vec<ModeFunction>, ModeError> {
    let n = grid.n_samples();
    if k > n {
        return Err(ModeError::TooManyModes {
            requested: k,
            available: n,
        });
    }
    if seeds.iter().any(|s| s.grid != *grid) {
        return Err(ModeError::GridMismatch);
    }
    if k < seeds.len() {
        return Err(ModeError::TooManyModes {
            requested: seeds.len(),
            available: k,
        });
    }
    if !seeds.is_empty() {
        let m = seeds.len();
        let gram = DMatrix::from_fn(m, m, |a, b| dot(&seeds[a].samples, &seeds[b].samples) * grid.dt());
        let eig = SymmetricEigen::new(gram).eigenvalues;
        let max = eig.max();
        let min = eig.min();
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition < MAX_GRAM_CONDITION) {
            return Err(ModeError::RankDeficient { condition });
        }
    }

    let dt = grid.dt();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut out: Vec<ModeFunction> = Vec::with_capacity(k);

    for (idx, seed) in seeds.iter().enumerate() {
        if idx == 0 {
            let first = if seed.normalized {
                seed.clone()
            } else {
                seed.clone().normalized()?
            };
            basis.push(first.samples.clone());
            out.push(first);
            continue;
        }
        let v = orthogonalize(&seed.samples, &basis, dt);
        let norm = (dot(&v, &v) * dt).sqrt();
        let mode = ModeFunction {
            grid: *grid,
            samples: v,
            normalized: false,
        }
        .normalized()?;
        debug_assert!(norm > 0.0);
        basis.push(mode.samples.clone());
        out.push(mode);
    }

    let mut j = 0usize;
    while out.len() < k {
        if j >= n {
            return Err(ModeError::TooManyModes {
                requested: k,
                available: out.len(),
            });
        }
        let cand: Vec<f64> = (0..n)
            .map(|i| (PI * j as f64 * (i as f64 + 0.5) / n as f64).cos())
            .collect();
        j += 1;
        let before = dot(&cand, &cand);
        let v = orthogonalize(&cand, &basis, dt);
        if dot(&v, &v) < 1e-6 * before {
            continue;
        }
        let mode = ModeFunction {
            grid: *grid,
            samples: v,
            normalized: false,
        }
        .normalized()?;
        basis.push(mode.samples.clone());
        out.push(mode);
    }
    Ok(out)
}

fn orthogonalize(v: &[f64], basis: &[Vec<f64>], dt: f64) -> Vec<f64> {
    let mut v = v.to_vec();
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, &v) * dt;
            axpy(&mut v, -c, b);
        }
    }
    v
}
