use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::wavefunction::hermite_functions;
use super::HomodyneError;
use crate::fock::{DensityMatrix, MultimodeState};
use crate::par::{task_rng, Execution};

/// Quadrature range covered by the samplers and the tomography POVM.
pub const X_RANGE: f64 = 8.0;
/// Grid points of the one-mode inverse-CDF table.
pub const GRID_1D: usize = 1 << 14;
/// Cells per axis of the two-mode table.
pub const CELLS_2D: usize = 512;

const CHUNK: usize = 8192;

/// One homodyne outcome `x` at local-oscillator phase `theta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSample {
    pub x: f64,
    pub theta: f64,
}

/// Simultaneous outcomes of two orthogonal temporal modes read with one LO phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointQuadratureSample {
    pub x_f1: f64,
    pub x_f2: f64,
    pub theta: f64,
}

/// How the LO phase evolves from one acquisition to the next.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhaseSchedule {
    /// Independent uniform phase per acquisition.
    #[default]
    Uniform,
    /// `θ_j = j·step mod 2π`.
    LinearSweep { step: f64 },
}

impl PhaseSchedule {
    fn phase<R: Rng>(&self, index: usize, rng: &mut R) -> f64 {
        match *self {
            PhaseSchedule::Uniform => TAU * rng.random::<f64>(),
            PhaseSchedule::LinearSweep { step } => (index as f64 * step).rem_euclid(TAU),
        }
    }
}

/// Cumulative Fourier components of `p(x|θ)` on a uniform grid over `[−8, 8]`.
#[derive(Clone, Debug)]
pub struct QuadratureTable {
    step: f64,
    /// `(k, cumulative cos part, cumulative sin part)` for harmonics with support.
    harmonics: Vec<(usize, Vec<f64>, Vec<f64>)>,
}

impl QuadratureTable {
    pub fn new(rho: &DensityMatrix) -> Self {
        let d = rho.dim();
        let n_points = GRID_1D;
        let step = 2.0 * X_RANGE / (n_points - 1) as f64;
        let m = rho.matrix();
        let mut dens_c = vec![vec![0.0; n_points]; d];
        let mut dens_s = vec![vec![0.0; n_points]; d];
        for j in 0..n_points {
            let x = -X_RANGE + j as f64 * step;
            let psi = hermite_functions(d - 1, x);
            for a in 0..d {
                for b in 0..=a {
                    let k = a - b;
                    let w = if k == 0 { 1.0 } else { 2.0 };
                    let pp = w * psi[a] * psi[b];
                    dens_c[k][j] += m[(a, b)].re * pp;
                    dens_s[k][j] += m[(a, b)].im * pp;
                }
            }
        }
        let cumulate = |v: &[f64]| {
            let mut out = vec![0.0; v.len()];
            for j in 1..v.len() {
                out[j] = out[j - 1] + 0.5 * step * (v[j - 1] + v[j]);
            }
            out
        };
        let mut harmonics = Vec::new();
        for k in 0..d {
            let active = dens_c[k].iter().chain(&dens_s[k]).any(|v| v.abs() > 1e-300);
            if k == 0 || active {
                harmonics.push((k, cumulate(&dens_c[k]), cumulate(&dens_s[k])));
            }
        }
        Self { step, harmonics }
    }

    fn cdf(&self, j: usize, trig: &[(f64, f64)]) -> f64 {
        self.harmonics
            .iter()
            .zip(trig)
            .map(|((_, c, s), (cos, sin))| c[j] * cos + s[j] * sin)
            .sum()
    }

    /// Inverse-CDF draw at phase `theta` for a uniform variate `u`.
    pub fn invert(&self, theta: f64, u: f64) -> f64 {
        let trig: Vec<(f64, f64)> = self
            .harmonics
            .iter()
            .map(|(k, _, _)| {
                let a = *k as f64 * theta;
                (a.cos(), a.sin())
            })
            .collect();
        let last = GRID_1D - 1;
        let target = u * self.cdf(last, &trig);
        let (mut lo, mut hi) = (0usize, last);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.cdf(mid, &trig) <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let f_lo = self.cdf(lo, &trig);
        let f_hi = self.cdf(hi, &trig);
        let frac = if f_hi > f_lo {
            ((target - f_lo) / (f_hi - f_lo)).clamp(0.0, 1.0)
        } else {
            0.5
        };
        -X_RANGE + (lo as f64 + frac) * self.step
    }
}

fn checked(rho: &DensityMatrix) -> Result<(), HomodyneError> {
    DensityMatrix::new(rho.matrix().clone()).map_err(|e| HomodyneError::InvalidDensity(e.to_string()))?;
    Ok(())
}

/// I.i.d. phase-randomized homodyne samples of a single-mode state.
pub fn sample_quadratures(
    rho: &DensityMatrix,
    count: usize,
    seed: u64,
) -> Result<Vec<QuadratureSample>, HomodyneError> {
    sample_quadratures_with(rho, count, seed, PhaseSchedule::Uniform, Execution::default())
}

pub fn sample_quadratures_with(
    rho: &DensityMatrix,
    count: usize,
    seed: u64,
    phases: PhaseSchedule,
    exec: Execution,
) -> Result<Vec<QuadratureSample>, HomodyneError> {
    if count == 0 {
        return Err(HomodyneError::EmptyRequest);
    }
    checked(rho)?;
    let table = QuadratureTable::new(rho);
    let chunks = count.div_ceil(CHUNK);
    let parts = exec.map(chunks, |c| {
        let mut rng = task_rng(seed, c as u64);
        let start = c * CHUNK;
        let end = (start + CHUNK).min(count);
        (start..end)
            .map(|idx| {
                let theta = phases.phase(idx, &mut rng);
                let u: f64 = rng.random();
                QuadratureSample {
                    x: table.invert(theta, u),
                    theta,
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(parts.into_iter().flatten().collect())
}

/// Cell-resolved joint density of two modes sharing one LO phase.
#[derive(Clone, Debug)]
pub struct JointTable {
    /// `ψ_m(c_i)ψ_n(c_i)` at cell centres, flattened `(m, n)` index, row per cell.
    products: Vec<Vec<f64>>,
    /// Harmonic `k` of the two-mode kernel, real/imaginary parts as `(D, D)` matrices.
    harmonics: Vec<(i32, Vec<f64>, Vec<f64>)>,
    col_sum: Vec<f64>,
    dim: usize,
    cell: f64,
}

impl JointTable {
    pub fn new(state: &MultimodeState) -> Result<Self, HomodyneError> {
        if state.modes() != 2 {
            return Err(HomodyneError::InvalidDensity(format!(
                "joint sampler needs a two-mode state, got {} modes",
                state.modes()
            )));
        }
        state
            .check_invariants()
            .map_err(|e| HomodyneError::InvalidDensity(e.to_string()))?;
        let n = state.n_max() + 1;
        let dim = n * n;
        let cell = 2.0 * X_RANGE / CELLS_2D as f64;
        let products: Vec<Vec<f64>> = (0..CELLS_2D)
            .map(|i| {
                let c = -X_RANGE + (i as f64 + 0.5) * cell;
                let psi = hermite_functions(n - 1, c);
                let mut row = vec![0.0; dim];
                for m in 0..n {
                    for k in 0..n {
                        row[m * n + k] = psi[m] * psi[k];
                    }
                }
                row
            })
            .collect();

        let basis = state.basis();
        let rho = state.rho();
        let span = 2 * state.n_max() as i32;
        let mut harmonics: Vec<(i32, Vec<f64>, Vec<f64>)> = (-span..=span)
            .map(|k| (k, vec![0.0; dim * dim], vec![0.0; dim * dim]))
            .collect();
        for a in 0..basis.dim() {
            let ta = basis.tuple(a);
            for b in 0..basis.dim() {
                let tb = basis.tuple(b);
                let c: Complex64 = rho[(a, b)];
                if c.norm_sqr() == 0.0 {
                    continue;
                }
                let k = (ta[0] as i32 + ta[1] as i32) - (tb[0] as i32 + tb[1] as i32);
                let row = ta[0] as usize * n + tb[0] as usize;
                let col = ta[1] as usize * n + tb[1] as usize;
                let h = &mut harmonics[(k + span) as usize];
                h.1[row * dim + col] += c.re;
                h.2[row * dim + col] += c.im;
            }
        }
        harmonics.retain(|(_, re, im)| re.iter().chain(im).any(|v| *v != 0.0));
        let mut col_sum = vec![0.0; dim];
        for row in &products {
            col_sum.iter_mut().zip(row).for_each(|(s, v)| *s += v);
        }
        Ok(Self {
            products,
            harmonics,
            col_sum,
            dim,
            cell,
        })
    }

    /// Real kernel `R(θ)` with `p(i, j) = a_iᵀ R b_j`.
    fn kernel(&self, theta: f64) -> Vec<f64> {
        let mut r = vec![0.0; self.dim * self.dim];
        for (k, re, im) in &self.harmonics {
            // Re[ρ e^{−ikθ}]
            let (s, c) = (-(*k as f64) * theta).sin_cos();
            for ((out, a), b) in r.iter_mut().zip(re).zip(im) {
                *out += a * c - b * s;
            }
        }
        r
    }

    fn pick(weights: &[f64], u: f64) -> usize {
        let total: f64 = weights.iter().sum();
        let target = u * total;
        let mut acc = 0.0;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if acc > target {
                return i;
            }
        }
        weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1)
    }

    /// Draws one cell from the flattened `512²` distribution at phase `theta` (row
    /// marginal, then the conditional column), uniform inside the cell.
    pub fn draw<R: Rng>(&self, theta: f64, rng: &mut R) -> (f64, f64) {
        let d = self.dim;
        let r = self.kernel(theta);
        let v: Vec<f64> = (0..d)
            .map(|p| (0..d).map(|q| r[p * d + q] * self.col_sum[q]).sum())
            .collect();
        let row_w: Vec<f64> = self
            .products
            .iter()
            .map(|a| a.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>().max(0.0))
            .collect();
        let i = Self::pick(&row_w, rng.random());
        let a = &self.products[i];
        let w: Vec<f64> = (0..d).map(|q| (0..d).map(|p| a[p] * r[p * d + q]).sum()).collect();
        let col_w: Vec<f64> = self
            .products
            .iter()
            .map(|b| b.iter().zip(&w).map(|(x, y)| x * y).sum::<f64>().max(0.0))
            .collect();
        let j = Self::pick(&col_w, rng.random());
        let x1 = -X_RANGE + (i as f64 + rng.random::<f64>()) * self.cell;
        let x2 = -X_RANGE + (j as f64 + rng.random::<f64>()) * self.cell;
        (x1, x2)
    }
}

/// Samples `p(x1, x2 | θ)` of a two-mode state with `θ` uniform.
pub fn joint_sample_two_modes(
    state: &MultimodeState,
    count: usize,
    seed: u64,
) -> Result<Vec<JointQuadratureSample>, HomodyneError> {
    joint_sample_two_modes_with(state, count, seed, Execution::default())
}

pub fn joint_sample_two_modes_with(
    state: &MultimodeState,
    count: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<JointQuadratureSample>, HomodyneError> {
    if count == 0 {
        return Err(HomodyneError::EmptyRequest);
    }
    let table = JointTable::new(state)?;
    let chunks = count.div_ceil(CHUNK);
    let parts = exec.map(chunks, |c| {
        let mut rng = task_rng(seed, c as u64);
        let start = c * CHUNK;
        let end = (start + CHUNK).min(count);
        (start..end)
            .map(|_| {
                let theta = TAU * rng.random::<f64>();
                let (x_f1, x_f2) = table.draw(theta, &mut rng);
                JointQuadratureSample { x_f1, x_f2, theta }
            })
            .collect::<Vec<_>>()
    });
    Ok(parts.into_iter().flatten().collect())
}
