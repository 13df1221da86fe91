use std::io::{BufRead, Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::sampler::{JointQuadratureSample, JointTable};
use super::HomodyneError;
use crate::fock::MultimodeState;
use crate::modes::{overlap, HeraldPair, ModeFunction, TimeGrid};
use crate::par::task_rng;

const ORTHO_TOL: f64 = 1e-9;
const TRACE_MAGIC: &[u8; 4] = b"QTRC";

/// Homodyne photocurrent over one acquisition window, in vacuum-normalized units:
/// projecting white vacuum onto any normalized mode gives variance 1/2.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureTrace {
    pub grid: TimeGrid,
    pub samples: Vec<f64>,
    pub herald: HeraldPair,
    pub seed: u64,
}

/// `Σ ξ[i]·x[i]·dt`.
pub fn project_trace(trace: &QuadratureTrace, xi: &ModeFunction) -> Result<f64, HomodyneError> {
    if *xi.grid() != trace.grid {
        return Err(crate::modes::ModeError::GridMismatch.into());
    }
    Ok(xi.samples().iter().zip(&trace.samples).map(|(a, b)| a * b).sum::<f64>() * trace.grid.dt())
}

/// Pure shot-noise trace.
pub fn vacuum_trace<R: Rng>(grid: &TimeGrid, herald: HeraldPair, seed: u64, rng: &mut R) -> QuadratureTrace {
    let sigma = (1.0 / (2.0 * grid.dt())).sqrt();
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let samples = (0..grid.n_samples()).map(|_| normal.sample(rng)).collect();
    QuadratureTrace {
        grid: *grid,
        samples,
        herald,
        seed,
    }
}

fn check_pair(f1: &ModeFunction, f2: &ModeFunction) -> Result<(), HomodyneError> {
    let o = overlap(f1, f2)?;
    if o.abs() > ORTHO_TOL {
        return Err(HomodyneError::ModesNotOrthogonal { overlap: o });
    }
    for f in [f1, f2] {
        let norm_sq = f.norm_sq();
        if (norm_sq - 1.0).abs() > ORTHO_TOL {
            return Err(crate::modes::ModeError::NotNormalized { norm_sq }.into());
        }
    }
    Ok(())
}

/// White vacuum trace whose components along `f1` and `f2` are replaced by the
/// given quadratures, so projecting back returns them.
pub fn embed_quadratures<R: Rng>(
    x_f1: f64,
    x_f2: f64,
    f1: &ModeFunction,
    f2: &ModeFunction,
    herald: HeraldPair,
    seed: u64,
    rng: &mut R,
) -> Result<QuadratureTrace, HomodyneError> {
    check_pair(f1, f2)?;
    let mut trace = vacuum_trace(f1.grid(), herald, seed, rng);
    let p1 = project_trace(&trace, f1)?;
    let p2 = project_trace(&trace, f2)?;
    let (d1, d2) = (x_f1 - p1, x_f2 - p2);
    for ((s, a), b) in trace.samples.iter_mut().zip(f1.samples()).zip(f2.samples()) {
        *s += d1 * a + d2 * b;
    }
    Ok(trace)
}

/// Reusable trace generator for one two-mode state living in `(f1, f2)`.
///
/// The LO phase is drawn once per trace and the pair `(x_f1, x_f2)` comes from the
/// joint two-mode sampler; everything orthogonal to both modes is vacuum. The returned
/// sample holds the projections of the finished trace, so projecting it again
/// reproduces them exactly; they differ from the raw draw only by rounding.
#[derive(Clone, Debug)]
pub struct TraceSynthesizer {
    table: JointTable,
    f1: ModeFunction,
    f2: ModeFunction,
}

impl TraceSynthesizer {
    pub fn new(state: &MultimodeState, f1: &ModeFunction, f2: &ModeFunction) -> Result<Self, HomodyneError> {
        check_pair(f1, f2)?;
        let table = JointTable::new(state)?;
        Ok(Self {
            table,
            f1: f1.clone(),
            f2: f2.clone(),
        })
    }

    pub fn synthesize(
        &self,
        herald: HeraldPair,
        seed: u64,
    ) -> Result<(QuadratureTrace, JointQuadratureSample), HomodyneError> {
        let mut rng = task_rng(seed, 0);
        let theta = std::f64::consts::TAU * rng.random::<f64>();
        let (x1, x2) = self.table.draw(theta, &mut rng);
        let trace = embed_quadratures(x1, x2, &self.f1, &self.f2, herald, seed, &mut rng)?;
        let x_f1 = project_trace(&trace, &self.f1)?;
        let x_f2 = project_trace(&trace, &self.f2)?;
        Ok((trace, JointQuadratureSample { x_f1, x_f2, theta }))
    }
}

/// One acquisition; see [`TraceSynthesizer`].
pub fn synthesize_trace(
    state: &MultimodeState,
    f1: &ModeFunction,
    f2: &ModeFunction,
    herald: HeraldPair,
    seed: u64,
) -> Result<(QuadratureTrace, JointQuadratureSample), HomodyneError> {
    TraceSynthesizer::new(state, f1, f2)?.synthesize(herald, seed)
}

/// Row of a quadrature sample file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRecord {
    pub x: f64,
    pub theta_rad: f64,
    pub delta_t_ns: f64,
}

pub fn write_quadrature_csv<W: Write>(records: &[QuadratureRecord], out: W) -> Result<(), HomodyneError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_quadrature_csv<R: Read>(input: R) -> Result<Vec<QuadratureRecord>, HomodyneError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

/// CSV layout: a header row `t_start,dt,n_samples,t1,t2,seed`, its values, a `x` row,
/// then one sample per line.
pub fn write_trace_csv<W: Write>(trace: &QuadratureTrace, mut out: W) -> Result<(), HomodyneError> {
    writeln!(out, "t_start,dt,n_samples,t1,t2,seed")?;
    writeln!(
        out,
        "{:e},{:e},{},{:e},{:e},{}",
        trace.grid.t_start(),
        trace.grid.dt(),
        trace.grid.n_samples(),
        trace.herald.t1,
        trace.herald.t2,
        trace.seed
    )?;
    writeln!(out, "x")?;
    for s in &trace.samples {
        writeln!(out, "{s:e}")?;
    }
    Ok(())
}

fn bad(msg: impl Into<String>) -> HomodyneError {
    HomodyneError::Format(msg.into())
}

pub fn read_trace_csv<R: BufRead>(input: R) -> Result<QuadratureTrace, HomodyneError> {
    let mut lines = input.lines();
    let mut next = || {
        lines
            .next()
            .ok_or_else(|| bad("truncated trace file"))
            .and_then(|l| Ok(l?))
    };
    if next()?.trim() != "t_start,dt,n_samples,t1,t2,seed" {
        return Err(bad("missing trace header"));
    }
    let values = next()?;
    let f: Vec<&str> = values.trim().split(',').collect();
    if f.len() != 6 {
        return Err(bad("header needs six fields"));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("{s}: {e}")));
    let n: usize = f[2].parse().map_err(|_| bad("n_samples"))?;
    let seed: u64 = f[5].parse().map_err(|_| bad("seed"))?;
    let grid = TimeGrid::new(num(f[0])?, num(f[1])?, n)?;
    let herald = HeraldPair::new(num(f[3])?, num(f[4])?);
    if next()?.trim() != "x" {
        return Err(bad("missing sample header"));
    }
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        samples.push(num(next()?.trim())?);
    }
    Ok(QuadratureTrace {
        grid,
        samples,
        herald,
        seed,
    })
}

/// Little-endian binary: `QTRC`, t_start, dt, n_samples (u64), t1, t2, seed (u64), samples.
pub fn write_trace_binary<W: Write>(trace: &QuadratureTrace, mut out: W) -> Result<(), HomodyneError> {
    out.write_all(TRACE_MAGIC)?;
    out.write_all(&trace.grid.t_start().to_le_bytes())?;
    out.write_all(&trace.grid.dt().to_le_bytes())?;
    out.write_all(&(trace.grid.n_samples() as u64).to_le_bytes())?;
    out.write_all(&trace.herald.t1.to_le_bytes())?;
    out.write_all(&trace.herald.t2.to_le_bytes())?;
    out.write_all(&trace.seed.to_le_bytes())?;
    for s in &trace.samples {
        out.write_all(&s.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_trace_binary<R: Read>(mut input: R) -> Result<QuadratureTrace, HomodyneError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != TRACE_MAGIC {
        return Err(bad("not a trace file"));
    }
    let mut word = [0u8; 8];
    let mut read = |input: &mut R| -> Result<[u8; 8], HomodyneError> {
        input.read_exact(&mut word)?;
        Ok(word)
    };
    let t_start = f64::from_le_bytes(read(&mut input)?);
    let dt = f64::from_le_bytes(read(&mut input)?);
    let n = u64::from_le_bytes(read(&mut input)?) as usize;
    let t1 = f64::from_le_bytes(read(&mut input)?);
    let t2 = f64::from_le_bytes(read(&mut input)?);
    let seed = u64::from_le_bytes(read(&mut input)?);
    let grid = TimeGrid::new(t_start, dt, n)?;
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        samples.push(f64::from_le_bytes(read(&mut input)?));
    }
    Ok(QuadratureTrace {
        grid,
        samples,
        herald: HeraldPair::new(t1, t2),
        seed,
    })
}
