//! Configured runs behind the command-line tool: the `g²` measurement, the delay
//! sweeps, the four-mode panels and the full click-to-tomography pipeline.
//!
//! Every run is a pure function of `(config, seed)`. Outputs are collected first and
//! written by one writer together with a `manifest.json`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analytic::{
    adapted_mode_lossy, delay_for_overlap, fixed_mode_half_decay_overlap, fixed_mode_lossy, g2_closed_form,
    loss_dressed_two_photon_weight, AnalyticError, OpoParams,
};
use crate::clicks::{g2_histogram, select_coincidences, ClickError, CoincidencePair, ThermalSource};
use crate::fock::{apply_loss_channel, build_heralded_state, reduce_to_mode, FockError, ModeRegister, MultimodeState};
use crate::homodyne::{
    read_quadrature_csv, sample_quadratures, write_quadrature_csv, HomodyneError, QuadratureRecord, QuadratureSample,
    TraceSynthesizer,
};
use crate::modes::{adapted_mode_pair, make_trigger_mode, HeraldPair, ModeError, ModeFunction, TimeGrid};
use crate::par::{task_rng, Execution};
use crate::tomo::{ml_diagonal, ml_full, MlConfig, MlResult, TomoError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no delay bin reached {min} pairs")]
    InsufficientPairs { min: usize },
    #[error(transparent)]
    Mode(#[from] ModeError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Homodyne(#[from] HomodyneError),
    #[error(transparent)]
    Clicks(#[from] ClickError),
    #[error(transparent)]
    Tomo(#[from] TomoError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    /// Short machine-readable name.
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentError::InvalidConfig(_) => "invalid_config",
            ExperimentError::InsufficientPairs { .. } => "insufficient_pairs",
            ExperimentError::Mode(_) => "modes",
            ExperimentError::Analytic(_) => "analytic",
            ExperimentError::Fock(_) => "fock",
            ExperimentError::Homodyne(_) => "homodyne",
            ExperimentError::Clicks(_) => "clicks",
            ExperimentError::Tomo(_) => "tomo",
            ExperimentError::Io(_) => "io",
            ExperimentError::Toml(_) => "config_parse",
            ExperimentError::Json(_) => "json",
        }
    }
}

type Result<T> = std::result::Result<T, ExperimentError>;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(ExperimentError::InvalidConfig(msg.into()))
}

/// Homodyne acquisition grid, in seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dt: f64,
    pub window: f64,
    /// Time of the first herald inside the window.
    #[serde(default = "default_herald")]
    pub herald: f64,
}

fn default_herald() -> f64 {
    200e-9
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            dt: 0.1e-9,
            window: 500e-9,
            herald: default_herald(),
        }
    }
}

/// Settings of the `g²` measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct G2Config {
    pub events: usize,
    pub mean_rate_hz: f64,
    pub dt_field_ns: f64,
    pub bin_width_ns: f64,
    pub max_delay_ns: f64,
}

impl Default for G2Config {
    fn default() -> Self {
        Self {
            events: 1_000_000,
            mean_rate_hz: 5e7,
            dt_field_ns: 0.5,
            bin_width_ns: 0.5,
            max_delay_ns: 60.0,
        }
    }
}

/// Settings of the click-to-tomography pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndToEndConfig {
    pub mean_rate_hz: f64,
    pub dt_field_ns: f64,
    pub dead_time_ns: f64,
    pub delay_bin_ns: f64,
    /// Stop once this many pairs have been accepted.
    pub max_pairs: usize,
    pub min_pairs_per_bin: usize,
}

impl Default for EndToEndConfig {
    fn default() -> Self {
        Self {
            mean_rate_hz: 5e7,
            dt_field_ns: 0.5,
            dead_time_ns: 500.0,
            delay_bin_ns: 2.0,
            max_pairs: 100_000,
            min_pairs_per_bin: 1000,
        }
    }
}

/// Parameters shared by all commands; see `configs/` for the checked-in defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub gamma_hz: f64,
    pub eta: f64,
    #[serde(default)]
    pub grid: GridConfig,
    pub delays_ns: Vec<f64>,
    pub acceptance_window_ns: f64,
    pub samples_per_point: usize,
    pub rng_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub tomo: MlConfig,
    #[serde(default)]
    pub g2: G2Config,
    #[serde(default)]
    pub end_to_end: EndToEndConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            gamma_hz: 53e6,
            eta: 0.76,
            grid: GridConfig::default(),
            delays_ns: (0..=22).map(|k| 2.0 * k as f64).collect(),
            acceptance_window_ns: 0.8,
            samples_per_point: 100_000,
            rng_seed: 20_160_425,
            output_dir: PathBuf::from("out"),
            tomo: MlConfig::default(),
            g2: G2Config::default(),
            end_to_end: EndToEndConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                invalid(format!("{name} must be positive, got {v}"))
            }
        };
        pos("gamma_hz", self.gamma_hz)?;
        if !(0.0..=1.0).contains(&self.eta) {
            return invalid(format!("eta must lie in [0, 1], got {}", self.eta));
        }
        pos("grid.dt", self.grid.dt)?;
        pos("grid.window", self.grid.window)?;
        if !(self.grid.herald > 0.0 && self.grid.herald < self.grid.window) {
            return invalid("grid.herald must lie inside the window");
        }
        if self.delays_ns.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return invalid("delays_ns must be finite and non-negative");
        }
        if self.delays_ns.windows(2).any(|w| w[0] > w[1]) {
            return invalid("delays_ns must be sorted ascending");
        }
        pos("acceptance_window_ns", self.acceptance_window_ns)?;
        if self.samples_per_point == 0 {
            return invalid("samples_per_point must be positive");
        }
        self.tomo.validate()?;
        pos("g2.mean_rate_hz", self.g2.mean_rate_hz)?;
        pos("g2.dt_field_ns", self.g2.dt_field_ns)?;
        pos("g2.bin_width_ns", self.g2.bin_width_ns)?;
        pos("g2.max_delay_ns", self.g2.max_delay_ns)?;
        pos("end_to_end.mean_rate_hz", self.end_to_end.mean_rate_hz)?;
        pos("end_to_end.dt_field_ns", self.end_to_end.dt_field_ns)?;
        pos("end_to_end.delay_bin_ns", self.end_to_end.delay_bin_ns)?;
        if self.end_to_end.dead_time_ns < 0.0 {
            return invalid("end_to_end.dead_time_ns must be non-negative");
        }
        Ok(())
    }

    pub fn params(&self) -> OpoParams {
        OpoParams::new(self.gamma_hz, self.eta).expect("validated")
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        Ok(TimeGrid::with_window(self.grid.dt, self.grid.window)?)
    }

    /// SHA-256 of the canonical JSON form, without `output_dir`.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&Self {
            output_dir: PathBuf::new(),
            ..self.clone()
        })
        .expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Independent sub-seed for labelled parts of a run.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    task_rng(seed, label).random()
}

/// Herald geometry and lossy heralded state for one delay.
#[derive(Clone, Debug)]
pub struct DelayModel {
    pub delta_t: f64,
    pub g1: ModeFunction,
    pub g2: ModeFunction,
    pub f1: ModeFunction,
    pub f2: ModeFunction,
    /// State after loss on the register `(f1, f2)`.
    pub state: MultimodeState,
}

impl DelayModel {
    pub fn new(grid: &TimeGrid, herald: f64, delta_t: f64, gamma: f64, eta: f64) -> Result<Self> {
        let g1 = make_trigger_mode(herald, gamma, grid)?;
        let g2 = make_trigger_mode(herald + delta_t, gamma, grid)?;
        let (f1, f2) = adapted_mode_pair(&g1, &g2)?;
        let register = ModeRegister::new(vec![f1.clone(), f2.clone()])?;
        let state = apply_loss_channel(&build_heralded_state(&g1, &g2, &register, 2)?, eta)?;
        Ok(Self {
            delta_t,
            g1,
            g2,
            f1,
            f2,
            state,
        })
    }

    pub fn from_config(cfg: &ExperimentConfig, delta_t: f64) -> Result<Self> {
        Self::new(&cfg.time_grid()?, cfg.grid.herald, delta_t, cfg.gamma_hz, cfg.eta)
    }

    /// Phase-randomized homodyne samples of one analysis mode, reconstructed.
    pub fn reconstruct(&self, mode: &ModeFunction, samples: usize, seed: u64, tomo: &MlConfig) -> Result<MlResult> {
        let rho = reduce_to_mode(&self.state, mode)?;
        let xs: Vec<f64> = sample_quadratures(&rho, samples, seed)?
            .into_iter()
            .map(|s| s.x)
            .collect();
        Ok(ml_diagonal(&xs, tomo)?)
    }
}

/// A CSV or JSON file produced by a command.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

impl Artifact {
    fn json(name: &str, value: &impl Serialize) -> Self {
        let mut contents = serde_json::to_vec_pretty(value).expect("serializable");
        contents.push(b'\n');
        Self {
            name: name.into(),
            contents,
        }
    }
}

/// Files of one command plus the values the summary line reports.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub command: String,
    pub artifacts: Vec<Artifact>,
    pub summary: serde_json::Value,
}

impl RunOutput {
    /// Writes every artifact and `manifest.json` under `dir`.
    pub fn write(&self, dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
        fs::create_dir_all(dir)?;
        for a in &self.artifacts {
            fs::File::create(dir.join(&a.name))?.write_all(&a.contents)?;
        }
        let manifest = serde_json::json!({
            "command": self.command,
            "config_sha256": cfg.hash(),
            "seed": cfg.rng_seed,
            "package": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "parallel": cfg!(feature = "parallel"),
            "outputs": self.artifacts.iter().map(|a| a.name.clone()).collect::<Vec<_>>(),
            "summary": self.summary,
        });
        let mut text = serde_json::to_vec_pretty(&manifest)?;
        text.push(b'\n');
        fs::write(dir.join("manifest.json"), text)?;
        Ok(())
    }

    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }
}

fn csv_bytes(header: &[&str], rows: &[Vec<f64>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Simulated `g²(Δt)` histogram against the closed form.
pub fn run_g2(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let g = &cfg.g2;
    let min_delay = 5.0 / (std::f64::consts::PI * cfg.gamma_hz);
    if g.max_delay_ns * 1e-9 < min_delay {
        return invalid(format!(
            "g2.max_delay_ns must be at least 5/(πγ) = {:.1} ns",
            min_delay * 1e9
        ));
    }
    let source = ThermalSource::new(cfg.gamma_hz, g.dt_field_ns * 1e-9)?;
    let stream = source.stream_events(
        g.mean_rate_hz,
        g.events,
        derive_seed(cfg.rng_seed, 1),
        Execution::default(),
    )?;
    let hist = g2_histogram(&stream, g.bin_width_ns * 1e-9, g.max_delay_ns * 1e-9)?;
    let mut rows = Vec::with_capacity(hist.g2.len());
    let mut max_dev: f64 = 0.0;
    for (k, emp) in hist.g2.iter().enumerate() {
        let theory = g2_closed_form(hist.center(k), cfg.gamma_hz)?;
        max_dev = max_dev.max((emp - theory).abs());
        rows.push(vec![hist.center(k) * 1e9, *emp, theory]);
    }
    let summary = serde_json::json!({
        "events": stream.len(),
        "duration_s": stream.duration,
        "g2_zero": hist.g2[0],
        "max_abs_deviation": max_dev,
        "plateau_mean_counts": hist.plateau_mean,
        "bin_width_ns": g.bin_width_ns,
    });
    Ok(RunOutput {
        command: "g2".into(),
        artifacts: vec![
            Artifact {
                name: "g2.csv".into(),
                contents: csv_bytes(&["delay_ns", "g2_empirical", "g2_theory"], &rows),
            },
            Artifact::json("g2_summary.json", &summary),
        ],
        summary,
    })
}

/// One point of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta_t_ns: f64,
    pub analytic: Vec<f64>,
    pub reconstructed: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl SweepPoint {
    /// Whether every listed component lies within `k` standard errors.
    pub fn within(&self, k: f64, components: &[usize]) -> bool {
        components
            .iter()
            .all(|&n| (self.reconstructed[n] - self.analytic[n]).abs() <= k * self.stderr[n])
    }
}

fn sweep<F>(cfg: &ExperimentConfig, label: u64, analytic: F, fixed: bool) -> Result<Vec<SweepPoint>>
where
    F: Fn(f64) -> Vec<f64> + Sync,
{
    let grid = cfg.time_grid()?;
    let results = Execution::default().map(cfg.delays_ns.len(), |k| -> Result<SweepPoint> {
        let dt_ns = cfg.delays_ns[k];
        let model = DelayModel::new(&grid, cfg.grid.herald, dt_ns * 1e-9, cfg.gamma_hz, cfg.eta)?;
        let mode = if fixed { &model.g1 } else { &model.f1 };
        let seed = derive_seed(derive_seed(cfg.rng_seed, label), k as u64);
        let r = model.reconstruct(mode, cfg.samples_per_point, seed, &cfg.tomo)?;
        Ok(SweepPoint {
            delta_t_ns: dt_ns,
            analytic: analytic(dt_ns * 1e-9),
            reconstructed: r.probs,
            stderr: r.stderr,
        })
    });
    results.into_iter().collect()
}

/// Two-photon weight of the adapted mode `f1` against `η²F+(I(Δt))`.
pub fn run_delay_sweep(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let params = cfg.params();
    let points = sweep(
        cfg,
        2,
        |dt| adapted_mode_lossy(&params, dt).padded(2).probs().to_vec(),
        false,
    )?;
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            let analytic = loss_dressed_two_photon_weight(&params, p.delta_t_ns * 1e-9);
            vec![p.delta_t_ns, analytic, p.reconstructed[2], p.stderr[2]]
        })
        .collect();
    let inside = points.iter().filter(|p| p.within(3.0, &[2])).count();
    let summary = serde_json::json!({
        "points": points.len(),
        "within_3_stderr": inside,
        "samples_per_point": cfg.samples_per_point,
    });
    Ok(RunOutput {
        command: "sweep-delay".into(),
        artifacts: vec![
            Artifact {
                name: "sweep_delay.csv".into(),
                contents: csv_bytes(
                    &["delta_t_ns", "P2_f1_analytic", "P2_f1_reconstructed", "stderr"],
                    &rows,
                ),
            },
            Artifact::json("sweep_delay_points.json", &points),
        ],
        summary,
    })
}

/// Delay at which the fixed-mode `P2` column first falls below half its zero-delay
/// value, by linear interpolation between sweep points.
pub fn half_decay_delay_ns(points: &[SweepPoint]) -> Option<f64> {
    let half = points.first()?.analytic[2] / 2.0;
    points
        .windows(2)
        .find(|w| w[0].analytic[2] >= half && w[1].analytic[2] < half)
        .map(|w| {
            let (a, b) = (&w[0], &w[1]);
            a.delta_t_ns + (a.analytic[2] - half) / (a.analytic[2] - b.analytic[2]) * (b.delta_t_ns - a.delta_t_ns)
        })
}

/// `(P0, P1, P2)` of the fixed mode `g1` against the closed forms with loss.
pub fn run_fixed_mode_sweep(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let params = cfg.params();
    let points = sweep(
        cfg,
        3,
        |dt| fixed_mode_lossy(&params, dt).padded(2).probs().to_vec(),
        true,
    )?;
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            let mut r = vec![p.delta_t_ns];
            r.extend(&p.analytic[..3]);
            r.extend(&p.reconstructed[..3]);
            r.extend(&p.stderr[..3]);
            r
        })
        .collect();
    let inside = points.iter().filter(|p| p.within(3.0, &[0, 1, 2])).count();
    let exact_half = delay_for_overlap(fixed_mode_half_decay_overlap(), cfg.gamma_hz)? * 1e9;
    let summary = serde_json::json!({
        "points": points.len(),
        "within_3_stderr": inside,
        "half_decay_delay_ns_exact": exact_half,
        "half_decay_delay_ns_sweep": half_decay_delay_ns(&points),
    });
    Ok(RunOutput {
        command: "sweep-fixed".into(),
        artifacts: vec![
            Artifact {
                name: "sweep_fixed.csv".into(),
                contents: csv_bytes(
                    &[
                        "delta_t_ns",
                        "P0_analytic",
                        "P1_analytic",
                        "P2_analytic",
                        "P0_reconstructed",
                        "P1_reconstructed",
                        "P2_reconstructed",
                        "P0_stderr",
                        "P1_stderr",
                        "P2_stderr",
                    ],
                    &rows,
                ),
            },
            Artifact::json("sweep_fixed_points.json", &points),
        ],
        summary,
    })
}

/// Reconstruction in one of the four analysis modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Panel {
    pub mode: String,
    pub delta_t_ns: f64,
    pub analytic: Vec<f64>,
    pub reconstruction: MlResult,
}

/// Photon statistics in `g1`, `g2`, `f1` and `f2` at one delay.
pub fn run_fock_panels(cfg: &ExperimentConfig, delta_t_ns: f64) -> Result<RunOutput> {
    let model = DelayModel::from_config(cfg, delta_t_ns * 1e-9)?;
    let modes = [
        ("g1", &model.g1),
        ("g2", &model.g2),
        ("f1", &model.f1),
        ("f2", &model.f2),
    ];
    let panels = Execution::default().map(modes.len(), |k| -> Result<Panel> {
        let (name, mode) = modes[k];
        let rho = reduce_to_mode(&model.state, mode)?;
        let analytic = crate::fock::photon_distribution(&rho).padded(2).probs().to_vec();
        let seed = derive_seed(derive_seed(cfg.rng_seed, 4), k as u64);
        let reconstruction = model.reconstruct(mode, cfg.samples_per_point, seed, &cfg.tomo)?;
        Ok(Panel {
            mode: name.into(),
            delta_t_ns,
            analytic,
            reconstruction,
        })
    });
    let panels: Vec<Panel> = panels.into_iter().collect::<Result<_>>()?;
    let summary = serde_json::json!(panels
        .iter()
        .map(|p| (p.mode.clone(), serde_json::json!(p.reconstruction.probs)))
        .collect::<serde_json::Map<_, _>>());
    Ok(RunOutput {
        command: "fock-panels".into(),
        artifacts: panels
            .iter()
            .map(|p| Artifact::json(&format!("panel_{}.json", p.mode), p))
            .collect(),
        summary,
    })
}

/// One heralded acquisition of the end-to-end run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub delta_t: f64,
    pub theta: f64,
    pub x_f1: f64,
    pub x_g1: f64,
}

/// Reconstruction of one delay bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinReport {
    pub delta_t_lo_ns: f64,
    pub delta_t_hi_ns: f64,
    pub pairs: usize,
    pub mean_delta_t_ns: f64,
    pub f1_analytic: Vec<f64>,
    pub f1: MlResult,
    pub g1_analytic: Vec<f64>,
    pub g1: MlResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndToEndReport {
    pub clicks: usize,
    pub pairs: usize,
    pub acceptance_window_ns: f64,
    pub bins: Vec<BinReport>,
    pub skipped_bins: Vec<(f64, usize)>,
}

/// Coincidences from a simulated click record, stopping once `max_pairs` are in.
pub fn simulate_pairs(cfg: &ExperimentConfig) -> Result<(usize, Vec<CoincidencePair>)> {
    let e = &cfg.end_to_end;
    let source = ThermalSource::new(cfg.gamma_hz, e.dt_field_ns * 1e-9)?;
    let window = cfg.acceptance_window_ns * 1e-9;
    let seed = derive_seed(cfg.rng_seed, 5);
    let mut pairs = Vec::new();
    let mut clicks = 0;
    let mut first = 0;
    let mut batch = 4;
    while pairs.len() < e.max_pairs {
        let stream = source.segments(first, batch, e.mean_rate_hz, seed, Execution::default())?;
        clicks += stream.len();
        let label_seed = derive_seed(seed ^ 0x5eed, first as u64);
        pairs.extend(select_coincidences(&stream, window, e.dead_time_ns * 1e-9, label_seed));
        first += batch;
        if first > 100_000 {
            break;
        }
        batch = (batch * 2).min(64);
    }
    pairs.truncate(e.max_pairs);
    Ok((clicks, pairs))
}

/// Clicks → coincidences → one homodyne trace per pair → projections onto `f1(Δt)`
/// and `g1` → per-bin tomography against the closed forms.
pub fn end_to_end(cfg: &ExperimentConfig) -> Result<(EndToEndReport, Vec<PairRecord>)> {
    let (clicks, pairs) = simulate_pairs(cfg)?;
    let grid = cfg.time_grid()?;
    let herald = cfg.grid.herald;
    let trace_seed = derive_seed(cfg.rng_seed, 6);
    let records = Execution::default().map(pairs.len(), |k| -> Result<PairRecord> {
        let p = pairs[k];
        let model = DelayModel::new(&grid, herald, p.delta_t, cfg.gamma_hz, cfg.eta)?;
        let synth = TraceSynthesizer::new(&model.state, &model.f1, &model.f2)?;
        let (trace, sample) = synth.synthesize(
            HeraldPair::new(herald, herald + p.delta_t),
            derive_seed(trace_seed, k as u64),
        )?;
        let x_g1 = crate::homodyne::project_trace(&trace, &model.g1)?;
        Ok(PairRecord {
            delta_t: p.delta_t,
            theta: sample.theta,
            x_f1: sample.x_f1,
            x_g1,
        })
    });
    let records: Vec<PairRecord> = records.into_iter().collect::<Result<_>>()?;

    let params = cfg.params();
    let bw = cfg.end_to_end.delay_bin_ns * 1e-9;
    let n_bins = ((cfg.acceptance_window_ns * 1e-9) / bw).ceil().max(1.0) as usize;
    let mut bins = Vec::new();
    let mut skipped = Vec::new();
    for b in 0..n_bins {
        let lo = b as f64 * bw;
        let hi = lo + bw;
        let members: Vec<&PairRecord> = records
            .iter()
            .filter(|r| r.delta_t >= lo && (r.delta_t < hi || (b + 1 == n_bins && r.delta_t <= hi)))
            .collect();
        if members.len() < cfg.end_to_end.min_pairs_per_bin {
            if !members.is_empty() {
                log::warn!(
                    "delay bin [{:.1}, {:.1}) ns has {} pairs; skipped",
                    lo * 1e9,
                    hi * 1e9,
                    members.len()
                );
            }
            skipped.push((lo * 1e9, members.len()));
            continue;
        }
        let count = members.len() as f64;
        let mean = |f: &dyn Fn(f64) -> Vec<f64>| {
            let mut acc = vec![0.0; 3];
            for r in &members {
                acc.iter_mut().zip(f(r.delta_t)).for_each(|(a, v)| *a += v / count);
            }
            acc
        };
        let f1_analytic = mean(&|dt| adapted_mode_lossy(&params, dt).padded(2).probs().to_vec());
        let g1_analytic = mean(&|dt| fixed_mode_lossy(&params, dt).padded(2).probs().to_vec());
        let xs_f1: Vec<f64> = members.iter().map(|r| r.x_f1).collect();
        let xs_g1: Vec<f64> = members.iter().map(|r| r.x_g1).collect();
        bins.push(BinReport {
            delta_t_lo_ns: lo * 1e9,
            delta_t_hi_ns: hi * 1e9,
            pairs: members.len(),
            mean_delta_t_ns: members.iter().map(|r| r.delta_t).sum::<f64>() / count * 1e9,
            f1_analytic,
            f1: ml_diagonal(&xs_f1, &cfg.tomo)?,
            g1_analytic,
            g1: ml_diagonal(&xs_g1, &cfg.tomo)?,
        });
    }
    if bins.is_empty() {
        return Err(ExperimentError::InsufficientPairs {
            min: cfg.end_to_end.min_pairs_per_bin,
        });
    }
    let report = EndToEndReport {
        clicks,
        pairs: records.len(),
        acceptance_window_ns: cfg.acceptance_window_ns,
        bins,
        skipped_bins: skipped,
    };
    Ok((report, records))
}

pub fn run_end_to_end(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let (report, records) = end_to_end(cfg)?;
    let to_rows = |pick: fn(&PairRecord) -> f64| -> Result<Vec<u8>> {
        let recs: Vec<QuadratureRecord> = records
            .iter()
            .map(|r| QuadratureRecord {
                x: pick(r),
                theta_rad: r.theta,
                delta_t_ns: r.delta_t * 1e9,
            })
            .collect();
        let mut out = Vec::new();
        write_quadrature_csv(&recs, &mut out)?;
        Ok(out)
    };
    let summary = serde_json::json!({
        "clicks": report.clicks,
        "pairs": report.pairs,
        "bins": report.bins.iter().map(|b| serde_json::json!({
            "delta_t_lo_ns": b.delta_t_lo_ns,
            "pairs": b.pairs,
            "P2_f1_analytic": b.f1_analytic[2],
            "P2_f1_reconstructed": b.f1.probs[2],
            "P2_f1_stderr": b.f1.stderr[2],
        })).collect::<Vec<_>>(),
    });
    Ok(RunOutput {
        command: "end-to-end".into(),
        artifacts: vec![
            Artifact::json("end_to_end_report.json", &report),
            Artifact {
                name: "quadratures_f1.csv".into(),
                contents: to_rows(|r| r.x_f1)?,
            },
            Artifact {
                name: "quadratures_g1.csv".into(),
                contents: to_rows(|r| r.x_g1)?,
            },
        ],
        summary,
    })
}

/// Tomography of a quadrature CSV (`x, theta_rad, delta_t_ns`).
pub fn run_reconstruct(cfg: &ExperimentConfig, samples_csv: &Path, full: bool) -> Result<RunOutput> {
    let records = read_quadrature_csv(fs::File::open(samples_csv)?)?;
    let xs: Vec<f64> = records.iter().map(|r| r.x).collect();
    let result = ml_diagonal(&xs, &cfg.tomo)?;
    let mut summary = result.to_json();
    let mut artifacts = vec![Artifact::json("reconstruction.json", &result.to_json())];
    if full {
        let samples: Vec<QuadratureSample> = records
            .iter()
            .map(|r| QuadratureSample {
                x: r.x,
                theta: r.theta_rad,
            })
            .collect();
        let full = ml_full(&samples, &cfg.tomo)?;
        let value = serde_json::json!({
            "density": full.rho.to_json(),
            "log_likelihood": full.log_likelihood,
            "iterations": full.iterations,
            "converged": full.converged,
        });
        summary["full"] = serde_json::json!({ "converged": full.converged });
        artifacts.push(Artifact::json("reconstruction_full.json", &value));
    }
    Ok(RunOutput {
        command: "reconstruct".into(),
        artifacts,
        summary,
    })
}
