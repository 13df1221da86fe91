//! One test per acceptance criterion; each prints a single PASS/FAIL line.
//! Run with `cargo test --test acceptance -- --nocapture --test-threads 1`.

mod common;

use common::{adapted, fixed, ks_critical_1pct, ks_statistic, lossy, mixture_cdf, verdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cwherald::analytic::{delay_for_overlap, fixed_mode_half_decay_overlap, loss_dressed_two_photon_weight};
use cwherald::clicks::{g2_histogram, ThermalSource};
use cwherald::experiment::{
    half_decay_delay_ns, run_delay_sweep, run_fixed_mode_sweep, run_fock_panels, DelayModel, ExperimentConfig,
    SweepPoint,
};
use cwherald::fock::{apply_loss_channel, photon_distribution, reduce_to_mode, single_mode_loss, DensityMatrix};
use cwherald::homodyne::{sample_quadratures, sample_quadratures_with, PhaseSchedule};
use cwherald::modes::{adapted_mode_pair, make_trigger_mode, overlap, TimeGrid};
use cwherald::tomo::{ml_diagonal, MlConfig, MlResult};
use cwherald::{Execution, OpoParams};

const GAMMA: f64 = 53e6;
const ETA: f64 = 0.76;

#[test]
fn ac1_analytic_endpoints() {
    let params = OpoParams::new(GAMMA, ETA).unwrap();
    let at0 = loss_dressed_two_photon_weight(&params, 0.0);
    let at40 = loss_dressed_two_photon_weight(&params, 40e-9);
    let pass = (at0 - 0.5776).abs() < 1e-12 && (at40 - 0.2888).abs() <= 0.0005;
    verdict(
        "AC1",
        pass,
        format!("eta^2 F+(0) = {at0:.6} (0.5776), eta^2 F+(40 ns) = {at40:.6} (0.2888 +- 0.0005)"),
    );
}

#[test]
fn ac2_fock_engine_matches_closed_forms() {
    let cfg = ExperimentConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let start = std::time::Instant::now();
    for _ in 0..20 {
        let dt = rng.random_range(0.0..40e-9);
        let m = DelayModel::from_config(&cfg, dt).unwrap();
        // The oracle takes the overlap of the grid modes themselves.
        let i = overlap(&m.g1, &m.g2).unwrap();
        let cases = [(&m.g1, lossy(fixed(i), ETA)), (&m.f1, lossy(adapted(i), ETA))];
        for (mode, want) in cases {
            let got = photon_distribution(&reduce_to_mode(&m.state, mode).unwrap()).padded(2);
            for n in 0..3 {
                worst = worst.max((got.get(n) - want[n]).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        "AC2",
        worst < 1e-10,
        format!("max deviation {worst:.2e} over 20 delays x 2 modes (< 1e-10), {secs:.2} s"),
    );
}

#[test]
fn ac3_g2_monte_carlo() {
    let start = std::time::Instant::now();
    let source = ThermalSource::new(GAMMA, 0.5e-9).unwrap();
    let stream = source.stream_events(5e7, 1_000_000, 3, Execution::default()).unwrap();
    let hist = g2_histogram(&stream, 0.5e-9, 60e-9).unwrap();
    let max_dev = (0..hist.g2.len())
        .map(|k| {
            let tau = hist.center(k);
            let x = std::f64::consts::PI * GAMMA * tau;
            (hist.g2[k] - (1.0 + (-2.0 * x).exp() * (1.0 + x).powi(2))).abs()
        })
        .fold(0.0, f64::max);
    let g0 = hist.g2[0];
    let pass = stream.len() >= 1_000_000 && (g0 - 2.0).abs() <= 0.05 && max_dev < 0.05;
    verdict(
        "AC3",
        pass,
        format!(
            "{} clicks, g2(0) = {g0:.4} (2 +- 0.05), max |dev| = {max_dev:.4} (< 0.05), {:.1} s",
            stream.len(),
            start.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn ac4_end_to_end_tomography_at_zero_delay() {
    let start = std::time::Instant::now();
    let m = DelayModel::from_config(&ExperimentConfig::default(), 0.0).unwrap();
    let r = m.reconstruct(&m.f1, 1_000_000, 4, &MlConfig::default()).unwrap();
    let p2 = r.probs[2];
    verdict(
        "AC4",
        (p2 - 0.578).abs() <= 0.015,
        format!(
            "P2 = {p2:.4} +- {:.4} (0.578 +- 0.015), N = 1e6, {:.1} s",
            r.stderr[2],
            start.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn ac5_four_mode_panels() {
    let cfg = ExperimentConfig {
        samples_per_point: 100_000,
        ..ExperimentConfig::default()
    };
    let out = run_fock_panels(&cfg, 40.0).unwrap();
    let p = |mode: &str, n: usize| out.summary[mode][n].as_f64().unwrap();
    let (g1, g2, f1, f2) = (p("g1", 1), p("g2", 1), p("f1", 2), p("f2", 2));
    let pass = [g1, g2].iter().all(|v| (v - 0.76).abs() <= 0.02) && [f1, f2].iter().all(|v| (v - 0.29).abs() <= 0.02);
    verdict(
        "AC5",
        pass,
        format!("P1(g1) = {g1:.4}, P1(g2) = {g2:.4} (0.76 +- 0.02); P2(f1) = {f1:.4}, P2(f2) = {f2:.4} (0.29 +- 0.02)"),
    );
}

#[test]
fn ac6_fixed_mode_sweep() {
    let cfg = ExperimentConfig::default();
    let out = run_fixed_mode_sweep(&cfg).unwrap();
    let points: Vec<SweepPoint> =
        serde_json::from_slice(&out.artifact("sweep_fixed_points.json").unwrap().contents).unwrap();
    let misses: Vec<f64> = points
        .iter()
        .filter(|p| !p.within(3.0, &[0, 1, 2]))
        .map(|p| p.delta_t_ns)
        .collect();
    let bin = cfg.delays_ns[1] - cfg.delays_ns[0];
    let exact = delay_for_overlap(fixed_mode_half_decay_overlap(), GAMMA).unwrap() * 1e9;
    let from_sweep = half_decay_delay_ns(&points).unwrap();
    let pass = misses.is_empty() && (from_sweep - exact).abs() <= bin;
    verdict(
        "AC6",
        pass,
        format!(
            "{} of {} points within 3 stderr (misses at {misses:?} ns); half decay {from_sweep:.2} ns vs {exact:.2} ns (one bin = {bin} ns)",
            points.len() - misses.len(),
            points.len()
        ),
    );
}

#[test]
fn ac7_expansion_orders() {
    let x: f64 = 0.05;
    let i = (-x).exp() * (1.0 + x);
    let adapted_ratio = (1.0 - adapted(i)[2]) / (x / 2.0f64).powi(4);
    let fixed_ratio = (1.0 - fixed(i)[2]) / (x / 2.0f64.sqrt()).powi(2);
    let ok = |r: f64| (0.95..=1.05).contains(&r);
    verdict(
        "AC7",
        ok(adapted_ratio) && ok(fixed_ratio),
        format!("adapted (1-F)/(x/2)^4 = {adapted_ratio:.5}, fixed (1-P2)/(x/sqrt2)^2 = {fixed_ratio:.5} (both in [0.95, 1.05]) at x = {x}"),
    );
}

#[test]
fn ac8_property_suites() {
    let grid = TimeGrid::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    let mut ortho: f64 = 0.0;
    for _ in 0..20 {
        let dt = rng.random_range(0.05e-9..60e-9);
        let g1 = make_trigger_mode(200e-9, GAMMA, &grid).unwrap();
        let g2 = make_trigger_mode(200e-9 + dt, GAMMA, &grid).unwrap();
        let (f1, f2) = adapted_mode_pair(&g1, &g2).unwrap();
        ortho = ortho
            .max(overlap(&f1, &f2).unwrap().abs())
            .max((f1.norm_sq() - 1.0).abs())
            .max((f2.norm_sq() - 1.0).abs());
    }

    let mut trace_err: f64 = 0.0;
    let cfg = ExperimentConfig::default();
    for _ in 0..10 {
        let eta = rng.random_range(0.0..=1.0);
        let m = DelayModel::from_config(&cfg, rng.random_range(0.0..40e-9)).unwrap();
        trace_err = trace_err.max((apply_loss_channel(&m.state, eta).unwrap().trace() - 1.0).abs());
        let rho = reduce_to_mode(&m.state, &m.g1).unwrap();
        trace_err = trace_err.max((single_mode_loss(&rho, eta).unwrap().trace() - 1.0).abs());
    }

    let xs: Vec<f64> = sample_quadratures(&DensityMatrix::fock(1, 2), 20_000, 81)
        .unwrap()
        .into_iter()
        .map(|s| s.x)
        .collect();
    let r: MlResult = ml_diagonal(&xs, &MlConfig::default()).unwrap();
    let monotone = r.history.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs());

    let mut ks_worst: f64 = 0.0;
    for (n, weights) in [(0usize, vec![1.0]), (1, vec![0.0, 1.0]), (2, vec![0.0, 0.0, 1.0])] {
        let xs = sample_quadratures(&DensityMatrix::fock(n, 2), 50_000, 90 + n as u64)
            .unwrap()
            .into_iter()
            .map(|s| s.x)
            .collect();
        ks_worst = ks_worst.max(ks_statistic(xs, &mixture_cdf(&weights)) / ks_critical_1pct(50_000));
    }

    let small = ExperimentConfig {
        samples_per_point: 10_000,
        delays_ns: vec![0.0, 20.0],
        ..cfg
    };
    let a = run_delay_sweep(&small).unwrap();
    let b = run_delay_sweep(&small).unwrap();
    let rho = DensityMatrix::fock(2, 2);
    let seq = sample_quadratures_with(&rho, 30_000, 5, PhaseSchedule::Uniform, Execution::Sequential).unwrap();
    let def = sample_quadratures_with(&rho, 30_000, 5, PhaseSchedule::Uniform, Execution::default()).unwrap();
    let deterministic = a.artifacts == b.artifacts && seq == def;

    let pass = ortho < 1e-9 && trace_err < 1e-12 && monotone && ks_worst < 1.0 && deterministic;
    verdict(
        "AC8",
        pass,
        format!(
            "orthonormality {ortho:.1e} (< 1e-9), loss trace {trace_err:.1e} (< 1e-12), EM monotone {monotone}, KS/crit(1%) {ks_worst:.3} (< 1), bit-exact reruns {deterministic}"
        ),
    );
}
