//! Monte-Carlo consistency of the click simulator and the tomography estimator.

mod common;

use std::f64::consts::PI;

use cwherald::analytic::PhotonDistribution;
use cwherald::clicks::{g2_histogram, select_coincidences, ThermalSource, DEFAULT_DEAD_TIME};
use cwherald::fock::DensityMatrix;
use cwherald::homodyne::sample_quadratures;
use cwherald::tomo::{ml_diagonal, MlConfig};
use cwherald::Execution;

const GAMMA: f64 = 53e6;

fn xs(dist: &PhotonDistribution, n: usize, seed: u64) -> Vec<f64> {
    sample_quadratures(&DensityMatrix::diagonal(dist), n, seed)
        .unwrap()
        .into_iter()
        .map(|s| s.x)
        .collect()
}

#[test]
fn tomography_error_shrinks_as_inverse_root_n() {
    let truth = PhotonDistribution::new(vec![0.0576, 0.3648, 0.5776]).unwrap();
    let cfg = MlConfig::default();
    let mut rms = Vec::new();
    for (k, n) in [1_000usize, 10_000, 100_000].into_iter().enumerate() {
        let mut sq = 0.0;
        let mut se = 0.0;
        let runs = 50;
        for s in 0..runs {
            let r = ml_diagonal(&xs(&truth, n, 1000 * k as u64 + s), &cfg).unwrap();
            sq += (r.probs[2] - truth.get(2)).powi(2);
            se += r.stderr[2];
        }
        let err = (sq / runs as f64).sqrt();
        let mean_se = se / runs as f64;
        if n >= 10_000 {
            let ratio = mean_se / err;
            assert!(
                (0.7..1.4).contains(&ratio),
                "N = {n}: stderr {mean_se:.4} vs rms {err:.4}"
            );
        }
        rms.push(err);
    }
    for w in rms.windows(2) {
        let ratio = w[1] / w[0];
        assert!((0.2..0.5).contains(&ratio), "rms {rms:?}");
    }
}

#[test]
fn cutoff_and_binning_do_not_move_the_estimate() {
    let truth = PhotonDistribution::new(vec![0.2, 0.5, 0.3]).unwrap();
    let data = xs(&truth, 200_000, 17);
    let a = ml_diagonal(
        &data,
        &MlConfig {
            cutoff: 5,
            ..MlConfig::default()
        },
    )
    .unwrap();
    let b = ml_diagonal(
        &data,
        &MlConfig {
            cutoff: 7,
            ..MlConfig::default()
        },
    )
    .unwrap();
    for n in 0..3 {
        assert!(
            (a.probs[n] - b.probs[n]).abs() < 0.005,
            "P{n}: {} vs {}",
            a.probs[n],
            b.probs[n]
        );
    }
    assert!(b.probs[6..].iter().sum::<f64>() < 0.005);
    let c = ml_diagonal(
        &data,
        &MlConfig {
            n_bins: 512,
            ..MlConfig::default()
        },
    )
    .unwrap();
    for n in 0..3 {
        assert!(
            (a.probs[n] - c.probs[n]).abs() < 0.005,
            "P{n}: {} vs {} at 512 bins",
            a.probs[n],
            c.probs[n]
        );
    }
}

/// `∫₀^w g²(τ) dτ` by Simpson's rule.
fn g2_integral(w: f64) -> f64 {
    let steps = 2000;
    let h = w / steps as f64;
    let g = |t: f64| {
        let x = PI * GAMMA * t;
        1.0 + (-2.0 * x).exp() * (1.0 + x).powi(2)
    };
    (0..steps)
        .map(|k| {
            let a = k as f64 * h;
            h / 6.0 * (g(a) + 4.0 * g(a + h / 2.0) + g(a + h))
        })
        .sum()
}

#[test]
fn coincidence_counts_follow_bunched_poisson_model() {
    let rate = 2e6;
    let source = ThermalSource::new(GAMMA, 0.9e-9).unwrap();
    let stream = source.stream_events(rate, 1_000_000, 21, Execution::default()).unwrap();
    let n = stream.len() as f64;
    let mut counts = Vec::new();
    for w_ns in [4.0, 8.0, 16.0, 32.0] {
        let w = w_ns * 1e-9;
        let pairs = select_coincidences(&stream, w, 0.0, 5).len() as f64;
        // Each click finds an opposite-label partner within `w` with probability
        // p = 1 − e^(−Λ); a pair consumes the partner, so pairs ≈ N·p/(1 + p).
        let lambda = rate / 2.0 * g2_integral(w);
        let p = 1.0 - (-lambda).exp();
        let want = n * p / (1.0 + p);
        assert!((pairs / want - 1.0).abs() < 0.05, "w = {w_ns} ns: {pairs} vs {want:.0}");
        counts.push(pairs);
    }
    // Bunching makes the count grow more slowly than the window.
    for c in counts.windows(2) {
        assert!(c[1] / c[0] < 2.0 && c[1] > c[0], "{counts:?}");
    }
}

#[test]
fn dead_time_limits_pair_rate() {
    let source = ThermalSource::new(GAMMA, 0.5e-9).unwrap();
    let stream = source.stream_events(5e7, 200_000, 22, Execution::default()).unwrap();
    let pairs = select_coincidences(&stream, 65e-9, DEFAULT_DEAD_TIME, 1);
    assert!(!pairs.is_empty());
    for w in pairs.windows(2) {
        assert!(w[1].t1 >= w[0].t1 + DEFAULT_DEAD_TIME - 1e-15);
    }
    assert!(pairs.len() as f64 <= stream.duration / DEFAULT_DEAD_TIME + 1.0);
    assert!(pairs
        .iter()
        .all(|p| p.delta_t >= 0.0 && p.delta_t <= 65e-9 && p.t2 > p.t1));
}

#[test]
fn g2_is_independent_of_rate_and_seed() {
    let source = ThermalSource::new(GAMMA, 0.5e-9).unwrap();
    for (rate, seed) in [(2e7, 1u64), (8e7, 2)] {
        let stream = source.stream_events(rate, 600_000, seed, Execution::default()).unwrap();
        let h = g2_histogram(&stream, 1e-9, 60e-9).unwrap();
        assert!(
            (h.g2[0] - cwherald::analytic::g2_closed_form(h.center(0), GAMMA).unwrap()).abs() < 0.08,
            "{}",
            h.g2[0]
        );
        let tail = &h.g2[50..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "tail {mean}");
    }
}
