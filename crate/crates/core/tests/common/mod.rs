#![allow(dead_code)]

use std::f64::consts::PI;

/// Quadrature density of `|n⟩`, `n ≤ 2`, written out by hand (`x = (a + a†)/√2`).
pub fn fock_pdf(n: usize, x: f64) -> f64 {
    let g = (-x * x).exp() / PI.sqrt();
    match n {
        0 => g,
        1 => 2.0 * x * x * g,
        2 => (2.0 * x * x - 1.0).powi(2) * g / 2.0,
        _ => panic!("hand-written oracle covers n ≤ 2"),
    }
}

/// Cumulative distribution of a Fock mixture on a fine grid, by Simpson panels.
pub fn mixture_cdf(weights: &[f64]) -> Vec<(f64, f64)> {
    let pdf = |x: f64| weights.iter().enumerate().map(|(n, w)| w * fock_pdf(n, x)).sum::<f64>();
    let (lo, hi, steps) = (-9.0, 9.0, 36_000);
    let h = (hi - lo) / steps as f64;
    let mut out = vec![(lo, 0.0)];
    let mut acc = 0.0;
    for k in 0..steps {
        let a = lo + k as f64 * h;
        acc += h / 6.0 * (pdf(a) + 4.0 * pdf(a + h / 2.0) + pdf(a + h));
        out.push((a + h, acc));
    }
    out
}

pub fn ks_statistic(mut xs: Vec<f64>, cdf: &[(f64, f64)]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let eval = |x: f64| {
        let i = cdf.partition_point(|(t, _)| *t <= x).clamp(1, cdf.len() - 1);
        let (t0, c0) = cdf[i - 1];
        let (t1, c1) = cdf[i];
        (c0 + (c1 - c0) * (x - t0) / (t1 - t0)).clamp(0.0, 1.0)
    };
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = eval(x);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov–Smirnov critical value at the 1% level.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

/// Closed-form mode overlap `e^(−x)(1 + x)`, `x = πγ|Δt|`.
pub fn overlap(delta_t: f64, gamma: f64) -> f64 {
    let x = PI * gamma * delta_t.abs();
    (-x).exp() * (1.0 + x)
}

/// Binomial loss on `(P0, P1, P2)`.
pub fn lossy(p: [f64; 3], eta: f64) -> [f64; 3] {
    let l = 1.0 - eta;
    [
        p[0] + p[1] * l + p[2] * l * l,
        p[1] * eta + 2.0 * p[2] * eta * l,
        p[2] * eta * eta,
    ]
}

/// Lossless fixed-mode statistics for overlap `i`.
pub fn fixed(i: f64) -> [f64; 3] {
    let d = 1.0 + i * i;
    [0.0, (1.0 - i * i) / d, 2.0 * i * i / d]
}

/// Lossless adapted-mode statistics for overlap `i`.
pub fn adapted(i: f64) -> [f64; 3] {
    let d = 2.0 * (1.0 + i * i);
    [(1.0 - i).powi(2) / d, 0.0, (1.0 + i).powi(2) / d]
}

/// Prints the criterion line and fails the test on a miss.
pub fn verdict(id: &str, pass: bool, detail: String) {
    println!("{id} {}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{id} failed: {detail}");
}
