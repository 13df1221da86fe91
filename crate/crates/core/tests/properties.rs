mod common;

use num_complex::Complex64;
use proptest::prelude::*;

use cwherald::analytic::{apply_loss, fidelity_optimal, fixed_mode_distribution, g2_closed_form, PhotonDistribution};
use cwherald::fock::{
    apply_loss_channel, photon_distribution, reduce_to_mode, single_mode_loss, DensityMatrix, ModeRegister,
    MultimodeState,
};
use cwherald::homodyne::{
    embed_quadratures, project_trace, sample_quadratures, sample_quadratures_with, PhaseSchedule,
};
use cwherald::modes::{
    adapted_mode_pair, extend_orthonormal_basis, make_trigger_mode, overlap, overlap_closed_form, HeraldPair, TimeGrid,
};
use cwherald::par::task_rng;
use cwherald::tomo::{ml_diagonal, MlConfig};
use cwherald::Execution;

const GAMMA: f64 = 53e6;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cases(48))]

    #[test]
    fn grid_overlap_tracks_closed_form(dt in 0.0f64..80e-9, gamma in 20e6f64..120e6) {
        let grid = TimeGrid::default();
        let g1 = make_trigger_mode(200e-9, gamma, &grid).unwrap();
        let g2 = make_trigger_mode(200e-9 + dt, gamma, &grid).unwrap();
        let grid_i = overlap(&g1, &g2).unwrap();
        prop_assert!((grid_i - overlap_closed_form(dt, gamma).unwrap()).abs() < 1e-4);
        prop_assert!((grid_i - common::overlap(dt, gamma)).abs() < 1e-4);
    }

    #[test]
    fn closed_form_overlap_decreases(a in 0.0f64..100e-9, b in 0.0f64..100e-9) {
        prop_assume!((a - b).abs() > 1e-13);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(overlap_closed_form(hi, GAMMA).unwrap() < overlap_closed_form(lo, GAMMA).unwrap());
        prop_assert!(overlap_closed_form(lo, GAMMA).unwrap() <= 1.0);
    }

    #[test]
    fn adapted_pair_is_orthonormal(dt in 0.0f64..100e-9) {
        let grid = TimeGrid::default();
        let g1 = make_trigger_mode(200e-9, GAMMA, &grid).unwrap();
        let g2 = make_trigger_mode(200e-9 + dt, GAMMA, &grid).unwrap();
        let (f1, f2) = adapted_mode_pair(&g1, &g2).unwrap();
        prop_assert!(overlap(&f1, &f2).unwrap().abs() < 1e-9);
        prop_assert!((f1.norm_sq() - 1.0).abs() < 1e-9);
        prop_assert!((f2.norm_sq() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn extended_basis_gram_is_identity(dt in 1e-9f64..60e-9, k in 2usize..6) {
        let grid = TimeGrid::default();
        let g1 = make_trigger_mode(200e-9, GAMMA, &grid).unwrap();
        let g2 = make_trigger_mode(200e-9 + dt, GAMMA, &grid).unwrap();
        let basis = extend_orthonormal_basis(&[g1, g2], &grid, k).unwrap();
        for a in 0..k {
            for b in 0..k {
                let want = if a == b { 1.0 } else { 0.0 };
                prop_assert!((overlap(&basis[a], &basis[b]).unwrap() - want).abs() < 1e-9);
            }
        }
    }
}

proptest! {
    #![proptest_config(cases(32))]

    #[test]
    fn heralded_state_and_loss(dt in 0.0f64..60e-9, eta in 0.0f64..=1.0) {
        let grid = TimeGrid::default();
        let g1 = make_trigger_mode(200e-9, GAMMA, &grid).unwrap();
        let g2 = make_trigger_mode(200e-9 + dt, GAMMA, &grid).unwrap();
        let (f1, f2) = adapted_mode_pair(&g1, &g2).unwrap();
        let reg = ModeRegister::new(vec![f1.clone(), f2]).unwrap();
        let state = cwherald::fock::build_heralded_state(&g1, &g2, &reg, 2).unwrap();
        prop_assert!((state.trace() - 1.0).abs() < 1e-12);
        let lossy = apply_loss_channel(&state, eta).unwrap();
        prop_assert!((lossy.trace() - 1.0).abs() < 1e-12);
        // Loss commutes with reduction to one mode.
        let a = photon_distribution(&reduce_to_mode(&lossy, &g1).unwrap()).padded(2);
        let b = photon_distribution(&single_mode_loss(&reduce_to_mode(&state, &g1).unwrap(), eta).unwrap()).padded(2);
        for n in 0..3 {
            prop_assert!((a.get(n) - b.get(n)).abs() < 1e-12);
        }
        // Lossless fixed mode against the hand-written oracle.
        let i = overlap(&g1, &g2).unwrap();
        let want = common::fixed(i);
        let got = photon_distribution(&reduce_to_mode(&state, &g1).unwrap()).padded(2);
        for n in 0..3 {
            prop_assert!((got.get(n) - want[n]).abs() < 1e-10);
        }
    }

    #[test]
    fn closed_form_distributions(i in 0.0f64..=1.0, eta in 0.0f64..=1.0) {
        let (fp, fm) = fidelity_optimal(i).unwrap();
        prop_assert!((fp + fm - 1.0).abs() < 1e-12);
        prop_assert!(fp >= fm);
        let fixed = fixed_mode_distribution(i).unwrap();
        prop_assert!((fixed.total() - 1.0).abs() < 1e-12);
        let lossy = apply_loss(&fixed, eta).unwrap();
        prop_assert!((lossy.total() - 1.0).abs() < 1e-12);
        let want = common::lossy(common::fixed(i), eta);
        for n in 0..3 {
            prop_assert!((lossy.get(n) - want[n]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_mode_loss_preserves_trace(p0 in 0.0f64..1.0, p1 in 0.0f64..1.0, p2 in 0.0f64..1.0, eta in 0.0f64..=1.0) {
        let s = p0 + p1 + p2;
        prop_assume!(s > 1e-3);
        let dist = PhotonDistribution::new(vec![p0 / s, p1 / s, p2 / s]).unwrap();
        let out = single_mode_loss(&DensityMatrix::diagonal(&dist), eta).unwrap();
        prop_assert!((out.trace() - 1.0).abs() < 1e-12);
        let a = photon_distribution(&out).padded(2);
        let b = apply_loss(&dist, eta).unwrap();
        for n in 0..3 {
            prop_assert!((a.get(n) - b.get(n)).abs() < 1e-12);
        }
    }

    #[test]
    fn g2_closed_form_is_bounded_and_even(dt in 0.0f64..200e-9) {
        let v = g2_closed_form(dt, GAMMA).unwrap();
        prop_assert!((1.0..=2.0).contains(&v));
        prop_assert_eq!(v, g2_closed_form(-dt, GAMMA).unwrap());
    }
}

proptest! {
    #![proptest_config(cases(12))]

    #[test]
    fn sampler_is_deterministic_per_seed(seed in any::<u64>(), n in 0usize..3) {
        let rho = DensityMatrix::fock(n, 2);
        let a = sample_quadratures(&rho, 5_000, seed).unwrap();
        let b = sample_quadratures_with(&rho, 5_000, seed, PhaseSchedule::Uniform, Execution::Sequential).unwrap();
        prop_assert_eq!(&a, &b);
        let c = sample_quadratures(&rho, 5_000, seed.wrapping_add(1)).unwrap();
        prop_assert_ne!(a, c);
    }

    #[test]
    fn em_log_likelihood_is_monotone(w0 in 0.0f64..1.0, w1 in 0.0f64..1.0, w2 in 0.0f64..1.0, seed in any::<u64>()) {
        let s = w0 + w1 + w2;
        prop_assume!(s > 1e-2);
        let dist = PhotonDistribution::new(vec![w0 / s, w1 / s, w2 / s]).unwrap();
        let xs: Vec<f64> = sample_quadratures(&DensityMatrix::diagonal(&dist), 5_000, seed).unwrap().into_iter().map(|q| q.x).collect();
        let r = ml_diagonal(&xs, &MlConfig::default()).unwrap();
        prop_assert!(r.history.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs()));
        prop_assert!((r.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(r.probs.iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn embedded_quadratures_project_back(x1 in -4.0f64..4.0, x2 in -4.0f64..4.0, dt in 1e-9f64..60e-9, seed in any::<u64>()) {
        let grid = TimeGrid::default();
        let g1 = make_trigger_mode(200e-9, GAMMA, &grid).unwrap();
        let g2 = make_trigger_mode(200e-9 + dt, GAMMA, &grid).unwrap();
        let (f1, f2) = adapted_mode_pair(&g1, &g2).unwrap();
        let mut rng = task_rng(seed, 0);
        let trace = embed_quadratures(x1, x2, &f1, &f2, HeraldPair::new(200e-9, 200e-9 + dt), seed, &mut rng).unwrap();
        prop_assert!((project_trace(&trace, &f1).unwrap() - x1).abs() < 1e-9);
        prop_assert!((project_trace(&trace, &f2).unwrap() - x2).abs() < 1e-9);
    }

    #[test]
    fn pure_two_mode_states_stay_normalized(re in proptest::collection::vec(-1.0f64..1.0, 6), eta in 0.0f64..=1.0) {
        prop_assume!(re.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        let grid = TimeGrid::default();
        let basis = extend_orthonormal_basis(&[make_trigger_mode(200e-9, GAMMA, &grid).unwrap()], &grid, 2).unwrap();
        let amps: Vec<Complex64> = re.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        let state = MultimodeState::pure(ModeRegister::new(basis).unwrap(), 2, &amps).unwrap();
        let lossy = apply_loss_channel(&state, eta).unwrap();
        prop_assert!((lossy.trace() - 1.0).abs() < 1e-12);
    }
}
