use num_complex::Complex;
use ppe_core::analysis::{detect_in, AnomalyOptions, SigmaSource, TiltMode};
use ppe_core::estimator::{
    solve_cm, solve_ls, ColumnBuilder, ColumnOptions, PerturbationSystem, PositionGrid, SolveOptions,
};
use ppe_core::link::{Link, LinkSpec, SpanSpec};
use ppe_core::propagation::{CdOperator, Direction};
use ppe_core::signal::{generate_source, generate_source_frame, ModulationFormat, Signal, SourceSpec};
use ppe_core::sim::{propagate, theoretical_profile, SimConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn format_strategy() -> impl Strategy<Value = ModulationFormat> {
    prop_oneof![
        Just(ModulationFormat::Qpsk),
        Just(ModulationFormat::Qam16),
        Just(ModulationFormat::Qam64),
        Just(ModulationFormat::Pcs64Qam),
        Just(ModulationFormat::Gaussian),
    ]
}

fn single_span(length_km: f64, alpha: f64, gamma: f64, launch_dbm: f64) -> LinkSpec {
    LinkSpec {
        spans: vec![SpanSpec {
            length_km,
            alpha_db_per_km: alpha,
            beta2_ps2_per_km: -21.6,
            beta3_ps3_per_km: 0.0,
            gamma_per_w_km: gamma,
            launch_power_dbm: launch_dbm,
        }],
        amplifiers: vec![],
        point_losses: vec![],
        tx_power_dbm: None,
    }
}

/// Noiseless `G` of a short link and a matching system.
fn small_problem(k: usize, n_sym: usize, seed: u64) -> (ppe_core::estimator::StackedMatrix<f64>, PerturbationSystem<f64>) {
    let spec = single_span(k as f64 * 2.0, 0.2, 1.3, 0.0);
    let link = Link::<f64>::from_spec(&spec).unwrap();
    let src = SourceSpec::new(ModulationFormat::Qam16, 64.0, 0.1, seed);
    let tx: Signal<f64> = generate_source::<f64>(&src, n_sym, 2).unwrap().field.into();
    let grid = PositionGrid::uniform(spec.total_length_km(), 2.0, 0.5).unwrap();
    let b = ColumnBuilder::new(&tx, &link, &grid, ColumnOptions::default()).unwrap();
    let g = b.stacked(0..tx.len());
    let sys = PerturbationSystem::new(grid, vec![1.3; k], false).unwrap();
    (g, sys)
}

fn random_vec(n: usize, seed: u64, scale: f64) -> Vec<f64> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| scale * (rng.random::<f64>() - 0.5)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn sources_have_unit_power_and_are_reproducible(
        format in format_strategy(),
        rolloff in 0.0f64..1.0,
        seed in 0u64..1_000_000,
        frame in 0u64..8,
    ) {
        let spec = SourceSpec::new(format, 64.0, rolloff, seed);
        let a = generate_source_frame::<f64>(&spec, 512, 4, frame).unwrap();
        let b = generate_source_frame::<f64>(&spec, 512, 4, frame).unwrap();
        prop_assert!((a.field.mean_power() - 1.0).abs() < 1e-6);
        prop_assert_eq!(a.field.samples(), b.field.samples());
    }

    #[test]
    fn mirrored_dispersion_cancels(beta2 in -40.0f64..40.0, len_km in 1.0f64..120.0, seed in 0u64..1000) {
        let n = 1024;
        let ts = 1.0 / 128e9;
        let x = random_vec(2 * n, seed, 1.0);
        let x: Vec<Complex<f64>> = x.chunks(2).map(|c| Complex::new(c[0], c[1])).collect();
        let b2 = beta2 * 1e-27;
        let op = CdOperator::<f64>::from_segments(&[(len_km * 1e3, b2, 0.0), (len_km * 1e3, -b2, 0.0)], n, ts);
        let mut y = x.clone();
        op.apply_in_place(&mut y, Direction::Forward);
        let num: f64 = y.iter().zip(&x).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = x.iter().map(|a| a.norm_sqr()).sum();
        prop_assert!((num / den).sqrt() < 1e-12);
    }

    #[test]
    fn lossless_split_step_conserves_energy(gamma in 0.0f64..5.0, launch in -5.0f64..10.0, seed in 0u64..100) {
        let link = Link::<f64>::from_spec(&single_span(5.0, 0.0, gamma, launch)).unwrap();
        let src = SourceSpec::new(ModulationFormat::Qam16, 32.0, 0.1, seed);
        let tx: Signal<f64> = generate_source::<f64>(&src, 256, 4).unwrap().field.into();
        let cfg = SimConfig { step_size_m: 500.0, sps: 4, ase_enabled: false, seed };
        let out = propagate(&tx, &link, &cfg).unwrap();
        prop_assert!((out.rx.total_power() / tx.total_power() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn exact_recovery_on_synthetic_a1(seed in 0u64..1000, k in 3usize..8) {
        let (g, mut sys) = small_problem(k, 256, seed);
        let truth: Vec<f64> = random_vec(k, seed + 1, 1e-3).iter().map(|v| v + 1e-3).collect();
        sys.accumulate(&g, &g.mul_vec(&truth)).unwrap();
        let est = solve_ls(&sys, &SolveOptions::default()).unwrap();
        for (e, t) in est.gamma_prime.iter().zip(&truth) {
            prop_assert!((e - t).abs() <= 1e-9 * t.abs());
        }
    }

    #[test]
    fn gradient_matches_central_differences(seed in 0u64..1000, k in 2usize..8) {
        let (g, mut sys) = small_problem(k, 128, seed);
        let a1 = random_vec(g.rows, seed + 2, 1e-3);
        sys.accumulate(&g, &a1).unwrap();
        let x = random_vec(k, seed + 3, 1e-2);
        let grad = sys.gradient(&x);
        let scale = grad.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for i in 0..k {
            let h = 1e-4 * (1.0 + x[i].abs());
            let mut p = x.clone();
            let mut m = x.clone();
            p[i] += h;
            m[i] -= h;
            let fd = (sys.cost(&p) - sys.cost(&m)) / (2.0 * h);
            prop_assert!((fd - grad[i]).abs() <= 1e-6 * scale, "i {} fd {} grad {}", i, fd, grad[i]);
        }
    }

    #[test]
    fn ls_solution_minimizes_the_cost(seed in 0u64..1000, k in 2usize..8) {
        let (g, mut sys) = small_problem(k, 128, seed);
        sys.accumulate(&g, &random_vec(g.rows, seed + 4, 1e-3)).unwrap();
        let x = solve_ls(&sys, &SolveOptions::default()).unwrap().gamma_prime;
        let base = sys.cost(&x);
        let d = random_vec(k, seed + 5, 1e-3);
        let moved: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
        prop_assert!(sys.cost(&moved) > base);
    }

    #[test]
    fn normal_matrix_maps_ls_onto_cm(seed in 0u64..1000, k in 2usize..8) {
        let (g, mut sys) = small_problem(k, 128, seed);
        sys.accumulate(&g, &random_vec(g.rows, seed + 6, 1e-3)).unwrap();
        let ls = solve_ls(&sys, &SolveOptions::default()).unwrap();
        let cm = solve_cm(&sys);
        let back = sys.normal.mul_vec(&ls.gamma_prime);
        let scale = cm.gamma_prime.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in back.iter().zip(&cm.gamma_prime) {
            prop_assert!((a - b).abs() <= 1e-9 * scale);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn no_detections_on_theoretical_profiles(
        lengths in prop::collection::vec(20.0f64..80.0, 1..4),
        launch in -2.0f64..6.0,
        alpha in 0.15f64..0.25,
        sigma in 0.01f64..1.0,
        fitted in any::<bool>(),
    ) {
        let spec = LinkSpec {
            spans: lengths
                .iter()
                .map(|l| SpanSpec { alpha_db_per_km: alpha, ..SpanSpec::ssmf(*l, launch) })
                .collect(),
            amplifiers: vec![],
            point_losses: vec![],
            tx_power_dbm: None,
        };
        let link = Link::<f64>::from_spec(&spec).unwrap();
        let z: Vec<f64> = (0..(spec.total_length_km() * 2.0) as usize).map(|i| 0.25 + 0.5 * i as f64).collect();
        let oracle = theoretical_profile(&link, &z).unwrap();
        let mut opts = AnomalyOptions::new(SigmaSource::Fixed(sigma));
        if fitted {
            opts.tilt = TiltMode::Fitted;
        }
        let r = detect_in(&oracle.power_dbm, &z, &spec, &opts).unwrap();
        prop_assert!(r.events.is_empty(), "{:?}", r.events);
    }
}
