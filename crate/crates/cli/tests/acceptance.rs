//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line
//! per criterion and exits non-zero if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ppe_cli::runner::{self, RunReport};
use ppe_cli::{Needs, Scenario};
use ppe_core::analysis::{condition_of_stacked, profile_mean_offset, profile_rms_error, resolution_bound};
use ppe_core::estimator::{
    form_a1, solve_cm, solve_ls, ColumnBuilder, ColumnOptions, Method, PerturbationSystem, PositionGrid,
    SolveOptions, FrontEndOptions,
};
use ppe_core::estimator::columns::{project_out_phase, stack};
use ppe_core::link::{Link, LinkSpec, SpanSpec};
use ppe_core::pipeline::{run_simulated, EstimationConfig, MethodSelection};
use ppe_core::propagation::{CdOperator, Direction};
use ppe_core::signal::{generate_source, ModulationFormat, Signal, SourceSpec};
use ppe_core::sim::{propagate, theoretical_profile, SimConfig};
use ppe_core::Error;
use rand::{Rng, SeedableRng};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn scenario(name: &str) -> Scenario {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name);
    Scenario::load(&p, None, Needs::Run).expect("bundled scenario loads")
}

fn run_scenario(name: &str) -> RunReport {
    runner::run(&scenario(name)).expect("scenario runs").0
}

fn spans(lengths_and_launch: &[(f64, f64)]) -> LinkSpec {
    LinkSpec {
        spans: lengths_and_launch.iter().map(|&(l, p)| SpanSpec::ssmf(l, p)).collect(),
        amplifiers: vec![],
        point_losses: vec![],
        tx_power_dbm: None,
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn exact_recovery() -> Outcome {
    let spec = spans(&[(75.0, 2.0)]);
    let link = Link::<f64>::from_spec(&spec).unwrap();
    let src = SourceSpec::new(ModulationFormat::Qam16, 128.0, 0.1, 1);
    let tx: Signal<f64> = generate_source::<f64>(&src, 1 << 15, 2).unwrap().field.into();
    let grid = PositionGrid::uniform(75.0, 0.5, 0.5).unwrap();
    let truth = theoretical_profile(&link, &grid.z_km).unwrap().gamma_prime_per_km;
    let g = ColumnBuilder::new(&tx, &link, &grid, ColumnOptions::default())
        .unwrap()
        .stacked(0..tx.len());
    let mut sys = PerturbationSystem::new(grid.clone(), vec![1.3; grid.len()], false).unwrap();
    sys.accumulate(&g, &g.mul_vec(&truth)).unwrap();
    let est = solve_ls(&sys, &SolveOptions::default()).unwrap();
    let err = est
        .gamma_prime
        .iter()
        .zip(&truth)
        .map(|(e, t)| (e - t).abs() / t.abs())
        .fold(0.0, f64::max);
    outcome(
        err <= 1e-9 && grid.len() == 150 && tx.len() == 1 << 16,
        format!("K {} N {} max relative error {err:.2e}", grid.len(), tx.len()),
    )
}

fn desk_scale_profile() -> Outcome {
    let scn = scenario("fig2.toml");
    let est = scn.config.estimation.clone().unwrap();
    let r = runner::run(&scn).unwrap().0;
    let s = r.summary.unwrap();
    let (rms_ls, rms_cm) = (s.rms_ls_db.unwrap(), s.rms_cm_db.unwrap());
    let events = &r.anomalies.as_ref().unwrap().events;
    let near: Vec<_> = events.iter().filter(|e| (e.z_km - 75.0).abs() <= 1.0).collect();
    let loss = near.first().map(|e| e.loss_db);
    let pass = est.frames * est.samples_per_frame >= 1 << 18
        && est.frames >= 10
        && est.sps == 2
        && rms_ls <= 0.3
        && near.len() == 1
        && loss.is_some_and(|l| (l - 1.0).abs() <= 0.25)
        && rms_cm > rms_ls;
    outcome(
        pass,
        format!("RMS LS {rms_ls:.3} dB, CM {rms_cm:.3} dB, events {:?}, loss {loss:?}", events.iter().map(|e| e.z_km).collect::<Vec<_>>()),
    )
}

fn tiny_loss() -> Outcome {
    let scn = scenario("fig8_anomaly.toml");
    let est = scn.config.estimation.clone().unwrap();
    let ase = scn.config.sim.as_ref().unwrap().ase_enabled;
    let step = runner::run(&scn).unwrap().0.step.unwrap();
    let pass = !ase
        && est.frames >= 50
        && (step.height_db - 0.2).abs() <= 0.1
        && (step.z_km - 75.0).abs() <= 1.0;
    outcome(pass, format!("step {:.3} dB at {:.2} km", step.height_db, step.z_km))
}

fn stability_straddle() -> Outcome {
    let r = run_scenario("fig3.toml");
    let limit = 10f64.powf(4.3);
    let (a, b) = (&r.scan[0], &r.scan[1]);
    let rms = a.summary.rms_ls_db.unwrap_or(f64::INFINITY);
    let pass = a.dz_km == 0.25
        && (a.metric - 11.3).abs() < 0.05
        && a.cond_g < limit
        && !a.unstable
        && rms < 1.0
        && b.dz_km == 0.2
        && (b.metric - 14.1).abs() < 0.05
        && b.cond_g > limit
        && (b.unstable || b.singular);
    outcome(
        pass,
        format!(
            "Δz 0.25: metric {:.2} cond {:.3e} RMS {rms:.3} dB; Δz 0.2: metric {:.2} cond {:.3e} flagged {}",
            a.metric,
            a.cond_g,
            b.metric,
            b.cond_g,
            b.unstable || b.singular
        ),
    )
}

fn condition_trend() -> Outcome {
    let scn = scenario("fig4_sweep.toml");
    let sw = scn.config.sweep.clone().unwrap();
    let r = runner::sweep(&scn).unwrap().0;
    let rho = r.sweep_spearman.unwrap();
    let pass = sw.k == 300
        && sw.format == ModulationFormat::Gaussian
        && r.sweep.len() == 48
        && rho > 0.95;
    outcome(pass, format!("{} cases, Spearman {rho:.4}", r.sweep.len()))
}

fn resolution_values() -> Outcome {
    let got: Vec<f64> = [64.0, 128.0, 256.0].iter().map(|&bw| resolution_bound(-21.6, bw).km).collect();
    let pass = got.iter().zip([1.76, 0.44, 0.11]).all(|(g, w)| (g - w).abs() <= 0.01);
    outcome(pass, format!("{got:.3?} km"))
}

fn two_loss_discrimination() -> Outcome {
    let r = run_scenario("fig5_twoloss.toml");
    let peaks = |m: Method| r.derivatives.iter().find(|d| d.method == m).unwrap().peaks_km.clone();
    let (ls, cm) = (peaks(Method::Ls), peaks(Method::Cm));
    let pass = ls.len() == 2 && ((ls[1] - ls[0]).abs() - 0.5).abs() <= 0.25 && cm.len() == 1;
    outcome(pass, format!("LS peaks {ls:?} km, CM peaks {cm:?} km"))
}

fn gradient_check() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let k = rng.random_range(2..=10);
        let spec = spans(&[(k as f64 * 2.0, 2.0)]);
        let link = Link::<f64>::from_spec(&spec).unwrap();
        let src = SourceSpec::new(ModulationFormat::Qam16, 64.0, 0.1, seed);
        let tx: Signal<f64> = generate_source::<f64>(&src, 1024, 2).unwrap().field.into();
        let grid = PositionGrid::uniform(spec.total_length_km(), 2.0, 0.5).unwrap();
        let g = ColumnBuilder::new(&tx, &link, &grid, ColumnOptions::default())
            .unwrap()
            .stacked(0..tx.len());
        let mut sys = PerturbationSystem::new(grid, vec![1.3; k], false).unwrap();
        let a1: Vec<f64> = (0..g.rows).map(|_| 1e-3 * (rng.random::<f64>() - 0.5)).collect();
        sys.accumulate(&g, &a1).unwrap();
        let x: Vec<f64> = (0..k).map(|_| 1e-2 * (rng.random::<f64>() - 0.5)).collect();
        let grad = sys.gradient(&x);
        let scale = max_abs(&grad);
        for i in 0..k {
            let h = 1e-4;
            let mut p = x.clone();
            let mut m = x.clone();
            p[i] += h;
            m[i] -= h;
            let fd = (sys.cost(&p) - sys.cost(&m)) / (2.0 * h);
            worst = worst.max((fd - grad[i]).abs() / scale);
        }
    }
    outcome(worst < 1e-6, format!("worst relative error {worst:.2e} over 10 instances, N 2048"))
}

fn manakov_factor() -> Outcome {
    let spec = spans(&[(50.0, -2.0), (50.0, -2.0)]);
    let src = SourceSpec::new(ModulationFormat::Qam16, 64.0, 0.0, 2);
    let sim = SimConfig { step_size_m: 250.0, sps: 8, ase_enabled: false, seed: 2 };
    let mut est = EstimationConfig::new(2.0, 2, 16384);
    est.sps = 4;
    est.dual_pol = true;
    est.method = MethodSelection::Ls;
    let out = run_simulated(&spec, &src, &sim, &est).unwrap();
    let ls = out.ls.unwrap();
    let bounds = spec.span_boundaries_km();
    let with = ls.power_dbm_with_factor(true);
    let without = ls.power_dbm_with_factor(false);
    let rms = profile_rms_error(&with, &out.oracle.power_dbm, &ls.z_km, &bounds, 1.0).unwrap();
    let offset = profile_mean_offset(&without, &out.oracle.power_dbm, &ls.z_km, &bounds, 1.0).unwrap();
    let pass = rms <= 0.3 && (offset.abs() - 0.51).abs() <= 0.1;
    outcome(pass, format!("RMS with factor {rms:.3} dB, mean offset without {offset:+.3} dB"))
}

fn residual_scaling() -> Outcome {
    let launches = [-6.0, -3.0, 0.0];
    let src = SourceSpec::new(ModulationFormat::Qam16, 32.0, 0.1, 4);
    let tx: Signal<f64> = generate_source::<f64>(&src, 2048, 4).unwrap().field.into();
    let n = tx.len();
    let ratios: Vec<f64> = launches
        .iter()
        .map(|&p| {
            let spec = spans(&[(50.0, p), (50.0, p)]);
            let link = Link::<f64>::from_spec(&spec).unwrap();
            let grid = PositionGrid::uniform(100.0, 0.1, 0.5).unwrap();
            let truth = theoretical_profile(&link, &grid.z_km).unwrap().gamma_prime_per_km;
            let cfg = SimConfig { step_size_m: 100.0, sps: 4, ase_enabled: false, seed: 0 };
            let rx = propagate(&tx, &link, &cfg).unwrap().rx;
            // The model leaves the common phase to the receiver, so compare
            // in the phase-aligned, jA₀-projected frame the estimator uses.
            let r = form_a1(&rx, &tx, &link, &FrontEndOptions::default()).unwrap();
            let mut a1 = r.a1.clone();
            let e: f64 = r.a0.iter().flatten().map(|a| a.norm_sqr()).sum();
            project_out_phase(&mut a1, &r.a0, e);
            let a1 = stack(&a1, 0..n);
            let g_gamma = ColumnBuilder::new(&tx, &link, &grid, ColumnOptions::default())
                .unwrap()
                .stacked(0..n)
                .mul_vec(&truth);
            let rem: f64 = a1.iter().zip(&g_gamma).map(|(a, g)| (a - g).powi(2)).sum();
            let lin: f64 = g_gamma.iter().map(|g| g * g).sum();
            (rem / lin).sqrt()
        })
        .collect();
    // least squares slope of log10(ratio) on launch power in decades
    let x: Vec<f64> = launches.iter().map(|p| p / 10.0).collect();
    let y: Vec<f64> = ratios.iter().map(|r| r.log10()).collect();
    let (mx, my) = (x.iter().sum::<f64>() / 3.0, y.iter().sum::<f64>() / 3.0);
    let slope = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
        / x.iter().map(|a| (a - mx).powi(2)).sum::<f64>();
    outcome((slope - 1.0).abs() <= 0.2, format!("ratios {ratios:.3?}, slope {slope:.3}"))
}

fn cm_ls_identity() -> Outcome {
    let spec = spans(&[(40.0, 4.0), (40.0, 4.0)]);
    let src = SourceSpec::new(ModulationFormat::Qam16, 64.0, 0.0, 6);
    let sim = SimConfig { step_size_m: 250.0, sps: 8, ase_enabled: true, seed: 6 };
    let mut est = EstimationConfig::new(2.0, 1, 8192);
    est.sps = 4;
    let out = run_simulated(&spec, &src, &sim, &est).unwrap();
    let ls = solve_ls(&out.system, &SolveOptions::default()).unwrap();
    let cm = out.cm.unwrap();
    let back = out.system.normal.mul_vec(&ls.gamma_prime);
    let err = back.iter().zip(&cm.gamma_prime).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        / max_abs(&cm.gamma_prime);
    let direct = solve_cm(&out.system).gamma_prime == cm.gamma_prime;
    outcome(err <= 1e-9 && direct && out.system.frames == 1, format!("relative error {err:.2e}"))
}

fn operator_properties() -> Outcome {
    let n = 4096;
    let src = SourceSpec::new(ModulationFormat::Gaussian, 64.0, 0.1, 7);
    let field = generate_source::<f64>(&src, n / 4, 4).unwrap().field;
    let ts = field.sample_period();
    let x = field.samples().to_vec();
    let norm = |v: &[num_complex::Complex<f64>]| v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    let b = -21.6e-27;
    let mut whole = x.clone();
    CdOperator::<f64>::from_segments(&[(80e3, b, 0.0)], n, ts).apply_in_place(&mut whole, Direction::Forward);
    let mut parts = x.clone();
    CdOperator::<f64>::from_segments(&[(30e3, b, 0.0)], n, ts).apply_in_place(&mut parts, Direction::Forward);
    CdOperator::<f64>::from_segments(&[(50e3, b, 0.0)], n, ts).apply_in_place(&mut parts, Direction::Forward);
    let unitary = (norm(&whole) / norm(&x) - 1.0).abs();
    let additive = whole.iter().zip(&parts).map(|(a, c)| (a - c).norm_sqr()).sum::<f64>().sqrt() / norm(&x);

    let lossless = LinkSpec {
        spans: vec![SpanSpec { alpha_db_per_km: 0.0, ..SpanSpec::ssmf(20.0, 8.0) }],
        amplifiers: vec![],
        point_losses: vec![],
        tx_power_dbm: None,
    };
    let tx: Signal<f64> = field.clone().into();
    let cfg = SimConfig { step_size_m: 250.0, sps: 4, ase_enabled: false, seed: 0 };
    let rx = propagate(&tx, &Link::<f64>::from_spec(&lossless).unwrap(), &cfg).unwrap().rx;
    let energy = (rx.total_power() / tx.total_power() - 1.0).abs();

    let mirrored = LinkSpec {
        spans: vec![
            SpanSpec::ssmf(25.0, 2.0),
            SpanSpec { beta2_ps2_per_km: 21.6, ..SpanSpec::ssmf(25.0, 2.0) },
        ],
        amplifiers: vec![],
        point_losses: vec![],
        tx_power_dbm: None,
    };
    let link = Link::<f64>::from_spec(&mirrored).unwrap();
    let grid = PositionGrid::uniform(50.0, 1.0, 0.5).unwrap();
    let tx2: Signal<f64> = generate_source::<f64>(&SourceSpec::new(ModulationFormat::Qam16, 64.0, 0.0, 7), 2048, 2)
        .unwrap()
        .field
        .into();
    let g = ColumnBuilder::new(&tx2, &link, &grid, ColumnOptions::default())
        .unwrap()
        .stacked(0..tx2.len());
    let ((cond, _), _) = condition_of_stacked(&g, 1);
    let mut sys = PerturbationSystem::new(grid.clone(), vec![1.3; grid.len()], false).unwrap();
    sys.accumulate(&g, &vec![0.0; g.rows]).unwrap();
    let refused = matches!(solve_ls(&sys, &SolveOptions::default()), Err(Error::Singular { .. }));

    let pass = unitary <= 1e-12 && additive <= 1e-12 && energy <= 1e-6 && cond >= 1e12 && refused;
    outcome(
        pass,
        format!(
            "CD norm change {unitary:.1e}, additivity {additive:.1e}, SSFM energy change {energy:.1e}, \
             mirrored cond {cond:.2e}, solver refused {refused}"
        ),
    )
}

type Criterion = (usize, &'static str, fn() -> Outcome, Duration);

fn main() -> ExitCode {
    let mins = |m: u64| Duration::from_secs(60 * m);
    let criteria: [Criterion; 12] = [
        (1, "exact linear recovery", exact_recovery, Duration::from_secs(30)),
        (2, "desk-scale profile with VOA and ASE", desk_scale_profile, mins(10)),
        (3, "tiny-loss sensitivity", tiny_loss, mins(15)),
        (4, "stability straddle", stability_straddle, mins(10)),
        (5, "conditioning trend", condition_trend, mins(20)),
        (6, "resolution bound values", resolution_values, Duration::from_secs(1)),
        (7, "two-loss discrimination", two_loss_discrimination, mins(10)),
        (8, "gradient check", gradient_check, Duration::from_secs(10)),
        (9, "dual-polarization factor", manakov_factor, mins(10)),
        (10, "first-order residual scaling", residual_scaling, mins(5)),
        (11, "CM/LS identity", cm_ls_identity, mins(1)),
        (12, "operator properties", operator_properties, mins(1)),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, f, budget) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let el = t.elapsed();
        let pass = o.pass && el <= budget;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {n:>2} {name}: {} ({}; {:.1} s of {} s)",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            el.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
