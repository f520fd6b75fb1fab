use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ppe_core::iq::{read_capture, write_capture};
use ppe_core::AnySignal;

const SMALL: &str = r#"
name = "small"
seed = 5

[link]
spans = [
  { length_km = 20.0, alpha_db_per_km = 0.2, beta2_ps2_per_km = -21.6, gamma_per_w_km = 1.3, launch_power_dbm = 6.0 },
  { length_km = 20.0, alpha_db_per_km = 0.2, beta2_ps2_per_km = -21.6, gamma_per_w_km = 1.3, launch_power_dbm = 6.0 },
]
point_losses = [{ position_km = 30.0, attenuation_db = 2.0 }]

[source]
format = "16QAM"
symbol_rate_gbd = 64.0
rolloff = 0.0

[sim]
step_size_m = 500.0
sps = 8
ase_enabled = true

[estimation]
dz_km = 2.0
frames = 2
samples_per_frame = 4096
sps = 4
method = "both"

[analysis]
sigma = { fixed_db = 0.3 }
derivative = true
"#;

fn ppe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppe"))
        .args(args)
        .output()
        .expect("ppe runs")
}

fn scenario(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("scenario.toml");
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn assert_ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn malformed_unit_key_is_a_config_error_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let bad = SMALL.replacen("beta2_ps2_per_km = -21.6", "beta2_ps2: \"x\"", 1);
    let cfg = scenario(dir.path(), &bad);
    let out = dir.path().join("out");
    let o = ppe(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());

    let typo = SMALL.replacen("dz_km = 2.0", "dz_m = 2000.0", 1);
    let cfg = scenario(dir.path(), &typo);
    let o = ppe(&["run", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn missing_output_directory_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), SMALL);
    let o = ppe(&["run", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let o = ppe(&["run", "--config", "/nonexistent/scenario.toml", "--out", "/tmp/never"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exported_captures_reproduce_the_in_process_profile() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), SMALL);
    let run = dir.path().join("run");
    let sim = dir.path().join("sim");
    let est = dir.path().join("est");
    assert_ok(&ppe(&["run", "--config", s(&cfg), "--out", s(&run)]));
    assert_ok(&ppe(&["simulate", "--config", s(&cfg), "--out", s(&sim)]));
    assert_ok(&ppe(&["estimate", "--config", s(&cfg), "--out", s(&est), "--captures", s(&sim)]));
    for f in ["profile_ls.csv", "profile_cm.csv"] {
        assert_eq!(
            fs::read(run.join(f)).unwrap(),
            fs::read(est.join(f)).unwrap(),
            "{f} differs"
        );
    }
    let header = fs::read_to_string(sim.join("captures/tx_0000.json")).unwrap();
    assert!(header.contains("scenario_hash="));
}

fn delayed(sig: &AnySignal, lag: usize) -> AnySignal {
    let rails = sig
        .rails()
        .iter()
        .map(|r| {
            let n = r.len();
            (0..n).map(|i| r[(i + n - lag) % n]).collect()
        })
        .collect();
    sig.from_rails(rails, sig.sample_period()).unwrap()
}

#[test]
fn integer_delay_is_removed_by_synchronization() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), SMALL);
    let sim = dir.path().join("sim");
    assert_ok(&ppe(&["simulate", "--config", s(&cfg), "--out", s(&sim)]));
    let plain = dir.path().join("plain");
    assert_ok(&ppe(&["estimate", "--config", s(&cfg), "--out", s(&plain), "--captures", s(&sim)]));

    let shifted_dir = dir.path().join("shifted");
    fs::create_dir_all(&shifted_dir).unwrap();
    let mut args = vec![
        "estimate".to_string(),
        "--config".into(),
        s(&cfg).into(),
        "--out".into(),
        s(&dir.path().join("late")).into(),
    ];
    let (mut tx, mut rx) = (vec!["--tx".to_string()], vec!["--rx".to_string()]);
    for i in 0..2 {
        let t = sim.join(format!("captures/tx_{i:04}.iq"));
        let (sig, _) = read_capture::<f64>(&sim.join(format!("captures/rx_{i:04}.iq"))).unwrap();
        let r = shifted_dir.join(format!("rx_{i:04}.iq"));
        write_capture(&r, &delayed(&sig, 1000)).unwrap();
        tx.push(s(&t).into());
        rx.push(s(&r).into());
    }
    args.extend(tx);
    args.extend(rx);
    let o = Command::new(env!("CARGO_BIN_EXE_ppe")).args(&args).output().unwrap();
    assert_ok(&o);
    let late = dir.path().join("late");
    assert_eq!(
        fs::read(plain.join("profile_ls.csv")).unwrap(),
        fs::read(late.join("profile_ls.csv")).unwrap()
    );
    let frames = fs::read_to_string(late.join("frames.csv")).unwrap();
    let lags: Vec<&str> = frames.lines().skip(2).map(|l| l.split(',').nth(2).unwrap()).collect();
    assert_eq!(lags, vec!["1000", "1000"]);
}

#[test]
fn swapped_captures_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), SMALL);
    let sim = dir.path().join("sim");
    assert_ok(&ppe(&["simulate", "--config", s(&cfg), "--out", s(&sim)]));
    let out = dir.path().join("swapped");
    let o = ppe(&[
        "estimate",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--tx",
        s(&sim.join("captures/rx_0000.iq")),
        "--rx",
        s(&sim.join("captures/tx_0000.iq")),
    ]);
    assert_eq!(o.status.code(), Some(5), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn mismatched_headers_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), SMALL);
    let sim = dir.path().join("sim");
    assert_ok(&ppe(&["simulate", "--config", s(&cfg), "--out", s(&sim)]));
    let (sig, _) = read_capture::<f64>(&sim.join("captures/rx_0000.iq")).unwrap();
    let short = sig
        .from_rails(sig.rails().iter().map(|r| r[..2048].to_vec()).collect(), sig.sample_period())
        .unwrap();
    let r = dir.path().join("short.iq");
    write_capture(&r, &short).unwrap();
    let o = ppe(&[
        "estimate",
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("x")),
        "--tx",
        s(&sim.join("captures/tx_0000.iq")),
        "--rx",
        s(&r),
    ]);
    assert_eq!(o.status.code(), Some(5));
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn same_seed_gives_byte_identical_csvs_and_stamps_every_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_ok(&ppe(&["run", "--config", s(&cfg), "--out", s(&a), "--threads", "1"]));
    assert_ok(&ppe(&["run", "--config", s(&cfg), "--out", s(&b)]));
    let fa = csv_files(&a);
    assert!(fa.len() >= 5);
    assert_eq!(fa, csv_files(&b));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    let hash = manifest["scenario_hash"].as_str().unwrap().to_string();
    assert_eq!(manifest["seeds"]["source"], 5);
    for (name, bytes) in &fa {
        let first = String::from_utf8_lossy(bytes).lines().next().unwrap().to_string();
        assert_eq!(first, format!("# scenario_hash={hash} version={}", env!("CARGO_PKG_VERSION")), "{name}");
    }

    let c = dir.path().join("c");
    assert_ok(&ppe(&["run", "--config", s(&cfg), "--out", s(&c), "--seed", "6"]));
    assert_ne!(
        fs::read(a.join("profile_ls.csv")).unwrap(),
        fs::read(c.join("profile_ls.csv")).unwrap()
    );
}

#[test]
fn json_format_and_analyze_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(dir.path(), SMALL);
    let run = dir.path().join("run");
    assert_ok(&ppe(&["run", "--config", s(&cfg), "--out", s(&run), "--format", "json"]));
    let p: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("profile_ls.json")).unwrap()).unwrap();
    assert_eq!(p["rows"].as_array().unwrap().len(), 20);
    assert!(p["scenario_hash"].is_string());

    let ana = dir.path().join("ana");
    assert_ok(&ppe(&[
        "analyze",
        "--config",
        s(&cfg),
        "--out",
        s(&ana),
        "--profile",
        s(&run.join("profile_ls.json")),
    ]));
    let a: serde_json::Value = serde_json::from_str(&fs::read_to_string(ana.join("manifest.json")).unwrap()).unwrap();
    let b: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(a["anomalies"], b["anomalies"]);
    let events = a["anomalies"]["events"].as_array().unwrap();
    assert_eq!(events.len(), 1);
    assert!((events[0]["z_km"].as_f64().unwrap() - 30.0).abs() <= 1.0);
}

#[test]
fn sweep_verb_writes_conditioning_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario(
        dir.path(),
        "seed = 2\n[sweep]\nbeta2_ps2_per_km = [-10.0, -40.0]\nbw_ghz = [32.0]\ndz_km = [1.0, 4.0]\nk = 12\nn_symbols = 256\n",
    );
    let out = dir.path().join("sw");
    assert_ok(&ppe(&["sweep", "--config", s(&cfg), "--out", s(&out)]));
    let t = fs::read_to_string(out.join("conditioning.csv")).unwrap();
    let lines: Vec<&str> = t.lines().collect();
    assert!(lines[1].starts_with("metric,cond_g,cond_g_complex"));
    assert_eq!(lines.len(), 2 + 4);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert!(m["sweep_spearman"].as_f64().unwrap() > 0.5);
}
