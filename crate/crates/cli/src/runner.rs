//! The verbs. Each returns an in-memory report plus the artifacts to write.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ppe_core::analysis::{
    condition_sweep, derivative_of, detect_in, find_peaks, fit_step, profile_mean_offset, profile_rms_error,
    spearman, stability_metric, AnomalyOptions, AnomalyReport, ConditioningReport, ProfileDerivative, SigmaSource,
    StepFit, DEAD_ZONE_KM,
};
use ppe_core::estimator::{ColumnOptions, Method, ProfileEstimate};
use ppe_core::iq::read_capture;
use ppe_core::link::{Link, LinkSpec};
use ppe_core::pipeline::{run_from_signals, run_simulated, simulate_frame, EstimationConfig, EstimationOutput};
use ppe_core::sim::{theoretical_profile, TheoreticalProfile};
use ppe_core::AnySignal;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{AnalysisConfig, Needs, ScenarioConfig, SigmaMode};
use crate::error::{CliError, CliResult};
use crate::output::{Cell, Outputs, Stamp, Table};

/// A validated scenario with its provenance stamp.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub stamp: Stamp,
}

impl Scenario {
    pub fn new(mut config: ScenarioConfig, seed: Option<u64>, needs: Needs) -> CliResult<Self> {
        config.resolve_seed(seed);
        config.validate(needs)?;
        let stamp = Stamp::new(config.hash());
        Ok(Self { config, stamp })
    }

    pub fn load(path: &Path, seed: Option<u64>, needs: Needs) -> CliResult<Self> {
        Self::new(ScenarioConfig::load(path)?, seed, needs)
    }

    fn link(&self) -> &LinkSpec {
        self.config.link.as_ref().expect("validated link")
    }

    fn estimation(&self) -> &EstimationConfig {
        self.config.estimation.as_ref().expect("validated estimation")
    }

    fn analysis(&self) -> AnalysisConfig {
        self.config.analysis.clone().unwrap_or_default()
    }

    fn dead_zone_km(&self) -> f64 {
        self.config.analysis.as_ref().map_or(DEAD_ZONE_KM, |a| a.dead_zone_km)
    }
}

/// Errors of each estimator against the theoretical profile, dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct ProfileSummary {
    pub rms_ls_db: Option<f64>,
    pub mean_offset_ls_db: Option<f64>,
    /// After removing the best constant offset (CM has no absolute scale).
    pub rms_cm_db: Option<f64>,
    pub cm_offset_db: Option<f64>,
    pub rms_augmented_db: Option<f64>,
    pub cond_g: Option<f64>,
    pub unstable: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct ScanEntry {
    pub dz_km: f64,
    pub metric: f64,
    /// σ_max/σ_min of `G` implied by the accumulated normal matrix, or the
    /// solver's estimate when it refused the system.
    pub cond_g: f64,
    pub unstable: bool,
    pub singular: bool,
    pub summary: ProfileSummary,
    pub output: Option<EstimationOutput>,
}

#[derive(Debug, Clone)]
pub struct DerivativeReport {
    pub method: Method,
    pub derivative: ProfileDerivative,
    pub peaks_km: Vec<f64>,
}

/// Structured results of a verb.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub estimation: Option<EstimationOutput>,
    pub summary: Option<ProfileSummary>,
    pub scan: Vec<ScanEntry>,
    pub anomalies: Option<AnomalyReport>,
    pub step: Option<StepFit>,
    pub derivatives: Vec<DerivativeReport>,
    pub sweep: Vec<ConditioningReport>,
    pub sweep_spearman: Option<f64>,
    pub timings_s: BTreeMap<String, f64>,
}

fn timed<T>(report: &mut RunReport, name: &str, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    *report.timings_s.entry(name.to_string()).or_default() += t.elapsed().as_secs_f64();
    out
}

fn base_manifest(scn: &Scenario, verb: &str) -> serde_json::Map<String, Value> {
    let c = &scn.config;
    let mut m = serde_json::Map::new();
    m.insert("verb".into(), json!(verb));
    m.insert("name".into(), json!(c.name));
    m.insert(
        "seeds".into(),
        json!({
            "scenario": c.seed,
            "source": c.source.as_ref().map(|s| s.seed),
            "sim": c.sim.as_ref().map(|s| s.seed),
            "sweep": c.sweep.as_ref().map(|s| s.seed),
        }),
    );
    m.insert("config".into(), serde_json::to_value(c).expect("config serializes"));
    m
}

fn finish_manifest(outputs: &mut Outputs, report: &RunReport) {
    let m = &mut outputs.manifest;
    m.insert("timings_s".into(), json!(report.timings_s));
    if let Some(s) = &report.summary {
        m.insert("summary".into(), json!(s));
    }
    if let Some(e) = &report.estimation {
        m.insert("frames".into(), json!(e.frames));
        m.insert(
            "profile_seeds".into(),
            json!(e.ls.as_ref().or(e.cm.as_ref()).map(|p| p.seeds.clone())),
        );
    }
    if let Some(a) = &report.anomalies {
        m.insert(
            "anomalies".into(),
            json!({ "sigma_db": a.sigma_db, "threshold_db": a.threshold_db, "events": a.events }),
        );
    }
    if let Some(s) = &report.step {
        m.insert("step_fit".into(), json!(s));
    }
    if !report.derivatives.is_empty() {
        let peaks: BTreeMap<String, &Vec<f64>> = report
            .derivatives
            .iter()
            .map(|d| (d.method.to_string(), &d.peaks_km))
            .collect();
        m.insert("derivative_peaks_km".into(), json!(peaks));
    }
    if let Some(r) = report.sweep_spearman {
        m.insert("sweep_spearman".into(), json!(r));
    }
    if !report.scan.is_empty() {
        let scan: Vec<Value> = report
            .scan
            .iter()
            .map(|s| {
                json!({
                    "dz_km": s.dz_km,
                    "metric": s.metric,
                    "cond_g": Cell::Num(s.cond_g).to_json(),
                    "unstable": s.unstable,
                    "singular": s.singular,
                    "summary": s.summary,
                })
            })
            .collect();
        m.insert("dz_scan".into(), json!(scan));
    }
}

fn profile_table(name: &str, p: &ProfileEstimate, oracle: &TheoreticalProfile) -> Table {
    let mut t = Table::new(
        name,
        &["z_km", "gamma_prime", "power_dbm", "std_dbm", "oracle_power_dbm", "oracle_gamma_prime"],
    );
    for i in 0..p.len() {
        t.push(vec![
            p.z_km[i].into(),
            p.gamma_prime[i].into(),
            p.power_dbm[i].into(),
            p.std_dbm[i].into(),
            oracle.power_dbm[i].into(),
            oracle.gamma_prime_per_km[i].into(),
        ]);
    }
    t
}

fn method_suffix(m: Method) -> &'static str {
    match m {
        Method::Ls => "ls",
        Method::Cm => "cm",
        Method::LsAugmented => "ls_augmented",
    }
}

fn summarize(out: &EstimationOutput, link: &LinkSpec, dead_zone_km: f64) -> CliResult<ProfileSummary> {
    let bounds = link.span_boundaries_km();
    let o = &out.oracle.power_dbm;
    let z = &out.grid.z_km;
    let rms = |p: &ProfileEstimate| profile_rms_error(&p.power_dbm, o, z, &bounds, dead_zone_km);
    let mut s = ProfileSummary::default();
    if let Some(p) = &out.ls {
        s.rms_ls_db = Some(rms(p)?);
        s.mean_offset_ls_db = Some(profile_mean_offset(&p.power_dbm, o, z, &bounds, dead_zone_km)?);
        s.cond_g = p.condition.map(|c| c.cond_g);
        s.unstable = p.condition.map(|c| c.unstable);
    }
    if let Some(p) = &out.cm {
        let off = profile_mean_offset(&p.power_dbm, o, z, &bounds, dead_zone_km)?;
        let shifted: Vec<f64> = p.power_dbm.iter().map(|v| v - off).collect();
        s.rms_cm_db = Some(profile_rms_error(&shifted, o, z, &bounds, dead_zone_km)?);
        s.cm_offset_db = Some(off);
    }
    if let Some(p) = &out.augmented {
        s.rms_augmented_db = Some(rms(p)?);
    }
    Ok(s)
}

fn estimation_tables(out: &EstimationOutput, outputs: &mut Outputs, suffix: &str) {
    for p in [&out.ls, &out.cm, &out.augmented].into_iter().flatten() {
        outputs.tables.push(profile_table(
            &format!("profile_{}{suffix}", method_suffix(p.method)),
            p,
            &out.oracle,
        ));
    }
    let mut t = Table::new(
        format!("frames{suffix}"),
        &["index", "residual_ratio", "lag", "sync_peak", "phase_rad", "window_start", "window_end", "cond_g"],
    );
    for f in &out.frames {
        t.push(vec![
            f.index.into(),
            f.residual_ratio.into(),
            f.lag.into(),
            f.sync_peak.into(),
            f.phase_rad.into(),
            f.window[0].into(),
            f.window[1].into(),
            f.cond_g.into(),
        ]);
    }
    outputs.tables.push(t);
}

/// Bare profile on a grid, as analysis input.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileInput {
    pub method: Method,
    pub z_km: Vec<f64>,
    pub gamma_prime: Vec<f64>,
    pub power_dbm: Vec<f64>,
}

impl From<&ProfileEstimate> for ProfileInput {
    fn from(p: &ProfileEstimate) -> Self {
        Self {
            method: p.method,
            z_km: p.z_km.clone(),
            gamma_prime: p.gamma_prime.clone(),
            power_dbm: p.power_dbm.clone(),
        }
    }
}

fn analyze_profiles(
    scn: &Scenario,
    profiles: &[ProfileInput],
    oracle_dbm: &[f64],
    report: &mut RunReport,
    outputs: &mut Outputs,
) -> CliResult<()> {
    let a = scn.analysis();
    let link = scn.link();
    if a.detect {
        let p = profiles
            .iter()
            .find(|p| p.method == a.profile)
            .ok_or_else(|| CliError::Config(format!("analysis.profile {} was not estimated", a.profile)))?;
        let opts = AnomalyOptions {
            sigma: match a.sigma {
                SigmaMode::Oracle => SigmaSource::Oracle(oracle_dbm.to_vec()),
                SigmaMode::FixedDb(s) => SigmaSource::Fixed(s),
                SigmaMode::PriorToKm(z) => SigmaSource::PriorTo(z),
            },
            tilt: a.tilt,
            threshold_sigmas: a.threshold_sigmas,
            dead_zone_km: a.dead_zone_km,
        };
        let r = timed(report, "analysis", || detect_in(&p.power_dbm, &p.z_km, link, &opts))?;
        let mut t = Table::new("anomalies", &["z_km", "loss_db", "span"]);
        for e in &r.events {
            t.push(vec![e.z_km.into(), e.loss_db.into(), e.span.into()]);
        }
        outputs.tables.push(t);
        let mut t = Table::new("residual", &["z_km", "residual_db"]);
        for (z, v) in r.z_km.iter().zip(&r.residual_db) {
            t.push(vec![(*z).into(), (*v).into()]);
        }
        outputs.tables.push(t);
        if let Some([lo, hi]) = a.step_window_km {
            report.step = fit_step(&r.residual_db, &r.z_km, lo, hi);
            let mut t = Table::new("step_fit", &["z_km", "height_db"]);
            if let Some(s) = report.step {
                t.push(vec![s.z_km.into(), s.height_db.into()]);
            }
            outputs.tables.push(t);
        }
        report.anomalies = Some(r);
    }
    if a.derivative {
        for p in profiles {
            let dz = p.z_km.get(1).map(|z1| z1 - p.z_km[0]).unwrap_or(0.0);
            let d = derivative_of(&p.gamma_prime, &p.z_km, dz)?;
            let range = match a.peak_window_km {
                Some([lo, hi]) => {
                    let start = d.z_km.iter().position(|z| *z >= lo).unwrap_or(d.z_km.len());
                    let end = d.z_km.iter().rposition(|z| *z <= hi).map_or(start, |i| i + 1);
                    start..end.max(start)
                }
                None => 0..d.z_km.len(),
            };
            let peaks = if range.is_empty() {
                Vec::new()
            } else {
                find_peaks(&d.slope, range, a.peak_min_fraction)
            };
            let mut t = Table::new(format!("derivative_{}", method_suffix(p.method)), &["z_km", "slope", "peak"]);
            for (i, (z, s)) in d.z_km.iter().zip(&d.slope).enumerate() {
                t.push(vec![(*z).into(), (*s).into(), peaks.contains(&i).into()]);
            }
            outputs.tables.push(t);
            report.derivatives.push(DerivativeReport {
                method: p.method,
                peaks_km: peaks.iter().map(|&i| d.z_km[i]).collect(),
                derivative: d,
            });
        }
    }
    Ok(())
}

fn after_estimation(scn: &Scenario, out: EstimationOutput, report: &mut RunReport, outputs: &mut Outputs) -> CliResult<()> {
    report.summary = Some(summarize(&out, scn.link(), scn.dead_zone_km())?);
    estimation_tables(&out, outputs, "");
    if scn.config.analysis.is_some() {
        let profiles: Vec<ProfileInput> = [&out.ls, &out.cm, &out.augmented]
            .into_iter()
            .flatten()
            .map(ProfileInput::from)
            .collect();
        analyze_profiles(scn, &profiles, &out.oracle.power_dbm, report, outputs)?;
    }
    report.estimation = Some(out);
    Ok(())
}

fn scan_metric(scn: &Scenario, dz_km: f64) -> f64 {
    let beta2 = scn.link().spans[0].beta2_ps2_per_km;
    let bw = scn.config.source.as_ref().map_or(0.0, |s| s.symbol_rate_gbd);
    stability_metric(beta2, bw, dz_km)
}

fn run_scan(scn: &Scenario, report: &mut RunReport, outputs: &mut Outputs) -> CliResult<()> {
    let c = &scn.config;
    let mut t = Table::new(
        "dz_scan",
        &["dz_km", "metric", "cond_g", "unstable", "singular", "rms_ls_db", "rms_cm_db"],
    );
    for &dz in &c.dz_scan_km {
        let mut est = scn.estimation().clone();
        est.dz_km = dz;
        let metric = scan_metric(scn, dz);
        let res = timed(report, "estimation", || {
            run_simulated(scn.link(), c.source.as_ref().expect("validated"), c.sim.as_ref().expect("validated"), &est)
        });
        let entry = match res {
            Ok(out) => {
                let summary = summarize(&out, scn.link(), scn.dead_zone_km())?;
                let cond = ppe_core::estimator::solve::normal_condition(&out.system.normal, est.solve.cond_threshold);
                estimation_tables(&out, outputs, &format!("_dz{dz}"));
                ScanEntry {
                    dz_km: dz,
                    metric,
                    cond_g: cond.cond_g,
                    unstable: cond.unstable,
                    singular: false,
                    summary,
                    output: Some(out),
                }
            }
            Err(ppe_core::Error::Singular { condition, .. }) => ScanEntry {
                dz_km: dz,
                metric,
                cond_g: condition,
                unstable: true,
                singular: true,
                summary: ProfileSummary::default(),
                output: None,
            },
            Err(e) => return Err(e.into()),
        };
        t.push(vec![
            dz.into(),
            metric.into(),
            entry.cond_g.into(),
            entry.unstable.into(),
            entry.singular.into(),
            entry.summary.rms_ls_db.into(),
            entry.summary.rms_cm_db.into(),
        ]);
        report.scan.push(entry);
    }
    outputs.tables.push(t);
    Ok(())
}

fn run_sweep(scn: &Scenario, report: &mut RunReport, outputs: &mut Outputs) -> CliResult<()> {
    let sw = scn.config.sweep.as_ref().expect("validated sweep");
    let cases = sw.cases();
    let reports = timed(report, "sweep", || {
        condition_sweep(&cases, ColumnOptions::default(), &scn.config.limits)
    })?;
    let mut t = Table::new(
        "conditioning",
        &[
            "metric",
            "cond_g",
            "cond_g_complex",
            "beta2_ps2_per_km",
            "bw_ghz",
            "dz_km",
            "k",
            "source",
            "stable_predicted",
            "above_threshold",
        ],
    );
    for r in &reports {
        t.push(vec![
            r.metric.into(),
            r.cond_g.into(),
            r.cond_g_complex.into(),
            r.beta2_ps2_per_km.into(),
            r.bw_ghz.into(),
            r.dz_km.into(),
            r.k.into(),
            format!("{:?}", r.source).to_lowercase().into(),
            r.stable_predicted.into(),
            r.above_threshold.into(),
        ]);
    }
    outputs.tables.push(t);
    let metric: Vec<f64> = reports.iter().map(|r| r.metric).collect();
    let cond: Vec<f64> = reports.iter().map(|r| r.cond_g).collect();
    report.sweep_spearman = Some(spearman(&metric, &cond));
    report.sweep = reports;
    Ok(())
}

/// Full pipeline: simulate, estimate and analyze, then any sweep.
pub fn run(scn: &Scenario) -> CliResult<(RunReport, Outputs)> {
    let mut report = RunReport::default();
    let mut outputs = Outputs {
        manifest: base_manifest(scn, "run"),
        ..Default::default()
    };
    let c = &scn.config;
    if c.estimation.is_some() {
        if !c.dz_scan_km.is_empty() {
            run_scan(scn, &mut report, &mut outputs)?;
        } else {
            let out = timed(&mut report, "estimation", || {
                run_simulated(
                    scn.link(),
                    c.source.as_ref().expect("validated"),
                    c.sim.as_ref().expect("validated"),
                    scn.estimation(),
                )
            })?;
            after_estimation(scn, out, &mut report, &mut outputs)?;
        }
    }
    if c.sweep.is_some() {
        run_sweep(scn, &mut report, &mut outputs)?;
    }
    finish_manifest(&mut outputs, &report);
    Ok((report, outputs))
}

/// Conditioning sweep only.
pub fn sweep(scn: &Scenario) -> CliResult<(RunReport, Outputs)> {
    let mut report = RunReport::default();
    let mut outputs = Outputs {
        manifest: base_manifest(scn, "sweep"),
        ..Default::default()
    };
    run_sweep(scn, &mut report, &mut outputs)?;
    finish_manifest(&mut outputs, &report);
    Ok((report, outputs))
}

fn oracle_table(link: &LinkSpec, est: &EstimationConfig) -> CliResult<(Table, TheoreticalProfile)> {
    let l = Link::<f64>::from_spec(link)?;
    let grid = est.grid(link.total_length_km())?;
    let o = theoretical_profile(&l, &grid.z_km)?;
    let mut t = Table::new("oracle", &["z_km", "power_dbm", "gamma_prime"]);
    for i in 0..o.len() {
        t.push(vec![o.z_km[i].into(), o.power_dbm[i].into(), o.gamma_prime_per_km[i].into()]);
    }
    Ok((t, o))
}

pub fn capture_name(kind: &str, index: usize) -> PathBuf {
    PathBuf::from("captures").join(format!("{kind}_{index:04}.iq"))
}

/// Simulates every frame and exports tx/rx captures at the estimation rate.
pub fn simulate(scn: &Scenario) -> CliResult<Outputs> {
    let c = &scn.config;
    let est = scn.estimation();
    let mut outputs = Outputs {
        manifest: base_manifest(scn, "simulate"),
        ..Default::default()
    };
    let t = Instant::now();
    let link = Link::<f64>::from_spec(scn.link())?;
    let source = c.source.as_ref().expect("validated");
    let sim = c.sim.as_ref().expect("validated");
    let frames: Vec<ppe_core::Result<_>> = (0..est.frames)
        .into_par_iter()
        .map(|i| simulate_frame(&link, source, sim, est, i))
        .collect();
    for f in frames {
        let f = f?;
        outputs.captures.push((capture_name("tx", f.index), f.tx));
        outputs.captures.push((capture_name("rx", f.index), f.rx));
    }
    outputs.tables.push(oracle_table(scn.link(), est)?.0);
    outputs
        .manifest
        .insert("timings_s".into(), json!({ "simulate": t.elapsed().as_secs_f64() }));
    Ok(outputs)
}

/// `(tx, rx)` capture pairs exported by [`simulate`] into `dir`.
pub fn pairs_in_dir(dir: &Path) -> CliResult<Vec<(PathBuf, PathBuf)>> {
    let mut pairs = Vec::new();
    for i in 0.. {
        let tx = dir.join(capture_name("tx", i));
        let rx = dir.join(capture_name("rx", i));
        if !tx.exists() && !rx.exists() {
            break;
        }
        pairs.push((tx, rx));
    }
    if pairs.is_empty() {
        return Err(CliError::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no captures/tx_0000.iq"),
        ));
    }
    Ok(pairs)
}

fn load_pair(scn: &Scenario, tx: &Path, rx: &Path) -> CliResult<(AnySignal, AnySignal)> {
    let read = |p: &Path| read_capture::<f64>(p).map_err(|e| match e {
        ppe_core::Error::Io(io) => CliError::io(p, io),
        other => other.into(),
    });
    let (t, th) = read(tx)?;
    let (r, rh) = read(rx)?;
    if !th.compatible(&rh) {
        return Err(CliError::HeaderMismatch(format!(
            "{} and {} describe different time bases",
            tx.display(),
            rx.display()
        )));
    }
    let est = scn.estimation();
    let source = scn.config.source.as_ref().expect("validated");
    let ts = 1.0 / (source.symbol_rate_hz() * est.sps as f64);
    if (th.sample_period_s - ts).abs() > 1e-9 * ts || th.dual_pol != est.dual_pol {
        return Err(CliError::HeaderMismatch(format!(
            "{}: sample period {:e} s / dual_pol {} does not match the scenario ({ts:e} s / {})",
            tx.display(),
            th.sample_period_s,
            th.dual_pol,
            est.dual_pol
        )));
    }
    Ok((t, r))
}

/// Estimation from exported captures with integer-lag synchronization.
pub fn estimate_files(scn: &Scenario, pairs: &[(PathBuf, PathBuf)]) -> CliResult<(RunReport, Outputs)> {
    let mut report = RunReport::default();
    let mut outputs = Outputs {
        manifest: base_manifest(scn, "estimate"),
        ..Default::default()
    };
    let signals = timed(&mut report, "read", || {
        pairs
            .iter()
            .map(|(t, r)| load_pair(scn, t, r))
            .collect::<CliResult<Vec<_>>>()
    })?;
    let source = scn.config.source.as_ref().expect("validated");
    let mut est = scn.estimation().clone();
    est.frames = signals.len();
    let out = timed(&mut report, "estimation", || {
        run_from_signals(scn.link(), &signals, source.occupied_bandwidth_hz(), &est)
    })?;
    outputs.manifest.insert(
        "captures".into(),
        json!(pairs
            .iter()
            .map(|(t, r)| [t.display().to_string(), r.display().to_string()])
            .collect::<Vec<_>>()),
    );
    after_estimation(scn, out, &mut report, &mut outputs)?;
    finish_manifest(&mut outputs, &report);
    Ok((report, outputs))
}

/// Reads a profile table written by `run` or `estimate` (CSV or JSON).
pub fn read_profile(path: &Path) -> CliResult<ProfileInput> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |m: String| CliError::Core(ppe_core::Error::Format(format!("{}: {m}", path.display())));
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
    let method = if stem.contains("augmented") {
        Method::LsAugmented
    } else if stem.contains("cm") {
        Method::Cm
    } else {
        Method::Ls
    };
    let mut cols: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    if path.extension().is_some_and(|e| e == "json") {
        let v: Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        let rows = v["rows"].as_array().ok_or_else(|| bad("no rows".into()))?;
        for name in ["z_km", "gamma_prime", "power_dbm"] {
            let vals = rows
                .iter()
                .map(|r| r[name].as_f64().ok_or_else(|| bad(format!("{name} missing or not a number"))))
                .collect::<CliResult<Vec<f64>>>()?;
            cols.insert(name.to_string(), vals);
        }
    } else {
        let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty".into()))?.split(',').collect();
        let mut data: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
        for l in lines {
            let cells: Vec<&str> = l.split(',').collect();
            if cells.len() != header.len() {
                return Err(bad(format!("row has {} cells, header {}", cells.len(), header.len())));
            }
            for (d, c) in data.iter_mut().zip(&cells) {
                d.push(c.trim().parse().map_err(|_| bad(format!("not a number: {c}")))?);
            }
        }
        for (h, d) in header.iter().zip(data) {
            cols.insert(h.trim().to_string(), d);
        }
    }
    let mut take = |name: &str| cols.remove(name).ok_or_else(|| bad(format!("no {name} column")));
    Ok(ProfileInput {
        method,
        z_km: take("z_km")?,
        gamma_prime: take("gamma_prime")?,
        power_dbm: take("power_dbm")?,
    })
}

/// Detection and derivative analysis of stored profiles.
pub fn analyze(scn: &Scenario, profiles: &[PathBuf]) -> CliResult<(RunReport, Outputs)> {
    let mut report = RunReport::default();
    let mut outputs = Outputs {
        manifest: base_manifest(scn, "analyze"),
        ..Default::default()
    };
    let inputs = profiles
        .iter()
        .map(|p| read_profile(p))
        .collect::<CliResult<Vec<_>>>()?;
    let first = inputs
        .first()
        .ok_or_else(|| CliError::Config("analyze needs at least one --profile".into()))?;
    let link = Link::<f64>::from_spec(scn.link())?;
    let oracle = theoretical_profile(&link, &first.z_km)?;
    analyze_profiles(scn, &inputs, &oracle.power_dbm, &mut report, &mut outputs)?;
    finish_manifest(&mut outputs, &report);
    Ok((report, outputs))
}
