//! Scenario files.
//!
//! A scenario is one TOML file. Every section is optional; each verb checks
//! that the sections it needs are present. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use ppe_core::analysis::{StabilityLimits, SweepCase, TiltMode, DEAD_ZONE_KM};
use ppe_core::estimator::Method;
use ppe_core::link::{Link, LinkSpec};
use ppe_core::pipeline::EstimationConfig;
use ppe_core::signal::{ModulationFormat, SourceSpec};
use ppe_core::sim::SimConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    /// Overrides the source, simulation and sweep seeds.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub link: Option<LinkSpec>,
    #[serde(default)]
    pub source: Option<SourceSpec>,
    #[serde(default)]
    pub sim: Option<SimConfig>,
    #[serde(default)]
    pub estimation: Option<EstimationConfig>,
    /// Repeats the estimation for each listed Δz and tabulates conditioning
    /// against the stability metric. A singular Δz is recorded, not fatal.
    #[serde(default)]
    pub dz_scan_km: Vec<f64>,
    #[serde(default)]
    pub analysis: Option<AnalysisConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub limits: StabilityLimits,
}

/// Basis of the detection threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SigmaMode {
    /// RMS error of the profile against the theoretical one.
    #[default]
    Oracle,
    FixedDb(f64),
    /// RMS of the residual before this position.
    PriorToKm(f64),
}

fn default_true() -> bool {
    true
}

fn default_threshold() -> f64 {
    4.0
}

fn default_dead_zone() -> f64 {
    DEAD_ZONE_KM
}

fn default_peak_fraction() -> f64 {
    0.3
}

fn default_ls() -> Method {
    Method::Ls
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_true")]
    pub detect: bool,
    /// Profile the detection runs on.
    #[serde(default = "default_ls")]
    pub profile: Method,
    #[serde(default)]
    pub sigma: SigmaMode,
    #[serde(default)]
    pub tilt: TiltMode,
    #[serde(default = "default_threshold")]
    pub threshold_sigmas: f64,
    #[serde(default = "default_dead_zone")]
    pub dead_zone_km: f64,
    /// Write forward differences of every estimated profile.
    #[serde(default)]
    pub derivative: bool,
    /// Peaks of the derivative are searched inside this range.
    #[serde(default)]
    pub peak_window_km: Option<[f64; 2]>,
    #[serde(default = "default_peak_fraction")]
    pub peak_min_fraction: f64,
    /// Fit one step to the tilt-subtracted residual inside this range.
    #[serde(default)]
    pub step_window_km: Option<[f64; 2]>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            detect: true,
            profile: Method::Ls,
            sigma: SigmaMode::Oracle,
            tilt: TiltMode::Nominal,
            threshold_sigmas: 4.0,
            dead_zone_km: DEAD_ZONE_KM,
            derivative: false,
            peak_window_km: None,
            peak_min_fraction: 0.3,
            step_window_km: None,
        }
    }
}

fn default_gaussian() -> ModulationFormat {
    ModulationFormat::Gaussian
}

fn default_sweep_sps() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub beta2_ps2_per_km: Vec<f64>,
    pub bw_ghz: Vec<f64>,
    pub dz_km: Vec<f64>,
    pub k: usize,
    pub n_symbols: usize,
    #[serde(default = "default_gaussian")]
    pub format: ModulationFormat,
    #[serde(default = "default_sweep_sps")]
    pub sps: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SweepConfig {
    pub fn cases(&self) -> Vec<SweepCase> {
        ppe_core::analysis::sweep_grid(
            &self.beta2_ps2_per_km,
            &self.bw_ghz,
            &self.dz_km,
            SweepCase {
                beta2_ps2_per_km: 0.0,
                bw_ghz: 0.0,
                dz_km: 0.0,
                format: self.format,
                k: self.k,
                n_symbols: self.n_symbols,
                sps: self.sps,
                seed: self.seed,
            },
        )
    }
}

/// What a verb needs from the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Needs {
    Simulate,
    Estimate,
    Analyze,
    Run,
    Sweep,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Pushes the top-level seed into every seeded section.
    pub fn resolve_seed(&mut self, cli_seed: Option<u64>) {
        if let Some(s) = cli_seed {
            self.seed = Some(s);
        }
        if let Some(s) = self.seed {
            if let Some(src) = self.source.as_mut() {
                src.seed = s;
            }
            if let Some(sim) = self.sim.as_mut() {
                sim.seed = s;
            }
            if let Some(sw) = self.sweep.as_mut() {
                sw.seed = s;
            }
        }
    }

    /// Checks every present section and the sections `needs` requires.
    pub fn validate(&self, needs: Needs) -> CliResult<()> {
        let missing = |what: &str| CliError::Config(format!("scenario has no [{what}] section"));
        let wants_estimation = matches!(needs, Needs::Simulate | Needs::Estimate)
            || (needs == Needs::Run && self.sweep.is_none());
        if wants_estimation || needs == Needs::Analyze {
            self.link.as_ref().ok_or_else(|| missing("link"))?;
        }
        if wants_estimation {
            self.source.as_ref().ok_or_else(|| missing("source"))?;
            self.estimation.as_ref().ok_or_else(|| missing("estimation"))?;
        }
        if matches!(needs, Needs::Simulate) || (needs == Needs::Run && self.estimation.is_some()) {
            self.sim.as_ref().ok_or_else(|| missing("sim"))?;
        }
        if needs == Needs::Sweep {
            self.sweep.as_ref().ok_or_else(|| missing("sweep"))?;
        }

        let invalid = |e: ppe_core::Error| CliError::Config(e.to_string());
        if let Some(link) = &self.link {
            Link::<f64>::from_spec(link).map_err(invalid)?;
        }
        if let Some(src) = &self.source {
            src.validate().map_err(invalid)?;
        }
        if let Some(sim) = &self.sim {
            sim.validate().map_err(invalid)?;
        }
        if let Some(est) = &self.estimation {
            est.validate().map_err(invalid)?;
            if let Some(link) = &self.link {
                est.grid(link.total_length_km()).map_err(invalid)?;
                for dz in &self.dz_scan_km {
                    let mut e = est.clone();
                    e.dz_km = *dz;
                    e.grid(link.total_length_km()).map_err(invalid)?;
                }
            }
            if let Some(sim) = &self.sim {
                if sim.sps % est.sps != 0 {
                    return Err(CliError::Config(format!(
                        "sim.sps {} is not a multiple of estimation.sps {}",
                        sim.sps, est.sps
                    )));
                }
            }
        }
        if let Some(a) = &self.analysis {
            if !(a.threshold_sigmas > 0.0) || !(a.dead_zone_km >= 0.0) {
                return Err(CliError::Config(
                    "analysis.threshold_sigmas must be positive and dead_zone_km non-negative".into(),
                ));
            }
            if let SigmaMode::FixedDb(s) = a.sigma {
                if !(s > 0.0) {
                    return Err(CliError::Config(format!("analysis.sigma fixed_db must be positive, got {s}")));
                }
            }
            if !(0.0..=1.0).contains(&a.peak_min_fraction) {
                return Err(CliError::Config("analysis.peak_min_fraction must lie in [0, 1]".into()));
            }
        }
        if let Some(sw) = &self.sweep {
            if sw.beta2_ps2_per_km.is_empty() || sw.bw_ghz.is_empty() || sw.dz_km.is_empty() {
                return Err(CliError::Config("sweep axes must not be empty".into()));
            }
            if sw.k < 2 || sw.n_symbols < 64 || sw.sps < 2 {
                return Err(CliError::Config("sweep needs k ≥ 2, n_symbols ≥ 64 and sps ≥ 2".into()));
            }
            if sw.bw_ghz.iter().chain(&sw.dz_km).any(|v| !(*v > 0.0)) {
                return Err(CliError::Config("sweep bandwidths and Δz must be positive".into()));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON of the resolved scenario.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("scenario serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3

[link]
spans = [{ length_km = 20.0, alpha_db_per_km = 0.2, beta2_ps2_per_km = -21.6, gamma_per_w_km = 1.3, launch_power_dbm = 0.0 }]

[source]
format = "16QAM"
symbol_rate_gbd = 32.0

[sim]
ase_enabled = false

[estimation]
dz_km = 1.0
frames = 1
samples_per_frame = 1024
"#;

    #[test]
    fn parses_and_resolves_seed() {
        let mut c = ScenarioConfig::parse(MINIMAL).unwrap();
        c.validate(Needs::Run).unwrap();
        c.resolve_seed(Some(11));
        assert_eq!(c.source.as_ref().unwrap().seed, 11);
        assert_eq!(c.sim.as_ref().unwrap().seed, 11);
    }

    #[test]
    fn unknown_and_mistyped_keys_are_config_errors() {
        let bad = MINIMAL.replace("beta2_ps2_per_km = -21.6", "beta2_ps2 = \"x\"");
        assert!(matches!(ScenarioConfig::parse(&bad), Err(CliError::Config(_))));
        let typo = MINIMAL.replace("dz_km = 1.0", "dz_km = 1.0\ndz_m = 1000.0");
        assert!(matches!(ScenarioConfig::parse(&typo), Err(CliError::Config(_))));
    }

    #[test]
    fn missing_sections_and_bad_values() {
        let c = ScenarioConfig::parse("[sweep]\nbeta2_ps2_per_km=[-5.0]\nbw_ghz=[32.0]\ndz_km=[1.0]\nk=4\nn_symbols=256\n")
            .unwrap();
        c.validate(Needs::Sweep).unwrap();
        assert!(c.validate(Needs::Estimate).is_err());
        let c = ScenarioConfig::parse(&MINIMAL.replace("dz_km = 1.0", "dz_km = -1.0")).unwrap();
        assert!(c.validate(Needs::Run).is_err());
        let c = ScenarioConfig::parse(&format!("{MINIMAL}\n[analysis]\nsigma = {{ fixed_db = 0.0 }}\n")).unwrap();
        assert!(c.validate(Needs::Run).is_err());
    }

    #[test]
    fn sigma_forms() {
        let c = ScenarioConfig::parse("[analysis]\nsigma = \"oracle\"\n").unwrap();
        assert_eq!(c.analysis.unwrap().sigma, SigmaMode::Oracle);
        let c = ScenarioConfig::parse("[analysis]\nsigma = { prior_to_km = 70.0 }\n").unwrap();
        assert_eq!(c.analysis.unwrap().sigma, SigmaMode::PriorToKm(70.0));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ScenarioConfig::parse(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.resolve_seed(Some(4));
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
