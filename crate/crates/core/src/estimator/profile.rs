//! Estimated profiles, their averaging and serialization.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::system::Method;

/// Powers below this are reported at the floor (estimates can dip to or
/// below zero where the profile is noisy).
pub const POWER_FLOOR_DBM: f64 = -60.0;

/// Solver conditioning attached to an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionSummary {
    /// λ_max/λ_min of the solved normal matrix (`+∞` when rank deficient).
    pub normal_condition: f64,
    /// `√(normal_condition)`, the implied σ_max/σ_min of `G`.
    pub cond_g: f64,
    /// `cond_g` above the stability threshold.
    pub unstable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEstimate {
    pub method: Method,
    pub z_km: Vec<f64>,
    pub dz_km: f64,
    /// γ̂′ = γP at each position, 1/km (arbitrary units for CM).
    pub gamma_prime: Vec<f64>,
    pub power_dbm: Vec<f64>,
    /// Per-position standard deviation of γ̂′ across averaged profiles.
    pub std_gamma_prime: Vec<f64>,
    pub std_dbm: Vec<f64>,
    pub gamma_per_w_km: Vec<f64>,
    pub dual_pol: bool,
    pub arbitrary_units: bool,
    pub frames: usize,
    pub profiles_averaged: usize,
    pub condition: Option<ConditionSummary>,
    /// Complex scaling `ĉ` (re, im) of the augmented variant.
    pub scaling: Option<[f64; 2]>,
    pub seeds: Vec<u64>,
}

/// Power in dBm from γ′ (1/km) and γ (1/(W·km)); dual polarization applies
/// the Manakov 9/8 factor.
pub fn power_dbm(gamma_prime: f64, gamma_per_w_km: f64, dual_pol: bool) -> f64 {
    let factor = if dual_pol { 9.0 / 8.0 } else { 1.0 };
    let p_w = factor * gamma_prime / gamma_per_w_km;
    if p_w > 0.0 && p_w.is_finite() {
        (10.0 * (p_w * 1e3).log10()).max(POWER_FLOOR_DBM)
    } else {
        POWER_FLOOR_DBM
    }
}

impl ProfileEstimate {
    /// Single-frame (or jointly solved) estimate with no spread information.
    #[allow(clippy::too_many_arguments)]
    pub fn from_gamma_prime(
        method: Method,
        z_km: Vec<f64>,
        dz_km: f64,
        gamma_prime: Vec<f64>,
        gamma_per_w_km: Vec<f64>,
        dual_pol: bool,
        frames: usize,
    ) -> Self {
        let power = gamma_prime
            .iter()
            .zip(&gamma_per_w_km)
            .map(|(g, c)| power_dbm(*g, *c, dual_pol))
            .collect();
        let k = z_km.len();
        Self {
            method,
            z_km,
            dz_km,
            gamma_prime,
            power_dbm: power,
            std_gamma_prime: vec![0.0; k],
            std_dbm: vec![0.0; k],
            gamma_per_w_km,
            dual_pol,
            arbitrary_units: method == Method::Cm,
            frames,
            profiles_averaged: 1,
            condition: None,
            scaling: None,
            seeds: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.z_km.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z_km.is_empty()
    }

    /// Recomputes `power_dbm` with or without the dual-polarization factor.
    pub fn power_dbm_with_factor(&self, apply_manakov: bool) -> Vec<f64> {
        self.gamma_prime
            .iter()
            .zip(&self.gamma_per_w_km)
            .map(|(g, c)| power_dbm(*g, *c, self.dual_pol && apply_manakov))
            .collect()
    }

    /// CSV with columns `z_km, gamma_prime, power_dbm, std_dbm`. Each line of
    /// `comments` is written first, prefixed by `# `.
    pub fn write_csv<W: Write>(&self, mut w: W, comments: &[String]) -> Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "z_km,gamma_prime,power_dbm,std_dbm")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{:e},{},{}",
                self.z_km[i], self.gamma_prime[i], self.power_dbm[i], self.std_dbm[i]
            )?;
        }
        Ok(())
    }
}

/// Element-wise mean of γ̂′ with the per-position sample standard deviation.
pub fn average_profiles(estimates: &[ProfileEstimate]) -> Result<ProfileEstimate> {
    let first = estimates
        .first()
        .ok_or_else(|| Error::InvalidParameter("no profiles to average".into()))?;
    for e in &estimates[1..] {
        if e.z_km != first.z_km || e.method != first.method || e.dual_pol != first.dual_pol {
            return Err(Error::GridMismatch("profiles differ in grid or method".into()));
        }
    }
    if estimates.len() == 1 {
        return Ok(first.clone());
    }
    let n = estimates.len() as f64;
    let k = first.len();
    let mut mean = vec![0.0; k];
    for e in estimates {
        mean.iter_mut().zip(&e.gamma_prime).for_each(|(m, g)| *m += g / n);
    }
    let mut var = vec![0.0; k];
    for e in estimates {
        var.iter_mut()
            .zip(e.gamma_prime.iter().zip(&mean))
            .for_each(|(v, (g, m))| *v += (g - m).powi(2) / (n - 1.0));
    }
    let std: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
    let mut out = ProfileEstimate::from_gamma_prime(
        first.method,
        first.z_km.clone(),
        first.dz_km,
        mean,
        first.gamma_per_w_km.clone(),
        first.dual_pol,
        estimates.iter().map(|e| e.frames).sum(),
    );
    // delta method: σ_dB ≈ (10/ln10)·σ/μ
    out.std_dbm = out
        .gamma_prime
        .iter()
        .zip(&std)
        .map(|(m, s)| if *m > 0.0 { 10.0 / std::f64::consts::LN_10 * s / m } else { 0.0 })
        .collect();
    out.std_gamma_prime = std;
    out.profiles_averaged = estimates.iter().map(|e| e.profiles_averaged).sum();
    out.arbitrary_units = first.arbitrary_units;
    out.seeds = estimates.iter().flat_map(|e| e.seeds.iter().copied()).collect();
    out.condition = estimates
        .iter()
        .filter_map(|e| e.condition)
        .reduce(|a, b| ConditionSummary {
            normal_condition: a.normal_condition.max(b.normal_condition),
            cond_g: a.cond_g.max(b.cond_g),
            unstable: a.unstable || b.unstable,
        });
    Ok(out)
}
