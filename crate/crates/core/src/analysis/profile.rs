//! Profile comparisons, forward differences and peak picking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::profile::ProfileEstimate;

/// Dead zone at each span end excluded from error metrics, km.
pub const DEAD_ZONE_KM: f64 = 1.0;

/// `true` where `z` lies within `dead_zone_km` of any boundary.
pub fn dead_zone_mask(z_km: &[f64], boundaries_km: &[f64], dead_zone_km: f64) -> Vec<bool> {
    z_km.iter()
        .map(|z| boundaries_km.iter().any(|b| (z - b).abs() <= dead_zone_km + 1e-9))
        .collect()
}

/// RMS of `profile − oracle` (dB) over positions outside the dead zones.
pub fn profile_rms_error(
    profile_dbm: &[f64],
    oracle_dbm: &[f64],
    z_km: &[f64],
    boundaries_km: &[f64],
    dead_zone_km: f64,
) -> Result<f64> {
    let (sum, n) = masked_diffs(profile_dbm, oracle_dbm, z_km, boundaries_km, dead_zone_km)?
        .fold((0.0, 0usize), |(s, n), d| (s + d * d, n + 1));
    Ok((sum / n as f64).sqrt())
}

/// Mean of `profile − oracle` (dB) outside the dead zones.
pub fn profile_mean_offset(
    profile_dbm: &[f64],
    oracle_dbm: &[f64],
    z_km: &[f64],
    boundaries_km: &[f64],
    dead_zone_km: f64,
) -> Result<f64> {
    let (sum, n) = masked_diffs(profile_dbm, oracle_dbm, z_km, boundaries_km, dead_zone_km)?
        .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
    Ok(sum / n as f64)
}

fn masked_diffs<'a>(
    profile: &'a [f64],
    oracle: &'a [f64],
    z_km: &'a [f64],
    boundaries_km: &[f64],
    dead_zone_km: f64,
) -> Result<impl Iterator<Item = f64> + 'a> {
    if profile.len() != oracle.len() || profile.len() != z_km.len() {
        return Err(Error::GridMismatch(format!(
            "profile {} / oracle {} / grid {} lengths differ",
            profile.len(),
            oracle.len(),
            z_km.len()
        )));
    }
    let mask = dead_zone_mask(z_km, boundaries_km, dead_zone_km);
    if mask.iter().all(|m| *m) {
        return Err(Error::InvalidParameter("no positions outside the dead zones".into()));
    }
    Ok(profile
        .iter()
        .zip(oracle)
        .zip(mask)
        .filter(|(_, m)| !m)
        .map(|((p, o), _)| p - o))
}

/// Forward difference `(v_k − v_{k+1})/Δz` placed at the boundary between
/// positions `k` and `k+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDerivative {
    /// Boundary position of each difference, km.
    pub z_km: Vec<f64>,
    pub slope: Vec<f64>,
}

/// Derivative of `values` on the grid of `profile`, typically its γ̂′.
pub fn derivative_of(values: &[f64], z_km: &[f64], dz_km: f64) -> Result<ProfileDerivative> {
    if values.len() != z_km.len() || values.len() < 2 {
        return Err(Error::GridMismatch("derivative needs ≥ 2 positions on the grid".into()));
    }
    let z0 = z_km[0];
    Ok(ProfileDerivative {
        // boundary between segments k and k+1 sits at z_{k+1} minus the
        // in-segment offset z_0
        z_km: z_km[1..].iter().map(|z| z - z0).collect(),
        slope: values.windows(2).map(|w| (w[0] - w[1]) / dz_km).collect(),
    })
}

/// Derivative of γ̂′.
pub fn profile_derivative(profile: &ProfileEstimate) -> Result<ProfileDerivative> {
    derivative_of(&profile.gamma_prime, &profile.z_km, profile.dz_km)
}

/// Indices of local maxima whose height is at least `min_fraction` of the
/// largest value in `range` and whose prominence (height above the higher
/// of the two surrounding minima) is at least `min_fraction` of it too.
pub fn find_peaks(values: &[f64], range: std::ops::Range<usize>, min_fraction: f64) -> Vec<usize> {
    let v = &values[range.clone()];
    let top = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(top > 0.0) {
        return Vec::new();
    }
    let floor = min_fraction * top;
    let mut out = Vec::new();
    for i in 0..v.len() {
        let left = if i > 0 { v[i - 1] } else { f64::NEG_INFINITY };
        let right = if i + 1 < v.len() { v[i + 1] } else { f64::NEG_INFINITY };
        // plateaus count once, at their first sample
        if !(v[i] > left && v[i] >= right) || v[i] < floor {
            continue;
        }
        let mut lmin = v[i];
        let mut j = i;
        while j > 0 && v[j - 1] <= v[i] {
            j -= 1;
            lmin = lmin.min(v[j]);
        }
        let mut rmin = v[i];
        let mut j = i;
        while j + 1 < v.len() && v[j + 1] <= v[i] {
            j += 1;
            rmin = rmin.min(v[j]);
        }
        let prominence = v[i] - lmin.max(rmin);
        if prominence >= floor {
            out.push(range.start + i);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rms_against_oracle() {
        let z: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let o: Vec<f64> = z.iter().map(|z| -0.2 * z).collect();
        assert_eq!(profile_rms_error(&o, &o, &z, &[0.0, 19.0], 1.0).unwrap(), 0.0);
        let p: Vec<f64> = o.iter().map(|v| v + 0.5).collect();
        assert!((profile_rms_error(&p, &o, &z, &[0.0, 19.0], 1.0).unwrap() - 0.5).abs() < 1e-12);
        assert!((profile_mean_offset(&p, &o, &z, &[0.0], 1.0).unwrap() - 0.5).abs() < 1e-12);
        assert!(profile_rms_error(&p, &o, &z, &[0.0, 19.0], 30.0).is_err());
        assert!(profile_rms_error(&p[1..], &o, &z, &[0.0], 1.0).is_err());
    }

    #[test]
    fn dead_zones() {
        let m = dead_zone_mask(&[0.0, 0.5, 1.0, 1.5, 49.0, 50.5, 52.0], &[0.0, 50.0], 1.0);
        assert_eq!(m, vec![true, true, true, false, true, true, false]);
    }

    #[test]
    fn derivative_of_constant_and_step() {
        let z: Vec<f64> = (0..10).map(|i| i as f64 * 0.5).collect();
        let d = derivative_of(&[2.0; 10], &z, 0.5).unwrap();
        assert!(d.slope.iter().all(|s| *s == 0.0));
        let mut v = vec![2.0; 10];
        v[6..].iter_mut().for_each(|x| *x = 1.0);
        let d = derivative_of(&v, &z, 0.5).unwrap();
        let peaks = find_peaks(&d.slope, 0..d.slope.len(), 0.3);
        assert_eq!(peaks, vec![5]);
        assert_eq!(d.z_km[5], 3.0);
        // midpoint grid: same boundary
        let zm: Vec<f64> = z.iter().map(|z| z + 0.25).collect();
        assert_eq!(derivative_of(&v, &zm, 0.5).unwrap().z_km[5], 3.0);
    }

    #[test]
    fn peaks_separate_and_merge() {
        let two = [0.0, 1.0, 0.1, 1.0, 0.0];
        assert_eq!(find_peaks(&two, 0..5, 0.3), vec![1, 3]);
        let merged = [0.0, 0.6, 1.0, 0.9, 0.2];
        assert_eq!(find_peaks(&merged, 0..5, 0.3), vec![2]);
        let shallow = [0.0, 1.0, 0.9, 0.95, 0.0];
        assert_eq!(find_peaks(&shallow, 0..5, 0.3), vec![1]);
        assert!(find_peaks(&[0.0, -1.0], 0..2, 0.3).is_empty());
    }
}
