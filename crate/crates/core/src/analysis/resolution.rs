//! Spatial-resolution bound for a rectangular spectrum.

use serde::{Deserialize, Serialize};

/// `SR·|β₂|·BW²` for a rectangular spectrum (BW in Hz, β₂ in s²/m).
pub const RESOLUTION_CONSTANT: f64 = 0.156;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionBound {
    pub km: f64,
    pub zero_dispersion: bool,
}

/// Smallest resolvable spacing of two loss events, km. β₂ in ps²/km, BW in
/// GHz.
pub fn resolution_bound(beta2_ps2_per_km: f64, bw_ghz: f64) -> ResolutionBound {
    let bw_thz = bw_ghz * 1e-3;
    let d = beta2_ps2_per_km.abs() * bw_thz * bw_thz;
    if d > 0.0 && d.is_finite() {
        ResolutionBound {
            km: RESOLUTION_CONSTANT / d,
            zero_dispersion: false,
        }
    } else {
        ResolutionBound {
            km: f64::INFINITY,
            zero_dispersion: beta2_ps2_per_km == 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_dispersion() {
        let r = resolution_bound(0.0, 64.0);
        assert!(r.zero_dispersion && r.km.is_infinite());
    }

    #[test]
    fn ssmf_values() {
        assert!((resolution_bound(-21.6, 128.0).km - 0.4408).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn inverse_in_dispersion_and_bandwidth_squared(b in 0.5f64..50.0, bw in 10.0f64..500.0, s in 1.1f64..4.0) {
            let r = resolution_bound(b, bw).km;
            prop_assert!((resolution_bound(b * s, bw).km * s / r - 1.0).abs() < 1e-12);
            prop_assert!((resolution_bound(b, bw * s).km * s * s / r - 1.0).abs() < 1e-12);
            prop_assert!(resolution_bound(-b, bw).km == r);
        }
    }
}
