//! Unit conversions. Internal quantities are SI (s, m, W, rad/s); configuration
//! files use the conventional fiber-optics units converted here exactly once.

use crate::Real;

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Default optical carrier, Hz.
pub const DEFAULT_CENTER_FREQUENCY_HZ: f64 = 193.4e12;

pub fn db_to_linear<T: Real>(x_db: T) -> T {
    T::lit(10.0).powf(x_db / T::lit(10.0))
}

pub fn linear_to_db<T: Real>(x: T) -> T {
    T::lit(10.0) * x.log10()
}

pub fn dbm_to_watts<T: Real>(p_dbm: T) -> T {
    db_to_linear(p_dbm) * T::lit(1e-3)
}

pub fn watts_to_dbm<T: Real>(p_w: T) -> T {
    linear_to_db(p_w * T::lit(1e3))
}

/// dB/km power loss to the natural-log power attenuation coefficient in 1/m,
/// so that `P(z) = P(0)·exp(−α z)` with `z` in meters.
pub fn alpha_to_per_meter<T: Real>(alpha_db_per_km: T) -> T {
    alpha_db_per_km * T::LN_10() / T::lit(10.0) / T::lit(1000.0)
}

/// ps²/km → s²/m.
pub fn beta2_to_si<T: Real>(ps2_per_km: T) -> T {
    ps2_per_km * T::lit(1e-27)
}

/// ps³/km → s³/m.
pub fn beta3_to_si<T: Real>(ps3_per_km: T) -> T {
    ps3_per_km * T::lit(1e-39)
}

/// 1/(W·km) → 1/(W·m).
pub fn gamma_to_si<T: Real>(per_w_km: T) -> T {
    per_w_km * T::lit(1e-3)
}

pub fn km_to_m<T: Real>(km: T) -> T {
    km * T::lit(1e3)
}

pub fn m_to_km<T: Real>(m: T) -> T {
    m / T::lit(1e3)
}
