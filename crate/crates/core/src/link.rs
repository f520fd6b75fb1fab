//! Multi-span link description.
//!
//! [`LinkSpec`] is the configuration-facing form in conventional units
//! (km, dB/km, ps²/km, dBm). [`Link`] is the SI form every numerical routine
//! works with; the conversion happens once in [`Link::from_spec`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{
    alpha_to_per_meter, beta2_to_si, beta3_to_si, db_to_linear, dbm_to_watts, gamma_to_si, km_to_m,
};
use crate::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpanSpec {
    pub length_km: f64,
    pub alpha_db_per_km: f64,
    pub beta2_ps2_per_km: f64,
    #[serde(default)]
    pub beta3_ps3_per_km: f64,
    pub gamma_per_w_km: f64,
    pub launch_power_dbm: f64,
}

impl SpanSpec {
    /// Standard single-mode fiber span with the given length and launch power.
    pub fn ssmf(length_km: f64, launch_power_dbm: f64) -> Self {
        Self {
            length_km,
            alpha_db_per_km: 0.20,
            beta2_ps2_per_km: -21.6,
            beta3_ps3_per_km: 0.0,
            gamma_per_w_km: 1.30,
            launch_power_dbm,
        }
    }
}

pub const DEFAULT_NOISE_FIGURE_DB: f64 = 5.0;

fn default_nf() -> f64 {
    DEFAULT_NOISE_FIGURE_DB
}

/// Lumped amplifier at the beginning of a span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmplifierSpec {
    /// Fixed gain in dB. `None` restores the span's configured launch power.
    #[serde(default)]
    pub fixed_gain_db: Option<f64>,
    #[serde(default = "default_nf")]
    pub noise_figure_db: f64,
}

impl Default for AmplifierSpec {
    fn default() -> Self {
        Self {
            fixed_gain_db: None,
            noise_figure_db: DEFAULT_NOISE_FIGURE_DB,
        }
    }
}

/// Lumped attenuation (e.g. a VOA, splice or connector) inside the link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointLoss {
    pub position_km: f64,
    pub attenuation_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub spans: Vec<SpanSpec>,
    /// One entry per span, or empty for restore-to-launch amplifiers with the
    /// default noise figure.
    #[serde(default)]
    pub amplifiers: Vec<AmplifierSpec>,
    #[serde(default)]
    pub point_losses: Vec<PointLoss>,
    /// Transmitter output power feeding the first (booster) amplifier. Without
    /// it the booster is treated as noiseless.
    #[serde(default)]
    pub tx_power_dbm: Option<f64>,
}

impl LinkSpec {
    pub fn total_length_km(&self) -> f64 {
        self.spans.iter().map(|s| s.length_km).sum()
    }

    /// Span boundaries in km, including 0 and the total length.
    pub fn span_boundaries_km(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        let mut acc = 0.0;
        for s in &self.spans {
            acc += s.length_km;
            out.push(acc);
        }
        out
    }
}

/// One span in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct Span<T: Real> {
    pub start: T,
    pub length: T,
    /// Natural-log power attenuation, 1/m.
    pub alpha: T,
    /// s²/m
    pub beta2: T,
    /// s³/m
    pub beta3: T,
    /// 1/(W·m)
    pub gamma: T,
    /// Power entering the fiber after the span's amplifier, W.
    pub launch_power: T,
    /// Linear gain of the amplifier at the span start.
    pub amp_gain: T,
    pub amp_noise_figure_db: T,
}

impl<T: Real> Span<T> {
    pub fn end(&self) -> T {
        self.start + self.length
    }
}

/// Point loss in SI units: position in m and linear power transmission (≤ 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Attenuator<T: Real> {
    pub position: T,
    pub transmission: T,
}

/// Link in SI units with all amplifier gains resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct Link<T: Real> {
    spans: Vec<Span<T>>,
    attenuators: Vec<Attenuator<T>>,
    total_length: T,
}

impl<T: Real> Link<T> {
    pub fn from_spec(spec: &LinkSpec) -> Result<Self> {
        if spec.spans.is_empty() {
            return Err(Error::InvalidLink("link has no spans".into()));
        }
        if !spec.amplifiers.is_empty() && spec.amplifiers.len() != spec.spans.len() {
            return Err(Error::InvalidLink(format!(
                "{} amplifiers for {} spans",
                spec.amplifiers.len(),
                spec.spans.len()
            )));
        }
        for (i, s) in spec.spans.iter().enumerate() {
            let finite = [
                s.length_km,
                s.alpha_db_per_km,
                s.beta2_ps2_per_km,
                s.beta3_ps3_per_km,
                s.gamma_per_w_km,
                s.launch_power_dbm,
            ]
            .iter()
            .all(|v| v.is_finite());
            if !finite {
                return Err(Error::InvalidLink(format!("span {i}: non-finite parameter")));
            }
            if s.length_km <= 0.0 {
                return Err(Error::InvalidLink(format!("span {i}: length must be > 0")));
            }
            if s.alpha_db_per_km < 0.0 {
                return Err(Error::InvalidLink(format!("span {i}: alpha must be ≥ 0")));
            }
            if s.gamma_per_w_km < 0.0 {
                return Err(Error::InvalidLink(format!("span {i}: gamma must be ≥ 0")));
            }
        }
        let total_km = spec.total_length_km();
        let mut losses = spec.point_losses.clone();
        losses.sort_by(|a, b| a.position_km.total_cmp(&b.position_km));
        for l in &losses {
            if !(l.position_km > 0.0 && l.position_km < total_km) {
                return Err(Error::InvalidLink(format!(
                    "point loss at {} km outside (0, {total_km}) km",
                    l.position_km
                )));
            }
            if !(l.attenuation_db >= 0.0) || !l.attenuation_db.is_finite() {
                return Err(Error::InvalidLink("point-loss attenuation must be ≥ 0".into()));
            }
        }
        let attenuators: Vec<Attenuator<T>> = losses
            .iter()
            .map(|l| Attenuator {
                position: km_to_m(T::lit(l.position_km)),
                transmission: db_to_linear(T::lit(-l.attenuation_db)),
            })
            .collect();

        let amp = |i: usize| spec.amplifiers.get(i).cloned().unwrap_or_default();
        let mut spans = Vec::with_capacity(spec.spans.len());
        let mut start = T::zero();
        let mut prev_end_power: Option<T> = spec.tx_power_dbm.map(|p| dbm_to_watts(T::lit(p)));
        for (i, s) in spec.spans.iter().enumerate() {
            let a = amp(i);
            let length = km_to_m(T::lit(s.length_km));
            let (launch, gain) = match (prev_end_power, a.fixed_gain_db) {
                (Some(p_in), Some(g_db)) if i > 0 => {
                    let g = db_to_linear(T::lit(g_db));
                    (p_in * g, g)
                }
                (Some(p_in), _) => {
                    let launch = dbm_to_watts(T::lit(s.launch_power_dbm));
                    (launch, launch / p_in)
                }
                (None, _) => (dbm_to_watts(T::lit(s.launch_power_dbm)), T::one()),
            };
            let span = Span {
                start,
                length,
                alpha: alpha_to_per_meter(T::lit(s.alpha_db_per_km)),
                beta2: beta2_to_si(T::lit(s.beta2_ps2_per_km)),
                beta3: beta3_to_si(T::lit(s.beta3_ps3_per_km)),
                gamma: gamma_to_si(T::lit(s.gamma_per_w_km)),
                launch_power: launch,
                amp_gain: gain,
                amp_noise_figure_db: T::lit(a.noise_figure_db),
            };
            let mut end_power = launch * (-span.alpha * length).exp();
            for at in &attenuators {
                if at.position >= start && at.position < start + length {
                    end_power *= at.transmission;
                }
            }
            prev_end_power = Some(end_power);
            start += length;
            spans.push(span);
        }
        Ok(Self {
            spans,
            attenuators,
            total_length: start,
        })
    }

    pub fn spans(&self) -> &[Span<T>] {
        &self.spans
    }

    pub fn attenuators(&self) -> &[Attenuator<T>] {
        &self.attenuators
    }

    /// Total length, m.
    pub fn total_length(&self) -> T {
        self.total_length
    }

    /// Index of the span containing `z` (right-continuous at boundaries; the
    /// link end belongs to the last span).
    pub fn span_index(&self, z: T) -> usize {
        self.spans
            .iter()
            .rposition(|s| z >= s.start)
            .unwrap_or(0)
    }

    /// Signal power at `z` (m), W. Right-continuous: at an amplifier or point
    /// loss the post-event value is returned.
    pub fn power_at(&self, z: T) -> T {
        let s = &self.spans[self.span_index(z)];
        let mut p = s.launch_power * (-s.alpha * (z - s.start)).exp();
        for at in &self.attenuators {
            if at.position >= s.start && at.position <= z {
                p *= at.transmission;
            }
        }
        p
    }

    pub fn gamma_at(&self, z: T) -> T {
        self.spans[self.span_index(z)].gamma
    }

    /// γ(z)·P(z), 1/m.
    pub fn gamma_prime_at(&self, z: T) -> T {
        self.gamma_at(z) * self.power_at(z)
    }

    /// ∫ γ(z)P(z) dz over `[z1, z2]`, exact for piecewise exponential decay.
    pub fn nonlinear_integral(&self, z1: T, z2: T) -> T {
        if z2 <= z1 {
            return T::zero();
        }
        let mut cuts = vec![z1];
        for s in &self.spans {
            if s.start > z1 && s.start < z2 {
                cuts.push(s.start);
            }
        }
        for a in &self.attenuators {
            if a.position > z1 && a.position < z2 {
                cuts.push(a.position);
            }
        }
        cuts.push(z2);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut total = T::zero();
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let h = b - a;
            if h <= T::zero() {
                continue;
            }
            let s = &self.spans[self.span_index(a)];
            let g0 = s.gamma * self.power_at(a);
            let x = s.alpha * h;
            // (1 − e^{−x})/α with a series fallback for tiny x
            let eff = if x < T::lit(1e-8) {
                h * (T::one() - x / T::lit(2.0))
            } else {
                (T::one() - (-x).exp()) / s.alpha
            };
            total += g0 * eff;
        }
        total
    }

    /// Accumulated (∫β₂ dz, ∫β₃ dz) over `[z1, z2]`; negative for `z2 < z1`.
    pub fn accumulated_dispersion(&self, z1: T, z2: T) -> (T, T) {
        if z2 < z1 {
            let (b2, b3) = self.accumulated_dispersion(z2, z1);
            return (-b2, -b3);
        }
        let mut b2 = T::zero();
        let mut b3 = T::zero();
        for s in &self.spans {
            let lo = s.start.max(z1);
            let hi = s.end().min(z2);
            if hi > lo {
                b2 += s.beta2 * (hi - lo);
                b3 += s.beta3 * (hi - lo);
            }
        }
        (b2, b3)
    }

    /// Largest |∫β₂| reached between the link start and any position.
    pub fn max_accumulated_beta2(&self) -> T {
        let mut acc = T::zero();
        let mut best = T::zero();
        for s in &self.spans {
            acc += s.beta2 * s.length;
            best = best.max(acc.abs());
        }
        best
    }

    /// Positions (m) where γ′ jumps: span starts (except 0), point losses.
    pub fn breakpoints(&self) -> Vec<T> {
        let mut v: Vec<T> = self.spans.iter().skip(1).map(|s| s.start).collect();
        v.extend(self.attenuators.iter().map(|a| a.position));
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    /// Span boundaries (m) including 0 and the total length.
    pub fn span_boundaries(&self) -> Vec<T> {
        let mut v: Vec<T> = self.spans.iter().map(|s| s.start).collect();
        v.push(self.total_length);
        v
    }
}
