//! Loss-event detection on tilt-subtracted profiles.

use serde::{Deserialize, Serialize};

use crate::analysis::profile::{dead_zone_mask, profile_rms_error, DEAD_ZONE_KM};
use crate::error::{Error, Result};
use crate::estimator::profile::ProfileEstimate;
use crate::linalg::{solve_refined, PivotedLdl, SymMatrix};
use crate::link::LinkSpec;

/// Extent over which the level after a detected event is measured, km.
pub const LEVEL_WINDOW_KM: f64 = 2.0;

/// Basis of the noise level σ the detection threshold is built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaSource {
    Fixed(f64),
    /// RMS error against a reference profile (dBm on the same grid).
    Oracle(Vec<f64>),
    /// RMS of the residual over positions before `z_km`.
    PriorTo(f64),
}

/// How the inherent fiber loss is removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TiltMode {
    /// The configured launch power and attenuation of each span.
    #[default]
    Nominal,
    /// A straight line per span fitted to the profile jointly with the
    /// span's most likely step.
    Fitted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyOptions {
    pub sigma: SigmaSource,
    pub tilt: TiltMode,
    pub threshold_sigmas: f64,
    pub dead_zone_km: f64,
}

impl AnomalyOptions {
    pub fn new(sigma: SigmaSource) -> Self {
        Self {
            sigma,
            tilt: TiltMode::Nominal,
            threshold_sigmas: 4.0,
            dead_zone_km: DEAD_ZONE_KM,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyEvent {
    pub z_km: f64,
    pub loss_db: f64,
    pub span: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub events: Vec<AnomalyEvent>,
    pub sigma_db: f64,
    pub threshold_db: f64,
    pub z_km: Vec<f64>,
    /// Tilt-subtracted profile, dB.
    pub residual_db: Vec<f64>,
}

/// Power the link would carry without point losses, dBm.
pub fn nominal_tilt(link: &LinkSpec, z_km: &[f64]) -> Vec<f64> {
    let bounds = link.span_boundaries_km();
    z_km.iter()
        .map(|&z| {
            let s = span_of(&bounds, z);
            let span = &link.spans[s];
            span.launch_power_dbm - span.alpha_db_per_km * (z - bounds[s])
        })
        .collect()
}

fn span_of(bounds: &[f64], z: f64) -> usize {
    let spans = bounds.len() - 1;
    (0..spans).find(|&s| z < bounds[s + 1]).unwrap_or(spans - 1)
}

/// Detects and quantifies loss events in the estimated power profile.
pub fn detect_anomalies(profile: &ProfileEstimate, link: &LinkSpec, opts: &AnomalyOptions) -> Result<AnomalyReport> {
    detect_in(&profile.power_dbm, &profile.z_km, link, opts)
}

/// [`detect_anomalies`] on a bare dBm profile.
pub fn detect_in(power_dbm: &[f64], z_km: &[f64], link: &LinkSpec, opts: &AnomalyOptions) -> Result<AnomalyReport> {
    if power_dbm.len() != z_km.len() {
        return Err(Error::GridMismatch("profile and grid lengths differ".into()));
    }
    let bounds = link.span_boundaries_km();
    let dead = dead_zone_mask(z_km, &bounds, opts.dead_zone_km);
    let span_idx: Vec<usize> = z_km.iter().map(|&z| span_of(&bounds, z)).collect();

    let mut residual = match opts.tilt {
        TiltMode::Nominal => {
            let t = nominal_tilt(link, z_km);
            power_dbm.iter().zip(&t).map(|(p, t)| p - t).collect()
        }
        TiltMode::Fitted => fitted_residual(power_dbm, z_km, &span_idx, &dead, link.spans.len(), &[])?,
    };

    let sigma = match &opts.sigma {
        SigmaSource::Fixed(s) => *s,
        SigmaSource::Oracle(o) => profile_rms_error(power_dbm, o, z_km, &bounds, opts.dead_zone_km)?,
        SigmaSource::PriorTo(limit) => {
            let vals: Vec<f64> = residual
                .iter()
                .zip(z_km)
                .zip(&dead)
                .filter(|((_, z), d)| **z < *limit && !**d)
                .map(|((r, _), _)| *r)
                .collect();
            if vals.is_empty() {
                return Err(Error::InvalidParameter(format!("no positions before {limit} km to estimate σ")));
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64).sqrt()
        }
    };
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("σ must be positive, got {sigma}")));
    }
    let threshold = opts.threshold_sigmas * sigma;

    if opts.tilt == TiltMode::Fitted {
        // refit each span with its most likely step, kept when it clears
        // the threshold
        let mut steps = Vec::new();
        for sp in 0..link.spans.len() {
            let idx: Vec<usize> = (0..z_km.len()).filter(|&i| span_idx[i] == sp && !dead[i]).collect();
            let mut best: Option<(f64, usize, f64)> = None;
            for &e in idx.iter().skip(2).take(idx.len().saturating_sub(4)) {
                let (x, sse) = fit_line(power_dbm, z_km, &idx, &[e])?;
                if best.is_none_or(|b| sse < b.0) {
                    best = Some((sse, e, x[2]));
                }
            }
            if let Some((_, e, c)) = best {
                if c > threshold {
                    steps.push(e);
                }
            }
        }
        residual = fitted_residual(power_dbm, z_km, &span_idx, &dead, link.spans.len(), &steps)?;
    }
    let dz = if z_km.len() > 1 { (z_km[1] - z_km[0]).abs() } else { 1.0 };
    let window = ((LEVEL_WINDOW_KM / dz).ceil() as usize).max(1);
    let events = scan(&residual, &span_idx, &dead, link.spans.len(), threshold, window);
    Ok(AnomalyReport {
        events: events
            .into_iter()
            .map(|(k, loss)| AnomalyEvent {
                z_km: z_km[k],
                loss_db: loss,
                span: span_idx[k],
            })
            .collect(),
        sigma_db: sigma,
        threshold_db: threshold,
        z_km: z_km.to_vec(),
        residual_db: residual,
    })
}

/// `(index, loss)` of every event. An event starts at the first position
/// whose drop below the current level exceeds `threshold` and whose mean
/// drop up to the span's amplifier does too; its loss is the mean drop up to
/// the next event or the amplifier. The level after an event is the mean
/// over the following `window` positions.
fn scan(
    residual: &[f64],
    span_idx: &[usize],
    dead: &[bool],
    spans: usize,
    threshold: f64,
    window: usize,
) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for s in 0..spans {
        let idx: Vec<usize> = (0..residual.len()).filter(|&i| span_idx[i] == s && !dead[i]).collect();
        let mut level = 0.0;
        let mut found: Vec<(usize, f64)> = Vec::new();
        for (pos, &i) in idx.iter().enumerate() {
            if level - residual[i] <= threshold {
                continue;
            }
            let rest = &idx[pos..];
            let mean_drop = rest.iter().map(|&j| level - residual[j]).sum::<f64>() / rest.len() as f64;
            if mean_drop > threshold {
                found.push((pos, level));
                let near = &rest[..rest.len().min(window)];
                level -= near.iter().map(|&j| level - residual[j]).sum::<f64>() / near.len() as f64;
            }
        }
        for (e, &(pos, lvl)) in found.iter().enumerate() {
            let end = found.get(e + 1).map_or(idx.len(), |n| n.0);
            let seg = &idx[pos..end];
            let loss = seg.iter().map(|&j| lvl - residual[j]).sum::<f64>() / seg.len() as f64;
            out.push((idx[pos], loss.max(0.0)));
        }
    }
    out
}

/// Per span, `power − (a + b·z)` where the line is fitted jointly with a
/// step at each of `events`, so the residual keeps the steps.
fn fitted_residual(
    power: &[f64],
    z_km: &[f64],
    span_idx: &[usize],
    dead: &[bool],
    spans: usize,
    events: &[usize],
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; power.len()];
    for s in 0..spans {
        let idx: Vec<usize> = (0..power.len()).filter(|&i| span_idx[i] == s && !dead[i]).collect();
        let ev: Vec<usize> = events.iter().copied().filter(|&e| span_idx[e] == s).collect();
        let (x, _) = fit_line(power, z_km, &idx, &ev)?;
        for i in (0..power.len()).filter(|&i| span_idx[i] == s) {
            out[i] = power[i] - (x[0] + x[1] * z_km[i]);
        }
    }
    Ok(out)
}

/// Least-squares `a + b·z − Σ c_e·[i ≥ e]` over `idx`; returns
/// `[a, b, c…]` and the residual sum of squares.
fn fit_line(power: &[f64], z_km: &[f64], idx: &[usize], steps: &[usize]) -> Result<(Vec<f64>, f64)> {
    let p = 2 + steps.len();
    if idx.len() < p + 1 {
        return Err(Error::InvalidParameter("too few positions for a tilt fit".into()));
    }
    let basis = |i: usize| -> Vec<f64> {
        let mut b = vec![1.0, z_km[i]];
        b.extend(steps.iter().map(|&e| if i >= e { -1.0 } else { 0.0 }));
        b
    };
    let mut ata = SymMatrix::zeros(p);
    let mut atb = vec![0.0; p];
    for &i in idx {
        let b = basis(i);
        for r in 0..p {
            atb[r] += b[r] * power[i];
            for c in 0..p {
                ata.set(r, c, ata.get(r, c) + b[r] * b[c]);
            }
        }
    }
    let ldl = PivotedLdl::factor(&ata);
    let x = solve_refined(&ata, &ldl, &atb, 1);
    let sse = idx
        .iter()
        .map(|&i| {
            let f: f64 = basis(i).iter().zip(&x).map(|(b, c)| b * c).sum();
            (power[i] - f).powi(2)
        })
        .sum();
    Ok((x, sse))
}

/// Step located by a two-sample changepoint fit over `[lo_km, hi_km]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepFit {
    /// First position after the step.
    pub z_km: f64,
    /// Mean before minus mean after, dB.
    pub height_db: f64,
}

/// Splits `values` on `[lo_km, hi_km]` at the point maximizing the
/// two-sample contrast `|m₁ − m₂|·√(n₁n₂/n)`.
pub fn fit_step(values: &[f64], z_km: &[f64], lo_km: f64, hi_km: f64) -> Option<StepFit> {
    let idx: Vec<usize> = (0..values.len()).filter(|&i| z_km[i] >= lo_km && z_km[i] <= hi_km).collect();
    if idx.len() < 4 {
        return None;
    }
    let n = idx.len();
    let total: f64 = idx.iter().map(|&i| values[i]).sum();
    let mut left = 0.0;
    let mut best: Option<(f64, StepFit)> = None;
    for (c, &i) in idx.iter().enumerate().take(n - 1) {
        left += values[i];
        let n1 = (c + 1) as f64;
        let n2 = (n - c - 1) as f64;
        let m1 = left / n1;
        let m2 = (total - left) / n2;
        let score = (m1 - m2).abs() * (n1 * n2 / n as f64).sqrt();
        if best.as_ref().is_none_or(|b| score > b.0) {
            best = Some((
                score,
                StepFit {
                    z_km: z_km[idx[c + 1]],
                    height_db: m1 - m2,
                },
            ));
        }
    }
    best.map(|b| b.1)
}
