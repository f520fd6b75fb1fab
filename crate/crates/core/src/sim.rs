//! Ground-truth forward propagation by the symmetric split-step Fourier method.
//!
//! The field is kept at unit mean power everywhere; fiber loss, amplifier gain
//! and point losses enter only through `γ′(z) = γ(z)P(z)`. Each step applies
//! half the dispersion, a full nonlinear phase rotation using the exact
//! `∫γ′ dz` over the step, then the other half of the dispersion. Consecutive
//! half steps are merged in the spectral domain.

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::Link;
use crate::propagation::dispersion_factors;
use crate::rng::{stream_rng, Stream};
use crate::scalar::fft_plan;
use crate::signal::Signal;
use crate::units::{m_to_km, watts_to_dbm, PLANCK};
use crate::Real;

/// Kerr coefficient scaling of the Manakov equation.
pub const MANAKOV_FACTOR: f64 = 8.0 / 9.0;

fn default_step() -> f64 {
    50.0
}

fn default_sps() -> usize {
    8
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_step")]
    pub step_size_m: f64,
    #[serde(default = "default_sps")]
    pub sps: usize,
    #[serde(default = "default_true")]
    pub ase_enabled: bool,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            step_size_m: default_step(),
            sps: default_sps(),
            ase_enabled: true,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size_m > 0.0) || !self.step_size_m.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "step size must be positive, got {}",
                self.step_size_m
            )));
        }
        if self.sps < 4 {
            return Err(Error::InvalidParameter(format!(
                "simulation needs ≥ 4 samples/symbol, got {}",
                self.sps
            )));
        }
        Ok(())
    }

    /// Copy whose ASE seed is specific to `frame`.
    pub fn for_frame(&self, frame: u64) -> Self {
        Self {
            seed: crate::rng::derive_seed(self.seed, Stream::Ase, frame),
            ..self.clone()
        }
    }
}

/// Power-profile oracle sampled on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalProfile {
    pub z_km: Vec<f64>,
    pub power_dbm: Vec<f64>,
    /// γ(z)P(z) in 1/km.
    pub gamma_prime_per_km: Vec<f64>,
}

impl TheoreticalProfile {
    pub fn len(&self) -> usize {
        self.z_km.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z_km.is_empty()
    }
}

/// Exact piecewise-exponential power profile of `link` at `z_grid_km`.
pub fn theoretical_profile<T: Real>(link: &Link<T>, z_grid_km: &[f64]) -> Result<TheoreticalProfile> {
    let total_km = m_to_km(link.total_length()).to_f64_lossy();
    let mut out = TheoreticalProfile {
        z_km: Vec::with_capacity(z_grid_km.len()),
        power_dbm: Vec::with_capacity(z_grid_km.len()),
        gamma_prime_per_km: Vec::with_capacity(z_grid_km.len()),
    };
    for &z in z_grid_km {
        if !(z >= -1e-9 && z <= total_km + 1e-9) {
            return Err(Error::InvalidParameter(format!(
                "grid point {z} km outside [0, {total_km}] km"
            )));
        }
        let zm = T::lit(z * 1e3);
        let p = link.power_at(zm);
        out.z_km.push(z);
        out.power_dbm.push(watts_to_dbm(p).to_f64_lossy());
        out.gamma_prime_per_km
            .push((link.gamma_prime_at(zm) * T::lit(1e3)).to_f64_lossy());
    }
    Ok(out)
}

/// Lumped amplifier noise parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AseParams {
    /// Linear gain G ≥ 1.
    pub gain: f64,
    pub noise_figure_db: f64,
    /// Noise-equivalent bandwidth, Hz (the sampling rate for white noise).
    pub bandwidth_hz: f64,
    /// Signal power the normalized field represents, W.
    pub reference_power_w: f64,
    pub center_frequency_hz: f64,
}

impl AseParams {
    /// Spontaneous emission factor n_sp = NF/2 (linear).
    pub fn n_sp(&self) -> f64 {
        10f64.powf(self.noise_figure_db / 10.0) / 2.0
    }

    /// Noise power per polarization n_sp·h·ν·(G−1)·B, W.
    pub fn noise_power_w(&self) -> f64 {
        if self.gain <= 1.0 {
            return 0.0;
        }
        self.n_sp() * PLANCK * self.center_frequency_hz * (self.gain - 1.0) * self.bandwidth_hz
    }

    /// Per-sample complex variance in normalized-field units.
    pub fn normalized_variance(&self) -> f64 {
        self.noise_power_w() / self.reference_power_w
    }
}

/// Adds circular white Gaussian noise to every rail. Returns the per-rail
/// variance that was added (normalized units).
pub fn inject_ase<T: Real>(rails: &mut [&mut [Complex<T>]], params: &AseParams, rng: &mut impl Rng) -> f64 {
    let var = params.normalized_variance();
    if !(var > 0.0) {
        return 0.0;
    }
    let sd = (var / 2.0).sqrt();
    for rail in rails.iter_mut() {
        for a in rail.iter_mut() {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            *a += Complex::new(T::lit(re * sd), T::lit(im * sd));
        }
    }
    var
}

#[derive(Debug, Clone)]
struct Step<T> {
    start: T,
    length: T,
    beta2: f64,
    beta3: f64,
    /// ∫γ′ dz over the step, dimensionless.
    nl_phase: T,
    /// Amplifier at the step start (span index), if any.
    amplifier: Option<usize>,
}

fn plan_steps<T: Real>(link: &Link<T>, step: T) -> Vec<Step<T>> {
    let mut cuts: Vec<T> = link.span_boundaries();
    cuts.extend(link.attenuators().iter().map(|a| a.position));
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < T::lit(1e-9));
    let tiny = T::lit(1e-6);
    let mut steps = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let span_idx = link.span_index(a);
        let span = &link.spans()[span_idx];
        let seg = b - a;
        let n_full = ((seg / step) + T::lit(1e-9)).floor().to_usize().unwrap_or(0);
        let mut lengths = vec![step; n_full];
        let rem = seg - step * T::from_usize(n_full).unwrap();
        if rem > tiny {
            lengths.push(rem);
        }
        let mut z = a;
        for (i, h) in lengths.into_iter().enumerate() {
            let amplifier = (i == 0 && (a - span.start).abs() < T::lit(1e-9)).then_some(span_idx);
            steps.push(Step {
                start: z,
                length: h,
                beta2: span.beta2.to_f64_lossy(),
                beta3: span.beta3.to_f64_lossy(),
                nl_phase: link.nonlinear_integral(z, z + h),
                amplifier,
            });
            z += h;
        }
    }
    steps
}

/// Output of [`propagate`].
#[derive(Debug, Clone)]
pub struct SimOutput<T: Real> {
    pub rx: Signal<T>,
    /// Oracle sampled at every step boundary.
    pub profile: TheoreticalProfile,
    pub steps: usize,
    /// Largest distance between a configured point loss and the position the
    /// simulator applied it at. Point losses are step boundaries, so this is 0.
    pub point_loss_quantization_m: f64,
    /// Per-rail ASE variance added at each amplifier (normalized units).
    pub ase_variances: Vec<f64>,
}

struct SpectralState<T: Real> {
    n: usize,
    ts: f64,
    pending_b2: f64,
    pending_b3: f64,
    cache_key: (u64, u64),
    cache: Vec<Complex<T>>,
}

impl<T: Real> SpectralState<T> {
    fn flush(&mut self, spectra: &mut [Vec<Complex<T>>]) {
        if self.pending_b2 == 0.0 && self.pending_b3 == 0.0 {
            return;
        }
        let key = (self.pending_b2.to_bits(), self.pending_b3.to_bits());
        if key != self.cache_key || self.cache.is_empty() {
            self.cache = dispersion_factors(self.n, self.ts, self.pending_b2, self.pending_b3);
            self.cache_key = key;
        }
        for s in spectra.iter_mut() {
            s.iter_mut().zip(&self.cache).for_each(|(a, f)| *a *= f);
        }
        self.pending_b2 = 0.0;
        self.pending_b3 = 0.0;
    }
}

/// Propagates `tx` through `link`. `tx` must be power-normalized.
pub fn propagate<T: Real>(tx: &Signal<T>, link: &Link<T>, cfg: &SimConfig) -> Result<SimOutput<T>> {
    if !(cfg.step_size_m > 0.0) || !cfg.step_size_m.is_finite() {
        return Err(Error::InvalidParameter("step size must be positive".into()));
    }
    let total_p = tx.total_power().to_f64_lossy();
    if (total_p - 1.0).abs() > 1e-3 {
        return Err(Error::InvalidField(format!(
            "tx must be power-normalized, mean power {total_p}"
        )));
    }
    let steps = plan_steps(link, T::lit(cfg.step_size_m));
    let n = tx.len();
    let ts = tx.sample_period().to_f64_lossy();
    let plan = fft_plan::<T>(n);
    let inv_n = T::from_usize(n).unwrap().recip();
    let dual = tx.is_dual();
    let kerr = if dual { T::lit(MANAKOV_FACTOR) } else { T::one() };
    let mut rng = stream_rng(cfg.seed, Stream::Ase, 0);

    let mut spectra: Vec<Vec<Complex<T>>> = tx.rails().iter().map(|r| r.to_vec()).collect();
    for s in spectra.iter_mut() {
        plan.forward.process(s);
    }
    let mut state = SpectralState {
        n,
        ts,
        pending_b2: 0.0,
        pending_b3: 0.0,
        cache_key: (0, 0),
        cache: Vec::new(),
    };
    let to_time = |s: &mut Vec<Complex<T>>| {
        plan.inverse.process(s);
        s.iter_mut().for_each(|a| *a *= inv_n);
    };
    let mut ase_variances = Vec::new();

    for st in &steps {
        if let Some(idx) = st.amplifier {
            let span = &link.spans()[idx];
            if cfg.ase_enabled && span.amp_gain > T::one() {
                state.flush(&mut spectra);
                for s in spectra.iter_mut() {
                    to_time(s);
                }
                let params = AseParams {
                    gain: span.amp_gain.to_f64_lossy(),
                    noise_figure_db: span.amp_noise_figure_db.to_f64_lossy(),
                    bandwidth_hz: 1.0 / ts,
                    reference_power_w: span.launch_power.to_f64_lossy(),
                    center_frequency_hz: tx.center_frequency().to_f64_lossy(),
                };
                let mut rails: Vec<&mut [Complex<T>]> = spectra.iter_mut().map(|v| v.as_mut_slice()).collect();
                ase_variances.push(inject_ase(&mut rails, &params, &mut rng));
                for s in spectra.iter_mut() {
                    plan.forward.process(s);
                }
            }
        }
        let half = st.length.to_f64_lossy() / 2.0;
        state.pending_b2 += st.beta2 * half;
        state.pending_b3 += st.beta3 * half;
        state.flush(&mut spectra);
        for s in spectra.iter_mut() {
            to_time(s);
        }
        let phi = kerr * st.nl_phase;
        if phi != T::zero() {
            if dual {
                let (xs, ys) = spectra.split_at_mut(1);
                for (ax, ay) in xs[0].iter_mut().zip(ys[0].iter_mut()) {
                    let (s, c) = (-(phi * (ax.norm_sqr() + ay.norm_sqr()))).sin_cos();
                    let r = Complex::new(c, s);
                    *ax *= r;
                    *ay *= r;
                }
            } else {
                for a in spectra[0].iter_mut() {
                    let (s, c) = (-(phi * a.norm_sqr())).sin_cos();
                    *a *= Complex::new(c, s);
                }
            }
        }
        for s in spectra.iter_mut() {
            plan.forward.process(s);
        }
        state.pending_b2 += st.beta2 * half;
        state.pending_b3 += st.beta3 * half;
    }
    state.flush(&mut spectra);
    for s in spectra.iter_mut() {
        to_time(s);
    }

    let mut z_km: Vec<f64> = steps.iter().map(|s| m_to_km(s.start).to_f64_lossy()).collect();
    z_km.push(m_to_km(link.total_length()).to_f64_lossy());
    let profile = theoretical_profile(link, &z_km)?;
    let rx = tx.from_rails(spectra, tx.sample_period())?;
    Ok(SimOutput {
        rx,
        profile,
        steps: steps.len(),
        point_loss_quantization_m: 0.0,
        ase_variances,
    })
}
