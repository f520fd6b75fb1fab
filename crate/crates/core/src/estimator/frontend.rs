//! Receiver-side preparation: resampling to the estimation rate, integer-lag
//! synchronization and formation of the first-order residual `A₁ = rx − A₀`.

use std::ops::Range;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::link::Link;
use crate::propagation::{CdOperator, Direction};
use crate::scalar::fft_plan;
use crate::signal::Signal;
use crate::Real;

/// Brick-wall resampling of every rail to `n_out` samples by spectral
/// truncation (or zero-padding). The Nyquist bin of an even-length output is
/// dropped.
pub fn resample_rails<T: Real>(rails: &[&[Complex<T>]], n_out: usize) -> Vec<Vec<Complex<T>>> {
    rails.iter().map(|r| resample(r, n_out)).collect()
}

pub fn resample<T: Real>(samples: &[Complex<T>], n_out: usize) -> Vec<Complex<T>> {
    let n = samples.len();
    let mut spec = samples.to_vec();
    fft_plan::<T>(n).forward.process(&mut spec);
    let mut out = fit_spectrum(&spec, n_out);
    fft_plan::<T>(n_out).inverse.process(&mut out);
    let scale = T::from_usize(n).unwrap().recip();
    out.iter_mut().for_each(|a| *a *= scale);
    out
}

/// Maps DFT bins onto an `n_out`-point grid, keeping the bins strictly below
/// both Nyquist frequencies and zeroing the rest. No scaling is applied.
pub fn fit_spectrum<T: Real>(spec: &[Complex<T>], n_out: usize) -> Vec<Complex<T>> {
    let n = spec.len();
    let mut out = vec![Complex::new(T::zero(), T::zero()); n_out];
    let half = n.min(n_out).div_ceil(2);
    out[..half].copy_from_slice(&spec[..half]);
    for k in 1..half {
        out[n_out - k] = spec[n - k];
    }
    out
}

/// Resamples a signal by an integer decimation factor.
pub fn decimate<T: Real>(signal: &Signal<T>, factor: usize) -> Result<Signal<T>> {
    if factor == 0 || !signal.len().is_multiple_of(factor) {
        return Err(Error::InvalidParameter(format!(
            "cannot decimate {} samples by {factor}",
            signal.len()
        )));
    }
    if factor == 1 {
        return Ok(signal.clone());
    }
    let n_out = signal.len() / factor;
    let rails = resample_rails(&signal.rails(), n_out);
    signal.from_rails(rails, signal.sample_period() * T::from_usize(factor).unwrap())
}

/// Cyclic shift so that `out[n] = x[n + lag]` (indices modulo the length).
pub fn advance<T: Copy>(x: &[T], lag: isize) -> Vec<T> {
    let n = x.len() as isize;
    let s = lag.rem_euclid(n) as usize;
    let mut out = Vec::with_capacity(x.len());
    out.extend_from_slice(&x[s..]);
    out.extend_from_slice(&x[..s]);
    out
}

/// Outcome of [`sync_lag`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncResult {
    /// `signal[n + lag] ≈ reference[n]`.
    pub lag: isize,
    /// Normalized correlation magnitude at the peak, in `[0, 1]`.
    pub peak: f64,
}

/// Integer-lag cyclic cross-correlation over all rails.
pub fn sync_lag<T: Real>(reference: &[Vec<Complex<T>>], signal: &[Vec<Complex<T>>]) -> Result<SyncResult> {
    if reference.len() != signal.len() || reference.is_empty() {
        return Err(Error::Sync("rail count mismatch".into()));
    }
    let n = reference[0].len();
    if reference.iter().chain(signal).any(|r| r.len() != n) {
        return Err(Error::Sync("length mismatch".into()));
    }
    let plan = fft_plan::<T>(n);
    let mut acc = vec![Complex::new(T::zero(), T::zero()); n];
    let mut e_ref = 0.0;
    let mut e_sig = 0.0;
    for (r, s) in reference.iter().zip(signal) {
        let mut fr = r.clone();
        let mut fs = s.clone();
        plan.forward.process(&mut fr);
        plan.forward.process(&mut fs);
        for k in 0..n {
            acc[k] += fr[k].conj() * fs[k];
        }
        e_ref += r.iter().map(|a| a.norm_sqr().to_f64_lossy()).sum::<f64>();
        e_sig += s.iter().map(|a| a.norm_sqr().to_f64_lossy()).sum::<f64>();
    }
    plan.inverse.process(&mut acc);
    // acc[d] = n · Σ_m conj(r[m]) s[m + d]
    let (best, mag) = acc
        .iter()
        .enumerate()
        .map(|(d, c)| (d, c.norm().to_f64_lossy()))
        .fold((0, -1.0), |b, x| if x.1 > b.1 { x } else { b });
    let peak = mag / (n as f64) / (e_ref * e_sig).sqrt().max(f64::MIN_POSITIVE);
    let lag = if best > n / 2 { best as isize - n as isize } else { best as isize };
    Ok(SyncResult { lag, peak })
}

/// Options for [`form_a1`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontEndOptions {
    /// Search for and remove an integer delay between tx and rx.
    pub synchronize: bool,
    /// Smallest acceptable normalized correlation peak.
    pub min_sync_peak: f64,
    /// Rotate rx by one common phase so that `⟨A₀, rx⟩` is real (stands in
    /// for carrier phase recovery).
    pub phase_align: bool,
    /// Largest acceptable `‖A₁‖/‖A₀‖`.
    pub max_residual_ratio: f64,
}

impl Default for FrontEndOptions {
    fn default() -> Self {
        Self {
            synchronize: false,
            min_sync_peak: 0.5,
            phase_align: true,
            max_residual_ratio: 0.5,
        }
    }
}

/// Linear reference and first-order residual of one frame.
#[derive(Debug, Clone)]
pub struct FrameResidual<T: Real> {
    /// `A₀[L] = D_{0L} A[0]`, one vector per rail.
    pub a0: Vec<Vec<Complex<T>>>,
    /// `rx − A₀[L]` after synchronization and phase alignment.
    pub a1: Vec<Vec<Complex<T>>>,
    /// rx after synchronization (before phase alignment).
    pub rx: Vec<Vec<Complex<T>>>,
    pub lag: isize,
    pub sync_peak: Option<f64>,
    /// Phase removed from rx, rad.
    pub phase: f64,
}

impl<T: Real> FrameResidual<T> {
    pub fn len(&self) -> usize {
        self.a0[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// ‖A₁‖² / ‖A₀‖².
    pub fn residual_ratio(&self) -> f64 {
        energy(&self.a1) / energy(&self.a0)
    }
}

pub(crate) fn energy<T: Real>(rails: &[Vec<Complex<T>>]) -> f64 {
    rails
        .iter()
        .flat_map(|r| r.iter())
        .map(|a| a.norm_sqr().to_f64_lossy())
        .sum()
}

/// `A₀[L] = D_{0L}·tx` rail by rail.
pub fn linear_reference<T: Real>(tx: &Signal<T>, link: &Link<T>) -> Vec<Vec<Complex<T>>> {
    let op = CdOperator::between(link, T::zero(), link.total_length(), tx.len(), tx.sample_period());
    tx.rails()
        .iter()
        .map(|r| {
            let mut v = r.to_vec();
            op.apply_in_place(&mut v, Direction::Forward);
            v
        })
        .collect()
}

/// Forms `A₁ = rx − D_{0L}·tx`. Both signals must share layout and time base.
pub fn form_a1<T: Real>(
    rx: &Signal<T>,
    tx: &Signal<T>,
    link: &Link<T>,
    opts: &FrontEndOptions,
) -> Result<FrameResidual<T>> {
    if rx.is_dual() != tx.is_dual() || rx.len() != tx.len() {
        return Err(Error::InvalidField("tx and rx layouts differ".into()));
    }
    let ts_rx = rx.sample_period().to_f64_lossy();
    let ts_tx = tx.sample_period().to_f64_lossy();
    if (ts_rx - ts_tx).abs() > 1e-9 * ts_tx {
        return Err(Error::InvalidField("tx and rx sample periods differ".into()));
    }
    let a0 = linear_reference(tx, link);
    let mut rx_rails: Vec<Vec<Complex<T>>> = rx.rails().iter().map(|r| r.to_vec()).collect();
    let mut lag = 0;
    let mut sync_peak = None;
    if opts.synchronize {
        let s = sync_lag(&a0, &rx_rails)?;
        if !(s.peak >= opts.min_sync_peak) {
            return Err(Error::Sync(format!(
                "correlation peak {:.3} below {:.3}",
                s.peak, opts.min_sync_peak
            )));
        }
        lag = s.lag;
        sync_peak = Some(s.peak);
        if lag != 0 {
            rx_rails = rx_rails.iter().map(|r| advance(r, lag)).collect();
        }
    }
    let mut phase = 0.0;
    let mut a1 = rx_rails.clone();
    if opts.phase_align {
        let mut c = Complex::new(0.0, 0.0);
        for (r, a) in rx_rails.iter().zip(&a0) {
            for (x, y) in r.iter().zip(a) {
                let p = y.conj() * x;
                c += Complex::new(p.re.to_f64_lossy(), p.im.to_f64_lossy());
            }
        }
        phase = c.arg();
        let rot = Complex::new(T::lit((-phase).cos()), T::lit((-phase).sin()));
        a1.iter_mut().flat_map(|r| r.iter_mut()).for_each(|x| *x *= rot);
    }
    for (r, a) in a1.iter_mut().zip(&a0) {
        r.iter_mut().zip(a).for_each(|(x, y)| *x -= *y);
    }
    let out = FrameResidual {
        a0,
        a1,
        rx: rx_rails,
        lag,
        sync_peak,
        phase,
    };
    let ratio = out.residual_ratio().sqrt();
    if !(ratio <= opts.max_residual_ratio) {
        return Err(Error::Sync(format!(
            "residual ‖A₁‖/‖A₀‖ = {ratio:.3} exceeds {:.3}; tx and rx do not match",
            opts.max_residual_ratio
        )));
    }
    Ok(out)
}

/// Samples discarded at each frame edge: the dispersive memory
/// `max|∫β₂|·2π·BW` of the link, in samples.
pub fn guard_samples<T: Real>(link: &Link<T>, bandwidth_hz: f64, sample_period_s: f64) -> usize {
    let memory = link.max_accumulated_beta2().to_f64_lossy() * 2.0 * std::f64::consts::PI * bandwidth_hz;
    (memory / sample_period_s).ceil() as usize
}

/// Sample window kept after guard removal; empty guard keeps everything.
pub fn guard_window(n: usize, guard: usize) -> Result<Range<usize>> {
    if 2 * guard >= n {
        return Err(Error::InvalidParameter(format!(
            "guard of {guard} samples leaves nothing of a {n}-sample frame"
        )));
    }
    Ok(guard..n - guard)
}
