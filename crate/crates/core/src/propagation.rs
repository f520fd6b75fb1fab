//! Spectral chromatic-dispersion operator and the first-order perturbation
//! nonlinear operators shared by the simulator and the estimator.
//!
//! All transforms are whole-frame (cyclic). The spectrum is multiplied by
//! `exp(−j(B₂/2)ω² − j(B₃/6)ω³)` where `B₂ = ∫β₂ dz` and `B₃ = ∫β₃ dz` over
//! the propagation interval.

use std::sync::Arc;

use num_complex::Complex;

use crate::link::Link;
use crate::scalar::{fft_plan, FftPair};
use crate::signal::{bin_frequency, ComplexField, DualPolField};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Dispersion over an interval, planned for one frame length and sample period.
#[derive(Clone)]
pub struct CdOperator<T: Real> {
    from_z: T,
    to_z: T,
    beta2_acc: f64,
    beta3_acc: f64,
    sample_period: f64,
    factors: Arc<Vec<Complex<T>>>,
    plan: Arc<FftPair<T>>,
}

impl<T: Real> std::fmt::Debug for CdOperator<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CdOperator")
            .field("from_z", &self.from_z)
            .field("to_z", &self.to_z)
            .field("beta2_acc", &self.beta2_acc)
            .field("beta3_acc", &self.beta3_acc)
            .field("n", &self.factors.len())
            .finish()
    }
}

/// Angular frequency of every DFT bin, rad/s, computed in f64.
pub fn angular_frequencies(n: usize, sample_period: f64) -> Vec<f64> {
    let fs = 1.0 / sample_period;
    (0..n)
        .map(|k| 2.0 * std::f64::consts::PI * bin_frequency(k, n, fs))
        .collect()
}

/// Spectral phase factors for accumulated dispersion `(B₂, B₃)`.
pub fn dispersion_factors<T: Real>(n: usize, sample_period: f64, b2: f64, b3: f64) -> Vec<Complex<T>> {
    angular_frequencies(n, sample_period)
        .into_iter()
        .map(|w| {
            let phi = -(b2 / 2.0) * w * w - (b3 / 6.0) * w * w * w;
            let (s, c) = phi.sin_cos();
            Complex::new(T::lit(c), T::lit(s))
        })
        .collect()
}

impl<T: Real> CdOperator<T> {
    /// Operator for explicit accumulated dispersion `B₂` (s²) and `B₃` (s³).
    pub fn from_accumulated(n: usize, sample_period: T, b2: f64, b3: f64) -> Self {
        let ts = sample_period.to_f64_lossy();
        Self {
            from_z: T::zero(),
            to_z: T::zero(),
            beta2_acc: b2,
            beta3_acc: b3,
            sample_period: ts,
            factors: Arc::new(dispersion_factors(n, ts, b2, b3)),
            plan: fft_plan(n),
        }
    }

    /// Operator propagating from `from_z` to `to_z` (m) along `link`'s
    /// piecewise-constant dispersion profile. `to_z < from_z` yields the
    /// backward (compensating) operator.
    pub fn between(link: &Link<T>, from_z: T, to_z: T, n: usize, sample_period: T) -> Self {
        let (b2, b3) = link.accumulated_dispersion(from_z, to_z);
        let mut op = Self::from_accumulated(n, sample_period, b2.to_f64_lossy(), b3.to_f64_lossy());
        op.from_z = from_z;
        op.to_z = to_z;
        op
    }

    /// Operator over a list of `(length m, β₂ s²/m, β₃ s³/m)` segments.
    pub fn from_segments(segments: &[(f64, f64, f64)], n: usize, sample_period: T) -> Self {
        let b2 = segments.iter().map(|(l, b, _)| l * b).sum();
        let b3 = segments.iter().map(|(l, _, b)| l * b).sum();
        let mut op = Self::from_accumulated(n, sample_period, b2, b3);
        op.to_z = T::lit(segments.iter().map(|s| s.0).sum());
        op
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn from_z(&self) -> T {
        self.from_z
    }

    pub fn to_z(&self) -> T {
        self.to_z
    }

    pub fn accumulated_beta2(&self) -> f64 {
        self.beta2_acc
    }

    pub fn factors(&self) -> &[Complex<T>] {
        &self.factors
    }

    /// Multiplies a spectrum (unnormalized forward DFT) by the operator.
    pub fn apply_spectrum(&self, spectrum: &mut [Complex<T>], direction: Direction) {
        assert_eq!(spectrum.len(), self.len(), "spectrum length does not match plan");
        match direction {
            Direction::Forward => spectrum
                .iter_mut()
                .zip(self.factors.iter())
                .for_each(|(s, f)| *s *= f),
            Direction::Inverse => spectrum
                .iter_mut()
                .zip(self.factors.iter())
                .for_each(|(s, f)| *s *= f.conj()),
        }
    }

    /// Applies the operator to time-domain samples in place.
    pub fn apply_in_place(&self, samples: &mut [Complex<T>], direction: Direction) {
        assert_eq!(samples.len(), self.len(), "field length does not match plan");
        self.plan.forward.process(samples);
        self.apply_spectrum(samples, direction);
        self.plan.inverse.process(samples);
        let scale = T::from_usize(samples.len()).unwrap().recip();
        samples.iter_mut().for_each(|s| *s *= scale);
    }
}

/// Applies dispersion to a field. The field's sample period must match the
/// operator's plan.
pub fn apply_cd<T: Real>(field: &ComplexField<T>, op: &CdOperator<T>, direction: Direction) -> ComplexField<T> {
    debug_assert!(
        (field.sample_period().to_f64_lossy() - op.sample_period).abs() <= 1e-9 * op.sample_period
    );
    let mut s = field.samples().to_vec();
    op.apply_in_place(&mut s, direction);
    field.with_samples(s)
}

/// `(|a|² − 2P̄)·a` element-wise, in place.
pub fn nl_single_in_place<T: Real>(samples: &mut [Complex<T>], mean_power: T) {
    let two_p = mean_power + mean_power;
    samples
        .iter_mut()
        .for_each(|a| *a *= a.norm_sqr() - two_p);
}

/// `(|a_x|² + |a_y|² − (3/2)P̄)·a_{x,y}` element-wise, in place.
pub fn nl_dual_in_place<T: Real>(x: &mut [Complex<T>], y: &mut [Complex<T>], mean_power: T) {
    assert_eq!(x.len(), y.len());
    let c = T::lit(1.5) * mean_power;
    for (ax, ay) in x.iter_mut().zip(y.iter_mut()) {
        let w = ax.norm_sqr() + ay.norm_sqr() - c;
        *ax *= w;
        *ay *= w;
    }
}

/// Single-polarization perturbation operator with P̄ = 1.
pub fn nl_operator_single<T: Real>(field: &ComplexField<T>) -> ComplexField<T> {
    let mut s = field.samples().to_vec();
    nl_single_in_place(&mut s, T::one());
    field.with_samples(s)
}

/// Dual-polarization (Manakov) perturbation operator with total P̄ = 1.
pub fn nl_operator_dual<T: Real>(field: &DualPolField<T>) -> DualPolField<T> {
    let mut x = field.x.samples().to_vec();
    let mut y = field.y.samples().to_vec();
    nl_dual_in_place(&mut x, &mut y, T::one());
    DualPolField {
        x: field.x.with_samples(x),
        y: field.y.with_samples(y),
    }
}
