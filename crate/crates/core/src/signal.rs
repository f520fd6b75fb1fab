//! Waveform containers and transmit-side source generation.
//!
//! Every field handled by the simulator and the estimator is power-normalized:
//! a single-polarization field has mean power 1, a dual-polarization field has
//! total (x + y) mean power 1. Optical power lives entirely in the
//! position-dependent nonlinear coefficient.

use num_complex::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::scalar::{fft_plan, Real};
use crate::units::DEFAULT_CENTER_FREQUENCY_HZ;

/// Tolerance on the unit-power normalization.
pub const POWER_TOLERANCE: f64 = 1e-6;

/// Uniformly sampled complex baseband waveform, one polarization.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField<T: Real> {
    samples: Vec<Complex<T>>,
    sample_period: T,
    center_frequency: T,
}

impl<T: Real> ComplexField<T> {
    pub fn new(samples: Vec<Complex<T>>, sample_period: T) -> Result<Self> {
        Self::with_center_frequency(samples, sample_period, T::lit(DEFAULT_CENTER_FREQUENCY_HZ))
    }

    pub fn with_center_frequency(
        samples: Vec<Complex<T>>,
        sample_period: T,
        center_frequency: T,
    ) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidField(format!(
                "need at least 2 samples, got {}",
                samples.len()
            )));
        }
        if !(sample_period > T::zero()) || !sample_period.is_finite() {
            return Err(Error::InvalidField("sample period must be positive".into()));
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::InvalidField("non-finite sample".into()));
        }
        Ok(Self {
            samples,
            sample_period,
            center_frequency,
        })
    }

    pub fn samples(&self) -> &[Complex<T>] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex<T>> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_period(&self) -> T {
        self.sample_period
    }

    pub fn center_frequency(&self) -> T {
        self.center_frequency
    }

    pub fn mean_power(&self) -> T {
        mean_power(&self.samples)
    }

    /// Returns a copy whose samples are replaced, keeping the time base.
    pub fn with_samples(&self, samples: Vec<Complex<T>>) -> Self {
        assert_eq!(samples.len(), self.samples.len(), "sample count changed");
        Self {
            samples,
            sample_period: self.sample_period,
            center_frequency: self.center_frequency,
        }
    }

    /// Scales to unit mean power. A zero field is returned unchanged.
    pub fn normalized(mut self) -> Self {
        let p = self.mean_power();
        if p > T::zero() {
            let s = p.sqrt().recip();
            self.samples.iter_mut().for_each(|a| *a *= s);
        }
        self
    }

    pub fn is_normalized(&self) -> bool {
        (self.mean_power().to_f64_lossy() - 1.0).abs() <= POWER_TOLERANCE
    }
}

/// x/y polarization pair sharing one time base.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPolField<T: Real> {
    pub x: ComplexField<T>,
    pub y: ComplexField<T>,
}

impl<T: Real> DualPolField<T> {
    pub fn new(x: ComplexField<T>, y: ComplexField<T>) -> Result<Self> {
        if x.len() != y.len()
            || x.sample_period != y.sample_period
            || x.center_frequency != y.center_frequency
        {
            return Err(Error::InvalidField(
                "x and y rails must share sample count, period and carrier".into(),
            ));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Combined mean power ⟨|a_x|² + |a_y|²⟩.
    pub fn total_power(&self) -> T {
        self.x.mean_power() + self.y.mean_power()
    }

    /// Scales both rails so that the combined mean power is 1.
    pub fn normalized(mut self) -> Self {
        let p = self.total_power();
        if p > T::zero() {
            let s = p.sqrt().recip();
            for a in self.x.samples.iter_mut().chain(self.y.samples.iter_mut()) {
                *a *= s;
            }
        }
        self
    }
}

/// Either polarization layout. The simulator and estimator operate on the
/// rails of a `Signal` uniformly.
#[derive(Debug, Clone, PartialEq)]
pub enum Signal<T: Real> {
    Single(ComplexField<T>),
    Dual(DualPolField<T>),
}

impl<T: Real> Signal<T> {
    pub fn is_dual(&self) -> bool {
        matches!(self, Signal::Dual(_))
    }

    pub fn len(&self) -> usize {
        match self {
            Signal::Single(f) => f.len(),
            Signal::Dual(d) => d.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_period(&self) -> T {
        self.first().sample_period()
    }

    pub fn center_frequency(&self) -> T {
        self.first().center_frequency()
    }

    fn first(&self) -> &ComplexField<T> {
        match self {
            Signal::Single(f) => f,
            Signal::Dual(d) => &d.x,
        }
    }

    pub fn rails(&self) -> Vec<&[Complex<T>]> {
        match self {
            Signal::Single(f) => vec![f.samples()],
            Signal::Dual(d) => vec![d.x.samples(), d.y.samples()],
        }
    }

    pub fn rails_mut(&mut self) -> Vec<&mut [Complex<T>]> {
        match self {
            Signal::Single(f) => vec![f.samples_mut()],
            Signal::Dual(d) => vec![d.x.samples_mut(), d.y.samples_mut()],
        }
    }

    pub fn rail_count(&self) -> usize {
        if self.is_dual() {
            2
        } else {
            1
        }
    }

    /// Total mean power summed over rails.
    pub fn total_power(&self) -> T {
        self.rails().iter().map(|r| mean_power(r)).sum()
    }

    /// Rebuilds a signal with the same layout and time base from new rails.
    pub fn from_rails(&self, rails: Vec<Vec<Complex<T>>>, sample_period: T) -> Result<Self> {
        let nu = self.center_frequency();
        let mut it = rails.into_iter();
        let mk = |s: Vec<Complex<T>>| ComplexField::with_center_frequency(s, sample_period, nu);
        match self {
            Signal::Single(_) => Ok(Signal::Single(mk(
                it.next().ok_or_else(|| Error::InvalidField("missing rail".into()))?,
            )?)),
            Signal::Dual(_) => {
                let x = mk(it.next().ok_or_else(|| Error::InvalidField("missing x".into()))?)?;
                let y = mk(it.next().ok_or_else(|| Error::InvalidField("missing y".into()))?)?;
                Ok(Signal::Dual(DualPolField::new(x, y)?))
            }
        }
    }
}

impl<T: Real> From<ComplexField<T>> for Signal<T> {
    fn from(f: ComplexField<T>) -> Self {
        Signal::Single(f)
    }
}

impl<T: Real> From<DualPolField<T>> for Signal<T> {
    fn from(f: DualPolField<T>) -> Self {
        Signal::Dual(f)
    }
}

pub fn mean_power<T: Real>(samples: &[Complex<T>]) -> T {
    if samples.is_empty() {
        return T::zero();
    }
    samples.iter().map(|a| a.norm_sqr()).sum::<T>() / T::from_usize(samples.len()).unwrap()
}

/// Constellation / symbol distribution of the transmitted signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModulationFormat {
    #[serde(rename = "QPSK")]
    Qpsk,
    #[serde(rename = "16QAM")]
    Qam16,
    #[serde(rename = "64QAM")]
    Qam64,
    #[serde(rename = "PCS64QAM")]
    Pcs64Qam,
    Gaussian,
}

pub const DEFAULT_PCS_ENTROPY: f64 = 4.347;

fn default_pcs_entropy() -> f64 {
    DEFAULT_PCS_ENTROPY
}

/// Transmitter description in conventional units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub format: ModulationFormat,
    pub symbol_rate_gbd: f64,
    /// Root-raised-cosine roll-off; 0 gives an ideal rectangular spectrum.
    #[serde(default)]
    pub rolloff: f64,
    #[serde(default = "default_pcs_entropy")]
    pub pcs_entropy_bits: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SourceSpec {
    pub fn new(format: ModulationFormat, symbol_rate_gbd: f64, rolloff: f64, seed: u64) -> Self {
        Self {
            format,
            symbol_rate_gbd,
            rolloff,
            pcs_entropy_bits: DEFAULT_PCS_ENTROPY,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.symbol_rate_gbd > 0.0) || !self.symbol_rate_gbd.is_finite() {
            return Err(Error::InvalidSource("symbol rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return Err(Error::InvalidSource("roll-off must lie in [0, 1]".into()));
        }
        if self.format == ModulationFormat::Pcs64Qam
            && !(self.pcs_entropy_bits > 4.0 && self.pcs_entropy_bits < 6.0)
        {
            return Err(Error::InvalidSource(format!(
                "PCS64QAM entropy {} outside (4, 6) bits",
                self.pcs_entropy_bits
            )));
        }
        Ok(())
    }

    pub fn symbol_rate_hz(&self) -> f64 {
        self.symbol_rate_gbd * 1e9
    }

    /// Occupied bandwidth (1 + roll-off)·Rs in Hz.
    pub fn occupied_bandwidth_hz(&self) -> f64 {
        self.symbol_rate_hz() * (1.0 + self.rolloff)
    }
}

/// Generated waveform together with the drawn symbols.
#[derive(Debug, Clone)]
pub struct SourceOutput<T: Real> {
    pub field: ComplexField<T>,
    pub symbols: Vec<Complex<T>>,
}

/// Square QAM constellation with `m` points, unit mean power under a uniform prior.
pub fn square_qam(m: usize) -> Vec<Complex<f64>> {
    let side = (m as f64).sqrt().round() as usize;
    assert_eq!(side * side, m, "square constellation required");
    let half = (side as f64 - 1.0) / 2.0;
    let pts: Vec<Complex<f64>> = (0..side)
        .flat_map(|i| (0..side).map(move |q| Complex::new(i as f64 - half, q as f64 - half)))
        .collect();
    let p = pts.iter().map(|c| c.norm_sqr()).sum::<f64>() / m as f64;
    pts.into_iter().map(|c| c / p.sqrt()).collect()
}

fn entropy_bits(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

fn maxwell_boltzmann(points: &[Complex<f64>], nu: f64) -> Vec<f64> {
    let w: Vec<f64> = points.iter().map(|c| (-nu * c.norm_sqr()).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Maxwell–Boltzmann 64QAM prior whose entropy equals `entropy_bits`.
/// Returns the (unnormalized-amplitude) points and their probabilities.
pub fn pcs64_distribution(entropy_bits_target: f64) -> Result<(Vec<Complex<f64>>, Vec<f64>)> {
    if !(entropy_bits_target > 4.0 && entropy_bits_target < 6.0) {
        return Err(Error::InvalidSource(format!(
            "PCS64QAM entropy {entropy_bits_target} outside (4, 6) bits"
        )));
    }
    let points = square_qam(64);
    // Entropy decreases monotonically in the shaping parameter.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while entropy_bits(&maxwell_boltzmann(&points, hi)) > entropy_bits_target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if entropy_bits(&maxwell_boltzmann(&points, mid)) > entropy_bits_target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let probs = maxwell_boltzmann(&points, 0.5 * (lo + hi));
    Ok((points, probs))
}

fn draw_symbols(spec: &SourceSpec, n: usize, rng: &mut impl Rng) -> Result<Vec<Complex<f64>>> {
    let uniform = |pts: Vec<Complex<f64>>, rng: &mut dyn rand::RngCore| -> Vec<Complex<f64>> {
        (0..n).map(|_| pts[rng.random_range(0..pts.len())]).collect()
    };
    Ok(match spec.format {
        ModulationFormat::Qpsk => uniform(square_qam(4), rng),
        ModulationFormat::Qam16 => uniform(square_qam(16), rng),
        ModulationFormat::Qam64 => uniform(square_qam(64), rng),
        ModulationFormat::Pcs64Qam => {
            let (pts, probs) = pcs64_distribution(spec.pcs_entropy_bits)?;
            let mut cdf = Vec::with_capacity(probs.len());
            let mut acc = 0.0;
            for p in &probs {
                acc += p;
                cdf.push(acc);
            }
            (0..n)
                .map(|_| {
                    let u: f64 = rng.random::<f64>() * acc;
                    let i = cdf.partition_point(|&c| c < u).min(pts.len() - 1);
                    pts[i]
                })
                .collect()
        }
        ModulationFormat::Gaussian => (0..n)
            .map(|_| {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                Complex::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
            })
            .collect(),
    })
}

/// Root-raised-cosine amplitude response at frequency `f` (Hz).
pub fn rrc_response(f: f64, symbol_rate: f64, rolloff: f64) -> f64 {
    let af = f.abs();
    let edge = symbol_rate / 2.0;
    if rolloff <= 0.0 {
        // The Nyquist bin sits on the band edge; split it between ±edge.
        return if af < edge * (1.0 - 1e-12) {
            1.0
        } else if af <= edge * (1.0 + 1e-12) {
            std::f64::consts::FRAC_1_SQRT_2
        } else {
            0.0
        };
    }
    let f1 = edge * (1.0 - rolloff);
    let f2 = edge * (1.0 + rolloff);
    if af <= f1 {
        1.0
    } else if af <= f2 {
        let x = std::f64::consts::PI / (rolloff * symbol_rate) * (af - f1);
        (0.5 * (1.0 + x.cos())).sqrt()
    } else {
        0.0
    }
}

/// Frequency (Hz) of DFT bin `k` for an `n`-point transform at sample rate `fs`.
pub fn bin_frequency(k: usize, n: usize, fs: f64) -> f64 {
    let k = k as i64;
    let n_i = n as i64;
    let signed = if k < (n_i + 1) / 2 { k } else { k - n_i };
    signed as f64 * fs / n as f64
}

/// Pulse-shapes symbols with cyclic (whole-frame) RRC filtering.
pub fn pulse_shape<T: Real>(
    symbols: &[Complex<f64>],
    sps: usize,
    symbol_rate: f64,
    rolloff: f64,
) -> Vec<Complex<T>> {
    let m = symbols.len();
    let n = m * sps;
    let sym: Vec<Complex<T>> = symbols
        .iter()
        .map(|c| Complex::new(T::lit(c.re), T::lit(c.im)))
        .collect();
    let mut spec_sym = sym;
    let plan_m = fft_plan::<T>(m);
    plan_m.forward.process(&mut spec_sym);
    let fs = symbol_rate * sps as f64;
    let mut spec: Vec<Complex<T>> = (0..n)
        .map(|k| spec_sym[k % m] * T::lit(rrc_response(bin_frequency(k, n, fs), symbol_rate, rolloff)))
        .collect();
    let plan_n = fft_plan::<T>(n);
    plan_n.inverse.process(&mut spec);
    let scale = T::from_usize(n).unwrap().recip();
    spec.iter_mut().for_each(|a| *a *= scale);
    spec
}

fn build_field<T: Real>(spec: &SourceSpec, symbols: &[Complex<f64>], sps: usize) -> Result<ComplexField<T>> {
    let samples = pulse_shape::<T>(symbols, sps, spec.symbol_rate_hz(), spec.rolloff);
    let period = T::lit(1.0 / (spec.symbol_rate_hz() * sps as f64));
    Ok(ComplexField::new(samples, period)?.normalized())
}

fn check_source_args(spec: &SourceSpec, n_symbols: usize, sps: usize) -> Result<()> {
    spec.validate()?;
    if sps < 2 {
        return Err(Error::InvalidSource(format!("oversampling {sps} < 2")));
    }
    if n_symbols < 64 {
        return Err(Error::InvalidSource(format!("need ≥ 64 symbols, got {n_symbols}")));
    }
    Ok(())
}

/// Single-polarization source; deterministic in `spec.seed` and `frame`.
pub fn generate_source<T: Real>(spec: &SourceSpec, n_symbols: usize, sps: usize) -> Result<SourceOutput<T>> {
    generate_source_frame(spec, n_symbols, sps, 0)
}

pub fn generate_source_frame<T: Real>(
    spec: &SourceSpec,
    n_symbols: usize,
    sps: usize,
    frame: u64,
) -> Result<SourceOutput<T>> {
    check_source_args(spec, n_symbols, sps)?;
    let mut rng = stream_rng(spec.seed, Stream::Source, frame);
    let symbols = draw_symbols(spec, n_symbols, &mut rng)?;
    let field = build_field(spec, &symbols, sps)?;
    Ok(SourceOutput {
        field,
        symbols: symbols.iter().map(|c| Complex::new(T::lit(c.re), T::lit(c.im))).collect(),
    })
}

/// Dual-polarization source with independent symbol streams on x and y,
/// scaled to total mean power 1.
pub fn generate_dual_source<T: Real>(
    spec: &SourceSpec,
    n_symbols: usize,
    sps: usize,
    frame: u64,
) -> Result<DualPolField<T>> {
    check_source_args(spec, n_symbols, sps)?;
    let mut rng = stream_rng(spec.seed, Stream::Source, frame);
    let sx = draw_symbols(spec, n_symbols, &mut rng)?;
    let sy = draw_symbols(spec, n_symbols, &mut rng)?;
    let x = build_field::<T>(spec, &sx, sps)?;
    let y = build_field::<T>(spec, &sy, sps)?;
    Ok(DualPolField::new(x, y)?.normalized())
}
