//! Columns of the perturbation matrix `G`.
//!
//! Column `k` is the receiver-referred first-order response to a nonlinear
//! coefficient at `z_k`: `g_k = −jΔz·D_{z_k L} Ñ[D_{0 z_k} A[0]]`, with `Δz` in
//! km so that solutions come out in 1/km.

use std::ops::Range;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::frontend::fit_spectrum;
use crate::link::Link;
use crate::propagation::{dispersion_factors, nl_dual_in_place, nl_single_in_place};
use crate::scalar::fft_plan;
use crate::signal::Signal;
use crate::units::{km_to_m, m_to_km};
use crate::Real;

/// Uniform estimation grid over the link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionGrid {
    pub z_km: Vec<f64>,
    pub dz_km: f64,
}

impl PositionGrid {
    /// `K = round(L/Δz)` positions `z_k = (k + offset)·Δz`, `offset ∈ [0, 1)`
    /// (0 places each position at the left edge of its segment).
    pub fn uniform(length_km: f64, dz_km: f64, offset: f64) -> Result<Self> {
        if !(dz_km > 0.0) || !dz_km.is_finite() {
            return Err(Error::InvalidParameter(format!("Δz = {dz_km} km")));
        }
        if !(0.0..1.0).contains(&offset) {
            return Err(Error::InvalidParameter(format!("grid offset {offset} outside [0, 1)")));
        }
        let k = (length_km / dz_km).round() as usize;
        if k < 2 {
            return Err(Error::InvalidParameter(format!(
                "Δz = {dz_km} km gives K = {k} positions over {length_km} km; need K ≥ 2"
            )));
        }
        let z_km = (0..k)
            .map(|i| ((i as f64 + offset) * dz_km).min(length_km))
            .collect();
        Ok(Self { z_km, dz_km })
    }

    pub fn len(&self) -> usize {
        self.z_km.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z_km.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnOptions {
    /// Oversampling applied around the cubic nonlinearity to avoid aliasing
    /// (1 evaluates it at the frame's own rate).
    pub nl_oversample: usize,
    /// Remove the common-phase direction `jA₀` from every column. The
    /// residual of a phase-aligned frame has no component along it, so the
    /// first-order model only matches once the columns lose it too.
    pub project_phase: bool,
}

impl Default for ColumnOptions {
    fn default() -> Self {
        Self {
            nl_oversample: 2,
            project_phase: true,
        }
    }
}

type Rails<T> = Vec<Vec<Complex<T>>>;

/// Accumulated dispersion of one walk step and its factors.
type WalkStep<T> = ((f64, f64), Vec<Complex<T>>);

const WALK_REANCHOR: usize = 64;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

struct Workspace<T: Real> {
    scratch: Vec<Complex<T>>,
}

impl<T: Real> Default for Workspace<T> {
    fn default() -> Self {
        Self { scratch: Vec::new() }
    }
}

/// Builds columns of `G` for one transmitted frame.
pub struct ColumnBuilder<'a, T: Real> {
    link: &'a Link<T>,
    grid: &'a PositionGrid,
    opts: ColumnOptions,
    n: usize,
    ts: f64,
    dual: bool,
    /// tx spectra at the frame rate.
    tx_spectra: Rails<T>,
    /// `D_{0L}` factors at the frame rate.
    d_total: Vec<Complex<T>>,
    /// `A₀[L]` (for the phase projection).
    a0: Rails<T>,
    a0_energy: T,
}

impl<'a, T: Real> ColumnBuilder<'a, T> {
    pub fn new(tx: &Signal<T>, link: &'a Link<T>, grid: &'a PositionGrid, opts: ColumnOptions) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::InvalidParameter("need K ≥ 2 positions".into()));
        }
        if opts.nl_oversample == 0 {
            return Err(Error::InvalidParameter("nl_oversample must be ≥ 1".into()));
        }
        let total_km = m_to_km(link.total_length().to_f64_lossy());
        if grid.z_km.iter().any(|&z| z < 0.0 || z > total_km + 1e-9) {
            return Err(Error::GridMismatch("grid extends beyond the link".into()));
        }
        let n = tx.len();
        let ts = tx.sample_period().to_f64_lossy();
        let plan = fft_plan::<T>(n);
        let tx_spectra: Rails<T> = tx
            .rails()
            .iter()
            .map(|r| {
                let mut s = r.to_vec();
                plan.forward.process(&mut s);
                s
            })
            .collect();
        let (b2, b3) = link.accumulated_dispersion(T::zero(), link.total_length());
        let d_total = dispersion_factors(n, ts, b2.to_f64_lossy(), b3.to_f64_lossy());
        let a0 = crate::estimator::frontend::linear_reference(tx, link);
        let a0_energy = a0.iter().flat_map(|r| r.iter()).map(|a| a.norm_sqr()).sum();
        Ok(Self {
            link,
            grid,
            opts,
            n,
            ts,
            dual: tx.is_dual(),
            tx_spectra,
            d_total,
            a0,
            a0_energy,
        })
    }

    pub fn k(&self) -> usize {
        self.grid.len()
    }

    pub fn frame_len(&self) -> usize {
        self.n
    }

    pub fn rail_count(&self) -> usize {
        self.tx_spectra.len()
    }

    pub fn a0(&self) -> &[Vec<Complex<T>>] {
        &self.a0
    }

    pub fn options(&self) -> ColumnOptions {
        self.opts
    }

    /// Column `k` in the time domain, one vector per rail.
    pub fn column(&self, k: usize) -> Rails<T> {
        let d_in = self.d_in(k);
        self.column_with(&d_in, &mut Workspace::default())
    }

    fn d_in(&self, k: usize) -> Vec<Complex<T>> {
        let z = T::lit(km_to_m(self.grid.z_km[k]));
        let (b2, b3) = self.link.accumulated_dispersion(T::zero(), z);
        dispersion_factors(self.n, self.ts, b2.to_f64_lossy(), b3.to_f64_lossy())
    }

    fn column_with(&self, d_in: &[Complex<T>], ws: &mut Workspace<T>) -> Rails<T> {
        let n = self.n;
        let os = self.opts.nl_oversample;
        let no = n * os;
        let plan_o = fft_plan::<T>(no);
        let plan = fft_plan::<T>(n);
        let inv_n = T::from_usize(n).unwrap().recip();
        let zero = Complex::new(T::zero(), T::zero());
        ws.scratch.resize(
            plan_o
                .inverse
                .get_inplace_scratch_len()
                .max(plan_o.forward.get_inplace_scratch_len())
                .max(plan.inverse.get_inplace_scratch_len()),
            zero,
        );

        // the tx spectrum is zero outside the frame's band, so D_{0z} is
        // only needed there
        let mut fields: Rails<T> = self
            .tx_spectra
            .iter()
            .map(|s| {
                let mut v: Vec<Complex<T>> = s.iter().zip(d_in).map(|(a, d)| *a * d).collect();
                if os > 1 {
                    v = fit_spectrum(&v, no);
                }
                plan_o.inverse.process_with_scratch(&mut v, &mut ws.scratch);
                v.iter_mut().for_each(|a| *a *= inv_n);
                v
            })
            .collect();
        if self.dual {
            let (x, y) = fields.split_at_mut(1);
            nl_dual_in_place(&mut x[0], &mut y[0], T::one());
        } else {
            nl_single_in_place(&mut fields[0], T::one());
        }
        // −jΔz, the 1/os from the oversampled transform, the 1/n of the
        // inverse; D_{zL} = D_{0L}·conj(D_{0z})
        let dz = T::lit(self.grid.dz_km);
        let scale = Complex::new(T::zero(), -dz / T::from_usize(os).unwrap() * inv_n);
        let mut out: Rails<T> = fields
            .into_iter()
            .map(|mut v| {
                plan_o.forward.process_with_scratch(&mut v, &mut ws.scratch);
                let mut s = if os == 1 { v } else { fit_spectrum(&v, n) };
                s.iter_mut()
                    .zip(self.d_total.iter().zip(d_in))
                    .for_each(|(a, (t, d))| *a = *a * (*t * d.conj()) * scale);
                plan.inverse.process_with_scratch(&mut s, &mut ws.scratch);
                s
            })
            .collect();
        if self.opts.project_phase {
            project_out_phase(&mut out, &self.a0, self.a0_energy);
        }
        out
    }

    /// Calls `f(k, column)` for `k` in `range`, in order. `D_{0z_k}` is
    /// advanced from the previous position whenever consecutive positions are
    /// separated by the same dispersion, and recomputed every
    /// `WALK_REANCHOR` columns.
    fn walk(&self, range: Range<usize>, mut f: impl FnMut(usize, Rails<T>)) {
        let mut ws = Workspace::default();
        let mut d_in: Vec<Complex<T>> = Vec::new();
        let mut step: Option<WalkStep<T>> = None;
        let mut since_anchor = 0;
        for k in range.clone() {
            if k == range.start || since_anchor >= WALK_REANCHOR {
                d_in = self.d_in(k);
                since_anchor = 0;
            } else {
                let z0 = T::lit(km_to_m(self.grid.z_km[k - 1]));
                let z1 = T::lit(km_to_m(self.grid.z_km[k]));
                let (b2, b3) = self.link.accumulated_dispersion(z0, z1);
                let key = (b2.to_f64_lossy(), b3.to_f64_lossy());
                let same = step.as_ref().is_some_and(|(c, _)| close(c.0, key.0) && close(c.1, key.1));
                if !same {
                    step = Some((key, dispersion_factors(self.n, self.ts, key.0, key.1)));
                }
                let factors = &step.as_ref().unwrap().1;
                d_in.iter_mut().zip(factors).for_each(|(d, s)| *d *= s);
                since_anchor += 1;
            }
            f(k, self.column_with(&d_in, &mut ws));
        }
    }

    /// Every column, each as rails. Memory is `K·N` complex values.
    pub fn build_all(&self) -> Vec<Rails<T>> {
        let mut out = Vec::with_capacity(self.k());
        self.walk(0..self.k(), |_, g| out.push(g));
        out
    }

    /// Real-stacked, column-major `G` restricted to `window`: column `k`
    /// holds `[Re g_x, Im g_x, (Re g_y, Im g_y)]` over the window.
    pub fn stacked(&self, window: Range<usize>) -> StackedMatrix<T> {
        let rows = stacked_rows(self.rail_count(), window.len());
        let mut data = vec![T::zero(); rows * self.k()];
        let per_block = self.k().div_ceil(rayon::current_num_threads()).max(1);
        data.par_chunks_mut(rows * per_block).enumerate().for_each(|(b, block)| {
            let start = b * per_block;
            let end = (start + per_block).min(self.k());
            self.walk(start..end, |k, g| {
                let col = &mut block[(k - start) * rows..(k - start + 1) * rows];
                stack_into(&g, window.clone(), col);
            });
        });
        StackedMatrix {
            rows,
            cols: self.k(),
            data,
        }
    }
}

/// `v ← v − (Re⟨jA₀, v⟩/‖A₀‖²)·jA₀`.
pub fn project_out_phase<T: Real>(v: &mut [Vec<Complex<T>>], a0: &[Vec<Complex<T>>], a0_energy: T) {
    if a0_energy <= T::zero() {
        return;
    }
    // Re⟨jA₀, v⟩ = Im⟨A₀, v⟩
    let mut dot = T::zero();
    for (r, a) in v.iter().zip(a0) {
        for (x, y) in r.iter().zip(a) {
            dot += (y.conj() * x).im;
        }
    }
    let c = dot / a0_energy;
    for (r, a) in v.iter_mut().zip(a0) {
        r.iter_mut()
            .zip(a)
            .for_each(|(x, y)| *x -= Complex::new(-y.im * c, y.re * c));
    }
}

pub fn stacked_rows(rails: usize, window_len: usize) -> usize {
    2 * rails * window_len
}

/// Writes `[Re r₀, Im r₀, Re r₁, Im r₁, …]` over `window` into `out`.
pub fn stack_into<T: Real>(rails: &[Vec<Complex<T>>], window: Range<usize>, out: &mut [T]) {
    let m = window.len();
    assert_eq!(out.len(), stacked_rows(rails.len(), m));
    for (r, rail) in rails.iter().enumerate() {
        let base = 2 * r * m;
        for (i, a) in rail[window.clone()].iter().enumerate() {
            out[base + i] = a.re;
            out[base + m + i] = a.im;
        }
    }
}

pub fn stack<T: Real>(rails: &[Vec<Complex<T>>], window: Range<usize>) -> Vec<T> {
    let mut out = vec![T::zero(); stacked_rows(rails.len(), window.len())];
    stack_into(rails, window, &mut out);
    out
}

/// Column-major real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedMatrix<T: Real> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> StackedMatrix<T> {
    pub fn column(&self, k: usize) -> &[T] {
        &self.data[k * self.rows..(k + 1) * self.rows]
    }

    /// `G x` for a real coefficient vector.
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        let mut out = vec![T::zero(); self.rows];
        for (k, &xk) in x.iter().enumerate() {
            if xk == T::zero() {
                continue;
            }
            out.iter_mut().zip(self.column(k)).for_each(|(o, g)| *o += *g * xk);
        }
        out
    }

    /// The real embedding of `j·G`: on every rail `[Re; Im] → [−Im; Re]`.
    pub fn times_j(&self, rails: usize) -> Self {
        let m = self.rows / (2 * rails);
        let mut data = vec![T::zero(); self.data.len()];
        for k in 0..self.cols {
            let src = self.column(k);
            let dst = &mut data[k * self.rows..(k + 1) * self.rows];
            for r in 0..rails {
                let b = 2 * r * m;
                for i in 0..m {
                    dst[b + i] = -src[b + m + i];
                    dst[b + m + i] = src[b + i];
                }
            }
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }
}

/// `j·v` in the real-stacked layout.
pub fn stacked_times_j<T: Real>(v: &[T], rails: usize) -> Vec<T> {
    StackedMatrix {
        rows: v.len(),
        cols: 1,
        data: v.to_vec(),
    }
    .times_j(rails)
    .data
}
