//! Power profile estimation from boundary signals.
//!
//! A frame goes through [`frontend::form_a1`], its perturbation columns come
//! from [`columns::ColumnBuilder`], and both are folded into a
//! [`system::PerturbationSystem`] which the routines in [`solve`] invert.

pub mod columns;
pub mod frontend;
pub mod profile;
pub mod solve;
pub mod system;

pub use columns::{ColumnBuilder, ColumnOptions, PositionGrid, StackedMatrix};
pub use frontend::{decimate, form_a1, FrameResidual, FrontEndOptions};
pub use profile::{average_profiles, ConditionSummary, ProfileEstimate};
pub use solve::{solve_cm, solve_ls, solve_ls_augmented, SolveOptions};
pub use system::{AugmentedSystem, Method, PerturbationSystem};

use std::ops::Range;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::link::Link;
use crate::signal::Signal;
use crate::units::km_to_m;
use crate::Real;

/// Edge samples dropped from every frame before accumulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GuardMode {
    /// The link's dispersive memory (see [`frontend::guard_samples`]).
    #[default]
    Auto,
    None,
    Samples(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EstimatorOptions {
    pub columns: ColumnOptions,
    pub frontend: FrontEndOptions,
    pub guard: GuardMode,
    pub solve: SolveOptions,
}

/// γ at each grid position, 1/(W·km).
pub fn gamma_on_grid<T: Real>(link: &Link<T>, grid: &PositionGrid) -> Vec<f64> {
    grid.z_km
        .iter()
        .map(|&z| link.gamma_at(T::lit(km_to_m(z))).to_f64_lossy() * 1e3)
        .collect()
}

/// What [`frame_systems`] should produce besides the LS system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FrameRequest {
    pub augmented: bool,
    pub keep_g: bool,
}

/// Per-frame systems and diagnostics.
#[derive(Debug, Clone)]
pub struct FrameSystems<T: Real> {
    pub system: PerturbationSystem<T>,
    pub augmented: Option<AugmentedSystem<T>>,
    /// Real-stacked `G` over the kept window, when requested.
    pub g: Option<StackedMatrix<T>>,
    pub window: Range<usize>,
    /// ‖A₁‖/‖A₀‖.
    pub residual_ratio: f64,
    pub lag: isize,
    pub sync_peak: Option<f64>,
    pub phase: f64,
}

/// Builds the systems of one frame from its tx and rx at the estimation rate.
pub fn frame_systems<T: Real>(
    tx: &Signal<T>,
    rx: &Signal<T>,
    link: &Link<T>,
    grid: &PositionGrid,
    bandwidth_hz: f64,
    opts: &EstimatorOptions,
    request: FrameRequest,
) -> Result<FrameSystems<T>> {
    let residual = form_a1(rx, tx, link, &opts.frontend)?;
    let n = tx.len();
    let guard = match opts.guard {
        GuardMode::Auto => frontend::guard_samples(link, bandwidth_hz, tx.sample_period().to_f64_lossy()),
        GuardMode::None => 0,
        GuardMode::Samples(g) => g,
    };
    let window = frontend::guard_window(n, guard)?;
    let builder = ColumnBuilder::new(tx, link, grid, opts.columns)?;
    let g = builder.stacked(window.clone());
    let mut a1 = residual.a1.clone();
    if opts.columns.project_phase {
        let e: T = residual.a0.iter().flat_map(|r| r.iter()).map(|a| a.norm_sqr()).sum();
        columns::project_out_phase(&mut a1, &residual.a0, e);
    }
    let a1s = columns::stack(&a1, window.clone());
    let gamma = gamma_on_grid(link, grid);
    let mut system = PerturbationSystem::new(grid.clone(), gamma.clone(), tx.is_dual())?;
    system.accumulate(&g, &a1s)?;

    let augmented = if request.augmented {
        let plain = if opts.columns.project_phase {
            let b = ColumnBuilder::new(
                tx,
                link,
                grid,
                ColumnOptions {
                    project_phase: false,
                    ..opts.columns
                },
            )?;
            b.stacked(window.clone())
        } else {
            g.clone()
        };
        let mut aug = AugmentedSystem::new(grid.clone(), gamma, tx.is_dual())?;
        aug.accumulate(
            &plain,
            &columns::stack(&residual.a0, window.clone()),
            &columns::stack(&residual.rx, window.clone()),
        )?;
        Some(aug)
    } else {
        None
    };
    Ok(FrameSystems {
        system,
        augmented,
        g: request.keep_g.then_some(g),
        window,
        residual_ratio: residual.residual_ratio().sqrt(),
        lag: residual.lag,
        sync_peak: residual.sync_peak,
        phase: residual.phase,
    })
}

/// `A₀ + G γ′` for a given profile, one vector per rail (full frame,
/// unprojected columns); used to synthesize first-order receptions.
pub fn first_order_rx<T: Real>(
    tx: &Signal<T>,
    link: &Link<T>,
    grid: &PositionGrid,
    gamma_prime_per_km: &[f64],
    nl_oversample: usize,
) -> Result<Vec<Vec<Complex<T>>>> {
    let b = ColumnBuilder::new(
        tx,
        link,
        grid,
        ColumnOptions {
            nl_oversample,
            project_phase: false,
        },
    )?;
    let mut out = b.a0().to_vec();
    for (k, g) in gamma_prime_per_km.iter().enumerate() {
        let col = b.column(k);
        let g = T::lit(*g);
        for (o, c) in out.iter_mut().zip(&col) {
            o.iter_mut().zip(c).for_each(|(a, b)| *a += *b * g);
        }
    }
    Ok(out)
}
