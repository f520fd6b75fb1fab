//! Frame-by-frame simulation and estimation.
//!
//! Each frame draws its own source symbols and ASE, is propagated at the
//! simulation rate, resampled to the estimation rate and turned into one
//! perturbation system. Frames are independent and processed on the rayon
//! pool; results are merged in frame order so the output does not depend on
//! scheduling.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    average_profiles, frame_systems, solve_cm, solve_ls, solve_ls_augmented, AugmentedSystem, ColumnOptions,
    EstimatorOptions, FrameRequest, FrontEndOptions, GuardMode, PerturbationSystem, PositionGrid, ProfileEstimate,
    SolveOptions,
};
use crate::link::{Link, LinkSpec};
use crate::signal::{generate_dual_source, generate_source_frame, Signal, SourceSpec};
use crate::sim::{propagate, theoretical_profile, SimConfig, TheoreticalProfile};
use crate::Real;

/// Which estimators to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum MethodSelection {
    #[serde(rename = "LS")]
    Ls,
    #[serde(rename = "CM")]
    Cm,
    #[serde(rename = "LS-augmented")]
    LsAugmented,
    /// LS and CM.
    #[default]
    #[serde(rename = "both")]
    Both,
    /// LS, CM and LS-augmented.
    #[serde(rename = "all")]
    All,
}

impl MethodSelection {
    pub fn ls(self) -> bool {
        matches!(self, Self::Ls | Self::Both | Self::All)
    }

    pub fn cm(self) -> bool {
        matches!(self, Self::Cm | Self::Both | Self::All)
    }

    pub fn augmented(self) -> bool {
        matches!(self, Self::LsAugmented | Self::All)
    }
}

/// How frames are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    /// Solve every frame and average the profiles.
    #[default]
    Profiles,
    /// Sum the normal equations of all frames and solve once.
    NormalEquations,
}

fn default_est_sps() -> usize {
    2
}

fn default_oversample() -> usize {
    ColumnOptions::default().nl_oversample
}

fn default_true() -> bool {
    true
}

fn default_grid_offset() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    pub dz_km: f64,
    /// Position of each grid point inside its segment, as a fraction of Δz.
    /// The midpoint by default.
    #[serde(default = "default_grid_offset")]
    pub grid_offset: f64,
    pub frames: usize,
    /// Samples per frame at the estimation rate.
    pub samples_per_frame: usize,
    #[serde(default = "default_est_sps")]
    pub sps: usize,
    #[serde(default)]
    pub method: MethodSelection,
    #[serde(default)]
    pub averaging: Averaging,
    #[serde(default)]
    pub dual_pol: bool,
    #[serde(default = "default_oversample")]
    pub nl_oversample: usize,
    #[serde(default = "default_true")]
    pub project_phase: bool,
    #[serde(default = "default_true")]
    pub phase_align: bool,
    #[serde(default)]
    pub guard: GuardMode,
    #[serde(default)]
    pub solve: SolveOptions,
}

impl EstimationConfig {
    pub fn new(dz_km: f64, frames: usize, samples_per_frame: usize) -> Self {
        Self {
            dz_km,
            grid_offset: default_grid_offset(),
            frames,
            samples_per_frame,
            sps: 2,
            method: MethodSelection::Both,
            averaging: Averaging::Profiles,
            dual_pol: false,
            nl_oversample: default_oversample(),
            project_phase: true,
            phase_align: true,
            guard: GuardMode::Auto,
            solve: SolveOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::InvalidParameter("frames must be ≥ 1".into()));
        }
        if self.sps < 2 {
            return Err(Error::InvalidParameter("estimation needs ≥ 2 samples/symbol".into()));
        }
        if !self.samples_per_frame.is_multiple_of(self.sps) || self.samples_per_frame / self.sps < 64 {
            return Err(Error::InvalidParameter(format!(
                "samples_per_frame {} must be a multiple of sps {} with ≥ 64 symbols",
                self.samples_per_frame, self.sps
            )));
        }
        if self.nl_oversample == 0 {
            return Err(Error::InvalidParameter("nl_oversample must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn symbols_per_frame(&self) -> usize {
        self.samples_per_frame / self.sps
    }

    pub fn options(&self, synchronize: bool) -> EstimatorOptions {
        EstimatorOptions {
            columns: ColumnOptions {
                nl_oversample: self.nl_oversample,
                project_phase: self.project_phase,
            },
            frontend: FrontEndOptions {
                synchronize,
                phase_align: self.phase_align,
                ..Default::default()
            },
            guard: self.guard,
            solve: self.solve,
        }
    }

    pub fn grid(&self, length_km: f64) -> Result<PositionGrid> {
        PositionGrid::uniform(length_km, self.dz_km, self.grid_offset)
    }
}

/// One simulated frame at the estimation rate.
#[derive(Debug, Clone)]
pub struct SimulatedFrame<T: Real> {
    pub index: usize,
    pub tx: Signal<T>,
    pub rx: Signal<T>,
}

/// Generates and propagates frame `index`, returning tx and rx at the
/// estimation rate.
pub fn simulate_frame<T: Real>(
    link: &Link<T>,
    source: &SourceSpec,
    sim: &SimConfig,
    est: &EstimationConfig,
    index: usize,
) -> Result<SimulatedFrame<T>> {
    sim.validate()?;
    if !sim.sps.is_multiple_of(est.sps) {
        return Err(Error::InvalidParameter(format!(
            "simulation sps {} is not a multiple of estimation sps {}",
            sim.sps, est.sps
        )));
    }
    let n_sym = est.symbols_per_frame();
    let frame = index as u64;
    let tx_hi: Signal<T> = if est.dual_pol {
        generate_dual_source::<T>(source, n_sym, sim.sps, frame)?.into()
    } else {
        generate_source_frame::<T>(source, n_sym, sim.sps, frame)?.field.into()
    };
    let out = propagate(&tx_hi, link, &sim.for_frame(frame))?;
    let factor = sim.sps / est.sps;
    Ok(SimulatedFrame {
        index,
        tx: crate::estimator::decimate(&tx_hi, factor)?,
        rx: crate::estimator::decimate(&out.rx, factor)?,
    })
}

/// Per-frame diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub index: usize,
    pub residual_ratio: f64,
    pub lag: isize,
    pub sync_peak: Option<f64>,
    pub phase_rad: f64,
    pub window: [usize; 2],
    pub cond_g: Option<f64>,
}

/// Result of an estimation run.
#[derive(Debug, Clone)]
pub struct EstimationOutput {
    pub grid: PositionGrid,
    pub ls: Option<ProfileEstimate>,
    pub cm: Option<ProfileEstimate>,
    pub augmented: Option<ProfileEstimate>,
    /// Joint system over all frames (always accumulated; cheap to keep).
    pub system: PerturbationSystem<f64>,
    pub oracle: TheoreticalProfile,
    pub frames: Vec<FrameReport>,
}

struct FrameOutcome {
    report: FrameReport,
    system: PerturbationSystem<f64>,
    augmented: Option<AugmentedSystem<f64>>,
    ls: Option<Result<ProfileEstimate>>,
    cm: Option<ProfileEstimate>,
    aug: Option<Result<ProfileEstimate>>,
}

#[allow(clippy::too_many_arguments)]
fn process_frame(
    tx: &Signal<f64>,
    rx: &Signal<f64>,
    index: usize,
    link: &Link<f64>,
    grid: &PositionGrid,
    bandwidth_hz: f64,
    est: &EstimationConfig,
    synchronize: bool,
) -> Result<FrameOutcome> {
    let opts = est.options(synchronize);
    let request = FrameRequest {
        augmented: est.method.augmented(),
        keep_g: false,
    };
    let fs = frame_systems(tx, rx, link, grid, bandwidth_hz, &opts, request)?;
    let per_frame = est.averaging == Averaging::Profiles;
    let seed_tag = |mut p: ProfileEstimate| {
        p.seeds = vec![index as u64];
        p
    };
    let ls = (per_frame && est.method.ls()).then(|| solve_ls(&fs.system, &est.solve).map(seed_tag));
    let cm = (per_frame && est.method.cm()).then(|| seed_tag(solve_cm(&fs.system)));
    let aug = match (&fs.augmented, per_frame) {
        (Some(a), true) => Some(solve_ls_augmented(a, &est.solve).map(|(p, _)| seed_tag(p))),
        _ => None,
    };
    let cond_g = match &ls {
        Some(Ok(p)) => p.condition.map(|c| c.cond_g),
        _ => None,
    };
    Ok(FrameOutcome {
        report: FrameReport {
            index,
            residual_ratio: fs.residual_ratio,
            lag: fs.lag,
            sync_peak: fs.sync_peak,
            phase_rad: fs.phase,
            window: [fs.window.start, fs.window.end],
            cond_g,
        },
        system: fs.system,
        augmented: fs.augmented,
        ls,
        cm,
        aug,
    })
}

fn combine(
    outcomes: Vec<FrameOutcome>,
    grid: PositionGrid,
    oracle: TheoreticalProfile,
    est: &EstimationConfig,
) -> Result<EstimationOutput> {
    let mut iter = outcomes.into_iter();
    let first = iter.next().ok_or_else(|| Error::InvalidParameter("no frames".into()))?;
    let mut system = first.system.clone();
    let mut aug_sys = first.augmented.clone();
    let mut reports = vec![first.report.clone()];
    let mut ls = Vec::new();
    let mut cm = Vec::new();
    let mut aug = Vec::new();
    let mut push = |o: FrameOutcome| -> Result<()> {
        if let Some(p) = o.ls {
            ls.push(p?);
        }
        if let Some(p) = o.cm {
            cm.push(p);
        }
        if let Some(p) = o.aug {
            aug.push(p?);
        }
        Ok(())
    };
    push(first)?;
    for o in iter {
        system.merge(&o.system)?;
        if let (Some(a), Some(b)) = (aug_sys.as_mut(), o.augmented.as_ref()) {
            a.normal.add_assign(&b.normal);
            a.rhs.iter_mut().zip(&b.rhs).for_each(|(x, y)| *x += *y);
            a.frames += b.frames;
        }
        reports.push(o.report.clone());
        push(o)?;
    }
    let (ls, cm, augmented) = match est.averaging {
        Averaging::Profiles => (
            (!ls.is_empty()).then(|| average_profiles(&ls)).transpose()?,
            (!cm.is_empty()).then(|| average_profiles(&cm)).transpose()?,
            (!aug.is_empty()).then(|| average_profiles(&aug)).transpose()?,
        ),
        Averaging::NormalEquations => {
            let seeds: Vec<u64> = reports.iter().map(|r| r.index as u64).collect();
            let tag = |mut p: ProfileEstimate| {
                p.seeds = seeds.clone();
                p
            };
            (
                est.method.ls().then(|| solve_ls(&system, &est.solve)).transpose()?.map(tag),
                est.method.cm().then(|| solve_cm(&system)).map(tag),
                match &aug_sys {
                    Some(a) => Some(tag(solve_ls_augmented(a, &est.solve)?.0)),
                    None => None,
                },
            )
        }
    };
    Ok(EstimationOutput {
        grid,
        ls,
        cm,
        augmented,
        system,
        oracle,
        frames: reports,
    })
}

/// Full in-process run: simulate every frame and estimate.
pub fn run_simulated(
    link_spec: &LinkSpec,
    source: &SourceSpec,
    sim: &SimConfig,
    est: &EstimationConfig,
) -> Result<EstimationOutput> {
    est.validate()?;
    source.validate()?;
    let link = Link::<f64>::from_spec(link_spec)?;
    let grid = est.grid(link_spec.total_length_km())?;
    let oracle = theoretical_profile(&link, &grid.z_km)?;
    let bw = source.occupied_bandwidth_hz();
    let outcomes: Vec<Result<FrameOutcome>> = (0..est.frames)
        .into_par_iter()
        .map(|i| {
            let f = simulate_frame(&link, source, sim, est, i)?;
            process_frame(&f.tx, &f.rx, i, &link, &grid, bw, est, false)
        })
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    combine(outcomes, grid, oracle, est)
}

/// Estimation from externally supplied (tx, rx) pairs at the estimation
/// rate, with integer-lag synchronization.
pub fn run_from_signals(
    link_spec: &LinkSpec,
    pairs: &[(Signal<f64>, Signal<f64>)],
    bandwidth_hz: f64,
    est: &EstimationConfig,
) -> Result<EstimationOutput> {
    let link = Link::<f64>::from_spec(link_spec)?;
    let grid = est.grid(link_spec.total_length_km())?;
    let oracle = theoretical_profile(&link, &grid.z_km)?;
    let outcomes: Vec<Result<FrameOutcome>> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (tx, rx))| process_frame(tx, rx, i, &link, &grid, bandwidth_hz, est, true))
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    combine(outcomes, grid, oracle, est)
}

/// `rx` with every rail multiplied by `c`.
pub fn scale_signal(signal: &Signal<f64>, c: Complex<f64>) -> Result<Signal<f64>> {
    let rails = signal
        .rails()
        .iter()
        .map(|r| r.iter().map(|a| a * c).collect())
        .collect();
    signal.from_rails(rails, signal.sample_period())
}
