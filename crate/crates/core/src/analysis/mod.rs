//! Conditioning, resolution and loss-event analysis of estimated profiles.

pub mod anomaly;
pub mod conditioning;
pub mod profile;
pub mod resolution;

pub use anomaly::{
    detect_anomalies, detect_in, fit_step, nominal_tilt, AnomalyEvent, AnomalyOptions, AnomalyReport, SigmaSource,
    StepFit, TiltMode,
};
pub use conditioning::{
    condition_of_stacked, condition_sweep, gram_condition, spearman, stability_metric, sweep_grid, sweep_matrix, ConditionSource,
    ConditioningReport, StabilityLimits, SweepCase, STABILITY_METRIC_LIMIT,
};
pub use profile::{
    dead_zone_mask, derivative_of, find_peaks, profile_derivative, profile_mean_offset, profile_rms_error,
    ProfileDerivative, DEAD_ZONE_KM,
};
pub use resolution::{resolution_bound, ResolutionBound, RESOLUTION_CONSTANT};
