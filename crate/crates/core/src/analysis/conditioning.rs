//! Conditioning of the perturbation matrix and the stability metric
//! `1/(|β₂|·BW²·Δz)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::columns::{ColumnBuilder, ColumnOptions, PositionGrid, StackedMatrix};
use crate::estimator::solve::cond_stability_threshold;
use crate::linalg::{singular_condition, singular_values, spd_condition, symmetric_eigenvalues, SymMatrix};
use crate::link::{Link, LinkSpec, SpanSpec};
use crate::signal::{generate_source, ModulationFormat, Signal, SourceSpec};
use crate::Real;

/// Metric value above which estimation is predicted to be unstable.
pub const STABILITY_METRIC_LIMIT: f64 = 12.84;

/// Dense SVD is used while `rows·K` stays below this many elements.
pub const DENSE_SVD_BUDGET: usize = 1 << 24;

/// `1/(|β₂|·BW²·Δz)` with β₂ in ps²/km, BW in GHz and Δz in km. Infinite
/// without dispersion.
pub fn stability_metric(beta2_ps2_per_km: f64, bw_ghz: f64, dz_km: f64) -> f64 {
    let bw_thz = bw_ghz * 1e-3;
    let d = beta2_ps2_per_km.abs() * bw_thz * bw_thz * dz_km;
    if d > 0.0 {
        1.0 / d
    } else {
        f64::INFINITY
    }
}

/// How `cond(G)` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionSource {
    /// Singular values of the materialized matrix.
    DenseSvd,
    /// Square root of the eigenvalue ratio of the Gram matrix.
    Gram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditioningReport {
    pub metric: f64,
    /// σ_max/σ_min of `G` acting on real coefficient vectors (the matrix the
    /// solver inverts is its Gram matrix `Re[G†G]`).
    pub cond_g: f64,
    /// σ_max/σ_min of `G` as a complex matrix, from `G†G`.
    pub cond_g_complex: f64,
    pub source: ConditionSource,
    pub k: usize,
    pub dz_km: f64,
    pub bw_ghz: f64,
    pub beta2_ps2_per_km: f64,
    pub format: Option<ModulationFormat>,
    pub stable_predicted: bool,
    /// `cond_g` above 10^4.3.
    pub above_threshold: bool,
}

/// Limits a report is judged against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityLimits {
    #[serde(default = "default_metric_limit")]
    pub metric_limit: f64,
    #[serde(default = "cond_stability_threshold")]
    pub cond_threshold: f64,
}

fn default_metric_limit() -> f64 {
    STABILITY_METRIC_LIMIT
}

impl Default for StabilityLimits {
    fn default() -> Self {
        Self {
            metric_limit: STABILITY_METRIC_LIMIT,
            cond_threshold: cond_stability_threshold(),
        }
    }
}

impl ConditioningReport {
    pub fn new(
        cond_g: f64,
        cond_g_complex: f64,
        source: ConditionSource,
        k: usize,
        case: &SweepCase,
        limits: &StabilityLimits,
    ) -> Self {
        let metric = stability_metric(case.beta2_ps2_per_km, case.bw_ghz, case.dz_km);
        Self {
            metric,
            cond_g,
            cond_g_complex,
            source,
            k,
            dz_km: case.dz_km,
            bw_ghz: case.bw_ghz,
            beta2_ps2_per_km: case.beta2_ps2_per_km,
            format: Some(case.format),
            stable_predicted: metric < limits.metric_limit,
            above_threshold: !(cond_g <= limits.cond_threshold),
        }
    }
}

/// `(cond_g, cond_g_complex)` of a real-stacked `G` with the given rail
/// count. `cond_g` comes from the singular values of `G` while it fits the
/// dense budget, from its Gram matrix otherwise; the Gram route saturates
/// near `1/√(K·ε)`. The complex variant always uses the Gram matrix of
/// `[G | jG]`, the real embedding of `G†G`.
pub fn condition_of_stacked<T: Real>(g: &StackedMatrix<T>, rails: usize) -> ((f64, f64), ConditionSource) {
    let aug = {
        let j = g.times_j(rails);
        let mut data = g.data.clone();
        data.extend_from_slice(&j.data);
        StackedMatrix {
            rows: g.rows,
            cols: 2 * g.cols,
            data,
        }
    };
    let cc = gram_condition(&aug);
    if g.rows * g.cols <= DENSE_SVD_BUDGET {
        let c = singular_condition(&singular_values(&g.data, g.rows, g.cols));
        ((c, cc), ConditionSource::DenseSvd)
    } else {
        ((gram_condition(g), cc), ConditionSource::Gram)
    }
}

/// `√(λ_max/λ_min)` of `GᵀG`.
pub fn gram_condition<T: Real>(g: &StackedMatrix<T>) -> f64 {
    let k = g.cols;
    let mut gram = vec![T::zero(); k * k];
    T::gemm_tn(g.rows, k, k, T::one(), &g.data, &g.data, &mut gram);
    let mut m = SymMatrix::from_row_major(k, gram);
    m.symmetrize();
    spd_condition(&symmetric_eigenvalues(&m)).sqrt()
}

/// One point of a conditioning sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCase {
    pub beta2_ps2_per_km: f64,
    pub bw_ghz: f64,
    pub dz_km: f64,
    pub format: ModulationFormat,
    pub k: usize,
    pub n_symbols: usize,
    /// Samples per symbol of the simulated frame.
    pub sps: usize,
    pub seed: u64,
}

/// Builds the noiseless `G` of a single uniform span of length `K·Δz` for
/// `case` with an ideal rectangular spectrum.
pub fn sweep_matrix(case: &SweepCase, opts: ColumnOptions) -> Result<(StackedMatrix<f64>, usize)> {
    if case.k < 2 {
        return Err(Error::InvalidParameter("sweep needs K ≥ 2".into()));
    }
    let length = case.k as f64 * case.dz_km;
    let mut span = SpanSpec::ssmf(length, 0.0);
    span.beta2_ps2_per_km = case.beta2_ps2_per_km;
    let link = Link::<f64>::from_spec(&LinkSpec {
        spans: vec![span],
        amplifiers: vec![],
        point_losses: vec![],
        tx_power_dbm: None,
    })?;
    let source = SourceSpec::new(case.format, case.bw_ghz, 0.0, case.seed);
    let tx: Signal<f64> = generate_source::<f64>(&source, case.n_symbols, case.sps)?.field.into();
    let grid = PositionGrid::uniform(length, case.dz_km, 0.0)?;
    let builder = ColumnBuilder::new(&tx, &link, &grid, opts)?;
    let g = builder.stacked(0..tx.len());
    Ok((g, builder.rail_count()))
}

/// Conditioning report for every case, in case order.
pub fn condition_sweep(
    cases: &[SweepCase],
    opts: ColumnOptions,
    limits: &StabilityLimits,
) -> Result<Vec<ConditioningReport>> {
    let reports: Vec<Result<ConditioningReport>> = cases
        .par_iter()
        .map(|c| {
            let (g, rails) = sweep_matrix(c, opts)?;
            let ((cg, cc), src) = condition_of_stacked(&g, rails);
            Ok(ConditioningReport::new(cg, cc, src, g.cols, c, limits))
        })
        .collect();
    reports.into_iter().collect()
}

/// The cartesian product of the axes, β₂ outermost.
pub fn sweep_grid(
    beta2_ps2_per_km: &[f64],
    bw_ghz: &[f64],
    dz_km: &[f64],
    template: SweepCase,
) -> Vec<SweepCase> {
    let mut out = Vec::new();
    for &b in beta2_ps2_per_km {
        for &w in bw_ghz {
            for &d in dz_km {
                out.push(SweepCase {
                    beta2_ps2_per_km: b,
                    bw_ghz: w,
                    dz_km: d,
                    ..template
                });
            }
        }
    }
    out
}

/// Spearman rank correlation with average ranks for ties. Infinite values
/// rank above every finite one.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let rx = ranks(x);
    let ry = ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            out[t] = r;
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_values() {
        assert!((stability_metric(-21.6, 128.0, 0.25) - 11.30).abs() < 0.01);
        assert!((stability_metric(-21.6, 128.0, 0.2) - 14.13).abs() < 0.01);
        assert_eq!(stability_metric(0.0, 128.0, 0.2), f64::INFINITY);
    }

    #[test]
    fn orthogonal_columns_have_unit_condition() {
        let mut data = vec![0.0; 8 * 3];
        data[0] = 2.0;
        data[8 + 3] = 2.0;
        data[16 + 6] = 2.0;
        let g = StackedMatrix { rows: 8, cols: 3, data };
        assert!((gram_condition(&g) - 1.0).abs() < 1e-12);
        let ((c, _), src) = condition_of_stacked(&g, 1);
        assert_eq!(src, ConditionSource::DenseSvd);
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn complex_condition_is_at_least_real() {
        let case = SweepCase {
            beta2_ps2_per_km: -21.6,
            bw_ghz: 64.0,
            dz_km: 2.0,
            format: ModulationFormat::Gaussian,
            k: 12,
            n_symbols: 512,
            sps: 2,
            seed: 3,
        };
        let r = &condition_sweep(&[case], ColumnOptions::default(), &StabilityLimits::default()).unwrap()[0];
        assert!(r.cond_g >= 1.0 && r.cond_g_complex >= r.cond_g * (1.0 - 1e-9));
        assert!(r.stable_predicted);
        assert_eq!(r.k, 12);
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
        assert!((spearman(&[1.0, 2.0, 3.0], &[1.0, 2.0, f64::INFINITY]) - 1.0).abs() < 1e-12);
    }
}
