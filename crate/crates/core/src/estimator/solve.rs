//! Least-squares, correlation-method and augmented solutions of an
//! accumulated system.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::profile::{ConditionSummary, ProfileEstimate};
use crate::estimator::system::{unembed, AugmentedSystem, Method, PerturbationSystem};
use crate::linalg::{solve_refined, spd_condition, symmetric_eigenvalues, PivotedLdl, SymMatrix};
use crate::Real;

/// σ_max/σ_min of `G` above which estimation is expected to break down.
pub fn cond_stability_threshold() -> f64 {
    10f64.powf(4.3)
}

pub const SINGULAR_CONDITION_LIMIT: f64 = 1e12;

pub const MIN_SCALING_MAGNITUDE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveOptions {
    /// Tikhonov term added to the diagonal, relative to the mean diagonal
    /// of the normal matrix. 0 disables it.
    #[serde(default)]
    pub ridge: f64,
    /// Condition estimate of `G` above which the system is refused.
    #[serde(default = "default_singular")]
    pub singular_limit: f64,
    /// Condition estimate of `G` above which the result is flagged unstable.
    #[serde(default = "cond_stability_threshold")]
    pub cond_threshold: f64,
}

fn default_singular() -> f64 {
    SINGULAR_CONDITION_LIMIT
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            ridge: 0.0,
            singular_limit: SINGULAR_CONDITION_LIMIT,
            cond_threshold: cond_stability_threshold(),
        }
    }
}

/// Condition summary of a symmetric positive semi-definite normal matrix.
pub fn normal_condition<T: Real>(normal: &SymMatrix<T>, cond_threshold: f64) -> ConditionSummary {
    let ev = symmetric_eigenvalues(normal);
    let c = spd_condition(&ev);
    let cond_g = c.sqrt();
    ConditionSummary {
        normal_condition: c,
        cond_g,
        unstable: !(cond_g <= cond_threshold),
    }
}

fn solve_symmetric<T: Real>(normal: &SymMatrix<T>, rhs: &[T], opts: &SolveOptions) -> Result<(Vec<T>, ConditionSummary)> {
    let mut a = normal.clone();
    if opts.ridge > 0.0 {
        let n = a.n();
        let mean_diag = (0..n).map(|i| a.get(i, i)).sum::<T>() / T::from_usize(n).unwrap();
        a.add_diagonal(T::lit(opts.ridge) * mean_diag);
    }
    let cond = normal_condition(&a, opts.cond_threshold);
    if !(cond.cond_g <= opts.singular_limit) {
        return Err(Error::Singular {
            condition: cond.cond_g,
            regime: "perturbation matrix is rank deficient; columns are (nearly) linearly dependent, \
                     e.g. zero or mirrored dispersion, or Δz far below the resolution limit"
                .into(),
        });
    }
    let ldl = PivotedLdl::factor(&a);
    let x = solve_refined(&a, &ldl, rhs, 1);
    Ok((x, cond))
}

/// `γ̂′ = (Re[G†G])⁻¹ Re[G†A₁]`.
pub fn solve_ls<T: Real>(system: &PerturbationSystem<T>, opts: &SolveOptions) -> Result<ProfileEstimate> {
    if system.frames == 0 {
        return Err(Error::InvalidParameter("no frames accumulated".into()));
    }
    let (x, cond) = solve_symmetric(&system.normal, &system.rhs, opts)?;
    let mut est = ProfileEstimate::from_gamma_prime(
        Method::Ls,
        system.grid.z_km.clone(),
        system.grid.dz_km,
        x.iter().map(|v| v.to_f64_lossy()).collect(),
        system.gamma_per_w_km.clone(),
        system.dual_pol,
        system.frames,
    );
    est.condition = Some(cond);
    Ok(est)
}

/// Correlation-method profile `Re[G†A₁]` (no inverse, arbitrary units).
pub fn solve_cm<T: Real>(system: &PerturbationSystem<T>) -> ProfileEstimate {
    ProfileEstimate::from_gamma_prime(
        Method::Cm,
        system.grid.z_km.clone(),
        system.grid.dz_km,
        system.rhs.iter().map(|v| v.to_f64_lossy()).collect(),
        system.gamma_per_w_km.clone(),
        system.dual_pol,
        system.frames,
    )
}

/// Solves the augmented system and returns `γ̂′ = γ̂″[0..K]/ĉ` with `ĉ`.
pub fn solve_ls_augmented<T: Real>(
    system: &AugmentedSystem<T>,
    opts: &SolveOptions,
) -> Result<(ProfileEstimate, Complex<f64>)> {
    if system.frames == 0 {
        return Err(Error::InvalidParameter("no frames accumulated".into()));
    }
    let (x, cond) = solve_symmetric(&system.normal, &system.rhs, opts)?;
    let g2 = unembed(&x);
    let k = system.grid.len();
    let c = g2[k];
    if !(c.norm() >= MIN_SCALING_MAGNITUDE) {
        return Err(Error::DegenerateScaling(c.norm()));
    }
    let gp: Vec<f64> = g2[..k].iter().map(|g| (g / c).re).collect();
    let mut est = ProfileEstimate::from_gamma_prime(
        Method::LsAugmented,
        system.grid.z_km.clone(),
        system.grid.dz_km,
        gp,
        system.gamma_per_w_km.clone(),
        system.dual_pol,
        system.frames,
    );
    est.condition = Some(cond);
    est.scaling = Some([c.re, c.im]);
    Ok((est, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::columns::{PositionGrid, StackedMatrix};
    use rand::{Rng, SeedableRng};

    fn random_system(rows: usize, k: usize, seed: u64) -> (PerturbationSystem<f64>, StackedMatrix<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = StackedMatrix {
            rows,
            cols: k,
            data: (0..rows * k).map(|_| rng.random::<f64>() - 0.5).collect(),
        };
        let grid = PositionGrid::uniform(k as f64, 1.0, 0.0).unwrap();
        (PerturbationSystem::new(grid, vec![1.3; k], false).unwrap(), g)
    }

    #[test]
    fn exact_recovery_and_zero_rhs() {
        let (mut s, g) = random_system(200, 8, 1);
        let truth: Vec<f64> = (0..8).map(|i| 1e-3 * (i as f64 + 1.0)).collect();
        let a1 = g.mul_vec(&truth);
        s.accumulate(&g, &a1).unwrap();
        let est = solve_ls(&s, &SolveOptions::default()).unwrap();
        for (a, b) in est.gamma_prime.iter().zip(&truth) {
            assert!(((a - b) / b).abs() < 1e-9);
        }
        assert!(!est.condition.unwrap().unstable);

        let (mut s, g) = random_system(50, 4, 2);
        s.accumulate(&g, &[0.0; 50]).unwrap();
        assert!(solve_ls(&s, &SolveOptions::default())
            .unwrap()
            .gamma_prime
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn refuses_rank_deficient() {
        let (mut s, mut g) = random_system(30, 3, 3);
        let c0 = g.column(0).to_vec();
        g.data[60..90].copy_from_slice(&c0);
        s.accumulate(&g, &[1.0; 30]).unwrap();
        assert!(matches!(solve_ls(&s, &SolveOptions::default()), Err(Error::Singular { .. })));
        // a ridge makes it solvable
        let opts = SolveOptions {
            ridge: 1e-3,
            ..Default::default()
        };
        assert!(solve_ls(&s, &opts).is_ok());
    }

    #[test]
    fn no_frames_is_an_error() {
        let (s, _) = random_system(10, 2, 4);
        assert!(solve_ls(&s, &SolveOptions::default()).is_err());
    }

    #[test]
    fn cm_times_inverse_is_ls() {
        let (mut s, g) = random_system(100, 6, 5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let a1: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
        s.accumulate(&g, &a1).unwrap();
        let ls = solve_ls(&s, &SolveOptions::default()).unwrap();
        let cm = solve_cm(&s);
        let back = s.normal.mul_vec(&ls.gamma_prime);
        for (a, b) in back.iter().zip(&cm.gamma_prime) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1e-12));
        }
        assert!(cm.arbitrary_units);
    }
}
