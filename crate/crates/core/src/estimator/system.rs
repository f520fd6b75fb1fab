//! Normal equations of the perturbation model, accumulated frame by frame.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::columns::{stacked_rows, PositionGrid, StackedMatrix};
use crate::linalg::SymMatrix;
use crate::Real;

/// `Re[G†G]`, `Re[G†A₁]` and `‖A₁‖²` summed over the accumulated frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSystem<T: Real> {
    pub grid: PositionGrid,
    /// γ at each grid position, 1/(W·km); converts γ′ to power.
    pub gamma_per_w_km: Vec<f64>,
    pub dual_pol: bool,
    pub normal: SymMatrix<T>,
    pub rhs: Vec<T>,
    pub a1_energy: f64,
    pub frames: usize,
    pub rows: usize,
}

impl<T: Real> PerturbationSystem<T> {
    pub fn new(grid: PositionGrid, gamma_per_w_km: Vec<f64>, dual_pol: bool) -> Result<Self> {
        if gamma_per_w_km.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} γ values for {} positions",
                gamma_per_w_km.len(),
                grid.len()
            )));
        }
        let k = grid.len();
        Ok(Self {
            grid,
            gamma_per_w_km,
            dual_pol,
            normal: SymMatrix::zeros(k),
            rhs: vec![T::zero(); k],
            a1_energy: 0.0,
            frames: 0,
            rows: 0,
        })
    }

    pub fn k(&self) -> usize {
        self.grid.len()
    }

    /// Adds one frame given its real-stacked `G` and `A₁`.
    pub fn accumulate(&mut self, g: &StackedMatrix<T>, a1: &[T]) -> Result<()> {
        if g.cols != self.k() {
            return Err(Error::GridMismatch(format!("{} columns for K = {}", g.cols, self.k())));
        }
        if a1.len() != g.rows {
            return Err(Error::GridMismatch(format!("A₁ has {} rows, G has {}", a1.len(), g.rows)));
        }
        let k = self.k();
        let mut gram = vec![T::zero(); k * k];
        T::gemm_tn(g.rows, k, k, T::one(), &g.data, &g.data, &mut gram);
        let mut rhs = vec![T::zero(); k];
        T::gemm_tn(g.rows, k, 1, T::one(), &g.data, a1, &mut rhs);
        let frame = SymMatrix::from_row_major(k, gram);
        self.normal.add_assign(&frame);
        self.rhs.iter_mut().zip(&rhs).for_each(|(a, b)| *a += *b);
        self.a1_energy += a1.iter().map(|x| x.to_f64_lossy().powi(2)).sum::<f64>();
        self.frames += 1;
        self.rows += g.rows;
        Ok(())
    }

    /// Adds another system built on the same grid.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        self.check_compatible(other)?;
        self.normal.add_assign(&other.normal);
        self.rhs.iter_mut().zip(&other.rhs).for_each(|(a, b)| *a += *b);
        self.a1_energy += other.a1_energy;
        self.frames += other.frames;
        self.rows += other.rows;
        Ok(())
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.dual_pol != other.dual_pol {
            return Err(Error::GridMismatch("systems built on different grids".into()));
        }
        Ok(())
    }

    /// `I(γ′) = ‖A₁ − Gγ′‖² = ‖A₁‖² − 2γ′ᵀRe[G†A₁] + γ′ᵀRe[G†G]γ′`.
    pub fn cost(&self, gamma: &[T]) -> f64 {
        let ng = self.normal.mul_vec(gamma);
        let quad: f64 = gamma.iter().zip(&ng).map(|(a, b)| (*a * *b).to_f64_lossy()).sum();
        let lin: f64 = gamma.iter().zip(&self.rhs).map(|(a, b)| (*a * *b).to_f64_lossy()).sum();
        self.a1_energy - 2.0 * lin + quad
    }

    /// `∇I = 2Re[G†G]γ′ − 2Re[G†A₁]`.
    pub fn gradient(&self, gamma: &[T]) -> Vec<T> {
        let two = T::lit(2.0);
        self.normal
            .mul_vec(gamma)
            .iter()
            .zip(&self.rhs)
            .map(|(a, b)| two * (*a - *b))
            .collect()
    }
}

/// Complex system for `rx ≈ c·(A₀ + Gγ′)` with `H = [G A₀]` and unknown
/// `γ″ = c·[γ′ᵀ 1]ᵀ`, stored as the real embedding of `H†H` and `H†rx`:
/// unknowns `[Re γ″; Im γ″]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSystem<T: Real> {
    pub grid: PositionGrid,
    pub gamma_per_w_km: Vec<f64>,
    pub dual_pol: bool,
    pub normal: SymMatrix<T>,
    pub rhs: Vec<T>,
    pub frames: usize,
}

impl<T: Real> AugmentedSystem<T> {
    pub fn new(grid: PositionGrid, gamma_per_w_km: Vec<f64>, dual_pol: bool) -> Result<Self> {
        if gamma_per_w_km.len() != grid.len() {
            return Err(Error::GridMismatch("γ length differs from grid".into()));
        }
        let m = 2 * (grid.len() + 1);
        Ok(Self {
            grid,
            gamma_per_w_km,
            dual_pol,
            normal: SymMatrix::zeros(m),
            rhs: vec![T::zero(); m],
            frames: 0,
        })
    }

    /// Adds one frame from the stacked `G`, `A₀` and `rx` (same window).
    pub fn accumulate(&mut self, g: &StackedMatrix<T>, a0: &[T], rx: &[T]) -> Result<()> {
        let k = self.grid.len();
        if g.cols != k || a0.len() != g.rows || rx.len() != g.rows {
            return Err(Error::GridMismatch("augmented frame does not match the grid".into()));
        }
        let rails = if self.dual_pol { 2 } else { 1 };
        debug_assert_eq!(g.rows % stacked_rows(rails, 1), 0);
        let mut h = g.data.clone();
        h.extend_from_slice(a0);
        let h = StackedMatrix {
            rows: g.rows,
            cols: k + 1,
            data: h,
        };
        let mut full = h.data.clone();
        full.extend_from_slice(&h.times_j(rails).data);
        let m = 2 * (k + 1);
        let mut gram = vec![T::zero(); m * m];
        T::gemm_tn(g.rows, m, m, T::one(), &full, &full, &mut gram);
        let mut rhs = vec![T::zero(); m];
        T::gemm_tn(g.rows, m, 1, T::one(), &full, rx, &mut rhs);
        self.normal.add_assign(&SymMatrix::from_row_major(m, gram));
        self.rhs.iter_mut().zip(&rhs).for_each(|(a, b)| *a += *b);
        self.frames += 1;
        Ok(())
    }
}

/// Estimation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "LS")]
    Ls,
    #[serde(rename = "CM")]
    Cm,
    #[serde(rename = "LS-augmented")]
    LsAugmented,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Ls => "LS",
            Method::Cm => "CM",
            Method::LsAugmented => "LS-augmented",
        })
    }
}

/// Splits `[Re; Im]` halves of the augmented solution into complex values.
pub(crate) fn unembed<T: Real>(x: &[T]) -> Vec<Complex<f64>> {
    let m = x.len() / 2;
    (0..m)
        .map(|i| Complex::new(x[i].to_f64_lossy(), x[m + i].to_f64_lossy()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(k: usize) -> PerturbationSystem<f64> {
        let grid = PositionGrid::uniform(k as f64, 1.0, 0.0).unwrap();
        PerturbationSystem::new(grid, vec![1.3; k], false).unwrap()
    }

    #[test]
    fn two_column_gram_by_hand() {
        // G = [[1, 2], [3, 4], [5, 6]] (already real-stacked), a1 = [1, 0, −1]
        let g = StackedMatrix {
            rows: 3,
            cols: 2,
            data: vec![1.0, 3.0, 5.0, 2.0, 4.0, 6.0],
        };
        let mut s = sys(2);
        s.accumulate(&g, &[1.0, 0.0, -1.0]).unwrap();
        assert_eq!(s.normal.as_slice(), &[35.0, 44.0, 44.0, 56.0]);
        assert_eq!(s.rhs, vec![-4.0, -4.0]);
        assert_eq!(s.a1_energy, 2.0);

        let once = s.clone();
        s.accumulate(&g, &[1.0, 0.0, -1.0]).unwrap();
        let mut twice = once.clone();
        twice.merge(&once).unwrap();
        assert_eq!(s, twice);
        assert_eq!(s.normal.as_slice(), &[70.0, 88.0, 88.0, 112.0]);
    }

    #[test]
    fn zero_frame_changes_nothing_but_counts() {
        let g = StackedMatrix {
            rows: 4,
            cols: 2,
            data: vec![0.0; 8],
        };
        let mut s = sys(2);
        s.accumulate(&g, &[0.0; 4]).unwrap();
        assert_eq!(s.normal, SymMatrix::zeros(2));
        assert_eq!(s.rhs, vec![0.0, 0.0]);
        assert!(s.accumulate(&g, &[0.0; 3]).is_err());
    }

    #[test]
    fn mismatched_grids_refuse_to_merge() {
        let mut a = sys(2);
        let b = sys(3);
        assert!(a.merge(&b).is_err());
    }
}
