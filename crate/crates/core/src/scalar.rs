//! Floating-point abstraction shared by every numerical routine in the crate.

use std::collections::HashMap;
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::sync::{Arc, Mutex, OnceLock};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};
use rustfft::{Fft, FftNum, FftPlanner};

/// Real scalar used by the simulator and the estimator: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + FftNum
    + Default
    + Sum
    + Display
    + LowerExp
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Machine epsilon.
    const EPS: Self;

    /// Lossless-enough conversion from an `f64` literal.
    fn lit(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    /// `c += alpha * aᵀ b` where `a` is `rows × m` and `b` is `rows × n`, both
    /// column-major with leading dimension `rows`; `c` is row-major `m × n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm_tn(rows: usize, m: usize, n: usize, alpha: Self, a: &[Self], b: &[Self], c: &mut [Self]);

    /// Process-wide cache of FFT plans for this scalar type.
    fn plan_cache() -> &'static PlanCache<Self>;
}

macro_rules! impl_real {
    ($t:ty, $gemm:path, $cache:ident) => {
        static $cache: OnceLock<PlanCache<$t>> = OnceLock::new();

        impl Real for $t {
            const EPS: Self = <$t>::EPSILON;

            #[inline]
            fn lit(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }

            fn gemm_tn(
                rows: usize,
                m: usize,
                n: usize,
                alpha: Self,
                a: &[Self],
                b: &[Self],
                c: &mut [Self],
            ) {
                assert!(a.len() >= rows * m && b.len() >= rows * n && c.len() >= m * n);
                if rows == 0 || m == 0 || n == 0 {
                    return;
                }
                // SAFETY: bounds checked above; strides describe aᵀ (m × rows),
                // b (rows × n) and row-major c (m × n) inside their slices.
                unsafe {
                    $gemm(
                        m,
                        rows,
                        n,
                        alpha,
                        a.as_ptr(),
                        rows as isize,
                        1,
                        b.as_ptr(),
                        1,
                        rows as isize,
                        1.0,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }

            fn plan_cache() -> &'static PlanCache<Self> {
                $cache.get_or_init(PlanCache::default)
            }
        }
    };
}

impl_real!(f64, matrixmultiply::dgemm, F64_PLANS);
impl_real!(f32, matrixmultiply::sgemm, F32_PLANS);

/// Forward and inverse transforms planned for one length.
pub struct FftPair<T: Real> {
    pub forward: Arc<dyn Fft<T>>,
    pub inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> FftPair<T> {
    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }
}

/// Transform plans keyed by length. Internally synchronized.
pub struct PlanCache<T: Real> {
    planner: Mutex<FftPlanner<T>>,
    plans: Mutex<HashMap<usize, Arc<FftPair<T>>>>,
}

impl<T: Real> Default for PlanCache<T> {
    fn default() -> Self {
        Self {
            planner: Mutex::new(FftPlanner::new()),
            plans: Mutex::new(HashMap::new()),
        }
    }
}

impl<T: Real> PlanCache<T> {
    pub fn get(&self, n: usize) -> Arc<FftPair<T>> {
        if let Some(p) = self.plans.lock().expect("plan cache poisoned").get(&n) {
            return p.clone();
        }
        let pair = {
            let mut planner = self.planner.lock().expect("planner poisoned");
            Arc::new(FftPair {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            })
        };
        self.plans
            .lock()
            .expect("plan cache poisoned")
            .entry(n)
            .or_insert(pair)
            .clone()
    }
}

/// Shorthand for `T::plan_cache().get(n)`.
pub fn fft_plan<T: Real>(n: usize) -> Arc<FftPair<T>> {
    T::plan_cache().get(n)
}
