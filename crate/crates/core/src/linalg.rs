//! Dense linear algebra for the K×K normal equations and the conditioning
//! analysis: pivoted LDLᵀ, symmetric eigenvalues (Householder
//! tridiagonalization + implicit QL), Householder QR and one-sided Jacobi
//! singular values.

use crate::Real;

/// Dense symmetric matrix, row-major storage of the full square.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T: Real> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> SymMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    /// Builds from row-major data; the result is symmetrized as ½(A + Aᵀ).
    pub fn from_row_major(n: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), n * n);
        let mut m = Self { n, data };
        m.symmetrize();
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    pub fn symmetrize(&mut self) {
        let n = self.n;
        let half = T::lit(0.5);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = (self.data[i * n + j] + self.data[j * n + i]) * half;
                self.data[i * n + j] = v;
                self.data[j * n + i] = v;
            }
        }
    }

    /// max |A − Aᵀ| / max |A|.
    pub fn asymmetry(&self) -> T {
        let n = self.n;
        let mut num = T::zero();
        let mut den = T::zero();
        for i in 0..n {
            for j in 0..n {
                num = num.max((self.get(i, j) - self.get(j, i)).abs());
                den = den.max(self.get(i, j).abs());
            }
        }
        if den == T::zero() {
            T::zero()
        } else {
            num / den
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.n, other.n);
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += *b);
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|a| *a *= s);
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        self.data
            .chunks(self.n)
            .map(|row| row.iter().zip(x).map(|(a, b)| *a * *b).sum())
            .collect()
    }

    pub fn add_diagonal(&mut self, v: T) {
        for i in 0..self.n {
            self.data[i * self.n + i] += v;
        }
    }
}

/// `P A Pᵀ = L D Lᵀ` with symmetric (largest-diagonal) pivoting, intended for
/// symmetric positive semi-definite matrices.
#[derive(Debug, Clone)]
pub struct PivotedLdl<T: Real> {
    n: usize,
    perm: Vec<usize>,
    /// Unit lower-triangular factor, row-major.
    l: Vec<T>,
    d: Vec<T>,
}

impl<T: Real> PivotedLdl<T> {
    pub fn factor(a: &SymMatrix<T>) -> Self {
        let n = a.n();
        let mut w = a.as_slice().to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut d = vec![T::zero(); n];
        for k in 0..n {
            let mut p = k;
            for i in (k + 1)..n {
                if w[i * n + i] > w[p * n + p] {
                    p = i;
                }
            }
            if p != k {
                for j in 0..n {
                    w.swap(k * n + j, p * n + j);
                }
                for i in 0..n {
                    w.swap(i * n + k, i * n + p);
                }
                perm.swap(k, p);
            }
            let dk = w[k * n + k];
            d[k] = dk;
            if dk <= T::zero() {
                // Remaining block is numerically zero or indefinite.
                for i in (k + 1)..n {
                    w[i * n + k] = T::zero();
                }
                continue;
            }
            for i in (k + 1)..n {
                w[i * n + k] /= dk;
            }
            for i in (k + 1)..n {
                let lik = w[i * n + k] * dk;
                if lik == T::zero() {
                    continue;
                }
                for j in (k + 1)..=i {
                    let v = w[j * n + k];
                    w[i * n + j] -= lik * v;
                }
            }
            // keep the upper triangle consistent for pivot search
            for i in (k + 1)..n {
                for j in (k + 1)..i {
                    w[j * n + i] = w[i * n + j];
                }
            }
        }
        let mut l = vec![T::zero(); n * n];
        for i in 0..n {
            l[i * n + i] = T::one();
            for j in 0..i {
                l[i * n + j] = w[i * n + j];
            }
        }
        Self { n, perm, l, d }
    }

    pub fn pivots(&self) -> &[T] {
        &self.d
    }

    /// Number of pivots above `tol · max pivot`.
    pub fn rank(&self, tol: T) -> usize {
        let dmax = self.d.iter().cloned().fold(T::zero(), T::max);
        self.d.iter().filter(|&&x| x > tol * dmax).count()
    }

    /// Solves `A x = b`. Zero or negative pivots are treated as a null space
    /// (the corresponding component is set to zero).
    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut y: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s -= self.l[i * n + j] * y[j];
            }
            y[i] = s;
        }
        for i in 0..n {
            y[i] = if self.d[i] > T::zero() { y[i] / self.d[i] } else { T::zero() };
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in (i + 1)..n {
                s -= self.l[j * n + i] * y[j];
            }
            y[i] = s;
        }
        let mut x = vec![T::zero(); n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }
}

/// Solves `A x = b` through [`PivotedLdl`] followed by `refinements` rounds
/// of iterative refinement.
pub fn solve_refined<T: Real>(a: &SymMatrix<T>, ldl: &PivotedLdl<T>, b: &[T], refinements: usize) -> Vec<T> {
    let mut x = ldl.solve(b);
    for _ in 0..refinements {
        let ax = a.mul_vec(&x);
        let r: Vec<T> = b.iter().zip(&ax).map(|(bi, ai)| *bi - *ai).collect();
        let dx = ldl.solve(&r);
        x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += *di);
    }
    x
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues<T: Real>(a: &SymMatrix<T>) -> Vec<T> {
    let n = a.n();
    if n == 0 {
        return Vec::new();
    }
    let mut w = a.as_slice().to_vec();
    let (mut d, mut e) = tridiagonalize(&mut w, n);
    tridiagonal_ql(&mut d, &mut e);
    d.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    d
}

/// Householder reduction to tridiagonal form (eigenvalues only). Returns the
/// diagonal and the sub-diagonal (`e[0] = 0`, `e[i]` couples `i−1` and `i`).
fn tridiagonalize<T: Real>(a: &mut [T], n: usize) -> (Vec<T>, Vec<T>) {
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    let idx = |i: usize, j: usize| i * n + j;
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = T::zero();
        if l > 0 {
            let scale: T = (0..=l).map(|k| a[idx(i, k)].abs()).sum();
            if scale == T::zero() {
                e[i] = a[idx(i, l)];
            } else {
                for k in 0..=l {
                    a[idx(i, k)] /= scale;
                    h += a[idx(i, k)] * a[idx(i, k)];
                }
                let f = a[idx(i, l)];
                let g = if f >= T::zero() { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[idx(i, l)] = f - g;
                let mut f = T::zero();
                for j in 0..=l {
                    let mut g = T::zero();
                    for k in 0..=j {
                        g += a[idx(j, k)] * a[idx(i, k)];
                    }
                    for k in (j + 1)..=l {
                        g += a[idx(k, j)] * a[idx(i, k)];
                    }
                    e[j] = g / h;
                    f += e[j] * a[idx(i, j)];
                }
                let hh = f / (h + h);
                for j in 0..=l {
                    let f = a[idx(i, j)];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        a[idx(j, k)] -= f * e[k] + g * a[idx(i, k)];
                    }
                }
            }
        } else {
            e[i] = a[idx(i, l)];
        }
        d[i] = h;
    }
    e[0] = T::zero();
    for i in 0..n {
        d[i] = a[idx(i, i)];
    }
    (d, e)
}

/// Implicit QL on a symmetric tridiagonal matrix; eigenvalues land in `d`.
fn tridiagonal_ql<T: Real>(d: &mut [T], e: &mut [T]) {
    let n = d.len();
    if n < 2 {
        return;
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    let two = T::lit(2.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::EPS * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 200 {
                break;
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + if g >= T::zero() { r.abs() } else { -r.abs() });
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
}

/// 2-norm condition number `λ_max / λ_min` of a symmetric positive
/// semi-definite matrix; `+∞` when the smallest eigenvalue is not resolvable
/// above rounding.
pub fn spd_condition<T: Real>(eigenvalues: &[T]) -> f64 {
    let (Some(&lo), Some(&hi)) = (eigenvalues.first(), eigenvalues.last()) else {
        return f64::INFINITY;
    };
    let hi = hi.to_f64_lossy();
    let lo = lo.to_f64_lossy();
    let n = eigenvalues.len() as f64;
    if !(hi > 0.0) || lo <= hi * n * T::EPS.to_f64_lossy() {
        return f64::INFINITY;
    }
    hi / lo
}

/// Upper-triangular `R` (row-major `n × n`) of the Householder QR of a
/// column-major `rows × n` matrix (`rows ≥ n`).
pub fn householder_r<T: Real>(a: &[T], rows: usize, n: usize) -> Vec<T> {
    assert!(rows >= n, "QR needs rows ≥ columns");
    assert_eq!(a.len(), rows * n);
    let mut w = a.to_vec();
    let col = |j: usize| j * rows;
    for k in 0..n {
        let ck = col(k);
        let norm: T = w[ck + k..ck + rows].iter().map(|x| *x * *x).sum::<T>().sqrt();
        if norm == T::zero() {
            continue;
        }
        let alpha = if w[ck + k] > T::zero() { -norm } else { norm };
        // v = x − αe₁, stored in place
        w[ck + k] -= alpha;
        let vnorm2: T = w[ck + k..ck + rows].iter().map(|x| *x * *x).sum();
        if vnorm2 == T::zero() {
            w[ck + k] = alpha;
            continue;
        }
        for j in (k + 1)..n {
            let cj = col(j);
            let dot: T = (k..rows).map(|i| w[ck + i] * w[cj + i]).sum();
            let f = (dot + dot) / vnorm2;
            for i in k..rows {
                let v = w[ck + i];
                w[cj + i] -= f * v;
            }
        }
        w[ck + k] = alpha;
    }
    let mut r = vec![T::zero(); n * n];
    for j in 0..n {
        for i in 0..=j {
            r[i * n + j] = w[col(j) + i];
        }
    }
    r
}

/// Singular values (descending) of a row-major `n × n` matrix by one-sided
/// Jacobi rotations.
pub fn jacobi_singular_values<T: Real>(a: &[T], n: usize) -> Vec<T> {
    assert_eq!(a.len(), n * n);
    // work on columns: store column-major
    let mut u = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            u[j * n + i] = a[i * n + j];
        }
    }
    let tol = T::EPS * T::lit(n as f64).sqrt();
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for i in 0..n {
                    let up = u[p * n + i];
                    let uq = u[q * n + i];
                    alpha += up * up;
                    beta += uq * uq;
                    gamma += up * uq;
                }
                if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let t = if zeta == T::zero() { T::one() } else { t };
                let c = (T::one() + t * t).sqrt().recip();
                let s = c * t;
                for i in 0..n {
                    let up = u[p * n + i];
                    let uq = u[q * n + i];
                    u[p * n + i] = c * up - s * uq;
                    u[q * n + i] = s * up + c * uq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sv: Vec<T> = (0..n)
        .map(|j| u[j * n..(j + 1) * n].iter().map(|x| *x * *x).sum::<T>().sqrt())
        .collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

/// Singular values (descending) of a column-major `rows × n` real matrix.
pub fn singular_values<T: Real>(a: &[T], rows: usize, n: usize) -> Vec<T> {
    if rows >= n {
        jacobi_singular_values(&householder_r(a, rows, n), n)
    } else {
        // transpose to make it tall
        let mut t = vec![T::zero(); rows * n];
        for j in 0..n {
            for i in 0..rows {
                t[i * n + j] = a[j * rows + i];
            }
        }
        jacobi_singular_values(&householder_r(&t, n, rows), rows)
    }
}

/// σ_max/σ_min from descending singular values; `+∞` when σ_min vanishes.
pub fn singular_condition<T: Real>(sv: &[T]) -> f64 {
    let (Some(&hi), Some(&lo)) = (sv.first(), sv.last()) else {
        return f64::INFINITY;
    };
    let (hi, lo) = (hi.to_f64_lossy(), lo.to_f64_lossy());
    if !(lo > 0.0) {
        return f64::INFINITY;
    }
    hi / lo
}
