//! Small direct solvers: tridiagonal elimination, dense LU with partial pivoting and band Cholesky.

// Index loops read closer to the textbook elimination formulas here.
#![allow(clippy::needless_range_loop)]

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Solves a tridiagonal system. `lower[i]` multiplies x[i-1] and `upper[i]` multiplies x[i+1] in row i.
pub fn solve_tridiagonal<T: Real>(lower: &[T], diag: &[T], upper: &[T], rhs: &[T]) -> Result<Vec<T>> {
    let n = diag.len();
    let mut c = vec![T::zero(); n];
    let mut d = vec![T::zero(); n];
    let mut beta = diag[0];
    if beta == T::zero() {
        return Err(Error::Singular("zero pivot in tridiagonal solve".into()));
    }
    c[0] = if n > 1 { upper[0] / beta } else { T::zero() };
    d[0] = rhs[0] / beta;
    for i in 1..n {
        beta = diag[i] - lower[i] * c[i - 1];
        if beta == T::zero() || !beta.is_finite() {
            return Err(Error::Singular(format!("pivot {i} vanished in tridiagonal solve")));
        }
        if i + 1 < n {
            c[i] = upper[i] / beta;
        }
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        let next = d[i + 1];
        d[i] -= c[i] * next;
    }
    Ok(d)
}

/// LU factorization PA = LU of a dense row-major matrix.
#[derive(Debug, Clone)]
pub struct DenseLu<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Real> DenseLu<T> {
    pub fn factor(mut a: Vec<T>, n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let tiny = scale * T::epsilon() * T::from_usize(n).unwrap();
        for k in 0..n {
            let (piv, val) = (k..n)
                .map(|i| (i, a[i * n + k].abs()))
                .fold((k, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(val > tiny) {
                return Err(Error::Singular(format!("pivot {k} below {tiny:?}")));
            }
            if piv != k {
                for j in 0..n {
                    a.swap(k * n + j, piv * n + j);
                }
                perm.swap(k, piv);
            }
            let p = a[k * n + k];
            for i in k + 1..n {
                let m = a[i * n + k] / p;
                a[i * n + k] = m;
                if m != T::zero() {
                    for j in k + 1..n {
                        let t = a[k * n + j];
                        a[i * n + j] -= m * t;
                    }
                }
            }
        }
        Ok(Self { n, lu: a, perm })
    }

    /// Solves A x = b.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }

    /// Solves A^T x = b.
    pub fn solve_transpose(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut w = b.to_vec();
        for i in 0..n {
            let mut s = w[i];
            for j in 0..i {
                s -= self.lu[j * n + i] * w[j];
            }
            w[i] = s / self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = w[i];
            for j in i + 1..n {
                s -= self.lu[j * n + i] * w[j];
            }
            w[i] = s;
        }
        let mut x = vec![T::zero(); n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = w[i];
        }
        x
    }
}

/// Cholesky factor of a symmetric positive definite band matrix with half-bandwidth `bw`.
/// Row i of the factor keeps the entries in columns i - bw ..= i.
#[derive(Debug, Clone)]
pub struct BandCholesky<T> {
    n: usize,
    bw: usize,
    l: Vec<T>,
}

impl<T: Real> BandCholesky<T> {
    /// `entry(i, j)` is queried for j in i - bw ..= i only.
    pub fn factor(n: usize, bw: usize, entry: impl Fn(usize, usize) -> T) -> Result<Self> {
        let w = bw + 1;
        let mut l = vec![T::zero(); n * w];
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut s = entry(i, j);
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= l[i * w + (k + bw - i)] * l[j * w + (k + bw - j)];
                }
                if j == i {
                    if !(s > T::zero()) {
                        return Err(Error::Singular(format!("matrix not positive definite at row {i}")));
                    }
                    l[i * w + bw] = s.sqrt();
                } else {
                    l[i * w + (j + bw - i)] = s / l[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, l })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[i * w + (k + bw - i)] * y[k];
            }
            y[i] = s / self.l[i * w + bw];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.l[k * w + (i + bw - k)] * y[k];
            }
            y[i] = s / self.l[i * w + bw];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matvec(a: &[f64], x: &[f64], n: usize) -> Vec<f64> {
        (0..n).map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum()).collect()
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let n = 7;
        let lower: Vec<f64> = (0..n).map(|i| -0.3 - 0.1 * i as f64).collect();
        let upper: Vec<f64> = (0..n).map(|i| -0.5 + 0.05 * i as f64).collect();
        let diag: Vec<f64> = (0..n).map(|i| 2.0 + 0.2 * i as f64).collect();
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = diag[i];
            if i > 0 {
                a[i * n + i - 1] = lower[i];
            }
            if i + 1 < n {
                a[i * n + i + 1] = upper[i];
            }
        }
        let r = matvec(&a, &x, n);
        for i in 0..n {
            assert!((r[i] - rhs[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn lu_solves_and_transposes() {
        let n = 5;
        let a: Vec<f64> = (0..n * n).map(|k| ((k * 7 % 11) as f64) - 5.0 + if k % (n + 1) == 0 { 0.5 } else { 0.0 }).collect();
        let lu = DenseLu::factor(a.clone(), n).unwrap();
        let b: Vec<f64> = (0..n).map(|i| 1.0 + i as f64).collect();
        let x = lu.solve(&b);
        let r = matvec(&a, &x, n);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-10);
        }
        let at: Vec<f64> = (0..n * n).map(|k| a[(k % n) * n + k / n]).collect();
        let y = lu.solve_transpose(&b);
        let r = matvec(&at, &y, n);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = vec![1.0, 2.0, 2.0, 4.0];
        assert!(matches!(DenseLu::factor(a, 2), Err(Error::Singular(_))));
    }

    #[test]
    fn band_cholesky_matches_dense() {
        let n = 9;
        let bw = 3;
        let entry = |i: usize, j: usize| {
            let d = i.abs_diff(j);
            match d {
                0 => 6.0 + 0.1 * i as f64,
                1 => -1.0,
                3 => -0.5 - 0.01 * (i + j) as f64,
                _ => 0.0,
            }
        };
        let chol = BandCholesky::factor(n, bw, entry).unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
        let x = chol.solve(&b);
        let a: Vec<f64> = (0..n * n).map(|k| if (k / n).abs_diff(k % n) <= bw { entry(k / n, k % n) } else { 0.0 }).collect();
        let ax = matvec(&a, &x, n);
        for i in 0..n {
            assert!((ax[i] - b[i]).abs() < 1e-13);
        }
        assert!(BandCholesky::factor(2, 1, |i, j| if i == j { -1.0 } else { 0.0 }).is_err());
    }
}
