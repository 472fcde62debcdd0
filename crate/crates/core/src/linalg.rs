//! Small dense symmetric positive-definite algebra (row-major, `p x p`).

use alloc::vec;
use alloc::vec::Vec;

/// Lower-triangular Cholesky factor.
pub(crate) struct Cholesky {
    l: Vec<f64>,
    p: usize,
}

impl Cholesky {
    /// `None` when `a` is not numerically positive definite.
    pub(crate) fn new(a: &[f64], p: usize) -> Option<Cholesky> {
        let mut l = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..=i {
                let mut s = a[i * p + j];
                for k in 0..j {
                    s -= l[i * p + k] * l[j * p + k];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l[i * p + i] = libm::sqrt(s);
                } else {
                    l[i * p + j] = s / l[j * p + j];
                }
            }
        }
        Some(Cholesky { l, p })
    }

    pub(crate) fn log_det(&self) -> f64 {
        (0..self.p)
            .map(|i| 2.0 * libm::log(self.l[i * self.p + i]))
            .sum()
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let p = self.p;
        let mut z = b.to_vec();
        for i in 0..p {
            let mut s = z[i];
            for k in 0..i {
                s -= self.l[i * p + k] * z[k];
            }
            z[i] = s / self.l[i * p + i];
        }
        for i in (0..p).rev() {
            let mut s = z[i];
            for k in i + 1..p {
                s -= self.l[k * p + i] * z[k];
            }
            z[i] = s / self.l[i * p + i];
        }
        z
    }

    /// Diagonal of the inverse.
    pub(crate) fn inverse_diag(&self) -> Vec<f64> {
        let p = self.p;
        let mut e = vec![0.0; p];
        (0..p)
            .map(|j| {
                e.iter_mut().for_each(|v| *v = 0.0);
                e[j] = 1.0;
                self.solve(&e)[j]
            })
            .collect()
    }
}

/// Indices of columns that are linearly dependent on earlier columns of the
/// Gram matrix `g`, found by an in-order Cholesky sweep that skips a column
/// whenever its remaining pivot is below `tol` times its diagonal.
pub(crate) fn dependent_columns(g: &[f64], p: usize, tol: f64) -> Vec<usize> {
    let mut l = vec![0.0; p * p];
    let mut keep: Vec<usize> = Vec::with_capacity(p);
    let mut dependent = Vec::new();
    for i in 0..p {
        let diag = g[i * p + i];
        if !(diag > 0.0) {
            dependent.push(i);
            continue;
        }
        // row i of L restricted to kept columns
        for &j in &keep {
            let mut s = g[i * p + j];
            for &k in keep.iter().take_while(|&&k| k < j) {
                s -= l[i * p + k] * l[j * p + k];
            }
            l[i * p + j] = s / l[j * p + j];
        }
        let mut d = diag;
        for &k in &keep {
            d -= l[i * p + k] * l[i * p + k];
        }
        if d <= tol * diag {
            dependent.push(i);
            for &k in &keep {
                l[i * p + k] = 0.0;
            }
        } else {
            l[i * p + i] = libm::sqrt(d);
            keep.push(i);
        }
    }
    dependent
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        let a = [4.0, 2.0, 0.6, 2.0, 2.0, 0.5, 0.6, 0.5, 3.0];
        let c = Cholesky::new(&a, 3).unwrap();
        let x = c.solve(&[1.0, 2.0, 3.0]);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| a[i * 3 + j] * x[j]).sum();
            assert!((r - [1.0, 2.0, 3.0][i]).abs() < 1e-12);
        }
        // det = 4*(6-0.25) - 2*(6-0.3) + 0.6*(1-1.2) = 23 - 11.4 - 0.12
        assert!((c.log_det() - libm::log(11.48)).abs() < 1e-12);
    }

    #[test]
    fn finds_dependent_columns() {
        // columns: 1, a, b, a + b, 0
        let x = [
            [1.0, 1.0, 0.0, 1.0, 0.0],
            [1.0, 0.0, 1.0, 1.0, 0.0],
            [1.0, 0.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 1.0, 2.0, 0.0],
        ];
        let p = 5;
        let mut g = vec![0.0; p * p];
        for r in &x {
            for i in 0..p {
                for j in 0..p {
                    g[i * p + j] += r[i] * r[j];
                }
            }
        }
        assert_eq!(dependent_columns(&g, p, 1e-10), [3, 4]);
    }
}
