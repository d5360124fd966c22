//! Tridiagonal matrices with optional periodic corner entries.

use crate::error::{Error, Result};

/// Tridiagonal matrix, optionally closed into a cycle.
///
/// `lower[i]` couples row `i` to column `i - 1` and `upper[i]` to column `i + 1`.
/// When periodic, `lower[0]` is the `(0, n-1)` corner and `upper[n-1]` the
/// `(n-1, 0)` corner. Entries that land on the same matrix position (only
/// possible for `n <= 2`) add up.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
    periodic: bool,
}

impl BandedMatrix {
    pub fn zeros(n: usize, periodic: bool) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
            periodic,
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    fn left(&self, i: usize) -> Option<usize> {
        let n = self.dim();
        if i > 0 {
            Some(i - 1)
        } else if self.periodic && n > 1 {
            Some(n - 1)
        } else {
            None
        }
    }

    fn right(&self, i: usize) -> Option<usize> {
        let n = self.dim();
        if i + 1 < n {
            Some(i + 1)
        } else if self.periodic && n > 1 {
            Some(0)
        } else {
            None
        }
    }

    /// Adds `value` at `(row, col)`; `col` must be `row` or a (cyclic) neighbour.
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        if row == col {
            self.diag[row] += value;
        } else if self.right(row) == Some(col) {
            self.upper[row] += value;
        } else if self.left(row) == Some(col) {
            self.lower[row] += value;
        } else {
            panic!(
                "({row}, {col}) outside the band of a {}x{} matrix",
                self.dim(),
                self.dim()
            );
        }
    }

    /// Dense entry `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let mut v = 0.0;
        if row == col {
            v += self.diag[row];
        }
        if self.right(row) == Some(col) {
            v += self.upper[row];
        }
        if self.left(row) == Some(col) {
            v += self.lower[row];
        }
        v
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if let Some(l) = self.left(i) {
                acc += self.lower[i] * x[l];
            }
            if let Some(r) = self.right(i) {
                acc += self.upper[i] * x[r];
            }
            y[i] = acc;
        }
    }

    /// `self + scale * other`.
    pub fn add_scaled(&self, scale: f64, other: &BandedMatrix) -> BandedMatrix {
        assert_eq!(self.dim(), other.dim());
        let zip = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x + scale * y).collect()
        };
        BandedMatrix {
            lower: zip(&self.lower, &other.lower),
            diag: zip(&self.diag, &other.diag),
            upper: zip(&self.upper, &other.upper),
            periodic: self.periodic,
        }
    }

    pub fn scaled(&self, scale: f64) -> BandedMatrix {
        let s = |v: &[f64]| v.iter().map(|x| scale * x).collect();
        BandedMatrix {
            lower: s(&self.lower),
            diag: s(&self.diag),
            upper: s(&self.upper),
            periodic: self.periodic,
        }
    }

    /// Replaces row `i` by the identity row.
    pub fn set_identity_row(&mut self, i: usize) {
        self.lower[i] = 0.0;
        self.upper[i] = 0.0;
        self.diag[i] = 1.0;
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|i| {
            [self.left(i), self.right(i)]
                .into_iter()
                .flatten()
                .all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol)
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        (0..n)
            .map(|i| (0..n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// Solves `self * x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        assert_eq!(rhs.len(), n);
        if n == 0 {
            return Ok(Vec::new());
        }
        if !self.periodic {
            let mut lower = self.lower.clone();
            lower[0] = 0.0;
            let mut upper = self.upper.clone();
            upper[n - 1] = 0.0;
            return thomas(&lower, &self.diag, &upper, rhs);
        }
        if n <= 2 {
            return dense_solve(self.to_dense(), rhs.to_vec());
        }
        cyclic(&self.lower, &self.diag, &self.upper, rhs)
    }
}

/// Thomas algorithm; `lower[0]` and `upper[n-1]` are ignored.
pub fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut gamma = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 {
        return Err(Error::SingularMatrix { pivot: 0 });
    }
    x[0] = rhs[0] / beta;
    for i in 1..n {
        gamma[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * gamma[i];
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::SingularMatrix { pivot: i });
        }
        x[i] = (rhs[i] - lower[i] * x[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        x[i] -= gamma[i + 1] * x[i + 1];
    }
    Ok(x)
}

/// Cyclic tridiagonal solve by a Sherman-Morrison rank-one correction (`n >= 3`).
fn cyclic(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let alpha = upper[n - 1]; // (n-1, 0)
    let beta = lower[0]; // (0, n-1)
    let gamma = -diag[0];
    let mut bb = diag.to_vec();
    bb[0] -= gamma;
    bb[n - 1] -= alpha * beta / gamma;
    let x = thomas(lower, &bb, upper, rhs)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = thomas(lower, &bb, upper, &u)?;
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    Ok(x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect())
}

/// Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col] == 0.0 {
            return Err(Error::SingularMatrix { pivot: col });
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_mul(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum())
            .collect()
    }

    #[test]
    fn two_by_two_periodic_adds_both_couplings() {
        let mut m = BandedMatrix::zeros(2, true);
        m.add(0, 0, 4.0);
        m.add(1, 1, 4.0);
        m.upper[0] = 1.0;
        m.lower[0] = 1.0;
        m.upper[1] = 1.0;
        m.lower[1] = 1.0;
        assert_eq!(m.get(0, 1), 2.0);
        let x = m.solve(&[6.0, 6.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_reported() {
        let m = BandedMatrix::zeros(4, false);
        assert!(matches!(
            m.solve(&[1.0; 4]),
            Err(Error::SingularMatrix { .. })
        ));
    }

    proptest! {
        #[test]
        fn solves_match_dense(
            n in 1usize..12,
            periodic in any::<bool>(),
            seed in proptest::collection::vec(-1.0f64..1.0, 48),
        ) {
            let mut m = BandedMatrix::zeros(n, periodic);
            for i in 0..n {
                m.diag[i] = 4.0 + seed[i % 48];
                m.lower[i] = seed[(i + 13) % 48];
                m.upper[i] = seed[(i + 29) % 48];
            }
            let x_true: Vec<f64> = (0..n).map(|i| seed[(i + 7) % 48] + 0.5).collect();
            let rhs = m.mul_vec(&x_true);
            prop_assert_eq!(dense_mul(&m.to_dense(), &x_true).len(), n);
            for (a, b) in dense_mul(&m.to_dense(), &x_true).iter().zip(&rhs) {
                prop_assert!((a - b).abs() < 1e-13);
            }
            let x = m.solve(&rhs).unwrap();
            for (a, b) in x.iter().zip(&x_true) {
                prop_assert!((a - b).abs() < 1e-11);
            }
        }
    }
}
