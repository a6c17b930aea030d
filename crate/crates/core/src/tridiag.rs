//! Thomas algorithm for tridiagonal systems.

use crate::error::{Error, Result};

/// Tridiagonal matrix stored as three diagonals of equal length `n`.
/// `lower[0]` and `upper[n-1]` are ignored.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * x[i];
                if i > 0 {
                    v += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    v += self.upper[i] * x[i + 1];
                }
                v
            })
            .collect()
    }

    /// Solves `A x = rhs`. Rows are first divided by their diagonal so the
    /// sweep runs on a unit-diagonal system regardless of the raw scale of
    /// each row; a non-positive pivot is reported as an error.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        assert_eq!(rhs.len(), n);
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        let mut prev_c = 0.0;
        let mut prev_d = 0.0;
        for i in 0..n {
            let di = self.diag[i];
            if di <= 0.0 || !di.is_finite() {
                return Err(Error::LinearSolve { row: i, pivot: di });
            }
            let a = if i > 0 { self.lower[i] / di } else { 0.0 };
            let c = if i + 1 < n { self.upper[i] / di } else { 0.0 };
            let r = rhs[i] / di;
            let pivot = 1.0 - a * prev_c;
            if pivot <= 0.0 || !pivot.is_finite() {
                return Err(Error::LinearSolve { row: i, pivot });
            }
            cp[i] = c / pivot;
            dp[i] = (r - a * prev_d) / pivot;
            prev_c = cp[i];
            prev_d = dp[i];
        }
        let mut x = vec![0.0; n];
        x[n - 1] = dp[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = dp[i] - cp[i] * x[i + 1];
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_laplacian_system() {
        let n = 6;
        let mut a = Tridiagonal::zeros(n);
        for i in 0..n {
            a.diag[i] = 2.0;
            a.lower[i] = -1.0;
            a.upper[i] = -1.0;
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64).sin() + 2.0).collect();
        let rhs = a.mul_vec(&x_true);
        let x = a.solve(&rhs).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn badly_scaled_rows() {
        // rows differing by 1e-280 in scale still solve accurately
        let mut a = Tridiagonal::zeros(3);
        a.diag = vec![1e-280, 3.0, 1.0];
        a.upper = vec![-1e-281, -1.0, 0.0];
        a.lower = vec![0.0, -1.0, -0.5];
        let x_true = [1.0, 2.0, 3.0];
        let rhs = a.mul_vec(&x_true);
        let x = a.solve(&rhs).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12, "{u} {v}");
        }
    }

    #[test]
    fn rejects_non_positive_pivot() {
        let mut a = Tridiagonal::zeros(2);
        a.diag = vec![0.0, 1.0];
        assert!(matches!(a.solve(&[1.0, 1.0]), Err(Error::LinearSolve { row: 0, .. })));
    }
}
