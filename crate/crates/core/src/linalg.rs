//! Small dense solvers used by the coefficient design.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Householder QR of a tall matrix, kept in factored form.
#[derive(Debug, Clone)]
pub struct HouseholderQr {
    /// Householder vectors below the diagonal, `R` on and above it.
    packed: Array2<f64>,
    /// Leading entries of the Householder vectors.
    heads: Vec<f64>,
    /// Diagonal of `R`.
    r_diag: Vec<f64>,
}

impl HouseholderQr {
    pub fn new(a: ArrayView2<f64>) -> Self {
        let (rows, cols) = a.dim();
        assert!(rows >= cols, "QR needs a tall matrix, got {rows}x{cols}");
        let mut packed = a.to_owned();
        let mut heads = vec![0.0; cols];
        let mut r_diag = vec![0.0; cols];
        for k in 0..cols {
            let norm = (k..rows).map(|i| packed[[i, k]].powi(2)).sum::<f64>().sqrt();
            if norm == 0.0 {
                heads[k] = 0.0;
                r_diag[k] = 0.0;
                continue;
            }
            let alpha = if packed[[k, k]] > 0.0 { -norm } else { norm };
            // v = x - alpha e_1, normalised so that |v| = 1.
            let v0 = packed[[k, k]] - alpha;
            let vnorm = (v0 * v0 + ((k + 1)..rows).map(|i| packed[[i, k]].powi(2)).sum::<f64>()).sqrt();
            heads[k] = v0 / vnorm;
            for i in (k + 1)..rows {
                packed[[i, k]] /= vnorm;
            }
            r_diag[k] = alpha;
            for j in (k + 1)..cols {
                let mut s = heads[k] * packed[[k, j]];
                for i in (k + 1)..rows {
                    s += packed[[i, k]] * packed[[i, j]];
                }
                s *= 2.0;
                packed[[k, j]] -= s * heads[k];
                for i in (k + 1)..rows {
                    packed[[i, j]] -= s * packed[[i, k]];
                }
            }
        }
        HouseholderQr {
            packed,
            heads,
            r_diag,
        }
    }

    fn cols(&self) -> usize {
        self.heads.len()
    }

    /// Overwrites `y` with `Q^T y`.
    pub fn apply_qt(&self, y: &mut Array1<f64>) {
        let rows = self.packed.nrows();
        for k in 0..self.cols() {
            if self.heads[k] == 0.0 && self.r_diag[k] == 0.0 {
                continue;
            }
            let mut s = self.heads[k] * y[k];
            for i in (k + 1)..rows {
                s += self.packed[[i, k]] * y[i];
            }
            s *= 2.0;
            y[k] -= s * self.heads[k];
            for i in (k + 1)..rows {
                y[i] -= s * self.packed[[i, k]];
            }
        }
    }

    /// Overwrites `y` with `Q y`.
    pub fn apply_q(&self, y: &mut Array1<f64>) {
        let rows = self.packed.nrows();
        for k in (0..self.cols()).rev() {
            if self.heads[k] == 0.0 && self.r_diag[k] == 0.0 {
                continue;
            }
            let mut s = self.heads[k] * y[k];
            for i in (k + 1)..rows {
                s += self.packed[[i, k]] * y[i];
            }
            s *= 2.0;
            y[k] -= s * self.heads[k];
            for i in (k + 1)..rows {
                y[i] -= s * self.packed[[i, k]];
            }
        }
    }

    /// Least-squares solution of `A x = b`. Columns whose pivot is
    /// negligible relative to the largest one get a zero coefficient.
    pub fn solve_least_squares(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let cols = self.cols();
        let mut y = b.to_owned();
        self.apply_qt(&mut y);
        let scale = self.r_diag.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let mut x = Array1::zeros(cols);
        for k in (0..cols).rev() {
            let r_kk = self.r_diag[k];
            if r_kk.abs() <= 1e-13 * scale {
                continue;
            }
            let mut s = y[k];
            for j in (k + 1)..cols {
                s -= self.packed[[k, j]] * x[j];
            }
            x[k] = s / r_kk;
        }
        x
    }

    /// Component of `y` orthogonal to the column space of `A`.
    pub fn residual_projection(&self, y: ArrayView1<f64>) -> Array1<f64> {
        let mut z = y.to_owned();
        self.apply_qt(&mut z);
        for k in 0..self.cols() {
            z[k] = 0.0;
        }
        self.apply_q(&mut z);
        z
    }
}

/// Least-squares solve of a tall system.
pub fn least_squares(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    HouseholderQr::new(a).solve_least_squares(b)
}

/// Solves a square system by Gaussian elimination with partial pivoting.
/// Returns `None` when a pivot vanishes.
pub fn solve_square(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    let mut m = a.to_owned();
    let mut x = b.to_owned();
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(f64::MIN_POSITIVE);
    for k in 0..n {
        let pivot = (k..n)
            .max_by(|&i, &j| m[[i, k]].abs().total_cmp(&m[[j, k]].abs()))
            .unwrap();
        if m[[pivot, k]].abs() <= 1e-300_f64.max(1e-15 * scale) {
            return None;
        }
        if pivot != k {
            for j in 0..n {
                m.swap([k, j], [pivot, j]);
            }
            x.swap(k, pivot);
        }
        for i in (k + 1)..n {
            let factor = m[[i, k]] / m[[k, k]];
            if factor == 0.0 {
                continue;
            }
            for j in k..n {
                m[[i, j]] -= factor * m[[k, j]];
            }
            x[i] -= factor * x[k];
        }
    }
    for k in (0..n).rev() {
        let mut s = x[k];
        for j in (k + 1)..n {
            s -= m[[k, j]] * x[j];
        }
        x[k] = s / m[[k, k]];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2};

    #[test]
    fn least_squares_fits_a_line() {
        let a = arr2(&[[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 3.0]]);
        let b = arr1(&[1.0, 3.0, 5.0, 7.0]);
        let x = least_squares(a.view(), b.view());
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn residual_projection_is_orthogonal_to_columns() {
        let a = arr2(&[[1.0, 0.0], [1.0, 1.0], [1.0, 2.0], [1.0, 4.0]]);
        let y = arr1(&[0.3, -1.0, 2.0, 0.5]);
        let qr = HouseholderQr::new(a.view());
        let r = qr.residual_projection(y.view());
        let atr = a.t().dot(&r);
        assert!(atr.iter().all(|v| v.abs() < 1e-12));
        let x = qr.solve_least_squares(y.view());
        let direct = &y - &a.dot(&x);
        assert!((&direct - &r).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn square_solve() {
        let a = arr2(&[[0.0, 2.0], [3.0, 1.0]]);
        let x = solve_square(a.view(), arr1(&[4.0, 5.0]).view()).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
        assert!(solve_square(arr2(&[[1.0, 2.0], [2.0, 4.0]]).view(), arr1(&[1.0, 1.0]).view()).is_none());
    }
}
