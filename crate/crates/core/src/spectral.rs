//! Dense eigendecomposition of small Laplacians and exact spectral filtering.
//!
//! This is the reference every approximate filter in the crate is checked
//! against, so it is deliberately independent of the sparse machinery: it
//! densifies the operator and runs a Householder tridiagonalization followed
//! by implicit-shift QL iteration.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::laplacian::LaplacianOperator;

/// Default largest order accepted by [`eigendecompose`].
pub const DEFAULT_ORACLE_CAP: usize = 2000;

/// Eigenpairs of a real symmetric matrix, eigenvalues ascending. Column `i`
/// of `eigenvectors` belongs to `eigenvalues[i]`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Array1<f64>,
    pub eigenvectors: Array2<f64>,
}

pub fn eigendecompose(op: &LaplacianOperator) -> Result<SpectralDecomposition> {
    eigendecompose_with_cap(op, DEFAULT_ORACLE_CAP)
}

pub fn eigendecompose_with_cap(op: &LaplacianOperator, cap: usize) -> Result<SpectralDecomposition> {
    if op.n() > cap {
        return Err(Error::OracleCapExceeded { n: op.n(), cap });
    }
    symmetric_eigen(op.to_dense().view())
}

/// Eigendecomposition of a dense symmetric matrix (only the lower triangle
/// is read).
pub fn symmetric_eigen(a: ArrayView2<f64>) -> Result<SpectralDecomposition> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    if n == 0 {
        return Ok(SpectralDecomposition {
            eigenvalues: Array1::zeros(0),
            eigenvectors: Array2::zeros((0, 0)),
        });
    }
    let mut v = a.to_owned();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(&mut v, &mut d, &mut e);
    ql_implicit(&mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let eigenvalues = Array1::from_iter(order.iter().map(|&i| d[i]));
    let mut eigenvectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.column_mut(dst).assign(&v.column(src));
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Householder reduction to tridiagonal form (EISPACK tred2). On return `v`
/// holds the accumulated orthogonal transform, `d` the diagonal and `e[1..]`
/// the subdiagonal.
fn tridiagonalize(v: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[[n - 1, j]];
    }

    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[[i - 1, j]];
                v[[i, j]] = 0.0;
                v[[j, i]] = 0.0;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }

            for j in 0..i {
                f = d[j];
                v[[j, i]] = f;
                g = e[j] + v[[j, j]] * f;
                for k in (j + 1)..i {
                    g += v[[k, j]] * d[k];
                    e[k] += v[[k, j]] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[[k, j]] -= f * e[k] + g * d[k];
                }
                d[j] = v[[i - 1, j]];
                v[[i, j]] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n.saturating_sub(1) {
        v[[n - 1, i]] = v[[i, i]];
        v[[i, i]] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[[k, i + 1]] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[[k, i + 1]] * v[[k, j]];
                }
                for k in 0..=i {
                    v[[k, j]] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[[k, i + 1]] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[[n - 1, j]];
        v[[n - 1, j]] = 0.0;
    }
    v[[n - 1, n - 1]] = 1.0;
    e[0] = 0.0;
}

/// Implicit-shift QL on the tridiagonal matrix (EISPACK tql2), accumulating
/// rotations into `v`. Gives up after `50 n` sweeps in total.
fn ql_implicit(v: &mut Array2<f64>, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let cap = 50 * n;
    let mut sweeps = 0usize;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }

        if m > l {
            loop {
                sweeps += 1;
                if sweeps > cap {
                    return Err(Error::Format(format!(
                        "symmetric eigensolver did not converge within {cap} sweeps"
                    )));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v[[k, i + 1]];
                        v[[k, i + 1]] = s * v[[k, i]] + c * h;
                        v[[k, i]] = c * v[[k, i]] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: len,
            });
        }
        Ok(())
    }

    /// `U diag(h(lambda)) U^T` as a dense matrix.
    pub fn matrix_function(&self, h: impl Fn(f64) -> f64) -> Result<Array2<f64>> {
        let response = self.sample_response(h)?;
        let mut scaled = self.eigenvectors.clone();
        for (mut col, r) in scaled.columns_mut().into_iter().zip(response.iter()) {
            col *= *r;
        }
        Ok(scaled.dot(&self.eigenvectors.t()))
    }

    fn sample_response(&self, h: impl Fn(f64) -> f64) -> Result<Array1<f64>> {
        let mut out = Array1::zeros(self.n());
        for (o, &lambda) in out.iter_mut().zip(self.eigenvalues.iter()) {
            let value = h(lambda);
            if !value.is_finite() {
                return Err(Error::NonFiniteResponse { lambda });
            }
            *o = value;
        }
        Ok(out)
    }

    /// Reconstructs `U diag(lambda) U^T`.
    pub fn reconstruct(&self) -> Array2<f64> {
        self.matrix_function(|l| l).expect("identity response is finite")
    }
}

/// Graph Fourier transform `x^ = U^T x`.
pub fn graph_fourier(dec: &SpectralDecomposition, x: ArrayView1<f64>) -> Result<Array1<f64>> {
    dec.check_len(x.len())?;
    Ok(dec.eigenvectors.t().dot(&x))
}

/// Inverse transform `x = U x^`.
pub fn inverse_graph_fourier(dec: &SpectralDecomposition, coeffs: ArrayView1<f64>) -> Result<Array1<f64>> {
    dec.check_len(coeffs.len())?;
    Ok(dec.eigenvectors.dot(&coeffs))
}

/// Exact spectral filtering `U h(Lambda) U^T x`.
pub fn exact_filter(
    dec: &SpectralDecomposition,
    h: impl Fn(f64) -> f64,
    x: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    dec.check_len(x.len())?;
    let response = dec.sample_response(h)?;
    let coeffs = dec.eigenvectors.t().dot(&x) * &response;
    Ok(dec.eigenvectors.dot(&coeffs))
}

/// Column-wise [`exact_filter`] on an `n x f` block.
pub fn exact_filter_block(
    dec: &SpectralDecomposition,
    h: impl Fn(f64) -> f64,
    x: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    dec.check_len(x.nrows())?;
    let response = dec.sample_response(h)?;
    let mut coeffs = dec.eigenvectors.t().dot(&x);
    for (mut row, r) in coeffs.rows_mut().into_iter().zip(response.iter()) {
        row *= *r;
    }
    Ok(dec.eigenvectors.dot(&coeffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::laplacian::{normalized_laplacian, scaled_normalized_laplacian, LambdaMaxMode};
    use ndarray::arr1;

    fn single_edge() -> Graph {
        Graph::from_edges(2, &[(0, 1, 1.0)]).unwrap()
    }

    #[test]
    fn two_node_normalized() {
        let dec = eigendecompose(&normalized_laplacian(&single_edge())).unwrap();
        assert!((dec.eigenvalues[0] - 0.0).abs() < 1e-14);
        assert!((dec.eigenvalues[1] - 2.0).abs() < 1e-14);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let u0 = dec.eigenvectors.column(0);
        let u1 = dec.eigenvectors.column(1);
        assert!((u0[0].abs() - s).abs() < 1e-14 && (u0[0] - u0[1]).abs() < 1e-14);
        assert!((u1[0].abs() - s).abs() < 1e-14 && (u1[0] + u1[1]).abs() < 1e-14);
    }

    #[test]
    fn two_node_scaled() {
        let op = scaled_normalized_laplacian(&single_edge(), LambdaMaxMode::Exact);
        let dec = eigendecompose(&op).unwrap();
        assert!((dec.eigenvalues[0] + 0.5).abs() < 1e-8);
        assert!((dec.eigenvalues[1] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn cap_is_enforced() {
        let g = Graph::from_edges(5, &[]).unwrap();
        let err = eigendecompose_with_cap(&normalized_laplacian(&g), 4).unwrap_err();
        assert!(err.to_string().contains("cap of 4"));
    }

    #[test]
    fn transform_of_first_eigenvector_is_basis_vector() {
        let g = Graph::from_edges(3, &[(0, 1, 1.0), (1, 2, 2.0)]).unwrap();
        let dec = eigendecompose(&normalized_laplacian(&g)).unwrap();
        let xhat = graph_fourier(&dec, dec.eigenvectors.column(0)).unwrap();
        assert!((xhat[0] - 1.0).abs() < 1e-12);
        assert!(xhat.iter().skip(1).all(|c| c.abs() < 1e-12));
        assert_eq!(graph_fourier(&dec, Array1::zeros(3).view()).unwrap(), Array1::<f64>::zeros(3));
        assert!(graph_fourier(&dec, Array1::zeros(2).view()).is_err());
    }

    #[test]
    fn non_finite_response_is_rejected() {
        let dec = eigendecompose(&normalized_laplacian(&single_edge())).unwrap();
        let err = exact_filter(&dec, |l| 1.0 / l, arr1(&[1.0, 0.0]).view()).unwrap_err();
        assert!(matches!(err, Error::NonFiniteResponse { lambda } if lambda.abs() < 1e-12));
    }

    #[test]
    fn empty_matrix() {
        let dec = symmetric_eigen(Array2::<f64>::zeros((0, 0)).view()).unwrap();
        assert_eq!(dec.n(), 0);
    }

    #[test]
    fn one_by_one() {
        let dec = symmetric_eigen(ndarray::arr2(&[[3.5]]).view()).unwrap();
        assert_eq!(dec.eigenvalues[0], 3.5);
        assert_eq!(dec.eigenvectors[[0, 0]].abs(), 1.0);
    }
}
