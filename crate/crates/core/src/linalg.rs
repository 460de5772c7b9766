//! Iterative solvers and small dense helpers.

use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::{Error, Result};

/// Outcome of an iterative solve.
#[derive(Clone, Debug, PartialEq)]
pub struct IterStats {
    pub iterations: usize,
    /// Final relative residual `‖b − Ax‖ / ‖b‖`.
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Conjugate gradients for a symmetric positive definite operator, starting
/// from zero. `inner` is the inner product the operator is self-adjoint in.
pub fn conjugate_gradient(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    inner: impl Fn(&[f64], &[f64]) -> f64,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, IterStats)> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = inner(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok((
            x,
            IterStats {
                iterations: 0,
                residual: 0.0,
            },
        ));
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = inner(&r, &r);
    for it in 1..=max_iter {
        let ap = apply(&p);
        let pap = inner(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Singular("operator is not positive definite".into()));
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = inner(&r, &r);
        let res = rr_new.sqrt() / b_norm;
        if res <= tol {
            return Ok((
                x,
                IterStats {
                    iterations: it,
                    residual: res,
                },
            ));
        }
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    Err(Error::NotConverged {
        solver: "conjugate gradients",
        iterations: max_iter,
        residual: rr.sqrt() / b_norm,
    })
}

/// Unrestarted GMRES with modified Gram-Schmidt and Givens rotations,
/// starting from zero.
pub fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, IterStats)> {
    let n = b.len();
    let beta = norm(b);
    if beta == 0.0 {
        return Ok((
            vec![0.0; n],
            IterStats {
                iterations: 0,
                residual: 0.0,
            },
        ));
    }
    let mut basis: Vec<Vec<f64>> = vec![b.iter().map(|v| v / beta).collect()];
    // Hessenberg columns, stored after rotation.
    let mut h: Vec<Vec<f64>> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![beta];
    let mut res = 1.0;
    let mut iterations = 0;

    for j in 0..max_iter {
        iterations = j + 1;
        let mut w = apply(&basis[j]);
        let mut col = vec![0.0; j + 2];
        for (i, v) in basis.iter().enumerate() {
            col[i] = dot(&w, v);
            axpy(-col[i], v, &mut w);
        }
        col[j + 1] = norm(&w);
        for i in 0..j {
            let t = cs[i] * col[i] + sn[i] * col[i + 1];
            col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
            col[i] = t;
        }
        let denom = col[j].hypot(col[j + 1]);
        let (c, s) = if denom == 0.0 {
            (1.0, 0.0)
        } else {
            (col[j] / denom, col[j + 1] / denom)
        };
        cs.push(c);
        sn.push(s);
        col[j] = denom;
        let hj1 = col[j + 1];
        col.truncate(j + 1);
        g.push(-s * g[j]);
        g[j] *= c;
        h.push(col);
        res = g[j + 1].abs() / beta;
        if res <= tol || hj1 == 0.0 {
            break;
        }
        basis.push(w.iter().map(|v| v / hj1).collect());
    }

    let k = h.len();
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for (l, yl) in y.iter().enumerate().skip(i + 1) {
            s -= h[l][i] * yl;
        }
        y[i] = s / h[i][i];
    }
    let mut x = vec![0.0; n];
    for (yi, v) in y.iter().zip(&basis) {
        axpy(*yi, v, &mut x);
    }
    if res > tol {
        return Err(Error::NotConverged {
            solver: "GMRES",
            iterations,
            residual: res,
        });
    }
    Ok((
        x,
        IterStats {
            iterations,
            residual: res,
        },
    ))
}

/// Sparse LU factorization of a square matrix given as triplets
/// (duplicates are summed).
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl SparseLu {
    pub fn new(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let trip: Vec<Triplet<usize, usize, f64>> = triplets.iter().map(|&(i, j, v)| Triplet::new(i, j, v)).collect();
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
            .map_err(|e| Error::InvalidArgument(format!("sparse assembly failed: {e:?}")))?;
        let lu = mat
            .sp_lu()
            .map_err(|e| Error::Singular(format!("sparse LU failed: {e:?}")))?;
        Ok(Self { n, lu })
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: rhs.len(),
            });
        }
        use faer::prelude::Solve;
        let b = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        let x = self.lu.solve(&b);
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular("sparse solve produced non-finite values".into()));
        }
        Ok(out)
    }
}

/// Dense row-major matrix to faer.
pub fn to_mat(rows: usize, cols: usize, data: &[f64]) -> Mat<f64> {
    Mat::from_fn(rows, cols, |i, j| data[i * cols + j])
}

/// Singular values in descending order.
pub fn singular_values(rows: usize, cols: usize, data: &[f64]) -> Result<Vec<f64>> {
    let m = to_mat(rows, cols, data);
    let mut s = m
        .singular_values()
        .map_err(|e| Error::Singular(format!("SVD failed: {e:?}")))?;
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Number of singular values above `rel_tol · σ_max`.
pub fn numerical_rank(rows: usize, cols: usize, data: &[f64], rel_tol: f64) -> Result<usize> {
    let s = singular_values(rows, cols, data)?;
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v > rel_tol * smax).count())
}

/// Minimum-norm least-squares solution of `A x = b` via SVD, with the
/// numerical rank at relative threshold `rel_tol`.
pub fn lstsq_min_norm(a: &Mat<f64>, b: &[f64], rel_tol: f64) -> Result<(Vec<f64>, usize)> {
    let svd = a
        .thin_svd()
        .map_err(|e| Error::Singular(format!("SVD failed: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    let k = s.nrows();
    let smax = (0..k).map(|i| s[i]).fold(0.0, f64::max);
    let mut x = vec![0.0; a.ncols()];
    let mut rank = 0;
    for i in 0..k {
        if smax == 0.0 || s[i] <= rel_tol * smax {
            continue;
        }
        rank += 1;
        let coef = (0..a.nrows()).map(|r| u[(r, i)] * b[r]).sum::<f64>() / s[i];
        for (c, xc) in x.iter_mut().enumerate() {
            *xc += coef * v[(c, i)];
        }
    }
    Ok((x, rank))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            4.0 + i as f64
                        } else if i.abs_diff(j) == 1 {
                            -1.0
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect()
    }

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter().map(|r| dot(r, x)).collect()
    }

    #[test]
    fn cg_solves_spd() {
        let a = spd(30);
        let x_true: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let b = matvec(&a, &x_true);
        let (x, st) = conjugate_gradient(|v| matvec(&a, v), dot, &b, 1e-12, 100).unwrap();
        assert!(st.residual <= 1e-12);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn cg_zero_rhs_and_nonconvergence() {
        let a = spd(10);
        let (x, st) = conjugate_gradient(|v| matvec(&a, v), dot, &[0.0; 10], 1e-10, 5).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
        assert_eq!(st.iterations, 0);
        let b: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let err = conjugate_gradient(|v| matvec(&a, v), dot, &b, 1e-14, 2).unwrap_err();
        assert!(matches!(err, Error::NotConverged { iterations: 2, .. }));
    }

    #[test]
    fn gmres_solves_nonsymmetric() {
        let n = 25;
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        if i == j {
                            3.0
                        } else if j == i + 1 {
                            1.5
                        } else if j + 2 == i {
                            -0.7
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        let x_true: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let b = matvec(&a, &x_true);
        let (x, st) = gmres(|v| matvec(&a, v), &b, 1e-12, 100).unwrap();
        assert!(st.iterations <= n);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn sparse_lu_and_rank() {
        let t = vec![(0, 0, 2.0), (1, 1, 3.0), (0, 1, 1.0), (1, 0, 1.0), (0, 0, 2.0)];
        let lu = SparseLu::new(2, &t).unwrap();
        let x = lu.solve(&[5.0, 4.0]).unwrap();
        assert!((4.0 * x[0] + x[1] - 5.0).abs() < 1e-12);
        assert!((x[0] + 3.0 * x[1] - 4.0).abs() < 1e-12);
        let m = [1.0, 2.0, 2.0, 4.0];
        assert_eq!(numerical_rank(2, 2, &m, 1e-10).unwrap(), 1);
    }

    #[test]
    fn min_norm_lstsq() {
        // x + y = 2 has minimum-norm solution (1, 1)
        let a = to_mat(1, 2, &[1.0, 1.0]);
        let (x, rank) = lstsq_min_norm(&a, &[2.0], 1e-12).unwrap();
        assert_eq!(rank, 1);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }
}
