//! Small dense symmetric-matrix routines: Cholesky, PD inverse, log-det,
//! Jacobi eigenvalues. Sized for the p <= few hundred regime this crate
//! works in; no external linear algebra backend.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
/// Returns `None` if a pivot is non-positive or non-finite.
pub fn cholesky(a: &ArrayView2<f64>) -> Option<Array2<f64>> {
    let p = a.nrows();
    debug_assert_eq!(p, a.ncols());
    let mut l = Array2::<f64>::zeros((p, p));
    for j in 0..p {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let dj = d.sqrt();
        l[[j, j]] = dj;
        for i in j + 1..p {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / dj;
        }
    }
    Some(l)
}

/// log det of a PD matrix via Cholesky.
pub fn logdet_pd(a: &ArrayView2<f64>) -> Option<f64> {
    cholesky(a).map(|l| 2.0 * (0..a.nrows()).map(|j| l[[j, j]].ln()).sum::<f64>())
}

/// Solve L x = b with L lower triangular.
pub fn solve_lower(l: &ArrayView2<f64>, b: &[f64], x: &mut [f64]) {
    let p = b.len();
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[[i, k]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
}

/// Solve L^T x = b with L lower triangular.
pub fn solve_lower_transpose(l: &ArrayView2<f64>, b: &[f64], x: &mut [f64]) {
    let p = b.len();
    for i in (0..p).rev() {
        let mut s = b[i];
        for k in i + 1..p {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn inv_pd(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let p = a.nrows();
    let l = cholesky(a)
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?;
    let lv = l.view();
    let mut inv = Array2::<f64>::zeros((p, p));
    let mut e = vec![0.0; p];
    let mut y = vec![0.0; p];
    let mut x = vec![0.0; p];
    for j in 0..p {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        solve_lower(&lv, &e, &mut y);
        solve_lower_transpose(&lv, &y, &mut x);
        for i in 0..p {
            inv[[i, j]] = x[i];
        }
    }
    // symmetrize away round-off
    for i in 0..p {
        for j in i + 1..p {
            let v = 0.5 * (inv[[i, j]] + inv[[j, i]]);
            inv[[i, j]] = v;
            inv[[j, i]] = v;
        }
    }
    Ok(inv)
}

/// All eigenvalues of a symmetric matrix by the cyclic Jacobi method,
/// returned in ascending order.
pub fn sym_eigenvalues(a: &ArrayView2<f64>) -> Vec<f64> {
    let p = a.nrows();
    let mut m = a.to_owned();
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..p {
            for j in i + 1..p {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + frobenius(&m.view())) {
            break;
        }
        for i in 0..p {
            for j in i + 1..p {
                let apq = m[[i, j]];
                if apq == 0.0 {
                    continue;
                }
                let app = m[[i, i]];
                let aqq = m[[j, j]];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..p {
                    let mik = m[[i, k]];
                    let mjk = m[[j, k]];
                    m[[i, k]] = c * mik - s * mjk;
                    m[[j, k]] = s * mik + c * mjk;
                }
                for k in 0..p {
                    let mki = m[[k, i]];
                    let mkj = m[[k, j]];
                    m[[k, i]] = c * mki - s * mkj;
                    m[[k, j]] = s * mki + c * mkj;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..p).map(|i| m[[i, i]]).collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

fn frobenius(a: &ArrayView2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &ArrayView2<f64>) -> f64 {
    sym_eigenvalues(a)[0]
}

/// x^T A y for symmetric A given as full matrix.
pub fn quad_form(a: &ArrayView2<f64>, x: &Array1<f64>) -> f64 {
    let p = x.len();
    let mut s = 0.0;
    for i in 0..p {
        let mut row = 0.0;
        for j in 0..p {
            row += a[[i, j]] * x[j];
        }
        s += x[i] * row;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cholesky_roundtrip() {
        let a = array![[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let l = cholesky(&a.view()).unwrap();
        let back = l.dot(&l.t());
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_of_known_matrix() {
        let a = array![[1.0, 0.5], [0.5, 1.0]];
        let inv = inv_pd(&a.view()).unwrap();
        assert!((inv[[0, 0]] - 4.0 / 3.0).abs() < 1e-12);
        assert!((inv[[0, 1]] + 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_of_diagonal_and_2x2() {
        let a = array![[3.0, 0.0], [0.0, 7.0]];
        let ev = sym_eigenvalues(&a.view());
        assert!((ev[0] - 3.0).abs() < 1e-12 && (ev[1] - 7.0).abs() < 1e-12);
        // eigenvalues of [[2,1],[1,2]] are 1 and 3
        let b = array![[2.0, 1.0], [1.0, 2.0]];
        let ev = sym_eigenvalues(&b.view());
        assert!((ev[0] - 1.0).abs() < 1e-10 && (ev[1] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn not_pd_detected() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky(&a.view()).is_none());
        assert!(inv_pd(&a.view()).is_err());
    }
}
