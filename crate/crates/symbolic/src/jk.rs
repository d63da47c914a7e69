//! The tridiagonal matrices of the generalized one-particle integral and the
//! closed forms of the first and last rows of their inverses.
//!
//! On the locus, `J^{-1}` is symmetric tridiagonal with diagonal `2 t2[l]`
//! and off-diagonal `c11[k]`; `K^{-1}` is the same matrix with every decay
//! factor `c_i` replaced by `c_i^2`. The closed forms are
//!
//! ```text
//! J[0][l] = -e^{-t_l} / 2        J[m][l] = -e^{t_l - t_m} / 2
//! ```
//!
//! and the same with `t -> 2t` for `K`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::SymbolicError;

/// Locus values `(t2, c11)` for decay factors `c_1..c_m`.
pub fn locus_from_decay(c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = c.len();
    let g = |x: f64| 1.0 / (1.0 - x * x);
    let mut t2 = vec![0.0; m + 1];
    for (l, slot) in t2.iter_mut().enumerate() {
        *slot = -if l == 0 {
            g(c[0])
        } else if l == m {
            g(c[m - 1])
        } else {
            g(c[l - 1]) + c[l] * c[l] * g(c[l])
        };
    }
    let c11 = c.iter().map(|&x| 2.0 * x * g(x)).collect();
    (t2, c11)
}

/// Symmetric tridiagonal matrix with diagonal `2 t2` and off-diagonal `c11`.
pub fn tridiagonal(t2: &[f64], c11: &[f64]) -> DMatrix<f64> {
    let n = t2.len();
    let mut a = DMatrix::zeros(n, n);
    for l in 0..n {
        a[(l, l)] = 2.0 * t2[l];
        if l + 1 < n {
            a[(l, l + 1)] = c11[l];
            a[(l + 1, l)] = c11[l];
        }
    }
    a
}

#[derive(Clone, Debug, Serialize)]
pub struct JkReport {
    pub m: usize,
    pub j: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
    pub j_row_error: f64,
    pub k_row_error: f64,
}

fn row_error(inv: &DMatrix<f64>, times: &[f64], scale: f64) -> f64 {
    let m = times.len() - 1;
    let tm = times[m];
    let mut err: f64 = 0.0;
    for (l, &t) in times.iter().enumerate() {
        err = err.max((inv[(0, l)] + 0.5 * (-scale * t).exp()).abs());
        err = err.max((inv[(m, l)] + 0.5 * (scale * (t - tm)).exp()).abs());
    }
    err
}

fn to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| a.row(i).iter().copied().collect())
        .collect()
}

/// Numerically inverts both tridiagonal matrices for the grid
/// `0 = t_0 < t_1 < ... < t_m` and measures the closed-form row errors.
pub fn jk_matrices(times: &[f64]) -> Result<JkReport, SymbolicError> {
    if times.len() < 2 {
        return Err(SymbolicError::Numeric("need at least two times".into()));
    }
    let c: Vec<f64> = times.windows(2).map(|w| (-(w[1] - w[0])).exp()).collect();
    let c_sq: Vec<f64> = c.iter().map(|x| x * x).collect();
    let invert = |c: &[f64]| -> Result<DMatrix<f64>, SymbolicError> {
        let (t2, c11) = locus_from_decay(c);
        tridiagonal(&t2, &c11)
            .try_inverse()
            .ok_or_else(|| SymbolicError::Numeric("singular tridiagonal matrix".into()))
    };
    let j = invert(&c)?;
    let k = invert(&c_sq)?;
    Ok(JkReport {
        m: times.len() - 1,
        j_row_error: row_error(&j, times, 1.0),
        k_row_error: row_error(&k, times, 2.0),
        j: to_rows(&j),
        k: to_rows(&k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_inverse() {
        let t1: f64 = 0.7;
        let c = (-t1).exp();
        let r = jk_matrices(&[0.0, t1]).unwrap();
        assert!((r.j[0][0] + 0.5).abs() < 1e-14);
        assert!((r.j[1][1] + 0.5).abs() < 1e-14);
        assert!((r.j[0][1] + c / 2.0).abs() < 1e-14);
    }

    #[test]
    fn corner_of_k() {
        let times = [0.0, 0.3, 1.1, 2.0];
        let r = jk_matrices(&times).unwrap();
        assert!((r.k[0][3] + 0.5 * (-4.0f64).exp()).abs() < 1e-14);
        assert!(r.j_row_error < 1e-12 && r.k_row_error < 1e-12);
    }

    #[test]
    fn locus_for_half_decay() {
        let (t2, c11) = locus_from_decay(&[0.5]);
        assert!((t2[0] + 4.0 / 3.0).abs() < 1e-15);
        assert!((t2[1] + 4.0 / 3.0).abs() < 1e-15);
        assert!((c11[0] - 4.0 / 3.0).abs() < 1e-15);
    }
}
