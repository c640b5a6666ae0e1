//! Jacobi-preconditioned conjugate gradients for the symmetric positive
//! definite systems produced by the implicit steps.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{dot, sqrt};
use crate::{Error, Result};

/// Symmetric positive definite operator in the Euclidean inner product.
pub(crate) trait SymOperator {
    fn len(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn diagonal(&self, out: &mut [f64]);
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgSettings {
    pub rel_tol: f64,
    /// Iteration cap; `0` means `10 * sqrt(n)` with a floor of 50.
    pub max_iter: usize,
}

impl Default for CgSettings {
    fn default() -> Self {
        Self { rel_tol: 1e-10, max_iter: 0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Solves `A x = b`, starting from the incoming `x`.
pub(crate) fn solve<A: SymOperator>(a: &A, b: &[f64], x: &mut [f64], settings: CgSettings) -> Result<CgStats> {
    let n = a.len();
    debug_assert!(b.len() == n && x.len() == n);
    let max_iter = if settings.max_iter == 0 {
        ((10.0 * sqrt(n as f64)) as usize).max(50)
    } else {
        settings.max_iter
    };
    let bnorm = sqrt(dot(b, b));
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats::default());
    }
    let mut diag = vec![0.0; n];
    a.diagonal(&mut diag);
    let inv: Vec<f64> = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();

    let mut r = vec![0.0; n];
    a.apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = sqrt(dot(&r, &r)) / bnorm;
    let mut it = 0;
    while rel > settings.rel_tol {
        if it >= max_iter {
            return Err(Error::CgNotConverged { iterations: it, rel_residual: rel });
        }
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) || !pap.is_finite() {
            return Err(Error::CgNotConverged { iterations: it, rel_residual: rel });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        rel = sqrt(dot(&r, &r)) / bnorm;
        it += 1;
    }
    Ok(CgStats { iterations: it, rel_residual: rel })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Tridiag(usize);

    impl SymOperator for Tridiag {
        fn len(&self) -> usize {
            self.0
        }
        fn apply(&self, x: &[f64], out: &mut [f64]) {
            let n = self.0;
            for i in 0..n {
                let mut v = (3.0 + i as f64) * x[i];
                if i > 0 {
                    v -= x[i - 1];
                }
                if i + 1 < n {
                    v -= x[i + 1];
                }
                out[i] = v;
            }
        }
        fn diagonal(&self, out: &mut [f64]) {
            for (i, d) in out.iter_mut().enumerate() {
                *d = 3.0 + i as f64;
            }
        }
    }

    #[test]
    fn solves_tridiagonal_system() {
        let a = Tridiag(40);
        let exact: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; 40];
        a.apply(&exact, &mut b);
        let mut x = vec![0.0; 40];
        let stats = solve(&a, &b, &mut x, CgSettings::default()).unwrap();
        assert!(stats.rel_residual <= 1e-10);
        for (u, v) in x.iter().zip(&exact) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = Tridiag(5);
        let mut x = vec![1.0; 5];
        solve(&a, &[0.0; 5], &mut x, CgSettings::default()).unwrap();
        assert!(x.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn reports_non_convergence() {
        let a = Tridiag(40);
        let b = vec![1.0; 40];
        let mut x = vec![0.0; 40];
        let err = solve(&a, &b, &mut x, CgSettings { rel_tol: 1e-14, max_iter: 2 }).unwrap_err();
        assert!(matches!(err, Error::CgNotConverged { iterations: 2, .. }));
    }
}
