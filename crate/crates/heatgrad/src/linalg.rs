//! Small dense linear-algebra helpers used by the geometry and path modules.
//!
//! Dimensions here are tiny (2–4), so everything is direct: closed forms for
//! 1×1/2×2 symmetric square roots, `SymmetricEigen` otherwise.

use alloc::{format, vec::Vec};
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent f64 methods shadow the trait on std builds
use num_traits::Float;

use crate::error::{Error, Result};

/// Inverse square root of a symmetric positive definite matrix.
pub fn sym_inv_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    match n {
        1 => {
            let a = m[(0, 0)];
            if a <= 0.0 {
                return Err(Error::Numerical(format!("non-positive 1x1 Gram: {a:e}")));
            }
            Ok(DMatrix::from_element(1, 1, 1.0 / a.sqrt()))
        }
        2 => {
            // sqrt(A) = (A + sqrt(det A) I) / sqrt(tr A + 2 sqrt(det A)) for SPD A.
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            let tr = m[(0, 0)] + m[(1, 1)];
            if det <= 0.0 || tr <= 0.0 {
                return Err(Error::Numerical(format!(
                    "non-SPD 2x2 Gram: det {det:e}, tr {tr:e}"
                )));
            }
            let s = det.sqrt();
            let denom = (tr + 2.0 * s).sqrt();
            let r00 = (m[(0, 0)] + s) / denom;
            let r01 = m[(0, 1)] / denom;
            let r11 = (m[(1, 1)] + s) / denom;
            let rdet = r00 * r11 - r01 * r01;
            Ok(DMatrix::from_row_slice(
                2,
                2,
                &[r11 / rdet, -r01 / rdet, -r01 / rdet, r00 / rdet],
            ))
        }
        _ => {
            let eig = m.clone().symmetric_eigen();
            let mut out = DMatrix::zeros(n, n);
            for (i, &lam) in eig.eigenvalues.iter().enumerate() {
                if lam <= 0.0 {
                    return Err(Error::Numerical(format!(
                        "non-SPD Gram: eigenvalue {lam:e}"
                    )));
                }
                let v = eig.eigenvectors.column(i);
                out += v * v.transpose() / lam.sqrt();
            }
            Ok(out)
        }
    }
}

/// Replace `frame` (columns spanning a subspace, `d×n`) by the closest
/// `g`-orthonormal frame: the polar factor `F (Fᵀ g F)^{-1/2}`.
pub fn polar_orthonormalize(frame: &mut DMatrix<f64>, metric: &DMatrix<f64>) -> Result<()> {
    let gram = frame.transpose() * metric * &*frame;
    let corr = sym_inv_sqrt(&gram)?;
    *frame *= corr;
    Ok(())
}

/// Symmetric eigendecomposition-based pseudo-inverse keeping the top `rank`
/// eigenvalues. Returns `(pinv, sigma_min)` where `sigma_min` is the square
/// root of the `rank`-th eigenvalue (smallest retained singular value of the
/// underlying `A` when `m = A Aᵀ`).
pub fn sym_pseudo_inverse(m: &DMatrix<f64>, rank: usize) -> (DMatrix<f64>, f64) {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    // Sort indices by descending eigenvalue.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let mut out = DMatrix::zeros(n, n);
    let mut smallest = f64::INFINITY;
    for &i in idx.iter().take(rank) {
        let lam = eig.eigenvalues[i];
        smallest = smallest.min(lam);
        if lam > 0.0 {
            let v = eig.eigenvectors.column(i);
            out += v * v.transpose() / lam;
        }
    }
    (out, smallest.max(0.0).sqrt())
}

/// Moore–Penrose pseudo-inverse of a (possibly rank-deficient) square matrix
/// restricted to the given rank, via the Gram matrix `MᵀM`.
pub fn pseudo_inverse(m: &DMatrix<f64>, rank: usize) -> Result<DMatrix<f64>> {
    if rank == m.nrows() && rank == m.ncols() {
        return m
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("singular matrix".into()));
    }
    let (ginv, sig) = sym_pseudo_inverse(&(m.transpose() * m), rank);
    if sig <= f64::EPSILON.sqrt() {
        return Err(Error::Numerical(format!(
            "matrix numerically rank-deficient below requested rank (sigma {sig:e})"
        )));
    }
    Ok(ginv * m.transpose())
}

/// Metric adjoint of an endomorphism: `S* = g⁻¹ Sᵀ g`, with `g` and `g⁻¹`
/// passed explicitly so rank-deficient (tangent-space) operators work too.
pub fn metric_adjoint(s: &DMatrix<f64>, g: &DMatrix<f64>, ginv: &DMatrix<f64>) -> DMatrix<f64> {
    ginv * s.transpose() * g
}

/// Deterministically complete the unit vector `x` to an orthonormal basis of
/// its orthogonal complement (columns of the returned `d×(d-1)` matrix).
pub fn orthogonal_complement(x: &DVector<f64>) -> DMatrix<f64> {
    let d = x.len();
    // Householder reflection mapping e_k -> x, with k the largest component.
    let k = x.iamax();
    let mut w = x.clone();
    w[k] += if x[k] >= 0.0 { 1.0 } else { -1.0 };
    let wn2 = w.norm_squared();
    let mut out = DMatrix::zeros(d, d - 1);
    let mut col = 0;
    for j in 0..d {
        if j == k {
            continue;
        }
        let mut e = DVector::zeros(d);
        e[j] = 1.0;
        let coef = 2.0 * w[j] / wn2;
        let v = e - &w * coef;
        out.set_column(col, &v);
        col += 1;
    }
    out
}

/// Numerically stable pairwise sum; the reduction tree depends only on the
/// slice length, so results are independent of how samples were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 32;
    if xs.len() <= BASE {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inv_sqrt_roundtrip_2x2() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.5]);
        let r = sym_inv_sqrt(&m).unwrap();
        let id = &r * &m * &r;
        assert!((id - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn inv_sqrt_roundtrip_3x3() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, 0.0, 0.1, 1.0, 0.2, 0.0, 0.2, 3.0]);
        let r = sym_inv_sqrt(&a).unwrap();
        let id = &r * &a * &r;
        assert!((id - DMatrix::<f64>::identity(3, 3)).norm() < 1e-11);
    }

    #[test]
    fn polar_factor_is_orthonormal() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        let mut f = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, -0.1, 0.45]);
        polar_orthonormalize(&mut f, &g).unwrap();
        let gram = f.transpose() * &g * &f;
        assert!((gram - DMatrix::<f64>::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn pseudo_inverse_projector() {
        // Projector onto the xy-plane has pseudo-inverse equal to itself.
        let p = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let (pinv, sig) = sym_pseudo_inverse(&p, 2);
        assert!((pinv - &p).norm() < 1e-13);
        assert!((sig - 1.0).abs() < 1e-13);
    }

    #[test]
    fn complement_is_orthonormal() {
        let x = DVector::from_column_slice(&[0.0, 0.0, 1.0]);
        let c = orthogonal_complement(&x);
        assert_eq!(c.ncols(), 2);
        assert!((c.transpose() * &c - DMatrix::<f64>::identity(2, 2)).norm() < 1e-14);
        assert!((c.transpose() * &x).norm() < 1e-14);
    }

    #[test]
    fn pairwise_matches_naive() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-9);
    }
}
