//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Condition-number ceiling beyond which an inverse is treated as singular.
const MAX_CONDITION: f64 = 1e14;

/// Largest singular value; zero for empty matrices.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .singular_values()
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Relative asymmetry ‖A − A'‖_F / ‖A‖_F (zero for the zero matrix).
pub fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.norm();
    if scale == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).norm() / scale
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut ev: Vec<f64> = symmetrize(a).symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn min_symmetric_eigenvalue(a: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(a).first().copied().unwrap_or(0.0)
}

/// Symmetric square root of a positive semidefinite matrix; negative
/// eigenvalues (numerical noise) are clipped to zero.
pub fn psd_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(a).symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose()
}

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex64> {
    if a.is_empty() {
        return Vec::new();
    }
    a.complex_eigenvalues().iter().copied().collect()
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a).iter().fold(0.0, |acc, l| acc.max(l.norm()))
}

/// Numerical rank of a complex matrix, with threshold `rel_tol × σ_max`.
pub fn complex_rank(a: &DMatrix<Complex64>, rel_tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().singular_values();
    let smax = sv.iter().fold(0.0_f64, |acc, &s| acc.max(s));
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Inverse that refuses numerically singular input (1-norm condition number
/// above 1e14, or non-finite entries).
pub fn guarded_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let inv = a.clone().try_inverse()?;
    if inv.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let cond = one_norm(a) * one_norm(&inv);
    (cond.is_finite() && cond < MAX_CONDITION).then_some(inv)
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn to_complex(a: &DMatrix<f64>) -> DMatrix<Complex64> {
    a.map(|v| Complex64::new(v, 0.0))
}

/// Row-major nested vectors, the on-disk matrix layout.
pub fn to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// `serialize_with` helpers writing matrices as row-major nested arrays.
pub mod serde_rows {
    use nalgebra::DMatrix;
    use serde::ser::{SerializeSeq, Serializer};

    pub fn matrix<S: Serializer>(a: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(super::to_rows(a))
    }

    pub fn matrices<S: Serializer>(list: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(list.len()))?;
        for a in list {
            seq.serialize_element(&super::to_rows(a))?;
        }
        seq.end()
    }
}
