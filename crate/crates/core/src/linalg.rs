use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub(crate) const SYMMETRY_TOL: f64 = 1e-12;

pub(crate) fn check_symmetric(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Shape(format!("{} is {}x{}, not square", what, m.nrows(), m.ncols())));
    }
    let scale = m.amax().max(1.0);
    for j in 0..m.ncols() {
        for i in 0..j {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::NotSpd(format!("{} is not symmetric at ({}, {})", what, i, j)));
            }
        }
    }
    Ok(())
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub(crate) fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotSpd(format!("{} has non-finite entries", what)));
    }
    Cholesky::new(m.clone()).ok_or_else(|| Error::NotSpd(format!("{} failed Cholesky factorization", what)))
}

pub(crate) fn log_det_from_chol(c: &Cholesky<f64, Dyn>) -> f64 {
    c.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum()
}

/// Inverse of the lower Cholesky factor.
pub(crate) fn chol_factor_inverse(c: &Cholesky<f64, Dyn>) -> Result<DMatrix<f64>> {
    let l = c.l();
    let n = l.nrows();
    l.solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Singular("triangular factor".into()))
}

/// Symmetric square root through the eigendecomposition.
pub(crate) fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::NotSpd("non-positive eigenvalue in square root".into()));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let mut r = &eig.eigenvectors * d * eig.eigenvectors.transpose();
    symmetrize(&mut r);
    Ok(r)
}

pub(crate) fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let mut inv = cholesky(m, what)?.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

pub(crate) fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}
