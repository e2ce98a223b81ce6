//! Asymptotic covariances on the estimated active set and Wald-type tests.
//!
//! Coordinates index `vec(B)` with the response cell fastest: cell `J` of
//! predictor `k` is `J + p·k`. The Fisher-type block for coordinates
//! `(J,k)` and `(J',k')` is `Σ_X[k,k'] · Ω[J,J']` with `Ω = ⊗Σ_m^{-1}`.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::distributions::Nu;
use crate::error::{Error, Result};
use crate::estimators::{Dataset, FitResult, Method};
use crate::linalg;
use crate::tensor::{multi_index, KroneckerScale};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CovFlavor {
    /// Least squares sandwich.
    L,
    /// Tensor normal likelihood.
    N,
    /// Tensor t likelihood.
    T,
    /// One-step estimator, between `T` and `L`.
    Ost,
}

#[derive(Clone, Debug)]
pub struct AsymptoticCov {
    pub matrix: DMatrix<f64>,
    pub flavor: CovFlavor,
    pub active_set: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct TestResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub hypothesis: String,
}

/// `Σ̂_X = X Xᵀ / n`.
pub fn sigma_x(dataset: &Dataset) -> DMatrix<f64> {
    dataset.x() * dataset.x().transpose() / dataset.n() as f64
}

/// Nonzero coordinates of `vec(B)`.
pub fn active_set(b: &DMatrix<f64>) -> Vec<usize> {
    b.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect()
}

/// Restriction of `Σ_X ⊗ (⊗ mode(Σ_m))` to `active`, for a per-mode map.
fn restricted_kron(
    sx: &DMatrix<f64>,
    dims: &[usize],
    active: &[usize],
    mode: impl Fn(usize, usize, usize) -> f64,
) -> DMatrix<f64> {
    let p: usize = dims.iter().product();
    let idx: Vec<(Vec<usize>, usize)> = active.iter().map(|&a| (multi_index(dims, a % p), a / p)).collect();
    let s = active.len();
    DMatrix::from_fn(s, s, |a, b| {
        let (ja, ka) = &idx[a];
        let (jb, kb) = &idx[b];
        let mut v = sx[(*ka, *kb)];
        for m in 0..dims.len() {
            v *= mode(m, ja[m], jb[m]);
        }
        v
    })
}

fn check_active(active: &[usize], p: usize, q: usize) -> Result<()> {
    if active.is_empty() {
        return Err(Error::InvalidArgument("empty active set".into()));
    }
    if active.iter().any(|&a| a >= p * q) {
        return Err(Error::Shape("active index out of range".into()));
    }
    Ok(())
}

fn inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    linalg::spd_inverse(m, what).map_err(|_| Error::Singular(format!("{} restricted to the active set", what)))
}

fn t_factor(nu: Nu, p: usize) -> f64 {
    match nu {
        Nu::Finite(v) => (v + p as f64 + 2.0) / (v + p as f64),
        Nu::Infinite => 1.0,
    }
}

fn n_factor(nu: Nu) -> Result<f64> {
    match nu {
        Nu::Finite(v) if v <= 2.0 => Err(Error::InvalidArgument(format!("covariance needs nu > 2, got {}", v))),
        other => Ok(other.variance_factor()),
    }
}

/// `V_T = ((ν+p+2)/(ν+p)) [(Σ_X ⊗ Σ^{-1})_𝒜]^{-1}`.
pub fn cov_t(sx: &DMatrix<f64>, xi: &KroneckerScale, nu: Nu, active: &[usize]) -> Result<AsymptoticCov> {
    let dims = xi.dims();
    let p = xi.total_dim();
    check_active(active, p, sx.nrows())?;
    let f = xi.factor()?;
    let inv = f.inverses();
    let j = restricted_kron(sx, &dims, active, |m, a, b| inv[m][(a, b)]);
    let mut v = inverse(&j, "Σ_X ⊗ Σ^{-1}")? * t_factor(nu, p);
    linalg::symmetrize(&mut v);
    Ok(AsymptoticCov {
        matrix: v,
        flavor: CovFlavor::T,
        active_set: active.to_vec(),
    })
}

/// `V_N = (ν/(ν−2)) [(Σ_X ⊗ Σ^{-1})_𝒜]^{-1}`.
pub fn cov_n(sx: &DMatrix<f64>, xi: &KroneckerScale, nu: Nu, active: &[usize]) -> Result<AsymptoticCov> {
    let dims = xi.dims();
    check_active(active, xi.total_dim(), sx.nrows())?;
    let f = xi.factor()?;
    let inv = f.inverses();
    let j = restricted_kron(sx, &dims, active, |m, a, b| inv[m][(a, b)]);
    let mut v = inverse(&j, "Σ_X ⊗ Σ^{-1}")? * n_factor(nu)?;
    linalg::symmetrize(&mut v);
    Ok(AsymptoticCov {
        matrix: v,
        flavor: CovFlavor::N,
        active_set: active.to_vec(),
    })
}

/// `V_L = (ν/(ν−2)) [(Σ_X⊗I)_𝒜]^{-1} (Σ_X⊗Σ)_𝒜 [(Σ_X⊗I)_𝒜]^{-1}`.
pub fn cov_l(sx: &DMatrix<f64>, xi: &KroneckerScale, nu: Nu, active: &[usize]) -> Result<AsymptoticCov> {
    let dims = xi.dims();
    check_active(active, xi.total_dim(), sx.nrows())?;
    let modes = xi.modes();
    let bread = restricted_kron(sx, &dims, active, |_, a, b| if a == b { 1.0 } else { 0.0 });
    let meat = restricted_kron(sx, &dims, active, |m, a, b| modes[m][(a, b)]);
    let bi = inverse(&bread, "Σ_X ⊗ I")?;
    let mut v = &bi * meat * &bi * n_factor(nu)?;
    linalg::symmetrize(&mut v);
    Ok(AsymptoticCov {
        matrix: v,
        flavor: CovFlavor::L,
        active_set: active.to_vec(),
    })
}

/// `V = V_T + 4 (V_L − V_T)/(ν+p+2)²`.
pub fn cov_ost(t: &AsymptoticCov, l: &AsymptoticCov, nu: Nu, p: usize) -> Result<AsymptoticCov> {
    if t.active_set != l.active_set || t.matrix.shape() != l.matrix.shape() {
        return Err(Error::Shape("V_T and V_L are on different active sets".into()));
    }
    let c = match nu {
        Nu::Finite(v) => 4.0 / (v + p as f64 + 2.0).powi(2),
        Nu::Infinite => 0.0,
    };
    let mut v = &t.matrix + (&l.matrix - &t.matrix) * c;
    linalg::symmetrize(&mut v);
    Ok(AsymptoticCov {
        matrix: v,
        flavor: CovFlavor::Ost,
        active_set: t.active_set.clone(),
    })
}

/// The covariance matching the fitting method, on the fit's active set.
/// `nu` overrides the fit's `ν` (e.g. with an ECME estimate).
pub fn fit_covariance(fit: &FitResult, sx: &DMatrix<f64>, nu: Option<Nu>) -> Result<AsymptoticCov> {
    let dims = &fit.b_hat.dims()[..fit.b_hat.order() - 1];
    method_covariance(fit.method, &fit.b_matrix(), dims, fit.xi_hat.as_ref(), nu.unwrap_or(fit.nu_used), sx)
}

/// [`fit_covariance`] from the pieces of a fit: `b` is `p×q`, `dims` the
/// response dims, and a missing `xi` means the identity.
pub fn method_covariance(
    method: Method,
    b: &DMatrix<f64>,
    dims: &[usize],
    xi: Option<&KroneckerScale>,
    nu: Nu,
    sx: &DMatrix<f64>,
) -> Result<AsymptoticCov> {
    let active = active_set(b);
    let identity = KroneckerScale::identity(dims);
    let xi = xi.unwrap_or(&identity);
    if xi.total_dim() != b.nrows() || sx.nrows() != b.ncols() {
        return Err(Error::Shape("covariance inputs disagree with the coefficients".into()));
    }
    match method {
        Method::Apt => cov_t(sx, xi, nu, &active),
        Method::Apn => cov_n(sx, xi, nu, &active),
        Method::Ost | Method::Host => {
            let t = cov_t(sx, xi, nu, &active)?;
            let l = cov_l(sx, xi, nu, &active)?;
            cov_ost(&t, &l, nu, xi.total_dim())
        }
        Method::Apl | Method::Ols | Method::Tols => cov_l(sx, xi, nu, &active),
    }
}

/// A differentiable map `h` of `vec(B)` with its Jacobian.
pub trait Restriction {
    fn value(&self, b: &DVector<f64>) -> DVector<f64>;
    /// `k × pq` Jacobian of `h` at `b`.
    fn jacobian(&self, b: &DVector<f64>) -> DMatrix<f64>;
    fn describe(&self) -> String;
}

/// `h(b) = R b` for a `k × pq` matrix `R`.
#[derive(Clone, Debug)]
pub struct LinearRestriction {
    pub matrix: DMatrix<f64>,
}

impl LinearRestriction {
    /// Selects the listed coordinates of `vec(B)`.
    pub fn coordinates(coords: &[usize], pq: usize) -> Self {
        let mut matrix = DMatrix::zeros(coords.len(), pq);
        for (r, &c) in coords.iter().enumerate() {
            matrix[(r, c)] = 1.0;
        }
        Self { matrix }
    }
}

impl Restriction for LinearRestriction {
    fn value(&self, b: &DVector<f64>) -> DVector<f64> {
        &self.matrix * b
    }

    fn jacobian(&self, _b: &DVector<f64>) -> DMatrix<f64> {
        self.matrix.clone()
    }

    fn describe(&self) -> String {
        let rows: Vec<String> = self
            .matrix
            .row_iter()
            .map(|r| {
                let terms: Vec<String> = r
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, v)| format!("{}*b[{}]", v, i))
                    .collect();
                terms.join(" + ")
            })
            .collect();
        rows.join("; ")
    }
}

/// `T = n (h(b̂) − h₀)ᵀ (Ĥ V̂ Ĥᵀ)^{-1} (h(b̂) − h₀)` with `Ĥ` the Jacobian
/// restricted to the active set; p-value from the `χ²_k` upper tail.
pub fn wald_test(
    b_hat: &DMatrix<f64>,
    cov: &AsymptoticCov,
    n: usize,
    h: &dyn Restriction,
    null_value: &DVector<f64>,
) -> Result<TestResult> {
    let b = DVector::from_column_slice(b_hat.as_slice());
    let jac = h.jacobian(&b);
    if jac.ncols() != b.len() || jac.nrows() != null_value.len() {
        return Err(Error::Shape("restriction does not match the coefficients".into()));
    }
    let k = jac.nrows();
    for (c, col) in jac.column_iter().enumerate() {
        if col.iter().any(|v| *v != 0.0) && !cov.active_set.contains(&c) {
            return Err(Error::InvalidArgument(format!(
                "hypothesis involves coordinate {} which is estimated as zero",
                c
            )));
        }
    }
    let ha = jac.select_columns(&cov.active_set);
    let mid = &ha * &cov.matrix * ha.transpose();
    let d = h.value(&b) - null_value;
    let sol = linalg::cholesky(&mid, "H V Hᵀ")
        .map_err(|_| Error::Singular("the restriction's Jacobian is rank deficient".into()))?
        .solve(&d);
    let statistic = (n as f64 * d.dot(&sol)).max(0.0);
    let chi = ChiSquared::new(k as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(TestResult {
        statistic,
        df: k,
        p_value: chi.sf(statistic),
        hypothesis: format!("{} = {:?}", h.describe(), null_value.as_slice()),
    })
}

/// `b̂_j ± z_{(1+level)/2} √(V̂_jj / n)`.
pub fn confidence_interval(b_hat: &DMatrix<f64>, cov: &AsymptoticCov, n: usize, coordinate: usize, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must be in (0,1), got {}", level)));
    }
    let pos = cov
        .active_set
        .iter()
        .position(|&a| a == coordinate)
        .ok_or_else(|| Error::InvalidArgument(format!("coordinate {} is estimated as zero", coordinate)))?;
    let v = cov.matrix[(pos, pos)];
    if !(v > 0.0) {
        return Err(Error::Degenerate("zero asymptotic variance".into()));
    }
    let z = normal_quantile(0.5 * (1.0 + level));
    let half = z * (v / n as f64).sqrt();
    let b = b_hat.as_slice()[coordinate];
    Ok((b - half, b + half))
}

pub fn normal_quantile(prob: f64) -> f64 {
    Normal::standard().inverse_cdf(prob)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_identity_case() {
        let sx = DMatrix::identity(1, 1);
        let xi = KroneckerScale::identity(&[3]);
        let v = cov_t(&sx, &xi, Nu::Finite(4.0), &[0, 1, 2]).unwrap();
        let f = (4.0 + 3.0 + 2.0) / (4.0 + 3.0);
        assert!((&v.matrix - DMatrix::identity(3, 3) * f).amax() < 1e-14);
    }

    #[test]
    fn ost_mixture_weight() {
        let t = AsymptoticCov {
            matrix: DMatrix::identity(2, 2),
            flavor: CovFlavor::T,
            active_set: vec![0, 1],
        };
        let l = AsymptoticCov {
            matrix: DMatrix::identity(2, 2) * 2.0,
            flavor: CovFlavor::L,
            active_set: vec![0, 1],
        };
        let v = cov_ost(&t, &l, Nu::Finite(4.0), 4).unwrap();
        assert!((v.matrix[(0, 0)] - 1.04).abs() < 1e-15);
        let same = cov_ost(&t, &t, Nu::Finite(4.0), 4).unwrap();
        assert_eq!(same.matrix, t.matrix);
    }

    #[test]
    fn z_value() {
        assert!((normal_quantile(0.975) - 1.959964).abs() < 1e-6);
    }
}
