use nalgebra::DMatrix;

use super::DenseTensor;
use crate::error::{Error, Result};
use crate::linalg;

/// Largest `p` for which [`kron_materialize`] builds the `p×p` matrix.
pub const DEFAULT_KRON_CAP: usize = 4096;

/// Separable scale `Ξ = {Σ_1, …, Σ_M}` standing for `Σ_M ⊗ … ⊗ Σ_1`.
#[derive(Clone, Debug, PartialEq)]
pub struct KroneckerScale {
    modes: Vec<DMatrix<f64>>,
    normalized: bool,
}

impl KroneckerScale {
    /// Validates symmetry and positive definiteness of every mode matrix.
    pub fn new(modes: Vec<DMatrix<f64>>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::Shape("a scale needs at least one mode".into()));
        }
        for (m, s) in modes.iter().enumerate() {
            let what = format!("mode {} matrix", m);
            linalg::check_symmetric(s, &what)?;
            linalg::cholesky(s, &what)?;
        }
        let normalized = is_normalized(&modes);
        Ok(Self { modes, normalized })
    }

    pub fn identity(dims: &[usize]) -> Self {
        Self {
            modes: dims.iter().map(|&p| DMatrix::identity(p, p)).collect(),
            normalized: true,
        }
    }

    pub fn modes(&self) -> &[DMatrix<f64>] {
        &self.modes
    }

    pub fn into_modes(self) -> Vec<DMatrix<f64>> {
        self.modes
    }

    pub fn order(&self) -> usize {
        self.modes.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.modes.iter().map(|s| s.nrows()).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.modes.iter().map(|s| s.nrows()).product()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Sets `Σ_m[1,1] = 1` for every mode but the last, which absorbs the
    /// removed scale. The Kronecker product is unchanged.
    pub fn normalize(&self) -> Result<Self> {
        let m = self.modes.len();
        let mut modes = self.modes.clone();
        let mut carry = 1.0;
        for (k, s) in modes.iter_mut().enumerate().take(m - 1) {
            let a = s[(0, 0)];
            if !(a > 0.0) {
                return Err(Error::NotSpd(format!("mode {} has non-positive leading entry", k)));
            }
            *s /= a;
            carry *= a;
        }
        modes[m - 1] *= carry;
        Ok(Self { modes, normalized: true })
    }

    /// Cholesky-based factors used for whitening and inverses.
    pub fn factor(&self) -> Result<ScaleFactor> {
        let mut chol_inv = Vec::with_capacity(self.modes.len());
        let mut inv = Vec::with_capacity(self.modes.len());
        let mut log_dets = Vec::with_capacity(self.modes.len());
        for (m, s) in self.modes.iter().enumerate() {
            let c = linalg::cholesky(s, &format!("mode {} matrix", m))?;
            log_dets.push(linalg::log_det_from_chol(&c));
            let ci = linalg::chol_factor_inverse(&c)?;
            let mut si = ci.transpose() * &ci;
            linalg::symmetrize(&mut si);
            chol_inv.push(ci);
            inv.push(si);
        }
        Ok(ScaleFactor {
            dims: self.dims(),
            chol_inv,
            inv,
            log_dets,
        })
    }
}

fn is_normalized(modes: &[DMatrix<f64>]) -> bool {
    modes[..modes.len() - 1].iter().all(|s| s[(0, 0)] == 1.0)
}

/// Factorized form of a [`KroneckerScale`].
#[derive(Clone, Debug)]
pub struct ScaleFactor {
    dims: Vec<usize>,
    chol_inv: Vec<DMatrix<f64>>,
    inv: Vec<DMatrix<f64>>,
    log_dets: Vec<f64>,
}

impl ScaleFactor {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// `Σ_m^{-1}` for each mode.
    pub fn inverses(&self) -> &[DMatrix<f64>] {
        &self.inv
    }

    /// `C_m^{-1}` where `Σ_m = C_m C_mᵀ`.
    pub fn whiteners(&self) -> &[DMatrix<f64>] {
        &self.chol_inv
    }

    pub fn mode_log_dets(&self) -> &[f64] {
        &self.log_dets
    }

    /// `log |Σ_M ⊗ … ⊗ Σ_1| = Σ_m p_{-m} log |Σ_m|`.
    pub fn log_det(&self) -> f64 {
        let p = self.total_dim();
        self.dims
            .iter()
            .zip(&self.log_dets)
            .map(|(&pm, ld)| (p / pm) as f64 * ld)
            .sum()
    }

    /// Applies `C_m^{-1}` along every leading mode except `skip`. Trailing
    /// modes beyond the scale's order (e.g. a sample mode) are untouched.
    pub fn whiten(&self, t: &DenseTensor, skip: Option<usize>) -> Result<DenseTensor> {
        self.check_leading(t)?;
        let mut out: Option<DenseTensor> = None;
        for (m, c) in self.chol_inv.iter().enumerate() {
            if Some(m) == skip {
                continue;
            }
            let src = out.as_ref().unwrap_or(t);
            out = Some(src.mode_product(c, m)?);
        }
        Ok(out.unwrap_or_else(|| t.clone()))
    }

    /// `vec(D)ᵀ (⊗Σ_m)^{-1} vec(D)` without materializing the Kronecker matrix.
    pub fn mahalanobis_sq(&self, d: &DenseTensor) -> Result<f64> {
        if d.dims() != self.dims.as_slice() {
            return Err(Error::Shape(format!("tensor {:?} vs scale {:?}", d.dims(), self.dims)));
        }
        Ok(self.whiten(d, None)?.frobenius_sq())
    }

    /// Squared distances of every sample in a stack `p_1×…×p_M×n`.
    pub fn mahalanobis_stack(&self, stack: &DenseTensor) -> Result<Vec<f64>> {
        if stack.order() != self.dims.len() + 1 {
            return Err(Error::Shape(format!("stack {:?} vs scale {:?}", stack.dims(), self.dims)));
        }
        let z = self.whiten(stack, None)?;
        let p = self.total_dim();
        Ok(z.data().chunks(p).map(|c| c.iter().map(|v| v * v).sum()).collect())
    }

    /// Diagonal of `Ω = Σ_M^{-1} ⊗ … ⊗ Σ_1^{-1}` in vec order.
    pub fn precision_diagonal(&self) -> Vec<f64> {
        let diags: Vec<Vec<f64>> = self.inv.iter().map(|s| s.diagonal().iter().cloned().collect()).collect();
        kron_vectors(&diags)
    }

    /// Column `j` of `Ω` in vec order, written into `out`.
    pub fn precision_column(&self, j: usize, out: &mut Vec<f64>) {
        self.leading_column(j, self.dims.len(), out);
    }

    /// Column `j` of `⊗_{m<k} Σ_m^{-1}`.
    fn leading_column(&self, mut j: usize, k: usize, out: &mut Vec<f64>) {
        out.clear();
        out.push(1.0);
        for (s, &d) in self.inv[..k].iter().zip(&self.dims[..k]) {
            let i = j % d;
            j /= d;
            let len = out.len();
            out.resize(len * d, 0.0);
            let (head, tail) = out.split_at_mut(len);
            for (b, block) in tail.chunks_exact_mut(len).enumerate() {
                let sb = s[(b + 1, i)];
                block.iter_mut().zip(head.iter()).for_each(|(o, h)| *o = h * sb);
            }
            let s0 = s[(0, i)];
            head.iter_mut().for_each(|h| *h *= s0);
        }
    }

    /// `g ← g + c Ω[:, j]` without forming the full column; `buf` is scratch.
    pub fn add_precision_column(&self, j: usize, c: f64, g: &mut [f64], buf: &mut Vec<f64>) {
        let m = self.dims.len();
        let last = self.dims[m - 1];
        let lead = g.len() / last;
        self.leading_column(j % lead, m - 1, buf);
        let s = &self.inv[m - 1];
        let jm = j / lead;
        for (b, block) in g.chunks_exact_mut(lead).enumerate() {
            let cb = c * s[(b, jm)];
            if cb != 0.0 {
                block.iter_mut().zip(buf.iter()).for_each(|(g, v)| *g += cb * v);
            }
        }
    }

    fn check_leading(&self, t: &DenseTensor) -> Result<()> {
        if t.order() < self.dims.len() || t.dims()[..self.dims.len()] != self.dims[..] {
            return Err(Error::Shape(format!("tensor {:?} vs scale {:?}", t.dims(), self.dims)));
        }
        Ok(())
    }
}

/// `v_M ⊗ … ⊗ v_1` in vec order (first factor fastest).
fn kron_vectors(vs: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![1.0];
    for v in vs {
        let mut next = Vec::with_capacity(out.len() * v.len());
        for &b in v {
            next.extend(out.iter().map(|a| a * b));
        }
        out = next;
    }
    out
}

pub fn mahalanobis_sq(d: &DenseTensor, xi: &KroneckerScale) -> Result<f64> {
    xi.factor()?.mahalanobis_sq(d)
}

/// `Σ_M ⊗ … ⊗ Σ_1` as a dense matrix. Test support only.
pub fn kron_materialize(xi: &KroneckerScale) -> Result<DMatrix<f64>> {
    kron_materialize_capped(xi, DEFAULT_KRON_CAP)
}

pub fn kron_materialize_capped(xi: &KroneckerScale, cap: usize) -> Result<DMatrix<f64>> {
    let p = xi.total_dim();
    if p > cap {
        return Err(Error::InvalidArgument(format!(
            "materializing a {}x{} Kronecker product exceeds the cap {}",
            p, p, cap
        )));
    }
    let mut k = xi.modes()[0].clone();
    for s in &xi.modes()[1..] {
        k = s.kronecker(&k);
    }
    Ok(k)
}

/// AR(1) correlation matrix with entries `ρ^{|i-j|}`.
pub fn ar_matrix(p: usize, rho: f64) -> Result<DMatrix<f64>> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidArgument(format!("AR correlation must satisfy |rho| < 1, got {}", rho)));
    }
    if p == 0 {
        return Err(Error::Shape("AR matrix of size 0".into()));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32)))
}
