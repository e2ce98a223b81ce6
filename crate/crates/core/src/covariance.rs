//! Separable scale estimation: weighted flip-flop, plug-in `Ξ` given a
//! coefficient estimate, the closed-form HOST estimator and normalization.

use nalgebra::{DMatrix, DMatrixView};

use crate::distributions::Nu;
use crate::error::{Error, Result};
use crate::estimators::Dataset;
use crate::linalg;
use crate::tensor::{DenseTensor, KroneckerScale};

#[derive(Clone, Copy, Debug)]
pub struct FlipFlopOptions {
    pub tol: f64,
    pub max_sweeps: usize,
}

impl Default for FlipFlopOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_sweeps: 200,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FlipFlopState {
    pub xi: KroneckerScale,
    pub iteration: usize,
    pub last_delta: f64,
    pub converged: bool,
}

pub fn normalize(xi: &KroneckerScale) -> Result<KroneckerScale> {
    xi.normalize()
}

/// Splits a stack `p_1×…×p_M×n` into its scale dims and sample count.
fn stack_shape(residuals: &DenseTensor) -> Result<(Vec<usize>, usize)> {
    let m = residuals.order();
    if m < 2 {
        return Err(Error::Shape("residual stack needs a trailing sample mode".into()));
    }
    Ok((residuals.dims()[..m - 1].to_vec(), residuals.dims()[m - 1]))
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::Shape(format!("{} weights for {} samples", weights.len(), n)));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidArgument("weights must be positive and finite".into()));
    }
    Ok(())
}

/// `n p_{-m} > p_m` for every mode.
pub fn check_sample_size(dims: &[usize], n: usize) -> Result<()> {
    let p: usize = dims.iter().product();
    for (m, &pm) in dims.iter().enumerate() {
        if n * (p / pm) <= pm {
            return Err(Error::Precondition(format!(
                "n * p_-m = {} must exceed p_m = {} for mode {}",
                n * (p / pm),
                pm,
                m
            )));
        }
    }
    Ok(())
}

/// Each sample multiplied by the square root of its weight.
fn weighted_stack(residuals: &DenseTensor, weights: &[f64]) -> DenseTensor {
    let n = weights.len();
    let p = residuals.len() / n;
    let mut out = residuals.clone();
    for (chunk, w) in out.data_mut().chunks_mut(p).zip(weights) {
        let s = w.sqrt();
        chunk.iter_mut().for_each(|v| *v *= s);
    }
    out
}

/// `Σ_fibers Z_(m) Z_(m)ᵀ` over a stack, without forming the unfolding.
fn mode_gram(z: &DenseTensor, m: usize) -> DMatrix<f64> {
    let dims = z.dims();
    let left: usize = dims[..m].iter().product();
    let pm = dims[m];
    let right: usize = dims[m + 1..].iter().product();
    let data = z.data();
    let mut g = DMatrix::zeros(pm, pm);
    if left == 1 {
        let a = DMatrixView::from_slice(data, pm, right);
        g.gemm(1.0, &a, &a.transpose(), 0.0);
    } else {
        for r in 0..right {
            let a = DMatrixView::from_slice(&data[r * left * pm..(r + 1) * left * pm], left, pm);
            g.gemm_tr(1.0, &a, &a, 1.0);
        }
    }
    linalg::symmetrize(&mut g);
    g
}

/// One conditional update of mode `m` given the other modes.
fn mode_update(wstack: &DenseTensor, xi: &KroneckerScale, m: usize, n: usize) -> Result<DMatrix<f64>> {
    let dims = xi.dims();
    let p: usize = dims.iter().product();
    let z = if xi.order() == 1 {
        wstack.clone()
    } else {
        xi.factor()?.whiten(wstack, Some(m))?
    };
    Ok(mode_gram(&z, m) / (n * (p / dims[m])) as f64)
}

fn replace_mode(xi: &KroneckerScale, m: usize, s: DMatrix<f64>) -> Result<KroneckerScale> {
    let mut modes = xi.modes().to_vec();
    modes[m] = s;
    KroneckerScale::new(modes).map_err(|e| match e {
        Error::NotSpd(msg) => Error::NotSpd(format!("flip-flop lost positive definiteness in mode {}: {}", m, msg)),
        other => other,
    })
}

/// Max over modes of the relative Frobenius change between normalized scales.
pub fn relative_change(old: &KroneckerScale, new: &KroneckerScale) -> Result<f64> {
    let a = old.normalize()?;
    let b = new.normalize()?;
    Ok(a.modes()
        .iter()
        .zip(b.modes())
        .map(|(x, y)| (x - y).norm() / x.norm())
        .fold(0.0, f64::max))
}

/// Weighted flip-flop started from the identity.
pub fn weighted_flip_flop(residuals: &DenseTensor, weights: &[f64]) -> Result<FlipFlopState> {
    let (dims, _) = stack_shape(residuals)?;
    weighted_flip_flop_from(residuals, weights, &KroneckerScale::identity(&dims), FlipFlopOptions::default())
}

/// Cyclic updates `Σ_m ← (n p_{-m})^{-1} Σ_i ω_i R_i(m) (⊗_{j≠m} Σ_j^{-1}) R_i(m)ᵀ`
/// for `m = 1..M` until the normalized scale stops moving.
pub fn weighted_flip_flop_from(
    residuals: &DenseTensor,
    weights: &[f64],
    start: &KroneckerScale,
    opts: FlipFlopOptions,
) -> Result<FlipFlopState> {
    let (dims, n) = stack_shape(residuals)?;
    if start.dims() != dims {
        return Err(Error::Shape(format!("start scale {:?} vs residuals {:?}", start.dims(), dims)));
    }
    check_weights(weights, n)?;
    check_sample_size(&dims, n)?;
    let wstack = weighted_stack(residuals, weights);

    if dims.len() == 1 {
        let s = mode_update(&wstack, start, 0, n)?;
        let xi = replace_mode(start, 0, s)?;
        return Ok(FlipFlopState {
            xi,
            iteration: 1,
            last_delta: 0.0,
            converged: true,
        });
    }

    let mut xi = start.normalize()?;
    let mut delta = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        let prev = xi.clone();
        for m in 0..dims.len() {
            let s = mode_update(&wstack, &xi, m, n)?;
            xi = replace_mode(&xi, m, s)?;
        }
        xi = xi.normalize()?;
        delta = relative_change(&prev, &xi)?;
        if delta < opts.tol {
            return Ok(FlipFlopState {
                xi,
                iteration: sweep,
                last_delta: delta,
                converged: true,
            });
        }
    }
    log::warn!("flip-flop stopped after {} sweeps (delta {:.3e})", opts.max_sweeps, delta);
    Ok(FlipFlopState {
        xi,
        iteration: opts.max_sweeps,
        last_delta: delta,
        converged: false,
    })
}

/// `H_n(Ξ) = Σ_m (n p_{-m}/2) log|Σ_m| + ½ Σ_i ω_i ‖R_i‖²_Ξ`.
pub fn flip_flop_objective(residuals: &DenseTensor, weights: &[f64], xi: &KroneckerScale) -> Result<f64> {
    let (_, n) = stack_shape(residuals)?;
    check_weights(weights, n)?;
    let f = xi.factor()?;
    let d = f.mahalanobis_stack(residuals)?;
    let quad: f64 = d.iter().zip(weights).map(|(d, w)| w * d).sum();
    Ok(0.5 * n as f64 * f.log_det() + 0.5 * quad)
}

/// Largest relative Frobenius violation of the fixed-point equalities
/// `Σ_m = (n p_{-m})^{-1} Σ_i ω_i R_i(m) (⊗_{j≠m} Σ_j^{-1}) R_i(m)ᵀ`.
pub fn stationarity_residual(residuals: &DenseTensor, weights: &[f64], xi: &KroneckerScale) -> Result<f64> {
    let (_, n) = stack_shape(residuals)?;
    check_weights(weights, n)?;
    let wstack = weighted_stack(residuals, weights);
    let mut worst: f64 = 0.0;
    for (m, s) in xi.modes().iter().enumerate() {
        let u = mode_update(&wstack, xi, m, n)?;
        worst = worst.max((&u - s).norm() / s.norm());
    }
    Ok(worst)
}

/// Exact minimizer `c` of `(n p/2) log c + ((ν+p)/2) Σ_i log(1 + d_i/(c ν))`,
/// the plug-in objective along the overall scale `Ξ → cΞ`.
pub fn optimal_scale(dist_sq: &[f64], nu: Nu, p: usize) -> Result<f64> {
    let n = dist_sq.len() as f64;
    let p = p as f64;
    let total: f64 = dist_sq.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("all residuals are zero; scale is undefined".into()));
    }
    let nu = match nu {
        Nu::Infinite => return Ok(total / (n * p)),
        Nu::Finite(v) => v,
    };
    // g is strictly decreasing in c with g(0+) = nν > 0 and g(∞) = −np.
    let g = |c: f64| dist_sq.iter().map(|&d| (nu + p) * d / (c * nu + d)).sum::<f64>() - n * p;
    let mut lo = total / (n * p);
    let mut hi = lo;
    while g(lo) < 0.0 {
        lo *= 0.5;
    }
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub(crate) fn rescale(xi: &KroneckerScale, c: f64) -> Result<KroneckerScale> {
    let mut modes = xi.modes().to_vec();
    let last = modes.len() - 1;
    modes[last] *= c;
    KroneckerScale::new(modes)
}

#[derive(Clone, Debug)]
pub struct PluginFit {
    pub xi: KroneckerScale,
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct PluginOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub flip_flop: FlipFlopOptions,
}

impl Default for PluginOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 200,
            flip_flop: FlipFlopOptions::default(),
        }
    }
}

/// Plug-in scale for a fixed coefficient estimate: alternates the weights
/// `ω_i = (ν+p)/(ν+‖R_i‖²_Ξ)` with a converged weighted flip-flop.
pub fn plugin_xi(dataset: &Dataset, b_hat: &DMatrix<f64>, nu: Nu) -> Result<PluginFit> {
    let residuals = dataset.residuals(b_hat)?;
    plugin_xi_residuals(&residuals, nu, None, PluginOptions::default())
}

/// [`plugin_xi`] on precomputed residuals with an optional warm start.
pub fn plugin_xi_residuals(
    residuals: &DenseTensor,
    nu: Nu,
    start: Option<&KroneckerScale>,
    opts: PluginOptions,
) -> Result<PluginFit> {
    let (dims, n) = stack_shape(residuals)?;
    let p = residuals.len() / n;
    if residuals.data().iter().all(|v| *v == 0.0) {
        return Err(Error::Degenerate("all residuals are zero; scale is undefined".into()));
    }
    let mut xi = match start {
        Some(s) => s.normalize()?,
        None => KroneckerScale::identity(&dims),
    };
    if nu.is_infinite() {
        let ones = vec![1.0; n];
        let st = weighted_flip_flop_from(residuals, &ones, &xi, opts.flip_flop)?;
        return Ok(PluginFit {
            xi: st.xi,
            weights: ones,
            iterations: 1,
            converged: st.converged,
        });
    }
    let mut weights = vec![1.0; n];
    for it in 1..=opts.max_iter {
        let prev = xi.clone();
        let d = xi.factor()?.mahalanobis_stack(residuals)?;
        let c = optimal_scale(&d, nu, p)?;
        xi = rescale(&xi, c)?;
        weights = d.iter().map(|&d| nu.weight(d / c, p)).collect();
        let st = weighted_flip_flop_from(residuals, &weights, &xi, opts.flip_flop)?;
        xi = st.xi;
        if relative_change(&prev, &xi)? < opts.tol {
            let d = xi.factor()?.mahalanobis_stack(residuals)?;
            weights = d.iter().map(|&d| nu.weight(d, p)).collect();
            return Ok(PluginFit {
                xi,
                weights,
                iterations: it,
                converged: true,
            });
        }
    }
    log::warn!("plug-in scale stopped after {} iterations", opts.max_iter);
    let d = xi.factor()?.mahalanobis_stack(residuals)?;
    weights.iter_mut().zip(&d).for_each(|(w, &d)| *w = nu.weight(d, p));
    Ok(PluginFit {
        xi,
        weights,
        iterations: opts.max_iter,
        converged: false,
    })
}

/// `ω̂_i = p / ‖R_i‖²`.
pub fn euclidean_weights(residuals: &DenseTensor) -> Result<Vec<f64>> {
    let (_, n) = stack_shape(residuals)?;
    let p = residuals.len() / n;
    residuals
        .data()
        .chunks(p)
        .map(|c| {
            let s: f64 = c.iter().map(|v| v * v).sum();
            if s > 0.0 {
                Ok(p as f64 / s)
            } else {
                Err(Error::Degenerate("a residual is exactly zero".into()))
            }
        })
        .collect()
}

/// Non-iterative `Σ̂_m = (n p_{-m})^{-1} Σ_i ω̂_i R_i(m) R_i(m)ᵀ`, normalized.
pub fn host_sigma(residuals: &DenseTensor, weights: &[f64]) -> Result<KroneckerScale> {
    let (dims, n) = stack_shape(residuals)?;
    check_weights(weights, n)?;
    if residuals.data().iter().all(|v| *v == 0.0) {
        return Err(Error::Degenerate("all residuals are zero".into()));
    }
    let p: usize = dims.iter().product();
    let wstack = weighted_stack(residuals, weights);
    let modes = (0..dims.len())
        .map(|m| mode_gram(&wstack, m) / (n * (p / dims[m])) as f64)
        .collect();
    KroneckerScale::new(modes)
        .map_err(|e| match e {
            Error::NotSpd(msg) => Error::NotSpd(format!("HOST mode covariance is singular: {}", msg)),
            other => other,
        })?
        .normalize()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_case_is_weighted_covariance() {
        let r = DenseTensor::new(vec![2, 3], vec![1.0, 0.0, 0.0, 2.0, 1.0, 1.0]).unwrap();
        let w = [1.0, 2.0, 0.5];
        let st = weighted_flip_flop(&r, &w).unwrap();
        let s = &st.xi.modes()[0];
        assert!((s[(0, 0)] - (1.0 + 0.5) / 3.0).abs() < 1e-15);
        assert!((s[(1, 1)] - (8.0 + 0.5) / 3.0).abs() < 1e-15);
        assert!((s[(0, 1)] - 0.5 / 3.0).abs() < 1e-15);
        assert_eq!(st.iteration, 1);
    }

    #[test]
    fn sample_size_precondition() {
        let r = DenseTensor::zeros(&[2, 2, 1]).unwrap();
        assert!(matches!(weighted_flip_flop(&r, &[1.0]), Err(Error::Precondition(_))));
    }

    #[test]
    fn optimal_scale_solves_first_order_condition() {
        let d = [3.0, 10.0, 0.5, 7.0];
        let c = optimal_scale(&d, Nu::Finite(4.0), 5).unwrap();
        let g: f64 = d.iter().map(|&d| 9.0 * d / (c * 4.0 + d)).sum::<f64>() - 20.0;
        assert!(g.abs() < 1e-10);
    }
}
