use statrs::function::gamma::digamma;

use super::{log_density_from_parts, Nu};
use crate::covariance::{self, FlipFlopOptions};
use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, KroneckerScale};

#[derive(Clone, Copy, Debug)]
pub struct EmOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub flip_flop: FlipFlopOptions,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            flip_flop: FlipFlopOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EmFit {
    pub mu: DenseTensor,
    pub xi: KroneckerScale,
    pub weights: Vec<f64>,
    /// Negative log-likelihood at the start and after every iteration.
    pub nll_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn split_stack(samples: &DenseTensor) -> Result<(Vec<usize>, usize, usize)> {
    let m = samples.order();
    if m < 2 {
        return Err(Error::Shape("samples must be stacked along a trailing mode".into()));
    }
    let n = samples.dims()[m - 1];
    Ok((samples.dims()[..m - 1].to_vec(), n, samples.len() / n))
}

fn centered(samples: &DenseTensor, mu: &[f64]) -> DenseTensor {
    let mut r = samples.clone();
    for chunk in r.data_mut().chunks_mut(mu.len()) {
        chunk.iter_mut().zip(mu).for_each(|(v, m)| *v -= m);
    }
    r
}

/// `−Σ_i log f(Y_i; μ, Ξ, ν)`.
pub fn negative_log_likelihood(samples: &DenseTensor, mu: &DenseTensor, xi: &KroneckerScale, nu: Nu) -> Result<f64> {
    let (dims, _, p) = split_stack(samples)?;
    if mu.dims() != dims.as_slice() {
        return Err(Error::Shape(format!("location {:?} vs samples {:?}", mu.dims(), samples.dims())));
    }
    let f = xi.factor()?;
    let d = f.mahalanobis_stack(&centered(samples, mu.data()))?;
    let ld = f.log_det();
    Ok(-d.iter().map(|&d| log_density_from_parts(d, ld, nu, p)).sum::<f64>())
}

/// Maximum likelihood `(μ, Ξ)` for i.i.d. `TT(μ, Ξ, ν)` samples stacked as
/// `p_1×…×p_M×n`. Each iteration is an E-step for the weights, the weighted
/// mean, a warm-started weighted flip-flop and an exact rescaling of `Ξ`, so
/// the negative log-likelihood never increases.
pub fn em_fit_location_scale(samples: &DenseTensor, nu: Nu, opts: EmOptions) -> Result<EmFit> {
    let (dims, n, p) = split_stack(samples)?;
    if n < 2 {
        return Err(Error::Precondition("at least two samples are required".into()));
    }
    covariance::check_sample_size(&dims, n)?;

    let mut mu = vec![0.0; p];
    for chunk in samples.data().chunks(p) {
        mu.iter_mut().zip(chunk).for_each(|(m, v)| *m += v / n as f64);
    }
    let mut xi = KroneckerScale::identity(&dims);
    let mut weights = vec![1.0; n];
    let mu_t = |mu: &[f64]| DenseTensor::new(dims.clone(), mu.to_vec());
    let mut nll = negative_log_likelihood(samples, &mu_t(&mu)?, &xi, nu)?;
    let mut trace = vec![nll];

    for it in 1..=opts.max_iter {
        let d = xi.factor()?.mahalanobis_stack(&centered(samples, &mu))?;
        weights = d.iter().map(|&d| nu.weight(d, p)).collect();
        let wsum: f64 = weights.iter().sum();
        let mut next = vec![0.0; p];
        for (chunk, w) in samples.data().chunks(p).zip(&weights) {
            next.iter_mut().zip(chunk).for_each(|(m, v)| *m += w * v / wsum);
        }
        mu = next;
        let r = centered(samples, &mu);
        xi = covariance::weighted_flip_flop_from(&r, &weights, &xi, opts.flip_flop)?.xi;
        if !nu.is_infinite() {
            let d = xi.factor()?.mahalanobis_stack(&r)?;
            xi = covariance::rescale(&xi, covariance::optimal_scale(&d, nu, p)?)?;
        }
        let next_nll = negative_log_likelihood(samples, &mu_t(&mu)?, &xi, nu)?;
        trace.push(next_nll);
        let rel = (nll - next_nll).abs() / nll.abs().max(1.0);
        nll = next_nll;
        if rel < opts.tol {
            let d = xi.factor()?.mahalanobis_stack(&r)?;
            weights = d.iter().map(|&d| nu.weight(d, p)).collect();
            return Ok(EmFit {
                mu: mu_t(&mu)?,
                xi,
                weights,
                nll_trace: trace,
                iterations: it,
                converged: true,
            });
        }
    }
    log::warn!("EM stopped after {} iterations without meeting tolerance", opts.max_iter);
    Ok(EmFit {
        mu: mu_t(&mu)?,
        xi,
        weights,
        nll_trace: trace,
        iterations: opts.max_iter,
        converged: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BracketBound {
    Lower,
    Upper,
}

#[derive(Clone, Copy, Debug)]
pub struct EcmeOptions {
    pub lower: f64,
    pub upper: f64,
    pub start: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub flip_flop: FlipFlopOptions,
}

impl Default for EcmeOptions {
    fn default() -> Self {
        Self {
            lower: 0.1,
            upper: 1000.0,
            start: 4.0,
            tol: 1e-6,
            max_iter: 200,
            flip_flop: FlipFlopOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct NuEstimate {
    pub nu: f64,
    pub xi: KroneckerScale,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the root solve ended on a bracket end point.
    pub at_bound: Option<BracketBound>,
}

/// Derivative (times 2/n) of the log-likelihood in `ν` at fixed `Ξ`:
/// `−ψ(ν/2) + ln(ν/2) + mean(ln ω_i − ω_i) + 1 + ψ((ν+p)/2) − ln((ν+p)/2)`
/// with `ω_i = (ν+p)/(ν+d_i)`.
pub(crate) fn nu_score(nu: f64, dist_sq: &[f64], p: usize) -> f64 {
    let pf = p as f64;
    let n = dist_sq.len() as f64;
    let mean: f64 = dist_sq
        .iter()
        .map(|&d| {
            let w = (nu + pf) / (nu + d);
            w.ln() - w
        })
        .sum::<f64>()
        / n;
    -digamma(0.5 * nu) + (0.5 * nu).ln() + mean + 1.0 + digamma(0.5 * (nu + pf)) - (0.5 * (nu + pf)).ln()
}

fn solve_nu(dist_sq: &[f64], p: usize, lo: f64, hi: f64) -> (f64, Option<BracketBound>) {
    let s_lo = nu_score(lo, dist_sq, p);
    let s_hi = nu_score(hi, dist_sq, p);
    if s_hi >= 0.0 && s_lo >= 0.0 {
        return (hi, Some(BracketBound::Upper));
    }
    if s_lo <= 0.0 && s_hi <= 0.0 {
        return (lo, Some(BracketBound::Lower));
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let increasing_at_a = s_lo > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let s = nu_score(mid.exp(), dist_sq, p);
        if (s > 0.0) == increasing_at_a {
            a = mid;
        } else {
            b = mid;
        }
    }
    ((0.5 * (a + b)).exp(), None)
}

/// ECME estimate of `ν` from residuals `Y_i − fit` stacked as
/// `p_1×…×p_M×n`: alternates a weighted flip-flop for `Ξ` with a bisection
/// root of the `ν` score over `[lower, upper]`.
pub fn ecme_estimate_nu(residuals: &DenseTensor, opts: EcmeOptions) -> Result<NuEstimate> {
    let (dims, n, p) = split_stack(residuals)?;
    covariance::check_sample_size(&dims, n)?;
    if p > 500 {
        log::warn!("estimating nu with p = {} > 500 is unreliable; prefer a fixed nu", p);
    }
    if !(opts.lower > 0.0 && opts.lower < opts.upper && opts.start > 0.0) {
        return Err(Error::InvalidArgument("invalid ECME bracket".into()));
    }
    let mut nu = opts.start;
    let mut xi = KroneckerScale::identity(&dims);
    let mut bound = None;
    for it in 1..=opts.max_iter {
        let prev = xi.clone();
        let cur = Nu::Finite(nu);
        let d = xi.factor()?.mahalanobis_stack(residuals)?;
        let weights: Vec<f64> = d.iter().map(|&d| cur.weight(d, p)).collect();
        xi = covariance::weighted_flip_flop_from(residuals, &weights, &xi, opts.flip_flop)?.xi;
        let d = xi.factor()?.mahalanobis_stack(residuals)?;
        let c = covariance::optimal_scale(&d, cur, p)?;
        xi = covariance::rescale(&xi, c)?;
        let d: Vec<f64> = d.iter().map(|v| v / c).collect();
        let (next, b) = solve_nu(&d, p, opts.lower, opts.upper);
        bound = b;
        let dnu = (next - nu).abs() / nu;
        nu = next;
        if dnu < opts.tol && covariance::relative_change(&prev, &xi)? < opts.tol {
            return Ok(NuEstimate {
                nu,
                xi,
                iterations: it,
                converged: true,
                at_bound: bound,
            });
        }
    }
    log::warn!("ECME stopped after {} iterations; returning last iterate", opts.max_iter);
    Ok(NuEstimate {
        nu,
        xi,
        iterations: opts.max_iter,
        converged: false,
        at_bound: bound,
    })
}
