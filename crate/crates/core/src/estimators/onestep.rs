use nalgebra::DMatrix;

use super::apl::{apl_with_weights, fit_apl_opts, pilot_penalty};
use super::cv::{lambda_grid, Nuisance, Refit, WlsCv};
use super::solver::Precision;
use super::{coef_tensor, Dataset, Diagnostics, FitConfig, FitResult, LambdaChoice, Method, PenaltySpec, PenaltyWeights};
use crate::covariance::{self, PluginOptions};
use crate::distributions::Nu;
use crate::error::{Error, Result};
use crate::tensor::KroneckerScale;

/// Whether HOST estimates its nuisance parameters on a separate batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HostSplit {
    /// Both stages use all samples.
    Reuse,
    /// First half for the pilot and scale, second half for the final fit.
    TwoBatch,
}

impl std::str::FromStr for HostSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "reuse" => Ok(HostSplit::Reuse),
            "two-batch" | "two_batch" => Ok(HostSplit::TwoBatch),
            other => Err(Error::InvalidArgument(format!("unknown HOST split '{}'", other))),
        }
    }
}

/// The final convex stage shared by OST, HOST and the MM tuning step.
pub(crate) struct ConvexStage<'a> {
    pub dataset: &'a Dataset,
    pub full: Nuisance,
    pub refit: Option<Refit<'a>>,
}

impl ConvexStage<'_> {
    /// Solves at a fixed `λ` or along a cross-validated path.
    pub(crate) fn solve(
        &self,
        config: &FitConfig,
        grid: Option<Vec<f64>>,
    ) -> Result<(DMatrix<f64>, f64, Option<super::CvPath>, Diagnostics)> {
        let cv = WlsCv {
            dataset: self.dataset,
            full: &self.full,
            refit: self.refit,
        };
        let problem = cv.full_problem()?;
        let (lambda, path) = match config.lambda {
            LambdaChoice::Fixed(l) => (l, None),
            LambdaChoice::Cv { folds, seed } => {
                let lambdas = match grid {
                    Some(g) => g,
                    None => lambda_grid(problem.lambda_max(&self.full.penalty), config.grid_len, config.grid_ratio)?,
                };
                let path = cv.run(lambdas, folds, seed, &config.cd)?;
                (path.best_lambda(), Some(path))
            }
        };
        let pen = PenaltySpec {
            lambda,
            weights: self.full.penalty.clone(),
        };
        let mut b = DMatrix::zeros(problem.p(), problem.q());
        let out = match &path {
            Some(path) => {
                let mut last = None;
                for &l in &path.lambdas[..=path.best_index] {
                    last = Some(problem.solve(&pen.with_lambda(l), &mut b, &config.cd)?);
                }
                last.expect("non-empty path")
            }
            None => problem.solve(&pen, &mut b, &config.cd)?,
        };
        let diag = Diagnostics {
            iterations: out.sweeps,
            objective: problem.objective(&b, &pen)?,
            converged: out.converged,
            kkt: Some(out.kkt),
            objective_trace: Vec::new(),
        };
        Ok((b, lambda, path, diag))
    }
}

/// Pilot → APL → plug-in `Ξ̂` and weights; everything OST needs before its
/// final convex stage.
pub(crate) struct OstNuisance {
    pub penalty: PenaltyWeights,
    pub pilot_lambda: Option<f64>,
    pub apl: FitResult,
    pub xi: KroneckerScale,
    pub weights: Vec<f64>,
}

pub(crate) fn ost_nuisance(dataset: &Dataset, nu: Nu, config: &FitConfig) -> Result<OstNuisance> {
    let (spec, pilot_lambda) = pilot_penalty(dataset, config, None)?;
    let refit = |tr: &Dataset| Ok(pilot_penalty(tr, config, pilot_lambda)?.0.weights);
    let apl = apl_with_weights(dataset, &spec.weights, config, None, Some(&refit))?;
    let residuals = dataset.residuals(&apl.b_matrix())?;
    let plug = covariance::plugin_xi_residuals(&residuals, nu, None, PluginOptions::default())?;
    Ok(OstNuisance {
        penalty: spec.weights,
        pilot_lambda,
        apl,
        xi: plug.xi,
        weights: plug.weights,
    })
}

impl OstNuisance {
    /// Convex-stage inputs; no sample weights when `ν = ∞`.
    pub(crate) fn stage_inputs(&self, nu: Nu) -> Result<Nuisance> {
        Ok(Nuisance {
            weights: if nu.is_infinite() { None } else { Some(self.weights.clone()) },
            omega: Precision::from_scale(&self.xi)?,
            penalty: self.penalty.clone(),
        })
    }

    /// The same pipeline on a training fold, with both tuning parameters
    /// held at their full-data values.
    pub(crate) fn refit(&self, train: &Dataset, nu: Nu, config: &FitConfig) -> Result<Nuisance> {
        let (spec, _) = pilot_penalty(train, config, self.pilot_lambda)?;
        let b = fit_apl_opts(train, &spec.with_lambda(self.apl.lambda), &config.cd)?.b_matrix();
        let plug = covariance::plugin_xi_residuals(&train.residuals(&b)?, nu, Some(&self.xi), PluginOptions::default())?;
        Ok(Nuisance {
            weights: if nu.is_infinite() { None } else { Some(plug.weights) },
            omega: Precision::from_scale(&plug.xi)?,
            penalty: spec.weights,
        })
    }
}

/// One-step estimator: OLS-weighted APL pilot, plug-in `Ξ̂` and weights at
/// `config.nu`, then a single convex weighted adaptive-lasso fit. Under
/// cross-validation every fold reruns the pilot stages on its own data.
pub fn fit_ost(dataset: &Dataset, config: &FitConfig) -> Result<FitResult> {
    fit_ost_grid(dataset, config, None)
}

fn fit_ost_grid(dataset: &Dataset, config: &FitConfig, grid: Option<Vec<f64>>) -> Result<FitResult> {
    covariance::check_sample_size(dataset.response_dims(), dataset.n())?;
    let nu = config.nu;
    let nz = ost_nuisance(dataset, nu, config)?;
    let refit = |tr: &Dataset| nz.refit(tr, nu, config);
    let stage = ConvexStage {
        dataset,
        full: nz.stage_inputs(nu)?,
        refit: Some(&refit),
    };
    let (b, lambda, cv, diagnostics) = stage.solve(config, grid)?;
    Ok(FitResult {
        b_hat: coef_tensor(dataset, &b),
        xi_hat: Some(nz.xi.clone()),
        sample_weights: Some(nz.weights.clone()),
        method: Method::Ost,
        penalty: Some(config.penalty),
        lambda,
        lambda_pilot: Some(nz.apl.lambda),
        nu_used: nu,
        diagnostics,
        cv,
    })
}

/// High-dimensional one-step estimator with Euclidean weights `p/‖R_i‖²`
/// and the closed-form mode covariances.
pub fn fit_host(dataset: &Dataset, config: &FitConfig) -> Result<FitResult> {
    fit_host_grid(dataset, config, None)
}

/// APL fit, Euclidean weights and mode covariances of one batch.
fn host_pilot(batch: &Dataset, spec: &PenaltySpec, config: &FitConfig) -> Result<(DMatrix<f64>, Vec<f64>, KroneckerScale)> {
    let b = fit_apl_opts(batch, spec, &config.cd)?.b_matrix();
    let r = batch.residuals(&b)?;
    let w = covariance::euclidean_weights(&r)?;
    let xi = covariance::host_sigma(&r, &w)?;
    Ok((b, w, xi))
}

fn fit_host_grid(dataset: &Dataset, config: &FitConfig, grid: Option<Vec<f64>>) -> Result<FitResult> {
    let (batch1, batch2) = match config.host_split {
        HostSplit::Reuse => (dataset.clone(), dataset.clone()),
        HostSplit::TwoBatch => {
            let n = dataset.n();
            if n < 4 {
                return Err(Error::Precondition(format!("two-batch HOST needs n >= 4, got {}", n)));
            }
            let h = n / 2;
            let first: Vec<usize> = (0..h).collect();
            let second: Vec<usize> = (h..n).collect();
            (dataset.subset(&first)?, dataset.subset(&second)?)
        }
    };
    if batch1.q() >= batch1.n() || batch2.q() >= batch2.n() {
        return Err(Error::Precondition("each HOST batch needs q < n".into()));
    }
    let (spec, pilot_lambda) = pilot_penalty(&batch1, config, None)?;
    let pen_refit = |tr: &Dataset| Ok(pilot_penalty(tr, config, pilot_lambda)?.0.weights);
    let apl = apl_with_weights(&batch1, &spec.weights, config, None, Some(&pen_refit))?;
    let b_apl = apl.b_matrix();
    let r1 = batch1.residuals(&b_apl)?;
    let xi = covariance::host_sigma(&r1, &covariance::euclidean_weights(&r1)?)?;
    let w2 = covariance::euclidean_weights(&batch2.residuals(&b_apl)?)?;
    let full = Nuisance {
        weights: Some(w2.clone()),
        omega: Precision::from_scale(&xi)?,
        penalty: spec.weights,
    };
    let apl_lambda = apl.lambda;
    let refit = |tr: &Dataset| -> Result<Nuisance> {
        let (spec, _) = pilot_penalty(tr, config, pilot_lambda)?;
        let (_, w, xi) = host_pilot(tr, &spec.with_lambda(apl_lambda), config)?;
        Ok(Nuisance {
            weights: Some(w),
            omega: Precision::from_scale(&xi)?,
            penalty: spec.weights,
        })
    };
    let stage = ConvexStage {
        dataset: &batch2,
        full,
        // The batch-1 nuisance never sees batch 2, so only the reuse mode
        // needs per-fold pilots.
        refit: match config.host_split {
            HostSplit::Reuse => Some(&refit),
            HostSplit::TwoBatch => None,
        },
    };
    let (b, lambda, cv, diagnostics) = stage.solve(config, grid)?;
    Ok(FitResult {
        b_hat: coef_tensor(dataset, &b),
        xi_hat: Some(xi),
        sample_weights: Some(w2),
        method: Method::Host,
        penalty: Some(config.penalty),
        lambda,
        lambda_pilot: Some(apl.lambda),
        nu_used: config.nu,
        diagnostics,
        cv,
    })
}

/// Fits `method` with an explicit final-stage `λ` grid.
pub(crate) fn fit_with_grid(dataset: &Dataset, method: Method, config: &FitConfig, grid: Vec<f64>) -> Result<FitResult> {
    match method {
        Method::Ost => fit_ost_grid(dataset, config, Some(grid)),
        Method::Host => fit_host_grid(dataset, config, Some(grid)),
        Method::Apl => {
            let (spec, pilot_lambda) = pilot_penalty(dataset, config, None)?;
            let refit = |tr: &Dataset| Ok(pilot_penalty(tr, config, pilot_lambda)?.0.weights);
            apl_with_weights(dataset, &spec.weights, config, Some(grid), Some(&refit))
        }
        Method::Apn => super::mm::fit_mm_grid(dataset, Nu::Infinite, config, Some(grid)),
        Method::Apt => super::mm::fit_mm_grid(dataset, config.nu, config, Some(grid)),
        Method::Ols | Method::Tols => Err(Error::InvalidArgument(format!("method {} has no tuning parameter", method))),
    }
}
