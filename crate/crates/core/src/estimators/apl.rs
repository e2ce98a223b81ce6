use nalgebra::DMatrix;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::cv::{cv_select, lambda_grid, HeldOut};
use super::solver::{coordinate_update, kkt_residual, CdOptions, Precision, WlsProblem};
use super::{coef_tensor, Dataset, Diagnostics, FitConfig, FitResult, LambdaChoice, Method, PenaltySpec, PenaltyWeights};
use crate::distributions::Nu;
use crate::error::{Error, Result};
use crate::linalg;
use crate::par;

fn gram_inverse(dataset: &Dataset) -> Result<DMatrix<f64>> {
    if dataset.q() >= dataset.n() {
        return Err(Error::Singular(format!(
            "least squares needs q < n (q = {}, n = {})",
            dataset.q(),
            dataset.n()
        )));
    }
    let xxt = dataset.x() * dataset.x().transpose();
    linalg::spd_inverse(&xxt, "X Xᵀ").map_err(|_| Error::Singular("X Xᵀ is singular".into()))
}

pub(crate) fn ols_matrix(dataset: &Dataset) -> Result<DMatrix<f64>> {
    let inv = gram_inverse(dataset)?;
    Ok(dataset.y_matrix() * dataset.x().transpose() * inv)
}

fn dense_result(dataset: &Dataset, b: &DMatrix<f64>, method: Method) -> FitResult {
    FitResult {
        b_hat: coef_tensor(dataset, b),
        xi_hat: None,
        sample_weights: None,
        method,
        penalty: None,
        lambda: 0.0,
        lambda_pilot: None,
        nu_used: Nu::Infinite,
        diagnostics: Diagnostics {
            iterations: 1,
            objective: 0.5 * dataset.residuals(b).map(|r| r.frobenius_sq()).unwrap_or(f64::NAN),
            converged: true,
            kkt: None,
            objective_trace: Vec::new(),
        },
        cv: None,
    }
}

/// Least squares `B = Y Xᵀ (X Xᵀ)^{-1}`.
pub fn fit_ols(dataset: &Dataset) -> Result<FitResult> {
    let b = ols_matrix(dataset)?;
    Ok(dense_result(dataset, &b, Method::Ols))
}

/// OLS with every coefficient not rejected by a Bonferroni-corrected
/// two-sided test at level `alpha` set to zero.
pub fn fit_tols(dataset: &Dataset, alpha: f64) -> Result<FitResult> {
    let inv = gram_inverse(dataset)?;
    let b = dataset.y_matrix() * dataset.x().transpose() * &inv;
    let r = dataset.residuals(&b)?;
    let (p, q, n) = (dataset.p(), dataset.q(), dataset.n());
    let rm = r.as_matrix(p)?;
    let chi = ChiSquared::new(1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let level = alpha / (p * q) as f64;
    let mut out = b.clone();
    for j in 0..p {
        let s2 = rm.row(j).norm_squared() / (n - q) as f64;
        for k in 0..q {
            let t = b[(j, k)] * b[(j, k)] / (s2 * inv[(k, k)]);
            if !(chi.sf(t) < level) {
                out[(j, k)] = 0.0;
            }
        }
    }
    Ok(dense_result(dataset, &out, Method::Tols))
}

/// Sufficient statistics for the `p` separate least-squares problems.
struct CellStats {
    gram: DMatrix<f64>,
    cross: DMatrix<f64>,
}

impl CellStats {
    fn new(dataset: &Dataset) -> Self {
        Self {
            gram: dataset.x() * dataset.x().transpose(),
            cross: dataset.y_matrix() * dataset.x().transpose(),
        }
    }

    /// Coordinate descent on `½‖y_J − Xᵀb‖² + λ Σ_k r_k |b_k|` for one cell.
    fn solve_cell(&self, j: usize, r: &[f64], lambda: f64, b: &mut [f64], tol: f64) {
        let q = b.len();
        if q == 1 {
            let u2 = self.gram[(0, 0)];
            b[0] = if u2 > 0.0 {
                coordinate_update(self.cross[(j, 0)], u2, thresh(lambda, r[0]))
            } else {
                0.0
            };
            return;
        }
        let mut g: Vec<f64> = (0..q)
            .map(|k| self.cross[(j, k)] - (0..q).map(|l| self.gram[(k, l)] * b[l]).sum::<f64>())
            .collect();
        for _ in 0..100_000 {
            let mut change: f64 = 0.0;
            for k in 0..q {
                let u2 = self.gram[(k, k)];
                let old = b[k];
                let new = if u2 > 0.0 {
                    coordinate_update(g[k] + u2 * old, u2, thresh(lambda, r[k]))
                } else {
                    0.0
                };
                if new != old {
                    let d = new - old;
                    b[k] = new;
                    change = change.max(d.abs());
                    for (l, gl) in g.iter_mut().enumerate() {
                        *gl -= d * self.gram[(k, l)];
                    }
                }
            }
            if change < tol {
                return;
            }
        }
    }
}

fn thresh(lambda: f64, r: f64) -> f64 {
    if r.is_infinite() {
        f64::INFINITY
    } else {
        lambda * r
    }
}

fn cell_weights(r: &DMatrix<f64>, j: usize) -> Vec<f64> {
    r.row(j).iter().cloned().collect()
}

/// Elementwise APL as `p` independent problems solved in parallel.
fn apl_elementwise(dataset: &Dataset, lambda: f64, r: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let stats = CellStats::new(dataset);
    let (p, q) = (dataset.p(), dataset.q());
    let rows = par::map_indexed(p, |j| {
        let mut b = vec![0.0; q];
        stats.solve_cell(j, &cell_weights(r, j), lambda, &mut b, tol);
        b
    });
    DMatrix::from_fn(p, q, |j, k| rows[j][k])
}

/// Adaptive penalized least squares at a fixed `λ`.
pub fn fit_apl(dataset: &Dataset, penalty: &PenaltySpec) -> Result<FitResult> {
    fit_apl_opts(dataset, penalty, &CdOptions::default())
}

pub(crate) fn fit_apl_opts(dataset: &Dataset, penalty: &PenaltySpec, opts: &CdOptions) -> Result<FitResult> {
    let (p, q) = (dataset.p(), dataset.q());
    penalty.check(p, q)?;
    let problem = WlsProblem::new(dataset.y_matrix(), dataset.x(), None, Precision::identity(p))?;
    let (b, sweeps) = match &penalty.weights {
        PenaltyWeights::Elementwise(r) => (apl_elementwise(dataset, penalty.lambda, r, opts.tol * 1e-2), 0),
        PenaltyWeights::Group(_) => {
            let mut b = DMatrix::zeros(p, q);
            let out = problem.solve(penalty, &mut b, opts)?;
            (b, out.sweeps)
        }
    };
    let kkt = kkt_residual(&problem, penalty, &b)?;
    Ok(FitResult {
        b_hat: coef_tensor(dataset, &b),
        xi_hat: None,
        sample_weights: None,
        method: Method::Apl,
        penalty: Some(penalty.kind()),
        lambda: penalty.lambda,
        lambda_pilot: None,
        nu_used: Nu::Infinite,
        diagnostics: Diagnostics {
            iterations: sweeps,
            objective: problem.objective(&b, penalty)?,
            converged: kkt < opts.tol,
            kkt: Some(kkt),
            objective_trace: Vec::new(),
        },
        cv: None,
    })
}

/// Adaptive penalty from the pilot: OLS, or APL when `apl_pilot` is set.
/// The APL pilot is tuned by cross-validation unless `pilot_lambda` fixes
/// it; its `λ` is returned alongside.
pub(crate) fn pilot_penalty(dataset: &Dataset, config: &FitConfig, pilot_lambda: Option<f64>) -> Result<(PenaltySpec, Option<f64>)> {
    let ols = ols_matrix(dataset)?;
    let spec = PenaltySpec::adaptive(config.penalty, 0.0, &ols)?;
    if !config.apl_pilot {
        return Ok((spec, None));
    }
    let mut cfg = *config;
    cfg.apl_pilot = false;
    if let Some(l) = pilot_lambda {
        cfg.lambda = LambdaChoice::Fixed(l);
    }
    let apl = fit_apl_tuned(dataset, &cfg)?;
    Ok((PenaltySpec::adaptive(config.penalty, 0.0, &apl.b_matrix())?, Some(apl.lambda)))
}

/// APL with `λ` fixed or chosen by cross-validation.
pub(crate) fn fit_apl_tuned(dataset: &Dataset, config: &FitConfig) -> Result<FitResult> {
    let (spec, pilot_lambda) = pilot_penalty(dataset, config, None)?;
    let refit = |tr: &Dataset| Ok(pilot_penalty(tr, config, pilot_lambda)?.0.weights);
    let mut fit = apl_with_weights(dataset, &spec.weights, config, None, Some(&refit))?;
    fit.lambda_pilot = pilot_lambda;
    Ok(fit)
}

/// Recomputes the adaptive penalty weights on a training fold.
pub(crate) type PenaltyRefit<'a> = &'a (dyn Fn(&Dataset) -> Result<PenaltyWeights> + Sync);

pub(crate) fn apl_with_weights(
    dataset: &Dataset,
    weights: &PenaltyWeights,
    config: &FitConfig,
    grid: Option<Vec<f64>>,
    refit: Option<PenaltyRefit>,
) -> Result<FitResult> {
    let p = dataset.p();
    let base = PenaltySpec {
        lambda: 0.0,
        weights: weights.clone(),
    };
    let (lambda, cv) = match config.lambda {
        LambdaChoice::Fixed(l) => (l, None),
        LambdaChoice::Cv { folds, seed } => {
            let lambdas = match grid {
                Some(g) => g,
                None => {
                    let full = WlsProblem::new(dataset.y_matrix(), dataset.x(), None, Precision::identity(p))?;
                    lambda_grid(full.lambda_max(weights), config.grid_len, config.grid_ratio)?
                }
            };
            let path = apl_cv(dataset, weights, refit, lambdas, folds, seed, &config.cd)?;
            (path.best_lambda(), Some(path))
        }
    };
    let mut fit = fit_apl_opts(dataset, &base.with_lambda(lambda), &config.cd)?;
    fit.cv = cv;
    Ok(fit)
}

fn apl_cv(
    dataset: &Dataset,
    weights: &PenaltyWeights,
    refit: Option<PenaltyRefit>,
    lambdas: Vec<f64>,
    folds: usize,
    seed: u64,
    opts: &CdOptions,
) -> Result<super::CvPath> {
    let (p, q) = (dataset.p(), dataset.q());
    let ls = lambdas.clone();
    cv_select(dataset.n(), lambdas, folds, seed, |train, test| {
        let tr = dataset.subset(train)?;
        let te = dataset.subset(test)?;
        let held = HeldOut::new(&te);
        let fold_weights = match refit {
            Some(f) => f(&tr)?,
            None => weights.clone(),
        };
        match &fold_weights {
            PenaltyWeights::Elementwise(r) => {
                let stats = CellStats::new(&tr);
                let per_cell = par::map_indexed(p, |j| {
                    let rj = cell_weights(r, j);
                    let yy = HeldOut::cell_yy(&te, j);
                    let mut b = vec![0.0; q];
                    ls.iter()
                        .map(|&l| {
                            stats.solve_cell(j, &rj, l, &mut b, opts.tol * 1e-2);
                            yy + held.cell_error(j, &b)
                        })
                        .collect::<Vec<f64>>()
                });
                let mut errs = vec![0.0; ls.len()];
                for cell in per_cell {
                    errs.iter_mut().zip(cell).for_each(|(e, v)| *e += v);
                }
                Ok(errs)
            }
            PenaltyWeights::Group(_) => {
                let problem = WlsProblem::new(tr.y_matrix(), tr.x(), None, Precision::identity(p))?;
                let pen = PenaltySpec {
                    lambda: 0.0,
                    weights: fold_weights.clone(),
                };
                let mut errs = vec![0.0; ls.len()];
                super::cv::wls_path(&problem, &pen, &ls, &opts.for_cv(), |i, b| errs[i] = held.error(b))?;
                Ok(errs)
            }
        }
    })
}
