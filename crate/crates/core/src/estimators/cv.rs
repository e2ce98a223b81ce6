use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::solver::{CdOptions, Precision, WlsProblem};
use super::{Dataset, FitConfig, Method, PenaltySpec, PenaltyWeights};
use crate::error::{Error, Result};
use crate::par;

/// Cross-validation errors along a decreasing `λ` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CvPath {
    pub lambdas: Vec<f64>,
    /// Mean held-out squared prediction error per sample.
    pub errors: Vec<f64>,
    pub best_index: usize,
}

impl CvPath {
    pub fn best_lambda(&self) -> f64 {
        self.lambdas[self.best_index]
    }

    /// Argmin with ties resolved toward the larger `λ`.
    pub(crate) fn from_errors(lambdas: Vec<f64>, errors: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::InvalidArgument("empty lambda grid".into()));
        }
        let mut best = 0;
        for (i, e) in errors.iter().enumerate() {
            let bl = lambdas[best];
            let be = errors[best];
            if *e < be || (*e == be && lambdas[i] > bl) {
                best = i;
            }
        }
        Ok(Self {
            lambdas,
            errors,
            best_index: best,
        })
    }
}

/// Fold label of every sample: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 || n < folds {
        return Err(Error::InvalidArgument(format!("{} folds for {} samples", folds, n)));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut label = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        label[i] = pos % folds;
    }
    Ok(label)
}

/// `len` log-spaced values from `lambda_max` down to `lambda_max * ratio`.
pub fn lambda_grid(lambda_max: f64, len: usize, ratio: f64) -> Result<Vec<f64>> {
    if len == 0 {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    if !(lambda_max > 0.0) || !(ratio > 0.0 && ratio < 1.0) {
        return Ok(vec![lambda_max.max(0.0); 1]);
    }
    if len == 1 {
        return Ok(vec![lambda_max]);
    }
    let step = ratio.ln() / (len - 1) as f64;
    Ok((0..len).map(|i| lambda_max * (step * i as f64).exp()).collect())
}

pub(crate) fn split_indices(labels: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        if l == fold {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    (train, test)
}

/// Held-out squared error `Σ_test ‖y − B x‖²` from sufficient statistics.
pub(crate) struct HeldOut {
    yy: f64,
    cross: DMatrix<f64>,
    gram: DMatrix<f64>,
}

impl HeldOut {
    pub(crate) fn new(test: &Dataset) -> Self {
        let y = test.y_matrix();
        Self {
            yy: y.norm_squared(),
            cross: y * test.x().transpose(),
            gram: test.x() * test.x().transpose(),
        }
    }

    pub(crate) fn error(&self, b: &DMatrix<f64>) -> f64 {
        (self.yy - 2.0 * b.dot(&self.cross) + (b * &self.gram).dot(b)).max(0.0)
    }

    pub(crate) fn cell_error(&self, j: usize, b: &[f64]) -> f64 {
        let q = b.len();
        let mut e = -2.0 * (0..q).map(|k| b[k] * self.cross[(j, k)]).sum::<f64>();
        for k in 0..q {
            for l in 0..q {
                e += b[k] * self.gram[(k, l)] * b[l];
            }
        }
        e
    }

    pub(crate) fn cell_yy(test: &Dataset, j: usize) -> f64 {
        test.y_matrix().row(j).norm_squared()
    }
}

/// Sums per-fold held-out errors (in fold order) and normalizes by `n`.
pub(crate) fn cv_select<F>(n: usize, lambdas: Vec<f64>, folds: usize, seed: u64, eval: F) -> Result<CvPath>
where
    F: Fn(&[usize], &[usize]) -> Result<Vec<f64>> + Sync,
{
    let labels = fold_assignment(n, folds, seed)?;
    let per_fold = par::map_indexed(folds, |f| {
        let (train, test) = split_indices(&labels, f);
        eval(&train, &test)
    });
    let mut errors = vec![0.0; lambdas.len()];
    for e in per_fold {
        for (acc, v) in errors.iter_mut().zip(e?) {
            *acc += v;
        }
    }
    errors.iter_mut().for_each(|e| *e /= n as f64);
    CvPath::from_errors(lambdas, errors)
}

/// Path of penalized weighted least-squares fits with warm starts.
pub(crate) fn wls_path<F: FnMut(usize, &DMatrix<f64>)>(
    problem: &WlsProblem,
    pen: &PenaltySpec,
    lambdas: &[f64],
    opts: &CdOptions,
    mut visit: F,
) -> Result<DMatrix<f64>> {
    let mut b = DMatrix::zeros(problem.p(), problem.q());
    for (i, &l) in lambdas.iter().enumerate() {
        problem.solve(&pen.with_lambda(l), &mut b, opts)?;
        visit(i, &b);
    }
    Ok(b)
}

/// Nuisance inputs of a weighted convex stage: sample weights, the scale
/// defining `Ω`, and the adaptive penalty weights.
#[derive(Clone, Debug)]
pub(crate) struct Nuisance {
    pub weights: Option<Vec<f64>>,
    pub omega: Precision,
    pub penalty: PenaltyWeights,
}

/// Recomputes the nuisance inputs from a training fold.
pub(crate) type Refit<'a> = &'a (dyn Fn(&Dataset) -> Result<Nuisance> + Sync);

/// Context for the weighted convex problems tuned by cross-validation.
pub(crate) struct WlsCv<'a> {
    pub dataset: &'a Dataset,
    pub full: &'a Nuisance,
    /// When set, every training fold gets its own nuisance inputs; otherwise
    /// the full-data ones are restricted to the fold.
    pub refit: Option<Refit<'a>>,
}

impl WlsCv<'_> {
    pub(crate) fn full_problem(&self) -> Result<WlsProblem> {
        WlsProblem::new(
            self.dataset.y_matrix(),
            self.dataset.x(),
            self.full.weights.as_deref(),
            self.full.omega.clone(),
        )
    }

    /// Held-out errors along `lambdas`.
    pub(crate) fn run(&self, lambdas: Vec<f64>, folds: usize, seed: u64, opts: &CdOptions) -> Result<CvPath> {
        cv_select(self.dataset.n(), lambdas.clone(), folds, seed, |train, test| {
            let tr = self.dataset.subset(train)?;
            let te = self.dataset.subset(test)?;
            let nz = match self.refit {
                Some(refit) => refit(&tr)?,
                None => Nuisance {
                    weights: self.full.weights.as_ref().map(|w| train.iter().map(|&i| w[i]).collect()),
                    omega: self.full.omega.clone(),
                    penalty: self.full.penalty.clone(),
                },
            };
            let problem = WlsProblem::new(tr.y_matrix(), tr.x(), nz.weights.as_deref(), nz.omega)?;
            let pen = PenaltySpec {
                lambda: 0.0,
                weights: nz.penalty,
            };
            let held = HeldOut::new(&te);
            let mut errs = vec![0.0; lambdas.len()];
            wls_path(&problem, &pen, &lambdas, &opts.for_cv(), |i, b| errs[i] = held.error(b))?;
            Ok(errs)
        })
    }
}

/// Cross-validated `λ` for `method` over an explicit grid (or the automatic
/// one when `grid` is `None`).
pub fn cross_validate(
    dataset: &Dataset,
    method: Method,
    grid: Option<Vec<f64>>,
    config: &FitConfig,
    folds: usize,
    seed: u64,
) -> Result<CvPath> {
    let mut cfg = *config;
    cfg.lambda = super::LambdaChoice::Cv { folds, seed };
    let fit = match grid {
        Some(g) => super::onestep::fit_with_grid(dataset, method, &cfg, g)?,
        None => super::fit(dataset, method, &cfg)?,
    };
    fit.cv
        .ok_or_else(|| Error::InvalidArgument(format!("method {} has no tuning parameter", method)))
}
