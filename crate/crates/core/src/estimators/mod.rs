//! Regression estimators for `Y_i = B ×̄_{M+1} x_i + E_i`.
//!
//! Coefficients are carried internally as the `p×q` matrix whose column `k`
//! is `vec(B[.., k])`, so `B ×̄_{M+1} x = B_mat x`. All penalized problems use
//! the scaling `½ Σ_i w_i ‖Y_i − B ×̄ x_i‖²_Ξ + λ P(B)`.

mod apl;
mod cv;
mod mm;
mod onestep;
mod solver;

pub use apl::{fit_apl, fit_ols, fit_tols};
pub use cv::{cross_validate, fold_assignment, lambda_grid, CvPath};
pub use mm::{fit_apn, fit_apt_mm, penalized_nll, MmOptions};
pub use onestep::{fit_host, fit_ost, HostSplit};
pub use solver::{coordinate_update, kkt_residual, soft_threshold, CdOptions, Precision, WlsProblem};

use nalgebra::{DMatrix, DMatrixView};

use crate::distributions::Nu;
use crate::error::{Error, Result};
use crate::tensor::{DenseTensor, KroneckerScale};

/// Predictors `x` (`q×n`) paired with the response stack `p_1×…×p_M×n`.
#[derive(Clone, Debug)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DenseTensor,
    centered: bool,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DenseTensor) -> Result<Self> {
        if y.order() < 2 {
            return Err(Error::Shape("responses must be stacked along a trailing sample mode".into()));
        }
        let n = *y.dims().last().expect("order >= 2");
        if x.ncols() != n {
            return Err(Error::Shape(format!("x has {} samples, y has {}", x.ncols(), n)));
        }
        if x.nrows() == 0 {
            return Err(Error::Shape("x has no predictors".into()));
        }
        Ok(Self { x, y, centered: false })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DenseTensor {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn q(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.y.len() / self.n()
    }

    pub fn response_dims(&self) -> &[usize] {
        &self.y.dims()[..self.y.order() - 1]
    }

    /// Dims of the coefficient tensor, `p_1×…×p_M×q`.
    pub fn coef_dims(&self) -> Vec<usize> {
        let mut d = self.response_dims().to_vec();
        d.push(self.q());
        d
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    /// Responses as the `p×n` matrix of vectorized samples.
    pub fn y_matrix(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(self.y.data(), self.p(), self.n())
    }

    /// `Y_i − B ×̄ x_i` stacked as `p_1×…×p_M×n`.
    pub fn residuals(&self, b: &DMatrix<f64>) -> Result<DenseTensor> {
        if b.nrows() != self.p() || b.ncols() != self.q() {
            return Err(Error::Shape(format!(
                "coefficients {}x{} vs data p={} q={}",
                b.nrows(),
                b.ncols(),
                self.p(),
                self.q()
            )));
        }
        let mut r = self.y_matrix().into_owned();
        r.gemm(-1.0, b, &self.x, 1.0);
        DenseTensor::new(self.y.dims().to_vec(), r.as_slice().to_vec())
    }

    /// The samples at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let p = self.p();
        let mut data = Vec::with_capacity(p * idx.len());
        for &i in idx {
            data.extend_from_slice(&self.y.data()[i * p..(i + 1) * p]);
        }
        let mut dims = self.y.dims().to_vec();
        *dims.last_mut().expect("order >= 2") = idx.len();
        let x = self.x.select_columns(idx);
        Ok(Self {
            x,
            y: DenseTensor::new(dims, data)?,
            centered: self.centered,
        })
    }

    /// Removes the sample means of every predictor and response cell. A
    /// predictor that is constant becomes identically zero.
    pub fn center(&self) -> Result<Self> {
        let n = self.n();
        if n < 2 {
            return Err(Error::InvalidArgument("centering needs at least two samples".into()));
        }
        let mut x = self.x.clone();
        for k in 0..x.nrows() {
            let mean = x.row(k).iter().sum::<f64>() / n as f64;
            let mut row = x.row_mut(k);
            row.iter_mut().for_each(|v| *v -= mean);
            if row.iter().all(|v| v.abs() <= 1e-12 * mean.abs().max(1.0)) {
                log::warn!("predictor {} is constant; centered to zero", k);
                row.fill(0.0);
            }
        }
        let p = self.p();
        let mut mean = vec![0.0; p];
        for chunk in self.y.data().chunks(p) {
            mean.iter_mut().zip(chunk).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut y = self.y.clone();
        for chunk in y.data_mut().chunks_mut(p) {
            chunk.iter_mut().zip(&mean).for_each(|(v, m)| *v -= m);
        }
        Ok(Self { x, y, centered: true })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Ols,
    /// OLS truncated by Bonferroni-corrected per-coefficient tests.
    Tols,
    Apl,
    Apn,
    Apt,
    Ost,
    Host,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Ols => "ols",
            Method::Tols => "tols",
            Method::Apl => "apl",
            Method::Apn => "apn",
            Method::Apt => "apt",
            Method::Ost => "ost",
            Method::Host => "host",
        }
    }

    /// Whether the fit produces exact zeros usable for selection metrics.
    pub fn is_sparse(self) -> bool {
        !matches!(self, Method::Ols)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "ols" => Method::Ols,
            "tols" => Method::Tols,
            "apl" => Method::Apl,
            "apn" => Method::Apn,
            "apt" => Method::Apt,
            "ost" => Method::Ost,
            "host" => Method::Host,
            other => return Err(Error::InvalidArgument(format!("unknown method '{}'", other))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PenaltyKind {
    /// Adaptive lasso on every coefficient.
    Lasso,
    /// Adaptive group lasso on each response cell's `q` coefficients.
    Group,
}

impl std::str::FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lasso" => Ok(PenaltyKind::Lasso),
            "group" => Ok(PenaltyKind::Group),
            other => Err(Error::InvalidArgument(format!("unknown penalty '{}'", other))),
        }
    }
}

impl std::fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PenaltyKind::Lasso => "lasso",
            PenaltyKind::Group => "group",
        })
    }
}

/// Adaptive penalty weights; `+∞` pins a coefficient (or group) at zero.
#[derive(Clone, Debug, PartialEq)]
pub enum PenaltyWeights {
    Elementwise(DMatrix<f64>),
    Group(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PenaltySpec {
    pub lambda: f64,
    pub weights: PenaltyWeights,
}

impl PenaltySpec {
    /// Weights `1/b̂²` (elementwise) or `1/‖B̂_J‖²` (group) from a pilot.
    pub fn adaptive(kind: PenaltyKind, lambda: f64, pilot: &DMatrix<f64>) -> Result<Self> {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("lambda must be nonnegative, got {}", lambda)));
        }
        let weights = match kind {
            PenaltyKind::Lasso => PenaltyWeights::Elementwise(pilot.map(|b| 1.0 / (b * b))),
            PenaltyKind::Group => {
                PenaltyWeights::Group(pilot.row_iter().map(|r| 1.0 / r.norm_squared()).collect())
            }
        };
        Ok(Self { lambda, weights })
    }

    pub fn kind(&self) -> PenaltyKind {
        match self.weights {
            PenaltyWeights::Elementwise(_) => PenaltyKind::Lasso,
            PenaltyWeights::Group(_) => PenaltyKind::Group,
        }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            weights: self.weights.clone(),
        }
    }

    pub(crate) fn check(&self, p: usize, q: usize) -> Result<()> {
        let ok = match &self.weights {
            PenaltyWeights::Elementwise(r) => r.nrows() == p && r.ncols() == q,
            PenaltyWeights::Group(r) => r.len() == p,
        };
        if !ok {
            return Err(Error::Shape("penalty weights do not match the coefficient shape".into()));
        }
        let bad = match &self.weights {
            PenaltyWeights::Elementwise(r) => r.iter().any(|v| !(*v > 0.0)),
            PenaltyWeights::Group(r) => r.iter().any(|v| !(*v > 0.0)),
        };
        if bad || !(self.lambda >= 0.0) {
            return Err(Error::InvalidArgument("penalty weights must be positive and lambda nonnegative".into()));
        }
        Ok(())
    }

    /// `λ Σ r |b|` or `λ Σ_J r_J ‖B_J‖`; pinned entries contribute only if nonzero.
    pub fn value(&self, b: &DMatrix<f64>) -> f64 {
        let s: f64 = match &self.weights {
            PenaltyWeights::Elementwise(r) => b
                .iter()
                .zip(r.iter())
                .filter(|(b, _)| **b != 0.0)
                .map(|(b, r)| r * b.abs())
                .sum(),
            PenaltyWeights::Group(r) => b
                .row_iter()
                .zip(r)
                .map(|(row, r)| {
                    let nrm = row.norm();
                    if nrm == 0.0 {
                        0.0
                    } else {
                        r * nrm
                    }
                })
                .sum(),
        };
        self.lambda * s
    }
}

/// How the tuning parameter is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaChoice {
    Fixed(f64),
    Cv { folds: usize, seed: u64 },
}

/// Settings shared by every estimator entry point.
#[derive(Clone, Copy, Debug)]
pub struct FitConfig {
    pub penalty: PenaltyKind,
    pub nu: Nu,
    pub lambda: LambdaChoice,
    pub host_split: HostSplit,
    /// Use APL rather than OLS as the adaptive-weight pilot.
    pub apl_pilot: bool,
    pub cd: CdOptions,
    pub grid_len: usize,
    pub grid_ratio: f64,
    /// Significance level for the truncated OLS selection.
    pub tols_alpha: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            penalty: PenaltyKind::Lasso,
            nu: Nu::Finite(4.0),
            lambda: LambdaChoice::Cv { folds: 5, seed: 0 },
            host_split: HostSplit::Reuse,
            apl_pilot: false,
            cd: CdOptions::default(),
            grid_len: 50,
            grid_ratio: 1e-4,
            tols_alpha: 0.05,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Diagnostics {
    pub iterations: usize,
    pub objective: f64,
    pub converged: bool,
    /// Proximal fixed-point residual of the final convex solve.
    pub kkt: Option<f64>,
    /// Objective after every outer iteration (MM fits).
    pub objective_trace: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub b_hat: DenseTensor,
    pub xi_hat: Option<KroneckerScale>,
    pub sample_weights: Option<Vec<f64>>,
    pub method: Method,
    pub penalty: Option<PenaltyKind>,
    pub lambda: f64,
    /// Tuning parameter of the APL pilot stage, when there is one.
    pub lambda_pilot: Option<f64>,
    pub nu_used: Nu,
    pub diagnostics: Diagnostics,
    pub cv: Option<CvPath>,
}

impl FitResult {
    /// Coefficients as the `p×q` matrix of vectorized slices.
    pub fn b_matrix(&self) -> DMatrix<f64> {
        let q = *self.b_hat.dims().last().expect("order >= 2");
        DMatrix::from_column_slice(self.b_hat.len() / q, q, self.b_hat.data())
    }
}

pub(crate) fn coef_tensor(dataset: &Dataset, b: &DMatrix<f64>) -> DenseTensor {
    DenseTensor::new(dataset.coef_dims(), b.as_slice().to_vec()).expect("coefficient shape")
}

/// Fits `method` with `config`.
pub fn fit(dataset: &Dataset, method: Method, config: &FitConfig) -> Result<FitResult> {
    match method {
        Method::Ols => fit_ols(dataset),
        Method::Tols => fit_tols(dataset, config.tols_alpha),
        Method::Apl => apl::fit_apl_tuned(dataset, config),
        Method::Apn => mm::fit_mm_tuned(dataset, Nu::Infinite, config),
        Method::Apt => {
            if config.nu.is_infinite() {
                return Err(Error::InvalidArgument("APT needs a finite nu; use APN for the normal".into()));
            }
            mm::fit_mm_tuned(dataset, config.nu, config)
        }
        Method::Ost => fit_ost(dataset, config),
        Method::Host => fit_host(dataset, config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centering_removes_means() {
        let x = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 6.0]);
        let y = DenseTensor::new(vec![2, 3], vec![1.0, 0.0, 2.0, 0.0, 3.0, 3.0]).unwrap();
        let d = Dataset::new(x, y).unwrap().center().unwrap();
        assert!(d.x().row(0).sum().abs() < 1e-12);
        let ym = d.y_matrix();
        assert!(ym.row(0).sum().abs() < 1e-12 && ym.row(1).sum().abs() < 1e-12);
        assert!(d.is_centered());
    }

    #[test]
    fn constant_predictor_zeroed() {
        let x = DMatrix::from_row_slice(1, 3, &[2.0, 2.0, 2.0]);
        let y = DenseTensor::new(vec![1, 3], vec![1.0, 2.0, 3.0]).unwrap();
        let d = Dataset::new(x, y).unwrap().center().unwrap();
        assert!(d.x().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn group_weights_from_pilot() {
        let pilot = DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 0.0, 0.0]);
        let spec = PenaltySpec::adaptive(PenaltyKind::Group, 1.0, &pilot).unwrap();
        match spec.weights {
            PenaltyWeights::Group(r) => {
                assert!((r[0] - 1.0 / 25.0).abs() < 1e-15);
                assert!(r[1].is_infinite());
            }
            _ => unreachable!(),
        }
    }
}
