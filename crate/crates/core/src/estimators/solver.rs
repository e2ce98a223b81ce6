use nalgebra::{DMatrix, DMatrixView};

use super::{PenaltySpec, PenaltyWeights};
use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::{DenseTensor, KroneckerScale, ScaleFactor};

/// `Ω = Σ_M^{-1} ⊗ … ⊗ Σ_1^{-1}`, never materialized.
#[derive(Clone, Debug)]
pub enum Precision {
    Identity(usize),
    Kron { factor: Box<ScaleFactor>, diag: Vec<f64> },
}

impl Precision {
    pub fn identity(p: usize) -> Self {
        Precision::Identity(p)
    }

    pub fn from_scale(xi: &KroneckerScale) -> Result<Self> {
        let factor = xi.factor()?;
        let diag = factor.precision_diagonal();
        Ok(Precision::Kron {
            factor: Box::new(factor),
            diag,
        })
    }

    pub fn p(&self) -> usize {
        match self {
            Precision::Identity(p) => *p,
            Precision::Kron { diag, .. } => diag.len(),
        }
    }

    pub fn diag(&self, j: usize) -> f64 {
        match self {
            Precision::Identity(_) => 1.0,
            Precision::Kron { diag, .. } => diag[j],
        }
    }

    /// `Ω M` for a `p×q` matrix `M`.
    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        match self {
            Precision::Identity(_) => Ok(m.clone()),
            Precision::Kron { factor, .. } => {
                let mut dims = factor.dims().to_vec();
                dims.push(m.ncols());
                let mut t = DenseTensor::new(dims, m.as_slice().to_vec())?;
                for (k, inv) in factor.inverses().iter().enumerate() {
                    t = t.mode_product(inv, k)?;
                }
                Ok(DMatrix::from_column_slice(m.nrows(), m.ncols(), t.data()))
            }
        }
    }

    /// `g ← g + c Ω[:, j]`.
    fn add_column(&self, j: usize, c: f64, g: &mut [f64], buf: &mut Vec<f64>) {
        match self {
            Precision::Identity(_) => g[j] += c,
            Precision::Kron { factor, .. } => factor.add_precision_column(j, c, g, buf),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CdOptions {
    /// Stop once a sweep moves no coefficient by more than this and the
    /// proximal KKT residual is below it as well.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Tolerance for the fold fits of cross-validation paths, which only
    /// need to rank `λ` values.
    pub cv_tol: f64,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_sweeps: 100_000,
            cv_tol: 1e-4,
        }
    }
}

impl CdOptions {
    /// The looser `1e-4` stopping rule.
    pub fn fast() -> Self {
        Self {
            tol: 1e-4,
            ..Self::default()
        }
    }

    /// Options for the fold fits of a cross-validation path.
    pub fn for_cv(&self) -> Self {
        Self {
            tol: self.tol.max(self.cv_tol),
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CdOutcome {
    pub sweeps: usize,
    pub converged: bool,
    pub kkt: f64,
}

/// `sign(u)(|u| − t)₊`.
pub fn soft_threshold(u: f64, t: f64) -> f64 {
    if u > t {
        u - t
    } else if u < -t {
        u + t
    } else {
        0.0
    }
}

/// Minimizer of `½ u2 b² − u1 b + t|b|`.
pub fn coordinate_update(u1: f64, u2: f64, t: f64) -> f64 {
    soft_threshold(u1, t) / u2
}

fn threshold(lambda: f64, r: f64) -> f64 {
    if r.is_infinite() {
        f64::INFINITY
    } else {
        lambda * r
    }
}

/// `½ Σ_i w_i ‖y_i − B x_i‖²_Ω` summarized by `S_xx = Σ w x xᵀ` and
/// `S_yx = Σ w y xᵀ`.
#[derive(Clone, Debug)]
pub struct WlsProblem {
    sxx: DMatrix<f64>,
    omega: Precision,
    omega_syx: DMatrix<f64>,
    yy: f64,
    sxx_max_eig: f64,
}

impl WlsProblem {
    /// `y` is `p×n` (vectorized samples), `x` is `q×n`.
    pub fn new(y: DMatrixView<'_, f64>, x: &DMatrix<f64>, weights: Option<&[f64]>, omega: Precision) -> Result<Self> {
        let (p, n) = y.shape();
        if x.ncols() != n || omega.p() != p {
            return Err(Error::Shape("weighted least squares inputs disagree".into()));
        }
        let xw = match weights {
            Some(w) => {
                if w.len() != n {
                    return Err(Error::Shape(format!("{} weights for {} samples", w.len(), n)));
                }
                let mut xw = x.clone();
                for (mut c, wi) in xw.column_iter_mut().zip(w) {
                    c *= *wi;
                }
                xw
            }
            None => x.clone(),
        };
        let mut sxx = &xw * x.transpose();
        linalg::symmetrize(&mut sxx);
        let syx = y * xw.transpose();
        let omega_syx = omega.apply(&syx)?;
        let yy = match &omega {
            Precision::Identity(_) => {
                let mut s = 0.0;
                for (i, c) in y.column_iter().enumerate() {
                    s += weights.map_or(1.0, |w| w[i]) * c.norm_squared();
                }
                s
            }
            Precision::Kron { factor, .. } => {
                let mut dims = factor.dims().to_vec();
                dims.push(n);
                let stack = DenseTensor::new(dims, y.iter().cloned().collect())?;
                let d = factor.mahalanobis_stack(&stack)?;
                d.iter()
                    .enumerate()
                    .map(|(i, d)| weights.map_or(1.0, |w| w[i]) * d)
                    .sum()
            }
        };
        let sxx_max_eig = linalg::max_eigenvalue(&sxx).max(0.0);
        Ok(Self {
            sxx,
            omega,
            omega_syx,
            yy,
            sxx_max_eig,
        })
    }

    pub fn p(&self) -> usize {
        self.omega_syx.nrows()
    }

    pub fn q(&self) -> usize {
        self.omega_syx.ncols()
    }

    pub fn sxx(&self) -> &DMatrix<f64> {
        &self.sxx
    }

    pub fn precision(&self) -> &Precision {
        &self.omega
    }

    /// Negative gradient of the smooth part, `Ω(S_yx − B S_xx)`.
    pub fn gradient(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let bs = b * &self.sxx;
        Ok(&self.omega_syx - self.omega.apply(&bs)?)
    }

    pub fn smooth_value(&self, b: &DMatrix<f64>) -> Result<f64> {
        let ob = self.omega.apply(b)?;
        let bs = b * &self.sxx;
        Ok(0.5 * (self.yy - 2.0 * b.dot(&self.omega_syx) + ob.dot(&bs)))
    }

    pub fn objective(&self, b: &DMatrix<f64>, pen: &PenaltySpec) -> Result<f64> {
        Ok(self.smooth_value(b)? + pen.value(b))
    }

    /// Smallest `λ` for which `B = 0` satisfies the optimality conditions.
    pub fn lambda_max(&self, weights: &PenaltyWeights) -> f64 {
        let g = &self.omega_syx;
        match weights {
            PenaltyWeights::Elementwise(r) => g
                .iter()
                .zip(r.iter())
                .filter(|(_, r)| r.is_finite())
                .map(|(g, r)| g.abs() / r)
                .fold(0.0, f64::max),
            PenaltyWeights::Group(r) => g
                .row_iter()
                .zip(r)
                .filter(|(_, r)| r.is_finite())
                .map(|(row, r)| row.norm() / r)
                .fold(0.0, f64::max),
        }
    }

    /// Minimizes `smooth + λP` from the warm start `b`, in place.
    pub fn solve(&self, pen: &PenaltySpec, b: &mut DMatrix<f64>, opts: &CdOptions) -> Result<CdOutcome> {
        pen.check(self.p(), self.q())?;
        if b.nrows() != self.p() || b.ncols() != self.q() {
            return Err(Error::Shape("warm start has the wrong shape".into()));
        }
        let mut g = self.gradient(b)?;
        let mut col = Vec::new();
        for sweep in 1..=opts.max_sweeps {
            let change = match &pen.weights {
                PenaltyWeights::Elementwise(r) => self.lasso_sweep(pen.lambda, r, b, &mut g, &mut col),
                PenaltyWeights::Group(r) => self.group_sweep(pen.lambda, r, b, &mut g, &mut col),
            };
            if change < opts.tol {
                let kkt = kkt_from_gradient(self, pen, b, &g);
                if kkt < opts.tol {
                    return Ok(CdOutcome {
                        sweeps: sweep,
                        converged: true,
                        kkt,
                    });
                }
            }
        }
        let kkt = kkt_from_gradient(self, pen, b, &g);
        log::warn!("coordinate descent hit {} sweeps (kkt {:.3e})", opts.max_sweeps, kkt);
        Ok(CdOutcome {
            sweeps: opts.max_sweeps,
            converged: false,
            kkt,
        })
    }

    /// `G ← G − Ω[:, j] (δᵀ S_xx)` after row `j` of `B` moved by `δ`.
    fn downdate(&self, g: &mut DMatrix<f64>, j: usize, delta: &[(usize, f64)], col: &mut Vec<f64>) {
        let q = self.q();
        let mut coef = vec![0.0; q];
        for &(k, d) in delta {
            for (kk, c) in coef.iter_mut().enumerate() {
                *c += d * self.sxx[(k, kk)];
            }
        }
        let p = g.nrows();
        for (gc, c) in g.as_mut_slice().chunks_exact_mut(p).zip(&coef) {
            if *c != 0.0 {
                self.omega.add_column(j, -c, gc, col);
            }
        }
    }

    fn lasso_sweep(&self, lambda: f64, r: &DMatrix<f64>, b: &mut DMatrix<f64>, g: &mut DMatrix<f64>, col: &mut Vec<f64>) -> f64 {
        let (p, q) = (self.p(), self.q());
        let mut change: f64 = 0.0;
        for k in 0..q {
            for j in 0..p {
                let u2 = self.sxx[(k, k)] * self.omega.diag(j);
                let old = b[(j, k)];
                let new = if u2 > 0.0 {
                    coordinate_update(g[(j, k)] + u2 * old, u2, threshold(lambda, r[(j, k)]))
                } else {
                    0.0
                };
                if new != old {
                    b[(j, k)] = new;
                    let d = new - old;
                    change = change.max(d.abs());
                    self.downdate(g, j, &[(k, d)], col);
                }
            }
        }
        change
    }

    fn group_sweep(&self, lambda: f64, r: &[f64], b: &mut DMatrix<f64>, g: &mut DMatrix<f64>, col: &mut Vec<f64>) -> f64 {
        let (p, q) = (self.p(), self.q());
        let mut change: f64 = 0.0;
        let mut delta = Vec::with_capacity(q);
        for j in 0..p {
            let h = self.sxx_max_eig * self.omega.diag(j);
            let t = threshold(lambda, r[j]);
            let z: Vec<f64> = (0..q).map(|k| g[(j, k)] + h * b[(j, k)]).collect();
            let nz = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = if h > 0.0 && nz > t { (1.0 - t / nz) / h } else { 0.0 };
            delta.clear();
            for k in 0..q {
                let new = z[k] * scale;
                let old = b[(j, k)];
                if new != old {
                    b[(j, k)] = new;
                    change = change.max((new - old).abs());
                    delta.push((k, new - old));
                }
            }
            if !delta.is_empty() {
                self.downdate(g, j, &delta, col);
            }
        }
        change
    }
}

fn kkt_from_gradient(problem: &WlsProblem, pen: &PenaltySpec, b: &DMatrix<f64>, g: &DMatrix<f64>) -> f64 {
    let (p, q) = (problem.p(), problem.q());
    let mut worst: f64 = 0.0;
    match &pen.weights {
        PenaltyWeights::Elementwise(r) => {
            for k in 0..q {
                for j in 0..p {
                    let u2 = problem.sxx[(k, k)] * problem.omega.diag(j);
                    let bj = b[(j, k)];
                    let target = if u2 > 0.0 {
                        coordinate_update(g[(j, k)] + u2 * bj, u2, threshold(pen.lambda, r[(j, k)]))
                    } else {
                        0.0
                    };
                    worst = worst.max((bj - target).abs());
                }
            }
        }
        PenaltyWeights::Group(r) => {
            for j in 0..p {
                let h = problem.sxx_max_eig * problem.omega.diag(j);
                let t = threshold(pen.lambda, r[j]);
                let z: Vec<f64> = (0..q).map(|k| g[(j, k)] + h * b[(j, k)]).collect();
                let nz = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                let scale = if h > 0.0 && nz > t { (1.0 - t / nz) / h } else { 0.0 };
                for k in 0..q {
                    worst = worst.max((b[(j, k)] - z[k] * scale).abs());
                }
            }
        }
    }
    worst
}

/// Largest violation, in coefficient units, of the proximal fixed point
/// `b = prox(b + G/U_2)`; zero exactly at a minimizer.
pub fn kkt_residual(problem: &WlsProblem, pen: &PenaltySpec, b: &DMatrix<f64>) -> Result<f64> {
    pen.check(problem.p(), problem.q())?;
    let g = problem.gradient(b)?;
    Ok(kkt_from_gradient(problem, pen, b, &g))
}
