//! Simulation models M1–M4, accuracy metrics and replicate grids.
//!
//! Every replicate is generated from its own seed `replicate_seed(seed, r)`,
//! so any replicate can be regenerated alone and grid output does not
//! depend on how replicates are scheduled. The true coefficient tensor is
//! drawn once per configuration from the configuration seed.

mod masks;

pub use masks::{mask, parse_masks, Mask};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::distributions::{Nu, TensorSampler, TensorTParams};
use crate::error::{Error, Result};
use crate::estimators::{fit, Dataset, FitConfig, LambdaChoice, Method};
use crate::par::{self, Parallelism};
use crate::tensor::{ar_matrix, KroneckerScale};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Rhombus,
    Bat,
    Cross,
}

impl Shape {
    fn mask_name(self) -> &'static str {
        match self {
            Shape::Rhombus => "rhombus",
            Shape::Bat => "bat",
            Shape::Cross => "cross",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    M1,
    M2,
    M3,
    M4(Shape),
}

impl Model {
    /// Number of predictors.
    pub fn q(self) -> usize {
        match self {
            Model::M1 => 1,
            Model::M2 => 5,
            Model::M3 => 4,
            Model::M4(_) => 10,
        }
    }

    /// Selection is scored on mode-(M+1) fibers rather than single cells.
    pub fn fiber_selection(self) -> bool {
        matches!(self, Model::M4(_))
    }

    pub fn name(self) -> &'static str {
        match self {
            Model::M1 => "M1",
            Model::M2 => "M2",
            Model::M3 => "M3",
            Model::M4(Shape::Rhombus) => "M4-rhombus",
            Model::M4(Shape::Bat) => "M4-bat",
            Model::M4(Shape::Cross) => "M4-cross",
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m1" => Ok(Model::M1),
            "m2" => Ok(Model::M2),
            "m3" => Ok(Model::M3),
            "m4-rhombus" => Ok(Model::M4(Shape::Rhombus)),
            "m4-bat" => Ok(Model::M4(Shape::Bat)),
            "m4-cross" => Ok(Model::M4(Shape::Cross)),
            other => Err(Error::InvalidArgument(format!("unknown model '{}'", other))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub model: Model,
    pub dims: Vec<usize>,
    pub n: usize,
    pub rho: f64,
    pub nu: Nu,
    /// Signal strength `b`.
    pub signal: f64,
    /// Proportion of nonzero cells (M1 only).
    pub sparsity: f64,
    pub seed: u64,
    pub replicates: usize,
}

impl SimConfig {
    /// The published defaults for `model`: 32×32 responses, `ρ = 0.5`,
    /// `ν = 4`, `b = 1`, `s = 0.03`; `n = 50` and `b = 0.8` for M3.
    pub fn defaults(model: Model) -> Self {
        let (n, signal) = match model {
            Model::M3 => (50, 0.8),
            _ => (100, 1.0),
        };
        Self {
            model,
            dims: vec![32, 32],
            n,
            rho: 0.5,
            nu: Nu::Finite(4.0),
            signal,
            sparsity: 0.03,
            seed: 0,
            replicates: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("dims must be positive, got {:?}", self.dims)));
        }
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.sparsity > 0.0 && self.sparsity <= 1.0) {
            return Err(Error::InvalidArgument(format!("sparsity must be in (0,1], got {}", self.sparsity)));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidArgument(format!("rho must be in (-1,1), got {}", self.rho)));
        }
        if !self.signal.is_finite() {
            return Err(Error::InvalidArgument("signal must be finite".into()));
        }
        match self.model {
            Model::M2 | Model::M3 | Model::M4(_) if self.dims.len() != 2 => {
                Err(Error::InvalidArgument(format!("{} needs 2-way responses", self.model)))
            }
            _ => Ok(()),
        }
    }

    pub fn p(&self) -> usize {
        self.dims.iter().product()
    }

    /// Short identifier used in report tables.
    pub fn label(&self) -> String {
        let dims: Vec<String> = self.dims.iter().map(|d| d.to_string()).collect();
        format!(
            "{}:{}:n={}:rho={}:nu={}:b={}:s={}",
            self.model,
            dims.join("x"),
            self.n,
            self.rho,
            self.nu,
            self.signal,
            self.sparsity
        )
    }
}

/// The true coefficients and their support.
#[derive(Clone, Debug)]
pub struct Truth {
    /// `p×q` matrix of vectorized coefficient slices.
    pub b: DMatrix<f64>,
    /// Nonzero cells of `vec(B)`, or nonzero fibers for M4.
    pub support: Vec<bool>,
}

/// One simulated replicate.
#[derive(Clone, Debug)]
pub struct Replicate {
    pub dataset: Dataset,
    pub truth: Truth,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `index` under configuration seed `seed`.
pub fn replicate_seed(seed: u64, index: u64) -> u64 {
    splitmix(splitmix(seed) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Top `k` entries of `v` by absolute value, ties to the lower index.
fn keep_largest(v: &mut [f64], k: usize) {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    for &i in &order[k.min(v.len())..] {
        v[i] = 0.0;
    }
}

fn support_of(b: &DMatrix<f64>, fibers: bool) -> Vec<bool> {
    if fibers {
        b.row_iter().map(|r| r.iter().any(|v| *v != 0.0)).collect()
    } else {
        b.iter().map(|v| *v != 0.0).collect()
    }
}

fn mask_for(name: &str, dims: &[usize]) -> Result<Vec<bool>> {
    let m = mask(name)?;
    if dims != [m.rows, m.cols] {
        return Err(Error::InvalidArgument(format!(
            "shape mask '{}' is {}x{} but responses are {:?}",
            name, m.rows, m.cols, dims
        )));
    }
    Ok(m.column_major())
}

/// The true coefficients of `config`, drawn from the configuration seed.
pub fn truth(config: &SimConfig) -> Result<Truth> {
    config.validate()?;
    let p = config.p();
    let q = config.model.q();
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(config.seed ^ 0x5EED_0F7E_A1B0_0000));
    let b = match config.model {
        Model::M1 => {
            let k = (config.sparsity * p as f64).round() as usize;
            let mut b = DMatrix::zeros(p, 1);
            for i in rand::seq::index::sample(&mut rng, p, k) {
                b[(i, 0)] = config.signal;
            }
            b
        }
        Model::M2 => {
            let normal = Normal::new(0.0, 0.5f64.sqrt()).expect("valid normal");
            let mut alphas: Vec<Vec<f64>> = config
                .dims
                .iter()
                .map(|&d| (0..d).map(|_| normal.sample(&mut rng)).collect())
                .collect();
            for a in alphas.iter_mut() {
                let k = (0.2 * a.len() as f64).round() as usize;
                keep_largest(a, k);
            }
            let a3: Vec<f64> = (0..q).map(|_| normal.sample(&mut rng)).collect();
            let (a1, a2) = (&alphas[0], &alphas[1]);
            DMatrix::from_fn(p, q, |j, k| {
                let (r, c) = (j % a1.len(), j / a1.len());
                a1[r] * a2[c] * a3[k]
            })
        }
        Model::M3 => {
            let mut b = DMatrix::zeros(p, q);
            for (k, name) in [(1, "cross"), (2, "diagonal"), (3, "bat")] {
                for (j, on) in mask_for(name, &config.dims)?.into_iter().enumerate() {
                    if on {
                        b[(j, k)] = config.signal;
                    }
                }
            }
            b
        }
        Model::M4(shape) => {
            let m = mask_for(shape.mask_name(), &config.dims)?;
            DMatrix::from_fn(p, q, |j, _| if m[j] { config.signal } else { 0.0 })
        }
    };
    let support = support_of(&b, config.model.fiber_selection());
    Ok(Truth { b, support })
}

/// Replicate `index`: standard normal predictors, tensor t errors with AR(ρ)
/// mode scales, centered.
pub fn generate(config: &SimConfig, index: u64) -> Result<Replicate> {
    let truth = truth(config)?;
    generate_with(config, &truth, index)
}

fn generate_with(config: &SimConfig, truth: &Truth, index: u64) -> Result<Replicate> {
    let (p, q, n) = (config.p(), config.model.q(), config.n);
    let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(config.seed, index));
    let x = DMatrix::from_fn(q, n, |_, _| StandardNormal.sample(&mut rng));
    let modes = config
        .dims
        .iter()
        .map(|&d| ar_matrix(d, config.rho))
        .collect::<Result<Vec<_>>>()?;
    let sampler = TensorSampler::new(&TensorTParams::centered(KroneckerScale::new(modes)?, config.nu))?;
    let (mut e, _) = sampler.sample_stack(n, &mut rng);
    let signal = &truth.b * &x;
    for (chunk, col) in e.data_mut().chunks_mut(p).zip(signal.column_iter()) {
        chunk.iter_mut().zip(col.iter()).for_each(|(v, s)| *v += s);
    }
    let dataset = Dataset::new(x, e)?.center()?;
    Ok(Replicate {
        dataset,
        truth: truth.clone(),
    })
}

/// `100 ‖B̂ − B‖²_F / ‖B‖²_F`.
pub fn ree(b_hat: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    if b_hat.shape() != b.shape() {
        return Err(Error::Shape("estimate and truth differ in shape".into()));
    }
    let denom = b.norm_squared();
    if denom == 0.0 {
        return Err(Error::InvalidArgument("relative error of a zero signal".into()));
    }
    Ok(100.0 * (b_hat - b).norm_squared() / denom)
}

/// True and false positive rates in percent. An empty positive (negative)
/// class scores TPR 100 (FPR 0).
pub fn tpr_fpr(estimated: &[bool], truth: &[bool]) -> Result<(f64, f64)> {
    if estimated.len() != truth.len() {
        return Err(Error::Shape("support sets over different universes".into()));
    }
    let (mut tp, mut pos, mut fp, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (&e, &t) in estimated.iter().zip(truth) {
        if t {
            pos += 1;
            tp += e as usize;
        } else {
            neg += 1;
            fp += e as usize;
        }
    }
    let tpr = if pos == 0 { 100.0 } else { 100.0 * tp as f64 / pos as f64 };
    let fpr = if neg == 0 { 0.0 } else { 100.0 * fp as f64 / neg as f64 };
    Ok((tpr, fpr))
}

/// Support of an estimate scored like the truth of `model`.
pub fn estimated_support(b_hat: &DMatrix<f64>, model: Model) -> Vec<bool> {
    support_of(b_hat, model.fiber_selection())
}

/// Metrics of one fit on one replicate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReplicateMetrics {
    pub ree: f64,
    /// `None` for dense estimators.
    pub tpr_fpr: Option<(f64, f64)>,
}

/// Fits `method` to replicate `index` and scores it. Cross-validation folds
/// are seeded from the replicate seed.
pub fn evaluate(config: &SimConfig, truth: &Truth, index: u64, method: Method, fit_config: &FitConfig) -> Result<ReplicateMetrics> {
    let rep = generate_with(config, truth, index)?;
    let mut fc = *fit_config;
    if let LambdaChoice::Cv { folds, .. } = fc.lambda {
        fc.lambda = LambdaChoice::Cv {
            folds,
            seed: replicate_seed(config.seed, index),
        };
    }
    let fit = fit(&rep.dataset, method, &fc)?;
    let b_hat = fit.b_matrix();
    let ree = ree(&b_hat, &truth.b)?;
    let tpr_fpr = if method == Method::Ols {
        None
    } else {
        Some(tpr_fpr(&estimated_support(&b_hat, config.model), &truth.support)?)
    };
    Ok(ReplicateMetrics { ree, tpr_fpr })
}

/// Mean and standard error; the error is `None` below two values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub se: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let se = (values.len() > 1).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        });
        Some(Self { mean, se })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub config: String,
    pub method: Method,
    pub replicates: usize,
    pub failures: usize,
    pub ree: Option<Summary>,
    pub tpr: Option<Summary>,
    pub fpr: Option<Summary>,
    /// First failure message, if any replicate failed.
    pub first_error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    pub fn row(&self, config: &str, method: Method) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.config == config && r.method == method)
    }
}

/// All replicates of every configuration under every method. A failing
/// replicate is counted and excluded from the summaries.
pub fn run_grid(configs: &[SimConfig], methods: &[Method], fit_config: &FitConfig, parallelism: Parallelism) -> Result<MetricReport> {
    let mut rows = Vec::new();
    for config in configs {
        let truth = truth(config)?;
        let results: Vec<Vec<Result<ReplicateMetrics>>> = par::install(parallelism, || {
            par::map_indexed(config.replicates, |r| {
                methods
                    .iter()
                    .map(|&m| evaluate(config, &truth, r as u64, m, fit_config))
                    .collect()
            })
        });
        for (mi, &method) in methods.iter().enumerate() {
            let mut ree = Vec::new();
            let mut tpr = Vec::new();
            let mut fpr = Vec::new();
            let mut failures = 0;
            let mut first_error = None;
            for rep in &results {
                match &rep[mi] {
                    Ok(m) => {
                        ree.push(m.ree);
                        if let Some((t, f)) = m.tpr_fpr {
                            tpr.push(t);
                            fpr.push(f);
                        }
                    }
                    Err(e) => {
                        failures += 1;
                        if first_error.is_none() {
                            first_error = Some(format!("{}: {}", e.code(), e));
                        }
                    }
                }
            }
            if failures > 0 {
                log::warn!("{} {}: {} of {} replicates failed", config.label(), method, failures, config.replicates);
            }
            rows.push(MetricRow {
                config: config.label(),
                method,
                replicates: config.replicates,
                failures,
                ree: Summary::of(&ree),
                tpr: Summary::of(&tpr),
                fpr: Summary::of(&fpr),
                first_error,
            });
        }
    }
    Ok(MetricReport { rows })
}
