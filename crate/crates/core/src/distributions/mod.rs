//! Tensor normal and tensor t distributions.
//!
//! `Y ~ TT(μ, Ξ, ν)` is generated as `μ + Z/√G` with `Z ~ TN(0, Ξ)` and
//! `G ~ χ²_ν/ν`; `ν = ∞` is the tensor normal.

mod em;

pub use em::{ecme_estimate_nu, em_fit_location_scale, negative_log_likelihood, BracketBound, EcmeOptions, EmFit, EmOptions, NuEstimate};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg;
use crate::tensor::{DenseTensor, KroneckerScale};

/// Degrees of freedom; `Infinite` encodes the tensor normal limit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Nu {
    Finite(f64),
    Infinite,
}

impl Nu {
    pub fn new(v: f64) -> Result<Self> {
        if v == f64::INFINITY {
            Ok(Nu::Infinite)
        } else if v.is_finite() && v > 0.0 {
            Ok(Nu::Finite(v))
        } else {
            Err(Error::InvalidArgument(format!("degrees of freedom must be positive, got {}", v)))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Nu::Finite(v) => v,
            Nu::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Nu::Infinite)
    }

    /// `(ν+p)/(ν+d)`; identically 1 for the normal.
    pub fn weight(self, dist_sq: f64, p: usize) -> f64 {
        match self {
            Nu::Finite(v) => (v + p as f64) / (v + dist_sq),
            Nu::Infinite => 1.0,
        }
    }

    /// `ν/(ν−2)`, the covariance inflation of the t over its scale.
    pub fn variance_factor(self) -> f64 {
        match self {
            Nu::Finite(v) if v > 2.0 => v / (v - 2.0),
            Nu::Finite(_) => f64::INFINITY,
            Nu::Infinite => 1.0,
        }
    }
}

impl std::fmt::Display for Nu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Nu::Finite(v) => write!(f, "{}", v),
            Nu::Infinite => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for Nu {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "normal" => Ok(Nu::Infinite),
            other => {
                let v: f64 = other
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("cannot parse degrees of freedom '{}'", s)))?;
                Nu::new(v)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct TensorTParams {
    pub mu: DenseTensor,
    pub xi: KroneckerScale,
    pub nu: Nu,
}

impl TensorTParams {
    pub fn new(mu: DenseTensor, xi: KroneckerScale, nu: Nu) -> Result<Self> {
        if mu.dims() != xi.dims().as_slice() {
            return Err(Error::Shape(format!("location {:?} vs scale {:?}", mu.dims(), xi.dims())));
        }
        Ok(Self { mu, xi, nu })
    }

    /// Zero location with the given scale.
    pub fn centered(xi: KroneckerScale, nu: Nu) -> Self {
        let mu = DenseTensor::zeros(&xi.dims()).expect("scale dims are positive");
        Self { mu, xi, nu }
    }
}

/// Per-sample mixing variables `G ~ χ²_ν/ν`.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentScale {
    pub g: Vec<f64>,
}

/// Reusable sampler holding the symmetric square roots of the modes.
#[derive(Clone, Debug)]
pub struct TensorSampler {
    mu: DenseTensor,
    roots: Vec<DMatrix<f64>>,
    nu: Nu,
    chi: Option<ChiSquared<f64>>,
}

impl TensorSampler {
    pub fn new(params: &TensorTParams) -> Result<Self> {
        let roots = params
            .xi
            .modes()
            .iter()
            .map(linalg::sym_sqrt)
            .collect::<Result<Vec<_>>>()?;
        let chi = match params.nu {
            Nu::Finite(v) => Some(ChiSquared::new(v).map_err(|e| Error::InvalidArgument(e.to_string()))?),
            Nu::Infinite => None,
        };
        Ok(Self {
            mu: params.mu.clone(),
            roots,
            nu: params.nu,
            chi,
        })
    }

    pub fn nu(&self) -> Nu {
        self.nu
    }

    /// `n` draws as a stack `p_1×…×p_M×n` with their latent scales. For each
    /// sample the normal entries are drawn first, then `G`.
    pub fn sample_stack<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (DenseTensor, LatentScale) {
        let p = self.mu.len();
        let mut z = Vec::with_capacity(p * n);
        let mut g = Vec::with_capacity(n);
        for _ in 0..n {
            z.extend((0..p).map(|_| StandardNormal.sample(rng)).collect::<Vec<f64>>());
            g.push(match &self.chi {
                Some(chi) => chi.sample(rng) / self.nu.value(),
                None => 1.0,
            });
        }
        let mut dims = self.mu.dims().to_vec();
        dims.push(n);
        let mut t = DenseTensor::new(dims, z).expect("sizes agree");
        for (m, r) in self.roots.iter().enumerate() {
            t = t.mode_product(r, m).expect("root dims agree");
        }
        let mu = self.mu.data();
        for (chunk, gi) in t.data_mut().chunks_mut(p).zip(&g) {
            let s = 1.0 / gi.sqrt();
            for (v, m) in chunk.iter_mut().zip(mu) {
                *v = *v * s + m;
            }
        }
        (t, LatentScale { g })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (DenseTensor, f64) {
        let (t, g) = self.sample_stack(1, rng);
        let dims = self.mu.dims().to_vec();
        (t.reshape(dims).expect("same size"), g.g[0])
    }
}

/// One tensor normal draw `μ + ⟦Z; Σ_1^{1/2}, …, Σ_M^{1/2}⟧`.
pub fn sample_tn<R: Rng + ?Sized>(params: &TensorTParams, rng: &mut R) -> Result<DenseTensor> {
    if !params.nu.is_infinite() {
        return Err(Error::InvalidArgument("sample_tn requires nu = inf".into()));
    }
    Ok(TensorSampler::new(params)?.sample(rng).0)
}

/// One tensor t draw with its latent `G` (`G = 1` when `ν = ∞`).
pub fn sample_tt<R: Rng + ?Sized>(params: &TensorTParams, rng: &mut R) -> Result<(DenseTensor, LatentScale)> {
    let (y, g) = TensorSampler::new(params)?.sample(rng);
    Ok((y, LatentScale { g: vec![g] }))
}

/// Log density from a squared distance and `log|⊗Σ_m|`.
pub fn log_density_from_parts(dist_sq: f64, log_det: f64, nu: Nu, p: usize) -> f64 {
    let pf = p as f64;
    match nu {
        Nu::Finite(v) => {
            ln_gamma(0.5 * (v + pf)) - ln_gamma(0.5 * v) - 0.5 * pf * (std::f64::consts::PI * v).ln() - 0.5 * log_det
                - 0.5 * (v + pf) * (dist_sq / v).ln_1p()
        }
        Nu::Infinite => -0.5 * pf * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det - 0.5 * dist_sq,
    }
}

pub fn log_density_tt(y: &DenseTensor, params: &TensorTParams) -> Result<f64> {
    let f = params.xi.factor()?;
    let d = f.mahalanobis_sq(&y.sub(&params.mu)?)?;
    Ok(log_density_from_parts(d, f.log_det(), params.nu, y.len()))
}

/// `(ν+p)/(ν+‖Y−fit‖²_Ξ)`.
pub fn weight(y: &DenseTensor, fit: &DenseTensor, xi: &KroneckerScale, nu: Nu) -> Result<f64> {
    let d = xi.factor()?.mahalanobis_sq(&y.sub(fit)?)?;
    Ok(nu.weight(d, y.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_t4_at_zero() {
        let params = TensorTParams::centered(KroneckerScale::identity(&[1]), Nu::Finite(4.0));
        let y = DenseTensor::zeros(&[1]).unwrap();
        let ld = log_density_tt(&y, &params).unwrap();
        assert!((ld.exp() - 0.375).abs() < 1e-14);
    }

    #[test]
    fn weight_arithmetic() {
        assert_eq!(Nu::Finite(4.0).weight(4.0, 4), 1.0);
        assert_eq!(Nu::Finite(4.0).weight(0.0, 4), 2.0);
        assert_eq!(Nu::Infinite.weight(123.0, 4), 1.0);
        let a = Nu::Finite(4.0).weight(1024.0, 1024);
        let b = Nu::Finite(20.0).weight(1024.0, 1024);
        assert!((a - b).abs() / a < 0.02);
    }

    #[test]
    fn nu_parsing() {
        assert_eq!("inf".parse::<Nu>().unwrap(), Nu::Infinite);
        assert_eq!("4".parse::<Nu>().unwrap(), Nu::Finite(4.0));
        assert!("-1".parse::<Nu>().is_err());
        assert!(Nu::new(0.0).is_err());
    }
}
