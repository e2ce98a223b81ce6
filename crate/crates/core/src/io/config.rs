//! TOML run configuration. Unknown keys are rejected.
//!
//! ```toml
//! method = "ost"          # ols | tols | apl | apn | apt | ost | host
//! nu = 4                  # number, or "inf"
//! lambda = 0.05           # omit to cross-validate
//! folds = 5
//! seed = 0
//! penalty = "lasso"       # lasso | group
//! center = true
//! host_split = "reuse"    # reuse | two-batch
//! apl_pilot = false
//! grid_len = 50
//! grid_ratio = 1e-4
//! x = "x.ttr"
//! y = "y.ttr"
//! output = "out"
//!
//! [sim]                   # used by `simulate` and `bench`
//! model = "M1"
//! dims = [32, 32]
//! n = 100
//! rho = 0.5
//! nu = 4
//! signal = 1.0
//! sparsity = 0.03
//! replicates = 100
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distributions::Nu;
use crate::error::{Error, Result};
use crate::estimators::{FitConfig, HostSplit, LambdaChoice, Method, PenaltyKind};
use crate::simbench::{Model, SimConfig};

/// `ν` as written in a config: a number or `"inf"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NuValue {
    Number(f64),
    Text(String),
}

impl NuValue {
    pub fn to_nu(&self) -> Result<Nu> {
        match self {
            NuValue::Number(v) => Nu::new(*v),
            NuValue::Text(s) => s.parse().map_err(|_| Error::Config(format!("invalid nu '{}'", s))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub model: Option<String>,
    pub dims: Option<Vec<usize>>,
    pub n: Option<usize>,
    pub rho: Option<f64>,
    pub nu: Option<NuValue>,
    pub signal: Option<f64>,
    pub sparsity: Option<f64>,
    pub replicates: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Option<String>,
    pub nu: Option<NuValue>,
    pub lambda: Option<f64>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub penalty: Option<String>,
    pub center: Option<bool>,
    pub host_split: Option<String>,
    pub apl_pilot: Option<bool>,
    pub grid_len: Option<usize>,
    pub grid_ratio: Option<f64>,
    pub x: Option<PathBuf>,
    pub y: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub sim: Option<SimSection>,
}

fn cfg_err(e: Error) -> Error {
    match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks every field that can be checked without touching data.
    pub fn validate(&self) -> Result<()> {
        self.method()?;
        self.fit_config()?;
        if self.sim.is_some() {
            self.sim_config()?.validate().map_err(cfg_err)?;
        }
        Ok(())
    }

    pub fn method(&self) -> Result<Option<Method>> {
        self.method.as_deref().map(|m| m.parse().map_err(cfg_err)).transpose()
    }

    pub fn fit_config(&self) -> Result<FitConfig> {
        let mut c = FitConfig::default();
        if let Some(nu) = &self.nu {
            c.nu = nu.to_nu().map_err(cfg_err)?;
        }
        if let Some(p) = &self.penalty {
            c.penalty = p.parse::<PenaltyKind>().map_err(cfg_err)?;
        }
        if let Some(h) = &self.host_split {
            c.host_split = h.parse::<HostSplit>().map_err(cfg_err)?;
        }
        if let Some(a) = self.apl_pilot {
            c.apl_pilot = a;
        }
        if let Some(g) = self.grid_len {
            if g == 0 {
                return Err(Error::Config("grid_len must be positive".into()));
            }
            c.grid_len = g;
        }
        if let Some(r) = self.grid_ratio {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::Config(format!("grid_ratio must be in (0,1), got {}", r)));
            }
            c.grid_ratio = r;
        }
        let folds = self.folds.unwrap_or(5);
        if folds < 2 {
            return Err(Error::Config(format!("folds must be at least 2, got {}", folds)));
        }
        c.lambda = match self.lambda {
            Some(l) if !(l >= 0.0 && l.is_finite()) => {
                return Err(Error::Config(format!("lambda must be a finite nonnegative number, got {}", l)))
            }
            Some(l) => LambdaChoice::Fixed(l),
            None => LambdaChoice::Cv {
                folds,
                seed: self.seed.unwrap_or(0),
            },
        };
        Ok(c)
    }

    /// The `[sim]` section over the model defaults.
    pub fn sim_config(&self) -> Result<SimConfig> {
        let s = self.sim.clone().unwrap_or_default();
        let model: Model = s.model.as_deref().unwrap_or("M1").parse().map_err(cfg_err)?;
        let mut c = SimConfig::defaults(model);
        if let Some(d) = s.dims {
            c.dims = d;
        }
        if let Some(n) = s.n {
            c.n = n;
        }
        if let Some(r) = s.rho {
            c.rho = r;
        }
        if let Some(nu) = &s.nu {
            c.nu = nu.to_nu().map_err(cfg_err)?;
        }
        if let Some(b) = s.signal {
            c.signal = b;
        }
        if let Some(sp) = s.sparsity {
            c.sparsity = sp;
        }
        if let Some(r) = s.replicates {
            c.replicates = r;
        }
        c.seed = self.seed.unwrap_or(0);
        Ok(c)
    }
}
