//! Run configuration: one TOML file, with command-line overrides applied on top.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::data::DataMode;
use crate::error::{Error, Result};
use crate::factor::{FactorConfig, FactorSvParams, SeriesBlocking};
use crate::models::sv::{SvFamily, SvParams};
use crate::sampler::{BlockingPlan, ModelFamily};
use crate::smc::{SmcOptions, SortMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    SvLeverage,
    FactorSv,
    LinearGaussian,
}

impl ModelName {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::SvLeverage => "sv-leverage",
            ModelName::FactorSv => "factor-sv",
            ModelName::LinearGaussian => "linear-gaussian",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SortName {
    #[default]
    Hilbert,
    None,
}

/// Parameter-name groups; `pmmh` blocks run in Part 1, `pg` blocks in Part 3.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BlockingConfig {
    #[serde(default)]
    pub pmmh: Vec<Vec<String>>,
    #[serde(default)]
    pub pg: Vec<Vec<String>>,
}

impl BlockingConfig {
    pub fn to_series(&self) -> SeriesBlocking {
        SeriesBlocking {
            pmmh: self.pmmh.clone(),
            pg: self.pg.clone(),
        }
    }

    pub fn plan(&self, names: &[String]) -> Result<BlockingPlan> {
        fn refs(g: &[Vec<String>]) -> Vec<Vec<&str>> {
            g.iter()
                .map(|b| b.iter().map(String::as_str).collect())
                .collect()
        }
        let pm = refs(&self.pmmh);
        let pg = refs(&self.pg);
        let pm: Vec<&[&str]> = pm.iter().map(Vec::as_slice).collect();
        let pg: Vec<&[&str]> = pg.iter().map(Vec::as_slice).collect();
        BlockingPlan::from_names(names, &pm, &pg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorSection {
    #[serde(default = "one")]
    pub k: usize,
    #[serde(default = "yes")]
    pub interweave: bool,
    #[serde(default = "yes")]
    pub identify: bool,
    #[serde(default)]
    pub eps_blocking: Option<BlockingConfig>,
    #[serde(default)]
    pub fac_blocking: Option<BlockingConfig>,
}

impl Default for FactorSection {
    fn default() -> Self {
        FactorSection {
            k: 1,
            interweave: true,
            identify: true,
            eps_blocking: None,
            fac_blocking: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LgTruth {
    pub phi: f64,
    pub sigma: f64,
    pub obs_sd: f64,
}

/// True parameters for `simulate`, and the fixed model for `kalman`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    #[serde(default)]
    pub t: usize,
    #[serde(default)]
    pub sv: Option<SvParams>,
    #[serde(default)]
    pub factor: Option<FactorSvParams>,
    #[serde(default)]
    pub linear_gaussian: Option<LgTruth>,
}

fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_particles() -> usize {
    20
}
fn default_sweeps() -> usize {
    11000
}
fn default_burn_in() -> usize {
    1000
}
fn default_stride() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelName,
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub data_mode: DataMode,
    /// Columns to fit, in order; defaults to the first column (univariate)
    /// or every column (factor model).
    #[serde(default)]
    pub series: Option<Vec<String>>,
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Record every `k`-th latent state with each draw; 0 records none.
    #[serde(default = "default_stride")]
    pub state_stride: usize,
    /// Write a checkpoint every `k` sweeps (always at the end).
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
    /// Continue from `out/checkpoint.cbor` if present.
    #[serde(default)]
    pub resume: bool,
    #[serde(default)]
    pub sort: SortName,
    #[serde(default)]
    pub progress_every: Option<usize>,
    #[serde(default)]
    pub blocking: Option<BlockingConfig>,
    /// Starting parameter values by name.
    #[serde(default)]
    pub initial: BTreeMap<String, f64>,
    #[serde(default)]
    pub factor: FactorSection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

impl RunConfig {
    pub fn new(model: ModelName) -> Self {
        RunConfig {
            model,
            data: None,
            data_mode: DataMode::Returns,
            series: None,
            particles: default_particles(),
            sweeps: default_sweeps(),
            burn_in: default_burn_in(),
            seed: 0,
            threads: None,
            out: None,
            state_stride: default_stride(),
            checkpoint_every: None,
            resume: false,
            sort: SortName::Hilbert,
            progress_every: None,
            blocking: None,
            initial: BTreeMap::new(),
            factor: FactorSection::default(),
            simulate: SimulateSection::default(),
        }
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| {
            let field = e
                .span()
                .map(|sp| format!("bytes {}..{}", sp.start, sp.end))
                .unwrap_or_else(|| "file".into());
            Error::config(field, e.message().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&s).map_err(|e| e.context(path.display().to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn smc(&self) -> SmcOptions {
        match self.sort {
            SortName::Hilbert => SmcOptions::default(),
            SortName::None => SmcOptions {
                sort: SortMode::Unsorted,
            },
        }
    }

    pub fn stride(&self) -> Option<usize> {
        (self.state_stride > 0).then_some(self.state_stride)
    }

    /// Checks counts and the blocking plan of the named model.
    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::config("particles", "must be at least 2"));
        }
        if self.sweeps == 0 {
            return Err(Error::config("sweeps", "must be positive"));
        }
        if self.burn_in >= self.sweeps {
            return Err(Error::config(
                "burn_in",
                format!("{} is not below sweeps = {}", self.burn_in, self.sweeps),
            ));
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads", "must be positive"));
        }
        if self.checkpoint_every == Some(0) {
            return Err(Error::config("checkpoint_every", "must be positive"));
        }
        match self.model {
            ModelName::SvLeverage => {
                self.sv_plan()?;
                self.sv_initial()?;
            }
            ModelName::LinearGaussian => {
                self.lg_plan()?;
                self.lg_initial()?;
            }
            ModelName::FactorSv => {
                if self.factor.k == 0 {
                    return Err(Error::config("factor.k", "must be at least 1"));
                }
                if self.blocking.is_some() {
                    return Err(Error::config(
                        "blocking",
                        "use factor.eps_blocking / factor.fac_blocking for the factor model",
                    ));
                }
                let cfg = self.factor_config();
                cfg.eps_blocking
                    .plan()
                    .map_err(|e| e.context("factor.eps_blocking"))?;
                cfg.validate(cfg.k).map_err(|e| e.context("factor"))?;
            }
        }
        Ok(())
    }

    pub fn sv_plan(&self) -> Result<BlockingPlan> {
        let fam = SvFamily::default();
        match &self.blocking {
            Some(b) => b
                .plan(&fam.param_names())
                .map_err(|e| e.context("blocking")),
            None => Ok(fam.default_plan()),
        }
    }

    fn named_initial(&self, names: &[String], mut theta: Vec<f64>) -> Result<Vec<f64>> {
        for (k, v) in &self.initial {
            let i = names
                .iter()
                .position(|n| n == k)
                .ok_or_else(|| Error::config(format!("initial.{k}"), "unknown parameter"))?;
            theta[i] = *v;
        }
        Ok(theta)
    }

    pub fn sv_initial(&self) -> Result<SvParams> {
        let fam = SvFamily::default();
        let theta = self.named_initial(&fam.param_names(), fam.initial_theta())?;
        let p = SvParams::from_slice(&theta);
        if !p.is_valid() {
            return Err(Error::config(
                "initial",
                "initial SV parameters are outside the support",
            ));
        }
        Ok(p)
    }

    pub fn lg_plan(&self) -> Result<BlockingPlan> {
        let names = crate::models::LgFamily::new(0.5, 1.0, 1.0).param_names();
        match &self.blocking {
            Some(b) => b.plan(&names).map_err(|e| e.context("blocking")),
            None => BlockingConfig {
                pmmh: vec![names.clone()],
                pg: vec![],
            }
            .plan(&names),
        }
    }

    pub fn lg_initial(&self) -> Result<[f64; 3]> {
        let fam = crate::models::LgFamily::new(0.5, 1.0, 1.0);
        let th = self.named_initial(&fam.param_names(), fam.initial_theta())?;
        if !fam.log_prior(&th).is_finite() {
            return Err(Error::config(
                "initial",
                "initial linear-Gaussian parameters are outside the support",
            ));
        }
        Ok([th[0], th[1], th[2]])
    }

    pub fn factor_config(&self) -> FactorConfig {
        let mut cfg = FactorConfig::new(self.factor.k, self.particles);
        if let Some(b) = &self.factor.eps_blocking {
            cfg.eps_blocking = b.to_series();
        }
        if let Some(b) = &self.factor.fac_blocking {
            cfg.fac_blocking = b.to_series();
        }
        cfg.interweave = self.factor.interweave;
        cfg.identify = self.factor.identify;
        cfg.smc = self.smc();
        cfg.state_stride = self.stride();
        cfg.progress_every = self.progress_every;
        cfg
    }
}
