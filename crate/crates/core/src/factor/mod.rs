//! Factor stochastic volatility with leverage.
//!
//! `y_t = beta f_t + V_t^{1/2} eps_t` with `S` idiosyncratic SV-with-leverage
//! log-volatilities `h_s` and `K` factor log-volatilities `lambda_k` whose
//! level is pinned at zero and which have no leverage. Given `(y, f, beta)`
//! the model separates into `S + K` univariate SV series: series `s` observes
//! `y_s - beta_s f` and factor `k` observes `f_k`. Each series is run by its
//! own [`Chain`]; the loadings, interweaving and factors couple them.

pub mod gibbs;
pub mod identify;
pub mod interweave;

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gibbs::{factor_posterior, sample_beta_rows, sample_factors};
pub use identify::{identify, postprocess_identification, Identification};
pub use interweave::{deep_interweave, InterweaveStep, B0};

use crate::draws::DrawMatrix;
use crate::error::{Error, Result};
use crate::models::sv::{SvFamily, SvModel, SvParams, SvPrior};
use crate::rng::Stream;
use crate::sampler::{
    AdapterConfig, BlockingPlan, Chain, ChainOptions, ChainState, ModelFamily, SweepTimer,
};
use crate::smc::SmcOptions;

/// Persistence and scale of one factor's log-volatility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorVol {
    pub phi: f64,
    pub tau2: f64,
}

impl FactorVol {
    pub fn sv_params(self) -> SvParams {
        SvParams {
            mu: 0.0,
            phi: self.phi,
            tau2: self.tau2,
            rho: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSvParams {
    /// `S` rows of `K` loadings.
    pub beta: Vec<Vec<f64>>,
    pub eps: Vec<SvParams>,
    pub fac: Vec<FactorVol>,
}

/// A simulated data set with its latent states; every field is indexed
/// `[series][t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSim {
    pub y: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
}

impl FactorSvParams {
    pub fn s_len(&self) -> usize {
        self.eps.len()
    }

    pub fn k_len(&self) -> usize {
        self.fac.len()
    }

    pub fn beta_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.s_len(), self.k_len(), |s, k| self.beta[s][k])
    }

    pub fn validate(&self) -> Result<()> {
        let (s_len, k_len) = (self.s_len(), self.k_len());
        if k_len == 0 || s_len < k_len {
            return Err(Error::config(
                "factor",
                format!("need S >= K >= 1, got S={s_len}, K={k_len}"),
            ));
        }
        if self.beta.len() != s_len || self.beta.iter().any(|r| r.len() != k_len) {
            return Err(Error::config(
                "beta",
                format!("loadings must be {s_len} rows of {k_len}"),
            ));
        }
        if self.beta.iter().flatten().any(|b| !b.is_finite()) {
            return Err(Error::config("beta", "non-finite loading"));
        }
        if let Some(s) = self.eps.iter().position(|p| !p.is_valid()) {
            return Err(Error::config(
                "eps",
                format!("series {} has invalid SV parameters", s + 1),
            ));
        }
        if let Some(k) = self.fac.iter().position(|p| !p.sv_params().is_valid()) {
            return Err(Error::config(
                "fac",
                format!("factor {} has invalid SV parameters", k + 1),
            ));
        }
        Ok(())
    }

    /// Forward simulation; factor `k` uses stream `fac-k`, series `s` uses `eps-s`.
    pub fn simulate(&self, t_len: usize, root: &Stream) -> Result<FactorSim> {
        self.validate()?;
        let mut f = Vec::new();
        let mut lambda = Vec::new();
        for (k, p) in self.fac.iter().enumerate() {
            let (l, fk) = SvModel::new(p.sv_params())
                .simulate(t_len, &mut root.substream(&format!("fac-{}", k + 1)));
            lambda.push(l);
            f.push(fk);
        }
        let mut y = Vec::new();
        let mut h = Vec::new();
        for (s, p) in self.eps.iter().enumerate() {
            let (hs, e) =
                SvModel::new(*p).simulate(t_len, &mut root.substream(&format!("eps-{}", s + 1)));
            let ys = (0..t_len)
                .map(|t| {
                    e[t] + (0..self.k_len())
                        .map(|k| self.beta[s][k] * f[k][t])
                        .sum::<f64>()
                })
                .collect();
            y.push(ys);
            h.push(hs);
        }
        Ok(FactorSim { y, f, h, lambda })
    }
}

/// Blocks of one univariate series, as parameter-name groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesBlocking {
    pub pmmh: Vec<Vec<String>>,
    pub pg: Vec<Vec<String>>,
}

impl SeriesBlocking {
    pub fn new(pmmh: &[&[&str]], pg: &[&[&str]]) -> Self {
        let own = |g: &[&[&str]]| {
            g.iter()
                .map(|b| b.iter().map(|s| s.to_string()).collect())
                .collect()
        };
        SeriesBlocking {
            pmmh: own(pmmh),
            pg: own(pg),
        }
    }

    pub fn plan(&self) -> Result<BlockingPlan> {
        fn refs(g: &[Vec<String>]) -> Vec<Vec<&str>> {
            g.iter()
                .map(|b| b.iter().map(String::as_str).collect())
                .collect()
        }
        let pm = refs(&self.pmmh);
        let pg = refs(&self.pg);
        let pm: Vec<&[&str]> = pm.iter().map(Vec::as_slice).collect();
        let pg: Vec<&[&str]> = pg.iter().map(Vec::as_slice).collect();
        SvFamily::default().plan(&pm, &pg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorConfig {
    pub k: usize,
    pub n_particles: usize,
    /// Blocks for every idiosyncratic series over `(mu, phi, tau2, rho)`.
    pub eps_blocking: SeriesBlocking,
    /// Blocks for every factor series; only `phi` and `tau2` may appear.
    pub fac_blocking: SeriesBlocking,
    pub interweave: bool,
    pub identify: bool,
    pub b0: f64,
    /// Holds the loadings fixed instead of sampling them.
    pub fixed_beta: Option<Vec<Vec<f64>>>,
    /// Runs the idiosyncratic PG blocks before the factor ones.
    pub eps_first: bool,
    pub prior: SvPrior,
    pub eps_initial: SvParams,
    pub fac_initial: FactorVol,
    pub smc: SmcOptions,
    pub adapter: AdapterConfig,
    /// Record every `k`-th log-volatility with each draw.
    pub state_stride: Option<usize>,
    pub progress_every: Option<usize>,
}

impl FactorConfig {
    /// PMMH on `tau2_f` and on `(tau2_eps, rho_eps)` jointly; PG on `beta`,
    /// `phi_f`, `phi_eps` then `mu_eps`.
    pub fn new(k: usize, n_particles: usize) -> Self {
        FactorConfig {
            k,
            n_particles,
            eps_blocking: SeriesBlocking::new(&[&["tau2", "rho"]], &[&["phi"], &["mu"]]),
            fac_blocking: SeriesBlocking::new(&[&["tau2"]], &[&["phi"]]),
            interweave: true,
            identify: true,
            b0: B0,
            fixed_beta: None,
            eps_first: false,
            prior: SvPrior::default(),
            eps_initial: SvParams::default(),
            fac_initial: FactorVol {
                phi: 0.95,
                tau2: 0.05,
            },
            smc: SmcOptions::default(),
            adapter: AdapterConfig::default(),
            state_stride: None,
            progress_every: None,
        }
    }

    fn chain_options(&self) -> ChainOptions {
        ChainOptions {
            n_particles: self.n_particles,
            smc: self.smc,
            adapter: self.adapter,
            state_stride: None,
            progress_every: None,
        }
    }

    pub fn validate(&self, s_len: usize) -> Result<(BlockingPlan, BlockingPlan)> {
        if self.k == 0 {
            return Err(Error::config("k", "need at least one factor"));
        }
        if s_len < self.k {
            return Err(Error::config(
                "k",
                format!("{} factors for {s_len} series", self.k),
            ));
        }
        if self.n_particles < 2 {
            return Err(Error::config("particles", "need at least 2 particles"));
        }
        if !(self.b0 > 0.0) {
            return Err(Error::config("b0", "must be positive"));
        }
        let eps = self.eps_blocking.plan()?;
        let fac = self.fac_blocking.plan()?;
        if let Some(bad) = self
            .fac_blocking
            .pmmh
            .iter()
            .chain(&self.fac_blocking.pg)
            .flatten()
            .find(|n| *n == "mu" || *n == "rho")
        {
            return Err(Error::config(
                "fac_blocking",
                format!("`{bad}` is pinned for factor series"),
            ));
        }
        if let Some(b) = &self.fixed_beta {
            if b.len() != s_len || b.iter().any(|r| r.len() != self.k) {
                return Err(Error::config(
                    "fixed_beta",
                    format!("must be {s_len} rows of {}", self.k),
                ));
            }
        }
        Ok((eps, fac))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorStreams {
    pub beta: Stream,
    pub interweave: Stream,
    pub factors: Stream,
}

/// Serializable state between sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorState {
    /// Row-major `S x K`.
    pub beta: Vec<f64>,
    pub f: Vec<Vec<f64>>,
    pub eps: Vec<ChainState>,
    pub fac: Vec<ChainState>,
    pub streams: FactorStreams,
    pub sweep: usize,
    pub interweave_accepts: Vec<(u64, u64)>,
}

/// Where a recorded column comes from.
#[derive(Debug, Clone, Copy)]
enum Source {
    Fac(usize, usize),
    Eps(usize, usize),
    Beta(usize, usize),
    H(usize, usize),
    Lambda(usize, usize),
}

pub struct FactorChain {
    y: Vec<Vec<f64>>,
    cfg: FactorConfig,
    beta: DMatrix<f64>,
    f: Vec<Vec<f64>>,
    eps: Vec<Chain<SvFamily>>,
    fac: Vec<Chain<SvFamily>>,
    streams: FactorStreams,
    sweep: usize,
    interweave_accepts: Vec<(u64, u64)>,
    last_interweave: Vec<InterweaveStep>,
}

fn check_data(y: &[Vec<f64>]) -> Result<usize> {
    let t_len = y.first().map_or(0, Vec::len);
    if t_len < 2 {
        return Err(Error::Precondition("need at least two time points".into()));
    }
    if let Some(s) = y.iter().position(|r| r.len() != t_len) {
        return Err(Error::Precondition(format!(
            "series {} has {} points, expected {t_len}",
            s + 1,
            y[s].len()
        )));
    }
    Ok(t_len)
}

fn residuals(y: &[Vec<f64>], beta: &DMatrix<f64>, f: &[Vec<f64>]) -> Vec<Vec<f64>> {
    y.iter()
        .enumerate()
        .map(|(s, ys)| {
            ys.iter()
                .enumerate()
                .map(|(t, v)| v - (0..f.len()).map(|k| beta[(s, k)] * f[k][t]).sum::<f64>())
                .collect()
        })
        .collect()
}

impl FactorChain {
    /// Starts from `beta` with unit diagonal and zeros elsewhere (or the fixed
    /// loadings), factors drawn given constant volatilities, and each
    /// idiosyncratic level at the log variance of its residual.
    pub fn new(y: Vec<Vec<f64>>, cfg: FactorConfig, root: &Stream) -> Result<Self> {
        let t_len = check_data(&y)?;
        let s_len = y.len();
        let (eps_plan, fac_plan) = cfg.validate(s_len)?;
        let k_len = cfg.k;
        let beta = match &cfg.fixed_beta {
            Some(b) => DMatrix::from_fn(s_len, k_len, |s, k| b[s][k]),
            None => DMatrix::from_fn(s_len, k_len, |s, k| if s == k { 1.0 } else { 0.0 }),
        };
        let streams = FactorStreams {
            beta: root.substream("beta"),
            interweave: root.substream("interweave"),
            factors: root.substream("factors"),
        };
        let log_var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
            var.max(1e-12).ln()
        };
        let h0: Vec<Vec<f64>> = y.iter().map(|ys| vec![log_var(ys); t_len]).collect();
        let lambda0 = vec![vec![0.0; t_len]; k_len];
        let f = sample_factors(
            &beta,
            &y,
            &h0,
            &lambda0,
            &mut root.substream("init-factors"),
        )?;
        let resid = residuals(&y, &beta, &f);
        let opts = cfg.chain_options();
        let fac_family = SvFamily {
            prior: cfg.prior,
            initial: cfg.fac_initial.sv_params(),
        };
        let mut eps = Vec::with_capacity(s_len);
        for (s, r) in resid.into_iter().enumerate() {
            let initial = SvParams {
                mu: log_var(&r),
                ..cfg.eps_initial
            };
            let family = SvFamily {
                prior: cfg.prior,
                initial,
            };
            let label = format!("eps-{}", s + 1);
            let c = Chain::new(
                family,
                r,
                eps_plan.clone(),
                opts.clone(),
                &root.substream(&label),
            )
            .map_err(|e| e.context(label))?;
            eps.push(c);
        }
        let mut fac = Vec::with_capacity(k_len);
        for (k, fk) in f.iter().enumerate() {
            let label = format!("fac-{}", k + 1);
            let c = Chain::new(
                fac_family,
                fk.clone(),
                fac_plan.clone(),
                opts.clone(),
                &root.substream(&label),
            )
            .map_err(|e| e.context(label))?;
            fac.push(c);
        }
        Ok(FactorChain {
            y,
            cfg,
            beta,
            f,
            eps,
            fac,
            streams,
            sweep: 0,
            interweave_accepts: vec![(0, 0); k_len],
            last_interweave: Vec::new(),
        })
    }

    pub fn restore(y: Vec<Vec<f64>>, cfg: FactorConfig, state: FactorState) -> Result<Self> {
        let t_len = check_data(&y)?;
        let s_len = y.len();
        let (eps_plan, fac_plan) = cfg.validate(s_len)?;
        let k_len = cfg.k;
        if state.beta.len() != s_len * k_len || state.eps.len() != s_len || state.fac.len() != k_len
        {
            return Err(Error::Precondition(
                "checkpoint does not match the data and config".into(),
            ));
        }
        if state.f.iter().any(|r| r.len() != t_len) {
            return Err(Error::Precondition(
                "checkpoint factors do not match the data length".into(),
            ));
        }
        let beta = DMatrix::from_row_slice(s_len, k_len, &state.beta);
        let resid = residuals(&y, &beta, &state.f);
        let opts = cfg.chain_options();
        let eps = state
            .eps
            .into_iter()
            .zip(resid)
            .map(|(st, r)| {
                let family = SvFamily {
                    prior: cfg.prior,
                    initial: cfg.eps_initial,
                };
                Chain::restore(family, r, eps_plan.clone(), opts.clone(), st)
            })
            .collect();
        let fac_family = SvFamily {
            prior: cfg.prior,
            initial: cfg.fac_initial.sv_params(),
        };
        let fac = state
            .fac
            .into_iter()
            .zip(&state.f)
            .map(|(st, fk)| {
                Chain::restore(fac_family, fk.clone(), fac_plan.clone(), opts.clone(), st)
            })
            .collect();
        Ok(FactorChain {
            y,
            cfg,
            beta,
            f: state.f,
            eps,
            fac,
            streams: state.streams,
            sweep: state.sweep,
            interweave_accepts: state.interweave_accepts,
            last_interweave: Vec::new(),
        })
    }

    pub fn state(&self) -> FactorState {
        FactorState {
            beta: (0..self.beta.nrows())
                .flat_map(|s| self.beta.row(s).iter().copied().collect::<Vec<_>>())
                .collect(),
            f: self.f.clone(),
            eps: self.eps.iter().map(|c| c.state().clone()).collect(),
            fac: self.fac.iter().map(|c| c.state().clone()).collect(),
            streams: self.streams.clone(),
            sweep: self.sweep,
            interweave_accepts: self.interweave_accepts.clone(),
        }
    }

    pub fn config(&self) -> &FactorConfig {
        &self.cfg
    }

    pub fn sweep_count(&self) -> usize {
        self.sweep
    }

    pub fn beta(&self) -> &DMatrix<f64> {
        &self.beta
    }

    pub fn factors(&self) -> &[Vec<f64>] {
        &self.f
    }

    pub fn eps_chains(&self) -> &[Chain<SvFamily>] {
        &self.eps
    }

    pub fn fac_chains(&self) -> &[Chain<SvFamily>] {
        &self.fac
    }

    pub fn h_paths(&self) -> Vec<Vec<f64>> {
        self.eps
            .iter()
            .map(|c| c.trajectory().path().to_vec())
            .collect()
    }

    pub fn lambda_paths(&self) -> Vec<Vec<f64>> {
        self.fac
            .iter()
            .map(|c| c.trajectory().path().to_vec())
            .collect()
    }

    /// Interweaving steps of the last sweep.
    pub fn last_interweave(&self) -> &[InterweaveStep] {
        &self.last_interweave
    }

    /// Runs `op` on every idiosyncratic and factor chain in parallel.
    fn each_series(
        &mut self,
        op: impl Fn(&mut Chain<SvFamily>) -> Result<()> + Sync + Send,
    ) -> Result<()> {
        let eps = self
            .eps
            .par_iter_mut()
            .enumerate()
            .map(|(s, c)| op(c).map_err(|e| e.context(format!("eps-{}", s + 1))));
        let fac = self
            .fac
            .par_iter_mut()
            .enumerate()
            .map(|(k, c)| op(c).map_err(|e| e.context(format!("fac-{}", k + 1))));
        eps.chain(fac).collect::<Result<Vec<()>>>().map(|_| ())
    }

    fn pg_blocks(chains: &mut [Chain<SvFamily>], prefix: &str) -> Result<()> {
        chains
            .par_iter_mut()
            .enumerate()
            .map(|(i, c)| {
                for b in c.plan().p1..c.plan().blocks.len() {
                    c.pg_step(b)
                        .map_err(|e| e.context(format!("{prefix}-{}", i + 1)))?;
                }
                Ok(())
            })
            .collect::<Result<Vec<()>>>()
            .map(|_| ())
    }

    /// Part 3: loadings, interweaving, factors, then the per-series PG blocks
    /// on the data implied by the new loadings and factors.
    fn conditional_updates(&mut self) -> Result<()> {
        let h = self.h_paths();
        let mut lambda = self.lambda_paths();
        self.last_interweave.clear();
        if self.cfg.fixed_beta.is_none() {
            self.beta = sample_beta_rows(&self.f, &self.y, &h, &mut self.streams.beta)?;
            if self.cfg.interweave {
                let fp: Vec<(f64, f64)> = self
                    .fac
                    .iter()
                    .map(|c| (c.theta()[1], c.theta()[2]))
                    .collect();
                let steps = deep_interweave(
                    &mut self.beta,
                    &mut self.f,
                    &mut lambda,
                    &fp,
                    self.cfg.b0,
                    &mut self.streams.interweave,
                );
                for st in &steps {
                    if !st.skipped {
                        let acc = &mut self.interweave_accepts[st.k];
                        acc.1 += 1;
                        acc.0 += st.accepted as u64;
                    }
                }
                for (c, l) in self.fac.iter_mut().zip(&lambda) {
                    c.set_path(l);
                }
                self.last_interweave = steps;
            }
        }
        self.f = sample_factors(&self.beta, &self.y, &h, &lambda, &mut self.streams.factors)?;
        for (c, r) in self
            .eps
            .iter_mut()
            .zip(residuals(&self.y, &self.beta, &self.f))
        {
            c.set_observations(r);
        }
        for (c, fk) in self.fac.iter_mut().zip(&self.f) {
            c.set_observations(fk.clone());
        }
        if self.cfg.eps_first {
            Self::pg_blocks(&mut self.eps, "eps")?;
            Self::pg_blocks(&mut self.fac, "fac")
        } else {
            Self::pg_blocks(&mut self.fac, "fac")?;
            Self::pg_blocks(&mut self.eps, "eps")
        }
    }

    pub fn sweep(&mut self) -> Result<()> {
        let sweep = self.sweep + 1;
        let wrap = |part: u8| {
            move |e: Error| Error::Chain {
                sweep,
                part,
                source: Box::new(e),
            }
        };
        self.each_series(|c| {
            for b in 0..c.plan().p1 {
                c.pmmh_step(b)?;
            }
            Ok(())
        })
        .map_err(wrap(1))?;
        self.each_series(|c| c.refresh_trajectory())
            .map_err(wrap(2))?;
        self.conditional_updates().map_err(wrap(3))?;
        self.each_series(|c| c.refresh_inputs()).map_err(wrap(4))?;
        self.sweep = sweep;
        Ok(())
    }

    fn state_times(&self) -> Vec<usize> {
        match self.cfg.state_stride {
            Some(k) if k > 0 => (0..self.y[0].len()).step_by(k).collect(),
            _ => Vec::new(),
        }
    }

    fn columns(&self) -> Vec<(String, Source)> {
        let sv_names = SvFamily::default().param_names();
        let mut out = Vec::new();
        let (ep, fp) = (self.eps[0].plan(), self.fac[0].plan());
        let series = |plan: &BlockingPlan,
                      range: std::ops::Range<usize>,
                      n: usize,
                      fac: bool,
                      out: &mut Vec<(String, Source)>| {
            for b in &plan.blocks[range] {
                for i in 0..n {
                    for &p in &b.params {
                        let (name, src) = if fac {
                            (format!("{}_f[{}]", sv_names[p], i + 1), Source::Fac(i, p))
                        } else {
                            (format!("{}_eps[{}]", sv_names[p], i + 1), Source::Eps(i, p))
                        };
                        out.push((name, src));
                    }
                }
            }
        };
        series(fp, 0..fp.p1, self.fac.len(), true, &mut out);
        series(ep, 0..ep.p1, self.eps.len(), false, &mut out);
        if self.cfg.fixed_beta.is_none() {
            for s in 0..self.eps.len() {
                for k in 0..self.fac.len() {
                    out.push((format!("beta[{},{}]", s + 1, k + 1), Source::Beta(s, k)));
                }
            }
        }
        if self.cfg.eps_first {
            series(ep, ep.p1..ep.blocks.len(), self.eps.len(), false, &mut out);
            series(fp, fp.p1..fp.blocks.len(), self.fac.len(), true, &mut out);
        } else {
            series(fp, fp.p1..fp.blocks.len(), self.fac.len(), true, &mut out);
            series(ep, ep.p1..ep.blocks.len(), self.eps.len(), false, &mut out);
        }
        let times = self.state_times();
        for s in 0..self.eps.len() {
            for &t in &times {
                out.push((format!("h[{}][{}]", s + 1, t + 1), Source::H(s, t)));
            }
        }
        for k in 0..self.fac.len() {
            for &t in &times {
                out.push((
                    format!("lambda[{}][{}]", k + 1, t + 1),
                    Source::Lambda(k, t),
                ));
            }
        }
        out
    }

    /// Draw matrix with parameters in blocking order, then any thinned
    /// `h[s][t]` and `lambda[k][t]`.
    pub fn empty_draws(&self) -> DrawMatrix {
        let cols = self.columns();
        let mut params = Vec::new();
        let mut states = Vec::new();
        for (n, src) in cols {
            match src {
                Source::H(..) | Source::Lambda(..) => states.push(n),
                _ => params.push(n),
            }
        }
        DrawMatrix::new(params, states)
    }

    fn value(&self, src: Source) -> f64 {
        match src {
            Source::Fac(k, p) => self.fac[k].theta()[p],
            Source::Eps(s, p) => self.eps[s].theta()[p],
            Source::Beta(s, k) => self.beta[(s, k)],
            Source::H(s, t) => self.eps[s].trajectory().path()[t],
            Source::Lambda(k, t) => self.fac[k].trajectory().path()[t],
        }
    }

    pub fn record(&self, draws: &mut DrawMatrix) {
        let mut params = Vec::new();
        let mut states = Vec::new();
        for (_, src) in self.columns() {
            match src {
                Source::H(..) | Source::Lambda(..) => states.push(self.value(src)),
                _ => params.push(self.value(src)),
            }
        }
        draws.push(self.sweep, &params, &states);
    }

    /// Per-block acceptance rates, averaged over series, plus interweaving.
    pub fn acceptance_rates(&self) -> Vec<(String, f64)> {
        let avg = |chains: &[Chain<SvFamily>], tag: &str| -> Vec<(String, f64)> {
            let per: Vec<Vec<(String, f64)>> =
                chains.iter().map(|c| c.acceptance_rates()).collect();
            (0..per[0].len())
                .map(|b| {
                    (
                        format!("{}_{tag}", per[0][b].0),
                        per.iter().map(|r| r[b].1).sum::<f64>() / per.len() as f64,
                    )
                })
                .collect()
        };
        let mut out = avg(&self.fac, "f");
        out.extend(avg(&self.eps, "eps"));
        for (k, &(a, p)) in self.interweave_accepts.iter().enumerate() {
            if p > 0 {
                out.push((format!("interweave[{}]", k + 1), a as f64 / p as f64));
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct FactorRunOutput {
    pub draws: DrawMatrix,
    pub seconds_per_sweep: f64,
    pub acceptance: Vec<(String, f64)>,
}

/// Continues until `sweeps` sweeps are done, recording and timing every
/// sweep after `burn_in`.
pub fn continue_factor_chain(
    chain: &mut FactorChain,
    draws: &mut DrawMatrix,
    timer: &mut SweepTimer,
    sweeps: usize,
    burn_in: usize,
    mut on_sweep: impl FnMut(&FactorChain, &DrawMatrix, &SweepTimer) -> Result<()>,
) -> Result<()> {
    while chain.sweep < sweeps {
        let start = Instant::now();
        chain.sweep()?;
        if chain.sweep > burn_in {
            timer.add(start.elapsed().as_secs_f64());
            chain.record(draws);
        }
        if let Some(k) = chain.cfg.progress_every {
            if k > 0 && chain.sweep.is_multiple_of(k) {
                log::info!("sweep {}/{sweeps}", chain.sweep);
            }
        }
        on_sweep(chain, draws, timer)?;
    }
    Ok(())
}

/// Runs the factor sampler from `seed` and, if configured, identifies the
/// recorded loadings.
pub fn run_factor_chain(
    y: &[Vec<f64>],
    cfg: FactorConfig,
    sweeps: usize,
    burn_in: usize,
    seed: u64,
) -> Result<FactorRunOutput> {
    if sweeps <= burn_in {
        return Err(Error::config("sweeps", "sweeps must exceed burn_in"));
    }
    let root = Stream::new(seed).substream("factor-chain");
    let mut chain = FactorChain::new(y.to_vec(), cfg, &root)?;
    let mut draws = chain.empty_draws();
    let mut timer = SweepTimer::default();
    continue_factor_chain(
        &mut chain,
        &mut draws,
        &mut timer,
        sweeps,
        burn_in,
        |_, _, _| Ok(()),
    )?;
    finish_draws(&chain, &mut draws)?;
    Ok(FactorRunOutput {
        draws,
        seconds_per_sweep: timer.per_sweep(),
        acceptance: chain.acceptance_rates(),
    })
}

/// Applies identification post-processing when the config asks for it.
pub fn finish_draws(chain: &FactorChain, draws: &mut DrawMatrix) -> Result<()> {
    if chain.cfg.identify && chain.cfg.fixed_beta.is_none() {
        postprocess_identification(draws, chain.eps.len(), chain.fac.len())?;
    }
    Ok(())
}
