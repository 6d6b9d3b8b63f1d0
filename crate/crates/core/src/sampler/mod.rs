//! The Efficient PMMH + PG sweep.
//!
//! Each sweep runs four parts in order:
//! 1. PMMH on the first `p1` blocks, reusing the current random inputs so the
//!    likelihood estimates at the current and proposed values are correlated;
//! 2. backward simulation of a fresh trajectory;
//! 3. particle Gibbs on the remaining blocks given that trajectory;
//! 4. constrained conditional SMC to refresh the random inputs around it.

mod adapt;
mod plan;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use adapt::{AdapterConfig, ProposalAdapter};
pub use plan::{Block, BlockingPlan};

use crate::backward::backward_simulate;
use crate::ccsmc::run_ccsmc;
use crate::draws::DrawMatrix;
use crate::error::{Error, Result};
use crate::rng::{RandomInputs, Stream};
use crate::smc::{run_smc, SmcOptions};
use crate::ssm::{ParticleSystem, StateSpaceModel, Trajectory};

/// A parametric family of state-space models together with its prior,
/// reparametrization and any closed-form conditional updates.
pub trait ModelFamily: Sync + Send {
    type Model: StateSpaceModel;

    fn param_names(&self) -> Vec<String>;

    fn model(&self, theta: &[f64]) -> Self::Model;

    fn initial_theta(&self) -> Vec<f64>;

    /// Prior log-density on the constrained scale; `-inf` outside the support.
    fn log_prior(&self, theta: &[f64]) -> f64;

    fn to_unconstrained(&self, theta: &[f64]) -> Vec<f64>;

    fn from_unconstrained(&self, u: &[f64]) -> Vec<f64>;

    /// `log |d theta / d u|` at `theta`.
    fn log_jacobian(&self, theta: &[f64]) -> f64;

    /// Optional non-random-walk proposal for a block, on the constrained
    /// scale. Returns the proposal and `log q(theta | theta*) - log q(theta* | theta)`.
    fn propose(
        &self,
        _block: &[usize],
        _theta: &[f64],
        _stream: &mut Stream,
    ) -> Option<(Vec<f64>, f64)> {
        None
    }

    /// Optional closed-form update of a particle Gibbs block. `None` falls
    /// back to random-walk Metropolis on the complete-data density.
    fn pg_update(
        &self,
        _block: &[usize],
        _theta: &[f64],
        _path: &Trajectory,
        _y: &[f64],
        _stream: &mut Stream,
    ) -> Option<Result<PgOutcome>> {
        None
    }

    /// `log p(x_{1:T}, y_{1:T} | theta)`.
    fn log_path_density(&self, theta: &[f64], path: &Trajectory, y: &[f64]) -> f64 {
        let m = self.model(theta);
        let mut s = m.log_initial(path.x(0)) + m.log_observation(0, path.x(0), y);
        for t in 1..path.t_len() {
            s += m.log_transition(t, path.x(t), path.x(t - 1), y)
                + m.log_observation(t, path.x(t), y);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgOutcome {
    pub theta: Vec<f64>,
    pub accepted: bool,
    /// Log acceptance ratio of a Metropolis step; `None` for exact draws.
    pub log_ratio: Option<f64>,
}

/// Everything needed to re-derive one PMMH decision.
#[derive(Debug, Clone, PartialEq)]
pub struct PmmhRecord {
    pub block: usize,
    pub theta: Vec<f64>,
    pub theta_star: Vec<f64>,
    pub log_z: f64,
    /// `-inf` when the proposal was outside the prior support or the filter collapsed.
    pub log_z_star: f64,
    pub log_prior: f64,
    pub log_prior_star: f64,
    pub log_jacobian: f64,
    pub log_jacobian_star: f64,
    pub log_q_ratio: f64,
    pub log_alpha: f64,
    pub log_u: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChainOptions {
    pub n_particles: usize,
    pub smc: SmcOptions,
    pub adapter: AdapterConfig,
    /// Record every `k`-th state of the trajectory with each draw.
    pub state_stride: Option<usize>,
    /// Log progress every `k` sweeps.
    pub progress_every: Option<usize>,
}

impl ChainOptions {
    pub fn new(n_particles: usize) -> Self {
        ChainOptions {
            n_particles,
            smc: SmcOptions::default(),
            adapter: AdapterConfig::default(),
            state_stride: None,
            progress_every: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SeriesStreams {
    pub pmmh: Stream,
    pub bsim: Stream,
    pub pg: Stream,
    pub ccsmc: Stream,
}

impl SeriesStreams {
    pub fn new(root: &Stream) -> Self {
        SeriesStreams {
            pmmh: root.substream("pmmh"),
            bsim: root.substream("bsim"),
            pg: root.substream("pg"),
            ccsmc: root.substream("ccsmc"),
        }
    }
}

/// Serializable state of one chain between sweeps.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChainState {
    pub theta: Vec<f64>,
    pub inputs: RandomInputs,
    pub trajectory: Trajectory,
    pub log_z_hat: f64,
    pub sweep: usize,
    pub streams: SeriesStreams,
    pub adapters: Vec<Option<ProposalAdapter>>,
    /// Per block: (accepted, proposed).
    pub accepts: Vec<(u64, u64)>,
}

pub struct Chain<F: ModelFamily> {
    family: F,
    y: Vec<f64>,
    plan: BlockingPlan,
    opts: ChainOptions,
    state: ChainState,
    /// Particle system implied by the current theta, inputs and data, when known.
    system: Option<ParticleSystem>,
}

impl<F: ModelFamily> Chain<F> {
    /// Draws fresh inputs, runs one filter at the initial parameters and
    /// backward-simulates the first trajectory.
    pub fn new(
        family: F,
        y: Vec<f64>,
        plan: BlockingPlan,
        opts: ChainOptions,
        root: &Stream,
    ) -> Result<Self> {
        let theta = family.initial_theta();
        Self::with_theta(family, y, plan, opts, root, theta)
    }

    pub fn with_theta(
        family: F,
        y: Vec<f64>,
        plan: BlockingPlan,
        opts: ChainOptions,
        root: &Stream,
        theta: Vec<f64>,
    ) -> Result<Self> {
        let n_params = family.param_names().len();
        if theta.len() != n_params {
            return Err(Error::config(
                "initial",
                format!("expected {n_params} parameters"),
            ));
        }
        if !family.log_prior(&theta).is_finite() {
            return Err(Error::config(
                "initial",
                "initial parameters outside the prior support",
            ));
        }
        if opts.n_particles < 2 {
            return Err(Error::config("particles", "need at least 2 particles"));
        }
        let model = family.model(&theta);
        let mut init = root.substream("init");
        let inputs = RandomInputs::draw(&mut init, y.len(), opts.n_particles, model.state_dim())?;
        let run = run_smc(&model, &y, &inputs, opts.smc)?;
        let mut streams = SeriesStreams::new(root);
        let trajectory = backward_simulate(&run.system, &model, &y, &mut streams.bsim)?;
        let nb = plan.blocks.len();
        let state = ChainState {
            theta,
            inputs,
            trajectory,
            log_z_hat: run.log_z_hat,
            sweep: 0,
            streams,
            adapters: vec![None; nb],
            accepts: vec![(0, 0); nb],
        };
        Ok(Chain {
            family,
            y,
            plan,
            opts,
            state,
            system: Some(run.system),
        })
    }

    /// Rebuilds a chain from a saved state.
    pub fn restore(
        family: F,
        y: Vec<f64>,
        plan: BlockingPlan,
        opts: ChainOptions,
        state: ChainState,
    ) -> Self {
        Chain {
            family,
            y,
            plan,
            opts,
            state,
            system: None,
        }
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn family(&self) -> &F {
        &self.family
    }

    pub fn plan(&self) -> &BlockingPlan {
        &self.plan
    }

    pub fn theta(&self) -> &[f64] {
        &self.state.theta
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.state.trajectory
    }

    pub fn observations(&self) -> &[f64] {
        &self.y
    }

    pub fn log_z_hat(&self) -> f64 {
        self.state.log_z_hat
    }

    pub fn acceptance_rates(&self) -> Vec<(String, f64)> {
        self.plan
            .blocks
            .iter()
            .zip(&self.state.accepts)
            .map(|(b, &(a, p))| {
                (
                    b.name.clone(),
                    if p == 0 { 0.0 } else { a as f64 / p as f64 },
                )
            })
            .collect()
    }

    /// Replaces the data. The cached likelihood is stale until [`Chain::refresh_inputs`].
    pub fn set_observations(&mut self, y: Vec<f64>) {
        assert_eq!(y.len(), self.y.len());
        self.y = y;
        self.system = None;
    }

    /// Overwrites parameters from outside the chain (used by multi-series samplers).
    pub fn set_theta(&mut self, theta: Vec<f64>) {
        self.state.theta = theta;
        self.system = None;
    }

    /// Replaces the trajectory's state path, keeping its indices.
    pub fn set_path(&mut self, path: &[f64]) {
        self.state.trajectory.path_mut().copy_from_slice(path);
    }

    fn system(&mut self) -> Result<&ParticleSystem> {
        if self.system.is_none() {
            let model = self.family.model(&self.state.theta);
            let run = run_smc(&model, &self.y, &self.state.inputs, self.opts.smc)?;
            self.system = Some(run.system);
        }
        Ok(self.system.as_ref().expect("system just built"))
    }

    fn propose_block(&mut self, b: usize, stream_pg: bool) -> (Vec<f64>, f64, bool) {
        let block = self.plan.blocks[b].params.clone();
        let theta = &self.state.theta;
        let stream = if stream_pg {
            &mut self.state.streams.pg
        } else {
            &mut self.state.streams.pmmh
        };
        if let Some((ts, lq)) = self.family.propose(&block, theta, stream) {
            return (ts, lq, false);
        }
        let u = self.family.to_unconstrained(theta);
        let ub: Vec<f64> = block.iter().map(|&k| u[k]).collect();
        let cfg = self.opts.adapter;
        let adapter =
            self.state.adapters[b].get_or_insert_with(|| ProposalAdapter::new(block.len(), cfg));
        let ub_star = adapter.propose(&ub, stream);
        let mut u_star = u;
        for (&k, &v) in block.iter().zip(&ub_star) {
            u_star[k] = v;
        }
        let full = self.family.from_unconstrained(&u_star);
        let mut theta_star = theta.clone();
        for &k in &block {
            theta_star[k] = full[k];
        }
        (theta_star, 0.0, true)
    }

    fn adapt(&mut self, b: usize, accepted: bool) {
        let block = &self.plan.blocks[b].params;
        if let Some(ad) = self.state.adapters[b].as_mut() {
            let u = self.family.to_unconstrained(&self.state.theta);
            let ub: Vec<f64> = block.iter().map(|&k| u[k]).collect();
            ad.update(&ub, accepted);
        }
    }

    fn tally(&mut self, b: usize, accepted: bool) {
        let acc = &mut self.state.accepts[b];
        acc.1 += 1;
        if accepted {
            acc.0 += 1;
        }
    }

    /// Part 1 for block `b`: PMMH with the current random inputs held fixed.
    pub fn pmmh_step(&mut self, b: usize) -> Result<PmmhRecord> {
        if !self.plan.is_pmmh(b) {
            return Err(Error::Precondition(format!(
                "block {b} is not a PMMH block"
            )));
        }
        let (theta_star, log_q_ratio, rw) = self.propose_block(b, false);
        let theta = self.state.theta.clone();
        let log_prior = self.family.log_prior(&theta);
        let log_prior_star = self.family.log_prior(&theta_star);
        let (log_jacobian, log_jacobian_star) = if rw {
            (
                self.family.log_jacobian(&theta),
                self.family.log_jacobian(&theta_star),
            )
        } else {
            (0.0, 0.0)
        };
        let log_u = self.state.streams.pmmh.next_uniform().ln();
        let mut candidate = None;
        let log_z_star = if log_prior_star.is_finite() && log_jacobian_star.is_finite() {
            let model = self.family.model(&theta_star);
            match run_smc(&model, &self.y, &self.state.inputs, self.opts.smc) {
                Ok(run) => {
                    let lz = run.log_z_hat;
                    candidate = Some(run.system);
                    lz
                }
                // A collapsed filter is a zero likelihood estimate.
                Err(Error::WeightDegeneracy { .. }) => f64::NEG_INFINITY,
                Err(e) => return Err(e),
            }
        } else {
            f64::NEG_INFINITY
        };
        let log_z = self.state.log_z_hat;
        let log_alpha = if log_z_star == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            (log_z_star - log_z)
                + (log_prior_star - log_prior)
                + (log_jacobian_star - log_jacobian)
                + log_q_ratio
        };
        let accepted = log_u < log_alpha;
        if accepted {
            self.state.theta = theta_star.clone();
            self.state.log_z_hat = log_z_star;
            self.system = candidate;
        }
        self.tally(b, accepted);
        if rw {
            self.adapt(b, accepted);
        }
        Ok(PmmhRecord {
            block: b,
            theta,
            theta_star,
            log_z,
            log_z_star,
            log_prior,
            log_prior_star,
            log_jacobian,
            log_jacobian_star,
            log_q_ratio,
            log_alpha,
            log_u,
            accepted,
        })
    }

    /// Part 2: backward simulation on the system implied by the current state.
    pub fn refresh_trajectory(&mut self) -> Result<()> {
        let model = self.family.model(&self.state.theta);
        self.system()?;
        let sys = self.system.as_ref().expect("system built");
        let tr = backward_simulate(sys, &model, &self.y, &mut self.state.streams.bsim)?;
        self.state.trajectory = tr;
        Ok(())
    }

    /// Part 3 for block `b`: update given the current trajectory.
    pub fn pg_step(&mut self, b: usize) -> Result<PgOutcome> {
        if self.plan.is_pmmh(b) {
            return Err(Error::Precondition(format!("block {b} is a PMMH block")));
        }
        let block = self.plan.blocks[b].params.clone();
        let name = self.plan.blocks[b].name.clone();
        let special = self.family.pg_update(
            &block,
            &self.state.theta,
            &self.state.trajectory,
            &self.y,
            &mut self.state.streams.pg,
        );
        let out = match special {
            Some(r) => r.map_err(|e| e.context(format!("block {name}")))?,
            None => {
                let (theta_star, log_q_ratio, rw) = self.propose_block(b, true);
                let theta = &self.state.theta;
                let path = &self.state.trajectory;
                let lp_star = self.family.log_prior(&theta_star);
                let log_u = self.state.streams.pg.next_uniform().ln();
                let log_ratio = if lp_star.is_finite() {
                    let mut r = lp_star - self.family.log_prior(theta)
                        + self.family.log_path_density(&theta_star, path, &self.y)
                        - self.family.log_path_density(theta, path, &self.y)
                        + log_q_ratio;
                    if rw {
                        r +=
                            self.family.log_jacobian(&theta_star) - self.family.log_jacobian(theta);
                    }
                    r
                } else {
                    f64::NEG_INFINITY
                };
                let accepted = log_u < log_ratio;
                let out = PgOutcome {
                    theta: if accepted { theta_star } else { theta.clone() },
                    accepted,
                    log_ratio: Some(log_ratio),
                };
                self.state.theta = out.theta.clone();
                if rw {
                    self.adapt(b, accepted);
                }
                out
            }
        };
        self.state.theta = out.theta.clone();
        self.tally(b, out.accepted);
        self.system = None;
        Ok(out)
    }

    /// Part 4: conditional SMC around the current trajectory.
    pub fn refresh_inputs(&mut self) -> Result<()> {
        let model = self.family.model(&self.state.theta);
        let run = run_ccsmc(
            &model,
            &self.y,
            self.opts.n_particles,
            &self.state.trajectory,
            &mut self.state.streams.ccsmc,
            self.opts.smc,
        )?;
        self.state.inputs = run.inputs;
        self.state.log_z_hat = run.log_z_hat;
        self.system = Some(run.system);
        Ok(())
    }

    pub fn sweep(&mut self) -> Result<()> {
        let sweep = self.state.sweep + 1;
        let wrap = |part: u8| {
            move |e: Error| Error::Chain {
                sweep,
                part,
                source: Box::new(e),
            }
        };
        for b in 0..self.plan.p1 {
            self.pmmh_step(b).map_err(wrap(1))?;
        }
        self.refresh_trajectory().map_err(wrap(2))?;
        for b in self.plan.p1..self.plan.blocks.len() {
            self.pg_step(b).map_err(wrap(3))?;
        }
        self.refresh_inputs().map_err(wrap(4))?;
        self.state.sweep = sweep;
        Ok(())
    }

    pub fn state_times(&self) -> Vec<usize> {
        match self.opts.state_stride {
            Some(k) if k > 0 => (0..self.y.len()).step_by(k).collect(),
            _ => Vec::new(),
        }
    }

    pub fn empty_draws(&self) -> DrawMatrix {
        let names = self.family.param_names();
        let params = self
            .plan
            .param_order()
            .into_iter()
            .map(|k| names[k].clone())
            .collect();
        let d = self.state.trajectory.dim();
        let states = self
            .state_times()
            .into_iter()
            .flat_map(|t| {
                (0..d).map(move |k| {
                    if d == 1 {
                        format!("x[{}]", t + 1)
                    } else {
                        format!("x[{}][{}]", t + 1, k + 1)
                    }
                })
            })
            .collect();
        DrawMatrix::new(params, states)
    }

    pub fn record(&self, draws: &mut DrawMatrix) {
        let params: Vec<f64> = self
            .plan
            .param_order()
            .into_iter()
            .map(|k| self.state.theta[k])
            .collect();
        let states: Vec<f64> = self
            .state_times()
            .into_iter()
            .flat_map(|t| self.state.trajectory.x(t).to_vec())
            .collect();
        draws.push(self.state.sweep, &params, &states);
    }
}

/// Output of a timed run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub draws: DrawMatrix,
    /// Wall-clock seconds per post-burn-in sweep.
    pub seconds_per_sweep: f64,
    pub acceptance: Vec<(String, f64)>,
}

/// Wall-clock time spent in recorded (post-burn-in) sweeps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepTimer {
    pub seconds: f64,
    pub sweeps: usize,
}

impl SweepTimer {
    pub fn add(&mut self, seconds: f64) {
        self.seconds += seconds;
        self.sweeps += 1;
    }

    pub fn per_sweep(&self) -> f64 {
        if self.sweeps == 0 {
            0.0
        } else {
            self.seconds / self.sweeps as f64
        }
    }
}

/// Continues `chain` until `sweeps` sweeps are done, recording and timing
/// every sweep after `burn_in`. `on_sweep` runs after each sweep.
pub fn continue_chain<F: ModelFamily>(
    chain: &mut Chain<F>,
    draws: &mut DrawMatrix,
    timer: &mut SweepTimer,
    sweeps: usize,
    burn_in: usize,
    mut on_sweep: impl FnMut(&Chain<F>, &DrawMatrix, &SweepTimer) -> Result<()>,
) -> Result<()> {
    while chain.state.sweep < sweeps {
        let start = Instant::now();
        chain.sweep()?;
        let s = chain.state.sweep;
        if s > burn_in {
            timer.add(start.elapsed().as_secs_f64());
            chain.record(draws);
        }
        if let Some(k) = chain.opts.progress_every {
            if k > 0 && s.is_multiple_of(k) {
                log::info!("sweep {s}/{sweeps}  log Z^ = {:.3}", chain.state.log_z_hat);
            }
        }
        on_sweep(chain, draws, timer)?;
    }
    Ok(())
}

pub fn run_chain_timed<F: ModelFamily>(
    family: F,
    y: &[f64],
    plan: BlockingPlan,
    opts: ChainOptions,
    sweeps: usize,
    burn_in: usize,
    seed: u64,
) -> Result<RunOutput> {
    if sweeps <= burn_in {
        return Err(Error::config("sweeps", "sweeps must exceed burn_in"));
    }
    let root = Stream::new(seed).substream("chain");
    let mut chain = Chain::new(family, y.to_vec(), plan, opts, &root)?;
    let mut draws = chain.empty_draws();
    let mut timer = SweepTimer::default();
    continue_chain(
        &mut chain,
        &mut draws,
        &mut timer,
        sweeps,
        burn_in,
        |_, _, _| Ok(()),
    )?;
    Ok(RunOutput {
        draws,
        seconds_per_sweep: timer.per_sweep(),
        acceptance: chain.acceptance_rates(),
    })
}

/// Runs the sampler and returns the post-burn-in draws.
pub fn run_chain<F: ModelFamily>(
    family: F,
    y: &[f64],
    plan: BlockingPlan,
    opts: ChainOptions,
    sweeps: usize,
    burn_in: usize,
    seed: u64,
) -> Result<DrawMatrix> {
    run_chain_timed(family, y, plan, opts, sweeps, burn_in, seed).map(|o| o.draws)
}

#[cfg(test)]
mod tests;
