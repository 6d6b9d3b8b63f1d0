//! The operations behind the command-line subcommands. Each reads a
//! [`RunConfig`], writes its outputs into a directory and returns a summary.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::{render_table, summarize, EfficiencyReport};
use crate::draws::DrawMatrix;
use crate::error::{Error, Result};
use crate::factor::{continue_factor_chain, finish_draws, FactorChain, FactorSvParams};
use crate::io::output::CHECKPOINT_VERSION;
use crate::io::{
    load_checkpoint, load_returns_csv, read_draws, read_json, save_checkpoint, write_draws,
    write_json, write_series_csv, ChainCheckpoint, Checkpoint, ModelName, RunConfig, MIN_T,
};
use crate::kalman::{kalman_oracle, KalmanOutput};
use crate::models::linear_gaussian::{LgFamily, LinearGaussian};
use crate::models::sv::{SvFamily, SvModel, SvPrior};
use crate::rng::Stream;
use crate::sampler::{continue_chain, Chain, ChainOptions, ModelFamily, SweepTimer};

pub const DRAWS_FILE: &str = "draws.csv";
pub const RUN_FILE: &str = "run.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.cbor";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_TABLE_FILE: &str = "report.txt";

/// What `fit` leaves in `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub model: String,
    pub seed: u64,
    pub particles: usize,
    pub sweeps: usize,
    pub burn_in: usize,
    pub n_draws: usize,
    /// Wall-clock seconds per post-burn-in sweep.
    pub seconds_per_sweep: f64,
    pub acceptance: Vec<(String, f64)>,
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg
        .out
        .clone()
        .ok_or_else(|| Error::config("out", "no output directory given"))?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn write_resolved_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    let p = dir.join(CONFIG_FILE);
    std::fs::write(&p, cfg.to_toml()?).map_err(|e| Error::io(&p, e))
}

/// Simulates the configured model from `simulate.*` and writes `data.csv`,
/// `states.csv` and `truth.json`.
pub fn simulate(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = out_dir(cfg)?;
    let t_len = cfg.simulate.t;
    if t_len < 2 {
        return Err(Error::config("simulate.t", "must be at least 2"));
    }
    let root = Stream::new(cfg.seed).substream("simulate");
    let missing = |f: &str| Error::config(format!("simulate.{f}"), "true parameters are required");
    match cfg.model {
        ModelName::SvLeverage => {
            let p = cfg.simulate.sv.ok_or_else(|| missing("sv"))?;
            if !p.is_valid() {
                return Err(Error::config(
                    "simulate.sv",
                    "parameters outside the support",
                ));
            }
            let (x, y) = SvModel::new(p).simulate(t_len, &mut root.substream("sv"));
            write_series_csv(dir.join("data.csv"), &["y".into()], &[y])?;
            write_series_csv(dir.join("states.csv"), &["x".into()], &[x])?;
            write_json(&dir.join("truth.json"), &p)?;
        }
        ModelName::FactorSv => {
            let p: &FactorSvParams = cfg
                .simulate
                .factor
                .as_ref()
                .ok_or_else(|| missing("factor"))?;
            let sim = p
                .simulate(t_len, &root)
                .map_err(|e| e.context("simulate.factor"))?;
            let names: Vec<String> = (1..=p.s_len()).map(|s| format!("y{s}")).collect();
            write_series_csv(dir.join("data.csv"), &names, &sim.y)?;
            let mut snames = Vec::new();
            let mut cols = Vec::new();
            for (pre, v) in [("h", &sim.h), ("lambda", &sim.lambda), ("f", &sim.f)] {
                for (i, c) in v.iter().enumerate() {
                    snames.push(format!("{pre}{}", i + 1));
                    cols.push(c.clone());
                }
            }
            write_series_csv(dir.join("states.csv"), &snames, &cols)?;
            write_json(&dir.join("truth.json"), p)?;
        }
        ModelName::LinearGaussian => {
            let p = cfg
                .simulate
                .linear_gaussian
                .ok_or_else(|| missing("linear_gaussian"))?;
            if !(p.phi.abs() < 1.0 && p.sigma >= 0.0 && p.obs_sd > 0.0) {
                return Err(Error::config(
                    "simulate.linear_gaussian",
                    "need |phi| < 1, sigma >= 0, obs_sd > 0",
                ));
            }
            let (x, y) = LinearGaussian::scalar(p.phi, p.sigma, p.obs_sd)
                .simulate(t_len, &mut root.substream("lg"));
            write_series_csv(dir.join("data.csv"), &["y".into()], &[y])?;
            write_series_csv(dir.join("states.csv"), &["x".into()], &[x])?;
            write_json(&dir.join("truth.json"), &p)?;
        }
    }
    write_resolved_config(&dir, cfg)?;
    Ok(dir)
}

/// Loads the configured data as returns, one vector per selected series.
pub fn load_data(cfg: &RunConfig) -> Result<Vec<Vec<f64>>> {
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| Error::config("data", "no data file given"))?;
    let table = load_returns_csv(path, cfg.data_mode)?;
    table.require_length(MIN_T)?;
    let table = table.to_returns()?;
    let names = match (&cfg.series, cfg.model) {
        (Some(n), _) => n.clone(),
        (None, ModelName::FactorSv) => table.names.clone(),
        (None, _) => vec![table.names[0].clone()],
    };
    if cfg.model != ModelName::FactorSv && names.len() != 1 {
        return Err(Error::config(
            "series",
            "univariate models take exactly one series",
        ));
    }
    Ok(table.select(&names)?.values)
}

/// Fields that may differ between a run and its resumption.
fn resumable_view(cfg: &RunConfig) -> RunConfig {
    let mut c = cfg.clone();
    c.sweeps = 0;
    c.resume = false;
    c.threads = None;
    c.out = None;
    c.progress_every = None;
    c.checkpoint_every = None;
    c
}

fn existing_checkpoint(cfg: &RunConfig, dir: &Path) -> Result<Option<Checkpoint>> {
    let p = dir.join(CHECKPOINT_FILE);
    if !cfg.resume || !p.exists() {
        return Ok(None);
    }
    let cp = load_checkpoint(&p)?;
    let saved = RunConfig::from_toml(&cp.config)?;
    if resumable_view(&saved) != resumable_view(cfg) {
        return Err(Error::config(
            "resume",
            "checkpoint was written under a different configuration",
        ));
    }
    Ok(Some(cp))
}

struct Saver {
    path: PathBuf,
    config: String,
    every: Option<usize>,
}

impl Saver {
    fn save(&self, chain: ChainCheckpoint, draws: &DrawMatrix, timer: &SweepTimer) -> Result<()> {
        save_checkpoint(
            &self.path,
            &Checkpoint {
                version: CHECKPOINT_VERSION,
                config: self.config.clone(),
                chain,
                draws: draws.clone(),
                timed_seconds: timer.seconds,
                timed_sweeps: timer.sweeps,
            },
        )
    }

    fn due(&self, sweep: usize) -> bool {
        self.every.is_some_and(|k| sweep.is_multiple_of(k))
    }
}

fn fit_single<F: ModelFamily + Clone>(
    family: F,
    y: Vec<f64>,
    plan: crate::sampler::BlockingPlan,
    cfg: &RunConfig,
    saver: &Saver,
    resume: Option<Checkpoint>,
) -> Result<(DrawMatrix, SweepTimer, Vec<(String, f64)>)> {
    let opts = ChainOptions {
        n_particles: cfg.particles,
        smc: cfg.smc(),
        adapter: Default::default(),
        state_stride: cfg.stride(),
        progress_every: cfg.progress_every,
    };
    let (mut chain, mut draws, mut timer) = match resume {
        Some(Checkpoint {
            chain: ChainCheckpoint::Single(st),
            draws,
            timed_seconds,
            timed_sweeps,
            ..
        }) => {
            let c = Chain::restore(family, y, plan, opts, st);
            (
                c,
                draws,
                SweepTimer {
                    seconds: timed_seconds,
                    sweeps: timed_sweeps,
                },
            )
        }
        Some(_) => {
            return Err(Error::config(
                "resume",
                "checkpoint holds a different model",
            ))
        }
        None => {
            let root = Stream::new(cfg.seed).substream("chain");
            let c = Chain::new(family, y, plan, opts, &root)?;
            let d = c.empty_draws();
            (c, d, SweepTimer::default())
        }
    };
    continue_chain(
        &mut chain,
        &mut draws,
        &mut timer,
        cfg.sweeps,
        cfg.burn_in,
        |c, d, t| {
            if saver.due(c.state().sweep) {
                saver.save(ChainCheckpoint::Single(c.state().clone()), d, t)?;
            }
            Ok(())
        },
    )?;
    saver.save(
        ChainCheckpoint::Single(chain.state().clone()),
        &draws,
        &timer,
    )?;
    Ok((draws, timer, chain.acceptance_rates()))
}

fn fit_factor(
    y: Vec<Vec<f64>>,
    cfg: &RunConfig,
    saver: &Saver,
    resume: Option<Checkpoint>,
) -> Result<(DrawMatrix, SweepTimer, Vec<(String, f64)>)> {
    let fcfg = cfg.factor_config();
    let (mut chain, mut draws, mut timer) = match resume {
        Some(Checkpoint {
            chain: ChainCheckpoint::Factor(st),
            draws,
            timed_seconds,
            timed_sweeps,
            ..
        }) => {
            let c = FactorChain::restore(y, fcfg, st)?;
            (
                c,
                draws,
                SweepTimer {
                    seconds: timed_seconds,
                    sweeps: timed_sweeps,
                },
            )
        }
        Some(_) => {
            return Err(Error::config(
                "resume",
                "checkpoint holds a different model",
            ))
        }
        None => {
            let root = Stream::new(cfg.seed).substream("factor-chain");
            let c = FactorChain::new(y, fcfg, &root)?;
            let d = c.empty_draws();
            (c, d, SweepTimer::default())
        }
    };
    continue_factor_chain(
        &mut chain,
        &mut draws,
        &mut timer,
        cfg.sweeps,
        cfg.burn_in,
        |c, d, t| {
            if saver.due(c.sweep_count()) {
                saver.save(ChainCheckpoint::Factor(c.state()), d, t)?;
            }
            Ok(())
        },
    )?;
    saver.save(ChainCheckpoint::Factor(chain.state()), &draws, &timer)?;
    finish_draws(&chain, &mut draws)?;
    Ok((draws, timer, chain.acceptance_rates()))
}

/// Runs the configured sampler and writes `draws.csv` (with its schema
/// sidecar), `run.json`, the resolved `config.toml` and a checkpoint.
pub fn fit(cfg: &RunConfig) -> Result<FitSummary> {
    cfg.validate()?;
    let dir = out_dir(cfg)?;
    let y = load_data(cfg)?;
    let resume = existing_checkpoint(cfg, &dir)?;
    let saver = Saver {
        path: dir.join(CHECKPOINT_FILE),
        config: cfg.to_toml()?,
        every: cfg.checkpoint_every,
    };
    let (draws, timer, acceptance) = match cfg.model {
        ModelName::SvLeverage => {
            let family = SvFamily {
                prior: SvPrior::default(),
                initial: cfg.sv_initial()?,
            };
            fit_single(family, y[0].clone(), cfg.sv_plan()?, cfg, &saver, resume)?
        }
        ModelName::LinearGaussian => {
            let [phi, s2, r] = cfg.lg_initial()?;
            fit_single(
                LgFamily::new(phi, s2, r),
                y[0].clone(),
                cfg.lg_plan()?,
                cfg,
                &saver,
                resume,
            )?
        }
        ModelName::FactorSv => fit_factor(y, cfg, &saver, resume)?,
    };
    write_draws(&dir.join(DRAWS_FILE), cfg.model.as_str(), &draws)?;
    let summary = FitSummary {
        model: cfg.model.as_str().into(),
        seed: cfg.seed,
        particles: cfg.particles,
        sweeps: cfg.sweeps,
        burn_in: cfg.burn_in,
        n_draws: draws.n_rows(),
        seconds_per_sweep: timer.per_sweep(),
        acceptance,
    };
    write_json(&dir.join(RUN_FILE), &summary)?;
    write_resolved_config(&dir, cfg)?;
    Ok(summary)
}

/// Seconds per sweep from the `run.json` next to a draw file.
pub fn run_seconds(draws_path: &Path) -> Result<f64> {
    let run = draws_path.with_file_name(RUN_FILE);
    let s: FitSummary = read_json(&run)?;
    Ok(s.seconds_per_sweep)
}

/// Efficiency report of a fit, optionally relative to a baseline report;
/// writes `report.json` and `report.txt` into `out`.
pub fn diagnose(
    draws_path: &Path,
    label: &str,
    ct: Option<f64>,
    baseline: Option<&Path>,
    out: &Path,
) -> Result<EfficiencyReport> {
    let (_, draws) = read_draws(draws_path)?;
    let ct = match ct {
        Some(c) => c,
        None => run_seconds(draws_path)?,
    };
    let base = baseline.map(read_json::<EfficiencyReport>).transpose()?;
    let report = summarize(&draws, ct, label, base.as_ref())?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join(REPORT_FILE), &report)?;
    let mut reports = Vec::new();
    if let Some(b) = base {
        reports.push(b);
    }
    reports.push(report.clone());
    let p = out.join(REPORT_TABLE_FILE);
    std::fs::write(&p, render_table(&reports)).map_err(|e| Error::io(&p, e))?;
    Ok(report)
}

/// RTNV of `report` against `baseline`, with both in a table.
pub fn compare(report: &Path, baseline: &Path) -> Result<(EfficiencyReport, String)> {
    let r: EfficiencyReport = read_json(report)?;
    let b: EfficiencyReport = read_json(baseline)?;
    let b = b.clone().relative_to(&b);
    let r = r.relative_to(&b);
    let table = render_table(&[b, r.clone()]);
    Ok((r, table))
}

/// Exact filter and smoother for the configured linear-Gaussian model
/// (`simulate.linear_gaussian`) on the configured data; writes
/// `kalman.json` and `smoothed.csv`.
pub fn kalman(cfg: &RunConfig) -> Result<KalmanOutput> {
    if cfg.model != ModelName::LinearGaussian {
        return Err(Error::config(
            "model",
            "kalman needs model = \"linear-gaussian\"",
        ));
    }
    let p = cfg.simulate.linear_gaussian.ok_or_else(|| {
        Error::config("simulate.linear_gaussian", "model parameters are required")
    })?;
    if !(p.phi.abs() < 1.0 && p.sigma >= 0.0 && p.obs_sd >= 0.0) {
        return Err(Error::config(
            "simulate.linear_gaussian",
            "need |phi| < 1, sigma >= 0, obs_sd >= 0",
        ));
    }
    let y = load_data(cfg)?;
    let spec = LinearGaussian::scalar(p.phi, p.sigma, p.obs_sd).spec()?;
    let out = kalman_oracle(&spec, &y[0])?;
    let dir = out_dir(cfg)?;
    #[derive(Serialize)]
    struct Summary {
        log_likelihood: f64,
        t: usize,
    }
    write_json(
        &dir.join("kalman.json"),
        &Summary {
            log_likelihood: out.log_likelihood,
            t: y[0].len(),
        },
    )?;
    let means: Vec<f64> = (0..y[0].len()).map(|t| out.smoothed_mean(t, 0)).collect();
    let vars: Vec<f64> = (0..y[0].len()).map(|t| out.smoothed_var(t, 0)).collect();
    write_series_csv(
        dir.join("smoothed.csv"),
        &["mean".into(), "var".into()],
        &[means, vars],
    )?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::LgTruth;
    use crate::models::sv::SvParams;

    fn sv_cfg(dir: &Path) -> RunConfig {
        let mut c = RunConfig::new(ModelName::SvLeverage);
        c.simulate.t = 60;
        c.simulate.sv = Some(SvParams {
            mu: -0.5,
            phi: 0.95,
            tau2: 0.05,
            rho: -0.3,
        });
        c.seed = 3;
        c.out = Some(dir.to_path_buf());
        c.particles = 8;
        c.sweeps = 30;
        c.burn_in = 10;
        c
    }

    #[test]
    fn simulate_then_fit_is_byte_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = sv_cfg(dir.path());
        simulate(&c).unwrap();
        c.data = Some(dir.path().join("data.csv"));
        let a_dir = dir.path().join("a");
        let b_dir = dir.path().join("b");
        c.out = Some(a_dir.clone());
        fit(&c).unwrap();
        c.out = Some(b_dir.clone());
        c.threads = Some(2);
        let s = fit(&c).unwrap();
        assert_eq!(s.n_draws, 20);
        let read = |d: &Path| std::fs::read(d.join(DRAWS_FILE)).unwrap();
        assert_eq!(read(&a_dir), read(&b_dir));
        let resolved = RunConfig::load(&a_dir.join(CONFIG_FILE)).unwrap();
        assert_eq!(resolved.seed, 3);
    }

    #[test]
    fn resumed_fit_matches_uninterrupted() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = sv_cfg(dir.path());
        simulate(&c).unwrap();
        c.data = Some(dir.path().join("data.csv"));
        c.out = Some(dir.path().join("full"));
        fit(&c).unwrap();
        let part = dir.path().join("part");
        let mut first = c.clone();
        first.out = Some(part.clone());
        first.sweeps = 18;
        fit(&first).unwrap();
        let mut rest = c.clone();
        rest.out = Some(part.clone());
        rest.resume = true;
        fit(&rest).unwrap();
        let read = |d: &Path| std::fs::read(d.join(DRAWS_FILE)).unwrap();
        assert_eq!(read(&dir.path().join("full")), read(&part));
        let mut other = rest.clone();
        other.seed = 4;
        assert!(matches!(fit(&other), Err(Error::Config { .. })));
    }

    #[test]
    fn diagnose_and_compare() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = sv_cfg(dir.path());
        simulate(&c).unwrap();
        c.data = Some(dir.path().join("data.csv"));
        c.sweeps = 160;
        c.burn_in = 20;
        c.state_stride = 20;
        c.out = Some(dir.path().join("fit"));
        fit(&c).unwrap();
        let rep_dir = dir.path().join("rep");
        let r = diagnose(
            &dir.path().join("fit").join(DRAWS_FILE),
            "eff",
            None,
            None,
            &rep_dir,
        )
        .unwrap();
        let names: Vec<&str> = r.params.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, vec!["tau2", "rho", "phi", "mu"]);
        assert!(r.states.is_some());
        let (cmp, table) = compare(&rep_dir.join(REPORT_FILE), &rep_dir.join(REPORT_FILE)).unwrap();
        assert_eq!((cmp.rtnv_max, cmp.rtnv_mean), (Some(1.0), Some(1.0)));
        assert!(table.contains("RTNV_MAX"));
    }

    #[test]
    fn factor_and_kalman_commands() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig::new(ModelName::FactorSv);
        c.simulate.t = 40;
        c.simulate.factor = Some(FactorSvParams {
            beta: vec![vec![1.0], vec![0.5]],
            eps: vec![SvParams::default(); 2],
            fac: vec![crate::factor::FactorVol {
                phi: 0.9,
                tau2: 0.1,
            }],
        });
        c.out = Some(dir.path().to_path_buf());
        c.particles = 6;
        c.sweeps = 8;
        c.burn_in = 2;
        simulate(&c).unwrap();
        c.data = Some(dir.path().join("data.csv"));
        let s = fit(&c).unwrap();
        assert_eq!(s.n_draws, 6);
        let (_, d) = read_draws(&dir.path().join(DRAWS_FILE)).unwrap();
        assert!(d.param_names.contains(&"beta[2,1]".to_string()));

        let mut k = RunConfig::new(ModelName::LinearGaussian);
        k.simulate.t = 30;
        k.simulate.linear_gaussian = Some(LgTruth {
            phi: 0.8,
            sigma: 0.5,
            obs_sd: 1.0,
        });
        k.out = Some(dir.path().join("lg"));
        simulate(&k).unwrap();
        k.data = Some(dir.path().join("lg").join("data.csv"));
        let out = kalman(&k).unwrap();
        assert!(out.log_likelihood.is_finite());
        assert!(dir.path().join("lg").join("smoothed.csv").exists());
    }

    #[test]
    fn missing_pieces_are_config_errors() {
        let mut c = RunConfig::new(ModelName::SvLeverage);
        assert!(matches!(simulate(&c), Err(Error::Config { .. })));
        let dir = tempfile::tempdir().unwrap();
        c.out = Some(dir.path().to_path_buf());
        assert!(matches!(fit(&c), Err(Error::Config { .. })));
        assert!(matches!(kalman(&c), Err(Error::Config { .. })));
    }
}
