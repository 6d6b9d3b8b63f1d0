//! Univariate stochastic volatility with leverage.
//!
//! ```text
//! y_t     = exp(x_t / 2) eps_t
//! x_1     ~ N(mu, tau2 / (1 - phi^2))
//! x_{t+1} = mu + phi (x_t - mu) + tau eta_t,   corr(eps_t, eta_t) = rho
//! ```
//!
//! Conditioning on `y_t` turns the leverage into a shift of the transition
//! mean, so `f_{t+1}(x | x_t, y_t) = N(mu + phi (x_t - mu) + rho tau exp(-x_t/2) y_t, tau2 (1 - rho^2))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Deviate, Stream};
use crate::sampler::{BlockingPlan, ModelFamily, PgOutcome};
use crate::special::{ln_beta, truncated_normal};
use crate::ssm::{
    affine_forward, affine_invert, log_normal_pdf, StateSpaceModel, Trajectory, LN_SQRT_2PI,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvParams {
    pub mu: f64,
    pub phi: f64,
    pub tau2: f64,
    pub rho: f64,
}

impl SvParams {
    pub fn is_valid(&self) -> bool {
        self.mu.is_finite()
            && self.phi.abs() < 1.0
            && self.tau2 > 0.0
            && self.tau2.is_finite()
            && self.rho.abs() < 1.0
    }

    pub fn from_slice(theta: &[f64]) -> Self {
        SvParams {
            mu: theta[0],
            phi: theta[1],
            tau2: theta[2],
            rho: theta[3],
        }
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.mu, self.phi, self.tau2, self.rho]
    }

    /// Stationary variance of the log-volatility.
    pub fn stationary_var(&self) -> f64 {
        self.tau2 / (1.0 - self.phi * self.phi)
    }
}

impl Default for SvParams {
    /// Prior medians used to start a chain.
    fn default() -> Self {
        SvParams {
            mu: 0.0,
            phi: 0.95,
            tau2: 0.05,
            rho: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvModel {
    p: SvParams,
    tau: f64,
    init_sd: f64,
    trans_sd: f64,
}

impl SvModel {
    pub fn new(p: SvParams) -> Self {
        debug_assert!(p.is_valid(), "{p:?}");
        SvModel {
            p,
            tau: p.tau2.sqrt(),
            init_sd: p.stationary_var().sqrt(),
            trans_sd: (p.tau2 * (1.0 - p.rho * p.rho)).sqrt(),
        }
    }

    pub fn params(&self) -> SvParams {
        self.p
    }

    pub fn transition_mean(&self, prev: f64, y_prev: f64) -> f64 {
        let p = &self.p;
        p.mu + p.phi * (prev - p.mu) + p.rho * self.tau * (-0.5 * prev).exp() * y_prev
    }

    pub fn transition_var(&self) -> f64 {
        self.trans_sd * self.trans_sd
    }

    fn moments(&self, t: usize, prev: Option<&[f64]>, y: &[f64]) -> (f64, f64) {
        match prev {
            None => (self.p.mu, self.init_sd),
            Some(p) => (self.transition_mean(p[0], y[t - 1]), self.trans_sd),
        }
    }

    /// Forward simulation of `(x_{1:T}, y_{1:T})`.
    pub fn simulate(&self, t_len: usize, stream: &mut Stream) -> (Vec<f64>, Vec<f64>) {
        let mut x = Vec::with_capacity(t_len);
        let mut y = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let mean = if t == 0 {
                self.p.mu
            } else {
                self.transition_mean(x[t - 1], y[t - 1])
            };
            let sd = if t == 0 { self.init_sd } else { self.trans_sd };
            let xt = mean + sd * stream.next_normal();
            x.push(xt);
            y.push((0.5 * xt).exp() * stream.next_normal());
        }
        (x, y)
    }
}

impl StateSpaceModel for SvModel {
    fn propagate(&self, t: usize, v: &[Deviate], prev: Option<&[f64]>, y: &[f64], out: &mut [f64]) {
        let (m, s) = self.moments(t, prev, y);
        out[0] = affine_forward(m, s, v[0]);
    }

    fn invert_propagate(
        &self,
        t: usize,
        x: &[f64],
        prev: Option<&[f64]>,
        y: &[f64],
        _stream: &mut Stream,
        out: &mut [Deviate],
    ) -> Result<()> {
        let (m, s) = self.moments(t, prev, y);
        out[0] = affine_invert(m, s, x[0]).ok_or_else(|| Error::Singular {
            t,
            msg: format!("state {} not reachable from mean {m} with sd {s}", x[0]),
        })?;
        Ok(())
    }

    fn log_observation(&self, t: usize, x: &[f64], y: &[f64]) -> f64 {
        -LN_SQRT_2PI - 0.5 * x[0] - 0.5 * y[t] * y[t] * (-x[0]).exp()
    }

    fn log_initial(&self, x: &[f64]) -> f64 {
        log_normal_pdf(x[0], self.p.mu, self.init_sd * self.init_sd)
    }

    fn log_transition(&self, t: usize, x: &[f64], prev: &[f64], y: &[f64]) -> f64 {
        log_normal_pdf(
            x[0],
            self.transition_mean(prev[0], y[t - 1]),
            self.transition_var(),
        )
    }
}

/// Prior on `(mu, phi, tau2, rho)`: flat on `mu`, a stretched beta on `phi`,
/// half-Cauchy on `tau` and flat on `atanh(rho)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvPrior {
    pub a0: f64,
    pub b0: f64,
}

impl Default for SvPrior {
    fn default() -> Self {
        SvPrior { a0: 100.0, b0: 1.5 }
    }
}

impl SvPrior {
    /// `p(phi) = ((1+phi)/2)^(a0-1) ((1-phi)/2)^(b0-1) / (2 B(a0, b0))` on (-1, 1).
    pub fn log_phi(&self, phi: f64) -> f64 {
        if phi.abs() >= 1.0 || phi.is_nan() {
            return f64::NEG_INFINITY;
        }
        (self.a0 - 1.0) * (0.5 * (1.0 + phi)).ln() + (self.b0 - 1.0) * (0.5 * (1.0 - phi)).ln()
            - std::f64::consts::LN_2
            - ln_beta(self.a0, self.b0)
    }

    /// Half-Cauchy density of `tau`, `(2/pi) / (1 + tau^2)`.
    pub fn tau_density(tau: f64) -> f64 {
        if tau < 0.0 {
            0.0
        } else {
            std::f64::consts::FRAC_2_PI / (1.0 + tau * tau)
        }
    }

    /// Half-Cauchy on `tau` carried to `tau2`: `p(tau) / (2 tau)`.
    pub fn log_tau2(&self, tau2: f64) -> f64 {
        if !(tau2 > 0.0) || !tau2.is_finite() {
            return f64::NEG_INFINITY;
        }
        std::f64::consts::FRAC_2_PI.ln() - tau2.ln_1p() - std::f64::consts::LN_2 - 0.5 * tau2.ln()
    }

    /// Flat on `xi = atanh(rho)`, i.e. `1 / (1 - rho^2)` on `rho` (improper).
    pub fn log_rho(&self, rho: f64) -> f64 {
        if rho.abs() >= 1.0 || rho.is_nan() {
            return f64::NEG_INFINITY;
        }
        -(1.0 - rho * rho).ln()
    }

    pub fn log_density(&self, p: &SvParams) -> f64 {
        if !p.mu.is_finite() {
            return f64::NEG_INFINITY;
        }
        self.log_phi(p.phi) + self.log_tau2(p.tau2) + self.log_rho(p.rho)
    }
}

/// `eps*_{t-1} = y_{t-1} exp(-x_{t-1} / 2)` for `t = 1..T-1` (0-based).
fn standardized_returns<'a>(path: &'a [f64], y: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
    path.iter()
        .zip(y)
        .take(path.len().saturating_sub(1))
        .map(|(x, y)| y * (-0.5 * x).exp())
}

/// Mean and variance of `mu | x_{1:T}, phi, tau2, rho` under a flat prior.
pub fn mu_conditional(p: &SvParams, path: &[f64], y: &[f64]) -> (f64, f64) {
    let t_len = path.len() as f64;
    let (phi, rho) = (p.phi, p.rho);
    let tau = p.tau2.sqrt();
    let r2 = 1.0 - rho * rho;
    let var = p.tau2 * r2 / ((1.0 - phi * phi) * r2 + (t_len - 1.0) * (1.0 - phi) * (1.0 - phi));
    let resid: f64 = standardized_returns(path, y)
        .enumerate()
        .map(|(k, e)| path[k + 1] - phi * path[k] - rho * tau * e)
        .sum();
    let mean = var * (path[0] * (1.0 - phi * phi) * r2 + (1.0 - phi) * resid) / (p.tau2 * r2);
    (mean, var)
}

/// Exact Gibbs draw of `mu`.
pub fn sample_mu(p: &SvParams, path: &[f64], y: &[f64], stream: &mut Stream) -> f64 {
    let (m, v) = mu_conditional(p, path, y);
    m + v.sqrt() * stream.next_normal()
}

/// Mean and variance of the Gaussian proposal for `phi` (before truncation).
pub fn phi_proposal_moments(p: &SvParams, path: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if path.len() < 2 {
        return Err(Error::Numeric(
            "phi update needs at least two states".into(),
        ));
    }
    let tau = p.tau2.sqrt();
    let r2 = 1.0 - p.rho * p.rho;
    let d = |t: usize| path[t] - p.mu;
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, e) in standardized_returns(path, y).enumerate() {
        num += d(k + 1) * d(k) - p.rho * tau * d(k) * e;
        den += d(k) * d(k);
    }
    den -= d(0) * d(0) * r2;
    if !(den > 0.0) || !num.is_finite() {
        return Err(Error::Numeric(format!("phi proposal precision is {den}")));
    }
    Ok((num / den, p.tau2 * r2 / den))
}

/// `log [p(phi*) sqrt(1 - phi*^2)] - log [p(phi) sqrt(1 - phi^2)]`.
pub fn phi_log_accept_ratio(prior: &SvPrior, phi: f64, phi_star: f64) -> f64 {
    let term = |f: f64| prior.log_phi(f) + 0.5 * (1.0 - f * f).ln();
    term(phi_star) - term(phi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiDraw {
    pub phi: f64,
    pub proposal: f64,
    pub log_ratio: f64,
    pub accepted: bool,
}

/// Truncated-normal independence proposal for `phi`, then one MH decision.
pub fn sample_phi(
    prior: &SvPrior,
    p: &SvParams,
    path: &[f64],
    y: &[f64],
    stream: &mut Stream,
) -> Result<PhiDraw> {
    let (m, v) = phi_proposal_moments(p, path, y)?;
    let proposal = truncated_normal(m, v.sqrt(), -1.0, 1.0, stream);
    let log_ratio = phi_log_accept_ratio(prior, p.phi, proposal);
    let accepted = stream.next_uniform().ln() < log_ratio;
    Ok(PhiDraw {
        phi: if accepted { proposal } else { p.phi },
        proposal,
        log_ratio,
        accepted,
    })
}

pub const SV_PARAM_NAMES: [&str; 4] = ["mu", "phi", "tau2", "rho"];

/// The SV family over `theta = (mu, phi, tau2, rho)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SvFamily {
    pub prior: SvPrior,
    pub initial: SvParams,
}

impl SvFamily {
    /// PMMH on `(tau2, rho)` jointly, PG on `phi` then `mu`.
    pub fn default_plan(&self) -> BlockingPlan {
        self.plan(&[&["tau2", "rho"]], &[&["phi"], &["mu"]])
            .expect("valid default plan")
    }

    /// Particle Gibbs with backward simulation on every parameter.
    pub fn pgbs_plan(&self) -> BlockingPlan {
        self.plan(&[], &[&["tau2", "rho"], &["phi"], &["mu"]])
            .expect("valid plan")
    }

    pub fn plan(&self, pmmh: &[&[&str]], pg: &[&[&str]]) -> Result<BlockingPlan> {
        BlockingPlan::from_names(&self.param_names(), pmmh, pg)
    }
}

impl ModelFamily for SvFamily {
    type Model = SvModel;

    fn param_names(&self) -> Vec<String> {
        SV_PARAM_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn model(&self, theta: &[f64]) -> SvModel {
        SvModel::new(SvParams::from_slice(theta))
    }

    fn initial_theta(&self) -> Vec<f64> {
        self.initial.to_vec()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        self.prior.log_density(&SvParams::from_slice(theta))
    }

    fn to_unconstrained(&self, theta: &[f64]) -> Vec<f64> {
        vec![theta[0], theta[1].atanh(), theta[2].ln(), theta[3].atanh()]
    }

    fn from_unconstrained(&self, u: &[f64]) -> Vec<f64> {
        vec![u[0], u[1].tanh(), u[2].exp(), u[3].tanh()]
    }

    fn log_jacobian(&self, theta: &[f64]) -> f64 {
        let p = SvParams::from_slice(theta);
        (1.0 - p.phi * p.phi).ln() + p.tau2.ln() + (1.0 - p.rho * p.rho).ln()
    }

    fn pg_update(
        &self,
        block: &[usize],
        theta: &[f64],
        path: &Trajectory,
        y: &[f64],
        stream: &mut Stream,
    ) -> Option<Result<PgOutcome>> {
        let p = SvParams::from_slice(theta);
        match block {
            [0] => {
                let mut th = theta.to_vec();
                th[0] = sample_mu(&p, path.path(), y, stream);
                Some(Ok(PgOutcome {
                    theta: th,
                    accepted: true,
                    log_ratio: None,
                }))
            }
            [1] => Some(
                sample_phi(&self.prior, &p, path.path(), y, stream).map(|d| {
                    let mut th = theta.to_vec();
                    th[1] = d.phi;
                    PgOutcome {
                        theta: th,
                        accepted: d.accepted,
                        log_ratio: Some(d.log_ratio),
                    }
                }),
            ),
            _ => None,
        }
    }

    fn log_path_density(&self, theta: &[f64], path: &Trajectory, y: &[f64]) -> f64 {
        let m = self.model(theta);
        let x = path.path();
        let mut s = m.log_initial(&x[..1]) + m.log_observation(0, &x[..1], y);
        for t in 1..x.len() {
            s += log_normal_pdf(
                x[t],
                m.transition_mean(x[t - 1], y[t - 1]),
                m.transition_var(),
            ) + m.log_observation(t, &x[t..t + 1], y);
        }
        s
    }
}
