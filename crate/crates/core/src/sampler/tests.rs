use super::*;
use crate::kalman::kalman_oracle;
use crate::models::linear_gaussian::{LgFamily, LinearGaussian};
use crate::models::sv::{SvFamily, SvModel, SvParams};

fn sv_data(t_len: usize) -> Vec<f64> {
    SvModel::new(SvParams {
        mu: -0.5,
        phi: 0.97,
        tau2: 0.04,
        rho: -0.3,
    })
    .simulate(t_len, &mut Stream::new(1))
    .1
}

fn sv_chain(plan: Option<BlockingPlan>) -> Chain<SvFamily> {
    let fam = SvFamily::default();
    let plan = plan.unwrap_or_else(|| fam.default_plan());
    Chain::new(
        fam,
        sv_data(100),
        plan,
        ChainOptions::new(10),
        &Stream::new(2),
    )
    .unwrap()
}

fn coherent<F: ModelFamily>(c: &Chain<F>) -> bool {
    let model = c.family().model(c.theta());
    let run = run_smc(
        &model,
        c.observations(),
        &c.state().inputs,
        SmcOptions::default(),
    )
    .unwrap();
    (run.log_z_hat - c.log_z_hat()).abs() < 1e-10
}

/// Wraps a family and replaces its random-walk proposal.
struct Injected<F> {
    inner: F,
    proposal: Vec<f64>,
}

impl<F: ModelFamily> ModelFamily for Injected<F> {
    type Model = F::Model;
    fn param_names(&self) -> Vec<String> {
        self.inner.param_names()
    }
    fn model(&self, theta: &[f64]) -> F::Model {
        self.inner.model(theta)
    }
    fn initial_theta(&self) -> Vec<f64> {
        self.inner.initial_theta()
    }
    fn log_prior(&self, theta: &[f64]) -> f64 {
        self.inner.log_prior(theta)
    }
    fn to_unconstrained(&self, theta: &[f64]) -> Vec<f64> {
        self.inner.to_unconstrained(theta)
    }
    fn from_unconstrained(&self, u: &[f64]) -> Vec<f64> {
        self.inner.from_unconstrained(u)
    }
    fn log_jacobian(&self, theta: &[f64]) -> f64 {
        self.inner.log_jacobian(theta)
    }
    fn propose(
        &self,
        _block: &[usize],
        _theta: &[f64],
        _s: &mut Stream,
    ) -> Option<(Vec<f64>, f64)> {
        Some((self.proposal.clone(), 0.0))
    }
}

#[test]
fn identical_proposal_is_always_accepted() {
    let fam = Injected {
        inner: SvFamily::default(),
        proposal: SvFamily::default().initial_theta(),
    };
    let plan = SvFamily::default().default_plan();
    let mut c = Chain::new(
        fam,
        sv_data(60),
        plan,
        ChainOptions::new(8),
        &Stream::new(3),
    )
    .unwrap();
    for _ in 0..50 {
        let r = c.pmmh_step(0).unwrap();
        assert_eq!(r.log_alpha, 0.0);
        assert!(r.accepted);
    }
}

#[test]
fn proposal_outside_support_is_rejected() {
    let mut bad = SvFamily::default().initial_theta();
    bad[1] = 1.2;
    let fam = Injected {
        inner: SvFamily::default(),
        proposal: bad,
    };
    let plan = SvFamily::default().default_plan();
    let mut c = Chain::new(
        fam,
        sv_data(60),
        plan,
        ChainOptions::new(8),
        &Stream::new(3),
    )
    .unwrap();
    let before = c.state().clone();
    let r = c.pmmh_step(0).unwrap();
    assert!(!r.accepted);
    assert_eq!(r.log_z_star, f64::NEG_INFINITY);
    assert_eq!(c.theta(), before.theta.as_slice());
    assert_eq!(c.log_z_hat(), before.log_z_hat);
}

#[test]
fn pmmh_ratio_recomputes_from_the_record() {
    let mut c = sv_chain(None);
    let fam = SvFamily::default();
    for _ in 0..40 {
        let r = c.pmmh_step(0).unwrap();
        let model = fam.model(&r.theta_star);
        let z_star = run_smc(
            &model,
            c.observations(),
            &c.state().inputs,
            SmcOptions::default(),
        )
        .unwrap()
        .log_z_hat;
        assert_eq!(z_star.to_bits(), r.log_z_star.to_bits());
        let recomputed = (z_star - r.log_z)
            + (fam.log_prior(&r.theta_star) - fam.log_prior(&r.theta))
            + (fam.log_jacobian(&r.theta_star) - fam.log_jacobian(&r.theta));
        assert!((recomputed - r.log_alpha).abs() < 1e-12);
        assert_eq!(r.accepted, r.log_u < recomputed);
        assert!(coherent(&c));
    }
}

#[test]
fn parts_keep_the_chain_coherent() {
    let mut c = sv_chain(None);
    for _ in 0..5 {
        c.pmmh_step(0).unwrap();
        assert!(coherent(&c));
        c.refresh_trajectory().unwrap();
        let mu_before = c.theta()[0];
        let out = c.pg_step(2).unwrap();
        assert!(out.accepted && out.log_ratio.is_none());
        assert_ne!(c.theta()[0], mu_before);
        c.pg_step(1).unwrap();
        let tr = c.trajectory().clone();
        c.refresh_inputs().unwrap();
        assert_eq!(&tr, c.trajectory());
        assert!(coherent(&c));
    }
}

#[test]
fn part_order_errors_are_preconditions() {
    let mut c = sv_chain(None);
    assert!(matches!(c.pmmh_step(1), Err(Error::Precondition(_))));
    assert!(matches!(c.pg_step(0), Err(Error::Precondition(_))));
}

#[test]
fn degenerate_plans_run() {
    let fam = SvFamily::default();
    let mut pg = sv_chain(Some(fam.pgbs_plan()));
    let mut pm = sv_chain(Some(
        fam.plan(&[&["tau2", "rho"], &["phi"], &["mu"]], &[])
            .unwrap(),
    ));
    for _ in 0..20 {
        pg.sweep().unwrap();
        pm.sweep().unwrap();
    }
    assert!(coherent(&pg) && coherent(&pm));
    assert_eq!(pm.state().sweep, 20);
}

#[test]
fn run_is_reproducible() {
    let fam = SvFamily::default();
    let y = sv_data(80);
    let a = run_chain(
        fam,
        &y,
        fam.default_plan(),
        ChainOptions::new(10),
        30,
        10,
        5,
    )
    .unwrap();
    let b = run_chain(
        fam,
        &y,
        fam.default_plan(),
        ChainOptions::new(10),
        30,
        10,
        5,
    )
    .unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n_rows(), 20);
    assert_eq!(a.sweeps[0], 11);
    assert_eq!(a.param_names, vec!["tau2", "rho", "phi", "mu"]);
}

#[test]
fn checkpoint_resume_matches_uninterrupted() {
    let fam = SvFamily::default();
    let y = sv_data(50);
    let root = Stream::new(9);
    let mut a = Chain::new(
        fam,
        y.clone(),
        fam.default_plan(),
        ChainOptions::new(8),
        &root,
    )
    .unwrap();
    for _ in 0..6 {
        a.sweep().unwrap();
    }
    let mut b = Chain::new(
        fam,
        y.clone(),
        fam.default_plan(),
        ChainOptions::new(8),
        &root,
    )
    .unwrap();
    for _ in 0..3 {
        b.sweep().unwrap();
    }
    let saved = b.state().clone();
    let mut b = Chain::restore(fam, y, fam.default_plan(), ChainOptions::new(8), saved);
    for _ in 0..3 {
        b.sweep().unwrap();
    }
    assert_eq!(a.state(), b.state());
}

#[test]
fn consecutive_refreshes_scatter_around_exact_likelihood() {
    let m = LinearGaussian::scalar(0.8, 0.5, 1.0);
    let y = m.simulate(50, &mut Stream::new(4)).1;
    let exact = kalman_oracle(&m.spec().unwrap(), &y)
        .unwrap()
        .log_likelihood;
    let fam = LgFamily::new(0.8, 0.25, 1.0);
    let plan = BlockingPlan::new(vec![], 0, vec![0, 1, 2], 3).unwrap();
    let mut c = Chain::new(fam, y, plan, ChainOptions::new(50), &Stream::new(5)).unwrap();
    let mut vals = Vec::new();
    for _ in 0..200 {
        c.refresh_trajectory().unwrap();
        c.refresh_inputs().unwrap();
        vals.push(c.log_z_hat());
    }
    assert_ne!(vals[0], vals[1]);
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let sd =
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64).sqrt();
    // Conditional SMC estimates are biased upwards but stay within a few sd of the truth.
    assert!(
        (mean - exact).abs() < 3.0 * sd + 0.5,
        "mean {mean} exact {exact} sd {sd}"
    );
}

#[test]
fn adaptation_steers_acceptance() {
    let fam = SvFamily::default();
    let y = sv_data(200);
    let plan = fam
        .plan(&[&["tau2"], &["rho"]], &[&["phi"], &["mu"]])
        .unwrap();
    let out = run_chain_timed(fam, &y, plan, ChainOptions::new(20), 2500, 500, 7).unwrap();
    for (name, a) in &out.acceptance[..2] {
        assert!(*a > 0.15 && *a < 0.40, "{name}: {a}");
    }
}
