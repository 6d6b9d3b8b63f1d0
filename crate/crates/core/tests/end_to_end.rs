use pmcmc::diagnostics::iact;
use pmcmc::factor::{run_factor_chain, FactorConfig, FactorSvParams, FactorVol};
use pmcmc::kalman::kalman_oracle;
use pmcmc::models::linear_gaussian::{LgFamily, LinearGaussian};
use pmcmc::models::sv::{SvModel, SvParams};
use pmcmc::rng::Stream;
use pmcmc::sampler::{run_chain, BlockingPlan, ChainOptions};

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// With every parameter fixed the sampler is a pure trajectory kernel, so
/// recorded states should average to the Kalman smoothed means.
#[test]
fn linear_gaussian_state_draws_match_kalman_smoother() {
    let (phi, sigma, obs_sd) = (0.8, 0.5, 1.0);
    let model = LinearGaussian::scalar(phi, sigma, obs_sd);
    let (_, y) = model.simulate(25, &mut Stream::new(31).substream("data"));
    let kal = kalman_oracle(&model.spec().unwrap(), &y).unwrap();

    let names: Vec<String> = ["phi", "sigma2", "obs_var"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let plan = BlockingPlan::from_names(&names, &[], &[]).unwrap();
    let mut opts = ChainOptions::new(20);
    opts.state_stride = Some(1);
    let family = LgFamily::new(phi, sigma * sigma, obs_sd * obs_sd);
    let draws = run_chain(family, &y, plan, opts, 6000, 500, 32).unwrap();

    for (t, (name, col)) in draws.state_columns().enumerate() {
        let se = (var(&col) * iact(&col).unwrap() / col.len() as f64).sqrt();
        let dev = (mean(&col) - kal.smoothed_mean(t, 0)).abs();
        assert!(
            dev <= 3.0 * se,
            "{name}: mean {} vs {} (se {se})",
            mean(&col),
            kal.smoothed_mean(t, 0)
        );
    }
}

#[test]
fn sv_return_variance_matches_lognormal_moment() {
    let p = SvParams {
        mu: -0.5,
        phi: 0.95,
        tau2: 0.05,
        rho: -0.3,
    };
    let (_, y) = SvModel::new(p).simulate(1_000_000, &mut Stream::new(33));
    let sample = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    let exact = (p.mu + 0.5 * p.tau2 / (1.0 - p.phi * p.phi)).exp();
    assert!(
        (sample / exact - 1.0).abs() < 0.05,
        "sample {sample} vs {exact}"
    );
}

#[test]
fn near_perfect_leverage_simulates_finite_paths() {
    let p = SvParams {
        mu: 0.0,
        phi: 0.98,
        tau2: 0.1,
        rho: -1.0 + 1e-9,
    };
    let (x, y) = SvModel::new(p).simulate(10_000, &mut Stream::new(34));
    assert!(x.iter().chain(&y).all(|v| v.is_finite()));
}

#[test]
fn factor_draws_do_not_depend_on_thread_count() {
    let eps = SvParams {
        mu: -1.0,
        phi: 0.95,
        tau2: 0.05,
        rho: -0.2,
    };
    let truth = FactorSvParams {
        beta: vec![vec![1.0], vec![0.6], vec![-0.4]],
        eps: vec![eps; 3],
        fac: vec![FactorVol {
            phi: 0.9,
            tau2: 0.1,
        }],
    };
    let sim = truth.simulate(60, &Stream::new(35)).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            run_factor_chain(&sim.y, FactorConfig::new(1, 8), 30, 10, 36)
                .unwrap()
                .draws
        })
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.all_names(), b.all_names());
    assert_eq!(
        a.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}
