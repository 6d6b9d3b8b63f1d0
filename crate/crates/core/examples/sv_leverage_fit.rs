//! Simulates an SV-with-leverage series and fits it with PMMH on
//! `(tau2, rho)` and particle Gibbs on `phi` and `mu`.

use pmcmc::models::sv::{SvFamily, SvModel, SvParams};
use pmcmc::rng::Stream;
use pmcmc::sampler::{run_chain_timed, ChainOptions};

fn main() -> pmcmc::error::Result<()> {
    let truth = SvParams {
        mu: -0.5,
        phi: 0.97,
        tau2: 0.04,
        rho: -0.3,
    };
    let (_, y) = SvModel::new(truth).simulate(1000, &mut Stream::new(1).substream("data"));
    let family = SvFamily::default();
    let out = run_chain_timed(
        family,
        &y,
        family.default_plan(),
        ChainOptions::new(20),
        2000,
        500,
        2,
    )?;

    println!("{:6} {:>8} {:>8} {:>8}", "param", "truth", "mean", "sd");
    for (name, t) in [
        ("mu", truth.mu),
        ("phi", truth.phi),
        ("tau2", truth.tau2),
        ("rho", truth.rho),
    ] {
        let c = out.draws.column_index(name).expect("parameter column");
        let (m, sd) = out.draws.mean_sd(c);
        println!("{name:6} {t:8.4} {m:8.4} {sd:8.4}");
    }
    for (block, rate) in &out.acceptance {
        println!("acceptance {block}: {rate:.3}");
    }
    println!("{:.4} s per sweep", out.seconds_per_sweep);
    Ok(())
}
