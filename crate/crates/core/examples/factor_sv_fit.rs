//! A small one-factor SV model: simulate, fit with deep interweaving and
//! report the identified loadings.

use pmcmc::factor::{run_factor_chain, FactorConfig, FactorSvParams, FactorVol};
use pmcmc::models::sv::SvParams;
use pmcmc::rng::Stream;

fn main() -> pmcmc::error::Result<()> {
    let eps = SvParams {
        mu: -1.0,
        phi: 0.95,
        tau2: 0.05,
        rho: -0.2,
    };
    let truth = FactorSvParams {
        beta: vec![vec![1.0], vec![0.7], vec![0.5], vec![-0.4]],
        eps: vec![eps; 4],
        fac: vec![FactorVol {
            phi: 0.95,
            tau2: 0.05,
        }],
    };
    let sim = truth.simulate(300, &Stream::new(6))?;
    let out = run_factor_chain(&sim.y, FactorConfig::new(1, 20), 1500, 300, 7)?;

    println!("{:10} {:>7} {:>7} {:>7}", "loading", "truth", "mean", "sd");
    for (s, row) in truth.beta.iter().enumerate() {
        let name = format!("beta[{},1]", s + 1);
        let (m, sd) = out
            .draws
            .mean_sd(out.draws.column_index(&name).expect("loading column"));
        println!("{name:10} {:7.3} {m:7.3} {sd:7.3}", row[0]);
    }
    for (block, rate) in &out.acceptance {
        println!("acceptance {block}: {rate:.3}");
    }
    Ok(())
}
