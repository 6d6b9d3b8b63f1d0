//! Compares two blocking strategies on the same data by integrated
//! autocorrelation time and time-normalized variance.

use pmcmc::diagnostics::{render_table, summarize};
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
    let (_, y) = SvModel::new(truth).simulate(500, &mut Stream::new(4).substream("data"));
    let family = SvFamily::default();
    let opts = ChainOptions::new(20);

    let pg = run_chain_timed(family, &y, family.pgbs_plan(), opts.clone(), 3000, 500, 5)?;
    let base = summarize(&pg.draws, pg.seconds_per_sweep, "PGBS", None)?;
    let eff = run_chain_timed(family, &y, family.default_plan(), opts, 3000, 500, 5)?;
    let rep = summarize(&eff.draws, eff.seconds_per_sweep, "PMMH+PG", Some(&base))?;
    print!("{}", render_table(&[base, rep]));
    Ok(())
}
