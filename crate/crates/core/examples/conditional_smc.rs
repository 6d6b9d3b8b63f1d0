//! Conditional SMC around a fixed trajectory. The returned inputs replay the
//! whole particle system through the ordinary filter.

use pmcmc::backward::backward_simulate;
use pmcmc::ccsmc::run_ccsmc;
use pmcmc::models::sv::{SvModel, SvParams};
use pmcmc::rng::{RandomInputs, Stream};
use pmcmc::smc::{run_smc, SmcOptions};

fn main() -> pmcmc::error::Result<()> {
    let model = SvModel::new(SvParams {
        mu: -0.5,
        phi: 0.97,
        tau2: 0.04,
        rho: -0.3,
    });
    let root = Stream::new(11);
    let (_, y) = model.simulate(200, &mut root.substream("data"));
    let opts = SmcOptions::default();
    let n = 20;

    let first = run_smc(
        &model,
        &y,
        &RandomInputs::draw(&mut root.substream("inputs"), y.len(), n, 1)?,
        opts,
    )?;
    let reference = backward_simulate(&first.system, &model, &y, &mut root.substream("bs"))?;

    let run = run_ccsmc(
        &model,
        &y,
        n,
        &reference,
        &mut root.substream("ccsmc"),
        opts,
    )?;
    let kept = (0..y.len()).all(|t| run.system.x(t, reference.j[t]) == reference.x(t));
    let replay = run_smc(&model, &y, &run.inputs, opts)?;
    println!("reference path kept: {kept}");
    println!(
        "replay identical: {}",
        replay.system == run.system && replay.log_z_hat == run.log_z_hat
    );
    println!("log Z-hat {:.4}", run.log_z_hat);
    Ok(())
}
