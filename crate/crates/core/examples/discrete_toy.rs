//! Full sampler on an enumerable two-state model with a two-point grid per
//! parameter, against the exact posterior.

use pmcmc::models::toy::{DiscreteToy, ToyFamily};
use pmcmc::rng::Stream;
use pmcmc::sampler::{run_chain, ChainOptions};

fn main() -> pmcmc::error::Result<()> {
    let family = ToyFamily {
        stay: [0.6, 0.9],
        shift: [0.5, 1.5],
    };
    let (_, y) = DiscreteToy::new(0.9, 1.5).simulate(2, &mut Stream::new(2).substream("data"));
    let plan = pmcmc::sampler::BlockingPlan::from_names(
        &["stay".into(), "shift".into()],
        &[&["stay"]],
        &[&["shift"]],
    )?;
    let draws = run_chain(family, &y, plan, ChainOptions::new(2), 50_000, 1000, 3)?;

    let mut freq = [0.0; 4];
    for r in 0..draws.n_rows() {
        let row = draws.row(r);
        let (stay, shift) = (
            row[draws.column_index("stay").unwrap()],
            row[draws.column_index("shift").unwrap()],
        );
        freq[family.grid_index(&[stay, shift])] += 1.0 / draws.n_rows() as f64;
    }
    let exact = family.posterior(&y);
    for k in 0..4 {
        println!(
            "grid point {k}: sampled {:.4}  exact {:.4}",
            freq[k], exact[k]
        );
    }
    Ok(())
}
