//! The IACT estimator on AR(1) chains, where the answer is (1 + a) / (1 - a).

use pmcmc::diagnostics::iact;
use pmcmc::rng::Stream;

fn main() -> pmcmc::error::Result<()> {
    let mut s = Stream::new(8);
    for a in [0.0f64, 0.5, 0.9, 0.99] {
        let mut x = vec![0.0; 100_000];
        for t in 1..x.len() {
            x[t] = a * x[t - 1] + (1.0 - a * a).sqrt() * s.next_normal();
        }
        println!(
            "a = {a:4}: IACT {:8.2}  exact {:8.2}",
            iact(&x)?,
            (1.0 + a) / (1.0 - a)
        );
    }
    Ok(())
}
