//! Bootstrap filter on a linear-Gaussian model against the exact Kalman
//! log-likelihood.

use pmcmc::kalman::kalman_oracle;
use pmcmc::models::linear_gaussian::LinearGaussian;
use pmcmc::rng::{RandomInputs, Stream};
use pmcmc::smc::{run_smc, SmcOptions};

fn main() -> pmcmc::error::Result<()> {
    let model = LinearGaussian::scalar(0.8, 0.5, 1.0);
    let root = Stream::new(7);
    let (_, y) = model.simulate(100, &mut root.substream("data"));
    let exact = kalman_oracle(&model.spec()?, &y)?.log_likelihood;
    println!("Kalman log-likelihood {exact:.4}");
    for n in [10, 100, 1000] {
        let mut s = root.substream(&format!("inputs-{n}"));
        let mut est = Vec::new();
        for _ in 0..20 {
            let inputs = RandomInputs::draw(&mut s, y.len(), n, 1)?;
            est.push(run_smc(&model, &y, &inputs, SmcOptions::default())?.log_z_hat);
        }
        let m = est.iter().sum::<f64>() / est.len() as f64;
        let sd = (est.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (est.len() - 1) as f64).sqrt();
        println!("N={n:5}: mean log Z-hat {m:.4}, sd {sd:.4}");
    }
    Ok(())
}
