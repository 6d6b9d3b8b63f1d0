//! Smoothed means from repeated backward simulation against the Kalman
//! smoother.

use pmcmc::backward::backward_simulate;
use pmcmc::kalman::kalman_oracle;
use pmcmc::models::linear_gaussian::LinearGaussian;
use pmcmc::rng::{RandomInputs, Stream};
use pmcmc::smc::{run_smc, SmcOptions};

fn main() -> pmcmc::error::Result<()> {
    let model = LinearGaussian::scalar(0.9, 0.4, 0.8);
    let root = Stream::new(5);
    let (_, y) = model.simulate(30, &mut root.substream("data"));
    let kal = kalman_oracle(&model.spec()?, &y)?;

    let mut filt = root.substream("filter");
    let mut bs = root.substream("backward");
    let reps = 400;
    let mut sum = vec![0.0; y.len()];
    for _ in 0..reps {
        let inputs = RandomInputs::draw(&mut filt, y.len(), 100, 1)?;
        let run = run_smc(&model, &y, &inputs, SmcOptions::default())?;
        let traj = backward_simulate(&run.system, &model, &y, &mut bs)?;
        for (s, x) in sum.iter_mut().zip(traj.path()) {
            *s += x;
        }
    }
    println!("  t   particle   Kalman");
    for t in (0..y.len()).step_by(5) {
        println!(
            "{t:3}  {:9.4}  {:7.4}",
            sum[t] / reps as f64,
            kal.smoothed_mean(t, 0)
        );
    }
    Ok(())
}
