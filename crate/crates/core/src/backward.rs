//! Backward simulation of a trajectory from a completed particle system.

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::smc::{cumulative, search};
use crate::ssm::{normalize_log_weights, ParticleSystem, StateSpaceModel, Trajectory};

/// Draws `J_T` with probability `wbar_T`, then `J_t = l` with probability
/// proportional to `w_t^l f(x_{t+1}^{J_{t+1}} | x_t^l)`. One uniform per step.
pub fn backward_simulate<M: StateSpaceModel + ?Sized>(
    system: &ParticleSystem,
    model: &M,
    y: &[f64],
    stream: &mut Stream,
) -> Result<Trajectory> {
    let t_len = system.t_len();
    let n = system.n();
    let mut j = vec![0usize; t_len];
    let mut cdf = Vec::with_capacity(n);
    cumulative(system.w_bar(t_len - 1), &mut cdf);
    j[t_len - 1] = search(&cdf, stream.next_uniform());

    let mut lb = vec![0.0; n];
    let mut b = vec![0.0; n];
    for t in (0..t_len - 1).rev() {
        let next = system.x(t + 1, j[t + 1]);
        let lw = system.log_w(t);
        for l in 0..n {
            lb[l] = if lw[l] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                lw[l] + model.log_transition(t + 1, next, system.x(t, l), y)
            };
        }
        if lb.iter().any(|v| v.is_nan()) || normalize_log_weights(&lb, &mut b).is_none() {
            return Err(Error::DegenerateSmoother { t });
        }
        cumulative(&b, &mut cdf);
        j[t] = search(&cdf, stream.next_uniform());
    }
    Ok(Trajectory::from_system(system, j))
}
