//! Constrained conditional SMC: rebuild a particle system and its random
//! inputs around a fixed reference trajectory.
//!
//! The reference particle keeps its slot `j_t` and its ancestor `j_{t-1}` at
//! every step. Its state variate comes from inverting the propagation map and
//! its resampling uniform is drawn inside the cumulative-weight interval of
//! the parent's sorted position, so [`run_smc`](crate::smc::run_smc) on the
//! returned inputs reproduces the system exactly.

use crate::error::{Error, Result};
use crate::rng::{Deviate, RandomInputs, Stream};
use crate::smc::{check_state, check_weight, cumulative, search, ResampleScratch, SmcOptions};
use crate::ssm::{ParticleSystem, StateSpaceModel, Trajectory};

#[derive(Debug, Clone, PartialEq)]
pub struct CcsmcRun {
    pub system: ParticleSystem,
    pub inputs: RandomInputs,
    pub log_z_hat: f64,
}

/// Fills `v_a` and the sorted-space ancestors `a_sorted`. Free slots map
/// fresh uniforms through the usual search; slot `fixed_child` gets a
/// uniform in `(F(s-1), F(s)]` with `s` the sorted position of `fixed_parent`.
fn constrained_into(
    stream: &mut Stream,
    sorted_w: &[f64],
    cdf: &[f64],
    zeta_inv: &[usize],
    fixed_child: usize,
    fixed_parent: usize,
    v_a: &mut [f64],
    a_sorted: &mut [usize],
    t: usize,
) -> Result<()> {
    stream.fill_uniform(v_a);
    for (a, &v) in a_sorted.iter_mut().zip(v_a.iter()) {
        *a = search(cdf, v);
    }
    let s = zeta_inv[fixed_parent];
    let lo = if s == 0 { 0.0 } else { cdf[s - 1] };
    let hi = cdf[s];
    if !(sorted_w[s] > 0.0) || !(hi > lo) {
        return Err(Error::DegenerateConstraint { t });
    }
    let mut v = lo + v_a[fixed_child] * (hi - lo);
    if v <= lo {
        v = lo.next_up();
    }
    if v > hi {
        v = hi;
    }
    if v >= 1.0 {
        v = 1.0f64.next_down();
    }
    if !(v > lo && v <= hi) || search(cdf, v) != s {
        return Err(Error::DegenerateConstraint { t });
    }
    v_a[fixed_child] = v;
    a_sorted[fixed_child] = s;
    Ok(())
}

/// Constrained multinomial resampling in sorted space. Returns the uniforms
/// and the sorted positions `A~`; `A~[fixed_child] == zeta_inv[fixed_parent]`.
pub fn constrained_multinomial(
    stream: &mut Stream,
    sorted_weights: &[f64],
    zeta_inv: &[usize],
    fixed_child: usize,
    fixed_parent: usize,
) -> Result<(Vec<f64>, Vec<usize>)> {
    let n = sorted_weights.len();
    let mut cdf = Vec::with_capacity(n);
    cumulative(sorted_weights, &mut cdf);
    let mut v_a = vec![0.0; n];
    let mut a = vec![0; n];
    constrained_into(
        stream,
        sorted_weights,
        &cdf,
        zeta_inv,
        fixed_child,
        fixed_parent,
        &mut v_a,
        &mut a,
        0,
    )?;
    Ok((v_a, a))
}

fn pinned<M: StateSpaceModel + ?Sized>(
    model: &M,
    t: usize,
    x: &[f64],
    prev: Option<&[f64]>,
    y: &[f64],
    stream: &mut Stream,
    out: &mut [Deviate],
) -> Result<()> {
    model
        .invert_propagate(t, x, prev, y, stream, out)
        .map_err(|e| match e {
            Error::Singular { .. } => e,
            other => Error::Singular {
                t,
                msg: other.to_string(),
            },
        })
}

/// Runs the conditional filter around `reference`, drawing every free
/// variate from `stream`.
pub fn run_ccsmc<M: StateSpaceModel + ?Sized>(
    model: &M,
    y: &[f64],
    n: usize,
    reference: &Trajectory,
    stream: &mut Stream,
    opts: SmcOptions,
) -> Result<CcsmcRun> {
    let t_len = y.len();
    let d = model.state_dim();
    if n < 2 {
        return Err(Error::Precondition("conditional SMC needs N >= 2".into()));
    }
    if reference.t_len() != t_len || reference.dim() != d || reference.j.iter().any(|&j| j >= n) {
        return Err(Error::Precondition(
            "reference trajectory does not match (T, N, d)".into(),
        ));
    }
    let j = &reference.j;
    let mut inputs = RandomInputs::zeros(t_len, n, d);
    let mut sys = ParticleSystem::new(t_len, n, d);
    let mut normals = vec![0.0; d];
    let mut lw = vec![0.0; n];

    for i in 0..n {
        stream.fill_normal(&mut normals);
        for (v, &z) in inputs.v_x_mut(0, i).iter_mut().zip(&normals) {
            *v = Deviate::new(z);
        }
    }
    pinned(
        model,
        0,
        reference.x(0),
        None,
        y,
        stream,
        inputs.v_x_mut(0, j[0]),
    )?;
    for i in 0..n {
        let x = sys.x_mut(0, i);
        model.propagate(0, inputs.v_x(0, i), None, y, x);
        check_state(x, 0)?;
        lw[i] = model.log_weight(0, x, None, y);
        check_weight(lw[i], 0)?;
    }
    if sys.x(0, j[0]) != reference.x(0) {
        return Err(Error::Singular {
            t: 0,
            msg: "inversion does not reproduce the reference state".into(),
        });
    }
    sys.set_weights(0, &lw)?;

    let mut scratch = ResampleScratch::default();
    let mut a_sorted = vec![0usize; n];
    let mut anc = vec![0usize; n];
    for t in 1..t_len {
        scratch.prepare(&sys, t, opts.sort);
        constrained_into(
            stream,
            &scratch.sorted_w,
            &scratch.cdf,
            &scratch.zeta_inv,
            j[t],
            j[t - 1],
            inputs.v_a_mut(t),
            &mut a_sorted,
            t,
        )?;
        for (a, &s) in anc.iter_mut().zip(&a_sorted) {
            *a = scratch.zeta[s];
        }
        debug_assert_eq!(anc[j[t]], j[t - 1]);
        sys.ancestors_mut(t).copy_from_slice(&anc);

        for i in 0..n {
            stream.fill_normal(&mut normals);
            for (v, &z) in inputs.v_x_mut(t, i).iter_mut().zip(&normals) {
                *v = Deviate::new(z);
            }
        }
        pinned(
            model,
            t,
            reference.x(t),
            Some(reference.x(t - 1)),
            y,
            stream,
            inputs.v_x_mut(t, j[t]),
        )?;

        let (prev_row, cur_row) = sys.step_rows(t);
        for i in 0..n {
            let prev = &prev_row[anc[i] * d..(anc[i] + 1) * d];
            let x = &mut cur_row[i * d..(i + 1) * d];
            model.propagate(t, inputs.v_x(t, i), Some(prev), y, x);
            check_state(x, t)?;
            lw[i] = model.log_weight(t, x, Some(prev), y);
            check_weight(lw[i], t)?;
        }
        if sys.x(t, j[t]) != reference.x(t) {
            return Err(Error::Singular {
                t,
                msg: "inversion does not reproduce the reference state".into(),
            });
        }
        sys.set_weights(t, &lw)?;
    }
    let log_z_hat = sys.log_likelihood();
    Ok(CcsmcRun {
        system: sys,
        inputs,
        log_z_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backward::backward_simulate;
    use crate::models::sv::{SvModel, SvParams};
    use crate::models::toy::DiscreteToy;
    use crate::smc::{multinomial_resample, run_smc};
    use proptest::prelude::*;

    fn sv_setup(t_len: usize, seed: u64) -> (SvModel, Vec<f64>) {
        let p = SvParams {
            mu: -0.5,
            phi: 0.97,
            tau2: 0.04,
            rho: -0.3,
        };
        let m = SvModel::new(p);
        let (_, y) = m.simulate(t_len, &mut Stream::new(seed));
        (m, y)
    }

    #[test]
    fn quartile_interval() {
        let mut s = Stream::new(1);
        let zeta_inv = [1, 0, 2, 3];
        for _ in 0..1000 {
            let (v, a) = constrained_multinomial(&mut s, &[0.25; 4], &zeta_inv, 3, 2).unwrap();
            assert!(v[3] > 0.5 && v[3] <= 0.75);
            assert_eq!(a[3], 2);
        }
    }

    #[test]
    fn zero_weight_parent_rejected() {
        let mut s = Stream::new(1);
        let r = constrained_multinomial(&mut s, &[0.5, 0.0, 0.5], &[0, 1, 2], 0, 1);
        assert!(matches!(r, Err(Error::DegenerateConstraint { .. })));
    }

    #[test]
    fn fixed_path_and_replay_on_sv() {
        let (m, y) = sv_setup(120, 3);
        let mut s = Stream::new(4);
        let inp = RandomInputs::draw(&mut s, 120, 12, 1).unwrap();
        let run = run_smc(&m, &y, &inp, SmcOptions::default()).unwrap();
        let mut traj = backward_simulate(&run.system, &m, &y, &mut s).unwrap();
        for _ in 0..30 {
            let c = run_ccsmc(&m, &y, 12, &traj, &mut s, SmcOptions::default()).unwrap();
            for t in 0..120 {
                assert_eq!(c.system.x(t, traj.j[t]), traj.x(t));
                if t > 0 {
                    assert_eq!(c.system.ancestors(t)[traj.j[t]], traj.j[t - 1]);
                }
            }
            let replay = run_smc(&m, &y, &c.inputs, SmcOptions::default()).unwrap();
            assert_eq!(replay.system, c.system);
            assert_eq!(replay.log_z_hat.to_bits(), c.log_z_hat.to_bits());
            traj = backward_simulate(&c.system, &m, &y, &mut s).unwrap();
        }
    }

    #[test]
    fn reference_survives_a_parameter_change() {
        let (m, y) = sv_setup(80, 5);
        let mut s = Stream::new(6);
        let inp = RandomInputs::draw(&mut s, 80, 10, 1).unwrap();
        let run = run_smc(&m, &y, &inp, SmcOptions::default()).unwrap();
        let traj = backward_simulate(&run.system, &m, &y, &mut s).unwrap();
        let other = SvModel::new(SvParams {
            mu: 0.3,
            phi: 0.9,
            tau2: 0.11,
            rho: 0.4,
        });
        let c = run_ccsmc(&other, &y, 10, &traj, &mut s, SmcOptions::default()).unwrap();
        assert!(traj.is_coherent_with(&c.system));
        let replay = run_smc(&other, &y, &c.inputs, SmcOptions::default()).unwrap();
        assert_eq!(replay.system, c.system);
    }

    #[test]
    fn free_slots_unbiased() {
        let mut s = Stream::new(9);
        let w = [0.1, 0.35, 0.05, 0.3, 0.2];
        let zeta_inv = [4, 2, 0, 1, 3];
        let reps = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..reps {
            let (_, a) = constrained_multinomial(&mut s, &w, &zeta_inv, 2, 0).unwrap();
            assert_eq!(a[2], 4);
            for (i, &ai) in a.iter().enumerate() {
                if i != 2 {
                    counts[ai] += 1;
                }
            }
        }
        let draws = (reps * 4) as f64;
        for j in 0..5 {
            let se = (draws * w[j] * (1.0 - w[j])).sqrt();
            assert!(
                (counts[j] as f64 - draws * w[j]).abs() < 4.0 * se,
                "slot {j}"
            );
        }
    }

    #[test]
    fn toy_free_particle_matches_enumeration() {
        // N=2, T=2: the free particle's path given the reference follows the
        // conditional of the augmented target, enumerated below.
        let toy = DiscreteToy::new(0.8, 1.0);
        let y = [0.3, 1.2];
        let ref_path = Trajectory::new(vec![1, 0], 1, vec![1.0, 0.0]);
        let mut s = Stream::new(10);
        let reps = 100_000;
        let mut counts = [[0usize; 2]; 2];
        for _ in 0..reps {
            let c = run_ccsmc(&toy, &y, 2, &ref_path, &mut s, SmcOptions::default()).unwrap();
            let x0 = c.system.x(0, 0)[0] as usize;
            let x1 = c.system.x(1, 1)[0] as usize;
            counts[x0][x1] += 1;
        }
        // P(x_0^0 = a, x_1^1 = b) = f_1(a) sum_k wbar_0^k f(b | x_0^k), with x_0^1 = 1 the reference.
        let p = |lp: f64| lp.exp();
        let mut probs = [[0.0; 2]; 2];
        for a in 0..2 {
            let ga = p(toy.log_observation(0, &[a as f64], &y));
            let g1 = p(toy.log_observation(0, &[1.0], &y));
            let w = [ga / (ga + g1), g1 / (ga + g1)];
            for b in 0..2 {
                let xb = [b as f64];
                probs[a][b] = p(toy.log_initial(&[a as f64]))
                    * (w[0] * p(toy.log_transition(1, &xb, &[a as f64], &y))
                        + w[1] * p(toy.log_transition(1, &xb, &[1.0], &y)));
            }
        }
        for a in 0..2 {
            for b in 0..2 {
                let p = probs[a][b];
                let se = (reps as f64 * p * (1.0 - p)).sqrt().max(1.0);
                assert!(
                    (counts[a][b] as f64 - reps as f64 * p).abs() < 4.0 * se,
                    "({a},{b}) {} vs {}",
                    counts[a][b],
                    reps as f64 * p
                );
            }
        }
    }

    proptest! {
        #[test]
        fn unsorted_ancestor_is_fixed_parent(
            w in proptest::collection::vec(0.001f64..1.0, 2..12),
            seed in 0u64..10_000,
            child in 0usize..12,
            parent in 0usize..12,
        ) {
            let n = w.len();
            let (child, parent) = (child % n, parent % n);
            let total: f64 = w.iter().sum();
            let w: Vec<f64> = w.iter().map(|x| x / total).collect();
            let mut s = Stream::new(seed);
            let mut zeta: Vec<usize> = (0..n).collect();
            zeta.rotate_left(seed as usize % n);
            let mut zeta_inv = vec![0; n];
            for (r, &i) in zeta.iter().enumerate() { zeta_inv[i] = r; }
            let sorted: Vec<f64> = zeta.iter().map(|&i| w[i]).collect();
            let (v, a) = constrained_multinomial(&mut s, &sorted, &zeta_inv, child, parent).unwrap();
            prop_assert_eq!(zeta[a[child]], parent);
            prop_assert!(v.iter().all(|&u| u > 0.0 && u < 1.0));
            prop_assert_eq!(multinomial_resample(&v, &sorted), a);
        }
    }
}
