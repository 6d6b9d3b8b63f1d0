//! Sequential Monte Carlo driven entirely by stored [`RandomInputs`].
//!
//! Every step sorts the previous cloud (Hilbert order, or plain order in one
//! dimension), resamples multinomially in sorted space and maps the chosen
//! sorted positions back to particle indices. Resampling happens at every step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{sort_permutation, DEFAULT_ORDER};
use crate::rng::RandomInputs;
use crate::ssm::{ParticleSystem, StateSpaceModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SortMode {
    /// Hilbert order with the given bits per axis (plain sort when d = 1).
    Hilbert { order: u32 },
    /// Resample in particle-index order.
    Unsorted,
}

impl Default for SortMode {
    fn default() -> Self {
        SortMode::Hilbert {
            order: DEFAULT_ORDER,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmcOptions {
    pub sort: SortMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmcRun {
    pub system: ParticleSystem,
    pub log_z_hat: f64,
}

/// Cumulative sums of `w` with every entry from the last positive weight on
/// set to exactly 1.
pub(crate) fn cumulative(w: &[f64], cdf: &mut Vec<f64>) {
    cdf.clear();
    let mut s = 0.0;
    for &wi in w {
        s += wi;
        cdf.push(s);
    }
    if let Some(last) = w.iter().rposition(|&wi| wi > 0.0) {
        for c in &mut cdf[last..] {
            *c = 1.0;
        }
    }
}

/// `min { j : cdf[j] >= v }`.
#[inline]
pub(crate) fn search(cdf: &[f64], v: f64) -> usize {
    cdf.partition_point(|&c| c < v).min(cdf.len() - 1)
}

/// Sorted-space multinomial resampling: `A~^i = min { j : F(j) >= v^i }`.
pub fn multinomial_resample(v_a: &[f64], sorted_weights: &[f64]) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(sorted_weights.len());
    cumulative(sorted_weights, &mut cdf);
    v_a.iter().map(|&v| search(&cdf, v)).collect()
}

/// Scratch space for the sort/resample stage shared with the conditional filter.
#[derive(Default)]
pub(crate) struct ResampleScratch {
    pub zeta: Vec<usize>,
    pub zeta_inv: Vec<usize>,
    pub sorted_w: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl ResampleScratch {
    /// Sorts the cloud at `t - 1` and builds the sorted cumulative weights.
    pub fn prepare(&mut self, sys: &ParticleSystem, t: usize, sort: SortMode) {
        let n = sys.n();
        match sort {
            SortMode::Hilbert { order } => {
                sort_permutation(sys.x_row(t - 1), sys.dim(), order, &mut self.zeta)
            }
            SortMode::Unsorted => {
                self.zeta.clear();
                self.zeta.extend(0..n);
            }
        }
        self.zeta_inv.resize(n, 0);
        for (r, &i) in self.zeta.iter().enumerate() {
            self.zeta_inv[i] = r;
        }
        let w = sys.w_bar(t - 1);
        self.sorted_w.clear();
        self.sorted_w.extend(self.zeta.iter().map(|&i| w[i]));
        cumulative(&self.sorted_w, &mut self.cdf);
    }
}

pub(crate) fn check_state(x: &[f64], t: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::ModelEvaluation { t })
    }
}

pub(crate) fn check_weight(lw: f64, t: usize) -> Result<()> {
    if lw.is_nan() || lw == f64::INFINITY {
        Err(Error::WeightEvaluation { t })
    } else {
        Ok(())
    }
}

/// Runs the filter on `y` with the given inputs. Identical arguments give
/// bit-identical output.
pub fn run_smc<M: StateSpaceModel + ?Sized>(
    model: &M,
    y: &[f64],
    inputs: &RandomInputs,
    opts: SmcOptions,
) -> Result<SmcRun> {
    let t_len = y.len();
    let n = inputs.n();
    let d = model.state_dim();
    if inputs.t_len() != t_len || inputs.dim() != d || n == 0 {
        return Err(Error::Precondition(format!(
            "inputs are {}x{}x{} but the data have T={t_len} and the model d={d}",
            inputs.t_len(),
            n,
            inputs.dim()
        )));
    }
    let mut sys = ParticleSystem::new(t_len, n, d);
    let mut lw = vec![0.0; n];
    for i in 0..n {
        let x = sys.x_mut(0, i);
        model.propagate(0, inputs.v_x(0, i), None, y, x);
        check_state(x, 0)?;
        lw[i] = model.log_weight(0, x, None, y);
        check_weight(lw[i], 0)?;
    }
    sys.set_weights(0, &lw)?;

    let mut scratch = ResampleScratch::default();
    let mut anc = vec![0usize; n];
    for t in 1..t_len {
        scratch.prepare(&sys, t, opts.sort);
        for (a, &v) in anc.iter_mut().zip(inputs.v_a(t)) {
            *a = scratch.zeta[search(&scratch.cdf, v)];
        }
        sys.ancestors_mut(t).copy_from_slice(&anc);
        let (prev_row, cur_row) = sys.step_rows(t);
        for i in 0..n {
            let prev = &prev_row[anc[i] * d..(anc[i] + 1) * d];
            let x = &mut cur_row[i * d..(i + 1) * d];
            model.propagate(t, inputs.v_x(t, i), Some(prev), y, x);
            check_state(x, t)?;
            lw[i] = model.log_weight(t, x, Some(prev), y);
            check_weight(lw[i], t)?;
        }
        sys.set_weights(t, &lw)?;
    }
    let log_z_hat = sys.log_likelihood();
    Ok(SmcRun {
        system: sys,
        log_z_hat,
    })
}

pub fn log_likelihood_estimate(system: &ParticleSystem) -> f64 {
    system.log_likelihood()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kalman::{kalman_oracle, LinearGaussianSpec};
    use crate::models::linear_gaussian::LinearGaussian;
    use crate::models::sv::{SvModel, SvParams};
    use crate::rng::Stream;
    use crate::ssm::log_sum_exp;
    use proptest::prelude::*;

    fn lg_data(t_len: usize, seed: u64) -> (LinearGaussian, Vec<f64>) {
        let m = LinearGaussian::scalar(0.8, 0.5, 1.0);
        let y = m.simulate(t_len, &mut Stream::new(seed)).1;
        (m, y)
    }

    #[test]
    fn quartile_cut_points() {
        assert_eq!(
            multinomial_resample(&[0.1, 0.3, 0.6, 0.9], &[0.25; 4]),
            vec![0, 1, 2, 3]
        );
        assert_eq!(
            multinomial_resample(&[0.01, 0.5, 0.999], &[1.0, 0.0, 0.0]),
            vec![0, 0, 0]
        );
    }

    #[test]
    fn zero_weight_tail_never_selected() {
        let w = [0.3, 0.7 - 1e-17, 0.0];
        let a = multinomial_resample(&[0.999_999_999_999_999_9], &w);
        assert_eq!(a, vec![1]);
    }

    #[test]
    fn single_particle_bootstrap_is_sum_of_log_g() {
        let (m, y) = lg_data(30, 1);
        let inp = RandomInputs::draw(&mut Stream::new(2), 30, 1, 1).unwrap();
        let run = run_smc(&m, &y, &inp, SmcOptions::default()).unwrap();
        let direct: f64 = (0..30)
            .map(|t| m.log_observation(t, run.system.x(t, 0), &y))
            .sum();
        assert!((run.log_z_hat - direct).abs() < 1e-12);
    }

    #[test]
    fn deterministic_in_inputs() {
        let (m, y) = lg_data(40, 3);
        let inp = RandomInputs::draw(&mut Stream::new(4), 40, 16, 1).unwrap();
        let a = run_smc(&m, &y, &inp, SmcOptions::default()).unwrap();
        let b = run_smc(&m, &y, &inp, SmcOptions::default()).unwrap();
        assert_eq!(a.log_z_hat.to_bits(), b.log_z_hat.to_bits());
        assert_eq!(a.system, b.system);
    }

    #[test]
    fn system_invariants_hold() {
        let (m, y) = lg_data(25, 5);
        let inp = RandomInputs::draw(&mut Stream::new(6), 25, 10, 1).unwrap();
        let run = run_smc(&m, &y, &inp, SmcOptions::default()).unwrap();
        let sys = &run.system;
        for t in 0..25 {
            assert!((sys.w_bar(t).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let ls = log_sum_exp(sys.log_w(t));
            assert!((ls - sys.log_sum_w()[t]).abs() < 1e-12);
            if t > 0 {
                assert!(sys.ancestors(t).iter().all(|&a| a < 10));
            }
        }
        assert_eq!(log_likelihood_estimate(sys), run.log_z_hat);
    }

    #[test]
    fn constant_weights_give_t_log_c() {
        struct Flat;
        impl StateSpaceModel for Flat {
            fn propagate(
                &self,
                _t: usize,
                v: &[crate::rng::Deviate],
                _p: Option<&[f64]>,
                _y: &[f64],
                out: &mut [f64],
            ) {
                out[0] = v[0].value();
            }
            fn invert_propagate(
                &self,
                _t: usize,
                x: &[f64],
                _p: Option<&[f64]>,
                _y: &[f64],
                _s: &mut Stream,
                out: &mut [crate::rng::Deviate],
            ) -> Result<()> {
                out[0] = x[0].into();
                Ok(())
            }
            fn log_observation(&self, _t: usize, _x: &[f64], _y: &[f64]) -> f64 {
                0.3f64.ln()
            }
            fn log_initial(&self, _x: &[f64]) -> f64 {
                0.0
            }
            fn log_transition(&self, _t: usize, _x: &[f64], _p: &[f64], _y: &[f64]) -> f64 {
                0.0
            }
        }
        let inp = RandomInputs::draw(&mut Stream::new(1), 7, 5, 1).unwrap();
        let run = run_smc(&Flat, &[0.0; 7], &inp, SmcOptions::default()).unwrap();
        assert!((run.log_z_hat - 7.0 * 0.3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn degeneracy_aborts_with_time_index() {
        // exp(x) = 1e308 overflow is not needed; an impossible observation suffices.
        let p = SvParams {
            mu: 0.0,
            phi: 0.9,
            tau2: 0.01,
            rho: 0.0,
        };
        let m = SvModel::new(p);
        let mut y = vec![0.1; 10];
        y[6] = 1e300;
        let inp = RandomInputs::draw(&mut Stream::new(1), 10, 4, 1).unwrap();
        match run_smc(&m, &y, &inp, SmcOptions::default()) {
            Err(Error::WeightDegeneracy { t }) => assert_eq!(t, 6),
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn likelihood_ratio_mean_is_one() {
        let (m, y) = lg_data(50, 10);
        let spec = LinearGaussianSpec {
            phi: 0.8,
            sigma: 0.5,
            obs_sd: 1.0,
            init_mean: 0.0,
            init_var: 0.25 / 0.36,
        };
        let exact = kalman_oracle(&spec, &y).unwrap().log_likelihood;
        let root = Stream::new(11);
        let reps = 400;
        let r: Vec<f64> = (0..reps)
            .map(|k| {
                let inp = RandomInputs::draw(&mut root.substream(&format!("rep-{k}")), 50, 50, 1)
                    .unwrap();
                (run_smc(&m, &y, &inp, SmcOptions::default())
                    .unwrap()
                    .log_z_hat
                    - exact)
                    .exp()
            })
            .collect();
        let mean = r.iter().sum::<f64>() / reps as f64;
        let sd = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        assert!(
            (mean - 1.0).abs() < 3.0 * sd / (reps as f64).sqrt(),
            "mean {mean} sd {sd}"
        );
    }

    #[test]
    fn compensated_two_pass_matches() {
        let mut s = Stream::new(8);
        for _ in 0..20 {
            let (m, y) = lg_data(12, s.next_u64());
            let inp = RandomInputs::draw(&mut s, 12, 9, 1).unwrap();
            let run = run_smc(&m, &y, &inp, SmcOptions::default()).unwrap();
            // Kahan sums in both passes: within each step over particles, then over steps.
            let kahan = |xs: &mut dyn Iterator<Item = f64>| {
                let (mut acc, mut comp) = (0.0f64, 0.0f64);
                for x in xs {
                    let term = x - comp;
                    let next = acc + term;
                    comp = (next - acc) - term;
                    acc = next;
                }
                acc
            };
            let per_step: Vec<f64> = (0..12)
                .map(|t| {
                    let lw = run.system.log_w(t);
                    let shift = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mean = kahan(&mut lw.iter().map(|&l| (l - shift).exp())) / 9.0;
                    shift + mean.ln()
                })
                .collect();
            let direct = kahan(&mut per_step.into_iter());
            assert!((direct - run.log_z_hat).abs() < 1e-10 * (1.0 + direct.abs()));
        }
    }

    proptest! {
        #[test]
        fn offspring_counts_are_valid(w in proptest::collection::vec(0.0f64..1.0, 1..20), seed in 0u64..1000) {
            let total: f64 = w.iter().sum();
            prop_assume!(total > 0.0);
            let w: Vec<f64> = w.iter().map(|x| x / total).collect();
            let v = Stream::new(seed).uniform_block(w.len()).unwrap();
            let a = multinomial_resample(&v, &w);
            for &ai in &a {
                prop_assert!(ai < w.len());
                prop_assert!(w[ai] > 0.0);
            }
        }
    }
}
