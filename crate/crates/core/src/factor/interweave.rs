//! Deep interweaving of the loading scales.
//!
//! For each factor `k`, the column `beta_{.k}` is rescaled by its diagonal
//! entry, which moves the scale into the level `mu = log beta_kk^2` of the
//! factor log-volatility. `mu` is redrawn by an independence MH step and the
//! scale is moved back, leaving `beta_{.k} f_{k.}` unchanged.

use nalgebra::DMatrix;

use crate::rng::Stream;
use crate::ssm::log_normal_pdf;

/// Variance multiplier of the auxiliary prior on `mu`.
pub const B0: f64 = 1e5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterweaveStep {
    pub k: usize,
    /// `beta_kk` was zero, so nothing was done.
    pub skipped: bool,
    pub mu_old: f64,
    pub mu_prop: f64,
    pub log_ratio: f64,
    pub accepted: bool,
    pub beta_kk_old: f64,
    pub beta_kk_new: f64,
}

/// Mean and variance of the Gaussian proposal for `mu` given the shifted
/// log-volatilities `lambda* = lambda + mu`.
pub fn mu_proposal(lambda_star: &[f64], phi: f64, tau2: f64, b0: f64) -> (f64, f64) {
    let t_len = lambda_star.len();
    let denom = (t_len - 1) as f64 + 1.0 / b0;
    let inner: f64 = lambda_star[1..t_len - 1].iter().sum();
    let a = (inner + (lambda_star[t_len - 1] - phi * lambda_star[0]) / (1.0 - phi)) / denom;
    let b = tau2 / ((1.0 - phi) * (1.0 - phi)) / denom;
    (a, b)
}

/// Terms of `log p(mu | beta*, lambda*)` that the proposal does not cancel,
/// minus the auxiliary prior.
pub fn log_residual_target(
    mu: f64,
    lambda_star_1: f64,
    beta_star: &[f64],
    phi: f64,
    tau2: f64,
    b0: f64,
) -> f64 {
    let prior = 0.5 * mu - 0.5 * mu.exp();
    let initial = log_normal_pdf(lambda_star_1, mu, tau2 / (1.0 - phi * phi));
    let loadings: f64 = beta_star
        .iter()
        .map(|&b| log_normal_pdf(b, 0.0, (-mu).exp()))
        .sum();
    let aux = log_normal_pdf(mu, 0.0, b0 * tau2 / ((1.0 - phi) * (1.0 - phi)));
    prior + initial + loadings - aux
}

/// One interweaving step for column `k`; `f_k` and `lambda_k` are that
/// factor's draws and log-volatilities.
#[allow(clippy::too_many_arguments)]
pub fn interweave_column(
    beta: &mut DMatrix<f64>,
    f_k: &mut [f64],
    lambda_k: &mut [f64],
    k: usize,
    phi: f64,
    tau2: f64,
    b0: f64,
    stream: &mut Stream,
) -> InterweaveStep {
    let old = beta[(k, k)];
    if old == 0.0 || !old.is_finite() {
        log::warn!("interweaving skipped for factor {k}: beta_kk = {old}");
        return InterweaveStep {
            k,
            skipped: true,
            mu_old: f64::NAN,
            mu_prop: f64::NAN,
            log_ratio: f64::NAN,
            accepted: false,
            beta_kk_old: old,
            beta_kk_new: old,
        };
    }
    let mu_old = (old * old).ln();
    let beta_star: Vec<f64> = (0..beta.nrows())
        .filter(|&s| s != k)
        .map(|s| beta[(s, k)] / old)
        .collect();
    let lambda_star: Vec<f64> = lambda_k.iter().map(|l| l + mu_old).collect();
    let (a, b) = mu_proposal(&lambda_star, phi, tau2, b0);
    let mu_prop = a + b.sqrt() * stream.next_normal();
    let log_ratio = log_residual_target(mu_prop, lambda_star[0], &beta_star, phi, tau2, b0)
        - log_residual_target(mu_old, lambda_star[0], &beta_star, phi, tau2, b0);
    let accepted = stream.next_uniform().ln() < log_ratio;
    let mu_new = if accepted { mu_prop } else { mu_old };
    let new = old.signum() * (0.5 * mu_new).exp();
    if accepted && new != old {
        let up = new / old;
        let down = old / new;
        for s in 0..beta.nrows() {
            beta[(s, k)] *= up;
        }
        f_k.iter_mut().for_each(|v| *v *= down);
        let shift = 2.0 * down.abs().ln();
        lambda_k.iter_mut().for_each(|l| *l += shift);
    }
    InterweaveStep {
        k,
        skipped: false,
        mu_old,
        mu_prop,
        log_ratio,
        accepted,
        beta_kk_old: old,
        beta_kk_new: if accepted { new } else { old },
    }
}

/// Runs [`interweave_column`] for every factor in order.
pub fn deep_interweave(
    beta: &mut DMatrix<f64>,
    f: &mut [Vec<f64>],
    lambda: &mut [Vec<f64>],
    factor_params: &[(f64, f64)],
    b0: f64,
    stream: &mut Stream,
) -> Vec<InterweaveStep> {
    (0..beta.ncols())
        .map(|k| {
            let (phi, tau2) = factor_params[k];
            interweave_column(beta, &mut f[k], &mut lambda[k], k, phi, tau2, b0, stream)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(seed: u64) -> (DMatrix<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut s = Stream::new(seed);
        let beta = DMatrix::from_fn(4, 2, |i, j| {
            if i == j {
                0.8 + 0.1 * i as f64
            } else {
                0.3 * s.next_normal()
            }
        });
        let f = (0..2)
            .map(|_| (0..30).map(|_| s.next_normal()).collect())
            .collect();
        let lambda = (0..2)
            .map(|_| (0..30).map(|_| 0.5 * s.next_normal()).collect())
            .collect();
        (beta, f, lambda)
    }

    #[test]
    fn loading_times_factor_is_preserved() {
        let mut s = Stream::new(1);
        for seed in 0..200 {
            let (mut beta, mut f, mut lambda) = setup(seed);
            let (b0, f0, l0) = (beta.clone(), f.clone(), lambda.clone());
            let steps = deep_interweave(
                &mut beta,
                &mut f,
                &mut lambda,
                &[(0.95, 0.05), (0.9, 0.1)],
                B0,
                &mut s,
            );
            for st in &steps {
                let k = st.k;
                for i in 0..4 {
                    for t in 0..30 {
                        let before = b0[(i, k)] * f0[k][t];
                        let after = beta[(i, k)] * f[k][t];
                        assert!(
                            (after - before).abs() <= 4.0 * f64::EPSILON * before.abs(),
                            "{after} vs {before}"
                        );
                    }
                }
                let shift = 2.0 * (st.beta_kk_old / st.beta_kk_new).abs().ln();
                for t in 0..30 {
                    assert!((lambda[k][t] - l0[k][t] - shift).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejected_step_changes_nothing() {
        // An absurd loading column makes every proposal unlikely; keep the
        // first rejected case and compare.
        let mut s = Stream::new(2);
        for seed in 0..500 {
            let (mut beta, mut f, mut lambda) = setup(seed);
            let (b0, f0, l0) = (beta.clone(), f.clone(), lambda.clone());
            let st = interweave_column(
                &mut beta,
                &mut f[0],
                &mut lambda[0],
                0,
                0.95,
                0.05,
                B0,
                &mut s,
            );
            if !st.accepted {
                assert_eq!(st.beta_kk_new, st.beta_kk_old);
                assert_eq!((beta, f, lambda), (b0, f0, l0));
                return;
            }
        }
        panic!("no rejection observed");
    }

    #[test]
    fn zero_diagonal_is_skipped() {
        let (mut beta, mut f, mut lambda) = setup(3);
        beta[(1, 1)] = 0.0;
        let before = beta.clone();
        let st = interweave_column(
            &mut beta,
            &mut f[1],
            &mut lambda[1],
            1,
            0.9,
            0.1,
            B0,
            &mut Stream::new(0),
        );
        assert!(st.skipped);
        assert_eq!(beta, before);
    }

    #[test]
    fn proposal_is_the_ar1_level_conditional() {
        // Brute-force the Gaussian in mu from the AR(1) transitions plus auxiliary prior.
        let mut s = Stream::new(4);
        let ls: Vec<f64> = (0..25).map(|_| 1.0 + 0.4 * s.next_normal()).collect();
        let (phi, tau2) = (0.9, 0.1);
        let (a, b) = mu_proposal(&ls, phi, tau2, B0);
        let logq = |mu: f64| {
            (1..25)
                .map(|t| log_normal_pdf(ls[t], mu + phi * (ls[t - 1] - mu), tau2))
                .sum::<f64>()
                + log_normal_pdf(mu, 0.0, B0 * tau2 / ((1.0 - phi) * (1.0 - phi)))
        };
        // A Gaussian log-density has constant second difference -1/b and stationary point a.
        let h = 1e-2;
        let d2 = (logq(a + h) - 2.0 * logq(a) + logq(a - h)) / (h * h);
        let d1 = (logq(a + h) - logq(a - h)) / (2.0 * h);
        assert!((d2 + 1.0 / b).abs() < 1e-5 / b);
        assert!(d1.abs() < 1e-6 / b.sqrt());
    }

    #[test]
    fn mu_chain_targets_the_conditional() {
        // With beta* and lambda* fixed, repeated steps leave p(mu | beta*, lambda*) invariant:
        // compare the MH chain with a grid evaluation of that density.
        let mut s = Stream::new(5);
        let (phi, tau2) = (0.8, 0.2);
        let lam: Vec<f64> = (0..12).map(|_| 0.6 * s.next_normal()).collect();
        let bstar = [0.4, -0.7, 1.1];
        let logp = |mu: f64| {
            let mut l =
                0.5 * mu - 0.5 * mu.exp() + log_normal_pdf(lam[0], mu, tau2 / (1.0 - phi * phi));
            for t in 1..12 {
                l += log_normal_pdf(lam[t], mu + phi * (lam[t - 1] - mu), tau2);
            }
            l + bstar
                .iter()
                .map(|&b| log_normal_pdf(b, 0.0, (-mu).exp()))
                .sum::<f64>()
        };
        let grid: Vec<f64> = (0..4000).map(|i| -6.0 + i as f64 * 0.003).collect();
        let w: Vec<f64> = grid.iter().map(|&m| logp(m)).collect();
        let mx = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = w.iter().map(|l| (l - mx).exp()).sum();
        let exact_mean: f64 = grid
            .iter()
            .zip(&w)
            .map(|(g, l)| g * (l - mx).exp())
            .sum::<f64>()
            / z;

        let (a, b) = mu_proposal(&lam, phi, tau2, B0);
        let mut mu = a;
        let n = 200_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let prop = a + b.sqrt() * s.next_normal();
            let r = log_residual_target(prop, lam[0], &bstar, phi, tau2, B0)
                - log_residual_target(mu, lam[0], &bstar, phi, tau2, B0);
            if s.next_uniform().ln() < r {
                mu = prop;
            }
            sum += mu;
        }
        let est = sum / n as f64;
        assert!((est - exact_mean).abs() < 0.02, "{est} vs {exact_mean}");
    }
}
