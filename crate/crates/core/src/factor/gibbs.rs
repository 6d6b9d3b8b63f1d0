//! Conjugate Gibbs updates for the loadings and the latent factors.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Cholesky of a precision matrix, retried once with `1e-10 * trace` jitter.
pub(crate) fn spd(p: DMatrix<f64>, what: impl FnOnce() -> String) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = p.clone().cholesky() {
        return Ok(c);
    }
    let n = p.nrows();
    let jitter = 1e-10 * p.trace().abs().max(f64::MIN_POSITIVE);
    (p + DMatrix::identity(n, n) * jitter)
        .cholesky()
        .ok_or_else(|| Error::Numeric(format!("{} is not positive definite", what())))
}

/// `a + L^{-T} z` where `P = L L'` is the precision.
fn draw(chol: &Cholesky<f64, Dyn>, mean: &DVector<f64>, stream: &mut Stream) -> DVector<f64> {
    let z = DVector::from_iterator(mean.len(), (0..mean.len()).map(|_| stream.next_normal()));
    let lt = chol.l().transpose();
    let dev = lt
        .solve_upper_triangular(&z)
        .expect("triangular factor has a non-zero diagonal");
    mean + dev
}

/// Posterior mean and precision factor of row `s` of the loadings:
/// `b = (F' V^-1 F + I)^-1`, `a = b F' V^-1 y_s`.
pub fn beta_row_posterior(
    f: &[Vec<f64>],
    y_s: &[f64],
    h_s: &[f64],
    s: usize,
) -> Result<(DVector<f64>, Cholesky<f64, Dyn>)> {
    let k = f.len();
    let mut prec = DMatrix::identity(k, k);
    let mut r = DVector::zeros(k);
    for t in 0..y_s.len() {
        let w = (-h_s[t]).exp();
        for i in 0..k {
            r[i] += f[i][t] * w * y_s[t];
            for j in 0..=i {
                prec[(i, j)] += f[i][t] * f[j][t] * w;
            }
        }
    }
    for i in 0..k {
        for j in 0..i {
            prec[(j, i)] = prec[(i, j)];
        }
    }
    let chol = spd(prec, || format!("loading precision for series {s}"))?;
    let a = chol.solve(&r);
    Ok((a, chol))
}

/// Draws every row of the `S x K` loading matrix independently.
pub fn sample_beta_rows(
    f: &[Vec<f64>],
    y: &[Vec<f64>],
    h: &[Vec<f64>],
    stream: &mut Stream,
) -> Result<DMatrix<f64>> {
    let (s_len, k) = (y.len(), f.len());
    let mut beta = DMatrix::zeros(s_len, k);
    for s in 0..s_len {
        let (a, chol) = beta_row_posterior(f, &y[s], &h[s], s)?;
        let row = draw(&chol, &a, stream);
        for j in 0..k {
            beta[(s, j)] = row[j];
        }
    }
    Ok(beta)
}

/// Posterior of `f_t`: `b_t = (beta' V_t^-1 beta + D_t^-1)^-1`, `a_t = b_t beta' V_t^-1 y_t`.
pub fn factor_posterior(
    beta: &DMatrix<f64>,
    y: &[Vec<f64>],
    h: &[Vec<f64>],
    lambda: &[Vec<f64>],
    t: usize,
) -> Result<(DVector<f64>, Cholesky<f64, Dyn>)> {
    let (s_len, k) = beta.shape();
    let mut prec = DMatrix::zeros(k, k);
    let mut r = DVector::zeros(k);
    for j in 0..k {
        prec[(j, j)] = (-lambda[j][t]).exp();
    }
    for s in 0..s_len {
        let w = (-h[s][t]).exp();
        for i in 0..k {
            r[i] += beta[(s, i)] * w * y[s][t];
            for j in 0..k {
                prec[(i, j)] += beta[(s, i)] * w * beta[(s, j)];
            }
        }
    }
    let chol = spd(prec, || format!("factor precision at t={t}"))?;
    let a = chol.solve(&r);
    Ok((a, chol))
}

/// Draws `f_t` independently for every `t`; returns `K x T`.
pub fn sample_factors(
    beta: &DMatrix<f64>,
    y: &[Vec<f64>],
    h: &[Vec<f64>],
    lambda: &[Vec<f64>],
    stream: &mut Stream,
) -> Result<Vec<Vec<f64>>> {
    let k = beta.ncols();
    let t_len = y[0].len();
    let mut f = vec![vec![0.0; t_len]; k];
    for t in 0..t_len {
        let (a, chol) = factor_posterior(beta, y, h, lambda, t)?;
        let d = draw(&chol, &a, stream);
        for j in 0..k {
            f[j][t] = d[j];
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(draws: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
        let n = draws.len() as f64;
        let k = draws[0].len();
        let mean = draws.iter().fold(DVector::zeros(k), |acc, d| acc + d) / n;
        let cov = draws.iter().fold(DMatrix::zeros(k, k), |acc, d| {
            let c = d - &mean;
            acc + &c * c.transpose()
        }) / (n - 1.0);
        (mean, cov)
    }

    #[test]
    fn no_factor_signal_gives_the_prior() {
        let f = vec![vec![0.0; 50]; 2];
        let y = vec![0.3; 50];
        let h = vec![0.0; 50];
        let (a, chol) = beta_row_posterior(&f, &y, &h, 0).unwrap();
        assert_eq!(a, DVector::zeros(2));
        assert_eq!(chol.inverse(), DMatrix::identity(2, 2));
    }

    #[test]
    fn single_factor_is_shrunk_ols() {
        let mut s = Stream::new(1);
        let t_len = 5000;
        let f: Vec<f64> = (0..t_len).map(|_| s.next_normal()).collect();
        let y: Vec<f64> = f.iter().map(|v| 0.7 * v + 0.5 * s.next_normal()).collect();
        let h = vec![(0.25f64).ln(); t_len];
        let (a, chol) = beta_row_posterior(std::slice::from_ref(&f), &y, &h, 0).unwrap();
        let sff: f64 = f.iter().map(|v| v * v).sum::<f64>() / 0.25;
        let sfy: f64 = f.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / 0.25;
        // Ridge closed form with unit prior precision.
        assert!((a[0] - sfy / (sff + 1.0)).abs() < 1e-12);
        assert!((chol.inverse()[(0, 0)] - 1.0 / (sff + 1.0)).abs() < 1e-15);
        assert!((a[0] - 0.7).abs() < 0.03);
    }

    #[test]
    fn beta_draws_match_posterior_moments() {
        let mut s = Stream::new(2);
        let t_len = 40;
        let f: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..t_len).map(|_| s.next_normal()).collect())
            .collect();
        let y: Vec<Vec<f64>> = vec![(0..t_len)
            .map(|t| 0.5 * f[0][t] - 0.2 * f[1][t] + s.next_normal())
            .collect()];
        let h: Vec<Vec<f64>> = vec![(0..t_len).map(|_| 0.3 * s.next_normal()).collect()];
        let (a, chol) = beta_row_posterior(&f, &y[0], &h[0], 0).unwrap();
        let b = chol.inverse();
        let n = 100_000;
        let draws: Vec<DVector<f64>> = (0..n)
            .map(|_| {
                let m = sample_beta_rows(&f, &y, &h, &mut s).unwrap();
                DVector::from_vec(vec![m[(0, 0)], m[(0, 1)]])
            })
            .collect();
        let (mean, cov) = moments(&draws);
        for i in 0..2 {
            assert!((mean[i] - a[i]).abs() < 4.0 * (b[(i, i)] / n as f64).sqrt());
            for j in 0..2 {
                let se = ((b[(i, i)] * b[(j, j)] + b[(i, j)].powi(2)) / n as f64).sqrt();
                assert!((cov[(i, j)] - b[(i, j)]).abs() < 4.0 * se, "cov {i}{j}");
            }
        }
    }

    #[test]
    fn zero_loadings_give_the_factor_prior() {
        let beta = DMatrix::zeros(3, 2);
        let y = vec![vec![1.0, 2.0]; 3];
        let h = vec![vec![0.0, 0.0]; 3];
        let lambda = vec![vec![0.4, -0.2], vec![1.0, 0.0]];
        let (a, chol) = factor_posterior(&beta, &y, &h, &lambda, 0).unwrap();
        assert_eq!(a, DVector::zeros(2));
        let b = chol.inverse();
        assert!((b[(0, 0)] - 0.4f64.exp()).abs() < 1e-14);
        assert!((b[(1, 1)] - 1.0f64.exp()).abs() < 1e-14);
    }

    #[test]
    fn tiny_noise_tracks_the_data() {
        let beta = DMatrix::identity(2, 2);
        let y = vec![vec![0.8], vec![-1.3]];
        let h = vec![vec![(1e-6f64).ln()]; 2];
        let lambda = vec![vec![0.0]; 2];
        let (a, _) = factor_posterior(&beta, &y, &h, &lambda, 0).unwrap();
        assert!((a[0] - 0.8).abs() < 1e-5);
        assert!((a[1] + 1.3).abs() < 2e-5);
    }

    #[test]
    fn factor_draws_match_posterior_moments() {
        let mut s = Stream::new(3);
        let beta = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.5, 0.8, -0.3, 0.4]);
        let y = vec![vec![0.5], vec![1.0], vec![-0.2]];
        let h = vec![vec![-0.5], vec![0.1], vec![0.3]];
        let lambda = vec![vec![0.2], vec![-0.4]];
        let (a, chol) = factor_posterior(&beta, &y, &h, &lambda, 0).unwrap();
        let b = chol.inverse();
        let n = 100_000;
        let draws: Vec<DVector<f64>> = (0..n)
            .map(|_| {
                let f = sample_factors(&beta, &y, &h, &lambda, &mut s).unwrap();
                DVector::from_vec(vec![f[0][0], f[1][0]])
            })
            .collect();
        let (mean, cov) = moments(&draws);
        for i in 0..2 {
            assert!((mean[i] - a[i]).abs() < 4.0 * (b[(i, i)] / n as f64).sqrt());
            for j in 0..2 {
                let se = ((b[(i, i)] * b[(j, j)] + b[(i, j)].powi(2)) / n as f64).sqrt();
                assert!((cov[(i, j)] - b[(i, j)]).abs() < 4.0 * se);
            }
        }
    }
}
