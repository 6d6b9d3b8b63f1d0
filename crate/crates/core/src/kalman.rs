//! Kalman filter and Rauch-Tung-Striebel smoother for linear-Gaussian models
//! with a scalar observation, used as an exact reference.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ssm::LN_SQRT_2PI;

/// Scalar AR(1) state observed with additive noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussianSpec {
    pub phi: f64,
    pub sigma: f64,
    pub obs_sd: f64,
    pub init_mean: f64,
    pub init_var: f64,
}

impl LinearGaussianSpec {
    pub fn to_matrix(&self) -> MatrixSpec {
        MatrixSpec {
            transition: DMatrix::from_element(1, 1, self.phi),
            process_cov: DMatrix::from_element(1, 1, self.sigma * self.sigma),
            observation: DVector::from_element(1, 1.0),
            obs_var: self.obs_sd * self.obs_sd,
            init_mean: DVector::from_element(1, self.init_mean),
            init_cov: DMatrix::from_element(1, 1, self.init_var),
        }
    }
}

/// `x_1 ~ N(m0, P0)`, `x_t = F x_{t-1} + N(0, Q)`, `y_t = h'x_t + N(0, r)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSpec {
    pub transition: DMatrix<f64>,
    pub process_cov: DMatrix<f64>,
    pub observation: DVector<f64>,
    pub obs_var: f64,
    pub init_mean: DVector<f64>,
    pub init_cov: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanOutput {
    pub log_likelihood: f64,
    pub filtered_means: Vec<DVector<f64>>,
    pub filtered_covs: Vec<DMatrix<f64>>,
    pub smoothed_means: Vec<DVector<f64>>,
    pub smoothed_covs: Vec<DMatrix<f64>>,
}

impl KalmanOutput {
    pub fn smoothed_mean(&self, t: usize, k: usize) -> f64 {
        self.smoothed_means[t][k]
    }

    pub fn smoothed_var(&self, t: usize, k: usize) -> f64 {
        self.smoothed_covs[t][(k, k)]
    }
}

pub fn kalman_oracle(spec: &LinearGaussianSpec, y: &[f64]) -> Result<KalmanOutput> {
    kalman_smoother(&spec.to_matrix(), y)
}

pub fn kalman_smoother(spec: &MatrixSpec, y: &[f64]) -> Result<KalmanOutput> {
    if y.is_empty() {
        return Err(Error::Precondition("no observations".into()));
    }
    let f = &spec.transition;
    let h = &spec.observation;
    let mut pred_m = spec.init_mean.clone();
    let mut pred_p = spec.init_cov.clone();
    let mut preds = Vec::with_capacity(y.len());
    let mut fm = Vec::with_capacity(y.len());
    let mut fp = Vec::with_capacity(y.len());
    let mut ll = 0.0;
    for (t, &yt) in y.iter().enumerate() {
        if t > 0 {
            let m: &DVector<f64> = &fm[t - 1];
            let p: &DMatrix<f64> = &fp[t - 1];
            pred_m = f * m;
            pred_p = f * p * f.transpose() + &spec.process_cov;
        }
        let ph = &pred_p * h;
        let s = h.dot(&ph) + spec.obs_var;
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::Numeric(format!("innovation variance {s} at t={t}")));
        }
        let e = yt - h.dot(&pred_m);
        ll += -LN_SQRT_2PI - 0.5 * s.ln() - 0.5 * e * e / s;
        let k = &ph / s;
        let m = &pred_m + &k * e;
        let mut p = &pred_p - &k * ph.transpose();
        p = (&p + p.transpose()) * 0.5;
        preds.push((pred_m.clone(), pred_p.clone()));
        fm.push(m);
        fp.push(p);
    }

    let n = y.len();
    let mut sm = fm.clone();
    let mut sp = fp.clone();
    for t in (0..n - 1).rev() {
        let (pm, pp) = &preds[t + 1];
        let cross = &fp[t] * f.transpose();
        // Gain G = P_t F' P_{t+1|t}^{-1}; a singular prediction (no noise, degenerate F) uses the pseudo-inverse.
        let inv = match pp.clone().cholesky() {
            Some(c) => c.inverse(),
            None => pp
                .clone()
                .pseudo_inverse(1e-14)
                .map_err(|e| Error::Numeric(format!("smoother gain at t={t}: {e}")))?,
        };
        let g = cross * inv;
        let m = &fm[t] + &g * (&sm[t + 1] - pm);
        let p = &fp[t] + &g * (&sp[t + 1] - pp) * g.transpose();
        sm[t] = m;
        sp[t] = (&p + p.transpose()) * 0.5;
    }
    Ok(KalmanOutput {
        log_likelihood: ll,
        filtered_means: fm,
        filtered_covs: fp,
        smoothed_means: sm,
        smoothed_covs: sp,
    })
}
