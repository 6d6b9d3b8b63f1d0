//! Linear-Gaussian model: `d` independent AR(1) components observed through
//! their sum plus Gaussian noise. The scalar case is the Kalman-checkable
//! reference model; `d > 1` exercises the Hilbert-sorted resampler.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kalman::{LinearGaussianSpec, MatrixSpec};
use crate::rng::{Deviate, Stream};
use crate::sampler::ModelFamily;
use crate::ssm::{affine_forward, affine_invert, log_normal_pdf, StateSpaceModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussian {
    pub phi: f64,
    pub sigma: f64,
    pub obs_sd: f64,
    pub dim: usize,
    pub init_mean: f64,
    pub init_var: f64,
}

impl LinearGaussian {
    /// Scalar model started from its stationary law.
    pub fn scalar(phi: f64, sigma: f64, obs_sd: f64) -> Self {
        Self::new(phi, sigma, obs_sd, 1)
    }

    pub fn new(phi: f64, sigma: f64, obs_sd: f64, dim: usize) -> Self {
        assert!(phi.abs() < 1.0, "stationary start needs |phi| < 1");
        LinearGaussian {
            phi,
            sigma,
            obs_sd,
            dim,
            init_mean: 0.0,
            init_var: sigma * sigma / (1.0 - phi * phi),
        }
    }

    pub fn spec(&self) -> Result<LinearGaussianSpec> {
        if self.dim != 1 {
            return Err(Error::Precondition(
                "scalar spec requested for a multivariate model".into(),
            ));
        }
        Ok(LinearGaussianSpec {
            phi: self.phi,
            sigma: self.sigma,
            obs_sd: self.obs_sd,
            init_mean: self.init_mean,
            init_var: self.init_var,
        })
    }

    pub fn matrix_spec(&self) -> MatrixSpec {
        let d = self.dim;
        MatrixSpec {
            transition: nalgebra::DMatrix::from_diagonal_element(d, d, self.phi),
            process_cov: nalgebra::DMatrix::from_diagonal_element(d, d, self.sigma * self.sigma),
            observation: nalgebra::DVector::from_element(d, 1.0),
            obs_var: self.obs_sd * self.obs_sd,
            init_mean: nalgebra::DVector::from_element(d, self.init_mean),
            init_cov: nalgebra::DMatrix::from_diagonal_element(d, d, self.init_var),
        }
    }

    /// Forward simulation; states are row-major `T x d`.
    pub fn simulate(&self, t_len: usize, stream: &mut Stream) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let mut x = vec![0.0; t_len * d];
        let mut y = Vec::with_capacity(t_len);
        let init_sd = self.init_var.sqrt();
        for t in 0..t_len {
            for k in 0..d {
                let mean = if t == 0 {
                    self.init_mean
                } else {
                    self.phi * x[(t - 1) * d + k]
                };
                let sd = if t == 0 { init_sd } else { self.sigma };
                x[t * d + k] = mean + sd * stream.next_normal();
            }
            let s: f64 = x[t * d..(t + 1) * d].iter().sum();
            y.push(s + self.obs_sd * stream.next_normal());
        }
        (x, y)
    }

    fn moments(&self, prev: Option<f64>) -> (f64, f64) {
        match prev {
            None => (self.init_mean, self.init_var.sqrt()),
            Some(p) => (self.phi * p, self.sigma),
        }
    }
}

impl StateSpaceModel for LinearGaussian {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn propagate(
        &self,
        _t: usize,
        v: &[Deviate],
        prev: Option<&[f64]>,
        _y: &[f64],
        out: &mut [f64],
    ) {
        for k in 0..self.dim {
            let (m, s) = self.moments(prev.map(|p| p[k]));
            out[k] = affine_forward(m, s, v[k]);
        }
    }

    fn invert_propagate(
        &self,
        t: usize,
        x: &[f64],
        prev: Option<&[f64]>,
        _y: &[f64],
        _stream: &mut Stream,
        out: &mut [Deviate],
    ) -> Result<()> {
        for k in 0..self.dim {
            let (m, s) = self.moments(prev.map(|p| p[k]));
            out[k] = affine_invert(m, s, x[k]).ok_or_else(|| Error::Singular {
                t,
                msg: format!("component {k} not reachable"),
            })?;
        }
        Ok(())
    }

    fn log_observation(&self, t: usize, x: &[f64], y: &[f64]) -> f64 {
        log_normal_pdf(y[t], x.iter().sum(), self.obs_sd * self.obs_sd)
    }

    fn log_initial(&self, x: &[f64]) -> f64 {
        x.iter()
            .map(|&v| log_normal_pdf(v, self.init_mean, self.init_var))
            .sum()
    }

    fn log_transition(&self, _t: usize, x: &[f64], prev: &[f64], _y: &[f64]) -> f64 {
        let s2 = self.sigma * self.sigma;
        x.iter()
            .zip(prev)
            .map(|(&v, &p)| log_normal_pdf(v, self.phi * p, s2))
            .sum()
    }
}

/// Scalar linear-Gaussian family over `(phi, sigma2, obs_var)` with flat
/// priors on `atanh(phi)`, `log sigma2` and `log obs_var`. Mostly useful with
/// some of the parameters fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LgFamily {
    pub initial: [f64; 3],
    pub dim: usize,
}

impl LgFamily {
    pub fn new(phi: f64, sigma2: f64, obs_var: f64) -> Self {
        LgFamily {
            initial: [phi, sigma2, obs_var],
            dim: 1,
        }
    }
}

impl ModelFamily for LgFamily {
    type Model = LinearGaussian;

    fn param_names(&self) -> Vec<String> {
        ["phi", "sigma2", "obs_var"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn model(&self, theta: &[f64]) -> LinearGaussian {
        LinearGaussian::new(theta[0], theta[1].sqrt(), theta[2].sqrt(), self.dim)
    }

    fn initial_theta(&self) -> Vec<f64> {
        self.initial.to_vec()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        if theta[0].abs() < 1.0 && theta[1] > 0.0 && theta[2] > 0.0 {
            -(1.0 - theta[0] * theta[0]).ln() - theta[1].ln() - theta[2].ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn to_unconstrained(&self, theta: &[f64]) -> Vec<f64> {
        vec![theta[0].atanh(), theta[1].ln(), theta[2].ln()]
    }

    fn from_unconstrained(&self, u: &[f64]) -> Vec<f64> {
        vec![u[0].tanh(), u[1].exp(), u[2].exp()]
    }

    fn log_jacobian(&self, theta: &[f64]) -> f64 {
        (1.0 - theta[0] * theta[0]).ln() + theta[1].ln() + theta[2].ln()
    }
}
