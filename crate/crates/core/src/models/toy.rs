//! Two-state hidden Markov model small enough to enumerate.
//!
//! States are encoded as `0.0` and `1.0`. `x_1` is a fair coin, the chain
//! keeps its state with probability `stay`, and `y_t ~ N(shift * x_t, 1)`.
//! The propagation map thresholds a normal deviate, so it is not injective:
//! inversion draws `v` from the normal restricted to the preimage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Deviate, Stream};
use crate::sampler::ModelFamily;
use crate::special::{norm_quantile, std_truncated_normal};
use crate::ssm::{log_normal_pdf, StateSpaceModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteToy {
    pub stay: f64,
    pub shift: f64,
    threshold: f64,
}

impl DiscreteToy {
    pub fn new(stay: f64, shift: f64) -> Self {
        assert!(stay > 0.0 && stay < 1.0);
        DiscreteToy {
            stay,
            shift,
            threshold: norm_quantile(stay),
        }
    }

    fn state(x: f64) -> usize {
        (x != 0.0) as usize
    }

    /// `p(x_{1:T}, y_{1:T})` for a 0/1 path.
    pub fn joint(&self, path: &[usize], y: &[f64]) -> f64 {
        let mut lp = 0.5f64.ln();
        for (t, &s) in path.iter().enumerate() {
            if t > 0 {
                lp += if s == path[t - 1] {
                    self.stay.ln()
                } else {
                    (1.0 - self.stay).ln()
                };
            }
            lp += log_normal_pdf(y[t], self.shift * s as f64, 1.0);
        }
        lp.exp()
    }

    /// Exact smoothing law over all `2^T` paths, indexed by the path's bits
    /// (bit `T-1-t` is `x_t`).
    pub fn smoothing_law(&self, y: &[f64]) -> Vec<f64> {
        let t_len = y.len();
        let mut p: Vec<f64> = (0..1usize << t_len)
            .map(|code| {
                let path: Vec<usize> = (0..t_len).map(|t| (code >> (t_len - 1 - t)) & 1).collect();
                self.joint(&path, y)
            })
            .collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= z);
        p
    }

    /// Exact marginal likelihood.
    pub fn evidence(&self, y: &[f64]) -> f64 {
        let t_len = y.len();
        (0..1usize << t_len)
            .map(|code| {
                let path: Vec<usize> = (0..t_len).map(|t| (code >> (t_len - 1 - t)) & 1).collect();
                self.joint(&path, y)
            })
            .sum()
    }

    pub fn simulate(&self, t_len: usize, stream: &mut Stream) -> (Vec<f64>, Vec<f64>) {
        let mut x: Vec<f64> = Vec::with_capacity(t_len);
        let mut y = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let v = [Deviate::new(stream.next_normal())];
            let mut out = [0.0];
            self.propagate(t, &v, x.last().map(std::slice::from_ref), &[], &mut out);
            x.push(out[0]);
            y.push(self.shift * out[0] + stream.next_normal());
        }
        (x, y)
    }
}

impl StateSpaceModel for DiscreteToy {
    fn propagate(
        &self,
        _t: usize,
        v: &[Deviate],
        prev: Option<&[f64]>,
        _y: &[f64],
        out: &mut [f64],
    ) {
        let v = v[0].value();
        out[0] = match prev {
            None => (v > 0.0) as u8 as f64,
            Some(p) => {
                let s = Self::state(p[0]);
                let next = if v < self.threshold { s } else { 1 - s };
                next as f64
            }
        };
    }

    fn invert_propagate(
        &self,
        t: usize,
        x: &[f64],
        prev: Option<&[f64]>,
        _y: &[f64],
        stream: &mut Stream,
        out: &mut [Deviate],
    ) -> Result<()> {
        let target = Self::state(x[0]);
        let (lo, hi) = match prev {
            None if target == 1 => (0.0, f64::INFINITY),
            None => (f64::NEG_INFINITY, 0.0),
            Some(p) if Self::state(p[0]) == target => (f64::NEG_INFINITY, self.threshold),
            Some(_) => (self.threshold, f64::INFINITY),
        };
        let v = std_truncated_normal(lo, hi, stream);
        out[0] = Deviate::new(v);
        let mut check = [0.0];
        self.propagate(t, out, prev, _y, &mut check);
        if check[0] != x[0] {
            return Err(Error::Singular {
                t,
                msg: "preimage draw missed the state".into(),
            });
        }
        Ok(())
    }

    fn log_observation(&self, t: usize, x: &[f64], y: &[f64]) -> f64 {
        log_normal_pdf(y[t], self.shift * x[0], 1.0)
    }

    fn log_initial(&self, _x: &[f64]) -> f64 {
        0.5f64.ln()
    }

    fn log_transition(&self, _t: usize, x: &[f64], prev: &[f64], _y: &[f64]) -> f64 {
        if Self::state(x[0]) == Self::state(prev[0]) {
            self.stay.ln()
        } else {
            (1.0 - self.stay).ln()
        }
    }
}

/// Toy family on a two-point grid for each of `stay` and `shift`, uniform
/// prior. Proposals jump to the other grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyFamily {
    pub stay: [f64; 2],
    pub shift: [f64; 2],
}

impl ToyFamily {
    fn grid(&self, k: usize) -> &[f64; 2] {
        if k == 0 {
            &self.stay
        } else {
            &self.shift
        }
    }

    /// Exact posterior over the four grid points, indexed `2 * i_stay + i_shift`.
    pub fn posterior(&self, y: &[f64]) -> [f64; 4] {
        let mut p = [0.0; 4];
        for i in 0..2 {
            for j in 0..2 {
                p[2 * i + j] = DiscreteToy::new(self.stay[i], self.shift[j]).evidence(y);
            }
        }
        let z: f64 = p.iter().sum();
        p.map(|v| v / z)
    }

    pub fn grid_index(&self, theta: &[f64]) -> usize {
        let i = (theta[0] == self.stay[1]) as usize;
        let j = (theta[1] == self.shift[1]) as usize;
        2 * i + j
    }
}

impl ModelFamily for ToyFamily {
    type Model = DiscreteToy;

    fn param_names(&self) -> Vec<String> {
        vec!["stay".into(), "shift".into()]
    }

    fn model(&self, theta: &[f64]) -> DiscreteToy {
        DiscreteToy::new(theta[0], theta[1])
    }

    fn initial_theta(&self) -> Vec<f64> {
        vec![self.stay[0], self.shift[0]]
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        if self.stay.contains(&theta[0]) && self.shift.contains(&theta[1]) {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    fn to_unconstrained(&self, theta: &[f64]) -> Vec<f64> {
        theta.to_vec()
    }

    fn from_unconstrained(&self, u: &[f64]) -> Vec<f64> {
        u.to_vec()
    }

    fn log_jacobian(&self, _theta: &[f64]) -> f64 {
        0.0
    }

    fn propose(
        &self,
        block: &[usize],
        theta: &[f64],
        _stream: &mut Stream,
    ) -> Option<(Vec<f64>, f64)> {
        let mut th = theta.to_vec();
        for &k in block {
            let g = self.grid(k);
            th[k] = if theta[k] == g[0] { g[1] } else { g[0] };
        }
        Some((th, 0.0))
    }
}
