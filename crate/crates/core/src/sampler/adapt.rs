use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    /// Proposals made with the fixed isotropic step before the empirical covariance is used.
    pub warmup: usize,
    pub target_accept: f64,
    /// Isotropic warmup step is `warmup_scale / sqrt(dim)`.
    pub warmup_scale: f64,
    pub jitter: f64,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig {
            warmup: 200,
            target_accept: 0.25,
            warmup_scale: 0.1,
            jitter: 1e-10,
        }
    }
}

/// Adaptive Gaussian random walk on the unconstrained scale of one block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalAdapter {
    cfg: AdapterConfig,
    dim: usize,
    count: u64,
    mean: Vec<f64>,
    /// Sum of centred outer products, row-major.
    m2: Vec<f64>,
    log_scale: f64,
    proposed: u64,
    accepted: u64,
}

impl ProposalAdapter {
    pub fn new(dim: usize, cfg: AdapterConfig) -> Self {
        ProposalAdapter {
            cfg,
            dim,
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim * dim],
            log_scale: (2.38f64 * 2.38 / dim as f64).ln(),
            proposed: 0,
            accepted: 0,
        }
    }

    pub fn in_warmup(&self) -> bool {
        (self.proposed as usize) < self.cfg.warmup || self.count < 2
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }

    /// Empirical covariance of the recorded block values.
    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.dim;
        let denom = (self.count.max(2) - 1) as f64;
        DMatrix::from_fn(d, d, |i, j| self.m2[i * d + j] / denom)
    }

    fn step_cholesky(&self) -> Option<DMatrix<f64>> {
        let d = self.dim;
        let cov = self.covariance();
        let mean_diag = (0..d).map(|i| cov[(i, i)]).sum::<f64>() / d as f64;
        if !(mean_diag > 1e-14) {
            return None;
        }
        let jitter = self.cfg.jitter + 1e-6 * mean_diag;
        let c = (cov + DMatrix::identity(d, d) * jitter) * self.scale();
        c.cholesky().map(|ch| ch.l())
    }

    /// Symmetric proposal; the log proposal-density difference is zero.
    pub fn propose(&self, u: &[f64], stream: &mut Stream) -> Vec<f64> {
        let z = DVector::from_iterator(self.dim, (0..self.dim).map(|_| stream.next_normal()));
        let chol = if self.in_warmup() {
            None
        } else {
            self.step_cholesky()
        };
        match chol {
            Some(l) => {
                let step = l * z;
                u.iter().zip(step.iter()).map(|(a, b)| a + b).collect()
            }
            None => {
                let s = self.cfg.warmup_scale / (self.dim as f64).sqrt();
                u.iter().zip(z.iter()).map(|(a, b)| a + s * b).collect()
            }
        }
    }

    /// Records the outcome of a proposal and the block value after the step.
    pub fn update(&mut self, u_after: &[f64], accepted: bool) {
        let was_warm = !self.in_warmup();
        self.proposed += 1;
        if accepted {
            self.accepted += 1;
        }
        self.count += 1;
        let d = self.dim;
        let k = self.count as f64;
        let delta: Vec<f64> = u_after.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl / k;
        }
        for i in 0..d {
            for j in 0..d {
                self.m2[i * d + j] += delta[i] * (u_after[j] - self.mean[j]);
            }
        }
        if was_warm {
            let n_adapt = (self.proposed as usize)
                .saturating_sub(self.cfg.warmup)
                .max(1) as f64;
            let a = if accepted { 1.0 } else { 0.0 };
            self.log_scale += n_adapt.powf(-0.6) * (a - self.cfg.target_accept);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_step_is_isotropic() {
        let a = ProposalAdapter::new(4, AdapterConfig::default());
        let mut s = Stream::new(1);
        let mut z = s.clone();
        let p = a.propose(&[0.0; 4], &mut s);
        for v in p {
            assert!((v - 0.05 * z.next_normal()).abs() < 1e-15);
        }
    }

    #[test]
    fn covariance_is_symmetric_psd() {
        let mut a = ProposalAdapter::new(
            3,
            AdapterConfig {
                warmup: 10,
                ..Default::default()
            },
        );
        let mut s = Stream::new(2);
        for _ in 0..500 {
            let x = s.normal_block(3).unwrap();
            a.update(&[x[0], x[0] + 0.1 * x[1], x[2]], true);
        }
        let c = a.covariance();
        assert!((c.clone() - c.transpose()).abs().max() < 1e-12);
        assert!(c.symmetric_eigenvalues().iter().all(|&e| e > -1e-12));
        assert!(a.step_cholesky().is_some());
    }

    #[test]
    fn scale_tracks_acceptance() {
        // Always rejecting shrinks the scale; always accepting grows it.
        let cfg = AdapterConfig {
            warmup: 5,
            ..Default::default()
        };
        let mut lo = ProposalAdapter::new(1, cfg);
        let mut hi = ProposalAdapter::new(1, cfg);
        for k in 0..200 {
            lo.update(&[(k % 7) as f64], false);
            hi.update(&[(k % 7) as f64], true);
        }
        assert!(lo.scale() < 2.38 * 2.38 && hi.scale() > 2.38 * 2.38);
    }
}
