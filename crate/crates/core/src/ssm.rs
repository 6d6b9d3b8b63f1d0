//! State-space model contract and the particle-system data structures shared
//! by the filter, the conditional filter and backward simulation.
//!
//! Time indices are 0-based throughout: `t = 0` is the initial state.
//! Observations are scalar, one per time step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Deviate, Stream};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// A model in propagation-map form: `x_t = X(v; theta, x_{t-1})` with `v`
/// standard normal, plus the densities needed for weighting and smoothing.
///
/// `y` is always the full observation sequence so that transitions may
/// depend on `y_{t-1}`.
pub trait StateSpaceModel: Sync {
    fn state_dim(&self) -> usize {
        1
    }

    /// Writes `X(v; theta, prev)` into `out`. `prev` is `None` exactly when `t == 0`.
    fn propagate(&self, t: usize, v: &[Deviate], prev: Option<&[f64]>, y: &[f64], out: &mut [f64]);

    /// Finds `v` with `propagate(v) == x` bit for bit.
    ///
    /// The stream is only touched by maps that are not injective, where `v`
    /// must be drawn from the standard normal restricted to the preimage of `x`.
    fn invert_propagate(
        &self,
        t: usize,
        x: &[f64],
        prev: Option<&[f64]>,
        y: &[f64],
        stream: &mut Stream,
        out: &mut [Deviate],
    ) -> Result<()>;

    fn log_observation(&self, t: usize, x: &[f64], y: &[f64]) -> f64;

    fn log_initial(&self, x: &[f64]) -> f64;

    /// `log f_t(x_t | x_{t-1}, y_{t-1})` for `t >= 1`.
    fn log_transition(&self, t: usize, x: &[f64], prev: &[f64], y: &[f64]) -> f64;

    /// Whether the propagation map samples from `f_t` itself.
    fn is_bootstrap(&self) -> bool {
        true
    }

    /// Density of the proposal implied by the propagation map.
    fn log_proposal(&self, t: usize, x: &[f64], prev: Option<&[f64]>, y: &[f64]) -> f64 {
        match prev {
            None => self.log_initial(x),
            Some(p) => self.log_transition(t, x, p, y),
        }
    }

    fn log_weight(&self, t: usize, x: &[f64], prev: Option<&[f64]>, y: &[f64]) -> f64 {
        let lg = self.log_observation(t, x, y);
        if self.is_bootstrap() {
            return lg;
        }
        let lf = match prev {
            None => self.log_initial(x),
            Some(p) => self.log_transition(t, x, p, y),
        };
        lf + lg - self.log_proposal(t, x, prev, y)
    }
}

pub fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -LN_SQRT_2PI - 0.5 * var.ln() - 0.5 * d * d / var
}

/// `log sum exp(xs)`; `-inf` when every entry is `-inf` or the slice is empty.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    if m == f64::INFINITY {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Normalizes log-weights into `out` and returns their log-sum, or `None`
/// when every weight is zero.
pub fn normalize_log_weights(log_w: &[f64], out: &mut [f64]) -> Option<f64> {
    let m = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return None;
    }
    let mut s = 0.0;
    for (o, &l) in out.iter_mut().zip(log_w) {
        *o = (l - m).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o /= s;
    }
    Some(m + s.ln())
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn split(a: f64) -> (f64, f64) {
    let c = 134_217_729.0 * a;
    let hi = c - (c - a);
    (hi, a - hi)
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    (p, ((ah * bh - p) + ah * bl + al * bh) + al * bl)
}

/// `mean + sd * v` evaluated with the low word of `v` and the product error
/// carried through, so that [`affine_invert`] can hit any representable state.
#[inline]
pub fn affine_forward(mean: f64, sd: f64, v: Deviate) -> f64 {
    let (ph, pl) = two_prod(sd, v.hi);
    let (sh, sl) = two_sum(mean, ph);
    sh + (sl + (pl + sd * v.lo))
}

/// Inverse of [`affine_forward`] in `v`, exact on the returned value.
///
/// Any state is reachable except those within about `eps * |mean|` of zero,
/// where the low word of `v` is too coarse; `None` is returned there.
pub fn affine_invert(mean: f64, sd: f64, x: f64) -> Option<Deviate> {
    if !(sd > 0.0 && sd.is_finite() && x.is_finite() && mean.is_finite()) {
        return None;
    }
    let (dh, dl) = two_sum(x, -mean);
    let q1 = dh / sd;
    let (p, pe) = two_prod(sd, q1);
    let r = ((dh - p) - pe) + dl;
    let q2 = r / sd;
    let hi = q1 + q2;
    let lo = q2 - (hi - q1);
    if affine_forward(mean, sd, Deviate { hi, lo }) == x {
        return Some(Deviate { hi, lo });
    }
    // Rounding of the low-order sum can skip x for this hi; neighbouring hi
    // values shift the product error and so the reachable grid.
    let mut up = hi;
    let mut down = hi;
    if let Some(d) = bisect_low_word(mean, sd, x, hi, lo) {
        return Some(d);
    }
    for _ in 0..16 {
        up = up.next_up();
        down = down.next_down();
        for h in [up, down] {
            let lo = q1 - h + q2;
            if let Some(d) = bisect_low_word(mean, sd, x, h, lo) {
                return Some(d);
            }
        }
    }
    None
}

/// Searches the low word for `affine_forward(mean, sd, (hi, lo)) == x`,
/// which is monotone in `lo`.
fn bisect_low_word(mean: f64, sd: f64, x: f64, hi: f64, lo: f64) -> Option<Deviate> {
    let f = |lo: f64| affine_forward(mean, sd, Deviate { hi, lo });
    if f(lo) == x {
        return Some(Deviate { hi, lo });
    }
    let unit = (x.abs().max(mean.abs()).max(f64::MIN_POSITIVE) * f64::EPSILON) / sd;
    let (mut a, mut b) = (lo - unit, lo + unit);
    let mut width = unit;
    for _ in 0..64 {
        if f(a) <= x && f(b) >= x {
            break;
        }
        width *= 2.0;
        a = lo - width;
        b = lo + width;
    }
    if !(f(a) <= x && f(b) >= x) {
        return None;
    }
    for _ in 0..256 {
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fm == x {
            return Some(Deviate { hi, lo: mid });
        }
        if mid == a || mid == b {
            break;
        }
        if fm < x {
            a = mid;
        } else {
            b = mid;
        }
    }
    [a, b]
        .into_iter()
        .find(|&l| f(l) == x)
        .map(|lo| Deviate { hi, lo })
}

/// Complete output of one filter run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSystem {
    t_len: usize,
    n: usize,
    dim: usize,
    x: Vec<f64>,
    a: Vec<usize>,
    log_w: Vec<f64>,
    w_bar: Vec<f64>,
    log_sum_w: Vec<f64>,
}

impl ParticleSystem {
    pub fn new(t_len: usize, n: usize, dim: usize) -> Self {
        ParticleSystem {
            t_len,
            n,
            dim,
            x: vec![0.0; t_len * n * dim],
            a: vec![0; t_len.saturating_sub(1) * n],
            log_w: vec![0.0; t_len * n],
            w_bar: vec![0.0; t_len * n],
            log_sum_w: vec![0.0; t_len],
        }
    }

    pub fn t_len(&self) -> usize {
        self.t_len
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x(&self, t: usize, i: usize) -> &[f64] {
        let s = (t * self.n + i) * self.dim;
        &self.x[s..s + self.dim]
    }

    pub fn x_mut(&mut self, t: usize, i: usize) -> &mut [f64] {
        let s = (t * self.n + i) * self.dim;
        &mut self.x[s..s + self.dim]
    }

    /// All particles at time `t`, row-major `N x d`.
    pub fn x_row(&self, t: usize) -> &[f64] {
        let s = t * self.n * self.dim;
        &self.x[s..s + self.n * self.dim]
    }

    /// The cloud at `t - 1` and a mutable view of the cloud at `t`.
    pub(crate) fn step_rows(&mut self, t: usize) -> (&[f64], &mut [f64]) {
        let w = self.n * self.dim;
        let (head, tail) = self.x.split_at_mut(t * w);
        (&head[(t - 1) * w..], &mut tail[..w])
    }

    /// Ancestors (at `t-1`) of the particles at time `t >= 1`.
    pub fn ancestors(&self, t: usize) -> &[usize] {
        let s = (t - 1) * self.n;
        &self.a[s..s + self.n]
    }

    pub fn ancestors_mut(&mut self, t: usize) -> &mut [usize] {
        let s = (t - 1) * self.n;
        &mut self.a[s..s + self.n]
    }

    pub fn log_w(&self, t: usize) -> &[f64] {
        &self.log_w[t * self.n..(t + 1) * self.n]
    }

    pub fn w_bar(&self, t: usize) -> &[f64] {
        &self.w_bar[t * self.n..(t + 1) * self.n]
    }

    pub fn log_sum_w(&self) -> &[f64] {
        &self.log_sum_w
    }

    /// Normalizes the raw log-weights of step `t` and caches their log-sum.
    pub(crate) fn set_weights(&mut self, t: usize, log_w: &[f64]) -> Result<()> {
        let n = self.n;
        self.log_w[t * n..(t + 1) * n].copy_from_slice(log_w);
        if log_w.iter().any(|w| w.is_nan()) {
            return Err(Error::WeightEvaluation { t });
        }
        let out = &mut self.w_bar[t * n..(t + 1) * n];
        match normalize_log_weights(log_w, out) {
            Some(ls) => {
                self.log_sum_w[t] = ls;
                Ok(())
            }
            None => Err(Error::WeightDegeneracy { t }),
        }
    }

    /// `sum_t (log sum_i w_t^i - log N)`.
    pub fn log_likelihood(&self) -> f64 {
        let ln_n = (self.n as f64).ln();
        self.log_sum_w.iter().map(|ls| ls - ln_n).sum()
    }
}

/// Selected particle indices and the state path they pick out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub j: Vec<usize>,
    dim: usize,
    path: Vec<f64>,
}

impl Trajectory {
    pub fn from_system(system: &ParticleSystem, j: Vec<usize>) -> Self {
        assert_eq!(j.len(), system.t_len());
        let dim = system.dim();
        let mut path = Vec::with_capacity(j.len() * dim);
        for (t, &jt) in j.iter().enumerate() {
            path.extend_from_slice(system.x(t, jt));
        }
        Trajectory { j, dim, path }
    }

    pub fn new(j: Vec<usize>, dim: usize, path: Vec<f64>) -> Self {
        assert_eq!(j.len() * dim, path.len());
        Trajectory { j, dim, path }
    }

    pub fn t_len(&self) -> usize {
        self.j.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn x(&self, t: usize) -> &[f64] {
        &self.path[t * self.dim..(t + 1) * self.dim]
    }

    /// The flattened `T x d` path.
    pub fn path(&self) -> &[f64] {
        &self.path
    }

    pub fn path_mut(&mut self) -> &mut [f64] {
        &mut self.path
    }

    pub fn is_coherent_with(&self, system: &ParticleSystem) -> bool {
        self.j.len() == system.t_len()
            && self.j.iter().enumerate().all(|(t, &jt)| {
                system
                    .x(t, jt)
                    .iter()
                    .zip(self.x(t))
                    .all(|(a, b)| a.to_bits() == b.to_bits())
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalization_survives_tiny_weights() {
        let lw = [-1e5, -1e5 - 1.0, -1e5 + 2.0];
        let mut w = [0.0; 3];
        let ls = normalize_log_weights(&lw, &mut w).unwrap();
        assert!(w.iter().all(|x| x.is_finite() && *x >= 0.0));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((ls - log_sum_exp(&lw)).abs() < 1e-9);
        assert!(normalize_log_weights(&[f64::NEG_INFINITY; 2], &mut [0.0; 2]).is_none());
    }

    #[test]
    fn log_normal_pdf_standard() {
        assert!((log_normal_pdf(0.0, 0.0, 1.0) + LN_SQRT_2PI).abs() < 1e-15);
    }

    #[test]
    fn affine_round_trip_hits_hard_cases() {
        // States near zero under a large mean need more than 53 bits of v.
        let cases = [
            (-0.5, 0.2, 1e-13),
            (-0.5, 0.2, 0.5 + 1e-16),
            (-0.5, 0.2, 0.1),
            (3.0, 7.0, -2.5e-9),
            (-9.2, 0.19, -9.200000000000001),
            (1e3, 1e-3, 1e3 + 1e-9),
            (0.0, 1.0, 0.0),
        ];
        for (m, s, x) in cases {
            let v = affine_invert(m, s, x).unwrap_or_else(|| panic!("no inverse for {m} {s} {x}"));
            assert_eq!(
                affine_forward(m, s, v).to_bits(),
                x.to_bits(),
                "{m} {s} {x}"
            );
            assert!((m + s * v.value() - x).abs() <= 1e-10 * (1.0 + x.abs()));
        }
        assert!(affine_invert(0.0, 0.0, 1.0).is_none());
    }

    proptest! {
        #[test]
        fn affine_inverse_is_exact(m in -20.0f64..20.0, s in 1e-3f64..10.0, x in -30.0f64..30.0) {
            let v = affine_invert(m, s, x).unwrap();
            prop_assert_eq!(affine_forward(m, s, v).to_bits(), x.to_bits());
        }

        #[test]
        fn affine_forward_inverse_recovers_v(m in -20.0f64..20.0, s in 1e-2f64..10.0, v in -6.0f64..6.0) {
            let x = affine_forward(m, s, Deviate::new(v));
            let back = affine_invert(m, s, x).unwrap();
            prop_assert!((back.value() - v).abs() < 1e-10 * (1.0 + (m / s).abs()));
        }

        #[test]
        fn normalized_rows_sum_to_one(lw in proptest::collection::vec(-1e3f64..1e3, 1..64)) {
            let mut w = vec![0.0; lw.len()];
            normalize_log_weights(&lw, &mut w).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
