//! Counter-based random streams and the stored base variates of a filter run.
//!
//! Every variate is a pure function of `(seed, label path, position)`, so a
//! sub-stream costs nothing to create and a run can be replayed from its
//! [`RandomInputs`] alone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const LANE: u64 = 0xd1b5_4a32_d192_ed03;
const TWO_PI: f64 = std::f64::consts::TAU;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[inline]
fn hash_at(key: u64, position: u64) -> u64 {
    let h = mix64(position.wrapping_mul(GOLDEN) ^ key);
    mix64(h ^ key.rotate_left(32))
}

/// Maps 52 random bits to the midpoint grid of (0,1); 0 and 1 are unreachable.
#[inline]
fn to_open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// A seekable stream of uniforms and standard normals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stream {
    seed: u64,
    key: u64,
    position: u64,
    label: String,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream {
            seed,
            key: mix64(seed ^ 0x5eed_0f5e_ed0f_5eed),
            position: 0,
            label: String::new(),
        }
    }

    /// Child stream keyed by `label`; the parent's position does not matter.
    pub fn substream(&self, label: &str) -> Stream {
        assert!(!label.is_empty(), "substream label must be non-empty");
        let key = mix64(self.key ^ mix64(fnv1a64(label.as_bytes())));
        let label = if self.label.is_empty() {
            label.to_string()
        } else {
            format!("{}/{}", self.label, label)
        };
        Stream {
            seed: self.seed,
            key,
            position: 0,
            label,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = hash_at(self.key, self.position);
        self.position += 1;
        v
    }

    pub fn next_uniform(&mut self) -> f64 {
        to_open_unit(self.next_u64())
    }

    /// Box-Muller on two hash lanes of the same position.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = to_open_unit(hash_at(self.key, self.position));
        let u2 = to_open_unit(hash_at(self.key ^ LANE, self.position));
        self.position += 1;
        (-2.0 * u1.ln()).sqrt() * (TWO_PI * u2).cos()
    }

    pub fn fill_uniform(&mut self, out: &mut [f64]) {
        for o in out {
            *o = self.next_uniform();
        }
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for o in out {
            *o = self.next_normal();
        }
    }

    pub fn normal_block(&mut self, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::Precondition("normal block of length 0".into()));
        }
        let mut v = vec![0.0; n];
        self.fill_normal(&mut v);
        Ok(v)
    }

    pub fn uniform_block(&mut self, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::Precondition("uniform block of length 0".into()));
        }
        let mut v = vec![0.0; n];
        self.fill_uniform(&mut v);
        Ok(v)
    }
}

/// A standard-normal deviate carried as an unevaluated sum `hi + lo`.
///
/// Fresh draws have `lo == 0`. Inverting a propagation map generally needs
/// more than 53 bits to land exactly on a given state, and the low word
/// supplies them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Deviate {
    pub hi: f64,
    pub lo: f64,
}

impl Deviate {
    pub const fn new(hi: f64) -> Self {
        Deviate { hi, lo: 0.0 }
    }

    pub fn value(self) -> f64 {
        self.hi + self.lo
    }
}

impl From<f64> for Deviate {
    fn from(hi: f64) -> Self {
        Deviate::new(hi)
    }
}

/// The base variates `V_x` (T x N x d) and `V_A` ((T-1) x N) of one filter run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomInputs {
    t_len: usize,
    n: usize,
    dim: usize,
    v_x: Vec<Deviate>,
    v_a: Vec<f64>,
}

impl RandomInputs {
    /// Fresh i.i.d. inputs. State variates are drawn time step by time step,
    /// then the resampling uniforms.
    pub fn draw(stream: &mut Stream, t_len: usize, n: usize, dim: usize) -> Result<Self> {
        if t_len == 0 || n == 0 || dim == 0 {
            return Err(Error::Precondition(format!(
                "random inputs need T, N, d >= 1 (got {t_len}, {n}, {dim})"
            )));
        }
        let v_x = (0..t_len * n * dim)
            .map(|_| Deviate::new(stream.next_normal()))
            .collect();
        let v_a = (0..(t_len - 1) * n)
            .map(|_| stream.next_uniform())
            .collect();
        Ok(RandomInputs {
            t_len,
            n,
            dim,
            v_x,
            v_a,
        })
    }

    /// Zero-filled inputs (v_a = 1/2) to be overwritten slot by slot.
    pub fn zeros(t_len: usize, n: usize, dim: usize) -> Self {
        RandomInputs {
            t_len,
            n,
            dim,
            v_x: vec![Deviate::default(); t_len * n * dim],
            v_a: vec![0.5; t_len.saturating_sub(1) * n],
        }
    }

    pub fn from_parts(
        t_len: usize,
        n: usize,
        dim: usize,
        v_x: Vec<Deviate>,
        v_a: Vec<f64>,
    ) -> Result<Self> {
        if v_x.len() != t_len * n * dim || v_a.len() != t_len.saturating_sub(1) * n {
            return Err(Error::Precondition(
                "random input dimensions do not match (T, N, d)".into(),
            ));
        }
        if let Some(bad) = v_a.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::Precondition(format!(
                "resampling uniform {bad} outside (0,1)"
            )));
        }
        Ok(RandomInputs {
            t_len,
            n,
            dim,
            v_x,
            v_a,
        })
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

    /// State variate of particle `i` at time `t` (0-based).
    pub fn v_x(&self, t: usize, i: usize) -> &[Deviate] {
        let s = (t * self.n + i) * self.dim;
        &self.v_x[s..s + self.dim]
    }

    pub fn v_x_mut(&mut self, t: usize, i: usize) -> &mut [Deviate] {
        let s = (t * self.n + i) * self.dim;
        &mut self.v_x[s..s + self.dim]
    }

    /// Resampling uniforms used to pick ancestors of the particles at time `t` (t >= 1).
    pub fn v_a(&self, t: usize) -> &[f64] {
        let s = (t - 1) * self.n;
        &self.v_a[s..s + self.n]
    }

    pub fn v_a_mut(&mut self, t: usize) -> &mut [f64] {
        let s = (t - 1) * self.n;
        &mut self.v_a[s..s + self.n]
    }

    pub fn all_v_x(&self) -> &[Deviate] {
        &self.v_x
    }

    pub fn all_v_a(&self) -> &[f64] {
        &self.v_a
    }
}
