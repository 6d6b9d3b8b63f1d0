//! Hilbert-curve ordering of particle clouds.
//!
//! One-dimensional clouds are sorted on the raw state values; higher
//! dimensions are min-max scaled into the unit cube and sorted on their
//! Hilbert index. Ties go to the lower original index.

use std::sync::atomic::{AtomicU64, Ordering};

pub const DEFAULT_ORDER: u32 = 16;

static CLAMPED: AtomicU64 = AtomicU64::new(0);

/// Number of coordinates that fell outside [0,1] and were clamped by [`hilbert_index`].
pub fn clamped_coordinates() -> u64 {
    CLAMPED.load(Ordering::Relaxed)
}

fn cell(c: f64, order: u32) -> u32 {
    let side = (1u64 << order) as f64;
    let c = if (0.0..=1.0).contains(&c) {
        c
    } else {
        CLAMPED.fetch_add(1, Ordering::Relaxed);
        if c.is_nan() {
            0.0
        } else {
            c.clamp(0.0, 1.0)
        }
    };
    ((c * side) as u64).min((1u64 << order) - 1) as u32
}

/// Skilling's in-place transform from axis coordinates to the transposed Hilbert index.
fn axes_to_transpose(x: &mut [u32], order: u32) {
    let n = x.len();
    let m = 1u32 << (order - 1);
    let mut q = m;
    while q > 1 {
        let p = q - 1;
        for i in 0..n {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q >>= 1;
    }
    for i in 1..n {
        x[i] ^= x[i - 1];
    }
    let mut t = 0;
    let mut q = m;
    while q > 1 {
        if x[n - 1] & q != 0 {
            t ^= q - 1;
        }
        q >>= 1;
    }
    for xi in x.iter_mut() {
        *xi ^= t;
    }
}

/// Hilbert index of the grid cell containing `point`, with `order` bits per axis.
pub fn hilbert_index(point: &[f64], order: u32) -> u128 {
    let d = point.len();
    assert!(
        d >= 1 && (1..=32).contains(&order),
        "need d >= 1 and 1 <= order <= 32"
    );
    assert!(d as u32 * order <= 128, "d * order must fit in 128 bits");
    if d == 1 {
        return u128::from(cell(point[0], order));
    }
    let mut x: Vec<u32> = point.iter().map(|&c| cell(c, order)).collect();
    axes_to_transpose(&mut x, order);
    let mut key: u128 = 0;
    for b in (0..order).rev() {
        for xi in &x {
            key = (key << 1) | u128::from((xi >> b) & 1);
        }
    }
    key
}

/// Per-coordinate min-max scaling of an `N x d` row-major cloud; constant
/// coordinates map to 0.5.
pub fn normalize_to_unit_cube(states: &[f64], d: usize) -> Vec<f64> {
    let n = states.len() / d;
    let mut out = vec![0.0; states.len()];
    for k in 0..d {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            let v = states[i * d + k];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let span = hi - lo;
        for i in 0..n {
            out[i * d + k] = if span > 0.0 {
                (states[i * d + k] - lo) / span
            } else {
                0.5
            };
        }
    }
    out
}

/// Writes the sorting permutation `zeta` (sorted position -> particle index).
pub fn sort_permutation(states: &[f64], d: usize, order: u32, zeta: &mut Vec<usize>) {
    let n = states.len() / d;
    zeta.clear();
    zeta.extend(0..n);
    if d == 1 {
        zeta.sort_unstable_by(|&a, &b| states[a].total_cmp(&states[b]).then(a.cmp(&b)));
        return;
    }
    let unit = normalize_to_unit_cube(states, d);
    let mut keyed: Vec<(u128, usize)> = (0..n)
        .map(|i| (hilbert_index(&unit[i * d..(i + 1) * d], order), i))
        .collect();
    keyed.sort_unstable();
    for (z, (_, i)) in zeta.iter_mut().zip(keyed) {
        *z = i;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SortResult {
    /// `zeta[r]` is the particle at sorted position `r`.
    pub zeta: Vec<usize>,
    /// `zeta_inv[i]` is the sorted position of particle `i`.
    pub zeta_inv: Vec<usize>,
    pub sorted_states: Vec<f64>,
    pub sorted_weights: Vec<f64>,
}

pub fn sort_particles(states: &[f64], weights: &[f64], d: usize, order: u32) -> SortResult {
    let mut zeta = Vec::new();
    sort_permutation(states, d, order, &mut zeta);
    let mut zeta_inv = vec![0; zeta.len()];
    for (r, &i) in zeta.iter().enumerate() {
        zeta_inv[i] = r;
    }
    let sorted_states = zeta
        .iter()
        .flat_map(|&i| states[i * d..(i + 1) * d].iter().copied())
        .collect();
    let sorted_weights = zeta.iter().map(|&i| weights[i]).collect();
    SortResult {
        zeta,
        zeta_inv,
        sorted_states,
        sorted_weights,
    }
}
