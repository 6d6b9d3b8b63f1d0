//! Normal-distribution helpers and truncated-normal sampling.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::rng::Stream;

pub use statrs::function::beta::ln_beta;

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn norm_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0)
        .expect("standard normal")
        .inverse_cdf(p)
}

/// Standard normal restricted to `(a, b)` with `a` far in the right tail
/// (exponential rejection sampler).
fn tail_normal(a: f64, b: f64, stream: &mut Stream) -> f64 {
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let z = a - stream.next_uniform().ln() / alpha;
        let u = stream.next_uniform();
        if z < b && u <= (-0.5 * (z - alpha) * (z - alpha)).exp() {
            return z;
        }
    }
}

/// Standard normal restricted to `(a, b)`, `a < b`.
pub fn std_truncated_normal(a: f64, b: f64, stream: &mut Stream) -> f64 {
    debug_assert!(a < b);
    if a > 0.0 {
        return -std_truncated_normal(-b, -a, stream);
    }
    // Now a <= 0; work in the lower tail where the cdf keeps full precision.
    if b <= 0.0 {
        let (fa, fb) = (norm_cdf(a), norm_cdf(b));
        if fb - fa > 1e-300 && fb > 0.0 {
            let u = stream.next_uniform();
            let z = norm_quantile(fa + u * (fb - fa));
            if z > a && z < b {
                return z;
            }
            return z.clamp(a.next_up(), b.next_down());
        }
        return -tail_normal(-b, -a, stream);
    }
    let (fa, fb) = (norm_cdf(a), norm_cdf(b));
    let u = stream.next_uniform();
    let z = norm_quantile(fa + u * (fb - fa));
    z.clamp(a.next_up(), b.next_down())
}

/// `N(mean, sd^2)` restricted to `(lo, hi)`.
pub fn truncated_normal(mean: f64, sd: f64, lo: f64, hi: f64, stream: &mut Stream) -> f64 {
    let z = std_truncated_normal((lo - mean) / sd, (hi - mean) / sd, stream);
    (mean + sd * z).clamp(lo.next_up(), hi.next_down())
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let ne = n * m / (n + m);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_q(lambda))
}

/// `Q_KS(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2)`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let term = sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test of `xs` against a continuous cdf.
pub fn ks_one_sample(xs: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in v.iter().enumerate() {
        let f = cdf(x);
        d = d
            .max(((i + 1) as f64 / n - f).abs())
            .max((f - i as f64 / n).abs());
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    (d, kolmogorov_q(lambda))
}
