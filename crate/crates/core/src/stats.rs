//! Small statistical utilities shared across modules.

use crate::scalar::{fl, Scalar};

/// 95th percentile of the standard normal distribution.
pub const Z_095: f64 = 1.6448536269514722;

/// Standard normal CDF.
///
/// Uses the Abramowitz–Stegun 7.1.26 rational approximation of `erf`
/// (absolute error below 1.5e-7), computed in `f64`.
pub fn normal_cdf<F: Scalar>(x: F) -> F {
    let z = x.to_f64_lossy() / std::f64::consts::SQRT_2;
    fl(0.5 * (1.0 + erf(z)))
}

fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Linear-interpolation empirical quantile (R type 7) of a sorted slice.
pub fn quantile_sorted<F: Scalar>(sorted: &[F], p: f64) -> F {
    assert!(!sorted.is_empty());
    assert!((0.0..=1.0).contains(&p));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (n as f64 - 1.0) * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = fl::<F>(pos - lo as f64);
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Mean of a slice; zero for empty input.
pub fn mean<F: Scalar>(values: &[F]) -> F {
    if values.is_empty() {
        return F::zero();
    }
    let sum = values.iter().fold(F::zero(), |acc, &v| acc + v);
    sum / F::from_usize(values.len()).expect("length fits scalar")
}

/// Sample standard deviation (n-1 denominator); zero when fewer than 2 values.
pub fn sample_sd<F: Scalar>(values: &[F]) -> F {
    if values.len() < 2 {
        return F::zero();
    }
    let m = mean(values);
    let ss = values
        .iter()
        .fold(F::zero(), |acc, &v| acc + (v - m) * (v - m));
    (ss / F::from_usize(values.len() - 1).expect("length fits scalar")).sqrt()
}

/// SplitMix64 step, used to derive independent per-replication seeds.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seed for replication `rep` derived from a base seed.
pub fn derive_seed(base: u64, rep: u64) -> u64 {
    splitmix64(base ^ splitmix64(rep))
}
