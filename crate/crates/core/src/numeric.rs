//! Scalar numerics shared across the engines: logistic helpers, normal
//! distribution functions with tail-stable Mills ratios, truncated normal
//! sampling and seed derivation.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use libm::erfc;

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Above this point the inverse Mills ratio is taken from its continued
/// fraction instead of the pdf/cdf quotient.
const MILLS_CF_THRESHOLD: f64 = 2.0;
/// Below −LOG_CDF_TAIL, log Φ goes through the Mills ratio.
const LOG_CDF_TAIL: f64 = 6.0;
const MILLS_CF_TERMS: usize = 120;

/// PRNG used everywhere a seed appears: ChaCha8 seeded through
/// `SeedableRng::seed_from_u64`.
pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable child seed for `(base, index)`; independent of scheduling order.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix64(mix64(base) ^ mix64(index.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^x) without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Log density of N(0, variance) at x.
pub fn normal_log_pdf(x: f64, variance: f64) -> f64 {
    -0.5 * (LN_2PI + variance.ln()) - 0.5 * x * x / variance
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// λ(a) − a where λ(a) = φ(a) / Φ(−a) is the inverse Mills ratio. Always
/// strictly positive; this is the mean excess of a standard normal truncated
/// to (a, ∞).
pub fn mills_excess(a: f64) -> f64 {
    if a < MILLS_CF_THRESHOLD {
        normal_pdf(a) / normal_cdf(-a) - a
    } else {
        // λ(a) − a = 1 / (a + 2 / (a + 3 / (a + ...)))
        let mut t = a;
        for k in (2..=MILLS_CF_TERMS).rev() {
            t = a + k as f64 / t;
        }
        1.0 / t
    }
}

/// Inverse Mills ratio φ(a) / Φ(−a).
pub fn inverse_mills(a: f64) -> f64 {
    a + mills_excess(a)
}

/// log Φ(x), finite for every finite x.
pub fn log_normal_cdf(x: f64) -> f64 {
    if x > 0.0 {
        (-normal_cdf(-x)).ln_1p()
    } else if x > -LOG_CDF_TAIL {
        normal_cdf(x).ln()
    } else {
        let a = -x;
        -0.5 * a * a - 0.5 * LN_2PI - inverse_mills(a).ln()
    }
}

/// Draws e > 0 such that a + e ~ N(0, 1) truncated to (a, ∞).
///
/// Plain rejection for a ≤ 0.45, otherwise the exponential proposal of
/// Robert (1995) with the optimal rate.
pub fn sample_truncated_excess<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a <= 0.45 {
        loop {
            let t: f64 = rng.sample(rand_distr::StandardNormal);
            if t > a {
                return t - a;
            }
        }
    }
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let u: f64 = rng.random::<f64>();
        let e = -(1.0 - u).ln() / rate;
        if e <= 0.0 {
            continue;
        }
        let x = a + e;
        let accept = (-0.5 * (x - rate) * (x - rate)).exp();
        if rng.random::<f64>() < accept {
            return e;
        }
    }
}
