//! Standard normal helpers and a few small sampling utilities.

use core::f64::consts::{PI, SQRT_2};

use rand::Rng as _;

use crate::Rng;

/// Standard normal density φ(u).
pub fn normal_pdf(u: f64) -> f64 {
    libm::exp(-0.5 * u * u) / libm::sqrt(2.0 * PI)
}

/// Standard normal distribution function Φ(u), via `erfc` for accuracy in the
/// lower tail.
pub fn normal_cdf(u: f64) -> f64 {
    0.5 * libm::erfc(-u / SQRT_2)
}

/// One standard normal draw (Box–Muller).
pub fn standard_normal(rng: &mut Rng) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        if u1 > f64::MIN_POSITIVE {
            let u2: f64 = rng.gen();
            return libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * PI * u2);
        }
    }
}

/// Mean-one lognormal factor with the given coefficient of variation.
pub fn lognormal_factor(rng: &mut Rng, cv: f64) -> f64 {
    if cv <= 0.0 {
        return 1.0;
    }
    let sigma2 = libm::log(1.0 + cv * cv);
    libm::exp(libm::sqrt(sigma2) * standard_normal(rng) - 0.5 * sigma2)
}

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn cdf_reference_points() {
        assert_eq!(normal_cdf(0.0), 0.5);
        // Φ(-3) from tables
        assert!((normal_cdf(-3.0) - 0.001_349_898_031_630_094_6).abs() < 1e-15);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-12);
    }

    #[test]
    fn lognormal_has_unit_mean() {
        let mut rng = Rng::seed_from_u64(3);
        let n = 200_000;
        let mean: f64 = (0..n).map(|_| lognormal_factor(&mut rng, 0.05)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 1e-3);
    }
}
