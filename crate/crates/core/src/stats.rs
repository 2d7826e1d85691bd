//! Paired t-test with Student-t distribution functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Student-t cumulative distribution function.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let x = df / (df + t * t);
    let tail = 0.5 * incomplete_beta(df / 2.0, 0.5, x);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Two-sided p-value for a t statistic.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Inverse of [`t_cdf`] by bisection.
pub fn t_quantile(p: f64, df: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile probability must be in (0, 1)");
    let (mut lo, mut hi) = (-1.0, 1.0);
    while t_cdf(lo, df) > p {
        lo *= 2.0;
    }
    while t_cdf(hi, df) < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub n: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub sd_a: f64,
    pub sd_b: f64,
    pub mean_diff: f64,
    pub ci95: (f64, f64),
    pub t_stat: f64,
    pub df: usize,
    pub p_value: f64,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Paired two-sided t-test of `a - b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<Comparison> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(Error::Invalid("paired t-test needs at least two pairs".into()));
    }
    let n = a.len();
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean_a, sd_a) = mean_sd(a);
    let (mean_b, sd_b) = mean_sd(b);
    let (mean_diff, sd_d) = mean_sd(&d);
    let df = n - 1;
    let se = sd_d / (n as f64).sqrt();
    let (t_stat, p_value, ci95) = if d.iter().all(|&x| x == 0.0) {
        (0.0, 1.0, (0.0, 0.0))
    } else if se == 0.0 {
        // constant nonzero difference
        let t = if mean_diff > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
        (t, 0.0, (mean_diff, mean_diff))
    } else {
        let t = mean_diff / se;
        let half = t_quantile(0.975, df as f64) * se;
        (t, t_two_sided_p(t, df as f64), (mean_diff - half, mean_diff + half))
    };
    Ok(Comparison { n, mean_a, mean_b, sd_a, sd_b, mean_diff, ci95, t_stat, df, p_value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ContinuousCDF, StudentsT};

    #[test]
    fn ln_gamma_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-14);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn hand_example() {
        let c = paired_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0, 2.0, 2.0, 4.0, 4.0]).unwrap();
        // d = [1,0,1,0,1], mean 0.6, sd sqrt(0.3)
        assert!((c.mean_diff - 0.6).abs() < 1e-12);
        let t = 0.6 / (0.3f64.sqrt() / 5f64.sqrt());
        assert!((c.t_stat - t).abs() < 1e-12);
        assert!((c.t_stat - 2.449).abs() < 1e-3);
        assert_eq!(c.df, 4);
        assert!((c.p_value - 0.0705).abs() < 0.002);
        assert!(c.ci95.0 < c.mean_diff && c.mean_diff < c.ci95.1);
    }

    #[test]
    fn zero_difference() {
        let c = paired_t_test(&[0.3, 0.5, 0.7], &[0.3, 0.5, 0.7]).unwrap();
        assert_eq!((c.mean_diff, c.t_stat, c.p_value), (0.0, 0.0, 1.0));
    }

    #[test]
    fn huge_effect() {
        let a: Vec<f64> = (0..50).map(|i| 10.0 + 1e-3 * (i % 3) as f64).collect();
        let b = vec![0.0; 50];
        assert!(paired_t_test(&a, &b).unwrap().p_value < 0.001);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(paired_t_test(&[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch(2, 1))));
    }

    #[test]
    fn cdf_and_quantile_match_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let df = rng.random_range(1..120) as f64;
            let t = rng.random_range(-8.0..8.0);
            let reference = StudentsT::new(0.0, 1.0, df).unwrap();
            assert!((t_cdf(t, df) - reference.cdf(t)).abs() < 1e-10, "t={t} df={df}");
        }
        for df in [1.0, 4.0, 49.0] {
            let q = t_quantile(0.975, df);
            let reference = StudentsT::new(0.0, 1.0, df).unwrap().inverse_cdf(0.975);
            assert!((q - reference).abs() < 1e-8);
        }
    }
}
