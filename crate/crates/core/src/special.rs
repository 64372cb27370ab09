//! Gamma function and Gegenbauer polynomials.

use crate::real::Real;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_P: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_series<T: Real>(x: T) -> T {
    let mut acc = T::lit(LANCZOS_P[0]);
    for (i, p) in LANCZOS_P.iter().enumerate().skip(1) {
        acc = acc + T::lit(*p) / (x + T::from_count(i));
    }
    acc
}

/// Γ(x) for real `x`, using reflection below 1/2.
pub fn gamma<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        let pi = T::PI();
        return pi / ((pi * x).sin() * gamma(T::one() - x));
    }
    let z = x - T::one();
    let t = z + T::lit(LANCZOS_G) + half;
    let sqrt_two_pi = (T::lit(2.0) * T::PI()).sqrt();
    sqrt_two_pi * t.powf(z + half) * (-t).exp() * lanczos_series(z)
}

/// log Γ(x) for `x > 0`.
pub fn ln_gamma<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        let pi = T::PI();
        return (pi / (pi * x).sin().abs()).ln() - ln_gamma(T::one() - x);
    }
    let z = x - T::one();
    let t = z + T::lit(LANCZOS_G) + half;
    half * (T::lit(2.0) * T::PI()).ln() + (z + half) * t.ln() - t + lanczos_series(z).ln()
}

/// Volume of the Euclidean unit ball in dimension `n`, π^{n/2}/Γ(1+n/2).
pub fn unit_ball_volume<T: Real>(n: T) -> T {
    let half_n = n / T::lit(2.0);
    (half_n * T::PI().ln() - ln_gamma(T::one() + half_n)).exp()
}

/// Values C_0^λ(x), …, C_{kmax}^λ(x) by the three-term recurrence.
pub fn gegenbauer_all<T: Real>(lambda: T, x: T, kmax: usize, out: &mut Vec<T>) {
    out.clear();
    out.push(T::one());
    if kmax == 0 {
        return;
    }
    let two = T::lit(2.0);
    out.push(two * lambda * x);
    for k in 2..=kmax {
        let kf = T::from_count(k);
        let next = (two * x * (kf + lambda - T::one()) * out[k - 1]
            - (kf + two * lambda - two) * out[k - 2])
            / kf;
        out.push(next);
    }
}

/// Squared norm ∫₀^π C_k^λ(cos θ)² sin^{2λ}θ dθ.
pub fn gegenbauer_norm_sq<T: Real>(lambda: T, k: usize) -> T {
    let kf = T::from_count(k);
    let two = T::lit(2.0);
    let log_ratio = ln_gamma(kf + two * lambda) - ln_gamma(kf + T::one()) - two * ln_gamma(lambda);
    T::PI() * two.powf(T::one() - two * lambda) * log_ratio.exp() / (kf + lambda)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gamma_matches_factorials_and_half_integers() {
        for n in 1..15 {
            let fact: f64 = (1..n).map(|k| k as f64).product();
            assert_relative_eq!(gamma(n as f64), fact, max_relative = 1e-13);
        }
        assert_relative_eq!(gamma(0.5_f64), std::f64::consts::PI.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(gamma(1.5_f64), 0.5 * std::f64::consts::PI.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(gamma(-0.5_f64), -2.0 * std::f64::consts::PI.sqrt(), max_relative = 1e-13);
    }

    #[test]
    fn gamma_matches_high_precision_table() {
        // (x, Γ(x), ln Γ(x)) from 30-digit arithmetic.
        let table = [
            (0.1, 9.513_507_698_668_731_836_3, 2.252_712_651_734_205_959_9),
            (0.75, 1.225_416_702_465_177_645_1, 0.203_280_951_431_295_371_48),
            (2.5, 1.329_340_388_179_137_020_5, 0.284_682_870_472_919_159_63),
            (7.3, 1_271.423_633_663_909_273_1, 7.147_892_523_022_249_032_8),
            (15.2, 149_037_380_723.386_396_87, 25.727_462_988_765_577_002),
            (23.9, 1.885_718_609_500_031_544_4e22, 51.291_181_019_320_071_579),
            (29.7, 3.208_120_370_060_437_920_1e30, 70.243_238_000_961_000_608),
        ];
        for (x, g, lg) in table {
            assert_relative_eq!(gamma(x), g, max_relative = 1e-13);
            assert_relative_eq!(ln_gamma(x), lg, max_relative = 1e-13);
        }
    }

    #[test]
    fn gamma_agrees_with_statrs() {
        let mut x = 0.05_f64;
        while x < 30.0 {
            assert_relative_eq!(gamma(x), statrs::function::gamma::gamma(x), max_relative = 1e-11);
            assert_relative_eq!(
                ln_gamma(x),
                statrs::function::gamma::ln_gamma(x),
                max_relative = 1e-11,
                epsilon = 1e-13
            );
            x += 0.173;
        }
    }

    #[test]
    fn unit_ball_volumes() {
        use std::f64::consts::PI;
        assert_relative_eq!(unit_ball_volume(1.0_f64), 2.0, max_relative = 1e-14);
        assert_relative_eq!(unit_ball_volume(2.0_f64), PI, max_relative = 1e-14);
        assert_relative_eq!(unit_ball_volume(3.0_f64), 4.0 * PI / 3.0, max_relative = 1e-14);
    }

    #[test]
    fn gegenbauer_low_orders() {
        let mut v = Vec::new();
        let (lam, x) = (1.0_f64, 0.3);
        gegenbauer_all(lam, x, 3, &mut v);
        // λ = 1 gives Chebyshev polynomials of the second kind.
        assert_relative_eq!(v[2], 4.0 * x * x - 1.0, epsilon = 1e-15);
        assert_relative_eq!(v[3], 8.0 * x * x * x - 4.0 * x, epsilon = 1e-15);
        // ‖U_k‖² = π/2 against sin²θ.
        for k in 0..6 {
            assert_relative_eq!(gegenbauer_norm_sq(1.0_f64, k), std::f64::consts::FRAC_PI_2, max_relative = 1e-13);
        }
    }
}
