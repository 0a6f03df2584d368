//! Von Mises density and sampling on the circle.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

/// Above this concentration the power series for I0 is replaced by its
/// large-argument expansion (the series terms would overflow near 700).
const SERIES_LIMIT: f64 = 500.0;

/// Above this concentration sampling uses the wrapped normal limit
/// with standard deviation `1/sqrt(kappa)`.
const NORMAL_LIMIT: f64 = 1e5;

/// `ln I0(x)` for `x >= 0`, relative accuracy better than 1e-12.
pub fn ln_bessel_i0(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x <= SERIES_LIMIT {
        // I0(x) = sum_k ((x/2)^2)^k / (k!)^2
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            term *= q / (k * k);
            sum += term;
            if term <= 1e-17 * sum && k > 0.5 * x {
                break;
            }
            k += 1.0;
        }
        sum.ln()
    } else {
        // I0(x) ~ e^x / sqrt(2 pi x) * sum_k ((2k-1)!!)^2 / (k! (8x)^k)
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..30 {
            let kf = k as f64;
            term *= (2.0 * kf - 1.0).powi(2) / (8.0 * kf * x);
            sum += term;
            if term < 1e-17 {
                break;
            }
        }
        x - 0.5 * (2.0 * PI * x).ln() + sum.ln()
    }
}

pub fn bessel_i0(x: f64) -> f64 {
    ln_bessel_i0(x).exp()
}

pub fn ln_density(theta: f64, mu: f64, kappa: f64) -> f64 {
    kappa * (theta - mu).cos() - (2.0 * PI).ln() - ln_bessel_i0(kappa)
}

pub fn density(theta: f64, mu: f64, kappa: f64) -> f64 {
    ln_density(theta, mu, kappa).exp()
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Draws one angle in `(-pi, pi]` (Best & Fisher rejection sampler).
pub fn sample<R: Rng + ?Sized>(mu: f64, kappa: f64, rng: &mut R) -> f64 {
    if kappa == 0.0 {
        return wrap_angle(rng.random_range(-PI..PI));
    }
    if kappa > NORMAL_LIMIT {
        let z: f64 = rng.sample(StandardNormal);
        return wrap_angle(mu + z / kappa.sqrt());
    }
    let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
    let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
    let r = (1.0 + rho * rho) / (2.0 * rho);
    let f = loop {
        let u1: f64 = rng.random();
        let u2: f64 = rng.random();
        let z = (PI * u1).cos();
        let f = (1.0 + r * z) / (r + z);
        let c = kappa * (r - f);
        if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
            break f;
        }
    };
    let offset = f.clamp(-1.0, 1.0).acos();
    let theta = if rng.random_bool(0.5) { mu + offset } else { mu - offset };
    wrap_angle(theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Trapezoid quadrature of the integral form
    /// I0(x) = (1/pi) * int_0^pi exp(x cos t) dt, kept independent of the series.
    fn i0_quadrature(x: f64) -> f64 {
        let n = 20_000;
        let h = PI / n as f64;
        let mut s = 0.5 * ((x).exp() + (-x).exp());
        for i in 1..n {
            s += (x * (i as f64 * h).cos()).exp();
        }
        s * h / PI
    }

    #[test]
    fn i0_matches_quadrature() {
        for &x in &[0.0, 0.5, 1.0, 2.0, 7.5, 30.0, 120.0] {
            let q = i0_quadrature(x);
            let s = bessel_i0(x);
            assert!(((s - q) / q).abs() < 1e-12, "x={x}: {s} vs {q}");
        }
    }

    #[test]
    fn series_and_asymptotic_agree_at_switch() {
        let below = {
            // Force the series just above the limit by direct summation.
            let x: f64 = 520.0;
            let q = 0.25 * x * x;
            let (mut t, mut s) = (1.0f64, 1.0f64);
            for k in 1..2000 {
                t *= q / ((k * k) as f64);
                s += t;
            }
            s.ln()
        };
        let above = ln_bessel_i0(520.0);
        assert!(((below - above) / below).abs() < 1e-13);
    }

    #[test]
    fn uniform_when_kappa_zero() {
        for &t in &[-3.0, 0.0, 1.0, PI] {
            assert!((density(t, 0.4, 0.0) - 1.0 / (2.0 * PI)).abs() < 1e-15);
        }
    }

    #[test]
    fn density_ratio_to_mode() {
        let mode = density(0.3, 0.3, 2.0);
        let off = density(0.3 + PI / 3.0, 0.3, 2.0);
        let expected = (2.0 * ((PI / 3.0).cos() - 1.0)).exp();
        assert!((off / mode - expected).abs() < 1e-14);
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn concentrated_samples_stay_near_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let t = sample(1.0, 1e6, &mut rng);
            assert!((t - 1.0).abs() < 1e-2);
        }
        // Rejection branch with large but finite kappa.
        for _ in 0..2000 {
            let t = sample(-2.0, 5e4, &mut rng);
            assert!((t + 2.0).abs() < 1e-1);
        }
    }
}
