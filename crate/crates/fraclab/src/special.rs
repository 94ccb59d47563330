//! Exact constants, special functions and the backwards fundamental
//! solution consumed by every other module.
//!
//! Everything here is a pure function of its arguments; there is no shared
//! mutable state, so concurrent invocation is safe.

use crate::params::{FracParam, GaussianCenter};
use crate::quad::{adaptive_semi_infinite, adaptive_simpson};
use crate::{Error, Result};

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

// Lanczos g = 607/128, 15 terms. Relative error below 1e-14 for positive
// arguments, which keeps |Gamma(-s)| = Gamma(1-s)/s accurate up to s = 1.
const LANCZOS_G: f64 = 4.742_187_5;
const LANCZOS_COEFFS: [f64; 15] = [
    0.999_999_999_999_997_1,
    57.156_235_665_862_92,
    -59.597_960_355_475_49,
    14.136_097_974_741_746,
    -0.491_913_816_097_620_2,
    3.399_464_998_481_188_9e-5,
    4.652_362_892_704_857_5e-5,
    -9.837_447_530_487_956e-5,
    1.580_887_032_249_124_9e-4,
    -2.102_644_417_241_048_7e-4,
    2.174_396_181_152_126_4e-4,
    -1.643_181_065_367_639e-4,
    8.441_822_398_385_274e-5,
    -2.619_083_840_158_141e-5,
    3.689_918_265_953_162e-6,
];

/// Gamma function for positive arguments, no domain checks.
pub(crate) fn gamma_pos(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps accuracy uniform near the origin.
        std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_pos(1.0 - x))
    } else {
        let z = x - 1.0;
        let mut acc = LANCZOS_COEFFS[0];
        for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
            acc += c / (z + i as f64);
        }
        let t = z + LANCZOS_G + 0.5;
        SQRT_2PI * t.powf(z + 0.5) * (-t).exp() * acc
    }
}

/// Euler Gamma function on `(0, inf)`.
pub fn gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("gamma needs x > 0, got {x}")));
    }
    Ok(gamma_pos(x))
}

/// `|Gamma(-s)| = Gamma(1-s)/s` for `s` in `(0,1)`.
pub(crate) fn abs_gamma_neg_s(s: f64) -> f64 {
    gamma_pos(1.0 - s) / s
}

/// Extension-energy normalisation `delta_s = 2^{2s-1} Gamma(s)/Gamma(1-s)`.
pub fn delta_s(p: &FracParam) -> f64 {
    let s = p.s();
    (2.0f64).powf(2.0 * s - 1.0) * gamma_pos(s) / gamma_pos(1.0 - s)
}

/// Kernel constant `c_{m,s} = s 2^{2s} Gamma((m+2s)/2) / (pi^{m/2} Gamma(1-s))`.
pub fn c_ms(p: &FracParam, m: usize) -> f64 {
    let s = p.s();
    s * (2.0f64).powf(2.0 * s) * gamma_pos((m as f64 + 2.0 * s) / 2.0)
        / (std::f64::consts::PI.powf(m as f64 / 2.0) * gamma_pos(1.0 - s))
}

/// Space-time kernel `H_s(z, tau)` of the fractional heat operator.
pub fn heat_kernel(p: &FracParam, m: usize, z: &[f64], tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("heat kernel needs tau > 0, got {tau}")));
    }
    let s = p.s();
    let r2: f64 = z.iter().map(|v| v * v).sum();
    let pref = (4.0 * std::f64::consts::PI).powf(-(m as f64) / 2.0) / abs_gamma_neg_s(s);
    Ok(pref * (-r2 / (4.0 * tau)).exp() * tau.powf(-(m as f64) / 2.0 - 1.0 - s))
}

/// Spatial kernel `K_s(z) = c_{m,s} |z|^{-m-2s}`.
pub fn space_kernel(p: &FracParam, m: usize, z: &[f64]) -> Result<f64> {
    let r2: f64 = z.iter().map(|v| v * v).sum();
    if r2 == 0.0 {
        return Err(Error::Domain("space kernel needs z != 0".into()));
    }
    Ok(c_ms(p, m) * r2.sqrt().powf(-(m as f64) - 2.0 * p.s()))
}

/// Backwards fundamental solution of the weighted heat operator about
/// `(X0, t0)`, evaluated at `X = (x, z)` in the closed half space and `t < t0`.
pub fn backward_gaussian(
    p: &FracParam,
    m: usize,
    center: &GaussianCenter,
    x_ext: &[f64],
    t: f64,
) -> Result<f64> {
    if t >= center.t0 {
        return Err(Error::Domain(format!(
            "backward gaussian needs t < t0, got t = {t}, t0 = {}",
            center.t0
        )));
    }
    debug_assert_eq!(x_ext.len(), m + 1);
    debug_assert_eq!(center.x0.len(), m);
    let tau = center.t0 - t;
    let mut r2 = x_ext[m] * x_ext[m];
    for i in 0..m {
        let d = x_ext[i] - center.x0[i];
        r2 += d * d;
    }
    Ok(backward_gaussian_radial(p, m, r2, tau))
}

/// Same kernel with the squared distance `|X - X0|^2` supplied directly;
/// the workhorse for periodised image sums.
#[inline]
pub(crate) fn backward_gaussian_radial(p: &FracParam, m: usize, r2: f64, tau: f64) -> f64 {
    let s = p.s();
    let pref = 1.0 / (gamma_pos(s) * (4.0 * std::f64::consts::PI).powf(m as f64 / 2.0));
    pref * (-r2 / (4.0 * tau)).exp() * tau.powf(-(m as f64) / 2.0 - 1.0 + s)
}

/// Quadratures over this Gaussian truncate where `|X - X0| = 16 sqrt(tau)`;
/// the discarded tail is below 1e-14 of the mass.
#[inline]
pub fn gaussian_truncation_radius(tau: f64) -> f64 {
    8.0 * (4.0 * tau).sqrt()
}

/// Mittag-Leffler function `E_alpha(x)` on the decaying branch `x <= 0`,
/// `alpha` in `(0, 1]`.
///
/// The power series is used while its largest term stays small enough for
/// the alternating sum to keep full precision; otherwise the completely
/// monotone spectral representation is integrated adaptively.
pub fn mittag_leffler(alpha: f64, x: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!(
            "mittag_leffler needs alpha in (0,1], got {alpha}"
        )));
    }
    if x > 0.0 {
        return Err(Error::UnsupportedRange(format!(
            "mittag_leffler implements only the decaying branch x <= 0, got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if alpha == 1.0 {
        return Ok(x.exp());
    }
    if x.abs() <= 5.0 {
        if let Some(v) = mittag_leffler_series(alpha, x) {
            return Ok(v);
        }
    }
    Ok(mittag_leffler_spectral(alpha, -x))
}

/// Series with a cancellation guard: rejected when the largest term exceeds
/// 1e4, past which f64 summation would lose more than ~1e-12 absolutely.
fn mittag_leffler_series(alpha: f64, x: f64) -> Option<f64> {
    // x <= 0 here, so the terms alternate in sign.
    let mut sum = 1.0f64;
    let mut max_term = 1.0f64;
    let ln_ax = x.abs().ln();
    for k in 1..600 {
        let ln_term = k as f64 * ln_ax - ln_gamma_pos(alpha * k as f64 + 1.0);
        let mag = ln_term.exp();
        sum += if k % 2 == 0 { mag } else { -mag };
        max_term = max_term.max(mag);
        if max_term > 1e4 {
            return None;
        }
        if mag < 1e-17 * sum.abs().max(1e-30) && k > 8 {
            return Some(sum);
        }
    }
    None
}

fn ln_gamma_pos(x: f64) -> f64 {
    gamma_pos(x).ln()
}

/// Spectral representation for `E_alpha(-r)`, `r > 0`:
/// `(sin(pi a)/(pi a)) * int_0^inf exp(-u v^{1/a}) / (v^2 + 2 v cos(pi a) + 1) dv`
/// with `u = r^{1/a}`.
fn mittag_leffler_spectral(alpha: f64, r: f64) -> f64 {
    let u = r.powf(1.0 / alpha);
    let c = (std::f64::consts::PI * alpha).cos();
    let pref = (std::f64::consts::PI * alpha).sin() / (std::f64::consts::PI * alpha);
    let integrand = |v: f64| -> f64 {
        if v <= 0.0 {
            return 1.0; // limit at v = 0
        }
        (-u * v.powf(1.0 / alpha)).exp() / (v * v + 2.0 * v * c + 1.0)
    };
    let vmax = (745.0 / u).powf(alpha).min(1e6);
    pref * adaptive_simpson(&integrand, 0.0, vmax, 1e-13)
}

/// Lower incomplete gamma `gamma(a, x) = int_0^x t^{a-1} e^{-t} dt`.
///
/// Series for `x < a + 1`, continued fraction otherwise.
pub(crate) fn lower_incomplete_gamma(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        for n in 1..400 {
            term *= x / (a + n as f64);
            sum += term;
            if term.abs() < 1e-16 * sum.abs() {
                break;
            }
        }
        sum * x.powf(a) * (-x).exp()
    } else {
        gamma_pos(a) - upper_incomplete_gamma_cf(a, x)
    }
}

fn upper_incomplete_gamma_cf(a: f64, x: f64) -> f64 {
    // Lentz's algorithm for the continued fraction of Gamma(a, x).
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..400 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    x.powf(a) * (-x).exp() * h
}

/// Modified Bessel function `K_nu(x)` for `x > 0` via the cosh-integral
/// representation, adaptively integrated.
pub(crate) fn bessel_k(nu: f64, x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x > 700.0 {
        return 0.0;
    }
    // K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt; the integrand dies
    // once x cosh t outruns both the plateau and the exponent budget.
    let integrand = |t: f64| (-x * t.cosh()).exp() * (nu * t).cosh();
    let t_hint = ((2.0 * (nu.abs() + 1.0) / x).max(2.0)).ln().max(1.0) + 1.0;
    adaptive_semi_infinite(&integrand, t_hint, 1e-14 * (1.0 + 1.0 / x))
}
