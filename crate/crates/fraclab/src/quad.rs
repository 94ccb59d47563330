//! Deterministic adaptive quadrature used for kernel marginals, spectral
//! profiles and the Mittag-Leffler integral representation.

/// Adaptive Simpson rule on `[a, b]` with absolute tolerance `tol`.
///
/// The recursion is deterministic: the interval is always bisected at the
/// midpoint and the error estimate is the standard Richardson difference.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Integral over `(0, inf)` of a function that decays once `f(x) < cut`
/// past `x = hint`: integrates adaptively on growing dyadic windows until
/// the window contribution falls below `tol`.
pub fn adaptive_semi_infinite<F: Fn(f64) -> f64>(f: &F, hint: f64, tol: f64) -> f64 {
    let mut total = adaptive_simpson(f, 0.0, hint, tol * 0.25);
    let mut lo = hint;
    for _ in 0..64 {
        let hi = lo * 2.0;
        let piece = adaptive_simpson(f, lo, hi, tol * 0.25);
        total += piece;
        if piece.abs() < tol * 0.5 {
            break;
        }
        lo = hi;
    }
    total
}
