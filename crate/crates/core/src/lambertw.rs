//! Complex Lambert W function.
//!
//! `w0` evaluates the principal branch, `w_branch` any integer branch. Both
//! refine an initial guess with Halley's method on `f(w) = w e^w - z`:
//!
//! * near the branch point `-1/e`: the series in `p = sqrt(2(e z + 1))`,
//! * near the origin: the Taylor series `z - z^2 + 3/2 z^3`,
//! * elsewhere: the asymptotic expansion `L1 - L2 + L2/L1` with
//!   `L1 = log z + 2 pi i k`, `L2 = log L1`.
//!
//! On the cut `z < -1/e` the principal branch is continued from above, so
//! `Im w0(z)` lies in `(0, pi)` there. A negative zero imaginary part is
//! treated as a positive zero for that reason.

use std::f64::consts::{E, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 50;
const STEP_TOL: f64 = 1e-15;
const RESIDUAL_TOL: f64 = 1e-12;
const SERIES_RADIUS: f64 = 0.3;
const BRANCH_POINT_SINGULAR_RADIUS: f64 = 1e-12;

/// `-1/e`, the branch point shared by `W_0` and `W_{-1}`.
pub const BRANCH_POINT: f64 = -1.0 / E;

fn check_finite(z: Complex64) -> Result<()> {
    if z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("non-finite argument {z}")))
    }
}

/// Map `-0.0` to `+0.0` so points on the cut follow the upper continuation.
fn canonical(z: Complex64) -> Complex64 {
    Complex64::new(z.re, if z.im == 0.0 { 0.0 } else { z.im })
}

/// Residual bound used as the acceptance criterion for every result.
pub fn residual_bound(z: Complex64) -> f64 {
    RESIDUAL_TOL * z.norm().max(1.0)
}

/// `|w e^w - z|`.
pub fn residual(w: Complex64, z: Complex64) -> f64 {
    (w * w.exp() - z).norm()
}

fn branch_point_p(z: Complex64) -> Complex64 {
    (2.0 * (E * z + 1.0)).sqrt()
}

fn branch_point_series(p: Complex64) -> Complex64 {
    -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
}

fn asymptotic_guess(z: Complex64, k: i64) -> Complex64 {
    let l1 = z.ln() + Complex64::new(0.0, 2.0 * PI * k as f64);
    if l1.norm() < 1.0 {
        // log(log z) is useless near |z| = 1 on the principal branch
        return (1.0 + z).ln();
    }
    let l2 = l1.ln();
    l1 - l2 + l2 / l1
}

fn halley(z: Complex64, mut w: Complex64) -> Option<Complex64> {
    for _ in 0..MAX_ITERATIONS {
        let ew = w.exp();
        let f = w * ew - z;
        if f == Complex64::new(0.0, 0.0) {
            return Some(w);
        }
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        if denom.norm() == 0.0 || !denom.re.is_finite() || !denom.im.is_finite() {
            break;
        }
        let step = f / denom;
        if !step.re.is_finite() || !step.im.is_finite() {
            break;
        }
        w -= step;
        if step.norm() <= STEP_TOL * w.norm().max(1.0) {
            return Some(w);
        }
    }
    if w.re.is_finite() && w.im.is_finite() && residual(w, z) <= residual_bound(z) {
        Some(w)
    } else {
        None
    }
}

fn halley_real(x: f64, mut w: f64) -> Option<f64> {
    for _ in 0..MAX_ITERATIONS {
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            return Some(w);
        }
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        let step = f / denom;
        w -= step;
        if step.abs() <= STEP_TOL * w.abs().max(1.0) {
            return Some(w);
        }
    }
    if w.is_finite() && (w * w.exp() - x).abs() <= RESIDUAL_TOL * x.abs().max(1.0) {
        Some(w)
    } else {
        None
    }
}

/// True when `w` lies in the range of the principal branch: `|Im w| < pi`
/// and `w` to the right of the curve `-eta cot(eta) + i eta`, plus the
/// boundary ray `Im w = pi` that the upper continuation of the cut maps to.
pub fn in_principal_range(w: Complex64) -> bool {
    let eta = w.im;
    if eta == 0.0 {
        return w.re >= -1.0 - 1e-9;
    }
    if eta.abs() > PI {
        return false;
    }
    let boundary = -eta / eta.tan();
    w.re >= boundary - 1e-9 * boundary.abs().max(1.0)
}

/// Real principal branch for `x >= -1/e`.
fn w0_real(x: f64) -> Result<f64> {
    if x <= BRANCH_POINT || (x - BRANCH_POINT).abs() <= 4.0 * f64::EPSILON {
        return Ok(-1.0);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let guess = if (x - BRANCH_POINT).abs() < SERIES_RADIUS {
        let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x.abs() < SERIES_RADIUS {
        x - x * x + 1.5 * x * x * x
    } else if x < E {
        (1.0 + x).ln()
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    halley_real(x, guess).ok_or(Error::LambertNoConvergence {
        z: Complex64::new(x, 0.0),
        branch: 0,
    })
}

/// Principal branch `W_0(z)`.
pub fn w0(z: Complex64) -> Result<Complex64> {
    check_finite(z)?;
    let z = canonical(z);
    if z.im == 0.0 && z.re >= BRANCH_POINT - 4.0 * f64::EPSILON {
        return w0_real(z.re).map(|w| Complex64::new(w, 0.0));
    }
    // Guesses tried in order; the first converged result that lands in the
    // principal range wins.
    let mut guesses = Vec::with_capacity(3);
    let near_branch_point = (z - BRANCH_POINT).norm() < SERIES_RADIUS;
    if near_branch_point {
        guesses.push(branch_point_series(branch_point_p(z)));
    } else if z.norm() < SERIES_RADIUS {
        guesses.push(z - z * z + 1.5 * z * z * z);
    } else {
        guesses.push(asymptotic_guess(z, 0));
    }
    guesses.push(branch_point_series(branch_point_p(z)));
    guesses.push(Complex64::new(0.0, if z.im >= 0.0 { 1.0 } else { -1.0 }));

    for guess in guesses {
        if let Some(w) = halley(z, guess) {
            if in_principal_range(w) {
                return Ok(w);
            }
        }
    }
    Err(Error::LambertNoConvergence { z, branch: 0 })
}

/// Branch `W_k(z)` for any integer `k`.
pub fn w_branch(z: Complex64, k: i64) -> Result<Complex64> {
    check_finite(z)?;
    if k == 0 {
        return w0(z);
    }
    if z.re == 0.0 && z.im == 0.0 {
        return Err(Error::BranchUndefined(k));
    }
    let z = canonical(z);

    // W_{-1} is real on [-1/e, 0).
    if k == -1 && z.im == 0.0 && z.re < 0.0 && z.re >= BRANCH_POINT - 4.0 * f64::EPSILON {
        let x = z.re;
        if (x - BRANCH_POINT).abs() <= 4.0 * f64::EPSILON {
            return Ok(Complex64::new(-1.0, 0.0));
        }
        let guess = if (x - BRANCH_POINT).abs() < SERIES_RADIUS {
            let p = (2.0 * (E * x + 1.0)).max(0.0).sqrt();
            -1.0 - p - p * p / 3.0 - 11.0 / 72.0 * p * p * p
        } else {
            let l1 = (-x).ln();
            l1 - (-l1).ln()
        };
        return halley_real(x, guess)
            .map(|w| Complex64::new(w, 0.0))
            .ok_or(Error::LambertNoConvergence { z, branch: k });
    }

    let near_branch_point = (z - BRANCH_POINT).norm() < SERIES_RADIUS;
    let guess = if near_branch_point && ((k == -1 && z.im >= 0.0) || (k == 1 && z.im < 0.0)) {
        branch_point_series(-branch_point_p(z))
    } else {
        asymptotic_guess(z, k)
    };
    halley(z, guess).ok_or(Error::LambertNoConvergence { z, branch: k })
}

/// `dW_0/dz = 1 / (z + e^{W_0(z)})`.
pub fn w0_derivative(z: Complex64) -> Result<Complex64> {
    check_finite(z)?;
    if (z - BRANCH_POINT).norm() < BRANCH_POINT_SINGULAR_RADIUS {
        return Err(Error::BranchPointSingularity);
    }
    let w = w0(z)?;
    Ok(1.0 / (z + w.exp()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Plain Newton on the real line, independent of the Halley path.
    fn newton_real(x: f64, mut w: f64) -> f64 {
        for _ in 0..200 {
            let step = (w * w.exp() - x) / ((w + 1.0) * w.exp());
            w -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        w
    }

    #[test]
    fn fixed_points() {
        assert_eq!(w0(c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
        let w = w0(c(BRANCH_POINT, 0.0)).unwrap();
        assert!((w - c(-1.0, 0.0)).norm() < 1e-10);
        let w = w_branch(c(BRANCH_POINT, 0.0), -1).unwrap();
        assert!((w - c(-1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn omega_constant() {
        let omega = newton_real(1.0, 1.0);
        let w = w0(c(1.0, 0.0)).unwrap();
        assert_eq!(w.im, 0.0);
        assert!((w.re - omega).abs() < 1e-14);
        assert!((omega - 0.567_143_290_409_783_8).abs() < 1e-15);
        assert_eq!(w_branch(c(1.0, 0.0), 0).unwrap(), w);
    }

    #[test]
    fn negative_real_below_branch_point() {
        // Oracle: on the cut w = -u cot u + i u with u e^{-u cot u} / sin u = -z.
        let target = 0.8;
        let h = |u: f64| u * (-u / u.tan()).exp() / u.sin() - target;
        let (mut lo, mut hi) = (1e-9, PI - 1e-9);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(lo) * h(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let u = 0.5 * (lo + hi);
        let expected = c(-u / u.tan(), u);
        let w = w0(c(-0.8, 0.0)).unwrap();
        assert!((w - expected).norm() < 1e-12, "{w} vs {expected}");
        assert!((w.re + 0.47296).abs() < 1e-5 && (w.im - 1.19350).abs() < 1e-5);
        // negative zero follows the same continuation
        let w_neg = w0(c(-0.8, -0.0)).unwrap();
        assert_eq!(w, w_neg);
    }

    #[test]
    fn real_lower_branch() {
        let oracle = newton_real(-0.2, -3.0);
        let w = w_branch(c(-0.2, 0.0), -1).unwrap();
        assert!((w.re - oracle).abs() < 1e-13);
        assert!((w.re + 2.5426).abs() < 1e-4);
        assert_eq!(w.im, 0.0);
    }

    #[test]
    fn branch_errors() {
        assert_eq!(w_branch(c(0.0, 0.0), 1), Err(Error::BranchUndefined(1)));
        assert!(matches!(w0(c(f64::NAN, 0.0)), Err(Error::InvalidArgument(_))));
        assert!(matches!(w0(c(0.0, f64::INFINITY)), Err(Error::InvalidArgument(_))));
        assert_eq!(
            w0_derivative(c(BRANCH_POINT, 0.0)),
            Err(Error::BranchPointSingularity)
        );
    }

    #[test]
    fn derivative_values() {
        assert!((w0_derivative(c(0.0, 0.0)).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        let omega = newton_real(1.0, 1.0);
        let expected = 1.0 / (1.0 + omega.exp());
        let d = w0_derivative(c(1.0, 0.0)).unwrap();
        assert!((d.re - expected).abs() < 1e-14);
        assert!((d.re - 0.361_896_256_6).abs() < 1e-10);
        let z = c(-0.7, 1.3);
        let d1 = w0_derivative(z).unwrap();
        let d2 = w0_derivative(z.conj()).unwrap();
        assert!((d1.conj() - d2).norm() < 1e-14);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for &z in &[c(0.5, 0.2), c(-0.3, 0.4), c(-2.0, -1.0), c(3.0, 5.0), c(-0.2, 0.0)] {
            let h = 1e-7 * z.norm().max(1.0);
            let fd = (w0(z + h).unwrap() - w0(z - h).unwrap()) / (2.0 * h);
            let d = w0_derivative(z).unwrap();
            assert!((fd - d).norm() <= 1e-6 * d.norm(), "{z}: {fd} vs {d}");
        }
    }

    #[test]
    fn branch_strips() {
        for &z in &[c(-0.3, 0.5), c(2.0, -1.0), c(-4.0, 0.0), c(0.01, 0.02)] {
            for k in [-2i64, -1, 1, 2] {
                let w = w_branch(z, k).unwrap();
                assert!(residual(w, z) <= residual_bound(z));
                let lo = (2 * k - 2) as f64 * PI - 1e-9;
                let hi = (2 * k + 2) as f64 * PI + 1e-9;
                assert!(w.im > lo && w.im < hi, "k={k} z={z} w={w}");
            }
        }
    }
}
