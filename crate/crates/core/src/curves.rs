//! Curves in the `x = alpha tau` plane.
//!
//! * `Lambda`: where the gain `g` is stationary along rays from the origin.
//! * `C0`: the zero level set of `g`, the boundary of the stability region
//!   `S0 = {g >= 0}`.
//! * `Cc`: the level set `g = c`, traced through `W = c x + i u`, which turns
//!   `W e^W = x + i y` into a scalar equation for `x` at each `u`.

use std::f64::consts::{E, FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::Serialize;

use crate::delay_analysis::{stationary_arg, stationary_radius};
use crate::error::{Error, Result};
use crate::lambertw::{in_principal_range, w0, BRANCH_POINT};
use crate::roots::bisect;

/// Endpoint margin of the `u` grid for level sets.
pub const LEVEL_SET_U_MARGIN: f64 = 1e-6;
/// Accepted `|g(p) - c|` for an emitted level-set point.
pub const LEVEL_SET_TOL: f64 = 1e-6;
/// Boundary slack for `s0_contains`.
pub const S0_BOUNDARY_TOL: f64 = 1e-12;

const LEVEL_SET_X_EXTENT: f64 = 50.0;
const LEVEL_SET_SCAN_CELLS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "curve", content = "c", rename_all = "lowercase")]
pub enum CurveId {
    Lambda,
    C0,
    Cc(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSamples {
    pub curve: CurveId,
    pub points: Vec<(f64, f64)>,
}

fn check_samples(samples: usize) -> Result<()> {
    if samples < 3 {
        return Err(Error::InvalidArgument(format!("samples must be at least 3, got {samples}")));
    }
    Ok(())
}

fn uniform(lo: f64, hi: f64, samples: usize) -> impl Iterator<Item = f64> {
    (0..samples).map(move |k| {
        if k + 1 == samples {
            hi
        } else {
            lo + (hi - lo) * k as f64 / (samples - 1) as f64
        }
    })
}

/// Closed curve where `dg/dtau = 0`, sampled uniformly in the argument of
/// `W0` over `[3pi/4, 5pi/4]`.
pub fn lambda_curve(samples: usize) -> Result<CurveSamples> {
    check_samples(samples)?;
    let points = uniform(0.75 * PI, 1.25 * PI, samples)
        .enumerate()
        .map(|(k, theta)| {
            if k == 0 || k + 1 == samples {
                (0.0, 0.0)
            } else if 2 * k + 1 == samples {
                (BRANCH_POINT, 0.0)
            } else {
                let r = stationary_radius(theta);
                let phi = stationary_arg(theta);
                (r * phi.cos(), r * phi.sin())
            }
        })
        .collect();
    Ok(CurveSamples { curve: CurveId::Lambda, points })
}

/// Zero level set of `g`: `r = theta - pi/2` for `theta in [pi/2, pi]`,
/// traced through the upper half and back along the mirror image.
pub fn c0_curve(samples: usize) -> Result<CurveSamples> {
    check_samples(samples)?;
    let upper: Vec<(f64, f64)> = uniform(FRAC_PI_2, PI, samples)
        .enumerate()
        .map(|(k, theta)| {
            if k == 0 {
                (0.0, 0.0)
            } else if k + 1 == samples {
                (-FRAC_PI_2, 0.0)
            } else {
                let r = theta - FRAC_PI_2;
                (r * theta.cos(), r * theta.sin())
            }
        })
        .collect();
    Ok(CurveSamples { curve: CurveId::C0, points: close_by_mirror(upper) })
}

/// Append the mirror image of an upper-half trace in reverse order, without
/// repeating points on the real axis.
fn close_by_mirror(upper: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut points = upper.clone();
    let n = upper.len();
    for (k, &(x, y)) in upper.iter().enumerate().rev() {
        if k + 1 == n && y == 0.0 {
            continue;
        }
        if k == 0 && y == 0.0 {
            points.push((x, y));
            continue;
        }
        points.push((x, -y));
    }
    points
}

/// Gain `Re W0(p) / Re p` at a point of the plane.
pub fn gain_at(x: f64, y: f64) -> Result<f64> {
    let w = w0(Complex64::new(x, y))?;
    Ok(w.re / x)
}

/// Point of the level set `g = c` with `Im W = u`, if one exists.
fn level_point(c: f64, u: f64) -> Option<(f64, f64)> {
    let f = |x: f64| (c * x).exp() * (c * x * u.cos() - u * u.sin()) - x;
    let at = |k: usize| -LEVEL_SET_X_EXTENT * (k as f64 / LEVEL_SET_SCAN_CELLS as f64).powi(3);
    let mut a = at(0);
    let mut fa = f(a);
    for k in 1..=LEVEL_SET_SCAN_CELLS {
        let b = at(k);
        let fb = f(b);
        if fa.signum() != fb.signum() {
            if let Some(x) = bisect(f, b, a, 1e-15) {
                let w = Complex64::new(c * x, u);
                if in_principal_range(w) {
                    let y = (c * x).exp() * (u * u.cos() + c * x * u.sin());
                    if let Ok(g) = gain_at(x, y) {
                        if (g - c).abs() <= LEVEL_SET_TOL {
                            return Some((x, y));
                        }
                    }
                }
            }
            // the root nearest the origin decides; deeper roots belong to
            // other branches
            return None;
        }
        a = b;
        fa = fb;
    }
    None
}

/// Level set `g = c` sampled on a uniform `u` grid in `(0, pi)`, mirrored
/// into the lower half plane. Points without a principal-branch solution
/// are omitted. `c = 0` is delegated to [`c0_curve`].
pub fn level_set(c: f64, samples: usize) -> Result<CurveSamples> {
    check_samples(samples)?;
    if !c.is_finite() {
        return Err(Error::InvalidArgument(format!("level {c} is not finite")));
    }
    if c == 0.0 {
        return c0_curve(samples);
    }
    let curve = CurveId::Cc(c);
    if (c - E).abs() <= 1e-12 {
        return Ok(CurveSamples { curve, points: vec![(BRANCH_POINT, 0.0)] });
    }
    if c > E {
        return Ok(CurveSamples { curve, points: Vec::new() });
    }

    let us: Vec<f64> = uniform(LEVEL_SET_U_MARGIN, PI - LEVEL_SET_U_MARGIN, samples).collect();
    let found: Vec<Option<(f64, f64)>> = us.iter().map(|&u| level_point(c, u)).collect();

    let mut upper = Vec::new();
    if c > 1.0 {
        // right crossing, where W0 is real: e^{c x} = 1/c
        upper.push((-c.ln() / c, 0.0));
    }
    upper.extend(found.iter().flatten().copied());
    // left crossing between the last valid u and the first invalid one
    if let Some(last) = found.iter().rposition(Option::is_some) {
        if last + 1 < us.len() {
            if let Some(p) = crossing(c, us[last], us[last + 1]) {
                upper.push(p);
            }
        }
    }
    Ok(CurveSamples { curve, points: close_by_mirror(upper) })
}

/// Real-axis crossing of the level set where `W` reaches the boundary of the
/// principal range `Re W = -u cot u`.
fn crossing(c: f64, u_lo: f64, u_hi: f64) -> Option<(f64, f64)> {
    // on the boundary, c x = -u cot u and W e^W is real
    let boundary_gap = |u: f64| {
        let x = -u / u.tan() / c;
        (c * x).exp() * (c * x * u.cos() - u * u.sin()) - x
    };
    let u = bisect(boundary_gap, u_lo, u_hi, 1e-15)?;
    let x = -u / u.tan() / c;
    if x > 0.0 {
        return None;
    }
    let g = gain_at(x, 0.0).ok()?;
    ((g - c).abs() <= LEVEL_SET_TOL).then_some((x, 0.0))
}

/// Whether `(x, y)` lies in the closed region bounded by `C0`.
pub fn s0_contains(x: f64, y: f64) -> bool {
    if !(x.is_finite() && y.is_finite()) || x > S0_BOUNDARY_TOL {
        return false;
    }
    let r = x.hypot(y);
    if r <= S0_BOUNDARY_TOL {
        return true;
    }
    let theta = y.abs().atan2(x);
    r <= (theta - FRAC_PI_2).max(0.0) + S0_BOUNDARY_TOL
}
