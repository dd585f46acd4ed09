//! Scalar root finding and maximisation on brackets.

const MAX_BISECTIONS: usize = 200;
const GOLDEN_ITERATIONS: usize = 200;

/// Bisection for a sign change of `f` on `[lo, hi]`, stopped once the
/// bracket is narrower than `tol * max(|lo|, |hi|, tiny)`. Returns `None` when
/// the endpoints do not bracket a root.
pub(crate) fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if !(flo.signum() != fhi.signum()) || flo.is_nan() || fhi.is_nan() {
        return None;
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo <= tol * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// All sign changes of `f` on `(lo, hi)` found by scanning at `step`, each
/// refined by bisection.
pub(crate) fn scan_roots<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, step: f64, tol: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if !(hi > lo) || !(step > 0.0) {
        return out;
    }
    let cells = ((hi - lo) / step).ceil().max(1.0) as usize;
    let at = |k: usize| if k == cells { hi } else { lo + (hi - lo) * k as f64 / cells as f64 };
    let mut a = at(0);
    let mut fa = f(a);
    for k in 1..=cells {
        let b = at(k);
        let fb = f(b);
        if fa == 0.0 {
            out.push(a);
        } else if fa.signum() != fb.signum() && fb != 0.0 {
            if let Some(r) = bisect(&f, a, b, tol) {
                out.push(r);
            }
        }
        a = b;
        fa = fb;
    }
    out
}

/// Golden-section search for a maximiser of a unimodal `f` on `[lo, hi]`.
pub(crate) fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..GOLDEN_ITERATIONS {
        if hi - lo <= tol * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}
