//! Delay dependence of the convergence rate of `x'(t) = A x(t - tau)`.
//!
//! Every mode `alpha` of `A` contributes the rate
//! `rho_tau = -Re W0(alpha tau) / tau = g(alpha tau) |Re alpha|`, where `g` is
//! the delay rate gain. The system rate is the minimum over modes. This module
//! locates the admissible range, the crossover delay where the rate returns
//! to its delay-free value, and the delay maximising the rate.
//!
//! The acceleration cone is the open sector `arg alpha in (3pi/4, 5pi/4)`,
//! equivalently `|Im alpha| < |Re alpha|` with `Re alpha < 0`. Its boundary
//! counts as outside.

use std::f64::consts::{E, FRAC_PI_2, PI};

use log::warn;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lambertw::{w0, BRANCH_POINT};
use crate::roots::{bisect, golden_max, scan_roots};
use crate::spectrum::Spectrum;

/// Relative tolerance deciding membership of the slowest-mode set.
pub const SLOWEST_SET_TOL: f64 = 1e-9;
/// Default relative bracket width for scalar root solves.
pub const DEFAULT_ROOT_TOL: f64 = 1e-12;
/// Radius around the branch point where the gain derivative is not evaluated.
pub const BRANCH_POINT_GUARD: f64 = 1e-12;
/// Relative agreement required between the two routes to the crossover
/// delay of a real spectrum.
pub const REAL_CROSSOVER_TOL: f64 = 1e-9;
/// Relative agreement between the real-spectrum closed form and the
/// candidate evaluation.
pub const CLOSED_FORM_TOL: f64 = 1e-8;
/// A sweep beating the candidates by more than this fraction of `rho0`
/// triggers a refinement around the sweep maximum.
pub const SWEEP_DISAGREEMENT: f64 = 1e-6;
/// Relative slack on the `e * rho0` bound.
pub const BOUND_SLACK: f64 = 1e-9;
/// Merge distance for candidate delays.
pub const CANDIDATE_MERGE_TOL: f64 = 1e-9;

const CANDIDATE_SCAN_CELLS: f64 = 2000.0;
const OPTIMUM_SWEEP_CELLS: usize = 4000;
const DECREASE_CERTIFICATE_SAMPLES: usize = 500;
const REPRESENTATIVE_MERGE_TOL: f64 = 1e-12;

/// Numerical settings shared by the analysis routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub root: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { root: DEFAULT_ROOT_TOL }
    }
}

fn check_alpha(alpha: Complex64) -> Result<()> {
    if !(alpha.re.is_finite() && alpha.im.is_finite()) {
        return Err(Error::Domain(format!("mode {alpha} is not finite")));
    }
    if !(alpha.re < 0.0) {
        return Err(Error::Domain(format!("mode {alpha} must have negative real part")));
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::Domain(format!("delay {tau} must be finite and nonnegative")));
    }
    Ok(())
}

/// Whether `arg alpha` lies strictly inside `(3pi/4, 5pi/4)`.
pub fn in_cone(alpha: Complex64) -> bool {
    alpha.re < 0.0 && alpha.im.abs() < alpha.re.abs()
}

/// Delay rate gain `g(alpha tau) = Re W0(alpha tau) / Re(alpha tau)`, with
/// `g = 1` at `tau = 0`.
pub fn delay_rate_gain(alpha: Complex64, tau: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_tau(tau)?;
    if tau == 0.0 {
        return Ok(1.0);
    }
    let z = alpha * tau;
    Ok(w0(z)?.re / z.re)
}

/// Rate contributed by one mode, `g(alpha tau) |Re alpha|`.
pub fn mode_rate(alpha: Complex64, tau: f64) -> Result<f64> {
    Ok(delay_rate_gain(alpha, tau)? * alpha.re.abs())
}

/// `d g(alpha tau) / d tau`.
pub fn gain_derivative(alpha: Complex64, tau: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Domain(format!("delay {tau} must be positive")));
    }
    let z = alpha * tau;
    if (z - BRANCH_POINT).norm() <= BRANCH_POINT_GUARD {
        return Err(Error::BranchPointSingularity);
    }
    let wv = w0(z)?;
    let (w, u) = (wv.re, wv.im);
    let num = (w * w + u * u) * w + (w * w - u * u);
    let den = (w + 1.0) * (w + 1.0) + u * u;
    Ok(-num / (den * alpha.re * tau * tau))
}

/// One-sided value of the gain derivative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SlopeLimit {
    PlusInfinity,
    MinusInfinity,
    Finite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneSidedSlopes {
    pub left: SlopeLimit,
    pub right: SlopeLimit,
}

/// Left and right limits of `dg/dtau`. At the branch point of a real mode
/// the left limit is `+inf` and the right limit `-5 e^2 |alpha| / 3`;
/// elsewhere both equal [`gain_derivative`].
pub fn gain_derivative_limits(alpha: Complex64, tau: f64) -> Result<OneSidedSlopes> {
    check_alpha(alpha)?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Domain(format!("delay {tau} must be positive")));
    }
    if (alpha * tau - BRANCH_POINT).norm() <= BRANCH_POINT_GUARD {
        return Ok(OneSidedSlopes {
            left: SlopeLimit::PlusInfinity,
            right: SlopeLimit::Finite(-5.0 * E * E * alpha.norm() / 3.0),
        });
    }
    let d = gain_derivative(alpha, tau)?;
    Ok(OneSidedSlopes { left: SlopeLimit::Finite(d), right: SlopeLimit::Finite(d) })
}

/// Per-mode critical delay `|atan(Re alpha / Im alpha)| / |alpha|`.
pub fn mode_critical_delay(alpha: Complex64) -> Result<f64> {
    check_alpha(alpha)?;
    if alpha.im == 0.0 {
        return Ok(FRAC_PI_2 / alpha.norm());
    }
    Ok((alpha.re / alpha.im).atan().abs() / alpha.norm())
}

/// System critical delay: stability holds exactly for `tau in [0, tau_bar)`.
pub fn critical_delay(s: &Spectrum) -> f64 {
    s.eigenvalues()
        .iter()
        .map(|a| mode_critical_delay(*a).expect("spectrum modes are stable"))
        .fold(f64::INFINITY, f64::min)
}

/// System rate and per-mode rates at delay `tau`, in spectrum order.
pub fn rate_of_convergence(s: &Spectrum, tau: f64) -> Result<(f64, Vec<f64>)> {
    check_tau(tau)?;
    let per_mode = s
        .eigenvalues()
        .iter()
        .map(|a| mode_rate(*a, tau))
        .collect::<Result<Vec<_>>>()?;
    let rho = per_mode.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((rho, per_mode))
}

fn system_rate(modes: &[Complex64], tau: f64) -> f64 {
    modes
        .iter()
        .map(|a| mode_rate(*a, tau).expect("validated modes"))
        .fold(f64::INFINITY, f64::min)
}

/// Index sets of the spectrum (1-based, spectrum order).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub slowest: Vec<usize>,
    pub inside: Vec<usize>,
    pub outside: Vec<usize>,
    pub can_accelerate: bool,
}

pub fn classify(s: &Spectrum) -> Classification {
    let rho0 = s.rho0();
    let mut slowest = Vec::new();
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for (i, a) in s.eigenvalues().iter().enumerate() {
        if a.re.abs() <= rho0 * (1.0 + SLOWEST_SET_TOL) {
            slowest.push(i + 1);
        }
        if in_cone(*a) {
            inside.push(i + 1);
        } else {
            outside.push(i + 1);
        }
    }
    let can_accelerate = slowest.iter().all(|i| inside.contains(i));
    Classification { slowest, inside, outside, can_accelerate }
}

/// Argument of a point on the stationary-gain curve, parametrised by the
/// argument `theta` of `W0`.
pub fn stationary_arg(theta: f64) -> f64 {
    theta - (2.0 * theta).cos() * theta.tan()
}

/// Modulus of a point on the stationary-gain curve.
pub fn stationary_radius(theta: f64) -> f64 {
    let c2 = (2.0 * theta).cos();
    -c2 / theta.cos() * (-c2).exp()
}

/// Delay at which the gain of a single mode peaks; 0 outside the cone.
pub fn mode_tau_star(alpha: Complex64) -> Result<f64> {
    mode_tau_star_with(alpha, &Tolerances::default())
}

pub fn mode_tau_star_with(alpha: Complex64, tol: &Tolerances) -> Result<f64> {
    check_alpha(alpha)?;
    if !in_cone(alpha) {
        return Ok(0.0);
    }
    if alpha.im == 0.0 {
        return Ok(1.0 / (E * alpha.norm()));
    }
    // arg alpha taken in (3pi/4, 5pi/4)
    let target = alpha.im.atan2(alpha.re).rem_euclid(2.0 * PI);
    let lo = 0.75 * PI;
    let hi = 1.25 * PI;
    let theta = bisect(|t| stationary_arg(t) - target, lo, hi, tol.root.min(1e-12))
        .ok_or_else(|| Error::NumericalFailure(format!("no stationary point for {alpha}")))?;
    Ok(stationary_radius(theta) / alpha.norm())
}

/// Root of `exp(-theta cot theta) = cos theta` in `(0, pi/2]`.
pub fn theta_tilde() -> f64 {
    let h = |t: f64| (-t / t.tan()).exp() - t.cos();
    bisect(h, 1e-6, FRAC_PI_2, 1e-15).expect("sign change on (0, pi/2]")
}

/// Real crossover point `-theta~ cot theta~` where the gain of a real mode
/// returns to 1.
pub fn x_tilde() -> f64 {
    let t = theta_tilde();
    -t / t.tan()
}

/// Largest delay with `g(alpha tau) >= 1`; 0 outside the cone.
pub fn mode_tau_tilde(alpha: Complex64) -> Result<f64> {
    mode_tau_tilde_with(alpha, &Tolerances::default())
}

pub fn mode_tau_tilde_with(alpha: Complex64, tol: &Tolerances) -> Result<f64> {
    check_alpha(alpha)?;
    if !in_cone(alpha) {
        return Ok(0.0);
    }
    if alpha.im == 0.0 {
        return Ok(-x_tilde() / alpha.norm());
    }
    let lo = mode_tau_star_with(alpha, tol)?;
    let hi = mode_critical_delay(alpha)?;
    solve_gain(alpha, 1.0, lo, hi, tol)
}

/// Root of `g(alpha tau) = target` on `(lo, hi)` where `g` decreases.
fn solve_gain(alpha: Complex64, target: f64, lo: f64, hi: f64, tol: &Tolerances) -> Result<f64> {
    let f = |t: f64| delay_rate_gain(alpha, t).expect("validated mode") - target;
    let root = bisect(f, lo, hi, tol.root)
        .ok_or_else(|| Error::NumericalFailure(format!(
            "g({alpha} tau) = {target} has no root on ({lo}, {hi})"
        )))?;
    Ok(newton_polish(alpha, target, root, lo, hi))
}

/// One Newton step, kept only if it stays in the bracket and improves the
/// residual.
fn newton_polish(alpha: Complex64, target: f64, tau: f64, lo: f64, hi: f64) -> f64 {
    let resid = |t: f64| delay_rate_gain(alpha, t).map(|g| (g - target).abs()).unwrap_or(f64::INFINITY);
    let Ok(d) = gain_derivative(alpha, tau) else { return tau };
    let Ok(g) = delay_rate_gain(alpha, tau) else { return tau };
    if d == 0.0 || !d.is_finite() {
        return tau;
    }
    let next = tau - (g - target) / d;
    if next > lo && next < hi && resid(next) < resid(tau) {
        next
    } else {
        tau
    }
}

/// Delay at which mode `alpha_i` slows to the delay-free system rate
/// `|Re alpha_1|`. Returns 0 when an out-of-cone mode already sits at that
/// rate.
pub fn mode_eta(alpha_i: Complex64, re_alpha1: f64) -> Result<f64> {
    mode_eta_with(alpha_i, re_alpha1, &Tolerances::default())
}

pub fn mode_eta_with(alpha_i: Complex64, re_alpha1: f64, tol: &Tolerances) -> Result<f64> {
    check_alpha(alpha_i)?;
    if !(re_alpha1 < 0.0) || re_alpha1.abs() > alpha_i.re.abs() {
        return Err(Error::Domain(format!(
            "mode {alpha_i} is slower than the reference rate {}",
            re_alpha1.abs()
        )));
    }
    let ratio = re_alpha1.abs() / alpha_i.re.abs();
    let tau_bar = mode_critical_delay(alpha_i)?;
    let lo = if in_cone(alpha_i) {
        mode_tau_star_with(alpha_i, tol)?
    } else {
        if ratio == 1.0 {
            return Ok(0.0);
        }
        0.0
    };
    if in_cone(alpha_i) && ratio == 1.0 {
        return mode_tau_tilde_with(alpha_i, tol);
    }
    solve_gain(alpha_i, ratio, lo, tau_bar, tol)
}

/// Distinct representatives (`Im >= 0`) of the spectrum.
fn representatives(s: &Spectrum) -> Vec<Complex64> {
    let mut reps: Vec<Complex64> = Vec::new();
    for a in s.representatives() {
        if !reps
            .iter()
            .any(|b| (a - b).norm() <= REPRESENTATIVE_MERGE_TOL * a.norm())
        {
            reps.push(a);
        }
    }
    reps
}

/// Largest delay at which the system rate equals the delay-free rate.
pub fn system_tau_tilde(s: &Spectrum) -> Result<f64> {
    system_tau_tilde_with(s, &Tolerances::default())
}

pub fn system_tau_tilde_with(s: &Spectrum, tol: &Tolerances) -> Result<f64> {
    if !classify(s).can_accelerate {
        return Err(Error::Precondition(
            "crossover delay requires every slowest mode inside the acceleration cone".into(),
        ));
    }
    let re1 = s.slowest().re;
    let mut general = f64::INFINITY;
    for a in representatives(s) {
        general = general.min(mode_eta_with(a, re1, tol)?);
    }
    if s.is_real() {
        let short = mode_tau_tilde_with(s.slowest(), tol)?
            .min(mode_eta_with(s.fastest(), re1, tol)?);
        if (short - general).abs() > REAL_CROSSOVER_TOL * general {
            return Err(Error::InvariantViolation(format!(
                "real-spectrum crossover {short} disagrees with the general value {general}"
            )));
        }
    }
    Ok(general)
}

/// Closed interval known to contain the optimal delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

pub fn tau_star_bracket(s: &Spectrum) -> Result<Interval> {
    tau_star_bracket_with(s, &Tolerances::default())
}

pub fn tau_star_bracket_with(s: &Spectrum, tol: &Tolerances) -> Result<Interval> {
    let tau_tilde = system_tau_tilde_with(s, tol)?;
    bracket_from(&mode_tau_stars(s, tol)?, tau_tilde)
}

fn mode_tau_stars(s: &Spectrum, tol: &Tolerances) -> Result<Vec<f64>> {
    s.eigenvalues().iter().map(|a| mode_tau_star_with(*a, tol)).collect()
}

fn bracket_from(stars: &[f64], tau_tilde: f64) -> Result<Interval> {
    let lo = stars.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = stars.iter().copied().fold(0.0, f64::max).min(tau_tilde);
    if !(lo <= hi) || !(lo < tau_tilde) {
        return Err(Error::InvariantViolation(format!(
            "optimal-delay bracket [{lo}, {hi}] is empty below the crossover {tau_tilde}"
        )));
    }
    Ok(Interval { lo, hi })
}

/// Candidate optimal delays: mode peaks below the crossover delay, and
/// crossings between a falling mode rate and a rising one.
pub fn tau_star_candidates(s: &Spectrum) -> Result<Vec<f64>> {
    tau_star_candidates_with(s, &Tolerances::default())
}

pub fn tau_star_candidates_with(s: &Spectrum, tol: &Tolerances) -> Result<Vec<f64>> {
    let tau_tilde = system_tau_tilde_with(s, tol)?;
    let reps = representatives(s);
    let stars: Vec<f64> = reps
        .iter()
        .map(|a| mode_tau_star_with(*a, tol))
        .collect::<Result<_>>()?;
    let min_star = stars.iter().copied().fold(f64::INFINITY, f64::min);
    let falling: Vec<usize> = (0..reps.len())
        .filter(|&i| min_star <= stars[i] && stars[i] < tau_tilde)
        .collect();
    let rising_throughout: Vec<usize> = (0..reps.len())
        .filter(|&i| in_cone(reps[i]) && stars[i] >= tau_tilde)
        .collect();

    let mut out: Vec<f64> = falling.iter().map(|&i| stars[i]).filter(|t| *t > 0.0).collect();
    let step = tau_tilde / CANDIDATE_SCAN_CELLS;
    for &j in &falling {
        let partners = falling
            .iter()
            .copied()
            .filter(|&k| k != j && stars[k] >= stars[j])
            .chain(rising_throughout.iter().copied());
        for k in partners {
            let hi = stars[k].min(tau_tilde);
            let lo = stars[j];
            let diff = |t: f64| {
                mode_rate(reps[j], t).expect("validated mode")
                    - mode_rate(reps[k], t).expect("validated mode")
            };
            out.extend(scan_roots(diff, lo, hi, step, tol.root).into_iter().filter(|t| *t > lo && *t < hi));
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() <= CANDIDATE_MERGE_TOL * b.abs().max(1.0));
    Ok(out)
}

/// How the optimum was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimumMethod {
    /// Delay cannot accelerate convergence; the optimum is `tau = 0`.
    NoAcceleration,
    /// Closed form for real spectra.
    RealClosedForm,
    /// Best candidate refined by golden-section search.
    Candidates,
    /// Dense sweep beat the candidates and was refined instead.
    SweepRefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub tau_star: f64,
    pub rho_star: f64,
    pub method: OptimumMethod,
    pub warnings: Vec<String>,
}

/// Delay maximising the system rate and the rate attained there.
pub fn optimize_rate(s: &Spectrum) -> Result<Optimum> {
    optimize_rate_with(s, &Tolerances::default())
}

pub fn optimize_rate_with(s: &Spectrum, tol: &Tolerances) -> Result<Optimum> {
    let rho0 = s.rho0();
    let modes = s.eigenvalues();
    let tau_bar = critical_delay(s);
    let mut warnings = Vec::new();

    if !classify(s).can_accelerate {
        certify_strict_decrease(modes, tau_bar)?;
        return Ok(Optimum {
            tau_star: 0.0,
            rho_star: rho0,
            method: OptimumMethod::NoAcceleration,
            warnings,
        });
    }

    let candidates = tau_star_candidates_with(s, tol)?;
    let best_candidate = candidates
        .iter()
        .map(|&t| (t, system_rate(modes, t)))
        .max_by(|a, b| a.1.total_cmp(&b.1));

    let optimum = if s.is_real() {
        let (tau_star, rho_star) = real_closed_form(s.slowest().re, s.fastest().re);
        let at_closed_form = system_rate(modes, tau_star);
        let candidate_best = best_candidate.map_or(f64::NAN, |c| c.1);
        if !((at_closed_form - rho_star).abs() <= CLOSED_FORM_TOL * rho_star)
            || !((candidate_best - rho_star).abs() <= CLOSED_FORM_TOL * rho_star)
        {
            return Err(Error::InvariantViolation(format!(
                "closed-form optimum {rho_star} disagrees with the rate at tau* ({at_closed_form}) \
                 or the best candidate ({candidate_best})"
            )));
        }
        if rho_star > E * rho0 * (1.0 + BOUND_SLACK) {
            return Err(Error::InvariantViolation(format!(
                "peak rate {rho_star} exceeds e * rho0 = {}",
                E * rho0
            )));
        }
        Optimum { tau_star, rho_star, method: OptimumMethod::RealClosedForm, warnings }
    } else {
        let tau_tilde = system_tau_tilde_with(s, tol)?;
        let (c, _) = best_candidate.ok_or_else(|| {
            Error::InvariantViolation("accelerating spectrum produced no candidate delay".into())
        })?;
        let cell = tau_tilde / CANDIDATE_SCAN_CELLS;
        let rate = |t: f64| system_rate(modes, t);
        let (mut tau_star, mut rho_star) = refine(rate, c, cell, tau_tilde, tol);
        let mut method = OptimumMethod::Candidates;

        let h = tau_tilde / OPTIMUM_SWEEP_CELLS as f64;
        let (k_best, rho_sweep) = (1..OPTIMUM_SWEEP_CELLS)
            .map(|k| (k, rate(k as f64 * h)))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty sweep");
        if rho_sweep > rho_star + SWEEP_DISAGREEMENT * rho0 {
            let (t, r) = golden_max(rate, (k_best - 1) as f64 * h, (k_best + 1) as f64 * h, tol.root);
            let (t, r) = if r >= rho_sweep { (t, r) } else { (k_best as f64 * h, rho_sweep) };
            tau_star = t;
            rho_star = r;
            method = OptimumMethod::SweepRefined;
        }
        if rho_star > E * rho0 * (1.0 + BOUND_SLACK) {
            let msg = format!(
                "peak rate {rho_star} of a complex spectrum exceeds e * rho0 = {}",
                E * rho0
            );
            warn!("{msg}");
            warnings.push(msg);
        }
        Optimum { tau_star, rho_star, method, warnings }
    };
    if !(optimum.tau_star > 0.0 && optimum.rho_star > rho0) {
        return Err(Error::InvariantViolation(format!(
            "accelerating spectrum gave tau* = {} and rho* = {} <= rho0 = {rho0}",
            optimum.tau_star, optimum.rho_star
        )));
    }
    Ok(optimum)
}

/// Golden-section refinement in the cell around a candidate, keeping the
/// candidate if the search does not improve on it.
fn refine<F: Fn(f64) -> f64>(rate: F, c: f64, cell: f64, tau_tilde: f64, tol: &Tolerances) -> (f64, f64) {
    let at_c = rate(c);
    let lo = (c - cell).max(0.0);
    let hi = (c + cell).min(tau_tilde);
    if !(hi > lo) {
        return (c, at_c);
    }
    let (t, r) = golden_max(&rate, lo, hi, tol.root);
    if r > at_c {
        (t, r)
    } else {
        (c, at_c)
    }
}

/// Optimal delay and peak rate of a real spectrum from its extreme modes.
pub fn real_closed_form(alpha1: f64, alphan: f64) -> (f64, f64) {
    let gamma = alpha1 / alphan;
    if gamma >= 1.0 {
        return (1.0 / (E * alpha1.abs()), E * alpha1.abs());
    }
    let u = gamma.acos();
    let ratio = u / (1.0 / (gamma * gamma) - 1.0).sqrt();
    (ratio / alpha1.abs() * (-ratio).exp(), ratio.exp() * alpha1.abs())
}

fn certify_strict_decrease(modes: &[Complex64], tau_bar: f64) -> Result<()> {
    let mut prev = system_rate(modes, 0.0);
    for k in 1..=DECREASE_CERTIFICATE_SAMPLES {
        let tau = tau_bar * k as f64 / DECREASE_CERTIFICATE_SAMPLES as f64;
        let rho = system_rate(modes, tau);
        if !(rho < prev) {
            return Err(Error::InvariantViolation(format!(
                "rate fails to decrease strictly at tau = {tau} ({rho} >= {prev})"
            )));
        }
        prev = rho;
    }
    Ok(())
}

/// System and per-mode rates on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateProfile {
    pub taus: Vec<f64>,
    pub rho: Vec<f64>,
    /// `per_mode_rho[i][j]`: rate of mode `i` at `taus[j]`.
    pub per_mode_rho: Vec<Vec<f64>>,
}

pub fn rate_profile(s: &Spectrum, tau_max: f64, samples: usize) -> Result<RateProfile> {
    if samples < 2 {
        return Err(Error::InvalidArgument(format!("samples must be at least 2, got {samples}")));
    }
    if !(tau_max.is_finite() && tau_max > 0.0) {
        return Err(Error::InvalidArgument(format!("tau-max must be positive, got {tau_max}")));
    }
    let taus: Vec<f64> = (0..samples)
        .map(|j| if j + 1 == samples { tau_max } else { tau_max * j as f64 / (samples - 1) as f64 })
        .collect();
    let per_mode_rho = s
        .eigenvalues()
        .iter()
        .map(|a| taus.iter().map(|t| mode_rate(*a, *t)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let rho = (0..samples)
        .map(|j| per_mode_rho.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min))
        .collect();
    Ok(RateProfile { taus, rho, per_mode_rho })
}

/// System rate of a real spectrum from its extreme modes only.
pub fn real_spectrum_rate(alpha1: f64, alphan: f64, tau: f64) -> Result<f64> {
    if !(alphan <= alpha1 && alpha1 < 0.0) {
        return Err(Error::Domain(format!(
            "extreme modes must satisfy alpha_n <= alpha_1 < 0, got {alphan}, {alpha1}"
        )));
    }
    let tau_bar = FRAC_PI_2 / alphan.abs();
    if !(tau >= 0.0 && tau < tau_bar) {
        return Err(Error::Domain(format!("delay {tau} outside [0, {tau_bar})")));
    }
    let slow = Complex64::new(alpha1, 0.0);
    let fast = Complex64::new(alphan, 0.0);
    let star_n = 1.0 / (E * alphan.abs());
    let star_1 = 1.0 / (E * alpha1.abs());
    if tau < star_n {
        mode_rate(slow, tau)
    } else if tau <= star_1 {
        Ok(mode_rate(slow, tau)?.min(mode_rate(fast, tau)?))
    } else {
        mode_rate(fast, tau)
    }
}

/// Per-mode delay quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeAnalysis {
    pub alpha: Complex64,
    pub tau_bar_i: f64,
    pub tau_star_i: f64,
    pub tau_tilde_i: f64,
    pub eta_i: f64,
    pub in_cone: bool,
}

pub fn analyze_mode(alpha: Complex64, re_alpha1: f64, tol: &Tolerances) -> Result<ModeAnalysis> {
    Ok(ModeAnalysis {
        alpha,
        tau_bar_i: mode_critical_delay(alpha)?,
        tau_star_i: mode_tau_star_with(alpha, tol)?,
        tau_tilde_i: mode_tau_tilde_with(alpha, tol)?,
        eta_i: mode_eta_with(alpha, re_alpha1, tol)?,
        in_cone: in_cone(alpha),
    })
}

/// Whole-system delay analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemDelayAnalysis {
    pub tau_bar: f64,
    pub rho0: f64,
    pub classification: Classification,
    pub tau_tilde: f64,
    pub tau_star_bracket: Option<Interval>,
    pub tau_star: f64,
    pub rho_star: f64,
    pub method: OptimumMethod,
    pub candidates: Vec<f64>,
    pub modes: Vec<ModeAnalysis>,
    pub warnings: Vec<String>,
}

pub fn analyze(s: &Spectrum) -> Result<SystemDelayAnalysis> {
    analyze_with(s, &Tolerances::default())
}

pub fn analyze_with(s: &Spectrum, tol: &Tolerances) -> Result<SystemDelayAnalysis> {
    let re1 = s.slowest().re;
    let modes = s
        .eigenvalues()
        .iter()
        .map(|a| analyze_mode(*a, re1, tol))
        .collect::<Result<Vec<_>>>()?;
    let classification = classify(s);
    let optimum = optimize_rate_with(s, tol)?;
    let (tau_tilde, bracket, candidates) = if classification.can_accelerate {
        let tau_tilde = system_tau_tilde_with(s, tol)?;
        let stars: Vec<f64> = modes.iter().map(|m| m.tau_star_i).collect();
        (tau_tilde, Some(bracket_from(&stars, tau_tilde)?), tau_star_candidates_with(s, tol)?)
    } else {
        (0.0, None, Vec::new())
    };
    Ok(SystemDelayAnalysis {
        tau_bar: critical_delay(s),
        rho0: s.rho0(),
        classification,
        tau_tilde,
        tau_star_bracket: bracket,
        tau_star: optimum.tau_star,
        rho_star: optimum.rho_star,
        method: optimum.method,
        candidates,
        modes,
        warnings: optimum.warnings,
    })
}
