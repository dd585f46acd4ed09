//! Acceptance suite: one test per criterion, each printing a single
//! `PASS`/`FAIL` line to stderr (uncaptured) with the measured values.
//!
//! Tolerances are pinned below. A clause listed in `KNOWN_UNATTAINABLE` is
//! reported as FAIL but does not fail the harness; its test instead pins the
//! independently derived value that contradicts the stated target.

mod common;

use std::f64::consts::{E, FRAC_PI_2};
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use common::*;
use delayrate::consensus::{consensus_run, load_digraph};
use delayrate::curves::{c0_curve, gain_at, lambda_curve, level_set};
use delayrate::dde_sim::{estimate_decay_rate, simulate, PreShape};
use delayrate::delay_analysis::*;
use delayrate::lambertw::{residual, w0, BRANCH_POINT};
use delayrate::spectrum::{spectrum_from_list, Spectrum};
use delayrate::Complex64;
use rand::Rng;

const LAMBERT_IDENTITY_TOL: f64 = 1e-10;
const LAMBERT_RESIDUAL_TOL: f64 = 1e-12;
const LAMBERT_GRID_MIN_POINTS: usize = 10_000;
const LAMBERT_RUNTIME_S: f64 = 1.0;
const CROSSOVER_TOL: f64 = 1e-4;
const THETA_TILDE: f64 = 1.01125;
const X_TILDE: f64 = -0.63336;
const REAL_OPTIMUM_TOL: f64 = 1e-9;
const CASE_TOL: f64 = 0.01;
const RATIO_TOL: f64 = 0.05;
const DECREASE_GRID: usize = 500;
const ORACLE_TOL: f64 = 1e-6;
const ORACLE_PAIRS: usize = 20;
const ORACLE_RUNTIME_S: f64 = 30.0;
const ACCELERATION_MARGIN: f64 = 1e-6;
const SWEEP_POINTS: usize = 5000;
const REDUCTION_TOL: f64 = 1e-12;
const BOUND_SLACK: f64 = 1e-9;
const NEAR_DOUBLE_RATIO: f64 = 0.999;
const NEAR_DOUBLE_MIN_GAIN: f64 = 2.70;
const SIMULATION_REL_TOL: f64 = 0.05;
const CONSENSUS_MIN_SPEEDUP: f64 = 1.8;
const LAMBDA_SLOPE_TOL: f64 = 1e-6;
const C0_GAIN_TOL: f64 = 1e-8;

/// Clauses whose stated target contradicts an independent computation; see
/// the test of the named criterion for the pinned value.
const KNOWN_UNATTAINABLE: &[(u8, &str)] = &[(5, "tau_bar")];

struct Report {
    id: u8,
    title: &'static str,
    clauses: Vec<(String, bool, String)>,
}

impl Report {
    fn new(id: u8, title: &'static str) -> Self {
        Self { id, title, clauses: Vec::new() }
    }

    fn check(&mut self, name: &str, ok: bool, detail: String) {
        self.clauses.push((name.to_string(), ok, detail));
    }

    fn near(&mut self, name: &str, measured: f64, target: f64, tol: f64) {
        let dev = (measured - target).abs();
        let detail = if tol < 1e-6 {
            format!("{measured:.12} (|d| {dev:.1e} <= {tol:e})")
        } else {
            format!("{measured:.6} vs {target} ± {tol}")
        };
        self.check(name, dev <= tol, detail);
    }

    fn finish(self) {
        let failed: Vec<&(String, bool, String)> = self.clauses.iter().filter(|c| !c.1).collect();
        let verdict = if failed.is_empty() { "PASS" } else { "FAIL" };
        let shown: Vec<String> = if failed.is_empty() {
            self.clauses.iter().map(|(n, _, d)| format!("{n} {d}")).collect()
        } else {
            failed.iter().map(|(n, _, d)| format!("{n} {d}")).collect()
        };
        let line = format!("{verdict} criterion {:>2}: {} [{}]", self.id, self.title, shown.join("; "));
        let _ = writeln!(std::io::stderr().lock(), "{line}");
        let unexpected: Vec<&str> = failed
            .iter()
            .map(|c| c.0.as_str())
            .filter(|n| !KNOWN_UNATTAINABLE.contains(&(self.id, *n)))
            .collect();
        assert!(unexpected.is_empty(), "{line}");
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn case_i() -> Spectrum {
    spectrum_from_list(&[c(-1.5, 0.0), c(-1.5, 0.0), c(-2.0, 0.0), c(-2.5, 0.0)], false).unwrap()
}

fn case_ii() -> Spectrum {
    spectrum_from_list(&[c(-0.69, 0.95), c(-0.69, -0.95), c(-1.80, 0.58), c(-1.80, -0.58)], false).unwrap()
}

fn case_iii() -> Spectrum {
    spectrum_from_list(&[c(-1.05, 0.0), c(-1.47, 0.18), c(-1.47, -0.18), c(-1.70, 0.0)], false).unwrap()
}

#[test]
fn criterion_01_lambert_identities() {
    let mut r = Report::new(1, "Lambert W identities and round trip");
    let start = Instant::now();
    r.near("W0(0)", w0(c(0.0, 0.0)).unwrap().norm(), 0.0, LAMBERT_IDENTITY_TOL);
    let wb = w0(c(BRANCH_POINT, 0.0)).unwrap();
    r.near("W0(-1/e)", (wb - c(-1.0, 0.0)).norm(), 0.0, LAMBERT_IDENTITY_TOL);
    let side = 120;
    let (mut points, mut worst) = (0usize, 0.0f64);
    for i in 0..side {
        for j in 0..side {
            let z = c(-10.0 + 20.0 * i as f64 / (side - 1) as f64, -10.0 + 20.0 * j as f64 / (side - 1) as f64);
            if z.norm() > 10.0 {
                continue;
            }
            let w = w0(z).unwrap();
            worst = worst.max(residual(w, z) / z.norm().max(1.0));
            points += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    r.check("grid", points >= LAMBERT_GRID_MIN_POINTS, format!("{points} points"));
    r.check("residual", worst <= LAMBERT_RESIDUAL_TOL, format!("worst {worst:.2e} <= {LAMBERT_RESIDUAL_TOL:e}"));
    r.check("runtime", elapsed < LAMBERT_RUNTIME_S, format!("{elapsed:.3} s"));
    r.finish();
}

#[test]
fn criterion_02_crossover_constants() {
    let mut r = Report::new(2, "crossover argument and abscissa");
    r.near("theta_tilde", theta_tilde(), THETA_TILDE, CROSSOVER_TOL);
    r.near("x_tilde", x_tilde(), X_TILDE, CROSSOVER_TOL);
    r.finish();
}

#[test]
fn criterion_03_real_mode_optimum() {
    let mut r = Report::new(3, "real-mode optimum of the gain");
    let alpha = c(-1.0, 0.0);
    let tau = mode_tau_star(alpha).unwrap();
    r.near("tau_star", tau, 1.0 / E, REAL_OPTIMUM_TOL);
    r.near("max gain", delay_rate_gain(alpha, tau).unwrap(), E, REAL_OPTIMUM_TOL);
    // a dense sweep never beats the reported maximum
    let swept = (1..20_000)
        .map(|k| delay_rate_gain(alpha, k as f64 * 1e-4).unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    r.check("sweep", swept <= E + REAL_OPTIMUM_TOL, format!("max {swept:.12} at step 1e-4"));
    r.finish();
}

#[test]
fn criterion_04_case_i() {
    let mut r = Report::new(4, "Case I (real spectrum)");
    let a = analyze(&case_i()).unwrap();
    r.near("tau_bar", a.tau_bar, 0.63, CASE_TOL);
    r.near("tau_tilde", a.tau_tilde, 0.32, CASE_TOL);
    r.near("tau_star", a.tau_star, 0.23, CASE_TOL);
    r.check(
        "closed form",
        a.method == OptimumMethod::RealClosedForm,
        format!("{:?}", a.method),
    );
    r.near("rho_star/rho0", a.rho_star / a.rho0, 1.98, RATIO_TOL);
    r.finish();
}

#[test]
fn criterion_05_case_ii() {
    let mut r = Report::new(5, "Case II (no acceleration)");
    let s = case_ii();
    let a = analyze(&s).unwrap();
    r.near("tau_bar", a.tau_bar, 0.51, CASE_TOL);
    r.check("can_accelerate", !a.classification.can_accelerate, format!("{}", a.classification.can_accelerate));
    let p = rate_profile(&s, a.tau_bar, DECREASE_GRID).unwrap();
    let decreasing = p.rho.windows(2).all(|w| w[1] < w[0]);
    r.check("strictly decreasing", decreasing, format!("{DECREASE_GRID}-point grid"));

    // The stated 0.51 is unattainable for this spectrum: the critical delay of
    // the slower pair is |atan(Re/Im)| / |alpha|, and the rate is still
    // positive at 0.51 (checked without Lambert W by the rightmost-root
    // oracle).
    let pair = c(-0.69, 0.95);
    let derived = (0.69f64 / 0.95).atan() / pair.norm();
    assert!((a.tau_bar - derived).abs() < 1e-15);
    assert!((a.tau_bar - 0.5350).abs() < 1e-4);
    assert!(rightmost_root_re(pair, 0.51) < -0.02);
    r.finish();
}

#[test]
fn criterion_06_case_iii() {
    let mut r = Report::new(6, "Case III (complex spectrum)");
    let a = analyze(&case_iii()).unwrap();
    r.near("tau_bar", a.tau_bar, 0.92, CASE_TOL);
    r.near("tau_tilde", a.tau_tilde, 0.46, CASE_TOL);
    r.check(
        "tau_star in [0.21, 0.35]",
        (0.21..=0.35).contains(&a.tau_star),
        format!("{:.6}", a.tau_star),
    );
    r.near("rho_star/rho0", a.rho_star / a.rho0, 1.92, RATIO_TOL);
    r.near("eta_4", a.modes[3].eta_i, 0.47, CASE_TOL);
    r.near("tau_star_1", a.modes[0].tau_star_i, 0.35, CASE_TOL);
    r.near("tau_star_4", a.modes[3].tau_star_i, 0.21, CASE_TOL);
    r.finish();
}

#[test]
fn criterion_07_oracle_equivalence() {
    let mut r = Report::new(7, "Lambert rate vs rightmost-root oracle");
    let start = Instant::now();
    let mut rng = rng(6);
    let mut worst = 0.0f64;
    for _ in 0..ORACLE_PAIRS {
        let alpha = random_alpha(&mut rng);
        let alpha = if rng.gen_bool(0.5) { alpha } else { alpha.conj() };
        let tau = mode_critical_delay(alpha).unwrap() * rng.gen_range(0.05..0.95);
        let oracle = -rightmost_root_re(alpha, tau);
        worst = worst.max((oracle - mode_rate(alpha, tau).unwrap()).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    r.check("agreement", worst <= ORACLE_TOL, format!("worst {worst:.2e} over {ORACLE_PAIRS} pairs"));
    r.check("runtime", elapsed < ORACLE_RUNTIME_S, format!("{elapsed:.2} s"));
    r.finish();
}

#[test]
fn criterion_08_acceleration_condition() {
    let mut r = Report::new(8, "acceleration iff slowest modes in cone");
    let mut rng = rng(3);
    let mut counterexamples = 0;
    let mut accelerating = 0;
    for _ in 0..200 {
        let s = random_spectrum(&mut rng, 6);
        let tau_bar = critical_delay(&s);
        let swept = (1..SWEEP_POINTS)
            .map(|k| rate_of_convergence(&s, tau_bar * k as f64 / SWEEP_POINTS as f64).unwrap().0)
            .fold(f64::NEG_INFINITY, f64::max);
        let sweep_says = swept > s.rho0() + ACCELERATION_MARGIN;
        accelerating += usize::from(sweep_says);
        if sweep_says != classify(&s).can_accelerate {
            counterexamples += 1;
        }
    }
    r.check(
        "counterexamples",
        counterexamples == 0,
        format!("{counterexamples} of 200 ({accelerating} accelerate)"),
    );
    r.finish();
}

#[test]
fn criterion_09_real_reduction() {
    let mut r = Report::new(9, "real spectrum depends on extreme modes only");
    let mut rng = rng(5);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..=8);
        let values: Vec<Complex64> = (0..n).map(|_| c(-rng.gen_range(0.1..5.0), 0.0)).collect();
        let s = spectrum_from_list(&values, false).unwrap();
        let (a1, an) = (s.slowest().re, s.fastest().re);
        let tau_bar = critical_delay(&s);
        for k in 0..20 {
            let tau = tau_bar * k as f64 / 20.0;
            let full = rate_of_convergence(&s, tau).unwrap().0;
            let reduced = real_spectrum_rate(a1, an, tau).unwrap();
            worst = worst.max((full - reduced).abs() / full.abs().max(1.0));
        }
    }
    r.check("agreement", worst <= REDUCTION_TOL, format!("worst {worst:.2e} over 100 x 20"));
    r.finish();
}

#[test]
fn criterion_10_ultimate_bound() {
    let mut r = Report::new(10, "optimum bounded by e rho0");
    let mut rng = rng(10);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let s = random_spectrum(&mut rng, 6);
        let opt = optimize_rate(&s).unwrap();
        worst = worst.max(opt.rho_star / (E * s.rho0()));
    }
    r.check("bound", worst <= 1.0 + BOUND_SLACK, format!("max rho*/(e rho0) {worst:.9}"));
    let s = spectrum_from_list(&[c(-NEAR_DOUBLE_RATIO, 0.0), c(-1.0, 0.0)], false).unwrap();
    let opt = optimize_rate(&s).unwrap();
    let gain = opt.rho_star / s.rho0();
    r.check("ratio 0.999", gain >= NEAR_DOUBLE_MIN_GAIN, format!("rho*/rho0 {gain:.5}"));
    r.finish();
}

#[test]
fn criterion_11_simulation() {
    let mut r = Report::new(11, "simulation agrees with analysis");
    let mut rng = rng(22);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let n = rng.gen_range(1..=4);
        let values = random_values(&mut rng, n);
        let (m, spread) = similar_matrix(&mut rng, &values);
        let s = spectrum_from_list(&values, false).unwrap();
        let tau_bar = critical_delay(&s);
        for _ in 0..3 {
            let tau = tau_bar * rng.gen_range(0.1..0.9);
            let analytic = rate_of_convergence(&s, tau).unwrap().0;
            let t = simulate(&m, tau, &PreShape::Constant(spread.clone()), 30.0 / analytic, 200).unwrap();
            let empirical = estimate_decay_rate(&t, 0.5, None).unwrap();
            worst = worst.max((empirical - analytic).abs() / analytic);
        }
    }
    r.check("10 x 3 rates", worst <= SIMULATION_REL_TOL, format!("worst relative error {worst:.4}"));

    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/case_i_digraph.json");
    let g = load_digraph(&std::fs::read_to_string(path).unwrap()).unwrap();
    let refs = [1.0, 2.0, 3.0, 4.0, 5.0];
    let (_, r0) = consensus_run(&g, &refs, 0.0, None).unwrap();
    let (_, r1) = consensus_run(&g, &refs, 0.23, None).unwrap();
    let speedup = r1.empirical_rate.unwrap() / r0.empirical_rate.unwrap();
    r.check("Case I speedup", speedup >= CONSENSUS_MIN_SPEEDUP, format!("{speedup:.4}"));
    r.finish();
}

#[test]
fn criterion_12_curves() {
    let mut r = Report::new(12, "stationary curve, zero level, unit level");
    let lambda = lambda_curve(501).unwrap();
    let worst_slope = lambda
        .points
        .iter()
        .filter(|&&(x, y)| x.hypot(y) > 1e-9 && (x, y) != (BRANCH_POINT, 0.0))
        .map(|&(x, y)| {
            let p = c(x, y);
            gain_derivative(p / p.norm(), p.norm()).unwrap().abs()
        })
        .fold(0.0f64, f64::max);
    r.check("Lambda", worst_slope <= LAMBDA_SLOPE_TOL, format!("max |dg/dtau| {worst_slope:.2e}"));
    let c0 = c0_curve(1001).unwrap();
    let worst_gain = c0
        .points
        .iter()
        .filter(|&&(x, y)| x.hypot(y) > 1e-9)
        .map(|&(x, y)| gain_at(x, y).unwrap().abs())
        .fold(0.0f64, f64::max);
    r.check("C0", worst_gain <= C0_GAIN_TOL, format!("max |g| {worst_gain:.2e}"));
    r.check(
        "C0 endpoints",
        c0.points.first() == Some(&(0.0, 0.0)) && c0.points.contains(&(-FRAC_PI_2, 0.0)),
        "(0,0) and (-pi/2,0)".into(),
    );
    let crossing = level_set(1.0, 400)
        .unwrap()
        .points
        .iter()
        .filter(|p| p.1 == 0.0)
        .map(|p| p.0)
        .fold(f64::INFINITY, f64::min);
    r.near("C1 crossing", crossing, X_TILDE, CROSSOVER_TOL);
    r.finish();
}
