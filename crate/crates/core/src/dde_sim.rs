//! Time-domain integration of `x'(t) = A x(t - tau)` by the method of steps.
//!
//! The step is `h = tau / N`. Because the right-hand side depends only on
//! the delayed state, the classical RK4 stages reduce to evaluations of
//! `A x(t - tau)` at the step start, midpoint and end. The delayed state at
//! a grid point is a stored state (or the preshape); at a midpoint it comes
//! from the cubic Hermite interpolant of the stored states and derivatives,
//! which keeps the scheme fourth order.

use std::io::Write;

use serde::Serialize;

use crate::delay_analysis::critical_delay;
use crate::error::{Error, Result};
use crate::spectrum::{eigenvalues, SystemMatrix};

/// Smallest accepted number of steps per delay interval.
pub const MIN_STEPS_PER_DELAY: usize = 4;
/// Norms at or below this value make the decay fit unreliable.
pub const UNDERFLOW_NORM: f64 = 1e-300;
/// Minimum number of tail samples for a decay fit.
pub const MIN_TAIL_SAMPLES: usize = 10;
/// Largest accepted RMS residual of the log-norm fit.
pub const MAX_FIT_RMS: f64 = 0.5;

/// History of the state on `[-tau, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub enum PreShape {
    Constant(Vec<f64>),
    /// Piecewise-linear interpolation of samples on a strictly increasing
    /// time grid covering `[-tau, 0]`.
    Sampled { times: Vec<f64>, values: Vec<Vec<f64>> },
}

impl PreShape {
    fn dimension(&self) -> usize {
        match self {
            PreShape::Constant(v) => v.len(),
            PreShape::Sampled { values, .. } => values.first().map_or(0, Vec::len),
        }
    }

    fn validate(&self, n: usize, tau: f64) -> Result<()> {
        if self.dimension() != n {
            return Err(Error::Validation(format!(
                "preshape has dimension {}, matrix has order {n}",
                self.dimension()
            )));
        }
        match self {
            PreShape::Constant(v) => {
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Validation("preshape is not finite".into()));
                }
            }
            PreShape::Sampled { times, values } => {
                if times.len() != values.len() || times.is_empty() {
                    return Err(Error::Validation(
                        "sampled preshape needs one vector per time".into(),
                    ));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Validation(
                        "sampled preshape times must increase strictly".into(),
                    ));
                }
                if !(times[0] <= -tau && *times.last().expect("nonempty") >= 0.0) {
                    return Err(Error::Validation(format!(
                        "sampled preshape must cover [{}, 0]",
                        -tau
                    )));
                }
                if values.iter().any(|v| v.len() != n || v.iter().any(|x| !x.is_finite())) {
                    return Err(Error::Validation("sampled preshape has a bad vector".into()));
                }
            }
        }
        Ok(())
    }

    /// `phi(t)` for `t in [-tau, 0]`.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        match self {
            PreShape::Constant(v) => v.clone(),
            PreShape::Sampled { times, values } => {
                let k = times.partition_point(|&s| s <= t);
                if k == 0 {
                    return values[0].clone();
                }
                if k == times.len() {
                    return values[k - 1].clone();
                }
                let (t0, t1) = (times[k - 1], times[k]);
                let s = (t - t0) / (t1 - t0);
                values[k - 1]
                    .iter()
                    .zip(&values[k])
                    .map(|(a, b)| a + s * (b - a))
                    .collect()
            }
        }
    }
}

/// Sampled solution on a uniform grid starting at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub tau: f64,
    pub steps_per_delay: usize,
    pub dimension: usize,
    /// Set when the delay is not below the critical delay or the matrix is
    /// not Hurwitz; the run is then not expected to decay.
    pub warning: Option<String>,
}

impl Trajectory {
    /// CSV with header `t,x1,...,xn` and 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=self.dimension).map(|i| format!("x{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (t, x) in self.times.iter().zip(&self.states) {
            write!(out, "{}", fmt17(*t))?;
            for v in x {
                write!(out, ",{}", fmt17(*v))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Shortest round-trip representation is not used: every value gets
/// exactly 17 significant digits for stable column widths.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Horizon long enough for a stable decay fit: `max(20 / rho0, 10 tau)`.
pub fn default_horizon(rho0: f64, tau: f64) -> f64 {
    (20.0 / rho0).max(10.0 * tau)
}

fn stability_warning(m: &SystemMatrix, tau: f64) -> Option<String> {
    match eigenvalues(m) {
        Ok(s) => {
            let tau_bar = critical_delay(&s);
            (tau >= tau_bar).then(|| {
                format!("delay {tau} is not below the critical delay {tau_bar}; the solution does not decay")
            })
        }
        Err(Error::NotHurwitz { value }) => {
            Some(format!("matrix is not Hurwitz (eigenvalue {value}); the solution does not decay"))
        }
        Err(e) => Some(format!("stability could not be verified: {e}")),
    }
}

/// Integrate `x'(t) = A x(t - tau)` from the preshape `phi` up to `horizon`.
/// `tau = 0` integrates the undelayed system with the same RK4 scheme.
pub fn simulate(
    m: &SystemMatrix,
    tau: f64,
    phi: &PreShape,
    horizon: f64,
    steps_per_delay: usize,
) -> Result<Trajectory> {
    let n = m.order();
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("delay {tau} must be nonnegative")));
    }
    if !(horizon.is_finite() && horizon > 0.0 && horizon >= tau) {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} must be positive and at least the delay {tau}"
        )));
    }
    if steps_per_delay < MIN_STEPS_PER_DELAY {
        return Err(Error::InvalidArgument(format!(
            "steps per delay must be at least {MIN_STEPS_PER_DELAY}, got {steps_per_delay}"
        )));
    }
    phi.validate(n, tau)?;
    integrate(m, tau, phi, horizon, steps_per_delay, stability_warning(m, tau))
}

/// [`simulate`] with a caller-supplied warning, for dynamics whose stability
/// is not judged by the spectrum of `m` alone. Arguments are assumed checked.
pub(crate) fn integrate(
    m: &SystemMatrix,
    tau: f64,
    phi: &PreShape,
    horizon: f64,
    steps_per_delay: usize,
    warning: Option<String>,
) -> Result<Trajectory> {
    let n = m.order();
    if tau == 0.0 {
        return simulate_undelayed(m, phi.eval(0.0), horizon, steps_per_delay, warning);
    }

    let big_n = steps_per_delay;
    let h = tau / big_n as f64;
    let steps = (horizon / h - 1e-9).ceil() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    // derivs[j] = x'(t_j) = A x(t_j - tau)
    let mut derivs: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let mut buf = vec![0.0; n];

    let apply = |x: &[f64], buf: &mut Vec<f64>| {
        m.mul_vec(x, buf);
        buf.clone()
    };

    times.push(0.0);
    states.push(phi.eval(0.0));
    derivs.push(apply(&phi.eval(-tau), &mut buf));

    for k in 0..steps {
        let t = k as f64 * h;
        let (f_mid, f_end) = if k + 1 < big_n {
            let mid = phi.eval(t + 0.5 * h - tau);
            let end = phi.eval(t + h - tau);
            (apply(&mid, &mut buf), apply(&end, &mut buf))
        } else if k + 1 == big_n {
            // the step end reads x(0) from the stored state
            let mid = phi.eval(t + 0.5 * h - tau);
            (apply(&mid, &mut buf), apply(&states[0], &mut buf))
        } else {
            let j = k - big_n;
            let mid = hermite_mid(&states[j], &states[j + 1], &derivs[j], &derivs[j + 1], h);
            (apply(&mid, &mut buf), apply(&states[j + 1], &mut buf))
        };
        let f_start = &derivs[k];
        let x = &states[k];
        let next: Vec<f64> = (0..n)
            .map(|i| x[i] + h / 6.0 * (f_start[i] + 4.0 * f_mid[i] + f_end[i]))
            .collect();
        times.push((k + 1) as f64 * h);
        states.push(next);
        derivs.push(f_end);
    }
    Ok(Trajectory { times, states, tau, steps_per_delay, dimension: n, warning })
}

/// Cubic Hermite interpolant at the midpoint of a step of length `h`.
fn hermite_mid(x0: &[f64], x1: &[f64], d0: &[f64], d1: &[f64], h: f64) -> Vec<f64> {
    (0..x0.len())
        .map(|i| 0.5 * (x0[i] + x1[i]) + h / 8.0 * (d0[i] - d1[i]))
        .collect()
}

fn simulate_undelayed(
    m: &SystemMatrix,
    x0: Vec<f64>,
    horizon: f64,
    steps_per_unit: usize,
    warning: Option<String>,
) -> Result<Trajectory> {
    let n = m.order();
    let scale = m.frobenius_norm().max(1.0 / horizon);
    let h_target = 1.0 / (scale * steps_per_unit as f64);
    let steps = (horizon / h_target).ceil() as usize;
    let h = horizon / steps as f64;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(x0);
    let f = |x: &[f64]| {
        let mut y = vec![0.0; n];
        m.mul_vec(x, &mut y);
        y
    };
    let axpy = |x: &[f64], a: f64, d: &[f64]| -> Vec<f64> { x.iter().zip(d).map(|(u, v)| u + a * v).collect() };
    for k in 0..steps {
        let x = &states[k];
        let k1 = f(x);
        let k2 = f(&axpy(x, 0.5 * h, &k1));
        let k3 = f(&axpy(x, 0.5 * h, &k2));
        let k4 = f(&axpy(x, h, &k3));
        let next = (0..n)
            .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        times.push((k + 1) as f64 * h);
        states.push(next);
    }
    Ok(Trajectory { times, states, tau: 0.0, steps_per_delay: steps_per_unit, dimension: n, warning })
}

/// Least-squares slope of `ln ||x(t) - offset||` over the trailing
/// `tail_fraction` of the horizon, negated. Oscillating norms are fitted
/// through their local maxima; when the tail holds fewer than three, the
/// window is extended back to the last three maxima of the run.
pub fn estimate_decay_rate(t: &Trajectory, tail_fraction: f64, offset: Option<&[f64]>) -> Result<f64> {
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "tail fraction {tail_fraction} must lie in (0, 1)"
        )));
    }
    if let Some(o) = offset {
        if o.len() != t.dimension {
            return Err(Error::InvalidArgument("offset has the wrong dimension".into()));
        }
    }
    let norms: Vec<f64> = t
        .states
        .iter()
        .map(|x| {
            x.iter()
                .enumerate()
                .map(|(i, v)| v - offset.map_or(0.0, |o| o[i]))
                .map(|d| d * d)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    fit_decay_rate(&t.times, &norms, t.tau, tail_fraction)
}

/// Decay-rate fit of a precomputed norm series; see [`estimate_decay_rate`].
/// Maxima before `t = tau` are ignored.
pub fn fit_decay_rate(times: &[f64], norms: &[f64], tau: f64, tail_fraction: f64) -> Result<f64> {
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "tail fraction {tail_fraction} must lie in (0, 1)"
        )));
    }
    if times.len() != norms.len() {
        return Err(Error::InvalidArgument("times and norms differ in length".into()));
    }
    let end = *times.last().ok_or_else(|| Error::EstimationUnreliable("empty trajectory".into()))?;
    let start = end * (1.0 - tail_fraction);
    let first = times.partition_point(|&s| s < start);
    if times.len() - first < MIN_TAIL_SAMPLES {
        return Err(Error::EstimationUnreliable(format!(
            "tail holds {} samples, need {MIN_TAIL_SAMPLES}",
            times.len() - first
        )));
    }
    if let Some(k) = (first..norms.len()).find(|&k| !(norms[k] > UNDERFLOW_NORM) || !norms[k].is_finite()) {
        return Err(Error::EstimationUnreliable(format!(
            "norm {} at t = {} underflows or is not finite",
            norms[k], times[k]
        )));
    }

    let maxima: Vec<usize> = (1..norms.len() - 1)
        .filter(|&k| norms[k] > norms[k - 1] && norms[k] >= norms[k + 1] && times[k] >= tau)
        .collect();
    let in_tail: Vec<usize> = maxima.iter().copied().filter(|&k| k >= first).collect();
    let points: Vec<usize> = if in_tail.len() >= 3 {
        in_tail
    } else if maxima.len() >= 3 && !in_tail.is_empty() {
        maxima[maxima.len() - 3..].to_vec()
    } else {
        (first..norms.len()).collect()
    };
    if let Some(&k) = points.iter().find(|&&k| !(norms[k] > UNDERFLOW_NORM)) {
        return Err(Error::EstimationUnreliable(format!("norm underflows at t = {}", times[k])));
    }

    let xs: Vec<f64> = points.iter().map(|&k| times[k]).collect();
    let ys: Vec<f64> = points.iter().map(|&k| norms[k].ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::EstimationUnreliable("fit window has zero width".into()));
    }
    let slope = sxy / sxx;
    let rms = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (my + slope * (x - mx));
            r * r
        })
        .sum::<f64>()
        / m)
        .sqrt();
    if !(rms <= MAX_FIT_RMS) {
        return Err(Error::EstimationUnreliable(format!(
            "log-norm fit residual {rms:.3} exceeds {MAX_FIT_RMS}"
        )));
    }
    Ok(-slope)
}
