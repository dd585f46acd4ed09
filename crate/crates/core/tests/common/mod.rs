//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use delayrate::spectrum::{spectrum_from_list, Spectrum, SystemMatrix};
use delayrate::Complex64;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_alpha(rng: &mut ChaCha8Rng) -> Complex64 {
    let r: f64 = rng.gen_range(0.1..5.0);
    let theta: f64 = rng.gen_range(PI / 2.0 + 1e-3..PI);
    Complex64::from_polar(r, theta)
}

pub fn random_spectrum(rng: &mut ChaCha8Rng, max_n: usize) -> Spectrum {
    let n = rng.gen_range(1..=max_n);
    let mut values = Vec::new();
    while values.len() < n {
        let alpha = random_alpha(rng);
        if values.len() + 2 <= n && rng.gen_bool(0.5) {
            values.push(alpha);
            values.push(alpha.conj());
        } else {
            values.push(Complex64::new(alpha.re, 0.0));
        }
    }
    spectrum_from_list(&values, false).unwrap()
}

pub fn random_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    let mut values = Vec::new();
    while values.len() < n {
        let r: f64 = rng.gen_range(0.3..3.0);
        let theta: f64 = rng.gen_range(PI / 2.0 + 0.05..PI);
        let alpha = Complex64::from_polar(r, theta);
        if values.len() + 2 <= n && rng.gen_bool(0.5) {
            values.push(alpha);
            values.push(alpha.conj());
        } else {
            values.push(Complex64::new(alpha.re, 0.0));
        }
    }
    values
}

pub fn rotation_blocks(values: &[Complex64]) -> DMatrix<f64> {
    let n = values.len();
    let mut d = DMatrix::zeros(n, n);
    let mut i = 0;
    while i < n {
        let v = values[i];
        if v.im == 0.0 {
            d[(i, i)] = v.re;
            i += 1;
        } else {
            d[(i, i)] = v.re;
            d[(i + 1, i + 1)] = v.re;
            d[(i, i + 1)] = v.im;
            d[(i + 1, i)] = -v.im;
            i += 2;
        }
    }
    d
}

pub fn to_matrix(a: &DMatrix<f64>) -> SystemMatrix {
    let n = a.nrows();
    let entries = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| a[(i, j)]).collect();
    SystemMatrix::new(n, entries).unwrap()
}

/// `Q D Q^{-1}` with a random well-conditioned `Q` and a block-diagonal `D`
/// carrying the given spectrum, plus `Q 1`, a state that excites every
/// eigen-direction with unit weight.
pub fn similar_matrix(rng: &mut ChaCha8Rng, values: &[Complex64]) -> (SystemMatrix, Vec<f64>) {
    let n = values.len();
    let q = DMatrix::from_fn(n, n, |i, j| rng.gen_range(-1.0..1.0) + if i == j { n as f64 } else { 0.0 });
    let qi = q.clone().try_inverse().unwrap();
    let spread = (0..n).map(|i| q.row(i).sum()).collect();
    (to_matrix(&(&q * rotation_blocks(values) * qi)), spread)
}

/// Rightmost root of `s - alpha e^{-s tau}` found without Lambert W: a grid
/// scan of `|h|` over a box, Newton from the best grid points, and the
/// rightmost converged root.
pub fn rightmost_root_re(alpha: Complex64, tau: f64) -> f64 {
    let h = |s: Complex64| s - alpha * (-s * tau).exp();
    let dh = |s: Complex64| 1.0 + alpha * tau * (-s * tau).exp();
    let re_lo = -3.0 * alpha.norm();
    let (nx, ny) = (240, 480);
    let mut seeds = Vec::new();
    for i in 0..=nx {
        for j in 0..=ny {
            let s = Complex64::new(
                re_lo + (1.0 - re_lo) * i as f64 / nx as f64,
                -40.0 + 80.0 * j as f64 / ny as f64,
            );
            seeds.push((h(s).norm() / (1.0 + s.norm()), s));
        }
    }
    seeds.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = f64::NEG_INFINITY;
    for (_, mut s) in seeds.into_iter().take(400) {
        for _ in 0..100 {
            let step = h(s) / dh(s);
            s -= step;
            if step.norm() < 1e-15 * s.norm().max(1.0) {
                break;
            }
        }
        if h(s).norm() < 1e-12 && s.re <= 1.0 && s.re >= re_lo && s.im.abs() <= 40.0 {
            best = best.max(s.re);
        }
    }
    best
}
