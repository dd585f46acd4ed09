//! System matrices, eigenvalue extraction and validated spectra.
//!
//! Eigenvalues come from a self-contained dense solver: diagonal balancing,
//! Householder reduction to upper Hessenberg form and the Francis
//! double-shift QR iteration. Each eigenvalue is then certified by inverse
//! iteration on the Hessenberg matrix, mapped back to an eigenvector of the
//! original matrix, and checked against `||Av - av|| <= 1e-8 ||A||_F`.

use std::cmp::Ordering;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest accepted matrix order.
pub const MAX_ORDER: usize = 500;
/// Eigenvalues must satisfy `Re < -HURWITZ_MARGIN`.
pub const HURWITZ_MARGIN: f64 = 1e-12;
/// Absolute tolerance for conjugate pairing.
pub const CONJUGATE_TOL: f64 = 1e-9;
/// Relative eigen-residual bound, scaled by the Frobenius norm.
pub const DEFAULT_EIG_TOL: f64 = 1e-8;

const QR_ITERATIONS_PER_ROOT: usize = 60;
const INVERSE_ITERATION_SWEEPS: usize = 4;

/// Dense square real matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl SystemMatrix {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation("matrix must have at least one row".into()));
        }
        if entries.len() != n * n {
            return Err(Error::Validation(format!(
                "expected {} entries for a {n}x{n} matrix, got {}",
                n * n,
                entries.len()
            )));
        }
        if let Some(pos) = entries.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "entry ({}, {}) is not finite",
                pos / n + 1,
                pos % n + 1
            )));
        }
        Ok(Self { n, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
            return Err(Error::Validation(format!(
                "matrix is not square: row {} has {} entries, expected {n}",
                i + 1,
                row.len()
            )));
        }
        Self::new(n, rows.iter().flatten().copied().collect())
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let n = values.len();
        let mut entries = vec![0.0; n * n];
        for (i, v) in values.iter().enumerate() {
            entries[i * n + i] = *v;
        }
        Self::new(n, entries)
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        for (row, out) in self.entries.chunks(self.n).zip(y.iter_mut()) {
            *out = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    fn mul_complex_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        self.entries
            .chunks(self.n)
            .map(|row| row.iter().zip(x).map(|(a, b)| b * *a).sum())
            .collect()
    }
}

/// Validated, sorted, conjugate-closed list of strictly stable eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(into = "Vec<Complex64>")]
pub struct Spectrum {
    eigenvalues: Vec<Complex64>,
}

impl From<Spectrum> for Vec<Complex64> {
    fn from(s: Spectrum) -> Self {
        s.eigenvalues
    }
}

impl Spectrum {
    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// The slowest mode `alpha_1`.
    pub fn slowest(&self) -> Complex64 {
        self.eigenvalues[0]
    }

    /// The fastest mode `alpha_n`.
    pub fn fastest(&self) -> Complex64 {
        self.eigenvalues[self.eigenvalues.len() - 1]
    }

    /// Delay-free rate `|Re alpha_1|`.
    pub fn rho0(&self) -> f64 {
        self.eigenvalues[0].re.abs()
    }

    pub fn is_real(&self) -> bool {
        self.eigenvalues.iter().all(|a| a.im == 0.0)
    }

    /// Representatives with `Im >= 0`, with the lower conjugate of every pair
    /// dropped. Order follows the spectrum order.
    pub fn representatives(&self) -> Vec<Complex64> {
        self.eigenvalues.iter().copied().filter(|a| a.im >= 0.0).collect()
    }
}

/// Total order used for every spectrum: ascending `|Re|`, then ascending
/// `|Im|`, then `Im >= 0` before `Im < 0`.
pub fn spectral_order(a: &Complex64, b: &Complex64) -> Ordering {
    a.re.abs()
        .total_cmp(&b.re.abs())
        .then(a.im.abs().total_cmp(&b.im.abs()))
        .then((a.im < 0.0).cmp(&(b.im < 0.0)))
}

fn check_hurwitz(values: &[Complex64]) -> Result<()> {
    match values.iter().find(|a| !(a.re < -HURWITZ_MARGIN)) {
        Some(a) => Err(Error::NotHurwitz { value: *a }),
        None => Ok(()),
    }
}

/// Pair every complex value with its conjugate, snapping each pair to an
/// exact conjugate pair. Values within `CONJUGATE_TOL` of their own
/// conjugate are made real. Missing partners are added when `repair` is set.
fn close_under_conjugation(values: &[Complex64], repair: bool) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity(values.len());
    let mut used = vec![false; values.len()];
    for i in 0..values.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let a = values[i];
        if a.im.abs() * 2.0 <= CONJUGATE_TOL {
            out.push(Complex64::new(a.re, 0.0));
            continue;
        }
        let partner = (0..values.len())
            .filter(|&j| !used[j])
            .map(|j| (j, (values[j] - a.conj()).norm()))
            .filter(|&(_, d)| d <= CONJUGATE_TOL)
            .min_by(|x, y| x.1.total_cmp(&y.1));
        match partner {
            Some((j, _)) => {
                used[j] = true;
                let b = values[j];
                let re = 0.5 * (a.re + b.re);
                let im = 0.5 * (a.im.abs() + b.im.abs());
                out.push(Complex64::new(re, im));
                out.push(Complex64::new(re, -im));
            }
            None if repair => {
                out.push(a);
                out.push(a.conj());
            }
            None => {
                return Err(Error::Validation(format!(
                    "spectrum is not closed under conjugation: {a} has no partner"
                )))
            }
        }
    }
    Ok(out)
}

/// Build a spectrum from an explicit eigenvalue list.
pub fn spectrum_from_list(values: &[Complex64], repair_conjugates: bool) -> Result<Spectrum> {
    if values.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    if let Some(a) = values.iter().find(|a| !a.re.is_finite() || !a.im.is_finite()) {
        return Err(Error::Validation(format!("eigenvalue {a} is not finite")));
    }
    check_hurwitz(values)?;
    let mut eigenvalues = close_under_conjugation(values, repair_conjugates)?;
    eigenvalues.sort_by(spectral_order);
    Ok(Spectrum { eigenvalues })
}

/// Validated spectrum of a Hurwitz matrix.
pub fn eigenvalues(m: &SystemMatrix) -> Result<Spectrum> {
    eigenvalues_with_tol(m, DEFAULT_EIG_TOL)
}

pub fn eigenvalues_with_tol(m: &SystemMatrix, eig_tol: f64) -> Result<Spectrum> {
    let raw = raw_eigenvalues_with_tol(m, eig_tol)?;
    check_hurwitz(&raw)?;
    let mut eigenvalues = close_under_conjugation(&raw, false)?;
    eigenvalues.sort_by(spectral_order);
    Ok(Spectrum { eigenvalues })
}

/// Certified eigenvalues of any real matrix, sorted by [`spectral_order`],
/// without the Hurwitz requirement.
pub fn raw_eigenvalues(m: &SystemMatrix) -> Result<Vec<Complex64>> {
    raw_eigenvalues_with_tol(m, DEFAULT_EIG_TOL)
}

pub fn raw_eigenvalues_with_tol(m: &SystemMatrix, eig_tol: f64) -> Result<Vec<Complex64>> {
    let n = m.order();
    if n > MAX_ORDER {
        return Err(Error::Validation(format!(
            "matrix order {n} exceeds the supported maximum {MAX_ORDER}"
        )));
    }
    let mut b = m.rows();
    let scale = balance(&mut b);
    let q = hessenberg(&mut b);
    let mut work = b.clone();
    let mut values = hqr(&mut work)?;

    let bound = eig_tol * m.frobenius_norm();
    for &alpha in &values {
        let y = inverse_iteration(&b, alpha);
        // v = D Q y maps the Hessenberg eigenvector back to the original basis
        let v: Vec<Complex64> = (0..n)
            .map(|i| {
                let qy: Complex64 = (0..n).map(|j| y[j] * q[i][j]).sum();
                qy * scale[i]
            })
            .collect();
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let av = m.mul_complex_vec(&v);
        let res = av
            .iter()
            .zip(&v)
            .map(|(a, x)| (a - alpha * x).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if !(norm > 0.0) || !(res <= bound * norm) {
            return Err(Error::NumericalFailure(format!(
                "eigenvalue {alpha} failed certification: residual {:.3e} exceeds {:.3e}",
                res / norm,
                bound
            )));
        }
    }
    values.sort_by(spectral_order);
    Ok(values)
}

/// Diagonal similarity `D^{-1} A D` with powers of two, returning `D`.
fn balance(a: &mut [Vec<f64>]) -> Vec<f64> {
    const RADIX: f64 = 2.0;
    let n = a.len();
    let mut scale = vec![1.0; n];
    let sqrdx = RADIX * RADIX;
    let mut done = false;
    while !done {
        done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[j][i].abs();
                    r += a[i][j].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= sqrdx;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= sqrdx;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                scale[i] *= f;
                for v in a[i].iter_mut() {
                    *v /= f;
                }
                for row in a.iter_mut() {
                    row[i] *= f;
                }
            }
        }
    }
    scale
}

/// Householder reduction to upper Hessenberg form in place. Returns the
/// orthogonal `Q` with `A_in = Q H Q^T`.
fn hessenberg(a: &mut [Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for k in 0..n.saturating_sub(2) {
        let norm = (k + 1..n).map(|i| a[i][k] * a[i][k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[k + 1][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k + 1..n).map(|i| a[i][k]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let beta = 2.0 / vnorm2;
        // A <- P A
        for j in 0..n {
            let dot: f64 = (k + 1..n).map(|i| v[i - k - 1] * a[i][j]).sum();
            let f = beta * dot;
            for i in k + 1..n {
                a[i][j] -= f * v[i - k - 1];
            }
        }
        // A <- A P, Q <- Q P
        for m in [&mut *a, &mut q[..]] {
            for row in m.iter_mut() {
                let dot: f64 = (k + 1..n).map(|j| row[j] * v[j - k - 1]).sum();
                let f = beta * dot;
                for j in k + 1..n {
                    row[j] -= f * v[j - k - 1];
                }
            }
        }
        a[k + 1][k] = alpha;
        for row in a.iter_mut().skip(k + 2) {
            row[k] = 0.0;
        }
    }
    q
}

/// Eigenvalues of an upper Hessenberg matrix by the Francis double-shift QR
/// iteration with deflation. The matrix is destroyed.
fn hqr(a: &mut [Vec<f64>]) -> Result<Vec<Complex64>> {
    let n = a.len();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[i][j].abs();
        }
    }
    if n == 1 {
        out[0] = Complex64::new(a[0][0], 0.0);
        return Ok(out);
    }
    let mut nn = n as isize - 1;
    let mut t = 0.0;
    let (mut p, mut q, mut r): (f64, f64, f64);
    while nn >= 0 {
        let mut its = 0;
        loop {
            let nu = nn as usize;
            // look for a single small subdiagonal element
            let mut l = nu;
            while l >= 1 {
                let mut s = a[l - 1][l - 1].abs() + a[l][l].abs();
                if s == 0.0 {
                    s = anorm;
                }
                if a[l][l - 1].abs() <= f64::EPSILON * s {
                    a[l][l - 1] = 0.0;
                    break;
                }
                l -= 1;
            }
            let mut x = a[nu][nu];
            if l == nu {
                out[nu] = Complex64::new(x + t, 0.0);
                nn -= 1;
                break;
            }
            let mut y = a[nu - 1][nu - 1];
            let mut w = a[nu][nu - 1] * a[nu - 1][nu];
            if l == nu - 1 {
                p = 0.5 * (y - x);
                q = p * p + w;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + z.copysign(p);
                    out[nu - 1] = Complex64::new(x + z, 0.0);
                    out[nu] = Complex64::new(if z != 0.0 { x - w / z } else { x + z }, 0.0);
                } else {
                    out[nu - 1] = Complex64::new(x + p, z);
                    out[nu] = Complex64::new(x + p, -z);
                }
                nn -= 2;
                break;
            }
            if its == QR_ITERATIONS_PER_ROOT {
                return Err(Error::NumericalFailure(format!(
                    "QR iteration did not converge within {QR_ITERATIONS_PER_ROOT} sweeps"
                )));
            }
            if its > 0 && its % 10 == 0 {
                // exceptional shift
                t += x;
                for i in 0..=nu {
                    a[i][i] -= x;
                }
                let s = a[nu][nu - 1].abs() + a[nu - 1][nu - 2].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            let mut m = nu - 2;
            loop {
                let z = a[m][m];
                r = x - z;
                let s = y - z;
                p = (r * s - w) / a[m + 1][m] + a[m][m + 1];
                q = a[m + 1][m + 1] - z - r - s;
                r = a[m + 2][m + 1];
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = a[m][m - 1].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[m - 1][m - 1].abs() + z.abs() + a[m + 1][m + 1].abs());
                if u <= f64::EPSILON * v {
                    break;
                }
                m -= 1;
            }
            for i in m + 2..=nu {
                a[i][i - 2] = 0.0;
                if i != m + 2 {
                    a[i][i - 3] = 0.0;
                }
            }
            let mut k = m;
            while k + 1 <= nu {
                if k != m {
                    p = a[k][k - 1];
                    q = a[k + 1][k - 1];
                    r = if k + 1 != nu { a[k + 2][k - 1] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            a[k][k - 1] = -a[k][k - 1];
                        }
                    } else {
                        a[k][k - 1] = -s * x;
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nu {
                        let mut pp = a[k][j] + q * a[k + 1][j];
                        if k + 1 != nu {
                            pp += r * a[k + 2][j];
                            a[k + 2][j] -= pp * z;
                        }
                        a[k + 1][j] -= pp * y;
                        a[k][j] -= pp * x;
                    }
                    let mmin = nu.min(k + 3);
                    for row in a.iter_mut().take(mmin + 1).skip(l) {
                        let mut pp = x * row[k] + y * row[k + 1];
                        if k + 1 != nu {
                            pp += z * row[k + 2];
                            row[k + 2] -= pp * r;
                        }
                        row[k + 1] -= pp * q;
                        row[k] -= pp;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(out)
}

/// Approximate eigenvector of the Hessenberg matrix `h` for `alpha`.
fn inverse_iteration(h: &[Vec<f64>], alpha: Complex64) -> Vec<Complex64> {
    let n = h.len();
    let hnorm = h
        .iter()
        .flatten()
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    let tiny = f64::EPSILON * hnorm;
    // LU of (H - alpha I) with adjacent-row partial pivoting; Hessenberg
    // structure is preserved so each column eliminates one entry.
    let mut lu: Vec<Vec<Complex64>> = h
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &v)| Complex64::new(v, 0.0) - if i == j { alpha } else { 0.0.into() })
                .collect()
        })
        .collect();
    let mut swapped = vec![false; n];
    let mut mult = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n.saturating_sub(1) {
        if lu[k + 1][k].norm() > lu[k][k].norm() {
            lu.swap(k, k + 1);
            swapped[k] = true;
        }
        if lu[k][k].norm() < tiny {
            lu[k][k] = Complex64::new(tiny, 0.0);
        }
        let f = lu[k + 1][k] / lu[k][k];
        mult[k] = f;
        lu[k + 1][k] = 0.0.into();
        for j in k + 1..n {
            let d = f * lu[k][j];
            lu[k + 1][j] -= d;
        }
    }
    if lu[n - 1][n - 1].norm() < tiny {
        lu[n - 1][n - 1] = Complex64::new(tiny, 0.0);
    }

    let mut x: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(1.0 + (i as f64) / (n as f64), 0.0))
        .collect();
    for _ in 0..INVERSE_ITERATION_SWEEPS {
        // forward: apply the recorded row swaps and eliminations
        for k in 0..n.saturating_sub(1) {
            if swapped[k] {
                x.swap(k, k + 1);
            }
            let d = mult[k] * x[k];
            x[k + 1] -= d;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= lu[i][j] * x[j];
            }
            x[i] = s / lu[i][i];
        }
        let norm = x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            break;
        }
        for c in x.iter_mut() {
            *c /= norm;
        }
    }
    x
}

/// JSON input document for matrices or explicit spectra.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SpectrumSource {
    Matrix { matrix: Vec<Vec<f64>> },
    Spectrum { spectrum: Vec<ComplexEntry> },
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
pub struct ComplexEntry {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

impl SpectrumSource {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            Error::Parse(format!(
                "expected {{\"matrix\": [[...]]}} or {{\"spectrum\": [{{\"re\": .., \"im\": ..}}]}}: {e}"
            ))
        })
    }

    /// The source matrix, if one was given.
    pub fn matrix(&self) -> Result<Option<SystemMatrix>> {
        match self {
            SpectrumSource::Matrix { matrix } => {
                if matrix.is_empty() {
                    return Err(Error::EmptySpectrum);
                }
                SystemMatrix::from_rows(matrix).map(Some)
            }
            SpectrumSource::Spectrum { .. } => Ok(None),
        }
    }

    pub fn spectrum(&self, repair_conjugates: bool, eig_tol: f64) -> Result<Spectrum> {
        match self {
            SpectrumSource::Matrix { .. } => {
                let m = self.matrix()?.expect("matrix source");
                eigenvalues_with_tol(&m, eig_tol)
            }
            SpectrumSource::Spectrum { spectrum } => {
                let values: Vec<Complex64> =
                    spectrum.iter().map(|c| Complex64::new(c.re, c.im)).collect();
                spectrum_from_list(&values, repair_conjugates)
            }
        }
    }
}
