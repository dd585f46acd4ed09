//! Average consensus `x'(t) = -L x(t - tau)` over a weighted digraph.
//!
//! On a strongly connected, weight-balanced digraph the average of the
//! states is conserved and the disagreement `x - mean 1` evolves in the
//! complement of `1` as `y' = A y(t - tau)` with `A = -R^T L R`, where the
//! columns of `R` complete `1/sqrt(n)` to an orthonormal basis. The delay
//! analysis of `A` therefore governs how fast agreement is reached.

use std::collections::VecDeque;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dde_sim::{default_horizon, fit_decay_rate, integrate, PreShape, Trajectory};
use crate::delay_analysis::{analyze_with, rate_of_convergence, SystemDelayAnalysis, Tolerances};
use crate::error::{Error, Result};
use crate::spectrum::{eigenvalues_with_tol, raw_eigenvalues_with_tol, SystemMatrix, DEFAULT_EIG_TOL};

/// Absolute per-row tolerance of the weight-balance check.
pub const BALANCE_TOL: f64 = 1e-9;
/// Zero row and column sums of the Laplacian, relative to `max(1, ||L||_F)`.
pub const ZERO_SUM_TOL: f64 = 1e-10;
/// Orthonormality of `[1/sqrt(n), R]`.
pub const ORTHONORMAL_TOL: f64 = 1e-12;
/// Agreement of `eig(A)` with the nonzero part of `eig(-L)`, relative to
/// `max(1, |lambda|)`.
pub const REDUCTION_EIG_TOL: f64 = 1e-8;
pub const DEFAULT_STEPS_PER_DELAY: usize = 100;

/// Weighted digraph; `weight(i, j) > 0` means node `j` sends to node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Digraph {
    n: usize,
    weights: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DigraphDoc {
    n: usize,
    edges: Vec<EdgeDoc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    from: usize,
    to: usize,
    weight: f64,
}

impl Digraph {
    /// Validated digraph from a row-major `n x n` weight matrix.
    pub fn new(n: usize, weights: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::Validation(format!("digraph needs at least 2 nodes, got {n}")));
        }
        if weights.len() != n * n {
            return Err(Error::Validation(format!(
                "expected {} weights for {n} nodes, got {}",
                n * n,
                weights.len()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let w = weights[i * n + j];
                if !(w.is_finite() && w >= 0.0) {
                    return Err(Error::Validation(format!(
                        "weight ({}, {}) = {w} must be finite and nonnegative",
                        i + 1,
                        j + 1
                    )));
                }
                if i == j && w != 0.0 {
                    return Err(Error::Validation(format!("self-loop at node {}", i + 1)));
                }
            }
        }
        let g = Self { n, weights };
        g.check_strongly_connected()?;
        g.check_balanced()?;
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `w_ij`, zero-based.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    fn reach(&self, forward: bool) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        seen[0] = true;
        let mut queue = VecDeque::from([0]);
        while let Some(u) = queue.pop_front() {
            for v in 0..self.n {
                // u sends to v when w_vu > 0
                let w = if forward { self.weight(v, u) } else { self.weight(u, v) };
                if w > 0.0 && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    fn check_strongly_connected(&self) -> Result<()> {
        if let Some(k) = self.reach(true).iter().position(|s| !s) {
            return Err(Error::NotStronglyConnected { node: k + 1, reason: "not reachable from node 1" });
        }
        if let Some(k) = self.reach(false).iter().position(|s| !s) {
            return Err(Error::NotStronglyConnected { node: k + 1, reason: "unable to reach node 1" });
        }
        Ok(())
    }

    fn check_balanced(&self) -> Result<()> {
        for i in 0..self.n {
            let in_weight: f64 = (0..self.n).map(|j| self.weight(i, j)).sum();
            let out_weight: f64 = (0..self.n).map(|j| self.weight(j, i)).sum();
            if (in_weight - out_weight).abs() > BALANCE_TOL {
                return Err(Error::NotWeightBalanced { node: i + 1, in_weight, out_weight });
            }
        }
        Ok(())
    }
}

/// Digraph from `{"n": N, "edges": [{"from": i, "to": j, "weight": w}]}`
/// with 1-based nodes; an edge sets `w_{to,from}`.
pub fn load_digraph(text: &str) -> Result<Digraph> {
    let doc: DigraphDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let n = doc.n;
    let mut weights = vec![0.0; n * n];
    for (k, e) in doc.edges.iter().enumerate() {
        if e.from == 0 || e.from > n || e.to == 0 || e.to > n {
            return Err(Error::Validation(format!(
                "edge {} ({} -> {}) has a node outside 1..={n}",
                k + 1,
                e.from,
                e.to
            )));
        }
        let slot = &mut weights[(e.to - 1) * n + (e.from - 1)];
        if *slot != 0.0 {
            return Err(Error::Validation(format!("edge {} -> {} is listed twice", e.from, e.to)));
        }
        if e.weight == 0.0 {
            return Err(Error::Validation(format!("edge {} -> {} has zero weight", e.from, e.to)));
        }
        *slot = e.weight;
    }
    Digraph::new(n, weights)
}

/// `L = diag(W 1) - W`.
pub fn laplacian(g: &Digraph) -> SystemMatrix {
    let n = g.n;
    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        let mut degree = 0.0;
        for j in 0..n {
            let w = g.weight(i, j);
            entries[i * n + j] = -w;
            degree += w;
        }
        entries[i * n + i] = degree;
    }
    SystemMatrix::new(n, entries).expect("finite weights give a finite Laplacian")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusSetup {
    pub laplacian: SystemMatrix,
    /// `A = -R^T L R`, of order `n - 1`.
    pub reduced: SystemMatrix,
    /// `R` as `n` rows of length `n - 1`.
    pub basis: Vec<Vec<f64>>,
}

/// Columns `2..n` of the Householder reflector mapping `e1` to `1/sqrt(n)`.
fn complement_basis(n: usize) -> Vec<Vec<f64>> {
    let u = 1.0 / (n as f64).sqrt();
    let v: Vec<f64> = (0..n).map(|i| if i == 0 { 1.0 - u } else { -u }).collect();
    let vv = 2.0 - 2.0 * u;
    (0..n)
        .map(|i| {
            (1..n)
                .map(|j| f64::from(u8::from(i == j)) - 2.0 * v[i] * v[j] / vv)
                .collect()
        })
        .collect()
}

/// Reduce the Laplacian dynamics to the disagreement subspace and verify the
/// zero-sum, orthonormality and spectral invariants.
pub fn reduce(l: &SystemMatrix) -> Result<ConsensusSetup> {
    reduce_with(l, DEFAULT_EIG_TOL)
}

pub fn reduce_with(l: &SystemMatrix, eig_tol: f64) -> Result<ConsensusSetup> {
    let n = l.order();
    if n < 2 {
        return Err(Error::Precondition("Laplacian must have order at least 2".into()));
    }
    let scale = l.frobenius_norm().max(1.0);
    for i in 0..n {
        let row: f64 = (0..n).map(|j| l.get(i, j)).sum();
        let col: f64 = (0..n).map(|j| l.get(j, i)).sum();
        if row.abs() > ZERO_SUM_TOL * scale || col.abs() > ZERO_SUM_TOL * scale {
            return Err(Error::Precondition(format!(
                "row {} of the Laplacian sums to {row} and column {} to {col}",
                i + 1,
                i + 1
            )));
        }
    }

    let r = complement_basis(n);
    let u = 1.0 / (n as f64).sqrt();
    for a in 0..n {
        for b in a..n {
            let col = |k: usize, i: usize| if k == 0 { u } else { r[i][k - 1] };
            let dot: f64 = (0..n).map(|i| col(a, i) * col(b, i)).sum();
            let expect = if a == b { 1.0 } else { 0.0 };
            if (dot - expect).abs() > ORTHONORMAL_TOL {
                return Err(Error::NumericalFailure(format!(
                    "basis columns {} and {} have inner product {dot}",
                    a + 1,
                    b + 1
                )));
            }
        }
    }

    let m = n - 1;
    let mut lr = vec![0.0; n * m];
    for i in 0..n {
        for k in 0..m {
            lr[i * m + k] = (0..n).map(|j| l.get(i, j) * r[j][k]).sum();
        }
    }
    let mut entries = vec![0.0; m * m];
    for a in 0..m {
        for b in 0..m {
            entries[a * m + b] = -(0..n).map(|i| r[i][a] * lr[i * m + b]).sum::<f64>();
        }
    }
    let reduced = SystemMatrix::new(m, entries)?;

    let minus_l = SystemMatrix::new(n, l.entries().iter().map(|v| -v).collect())?;
    let mut full = raw_eigenvalues_with_tol(&minus_l, eig_tol)?;
    let zero = (0..full.len())
        .min_by(|&a, &b| full[a].norm().total_cmp(&full[b].norm()))
        .expect("order at least 2");
    full.remove(zero);
    let part = raw_eigenvalues_with_tol(&reduced, eig_tol)?;
    if !same_multiset(&part, &full) {
        return Err(Error::NumericalFailure(format!(
            "reduced spectrum {part:?} differs from the nonzero Laplacian spectrum {full:?}"
        )));
    }
    Ok(ConsensusSetup { laplacian: l.clone(), reduced, basis: r })
}

fn same_multiset(a: &[Complex64], b: &[Complex64]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut used = vec![false; b.len()];
    a.iter().all(|x| {
        let best = (0..b.len())
            .filter(|&k| !used[k])
            .min_by(|&p, &q| (b[p] - x).norm().total_cmp(&(b[q] - x).norm()));
        match best {
            Some(k) if (b[k] - x).norm() <= REDUCTION_EIG_TOL * x.norm().max(1.0) => {
                used[k] = true;
                true
            }
            _ => false,
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusOptions {
    /// Defaults to `max(20 / rho0, 10 tau)` for the reduced matrix.
    pub horizon: Option<f64>,
    pub steps_per_delay: usize,
    pub eig_tol: f64,
    pub tolerances: Tolerances,
}

impl Default for ConsensusOptions {
    fn default() -> Self {
        Self {
            horizon: None,
            steps_per_delay: DEFAULT_STEPS_PER_DELAY,
            eig_tol: DEFAULT_EIG_TOL,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsensusReport {
    pub n: usize,
    pub tau: f64,
    pub horizon: f64,
    pub consensus_value: f64,
    /// Fitted decay rate of `||x - mean 1||`; absent when the references are
    /// already in agreement or the fit is unreliable.
    pub empirical_rate: Option<f64>,
    pub empirical_note: Option<String>,
    pub analytic_rate: f64,
    pub can_accelerate: bool,
    pub analysis: SystemDelayAnalysis,
}

/// Analyze the reduced dynamics of `g` and simulate consensus from the
/// constant preshape `refs` at delay `tau`.
pub fn consensus_run(g: &Digraph, refs: &[f64], tau: f64, horizon: Option<f64>) -> Result<(Trajectory, ConsensusReport)> {
    consensus_run_with(g, refs, tau, &ConsensusOptions { horizon, ..Default::default() })
}

pub fn consensus_run_with(
    g: &Digraph,
    refs: &[f64],
    tau: f64,
    opts: &ConsensusOptions,
) -> Result<(Trajectory, ConsensusReport)> {
    if refs.len() != g.n {
        return Err(Error::InvalidArgument(format!(
            "expected {} references, got {}",
            g.n,
            refs.len()
        )));
    }
    if refs.iter().any(|r| !r.is_finite()) {
        return Err(Error::InvalidArgument("references must be finite".into()));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidArgument(format!("delay {tau} must be nonnegative")));
    }
    let setup = reduce_with(&laplacian(g), opts.eig_tol)?;
    let spectrum = eigenvalues_with_tol(&setup.reduced, opts.eig_tol)?;
    let analysis = analyze_with(&spectrum, &opts.tolerances)?;
    if tau >= analysis.tau_bar {
        return Err(Error::DelayNotAdmissible { tau, tau_bar: analysis.tau_bar });
    }
    let horizon = opts.horizon.unwrap_or_else(|| default_horizon(analysis.rho0, tau));
    if !(horizon.is_finite() && horizon > 0.0 && horizon >= tau) {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} must be positive and at least the delay {tau}"
        )));
    }
    if opts.steps_per_delay < crate::dde_sim::MIN_STEPS_PER_DELAY {
        return Err(Error::InvalidArgument(format!(
            "steps per delay must be at least {}",
            crate::dde_sim::MIN_STEPS_PER_DELAY
        )));
    }

    // The disagreement obeys the same equation, since L 1 = 0. Integrating
    // it directly keeps its digits once it falls below the roundoff of the
    // consensus value.
    let minus_l = SystemMatrix::new(g.n, setup.laplacian.entries().iter().map(|v| -v).collect())?;
    let mean = refs.iter().sum::<f64>() / g.n as f64;
    let spread: Vec<f64> = refs.iter().map(|r| r - mean).collect();
    let mut trajectory = integrate(&minus_l, tau, &PreShape::Constant(spread), horizon, opts.steps_per_delay, None)?;
    // Rounding feeds a tiny, conserved component along 1 into the spread;
    // only the part orthogonal to 1 decays.
    let norms: Vec<f64> = trajectory
        .states
        .iter()
        .map(|e| {
            let m = e.iter().sum::<f64>() / g.n as f64;
            e.iter().map(|v| (v - m) * (v - m)).sum::<f64>().sqrt()
        })
        .collect();
    let (empirical_rate, empirical_note) = match fit_decay_rate(&trajectory.times, &norms, tau, 0.5) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    for x in &mut trajectory.states {
        x.iter_mut().for_each(|v| *v += mean);
    }
    let analytic_rate = rate_of_convergence(&spectrum, tau)?.0;
    let report = ConsensusReport {
        n: g.n,
        tau,
        horizon,
        consensus_value: mean,
        empirical_rate,
        empirical_note,
        analytic_rate,
        can_accelerate: analysis.classification.can_accelerate,
        analysis,
    };
    Ok((trajectory, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cycle() -> Digraph {
        load_digraph(r#"{"n": 2, "edges": [{"from": 1, "to": 2, "weight": 1}, {"from": 2, "to": 1, "weight": 1}]}"#)
            .unwrap()
    }

    #[test]
    fn two_cycle_laplacian_and_reduction() {
        let l = laplacian(&two_cycle());
        assert_eq!(l.entries(), &[1.0, -1.0, -1.0, 1.0]);
        let setup = reduce(&l).unwrap();
        assert_eq!(setup.reduced.order(), 1);
        assert!((setup.reduced.get(0, 0) + 2.0).abs() < 1e-14);
    }

    #[test]
    fn complete_three_laplacian() {
        let mut edges = Vec::new();
        for i in 1..=3 {
            for j in 1..=3 {
                if i != j {
                    edges.push(format!(r#"{{"from": {i}, "to": {j}, "weight": 1}}"#));
                }
            }
        }
        let g = load_digraph(&format!(r#"{{"n": 3, "edges": [{}]}}"#, edges.join(","))).unwrap();
        let l = laplacian(&g);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(l.get(i, j), if i == j { 2.0 } else { -1.0 });
            }
        }
    }

    #[test]
    fn basis_is_orthonormal_complement() {
        for n in 2..8 {
            let r = complement_basis(n);
            for k in 0..n - 1 {
                let s: f64 = (0..n).map(|i| r[i][k]).sum();
                assert!(s.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn isolated_sink_is_rejected() {
        let e = load_digraph(r#"{"n": 3, "edges": [{"from": 1, "to": 2, "weight": 1}, {"from": 2, "to": 1, "weight": 1}, {"from": 1, "to": 3, "weight": 1}]}"#)
            .unwrap_err();
        assert_eq!(e, Error::NotStronglyConnected { node: 3, reason: "unable to reach node 1" });
    }

    #[test]
    fn imbalance_is_rejected() {
        let e = load_digraph(
            r#"{"n": 3, "edges": [{"from": 1, "to": 2, "weight": 1}, {"from": 2, "to": 3, "weight": 1}, {"from": 3, "to": 1, "weight": 2}]}"#,
        )
        .unwrap_err();
        assert_eq!(e, Error::NotWeightBalanced { node: 1, in_weight: 2.0, out_weight: 1.0 });
    }

    #[test]
    fn malformed_documents() {
        assert!(matches!(load_digraph("{"), Err(Error::Parse(_))));
        assert!(matches!(load_digraph(r#"{"n": 2, "edges": [{"from": 0, "to": 1, "weight": 1}]}"#), Err(Error::Validation(_))));
        assert!(matches!(load_digraph(r#"{"n": 2, "edges": [{"from": 1, "to": 1, "weight": 1}]}"#), Err(Error::Validation(_))));
        assert!(matches!(load_digraph(r#"{"n": 2, "edges": [{"from": 1, "to": 2, "weight": -1}, {"from": 2, "to": 1, "weight": -1}]}"#), Err(Error::Validation(_))));
    }

    #[test]
    fn agreement_is_an_equilibrium() {
        let (t, report) = consensus_run(&two_cycle(), &[3.0, 3.0], 0.2, Some(2.0)).unwrap();
        assert!(t.states.iter().all(|x| x.iter().all(|v| (v - 3.0).abs() < 1e-12)));
        assert_eq!(report.consensus_value, 3.0);
        assert!(report.empirical_rate.is_none());
    }

    #[test]
    fn refuses_inadmissible_delay() {
        // A = [-2], critical delay pi/4
        let e = consensus_run(&two_cycle(), &[1.0, 2.0], 0.8, None).unwrap_err();
        match e {
            Error::DelayNotAdmissible { tau_bar, .. } => {
                assert!((tau_bar - std::f64::consts::FRAC_PI_4).abs() < 1e-12)
            }
            other => panic!("{other:?}"),
        }
    }
}
