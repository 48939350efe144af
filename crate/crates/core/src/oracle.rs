//! Brute-force reference implementation and statistical checks.
//!
//! The enumeration here deliberately shares nothing with [`crate::register`],
//! [`crate::gates`] or [`crate::tensor`]: it builds every gate as a full
//! `D × D` matrix from Kronecker products of nested `Vec`s, measures with
//! full-space projectors and reads Bob's state from an explicit partial trace.

use std::collections::BTreeMap;
use std::f64::consts::SQRT_2;
use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::protocols::{run_protocol, ChannelSpec, Mode, OutcomeTable, Protocol, TargetState};
use crate::rng::trial_rng;
use crate::tensor::C64;

/// Largest qudit dimension the naive path accepts.
pub const NAIVE_MAX_D: usize = 8;
/// `compare_exact` tolerance per outcome.
pub const EXACT_TOL: f64 = 1e-10;
/// `compare_sampled` z-score threshold.
pub const Z_THRESHOLD: f64 = 4.0;

// probabilities this close to 0 or 1 are treated as exact edge cases
const EDGE_TOL: f64 = 1e-12;
const ZERO_BRANCH: f64 = 1e-15;

type Vector = Vec<C64>;
type Matrix = Vec<Vec<C64>>;

fn cx(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn zeros(n: usize, m: usize) -> Matrix {
    vec![vec![C64::default(); m]; n]
}

fn eye(n: usize) -> Matrix {
    let mut m = zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = cx(1.0, 0.0);
    }
    m
}

fn mat_mul(a: &Matrix, b: &Matrix) -> Matrix {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut out = zeros(n, m);
    for i in 0..n {
        for l in 0..k {
            let x = a[i][l];
            if x == C64::default() {
                continue;
            }
            for j in 0..m {
                out[i][j] += x * b[l][j];
            }
        }
    }
    out
}

fn mat_vec(a: &Matrix, v: &Vector) -> Vector {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

fn adjoint(a: &Matrix) -> Matrix {
    let mut out = zeros(a[0].len(), a.len());
    for (i, row) in a.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            out[j][i] = x.conj();
        }
    }
    out
}

fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac, br, bc) = (a.len(), a[0].len(), b.len(), b[0].len());
    let mut out = zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            for k in 0..br {
                for l in 0..bc {
                    out[i * br + k][j * bc + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

fn kron_all(ops: &[Matrix]) -> Matrix {
    ops[1..].iter().fold(ops[0].clone(), |acc, m| kron(&acc, m))
}

fn add_into(acc: &mut Matrix, m: &Matrix) {
    for (ra, rm) in acc.iter_mut().zip(m) {
        for (x, y) in ra.iter_mut().zip(rm) {
            *x += y;
        }
    }
}

fn ket(d: usize, k: usize) -> Vector {
    let mut v = vec![C64::default(); d];
    v[k] = cx(1.0, 0.0);
    v
}

fn ket_bra(a: &Vector, b: &Vector) -> Matrix {
    a.iter().map(|x| b.iter().map(|y| x * y.conj()).collect()).collect()
}

fn norm_sqr(v: &Vector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn dot(a: &Vector, b: &Vector) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn scaled(v: &Vector, s: f64) -> Vector {
    v.iter().map(|z| z * s).collect()
}

fn from_columns(cols: &[Vector]) -> Matrix {
    let n = cols[0].len();
    (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect()
}

/// Unitary with first column `v`, completed by Gram–Schmidt over the
/// computational basis.
fn gram_schmidt_unitary(v: &Vector) -> Matrix {
    let d = v.len();
    let mut cols: Vec<Vector> = vec![scaled(v, 1.0 / norm_sqr(v).sqrt())];
    for k in 0..d {
        if cols.len() == d {
            break;
        }
        let mut w = ket(d, k);
        for _ in 0..2 {
            for c in &cols {
                let p = dot(c, &w);
                for (wi, ci) in w.iter_mut().zip(c) {
                    *wi -= p * ci;
                }
            }
        }
        let n = norm_sqr(&w).sqrt();
        if n > 1e-6 {
            cols.push(scaled(&w, 1.0 / n));
        }
    }
    from_columns(&cols)
}

/// `|i⟩|j⟩ ↦ |i⟩|j + shift(i)⟩` on subsystems `ctrl`, `tgt` of an `n`-qudit space.
fn controlled_full(d: usize, n: usize, ctrl: usize, tgt: usize, shift: impl Fn(usize) -> usize) -> Matrix {
    let dim = d.pow(n as u32);
    let mut total = zeros(dim, dim);
    for i in 0..d {
        let k = shift(i) % d;
        let mut x = zeros(d, d);
        for j in 0..d {
            x[(j + k) % d][j] = cx(1.0, 0.0);
        }
        let ops: Vec<Matrix> = (0..n)
            .map(|s| {
                if s == ctrl {
                    ket_bra(&ket(d, i), &ket(d, i))
                } else if s == tgt {
                    x.clone()
                } else {
                    eye(d)
                }
            })
            .collect();
        add_into(&mut total, &kron_all(&ops));
    }
    total
}

/// `op` on subsystem `pos` of an `n`-qudit space.
fn local(d: usize, n: usize, pos: usize, op: &Matrix) -> Matrix {
    let ops: Vec<Matrix> = (0..n).map(|s| if s == pos { op.clone() } else { eye(d) }).collect();
    kron_all(&ops)
}

/// Reduced density matrix of subsystem 1 of three.
fn reduced_b(psi: &Vector, d: usize) -> Matrix {
    let mut rho = zeros(d, d);
    for b in 0..d {
        for b2 in 0..d {
            for a in 0..d {
                for c in 0..d {
                    rho[b][b2] += psi[a * d * d + b * d + c] * psi[a * d * d + b2 * d + c].conj();
                }
            }
        }
    }
    rho
}

fn expectation(rho: &Matrix, t: &Vector) -> f64 {
    dot(t, &mat_vec(rho, t)).re
}

/// Pure state whose projector is `rho`, read from its heaviest column.
fn purify(rho: &Matrix) -> Vector {
    let j = (0..rho.len())
        .max_by(|&a, &b| rho[a][a].re.total_cmp(&rho[b][b].re))
        .expect("non-empty");
    let s = rho[j][j].re.sqrt();
    rho.iter().map(|row| row[j] / s).collect()
}

fn check_dim(d: usize) -> Result<()> {
    if d > NAIVE_MAX_D {
        return Err(Error::CapacityExceeded {
            requested: d,
            max: NAIVE_MAX_D,
        });
    }
    Ok(())
}

/// Protocol configuration a distribution was computed for.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub protocol: Protocol,
    pub mode: Mode,
    pub channel: ChannelSpec,
    pub target: TargetState,
    pub source: String,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({}) d={} via {}",
            self.protocol,
            self.mode,
            self.target.d(),
            self.source
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BranchRow {
    pub outcome: Vec<usize>,
    pub probability: f64,
    pub fidelity: Option<f64>,
}

/// Exact probabilities of every measurement branch.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchDistribution {
    pub rows: Vec<BranchRow>,
    pub provenance: Provenance,
}

impl BranchDistribution {
    pub fn from_table(table: &OutcomeTable, channel: &ChannelSpec, target: &TargetState) -> Self {
        Self {
            rows: table
                .rows
                .iter()
                .map(|r| BranchRow {
                    outcome: r.outcome.clone(),
                    probability: r.probability,
                    fidelity: r.fidelity,
                })
                .collect(),
            provenance: Provenance {
                protocol: table.protocol,
                mode: table.mode,
                channel: channel.clone(),
                target: target.clone(),
                source: "exact_outcome_table".into(),
            },
        }
    }

    pub fn total(&self) -> f64 {
        self.rows.iter().map(|r| r.probability).sum()
    }

    pub fn probability(&self, outcome: &[usize]) -> Option<f64> {
        self.rows.iter().find(|r| r.outcome == outcome).map(|r| r.probability)
    }

    /// Sums probabilities over outcome tuples sharing the first `k` entries.
    pub fn marginal(&self, k: usize) -> BTreeMap<Vec<usize>, f64> {
        let mut out = BTreeMap::new();
        for r in &self.rows {
            let key = r.outcome[..k.min(r.outcome.len())].to_vec();
            *out.entry(key).or_insert(0.0) += r.probability;
        }
        out
    }
}

struct Naive {
    rows: Vec<BranchRow>,
}

impl Naive {
    fn push(&mut self, outcome: Vec<usize>, branch: &Vector, after: impl FnOnce(&Vector) -> f64) {
        let p = norm_sqr(branch);
        if p < ZERO_BRANCH {
            self.rows.push(BranchRow {
                outcome,
                probability: 0.0,
                fidelity: None,
            });
        } else {
            let normed = scaled(branch, 1.0 / p.sqrt());
            self.rows.push(BranchRow {
                outcome,
                probability: p,
                fidelity: Some(after(&normed)),
            });
        }
    }
}

fn target_params(t: &[C64]) -> (f64, f64, f64) {
    if t[0].norm() > 0.0 {
        (t[0].norm(), t[1].norm(), t[1].arg() - t[0].arg())
    } else {
        (0.0, 1.0, 0.0)
    }
}

fn deterministic_naive(channel: &ChannelSpec, target: &TargetState, mode: Mode) -> Result<Vec<BranchRow>> {
    let d = channel.d();
    if target.d() != d {
        return Err(Error::InvalidState(format!(
            "channel dimension {d} differs from target dimension {}",
            target.d()
        )));
    }
    if mode == Mode::Literal && d != 2 {
        return Err(Error::Unsupported("literal mode is defined for qubits only".into()));
    }
    let t: Vector = target.amplitudes().to_vec();
    let mut psi = vec![C64::default(); d * d * d];
    for (m, l) in channel.lambdas().iter().enumerate() {
        psi[m * d * d + m * d] = *l;
    }
    let u = match mode {
        Mode::Repaired => gram_schmidt_unitary(&t),
        Mode::Literal => {
            let lead = if t[0].norm() > 0.0 { t[0] / t[0].norm() } else { t[1] / t[1].norm() };
            let x0 = (t[0] * lead.conj()).re;
            let e = t[1] * lead.conj();
            vec![vec![cx(x0, 0.0), -e], vec![e, cx(x0, 0.0)]]
        }
    };
    let gates = [
        controlled_full(d, 3, 0, 2, |i| i),
        local(d, 3, 0, &u),
        controlled_full(d, 3, 0, 1, |i| d - i),
        controlled_full(d, 3, 1, 0, |i| i),
    ];
    for g in &gates {
        psi = mat_vec(g, &psi);
    }
    psi = scaled(&psi, 1.0 / norm_sqr(&psi).sqrt());

    let mut out = Naive { rows: Vec::new() };
    for a in 0..d {
        for c in 0..d {
            let proj = kron_all(&[ket_bra(&ket(d, a), &ket(d, a)), eye(d), ket_bra(&ket(d, c), &ket(d, c))]);
            let branch = mat_vec(&proj, &psi);
            let v = match mode {
                Mode::Repaired => {
                    let mut swap = zeros(d, d);
                    for (j, to) in (0..d).map(|j| (j, if j == 0 { a } else if j == a { 0 } else { j })) {
                        swap[to][j] = cx(1.0, 0.0);
                    }
                    let mut neg = zeros(d, d);
                    for l in 0..d {
                        neg[(a + d - l) % d][l] = cx(1.0, 0.0);
                    }
                    mat_mul(&mat_mul(&mat_mul(&u, &swap), &adjoint(&u)), &neg)
                }
                Mode::Literal if a == 0 => eye(2),
                Mode::Literal => vec![vec![cx(1.0, 0.0), C64::default()], vec![C64::default(), cx(-1.0, 0.0)]],
            };
            let full_v = local(d, 3, 1, &v);
            out.push(vec![a, c], &branch, |normed| {
                expectation(&reduced_b(&mat_vec(&full_v, normed), d), &t)
            });
        }
    }
    Ok(out.rows)
}

/// Maximal-channel stage on a normalized three-qubit state.
fn nguyen_naive(psi: &Vector, weight: f64, prefix: &[usize], target: &TargetState, out: &mut Naive) {
    let t: Vector = target.amplitudes().to_vec();
    let (a, b, gamma) = target_params(&t);
    let h = 1.0 / SQRT_2;
    let mu = [vec![cx(a, 0.0), cx(b, 0.0)], vec![cx(b, 0.0), cx(-a, 0.0)]];
    let nu = [
        vec![cx(h, 0.0), C64::from_polar(h, gamma)],
        vec![C64::from_polar(h, -gamma), cx(-h, 0.0)],
    ];
    let phase = vec![vec![cx(1.0, 0.0), C64::default()], vec![C64::default(), C64::from_polar(1.0, 2.0 * gamma)]];
    let psi = mat_vec(&controlled_full(2, 3, 0, 2, |i| i), psi);
    for (ka, m) in mu.iter().enumerate() {
        let mut branch = mat_vec(&local(2, 3, 0, &ket_bra(m, m)), &psi);
        if ka == 0 {
            branch = mat_vec(&local(2, 3, 2, &phase), &branch);
        }
        for (kc, n) in nu.iter().enumerate() {
            let leaf = scaled(
                &mat_vec(&local(2, 3, 2, &ket_bra(n, n)), &branch),
                weight.sqrt(),
            );
            let mut outcome = prefix.to_vec();
            outcome.extend([ka, kc]);
            out.push(outcome, &leaf, |normed| {
                let bob = purify(&reduced_b(normed, 2));
                let v = mat_mul(&gram_schmidt_unitary(&t), &adjoint(&gram_schmidt_unitary(&bob)));
                let fixed = mat_vec(&local(2, 3, 1, &v), normed);
                expectation(&reduced_b(&fixed, 2), &t)
            });
        }
    }
}

fn probabilistic_naive(channel: &ChannelSpec, target: &TargetState) -> Result<Vec<BranchRow>> {
    if channel.d() != 2 || target.d() != 2 {
        return Err(Error::InvalidState("the probabilistic protocol needs qubits".into()));
    }
    let (_, before_measure) = concentration_states(channel.alpha().norm(), channel.beta().norm())?;
    let mut out = Naive { rows: Vec::new() };
    let p0 = ket_bra(&ket(2, 0), &ket(2, 0));
    let p1 = ket_bra(&ket(2, 1), &ket(2, 1));
    let success = mat_vec(&local(2, 3, 2, &p0), &before_measure);
    let w = norm_sqr(&success);
    if w < ZERO_BRANCH {
        for ka in 0..2 {
            for kc in 0..2 {
                out.rows.push(BranchRow {
                    outcome: vec![0, ka, kc],
                    probability: 0.0,
                    fidelity: None,
                });
            }
        }
    } else {
        nguyen_naive(&scaled(&success, 1.0 / w.sqrt()), w, &[0], target, &mut out);
    }
    let fail = mat_vec(&local(2, 3, 2, &p1), &before_measure);
    let t = target.amplitudes().to_vec();
    out.push(vec![1], &fail, |normed| expectation(&reduced_b(normed, 2), &t));
    Ok(out.rows)
}

/// Three-qubit states of the concentration step for real `α ≤ β`: after the
/// controlled filter, and after the second C-NOT (just before `C` is measured).
pub fn concentration_states(alpha: f64, beta: f64) -> Result<(Vec<C64>, Vec<C64>)> {
    if alpha < 0.0 || alpha > beta + 1e-10 || (alpha * alpha + beta * beta - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidState(format!("need 0 ≤ α ≤ β, got ({alpha}, {beta})")));
    }
    let r = (alpha / beta).min(1.0);
    let s = (1.0 - r * r).max(0.0).sqrt();
    let mut psi = vec![C64::default(); 8];
    psi[0] = cx(alpha, 0.0);
    psi[0b110] = cx(beta, 0.0);
    let block = vec![vec![cx(r, 0.0), cx(s, 0.0)], vec![cx(-s, 0.0), cx(r, 0.0)]];
    let cu = {
        let mut m = kron_all(&[ket_bra(&ket(2, 0), &ket(2, 0)), eye(2), eye(2)]);
        add_into(&mut m, &kron_all(&[ket_bra(&ket(2, 1), &ket(2, 1)), eye(2), block]));
        m
    };
    let cnot = controlled_full(2, 3, 0, 2, |i| i);
    let filtered = mat_vec(&cu, &mat_vec(&cnot, &psi));
    let before = mat_vec(&cnot, &filtered);
    Ok((filtered, before))
}

/// Enumerates every branch by explicit full-space matrices and projectors.
///
/// The maximal-channel protocol ignores `channel`.
pub fn enumerate_naive(
    protocol: Protocol,
    channel: &ChannelSpec,
    target: &TargetState,
    mode: Mode,
) -> Result<BranchDistribution> {
    check_dim(channel.d().max(target.d()))?;
    if mode == Mode::Literal && protocol != Protocol::Deterministic {
        return Err(Error::Unsupported(format!("literal mode for `{protocol}`")));
    }
    let (rows, channel) = match protocol {
        Protocol::Deterministic => (deterministic_naive(channel, target, mode)?, channel.clone()),
        Protocol::Probabilistic => (probabilistic_naive(channel, target)?, channel.clone()),
        Protocol::Nguyen => {
            if target.d() != 2 {
                return Err(Error::InvalidState("the Nguyen protocol needs a qubit target".into()));
            }
            let h = 1.0 / SQRT_2;
            let mut psi = vec![C64::default(); 8];
            psi[0] = cx(h, 0.0);
            psi[0b110] = cx(h, 0.0);
            let mut out = Naive { rows: Vec::new() };
            nguyen_naive(&psi, 1.0, &[], target, &mut out);
            (out.rows, ChannelSpec::maximal(2)?)
        }
    };
    Ok(BranchDistribution {
        rows,
        provenance: Provenance {
            protocol,
            mode,
            channel,
            target: target.clone(),
            source: "enumerate_naive".into(),
        },
    })
}

/// Per-outcome entry of a [`ComparisonReport`].
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeCheck {
    pub outcome: Vec<usize>,
    pub expected: f64,
    /// Compared probability (exact) or observed count (sampled).
    pub observed: f64,
    pub trials: Option<u64>,
    /// Absolute difference (exact) or z-score (sampled).
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    pub checks: Vec<OutcomeCheck>,
    pub max_score: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl ComparisonReport {
    fn new(checks: Vec<OutcomeCheck>, threshold: f64) -> Self {
        let max_score = checks.iter().map(|c| c.score).fold(0.0, f64::max);
        Self {
            pass: max_score <= threshold,
            checks,
            max_score,
            threshold,
        }
    }
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            write!(f, "  {:?}: expected {:.12}, observed {:.12}", c.outcome, c.expected, c.observed)?;
            if let Some(n) = c.trials {
                write!(f, " of {n}")?;
            }
            writeln!(f, ", score {:.6e}", c.score)?;
        }
        writeln!(
            f,
            "  max score {:.6e} (threshold {:.1e}): {}",
            self.max_score,
            self.threshold,
            if self.pass { "pass" } else { "FAIL" }
        )
    }
}

/// Per-outcome comparison of two exact distributions, probabilities and
/// (where both exist) fidelities; passes iff every difference ≤ 1e−10.
pub fn compare_exact(fast: &BranchDistribution, naive: &BranchDistribution) -> Result<ComparisonReport> {
    let keys = |d: &BranchDistribution| {
        let mut k: Vec<Vec<usize>> = d.rows.iter().map(|r| r.outcome.clone()).collect();
        k.sort();
        k
    };
    if keys(fast) != keys(naive) {
        return Err(Error::MismatchedOutcomeSpace(format!(
            "{:?} vs {:?}",
            keys(fast),
            keys(naive)
        )));
    }
    let checks = fast
        .rows
        .iter()
        .map(|r| {
            let other = naive.rows.iter().find(|o| o.outcome == r.outcome).expect("same keys");
            let mut score = (r.probability - other.probability).abs();
            if let (Some(a), Some(b)) = (r.fidelity, other.fidelity) {
                score = score.max((a - b).abs());
            }
            OutcomeCheck {
                outcome: r.outcome.clone(),
                expected: other.probability,
                observed: r.probability,
                trials: None,
                score,
            }
        })
        .collect();
    Ok(ComparisonReport::new(checks, EXACT_TOL))
}

/// Scores observed outcome counts against a distribution.
///
/// `z = (n − Np)/√(Np(1 − p))`; an observation of a `p = 0` outcome, or any
/// miss of a `p = 1` outcome, scores infinity.
pub fn compare_counts(dist: &BranchDistribution, counts: &BTreeMap<Vec<usize>, u64>, trials: u64) -> ComparisonReport {
    let n = trials as f64;
    let mut checks: Vec<OutcomeCheck> = dist
        .rows
        .iter()
        .map(|r| {
            let obs = counts.get(&r.outcome).copied().unwrap_or(0);
            let p = r.probability;
            let score = if p <= EDGE_TOL {
                if obs == 0 { 0.0 } else { f64::INFINITY }
            } else if p >= 1.0 - EDGE_TOL {
                if obs == trials { 0.0 } else { f64::INFINITY }
            } else {
                ((obs as f64 - n * p) / (n * p * (1.0 - p)).sqrt()).abs()
            };
            OutcomeCheck {
                outcome: r.outcome.clone(),
                expected: n * p,
                observed: obs as f64,
                trials: Some(trials),
                score,
            }
        })
        .collect();
    for (outcome, &obs) in counts {
        if dist.probability(outcome).is_none() && obs > 0 {
            checks.push(OutcomeCheck {
                outcome: outcome.clone(),
                expected: 0.0,
                observed: obs as f64,
                trials: Some(trials),
                score: f64::INFINITY,
            });
        }
    }
    ComparisonReport::new(checks, Z_THRESHOLD)
}

/// Runs the distribution's protocol `trials` times through the register
/// sampler (trial `i` seeded from `(seed, i)`) and scores the frequencies.
pub fn compare_sampled(dist: &BranchDistribution, trials: u64, seed: u64) -> Result<ComparisonReport> {
    let prov = &dist.provenance;
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = trial_rng(seed, &[i]);
            run_protocol(prov.protocol, &prov.channel, &prov.target, prov.mode, &mut rng).map(|t| t.outcome())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut counts = BTreeMap::new();
    for o in outcomes {
        *counts.entry(o).or_insert(0u64) += 1;
    }
    Ok(compare_counts(dist, &counts, trials))
}
