//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed; the
//! process exits non-zero if any criterion fails.

use std::f64::consts::{FRAC_PI_4, PI, SQRT_2};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng;
use rsp_core::gates::{encoding_unitary_literal, literal_defect_closed_form};
use rsp_core::harness::{parse_config, sweep_rows};
use rsp_core::oracle::{compare_exact, compare_sampled, concentration_states, enumerate_naive, BranchDistribution};
use rsp_core::protocols::{
    exact_outcome_table, run_deterministic_rsp, success_probability, ChannelSpec, Mode, Protocol, TargetState,
    DEFAULT_SUCCESS_TOL,
};
use rsp_core::register::DensityMatrix;
use rsp_core::rng::{trial_rng, TrialRng};
use rsp_core::tomography::{reconstruct_qubit, sample_pauli_expectations, trace_distance};
use rsp_core::C64;

const EXACT_PROB_TOL: f64 = 1e-12;
const FIDELITY_TOL: f64 = 1e-10;
const Z_GATE: f64 = 4.0;
const SWEEP_BUDGET: Duration = Duration::from_secs(10);
const QUDIT_BUDGET: Duration = Duration::from_secs(30);
const DEFECT_TOL: f64 = 1e-10;
// sin(π) is 1.2e-16 in f64, so "zero" defect means zero up to roundoff
const ZERO_DEFECT_TOL: f64 = 1e-15;
const ORACLE_TOL: f64 = 1e-10;
const TOMO_SHOTS: u64 = 100_000;
const TOMO_TRACE_DISTANCE: f64 = 0.02;
const TOMO_PASS_FRACTION: f64 = 0.95;

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn random_unit(d: usize, rng: &mut TrialRng) -> Vec<C64> {
    let v: Vec<C64> = (0..d)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / n).collect()
}

fn random_target(d: usize, rng: &mut TrialRng) -> TargetState {
    TargetState::new(random_unit(d, rng)).unwrap()
}

/// Strictly positive Schmidt magnitudes with random phases.
fn random_channel(d: usize, rng: &mut TrialRng) -> ChannelSpec {
    let v: Vec<C64> = (0..d)
        .map(|_| C64::from_polar(rng.random_range(0.05..1.0), rng.random_range(0.0..2.0 * PI)))
        .collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    ChannelSpec::new(v.into_iter().map(|z| z / n).collect()).unwrap()
}

fn argv(s: &str) -> Vec<String> {
    std::iter::once("rsp".to_string())
        .chain(s.split_whitespace().map(str::to_string))
        .collect()
}

/// `|successes − np| ≤ 4√(np(1−p))`, exact at p ∈ {0, 1}.
fn within_binomial(successes: u64, trials: u64, p: f64) -> bool {
    let n = trials as f64;
    if p <= EXACT_PROB_TOL {
        return successes == 0;
    }
    if p >= 1.0 - EXACT_PROB_TOL {
        return successes == trials;
    }
    (successes as f64 - n * p).abs() <= Z_GATE * (n * p * (1.0 - p)).sqrt()
}

fn fig1_probabilistic_sweep() -> Verdict {
    let start = Instant::now();
    let config = parse_config(argv(
        "sweep --protocol probabilistic --theta-min 0 --theta-max pi/4 --points 21 --trials 10000 --seed 2024",
    ))
    .unwrap();
    let rows = sweep_rows(&config).unwrap();
    let elapsed = start.elapsed();
    let mut worst_exact: f64 = 0.0;
    let mut sampled_ok = true;
    for r in &rows {
        worst_exact = worst_exact.max((r.exact_prob - 2.0 * r.theta.sin().powi(2)).abs());
        sampled_ok &= within_binomial(r.successes, r.trials, r.exact_prob);
    }
    verdict(
        rows.len() == 21 && worst_exact <= EXACT_PROB_TOL && sampled_ok && elapsed < SWEEP_BUDGET,
        format!(
            "21-point sweep: max |exact − 2sin²θ| = {worst_exact:.2e}, est within 4σ: {sampled_ok}, runtime {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn fig3_deterministic_sweep() -> Verdict {
    let config = parse_config(argv(
        "sweep --protocol deterministic --mode repaired --theta-min 0 --theta-max pi/4 --points 21 --trials 2000 --seed 2024",
    ))
    .unwrap();
    let rows = sweep_rows(&config).unwrap();
    let mut worst: f64 = 0.0;
    let mut all_succeeded = true;
    for r in &rows {
        worst = worst.max((r.exact_prob - 1.0).abs());
        all_succeeded &= r.successes == r.trials;
    }
    let target = TargetState::new(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
    for theta in [1e-3, 1e-6, 1e-9, 1e-12] {
        let ch = ChannelSpec::from_theta(theta).unwrap();
        let table = exact_outcome_table(Protocol::Deterministic, &ch, &target, Mode::Repaired).unwrap();
        worst = worst.max((success_probability(&table, DEFAULT_SUCCESS_TOL) - 1.0).abs());
    }
    verdict(
        worst <= EXACT_PROB_TOL && all_succeeded,
        format!("max |exact − 1| = {worst:.2e} over 21 grid points and θ down to 1e−12; every sampled trial succeeded: {all_succeeded}"),
    )
}

fn qudit_determinism() -> Verdict {
    let start = Instant::now();
    let mut min_f: f64 = 1.0;
    let mut worst_sum: f64 = 0.0;
    let mut errors = 0;
    for d in [2usize, 3, 4, 5, 8] {
        let mut rng = trial_rng(3, &[d as u64]);
        for _ in 0..50 {
            let ch = random_channel(d, &mut rng);
            let t = random_target(d, &mut rng);
            match exact_outcome_table(Protocol::Deterministic, &ch, &t, Mode::Repaired) {
                Ok(table) => {
                    worst_sum = worst_sum.max((table.total_probability() - 1.0).abs());
                    for r in table.rows.iter().filter(|r| r.probability > 0.0) {
                        min_f = min_f.min(r.fidelity.unwrap_or(0.0));
                    }
                }
                Err(_) => errors += 1,
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        errors == 0 && min_f >= 1.0 - FIDELITY_TOL && worst_sum <= EXACT_PROB_TOL && elapsed < QUDIT_BUDGET,
        format!(
            "250 configs, d ∈ {{2,3,4,5,8}}: min branch fidelity {min_f:.15}, max |Σp − 1| = {worst_sum:.2e}, runtime {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn nguyen_baseline() -> Verdict {
    let mut rng = trial_rng(4, &[]);
    let mut worst_p: f64 = 0.0;
    let mut min_f: f64 = 1.0;
    let mut rows = 0;
    for _ in 0..20 {
        let t = random_target(2, &mut rng);
        let table = exact_outcome_table(Protocol::Nguyen, &ChannelSpec::maximal(2).unwrap(), &t, Mode::Repaired).unwrap();
        rows += table.rows.len();
        for r in &table.rows {
            worst_p = worst_p.max((r.probability - 0.25).abs());
            min_f = min_f.min(r.fidelity.unwrap_or(0.0));
        }
    }
    verdict(
        rows == 80 && worst_p <= EXACT_PROB_TOL && min_f >= 1.0 - FIDELITY_TOL,
        format!("20 targets × 4 branches: max |p − 0.25| = {worst_p:.2e}, min fidelity {min_f:.15}"),
    )
}

fn probabilistic_branch_weights() -> Verdict {
    let t = TargetState::new(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)]).unwrap();
    let mut worst: f64 = 0.0;
    let mut worst_amp: f64 = 0.0;
    for i in 0..21 {
        let theta = FRAC_PI_4 * i as f64 / 20.0;
        let (a, b) = (theta.sin(), theta.cos());
        let ch = ChannelSpec::qubit(a, b).unwrap();
        let dist = enumerate_naive(Protocol::Probabilistic, &ch, &t, Mode::Repaired).unwrap();
        let m = dist.marginal(1);
        worst = worst
            .max((m[&vec![0]] - 2.0 * a * a).abs())
            .max((m[&vec![1]] - (b * b - a * a)).abs());
        let (filtered, _) = concentration_states(a, b).unwrap();
        // compared in squared magnitude: √(β² − α²) is ill-conditioned near α = β
        let gap = filtered[0b110];
        worst_amp = worst_amp
            .max((gap.norm_sqr() - (b * b - a * a)).abs())
            .max(gap.im.abs() + (-gap.re).max(0.0))
            .max((filtered[0b000] - C64::new(a, 0.0)).norm())
            .max((filtered[0b111] - C64::new(a, 0.0)).norm());
    }
    verdict(
        worst <= EXACT_PROB_TOL && worst_amp <= EXACT_PROB_TOL,
        format!("21 α values: max weight error {worst:.2e}, max |110⟩ (squared), |000⟩, |111⟩ amplitude error {worst_amp:.2e}"),
    )
}

fn unitarity_audit() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut endpoints: f64 = 0.0;
    for i in 0..10 {
        for j in 0..10 {
            let x0 = i as f64 / 9.0;
            let x1 = (1.0 - x0 * x0).max(0.0).sqrt();
            let theta = 2.0 * PI * j as f64 / 10.0;
            let g = encoding_unitary_literal(x0, x1, theta);
            worst = worst.max((g.defect() - literal_defect_closed_form(x0, x1, theta)).abs());
            worst = worst.max((g.defect() - 2.0 * (x0 * x1 * theta.sin()).abs() * SQRT_2).abs());
            for th in [0.0, PI] {
                endpoints = endpoints.max(encoding_unitary_literal(x0, x1, th).defect());
            }
        }
    }
    let mut rng = trial_rng(6, &[]);
    let mut table_diff: f64 = 0.0;
    for _ in 0..20 {
        let x0: f64 = rng.random_range(-1.0..1.0);
        let t = TargetState::new(vec![C64::new(x0, 0.0), C64::new((1.0 - x0 * x0).sqrt(), 0.0)]).unwrap();
        let ch = random_channel(2, &mut rng);
        let lit = exact_outcome_table(Protocol::Deterministic, &ch, &t, Mode::Literal).unwrap();
        let rep = exact_outcome_table(Protocol::Deterministic, &ch, &t, Mode::Repaired).unwrap();
        for (a, b) in lit.rows.iter().zip(&rep.rows) {
            table_diff = table_diff.max((a.probability - b.probability).abs());
            if let (Some(fa), Some(fb)) = (a.fidelity, b.fidelity) {
                table_diff = table_diff.max((fa - fb).abs());
            }
            if a.outcome != b.outcome || a.fidelity.is_some() != b.fidelity.is_some() {
                table_diff = f64::INFINITY;
            }
        }
    }
    verdict(
        worst <= DEFECT_TOL && endpoints <= ZERO_DEFECT_TOL && table_diff <= EXACT_PROB_TOL,
        format!(
            "100-point grid: max |defect − 2√2|x₀||x₁||sinθ|| = {worst:.2e}, max defect at θ ∈ {{0, π}} = {endpoints:.1e}, literal vs repaired (θ = 0 targets) max diff {table_diff:.2e}"
        ),
    )
}

fn oracle_equivalence() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut configs = 0;
    let mut failures = 0;
    let groups: [(Protocol, Mode, &[usize]); 4] = [
        (Protocol::Deterministic, Mode::Repaired, &[2, 3, 4]),
        (Protocol::Deterministic, Mode::Literal, &[2]),
        (Protocol::Probabilistic, Mode::Repaired, &[2]),
        (Protocol::Nguyen, Mode::Repaired, &[2]),
    ];
    for (g, (protocol, mode, dims)) in groups.iter().enumerate() {
        for &d in dims.iter() {
            let mut rng = trial_rng(7, &[g as u64, d as u64]);
            for _ in 0..30 {
                let ch = match protocol {
                    Protocol::Probabilistic => ChannelSpec::from_theta(rng.random_range(0.0..FRAC_PI_4)).unwrap(),
                    _ => random_channel(d, &mut rng),
                };
                let t = random_target(d, &mut rng);
                configs += 1;
                let fast = exact_outcome_table(*protocol, &ch, &t, *mode).unwrap();
                let fast = BranchDistribution::from_table(&fast, &ch, &t);
                let naive = enumerate_naive(*protocol, &ch, &t, *mode).unwrap();
                let r = compare_exact(&fast, &naive).unwrap();
                worst = worst.max(r.max_score);
                if !r.pass || r.max_score > ORACLE_TOL {
                    failures += 1;
                }
            }
        }
    }
    let sampled = [
        (Protocol::Deterministic, Mode::Repaired, ChannelSpec::qubit(0.6, 0.8).unwrap(), 2usize),
        (Protocol::Deterministic, Mode::Repaired, random_channel(3, &mut trial_rng(8, &[])), 3),
        (Protocol::Deterministic, Mode::Literal, ChannelSpec::qubit(0.6, 0.8).unwrap(), 2),
        (Protocol::Probabilistic, Mode::Repaired, ChannelSpec::qubit(0.6, 0.8).unwrap(), 2),
        (Protocol::Nguyen, Mode::Repaired, ChannelSpec::maximal(2).unwrap(), 2),
    ];
    let mut max_z: f64 = 0.0;
    let mut sampled_ok = true;
    for (k, (protocol, mode, ch, d)) in sampled.into_iter().enumerate() {
        let t = random_target(d, &mut trial_rng(9, &[k as u64]));
        let dist = enumerate_naive(protocol, &ch, &t, mode).unwrap();
        let r = compare_sampled(&dist, 10_000, 1000 + k as u64).unwrap();
        max_z = max_z.max(r.max_score);
        sampled_ok &= r.pass;
    }
    verdict(
        failures == 0 && sampled_ok,
        format!("{configs} exact configs: max diff {worst:.2e}; 5 sampled configs at 10⁴ trials: max |z| = {max_z:.2}"),
    )
}

fn tomography() -> Verdict {
    let mut rng = trial_rng(10, &[]);
    let ch = ChannelSpec::qubit(0.6, 0.8).unwrap();
    let mut good = 0;
    let mut physical = 0;
    let mut worst: f64 = 0.0;
    let n = 20;
    for k in 0..n {
        let t = random_target(2, &mut rng);
        let run = run_deterministic_rsp(&ch, &t, Mode::Repaired, &mut trial_rng(11, &[k])).unwrap();
        let exact = DensityMatrix::from_pure(&run.bob_state).unwrap();
        let est = sample_pauli_expectations(&run.bob_state, TOMO_SHOTS, &mut trial_rng(12, &[k])).unwrap();
        let rho = reconstruct_qubit(&est);
        if rho.check_invariants(1e-10).is_ok() {
            physical += 1;
        }
        let td = trace_distance(&rho, &exact).unwrap();
        worst = worst.max(td);
        if td <= TOMO_TRACE_DISTANCE {
            good += 1;
        }
    }
    verdict(
        good as f64 >= TOMO_PASS_FRACTION * n as f64 && physical == n,
        format!("{good}/{n} within trace distance {TOMO_TRACE_DISTANCE} (max {worst:.4}), {physical}/{n} physical"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("probabilistic sweep reproduces 2sin²θ", fig1_probabilistic_sweep),
        ("deterministic sweep is flat at 1", fig3_deterministic_sweep),
        ("qudit protocol is deterministic", qudit_determinism),
        ("maximal-channel baseline has four 25% branches", nguyen_baseline),
        ("concentration branch weights", probabilistic_branch_weights),
        ("literal encoder unitarity audit", unitarity_audit),
        ("fast path matches brute-force oracle", oracle_equivalence),
        ("tomography recovers Bob's state", tomography),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let v = f();
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {} [{}] {name}: {}",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
