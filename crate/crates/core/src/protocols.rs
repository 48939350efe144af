//! Remote state preparation protocols.
//!
//! Three protocols are implemented on top of [`StateRegister`]:
//!
//! - [`Protocol::Deterministic`]: ancilla `C`, `CADD(A→C)`, encoder on `A`,
//!   `CSUB(A→B)`, `CADD(B→A)`, computational measurement of `A` then `C`,
//!   and a correction on `B`. Succeeds with certainty for any Schmidt channel.
//! - [`Protocol::Probabilistic`]: the concentration baseline. A controlled
//!   filter on `A, C` leaves a maximal channel with probability `2|α|²`; the
//!   preparation then finishes with the maximal-channel protocol.
//! - [`Protocol::Nguyen`]: the maximal-channel protocol with an ancilla, two
//!   information-dependent measurements and four equally likely outcomes.
//!
//! Every protocol is written once against a [`Resolver`] that either samples
//! measurements from an RNG or forces a given outcome path; the exact outcome
//! tables are produced by forcing every path.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::gates::{
    controlled_shift, correction_unitary, cu_concentration, encoding_unitary,
    encoding_unitary_literal, nguyen_bases, pauli_z, GateMatrix, ShiftTable,
};
use crate::register::{basis_register, channel_register, MeasurementRecord, StateRegister};
use crate::tensor::{c, fidelity_pure, transport_unitary, CMat, CVec, C64, STRUCTURAL_TOL};

/// Default fidelity threshold: a run succeeds when `F ≥ 1 − 1e−9`.
pub const DEFAULT_SUCCESS_TOL: f64 = 1e-9;

/// Schmidt coefficients `λ₀ … λ_{d−1}` of the shared channel `Σ λₘ|mm⟩_AB`.
///
/// For qubits `λ₀ = α` and `λ₁ = β`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSpec {
    lambdas: Vec<C64>,
}

impl ChannelSpec {
    pub fn new(lambdas: Vec<C64>) -> Result<Self> {
        let d = lambdas.len();
        if d < 2 {
            return Err(Error::InvalidState(format!("channel dimension {d} < 2")));
        }
        let v = CVec::new(lambdas)?;
        if !v.is_normalized(STRUCTURAL_TOL) {
            return Err(Error::InvalidState(format!(
                "Schmidt coefficients have norm {:.12}",
                v.norm()
            )));
        }
        Ok(Self {
            lambdas: v.into_entries(),
        })
    }

    pub fn qubit(alpha: f64, beta: f64) -> Result<Self> {
        Self::new(vec![c(alpha, 0.0), c(beta, 0.0)])
    }

    /// `|α| = sinθ`, `|β| = cosθ`.
    pub fn from_theta(theta: f64) -> Result<Self> {
        Self::qubit(theta.sin(), theta.cos())
    }

    pub fn maximal(d: usize) -> Result<Self> {
        Self::new(vec![c(1.0 / (d as f64).sqrt(), 0.0); d])
    }

    pub fn d(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[C64] {
        &self.lambdas
    }

    pub fn alpha(&self) -> C64 {
        self.lambdas[0]
    }

    pub fn beta(&self) -> C64 {
        self.lambdas[1]
    }
}

impl fmt::Display for ChannelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", CVec::new(self.lambdas.clone()).map_err(|_| fmt::Error)?)
    }
}

/// Amplitudes `x₀ … x_{d−1}` of the state to prepare at Bob's side.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetState {
    amplitudes: Vec<C64>,
}

impl TargetState {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(Error::InvalidState("target dimension must be at least 2".into()));
        }
        let v = CVec::new(amplitudes)?;
        if !v.is_normalized(STRUCTURAL_TOL) {
            return Err(Error::InvalidState(format!(
                "target amplitudes have norm {:.12}",
                v.norm()
            )));
        }
        Ok(Self {
            amplitudes: v.into_entries(),
        })
    }

    /// Qubit target `x₀|0⟩ + |x₁|e^{iθ}|1⟩` with real `x₀`.
    pub fn qubit(x0: f64, x1mag: f64, theta: f64) -> Result<Self> {
        Self::new(vec![c(x0, 0.0), C64::from_polar(x1mag, theta)])
    }

    pub fn d(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn as_cvec(&self) -> CVec {
        CVec::new(self.amplitudes.clone()).expect("validated on construction")
    }

    /// Amplitudes rephased so the first non-zero entry is real and positive.
    pub fn canonical(&self) -> Vec<C64> {
        let lead = self
            .amplitudes
            .iter()
            .find(|z| z.norm() > 0.0)
            .copied()
            .unwrap_or(c(1.0, 0.0));
        let phase = (lead / lead.norm()).conj();
        self.amplitudes.iter().map(|z| z * phase).collect()
    }

    /// `(x₀, |x₁|, θ)` of the canonical qubit form.
    pub fn qubit_params(&self) -> Result<(f64, f64, f64)> {
        if self.d() != 2 {
            return Err(Error::Unsupported(format!(
                "qubit parameters of a d = {} target",
                self.d()
            )));
        }
        let canon = self.canonical();
        let x1 = canon[1];
        let theta = if x1.norm() > 0.0 { x1.arg() } else { 0.0 };
        Ok((canon[0].re, x1.norm(), theta))
    }
}

impl fmt::Display for TargetState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_cvec())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Protocol {
    Deterministic,
    Nguyen,
    Probabilistic,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Deterministic => "deterministic",
            Protocol::Nguyen => "nguyen",
            Protocol::Probabilistic => "probabilistic",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "deterministic" => Ok(Protocol::Deterministic),
            "probabilistic" => Ok(Protocol::Probabilistic),
            "nguyen" => Ok(Protocol::Nguyen),
            other => Err(Error::InvalidState(format!("unknown protocol `{other}`"))),
        }
    }
}

/// Which encoder the deterministic protocol uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Unitary encoder with first column equal to the target; corrections `V_m`.
    Repaired,
    /// Qubit encoder exactly as printed, possibly non-unitary; corrections `I`, `σ_z`.
    Literal,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Repaired => "repaired",
            Mode::Literal => "literal",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "repaired" => Ok(Mode::Repaired),
            "literal" => Ok(Mode::Literal),
            other => Err(Error::InvalidState(format!("unknown mode `{other}`"))),
        }
    }
}

/// One entry of a transcript: a gate application or a protocol event.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub description: String,
    pub targets: Vec<String>,
    pub defect: f64,
    pub non_unitary: bool,
}

/// Alice → Bob classical message: outcome indices plus the agreed correction rule.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalMessage {
    pub outcomes: Vec<usize>,
    pub descriptor: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Correction {
    pub name: String,
    pub matrix: CMat,
    /// Whether the operator depends on the target (and not only on outcomes).
    pub target_dependent: bool,
}

/// Record of one protocol run.
#[derive(Clone, Debug, PartialEq)]
pub struct Transcript {
    pub protocol: Protocol,
    pub mode: Mode,
    pub channel: ChannelSpec,
    pub target: TargetState,
    pub steps: Vec<Step>,
    pub measurements: Vec<MeasurementRecord>,
    pub messages: Vec<ClassicalMessage>,
    pub correction: Option<Correction>,
    /// Norm of the global state before measurement (≠ 1 only for non-unitary encoders).
    pub raw_norm: f64,
    pub bob_state: CVec,
    pub fidelity: f64,
    /// Alice declared the run failed (probabilistic failure branch).
    pub aborted: bool,
    pub success: bool,
    pub success_tol: f64,
}

impl Transcript {
    /// All measurement outcomes in the order they were obtained.
    pub fn outcome(&self) -> Vec<usize> {
        self.measurements
            .iter()
            .flat_map(|m| m.outcome.iter().copied())
            .collect()
    }

    /// Product of the conditional probabilities of every measurement.
    pub fn path_probability(&self) -> f64 {
        self.measurements.iter().map(|m| m.probability).product()
    }

    pub fn has_non_unitary_step(&self) -> bool {
        self.steps.iter().any(|s| s.non_unitary)
    }

    /// Re-evaluates the success flag against a different fidelity tolerance.
    pub fn with_success_tol(mut self, tol: f64) -> Self {
        self.success_tol = tol;
        self.success = !self.aborted && self.fidelity >= 1.0 - tol;
        self
    }

    /// Single machine-readable line.
    pub fn summary_line(&self) -> String {
        let outcome: Vec<String> = self.outcome().iter().map(usize::to_string).collect();
        format!(
            "summary protocol={} mode={} d={} outcome={} fidelity={:.12} success={} aborted={} non_unitary={}",
            self.protocol,
            self.mode,
            self.target.d(),
            outcome.join(","),
            self.fidelity,
            self.success,
            self.aborted,
            self.has_non_unitary_step()
        )
    }
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "protocol: {} ({}), d = {}", self.protocol, self.mode, self.target.d())?;
        writeln!(f, "channel λ: {}", self.channel)?;
        writeln!(f, "target x: {}", self.target)?;
        writeln!(f, "steps:")?;
        for (i, s) in self.steps.iter().enumerate() {
            write!(f, "  {:>2}. {}", i + 1, s.description)?;
            if !s.targets.is_empty() {
                write!(f, " on [{}] (defect {:.3e})", s.targets.join(", "), s.defect)?;
            }
            if s.non_unitary {
                write!(f, "  ** NON-UNITARY STEP **")?;
            }
            writeln!(f)?;
        }
        if (self.raw_norm - 1.0).abs() > 1e-12 {
            writeln!(f, "raw norm before measurement: {:.12} (renormalized)", self.raw_norm)?;
        }
        writeln!(f, "measurements:")?;
        for m in &self.measurements {
            writeln!(
                f,
                "  [{}] -> {:?} (p = {:.12})",
                m.subsystems.join(", "),
                m.outcome,
                m.probability
            )?;
        }
        for msg in &self.messages {
            writeln!(f, "classical message Alice -> Bob: {:?} ({})", msg.outcomes, msg.descriptor)?;
        }
        match &self.correction {
            Some(corr) => {
                writeln!(
                    f,
                    "correction on B: {}{}",
                    corr.name,
                    if corr.target_dependent { " (target-dependent)" } else { "" }
                )?;
                for line in corr.matrix.to_string().lines() {
                    writeln!(f, "    {line}")?;
                }
            }
            None => writeln!(f, "correction on B: none")?,
        }
        writeln!(f, "Bob state: {}", self.bob_state)?;
        writeln!(f, "fidelity: {:.12}", self.fidelity)?;
        let verdict = if self.aborted {
            "FAILED (aborted by Alice)"
        } else if self.success {
            "SUCCESS"
        } else {
            "FAILED"
        };
        writeln!(f, "result: {verdict}")
    }
}

/// One measurement branch with its exact probability.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeRow {
    pub outcome: Vec<usize>,
    pub probability: f64,
    /// Bob's post-correction state; `None` for impossible branches.
    pub bob_state: Option<CVec>,
    pub fidelity: Option<f64>,
    pub aborted: bool,
}

/// Every measurement branch of one protocol configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeTable {
    pub protocol: Protocol,
    pub mode: Mode,
    pub rows: Vec<OutcomeRow>,
    /// Norm of the global state before measurement.
    pub raw_norm: f64,
}

impl OutcomeTable {
    pub fn total_probability(&self) -> f64 {
        self.rows.iter().map(|r| r.probability).sum()
    }

    pub fn row(&self, outcome: &[usize]) -> Option<&OutcomeRow> {
        self.rows.iter().find(|r| r.outcome == outcome)
    }
}

/// Probability mass of branches where Bob ends with fidelity `≥ 1 − tol`.
pub fn success_probability(table: &OutcomeTable, tol: f64) -> f64 {
    table
        .rows
        .iter()
        .filter(|r| !r.aborted && r.fidelity.is_some_and(|f| f >= 1.0 - tol))
        .map(|r| r.probability)
        .sum()
}

/// Supplies measurement outcomes: sampled from an RNG or forced along a path.
pub enum Resolver<'a> {
    Sample(&'a mut dyn RngCore),
    Force { path: &'a [usize], next: usize },
}

impl<'a> Resolver<'a> {
    pub fn sample(rng: &'a mut dyn RngCore) -> Self {
        Resolver::Sample(rng)
    }

    pub fn force(path: &'a [usize]) -> Self {
        Resolver::Force { path, next: 0 }
    }

    /// `Ok(None)` when a forced outcome has probability zero.
    fn measure(
        &mut self,
        reg: &StateRegister,
        target: &str,
        basis: Option<&CMat>,
    ) -> Result<Option<(MeasurementRecord, StateRegister)>> {
        match self {
            Resolver::Sample(rng) => {
                let mut rng = &mut **rng;
                let out = match basis {
                    Some(b) => reg.measure_in_basis(target, b, &mut rng)?,
                    None => reg.measure(&[target], &mut rng)?,
                };
                Ok(Some(out))
            }
            Resolver::Force { path, next } => {
                let k = *path.get(*next).ok_or_else(|| {
                    Error::ShapeError(format!("forced path {path:?} is too short"))
                })?;
                *next += 1;
                let collapsed = match basis {
                    Some(b) => reg.collapse_in_basis(target, b, k),
                    None => reg.collapse(&[target], &[k]),
                };
                match collapsed {
                    Ok((p, post)) => Ok(Some((
                        MeasurementRecord {
                            subsystems: vec![target.to_string()],
                            outcome: vec![k],
                            probability: p,
                        },
                        post,
                    ))),
                    Err(Error::DegenerateState(0.0)) => Ok(None),
                    Err(e) => Err(e),
                }
            }
        }
    }

    fn finished(&self) -> bool {
        match self {
            Resolver::Sample(_) => true,
            Resolver::Force { path, next } => *next == path.len(),
        }
    }
}

struct Draft {
    steps: Vec<Step>,
    measurements: Vec<MeasurementRecord>,
    messages: Vec<ClassicalMessage>,
    raw_norm: f64,
}

impl Draft {
    fn new() -> Self {
        Self {
            steps: Vec::new(),
            measurements: Vec::new(),
            messages: Vec::new(),
            raw_norm: 1.0,
        }
    }

    fn note(&mut self, description: impl Into<String>) {
        self.steps.push(Step {
            description: description.into(),
            targets: Vec::new(),
            defect: 0.0,
            non_unitary: false,
        });
    }

    fn gate(&mut self, reg: &StateRegister, g: &GateMatrix, targets: &[&str]) -> Result<StateRegister> {
        let non_unitary = g.defect() > STRUCTURAL_TOL;
        let out = if non_unitary {
            reg.apply_gate_unchecked(g, targets)?
        } else {
            reg.apply_gate(g, targets)?
        };
        self.steps.push(Step {
            description: g.name().to_string(),
            targets: targets.iter().map(|s| s.to_string()).collect(),
            defect: g.defect(),
            non_unitary,
        });
        Ok(out)
    }

    fn measure(
        &mut self,
        resolver: &mut Resolver<'_>,
        reg: &StateRegister,
        target: &str,
        basis: Option<&CMat>,
    ) -> Result<Option<(usize, StateRegister)>> {
        Ok(resolver.measure(reg, target, basis)?.map(|(rec, post)| {
            let k = rec.outcome[0];
            self.measurements.push(rec);
            (k, post)
        }))
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        self,
        protocol: Protocol,
        mode: Mode,
        channel: &ChannelSpec,
        target: &TargetState,
        correction: Option<Correction>,
        bob_state: CVec,
        aborted: bool,
    ) -> Result<Transcript> {
        let fidelity = fidelity_pure(&bob_state, &target.as_cvec())?;
        Ok(Transcript {
            protocol,
            mode,
            channel: channel.clone(),
            target: target.clone(),
            steps: self.steps,
            measurements: self.measurements,
            messages: self.messages,
            correction,
            raw_norm: self.raw_norm,
            bob_state,
            fidelity,
            aborted,
            success: !aborted && fidelity >= 1.0 - DEFAULT_SUCCESS_TOL,
            success_tol: DEFAULT_SUCCESS_TOL,
        })
    }
}

fn with_ancilla(channel: &ChannelSpec) -> Result<StateRegister> {
    let ancilla = basis_register(&[channel.d()], &[0])?.with_labels(&["C"])?;
    channel_register(channel)?.tensor(&ancilla)
}

fn check_mode(protocol: Protocol, mode: Mode) -> Result<()> {
    if mode == Mode::Literal && protocol != Protocol::Deterministic {
        return Err(Error::Unsupported(format!(
            "literal mode only applies to the deterministic protocol, not `{protocol}`"
        )));
    }
    Ok(())
}

fn validate(protocol: Protocol, channel: &ChannelSpec, target: &TargetState, mode: Mode) -> Result<()> {
    check_mode(protocol, mode)?;
    match protocol {
        Protocol::Deterministic => {
            if channel.d() != target.d() {
                return Err(Error::InvalidState(format!(
                    "channel dimension {} differs from target dimension {}",
                    channel.d(),
                    target.d()
                )));
            }
            if mode == Mode::Literal && target.d() != 2 {
                return Err(Error::Unsupported(format!(
                    "literal mode is defined for qubits only (d = {})",
                    target.d()
                )));
            }
        }
        Protocol::Probabilistic => {
            if channel.d() != 2 || target.d() != 2 {
                return Err(Error::InvalidState(
                    "the probabilistic protocol needs a qubit channel and target".into(),
                ));
            }
            if channel
                .lambdas()
                .iter()
                .any(|l| l.im.abs() > STRUCTURAL_TOL || l.re < -STRUCTURAL_TOL)
            {
                return Err(Error::InvalidState(
                    "the probabilistic protocol needs real, non-negative α and β".into(),
                ));
            }
            if channel.alpha().norm() > channel.beta().norm() + STRUCTURAL_TOL {
                return Err(Error::InvalidState(format!(
                    "the probabilistic protocol requires |α| ≤ |β|, got |α| = {}, |β| = {}",
                    channel.alpha().norm(),
                    channel.beta().norm()
                )));
            }
        }
        Protocol::Nguyen => {
            if target.d() != 2 {
                return Err(Error::InvalidState("the Nguyen protocol needs a qubit target".into()));
            }
        }
    }
    Ok(())
}

fn deterministic(
    channel: &ChannelSpec,
    target: &TargetState,
    mode: Mode,
    resolver: &mut Resolver<'_>,
) -> Result<Option<Transcript>> {
    validate(Protocol::Deterministic, channel, target, mode)?;
    let d = channel.d();
    let mut draft = Draft::new();
    let mut reg = with_ancilla(channel)?;
    draft.note("prepare Σ λ_m|mm⟩_AB ⊗ |0⟩_C");
    reg = draft.gate(&reg, &controlled_shift(d, &ShiftTable::cadd(d)), &["A", "C"])?;

    let encoder = match mode {
        Mode::Repaired => encoding_unitary(target)?,
        Mode::Literal => {
            let (x0, x1, theta) = target.qubit_params()?;
            encoding_unitary_literal(x0, x1, theta)
        }
    };
    reg = draft.gate(&reg, &encoder, &["A"])?;
    let csub = controlled_shift(d, &ShiftTable::csub(d)).with_name(format!("CSUB{d}"));
    reg = draft.gate(&reg, &csub, &["A", "B"])?;
    reg = draft.gate(&reg, &controlled_shift(d, &ShiftTable::cadd(d)), &["B", "A"])?;
    draft.note("distribute B to Bob");

    let (normed, raw) = reg.renormalized()?;
    draft.raw_norm = raw;
    reg = normed;

    let Some((a, reg)) = draft.measure(resolver, &reg, "A", None)? else {
        return Ok(None);
    };
    let Some((cc, reg)) = draft.measure(resolver, &reg, "C", None)? else {
        return Ok(None);
    };
    if a != cc {
        return Err(Error::InvalidState(format!(
            "outcome (A, C) = ({a}, {cc}) is outside the support of the protocol state"
        )));
    }
    let (gate, descriptor, target_dependent) = match mode {
        Mode::Repaired => (
            correction_unitary(&encoder, a)?,
            "correction V_m = U·Π₀ₘ·U†·N_m from the agreed encoder",
            true,
        ),
        Mode::Literal => {
            let g = if a == 0 {
                GateMatrix::new("I", CMat::identity(2), vec![2])?
            } else {
                pauli_z(2)
            };
            (g, "correction I for 00, σ_z for 11", false)
        }
    };
    draft.messages.push(ClassicalMessage {
        outcomes: vec![a, cc],
        descriptor: descriptor.into(),
    });
    let reg = draft.gate(&reg, &gate, &["B"])?;
    let bob = reg.subsystem_state("B")?;
    let correction = Correction {
        name: gate.name().to_string(),
        matrix: gate.matrix().clone(),
        target_dependent,
    };
    draft
        .finish(Protocol::Deterministic, mode, channel, target, Some(correction), bob, false)
        .map(Some)
}

/// Target parameters `(a, b, γ)` with `x ∝ a|0⟩ + b e^{iγ}|1⟩`, `a, b ≥ 0`.
fn nguyen_params(target: &TargetState) -> Result<(f64, f64, f64)> {
    let (x0, x1, theta) = target.qubit_params()?;
    Ok((x0, x1, theta))
}

/// Maximal-channel stage on a register `A, B, C` whose `A, B` hold a maximal
/// channel and `C = |0⟩`.
fn nguyen_stage(
    mut draft: Draft,
    reg: StateRegister,
    protocol: Protocol,
    channel: &ChannelSpec,
    target: &TargetState,
    resolver: &mut Resolver<'_>,
) -> Result<Option<Transcript>> {
    let (a, b, gamma) = nguyen_params(target)?;
    let (mu, nu, phase) = nguyen_bases(a, b, gamma)?;
    let reg = draft.gate(&reg, &controlled_shift(2, &ShiftTable::cadd(2)), &["A", "C"])?;
    draft.note("distribute B to Bob");
    let Some((ka, reg)) = draft.measure(resolver, &reg, "A", Some(&mu))? else {
        return Ok(None);
    };
    let reg = if ka == 0 { draft.gate(&reg, &phase, &["C"])? } else { reg };
    let Some((kc, reg)) = draft.measure(resolver, &reg, "C", Some(&nu))? else {
        return Ok(None);
    };
    draft.messages.push(ClassicalMessage {
        outcomes: vec![ka, kc],
        descriptor: "correction maps Bob's conditional state onto the target".into(),
    });
    let raw = reg.subsystem_state("B")?;
    let v = GateMatrix::new(
        format!("W{ka}{kc}"),
        transport_unitary(&raw, &target.as_cvec())?,
        vec![2],
    )?;
    let reg = draft.gate(&reg, &v, &["B"])?;
    let bob = reg.subsystem_state("B")?;
    let correction = Correction {
        name: v.name().to_string(),
        matrix: v.matrix().clone(),
        target_dependent: true,
    };
    draft
        .finish(protocol, Mode::Repaired, channel, target, Some(correction), bob, false)
        .map(Some)
}

fn nguyen(target: &TargetState, resolver: &mut Resolver<'_>) -> Result<Option<Transcript>> {
    let channel = ChannelSpec::maximal(2)?;
    validate(Protocol::Nguyen, &channel, target, Mode::Repaired)?;
    let mut draft = Draft::new();
    let reg = with_ancilla(&channel)?;
    draft.note("prepare (|00⟩ + |11⟩)_AB/√2 ⊗ |0⟩_C");
    nguyen_stage(draft, reg, Protocol::Nguyen, &channel, target, resolver)
}

fn probabilistic(
    channel: &ChannelSpec,
    target: &TargetState,
    resolver: &mut Resolver<'_>,
) -> Result<Option<Transcript>> {
    validate(Protocol::Probabilistic, channel, target, Mode::Repaired)?;
    let mut draft = Draft::new();
    let cnot = controlled_shift(2, &ShiftTable::cadd(2));
    let mut reg = with_ancilla(channel)?;
    draft.note("prepare (α|00⟩ + β|11⟩)_AB ⊗ |0⟩_C");
    reg = draft.gate(&reg, &cnot, &["A", "C"])?;
    reg = draft.gate(&reg, &cu_concentration(channel.alpha().norm(), channel.beta().norm())?, &["A", "C"])?;
    reg = draft.gate(&reg, &cnot, &["A", "C"])?;
    let Some((kc, reg)) = draft.measure(resolver, &reg, "C", None)? else {
        return Ok(None);
    };
    draft.messages.push(ClassicalMessage {
        outcomes: vec![kc],
        descriptor: if kc == 0 {
            "concentration succeeded; continue".into()
        } else {
            "concentration failed; abort".into()
        },
    });
    if kc == 1 {
        draft.note("abort: concentration failed");
        let bob = reg.subsystem_state("B")?;
        return draft
            .finish(Protocol::Probabilistic, Mode::Repaired, channel, target, None, bob, true)
            .map(Some);
    }
    nguyen_stage(draft, reg, Protocol::Probabilistic, channel, target, resolver)
}

fn execute(
    protocol: Protocol,
    channel: &ChannelSpec,
    target: &TargetState,
    mode: Mode,
    resolver: &mut Resolver<'_>,
) -> Result<Option<Transcript>> {
    check_mode(protocol, mode)?;
    let t = match protocol {
        Protocol::Deterministic => deterministic(channel, target, mode, resolver)?,
        Protocol::Probabilistic => probabilistic(channel, target, resolver)?,
        Protocol::Nguyen => nguyen(target, resolver)?,
    };
    if t.is_some() && !resolver.finished() {
        return Err(Error::ShapeError("forced path is longer than the protocol".into()));
    }
    Ok(t)
}

/// Runs one protocol, sampling measurements from `rng`.
pub fn run_protocol(
    protocol: Protocol,
    channel: &ChannelSpec,
    target: &TargetState,
    mode: Mode,
    rng: &mut dyn RngCore,
) -> Result<Transcript> {
    execute(protocol, channel, target, mode, &mut Resolver::sample(rng))?
        .ok_or_else(|| Error::InvalidState("sampled an impossible branch".into()))
}

/// Runs the protocol along a fixed outcome path; `Ok(None)` if the path has
/// probability zero.
pub fn run_forced(
    protocol: Protocol,
    channel: &ChannelSpec,
    target: &TargetState,
    mode: Mode,
    path: &[usize],
) -> Result<Option<Transcript>> {
    execute(protocol, channel, target, mode, &mut Resolver::force(path))
}

pub fn run_deterministic_rsp(
    channel: &ChannelSpec,
    target: &TargetState,
    mode: Mode,
    rng: &mut dyn RngCore,
) -> Result<Transcript> {
    run_protocol(Protocol::Deterministic, channel, target, mode, rng)
}

pub fn run_probabilistic_rsp(
    channel: &ChannelSpec,
    target: &TargetState,
    rng: &mut dyn RngCore,
) -> Result<Transcript> {
    run_protocol(Protocol::Probabilistic, channel, target, Mode::Repaired, rng)
}

/// The maximal-channel protocol always runs over `(|00⟩ + |11⟩)/√2`.
pub fn run_nguyen_rsp(target: &TargetState, rng: &mut dyn RngCore) -> Result<Transcript> {
    let channel = ChannelSpec::maximal(2)?;
    run_protocol(Protocol::Nguyen, &channel, target, Mode::Repaired, rng)
}

/// Every outcome path of a protocol, in canonical order.
pub fn outcome_space(protocol: Protocol, d: usize) -> Vec<Vec<usize>> {
    match protocol {
        Protocol::Deterministic => (0..d)
            .flat_map(|a| (0..d).map(move |cc| vec![a, cc]))
            .collect(),
        Protocol::Nguyen => vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]],
        Protocol::Probabilistic => {
            let mut v: Vec<Vec<usize>> = (0..2)
                .flat_map(|a| (0..2).map(move |cc| vec![0, a, cc]))
                .collect();
            v.push(vec![1]);
            v
        }
    }
}

/// Enumerates every measurement branch with its exact Born probability.
///
/// For the maximal-channel protocol `channel` is ignored.
pub fn exact_outcome_table(
    protocol: Protocol,
    channel: &ChannelSpec,
    target: &TargetState,
    mode: Mode,
) -> Result<OutcomeTable> {
    let channel = match protocol {
        Protocol::Nguyen => ChannelSpec::maximal(2)?,
        _ => channel.clone(),
    };
    validate(protocol, &channel, target, mode)?;
    let mut raw_norm = 1.0;
    let rows = outcome_space(protocol, target.d())
        .into_iter()
        .map(|path| {
            Ok(match run_forced(protocol, &channel, target, mode, &path)? {
                Some(t) => {
                    raw_norm = t.raw_norm;
                    OutcomeRow {
                        probability: t.path_probability(),
                        bob_state: Some(t.bob_state),
                        fidelity: Some(t.fidelity),
                        aborted: t.aborted,
                        outcome: path,
                    }
                }
                None => OutcomeRow {
                    aborted: protocol == Protocol::Probabilistic && path == [1],
                    outcome: path,
                    probability: 0.0,
                    bob_state: None,
                    fidelity: None,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OutcomeTable {
        protocol,
        mode,
        rows,
        raw_norm,
    })
}
