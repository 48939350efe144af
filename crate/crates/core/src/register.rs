//! Labelled multi-qudit state registers.
//!
//! Amplitudes are stored row-major over the subsystems in creation order:
//! the leftmost label is the most significant digit, so a register labelled
//! `A, B, C` stores `|abc⟩` at index `(a·d_B + b)·d_C + c`.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gates::GateMatrix;
use crate::protocols::ChannelSpec;
use crate::tensor::{
    c, dagger, hermitian_eigenvalues, unitarity_defect, CMat, CVec, C64, MAX_REGISTER_DIM,
    STRUCTURAL_TOL,
};

/// Probabilities below this are treated as exactly zero and never sampled.
pub const PROB_FLOOR: f64 = 1e-15;

/// Total mass below which a register is considered corrupt.
pub const DEGENERATE_MASS: f64 = 1e-12;

/// Outcome of a projective measurement on one or more subsystems.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementRecord {
    pub subsystems: Vec<String>,
    pub outcome: Vec<usize>,
    /// Born probability of `outcome` in the pre-measurement state.
    pub probability: f64,
}

/// A pure state over an ordered list of labelled qudits.
#[derive(Clone, Debug, PartialEq)]
pub struct StateRegister {
    dims: Vec<usize>,
    labels: Vec<String>,
    amplitudes: CVec,
}

struct Layout {
    /// Offsets of every target sub-index, target digits row-major.
    target: Vec<usize>,
    /// Offsets of every assignment of the remaining subsystems.
    rest: Vec<usize>,
}

fn default_labels(n: usize) -> Vec<String> {
    (0..n)
        .map(|k| {
            if k < 26 {
                ((b'A' + k as u8) as char).to_string()
            } else {
                format!("Q{k}")
            }
        })
        .collect()
}

fn total_dim(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::ShapeError("subsystem dimensions must be positive".into()));
    }
    let mut n: usize = 1;
    for &d in dims {
        n = n.checked_mul(d).ok_or(Error::CapacityExceeded {
            requested: usize::MAX,
            max: MAX_REGISTER_DIM,
        })?;
        if n > MAX_REGISTER_DIM {
            return Err(Error::CapacityExceeded {
                requested: n,
                max: MAX_REGISTER_DIM,
            });
        }
    }
    Ok(n)
}

/// Mixed-radix enumeration of `Σ digit_k·stride_k` over `radices`.
fn offsets(radices: &[usize], strides: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize];
    for (&d, &s) in radices.iter().zip(strides) {
        out = out
            .iter()
            .flat_map(|&base| (0..d).map(move |digit| base + digit * s))
            .collect();
    }
    out
}

fn digits(mut flat: usize, radices: &[usize]) -> Vec<usize> {
    let mut out = vec![0; radices.len()];
    for k in (0..radices.len()).rev() {
        out[k] = flat % radices[k];
        flat /= radices[k];
    }
    out
}

/// Computational basis register; labels default to `A, B, C, …`.
pub fn basis_register(dims: &[usize], index: &[usize]) -> Result<StateRegister> {
    let n = total_dim(dims)?;
    if index.len() != dims.len() {
        return Err(Error::ShapeError(format!(
            "{} indices for {} subsystems",
            index.len(),
            dims.len()
        )));
    }
    let mut flat = 0;
    for (&i, &d) in index.iter().zip(dims) {
        if i >= d {
            return Err(Error::IndexOutOfRange { index: i, dim: d });
        }
        flat = flat * d + i;
    }
    Ok(StateRegister {
        dims: dims.to_vec(),
        labels: default_labels(dims.len()),
        amplitudes: CVec::basis(n, flat)?,
    })
}

/// Two-qudit register `Σₘ λₘ|mm⟩` over subsystems `A, B`.
pub fn channel_register(spec: &ChannelSpec) -> Result<StateRegister> {
    let d = spec.d();
    let mut amps = vec![C64::default(); d * d];
    for (m, &l) in spec.lambdas().iter().enumerate() {
        amps[m * d + m] = l;
    }
    StateRegister::new(vec![d, d], &["A", "B"], CVec::new(amps)?)
}

impl StateRegister {
    /// Wraps `amplitudes`; they must be normalized within 1e−10.
    pub fn new(dims: Vec<usize>, labels: &[&str], amplitudes: CVec) -> Result<Self> {
        let n = total_dim(&dims)?;
        if amplitudes.dim() != n {
            return Err(Error::ShapeError(format!(
                "{} amplitudes for total dimension {n}",
                amplitudes.dim()
            )));
        }
        if !amplitudes.is_normalized(STRUCTURAL_TOL) {
            return Err(Error::InvalidState(format!(
                "register norm {:.12} is not 1",
                amplitudes.norm()
            )));
        }
        let reg = Self {
            labels: default_labels(dims.len()),
            dims,
            amplitudes,
        };
        reg.with_labels(labels)
    }

    /// Renames the subsystems. Labels must be distinct.
    pub fn with_labels(mut self, labels: &[&str]) -> Result<Self> {
        if labels.len() != self.dims.len() {
            return Err(Error::ShapeError(format!(
                "{} labels for {} subsystems",
                labels.len(),
                self.dims.len()
            )));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[..i].contains(a) {
                return Err(Error::ShapeError(format!("duplicate label `{a}`")));
            }
        }
        self.labels = labels.iter().map(|s| s.to_string()).collect();
        Ok(self)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn amplitudes(&self) -> &CVec {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn position(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::ShapeError(format!("no subsystem labelled `{label}`")))
    }

    fn positions(&self, targets: &[&str]) -> Result<Vec<usize>> {
        let pos = targets
            .iter()
            .map(|t| self.position(t))
            .collect::<Result<Vec<_>>>()?;
        for (i, p) in pos.iter().enumerate() {
            if pos[..i].contains(p) {
                return Err(Error::ShapeError(format!(
                    "subsystem `{}` targeted twice",
                    self.labels[*p]
                )));
            }
        }
        if pos.is_empty() {
            return Err(Error::ShapeError("no target subsystems".into()));
        }
        Ok(pos)
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dims.len()];
        for k in (0..self.dims.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.dims[k + 1];
        }
        s
    }

    fn layout(&self, positions: &[usize]) -> Layout {
        let strides = self.strides();
        let pick = |ps: &[usize]| -> (Vec<usize>, Vec<usize>) {
            (
                ps.iter().map(|&p| self.dims[p]).collect(),
                ps.iter().map(|&p| strides[p]).collect(),
            )
        };
        let (td, ts) = pick(positions);
        let rest: Vec<usize> = (0..self.dims.len())
            .filter(|p| !positions.contains(p))
            .collect();
        let (rd, rs) = pick(&rest);
        Layout {
            target: offsets(&td, &ts),
            rest: offsets(&rd, &rs),
        }
    }

    fn target_dims(&self, positions: &[usize]) -> Vec<usize> {
        positions.iter().map(|&p| self.dims[p]).collect()
    }

    /// Product state `self ⊗ other`, labels concatenated.
    pub fn tensor(&self, other: &StateRegister) -> Result<StateRegister> {
        total_dim(&[self.amplitudes.dim(), other.amplitudes.dim()])?;
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        let labels: Vec<&str> = self
            .labels
            .iter()
            .chain(&other.labels)
            .map(String::as_str)
            .collect();
        let reg = StateRegister {
            labels: default_labels(dims.len()),
            dims,
            amplitudes: self.amplitudes.kron(&other.amplitudes)?,
        };
        reg.with_labels(&labels)
    }

    fn apply_matrix(&self, m: &CMat, positions: &[usize]) -> Result<CVec> {
        let block: usize = self.target_dims(positions).iter().product();
        if m.rows() != block || m.cols() != block {
            return Err(Error::ShapeError(format!(
                "{}x{} operator on targets of total dimension {block}",
                m.rows(),
                m.cols()
            )));
        }
        let layout = self.layout(positions);
        let src = self.amplitudes.entries();
        let mut out = vec![C64::default(); src.len()];
        let mut gathered = vec![C64::default(); block];
        for &base in &layout.rest {
            for (g, &off) in gathered.iter_mut().zip(&layout.target) {
                *g = src[base + off];
            }
            for (i, &off) in layout.target.iter().enumerate() {
                out[base + off] = (0..block).map(|j| m[(i, j)] * gathered[j]).sum();
            }
        }
        CVec::new(out)
    }

    fn check_gate_dims(&self, g: &GateMatrix, positions: &[usize]) -> Result<()> {
        let td = self.target_dims(positions);
        if g.dims() != td.as_slice() {
            return Err(Error::ShapeError(format!(
                "gate `{}` acts on dims {:?} but targets have dims {:?}",
                g.name(),
                g.dims(),
                td
            )));
        }
        Ok(())
    }

    /// Applies a unitary gate to the named subsystems (in gate order).
    ///
    /// Rejects gates whose recorded defect exceeds 1e−10.
    pub fn apply_gate(&self, g: &GateMatrix, targets: &[&str]) -> Result<StateRegister> {
        if g.defect() > STRUCTURAL_TOL {
            return Err(Error::NonUnitaryGate {
                name: g.name().to_string(),
                defect: g.defect(),
            });
        }
        self.apply_gate_unchecked(g, targets)
    }

    /// Applies `g` without checking unitarity.
    ///
    /// The result is not renormalized; callers auditing non-unitary operators
    /// must call [`StateRegister::renormalized`] before measuring.
    pub fn apply_gate_unchecked(&self, g: &GateMatrix, targets: &[&str]) -> Result<StateRegister> {
        let positions = self.positions(targets)?;
        self.check_gate_dims(g, &positions)?;
        Ok(StateRegister {
            dims: self.dims.clone(),
            labels: self.labels.clone(),
            amplitudes: self.apply_matrix(g.matrix(), &positions)?,
        })
    }

    /// Unit-norm copy together with the norm before rescaling.
    pub fn renormalized(&self) -> Result<(StateRegister, f64)> {
        let raw = self.norm();
        if raw * raw < DEGENERATE_MASS {
            return Err(Error::DegenerateState(raw * raw));
        }
        Ok((
            StateRegister {
                dims: self.dims.clone(),
                labels: self.labels.clone(),
                amplitudes: self.amplitudes.scale(c(1.0 / raw, 0.0)),
            },
            raw,
        ))
    }

    fn masses(&self, positions: &[usize]) -> Result<Vec<f64>> {
        let layout = self.layout(positions);
        let amps = self.amplitudes.entries();
        let masses: Vec<f64> = layout
            .target
            .iter()
            .map(|&off| layout.rest.iter().map(|&b| amps[b + off].norm_sqr()).sum())
            .collect();
        let total: f64 = masses.iter().sum();
        if total < DEGENERATE_MASS {
            return Err(Error::DegenerateState(total));
        }
        Ok(masses
            .into_iter()
            .map(|m| {
                let p = m / total;
                if p < PROB_FLOOR {
                    0.0
                } else {
                    p
                }
            })
            .collect())
    }

    /// Born-rule distribution over every outcome of `targets`, zeros included.
    pub fn born_probabilities(&self, targets: &[&str]) -> Result<Vec<(Vec<usize>, f64)>> {
        let positions = self.positions(targets)?;
        let td = self.target_dims(&positions);
        Ok(self
            .masses(&positions)?
            .into_iter()
            .enumerate()
            .map(|(k, p)| (digits(k, &td), p))
            .collect())
    }

    /// Projects onto `outcome` and renormalizes; returns the Born probability.
    pub fn collapse(&self, targets: &[&str], outcome: &[usize]) -> Result<(f64, StateRegister)> {
        let positions = self.positions(targets)?;
        let td = self.target_dims(&positions);
        if outcome.len() != td.len() {
            return Err(Error::ShapeError(format!(
                "outcome of length {} for {} targets",
                outcome.len(),
                td.len()
            )));
        }
        let mut flat = 0;
        for (&o, &d) in outcome.iter().zip(&td) {
            if o >= d {
                return Err(Error::IndexOutOfRange { index: o, dim: d });
            }
            flat = flat * d + o;
        }
        let p = self.masses(&positions)?[flat];
        if p == 0.0 {
            return Err(Error::DegenerateState(0.0));
        }
        let layout = self.layout(&positions);
        let off = layout.target[flat];
        let src = self.amplitudes.entries();
        let mut amps = vec![C64::default(); src.len()];
        for &b in &layout.rest {
            amps[b + off] = src[b + off];
        }
        // rare branches are legitimate; only the whole register is checked for mass
        let mass: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        let branch = StateRegister {
            dims: self.dims.clone(),
            labels: self.labels.clone(),
            amplitudes: CVec::new(amps)?.scale(c(1.0 / mass.sqrt(), 0.0)),
        };
        Ok((p, branch))
    }

    /// Samples a computational-basis measurement of `targets`.
    pub fn measure(
        &self,
        targets: &[&str],
        rng: &mut impl Rng,
    ) -> Result<(MeasurementRecord, StateRegister)> {
        let probs = self.born_probabilities(targets)?;
        let total: f64 = probs.iter().map(|(_, p)| p).sum();
        let mut u = rng.random::<f64>() * total;
        let mut chosen = None;
        for (k, (_, p)) in probs.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            chosen = Some(k);
            if u < *p {
                break;
            }
            u -= p;
        }
        let k = chosen.ok_or(Error::DegenerateState(total))?;
        let (outcome, probability) = probs[k].clone();
        let (_, post) = self.collapse(targets, &outcome)?;
        Ok((
            MeasurementRecord {
                subsystems: targets.iter().map(|s| s.to_string()).collect(),
                outcome,
                probability,
            },
            post,
        ))
    }

    fn basis_change(&self, target: &str, basis: &CMat) -> Result<(usize, CMat)> {
        let defect = unitarity_defect(basis);
        if !basis.is_square() || defect > STRUCTURAL_TOL {
            return Err(Error::NonUnitaryGate {
                name: "measurement basis".into(),
                defect,
            });
        }
        Ok((self.position(target)?, dagger(basis)))
    }

    fn rotated(&self, m: &CMat, position: usize) -> Result<StateRegister> {
        Ok(StateRegister {
            dims: self.dims.clone(),
            labels: self.labels.clone(),
            amplitudes: self.apply_matrix(m, &[position])?,
        })
    }

    /// Projects `target` onto column `k` of `basis`; returns the probability.
    pub fn collapse_in_basis(
        &self,
        target: &str,
        basis: &CMat,
        k: usize,
    ) -> Result<(f64, StateRegister)> {
        let (pos, inv) = self.basis_change(target, basis)?;
        let (p, post) = self.rotated(&inv, pos)?.collapse(&[target], &[k])?;
        Ok((p, post.rotated(basis, pos)?))
    }

    /// Measures `target` in the orthonormal basis given by the columns of
    /// `basis`; outcome `k` leaves the subsystem in column `k`.
    pub fn measure_in_basis(
        &self,
        target: &str,
        basis: &CMat,
        rng: &mut impl Rng,
    ) -> Result<(MeasurementRecord, StateRegister)> {
        let (pos, inv) = self.basis_change(target, basis)?;
        let (record, post) = self.rotated(&inv, pos)?.measure(&[target], rng)?;
        Ok((record, post.rotated(basis, pos)?))
    }

    /// Partial trace over every subsystem not in `keep`.
    pub fn reduced_density(&self, keep: &[&str]) -> Result<DensityMatrix> {
        let positions = self.positions(keep)?;
        let layout = self.layout(&positions);
        let amps = self.amplitudes.entries();
        let n = layout.target.len();
        let rho = CMat::from_fn(n, n, |i, j| {
            layout
                .rest
                .iter()
                .map(|&b| amps[b + layout.target[i]] * amps[b + layout.target[j]].conj())
                .sum()
        });
        Ok(DensityMatrix { matrix: rho })
    }

    /// Pure state of one subsystem when the register is a product across it.
    pub fn subsystem_state(&self, label: &str) -> Result<CVec> {
        let pos = self.position(label)?;
        let layout = self.layout(&[pos]);
        let amps = self.amplitudes.entries();
        let slice = |b: usize| -> Vec<C64> { layout.target.iter().map(|&o| amps[b + o]).collect() };
        let weight = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>();
        let best = layout
            .rest
            .iter()
            .copied()
            .max_by(|&a, &b| weight(&slice(a)).total_cmp(&weight(&slice(b))))
            .expect("register has at least one amplitude");
        let v = CVec::new(slice(best))?.normalized()?;
        let total = self.amplitudes.norm_sqr();
        let captured: f64 = layout
            .rest
            .iter()
            .map(|&b| v.inner(&CVec::new(slice(b)).expect("finite")).expect("same dim").norm_sqr())
            .sum();
        if (captured - total).abs() > 1e-10 * total.max(1.0) {
            return Err(Error::InvalidState(format!(
                "subsystem `{label}` is entangled with the rest of the register"
            )));
        }
        Ok(v)
    }
}

impl fmt::Display for StateRegister {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (k, z) in self.amplitudes.entries().iter().enumerate() {
            if z.norm_sqr() < 1e-24 {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            let ket: String = digits(k, &self.dims).iter().map(|d| d.to_string()).collect();
            write!(f, "({})|{}⟩", crate::tensor::format_complex(*z), ket)?;
        }
        if first {
            write!(f, "0")?;
        }
        write!(f, "_{}", self.labels.concat())
    }
}

/// Density matrix of a (sub)system.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: CMat,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity within 1e−10.
    pub fn new(matrix: CMat) -> Result<Self> {
        let rho = Self { matrix };
        rho.check_invariants(STRUCTURAL_TOL)?;
        Ok(rho)
    }

    pub(crate) fn new_unchecked(matrix: CMat) -> Self {
        Self { matrix }
    }

    pub fn from_pure(psi: &CVec) -> Result<Self> {
        if !psi.is_normalized(STRUCTURAL_TOL) {
            return Err(Error::InvalidState("pure state is not normalized".into()));
        }
        Ok(Self {
            matrix: psi.outer(psi),
        })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            matrix: CMat::identity(dim).scale(c(1.0 / dim as f64, 0.0)),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// Largest entry of `|ρ − ρ†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        self.matrix.max_abs_diff(&dagger(&self.matrix))
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix).expect("density matrices are square")
    }

    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        if !self.matrix.is_square() {
            return Err(Error::ShapeError("density matrix must be square".into()));
        }
        let h = self.hermiticity_defect();
        if h > tol {
            return Err(Error::InvalidState(format!("not Hermitian (defect {h:.3e})")));
        }
        let tr = self.matrix.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(Error::InvalidState(format!("trace {tr} is not 1")));
        }
        let min = self.eigenvalues()[0];
        if min < -tol {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }
}
