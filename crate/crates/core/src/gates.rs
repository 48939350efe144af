//! Gate constructors.
//!
//! Multi-subsystem gates list their subsystems control-first, so a
//! controlled gate built here is applied with `reg.apply_gate(&g, &[ctrl, tgt])`.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::protocols::TargetState;
use crate::tensor::{c, complete_to_unitary, dagger, unitarity_defect, CMat, C64, STRUCTURAL_TOL};

/// Largest defect tolerated for the encoder handed to [`correction_unitary`].
pub const CORRECTION_DEFECT_TOL: f64 = 1e-8;

/// A gate together with its subsystem dimensions and measured unitarity defect.
#[derive(Clone, Debug, PartialEq)]
pub struct GateMatrix {
    matrix: CMat,
    dims: Vec<usize>,
    name: String,
    defect: f64,
    literal: bool,
}

impl GateMatrix {
    pub fn new(name: impl Into<String>, matrix: CMat, dims: Vec<usize>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if dims.is_empty() || !matrix.is_square() || matrix.rows() != n {
            return Err(Error::ShapeError(format!(
                "{}x{} matrix does not act on dims {dims:?}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        Ok(Self {
            defect: unitarity_defect(&matrix),
            matrix,
            dims,
            name: name.into(),
            literal: false,
        })
    }

    fn from_parts(name: &str, matrix: CMat, dims: Vec<usize>) -> Self {
        Self::new(name, matrix, dims).expect("constructor builds consistent shapes")
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn arity(&self) -> usize {
        self.dims.len()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `‖G†G − I‖_F`, computed at construction.
    pub fn defect(&self) -> f64 {
        self.defect
    }

    /// True for operators reproduced verbatim rather than repaired.
    pub fn is_literal(&self) -> bool {
        self.literal
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.defect <= tol
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn adjoint(&self) -> GateMatrix {
        let mut g = Self::from_parts(&format!("{}†", self.name), dagger(&self.matrix), self.dims.clone());
        g.literal = self.literal;
        g
    }

    pub fn then(&self, next: &GateMatrix) -> Result<GateMatrix> {
        if self.dims != next.dims {
            return Err(Error::ShapeError("gates act on different dims".into()));
        }
        GateMatrix::new(
            format!("{}·{}", next.name, self.name),
            next.matrix.matmul(&self.matrix)?,
            self.dims.clone(),
        )
    }
}

/// Per-control-value shifts `k_i` of a generalized controlled shift.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShiftTable {
    d: usize,
    shifts: Vec<usize>,
}

impl ShiftTable {
    pub fn new(d: usize, shifts: Vec<usize>) -> Result<Self> {
        if d < 2 || shifts.len() != d {
            return Err(Error::InvalidState(format!(
                "shift table needs {d} entries for dimension {d} ≥ 2"
            )));
        }
        if let Some(&k) = shifts.iter().find(|&&k| k >= d) {
            return Err(Error::IndexOutOfRange { index: k, dim: d });
        }
        Ok(Self { d, shifts })
    }

    /// `k_i = i`: target becomes `j + i`.
    pub fn cadd(d: usize) -> Self {
        Self::new(d, (0..d).collect()).expect("valid")
    }

    /// `k_i = −i mod d`: target becomes `j − i`.
    pub fn csub(d: usize) -> Self {
        Self::new(d, (0..d).map(|i| (d - i) % d).collect()).expect("valid")
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn shifts(&self) -> &[usize] {
        &self.shifts
    }
}

fn permutation(d: usize, map: impl Fn(usize) -> usize) -> CMat {
    let mut m = CMat::zeros(d, d);
    for j in 0..d {
        m[(map(j), j)] = c(1.0, 0.0);
    }
    m
}

/// `X_d|j⟩ = |j+1 mod d⟩`.
pub fn pauli_x(d: usize) -> GateMatrix {
    assert!(d >= 2, "qudit dimension must be at least 2");
    GateMatrix::from_parts(&format!("X{d}"), permutation(d, |j| (j + 1) % d), vec![d])
}

/// `Z_d|j⟩ = ω^j|j⟩`, `ω = e^{2πi/d}`.
pub fn pauli_z(d: usize) -> GateMatrix {
    assert!(d >= 2, "qudit dimension must be at least 2");
    let diag: Vec<C64> = (0..d)
        .map(|j| C64::from_polar(1.0, 2.0 * PI * j as f64 / d as f64))
        .collect();
    GateMatrix::from_parts(&format!("Z{d}"), CMat::diag(&diag), vec![d])
}

/// Two-qudit gate `|i⟩|j⟩ → |i⟩|j + k_i mod d⟩`.
pub fn controlled_shift(d: usize, table: &ShiftTable) -> GateMatrix {
    assert_eq!(table.d(), d, "shift table dimension mismatch");
    let m = permutation(d * d, |idx| {
        let (i, j) = (idx / d, idx % d);
        i * d + (j + table.shifts[i]) % d
    });
    let name = if *table == ShiftTable::cadd(d) {
        format!("CADD{d}")
    } else if *table == ShiftTable::csub(d) {
        format!("CSUB{d}")
    } else {
        format!("CSHIFT{d}{:?}", table.shifts)
    };
    GateMatrix::from_parts(&name, m, vec![d, d])
}

/// Controlled concentration gate on two qubits (control first).
///
/// With `r = |α|/|β|` and `s = √(1 − r²)`, the block applied when the control
/// is `|1⟩` sends `|0⟩ → r|0⟩ − s|1⟩` and `|1⟩ → r|1⟩ + s|0⟩`.
pub fn cu_concentration(alpha: f64, beta: f64) -> Result<GateMatrix> {
    let (a, b) = (alpha.abs(), beta.abs());
    if !alpha.is_finite() || !beta.is_finite() || (a * a + b * b - 1.0).abs() > STRUCTURAL_TOL {
        return Err(Error::InvalidState(format!(
            "concentration coefficients ({alpha}, {beta}) are not normalized"
        )));
    }
    if a > b + STRUCTURAL_TOL {
        return Err(Error::InvalidState(format!(
            "concentration requires |α| ≤ |β|, got ({alpha}, {beta})"
        )));
    }
    let r = (a / b).min(1.0);
    let s = (1.0 - r * r).max(0.0).sqrt();
    let mut m = CMat::identity(4);
    m[(2, 2)] = c(r, 0.0);
    m[(3, 2)] = c(-s, 0.0);
    m[(2, 3)] = c(s, 0.0);
    m[(3, 3)] = c(r, 0.0);
    Ok(GateMatrix::from_parts("CU", m, vec![2, 2]))
}

/// The qubit encoder `[[x₀, −|x₁|e^{iθ}], [|x₁|e^{iθ}, x₀]]`, exactly as
/// written. It is unitary only when `x₀|x₁|sinθ = 0`; the defect is recorded,
/// not rejected.
pub fn encoding_unitary_literal(x0: f64, x1mag: f64, theta: f64) -> GateMatrix {
    let e = C64::from_polar(x1mag, theta);
    let m = CMat::new(2, 2, vec![c(x0, 0.0), -e, e, c(x0, 0.0)]).expect("2x2");
    let mut g = GateMatrix::from_parts("U_A(literal)", m, vec![2]);
    g.literal = true;
    g
}

/// Unitary encoder whose first column is the target amplitude vector.
pub fn encoding_unitary(target: &TargetState) -> Result<GateMatrix> {
    let u = complete_to_unitary(&target.as_cvec())?;
    GateMatrix::new("U_A", u, vec![target.d()])
}

/// `N_m|ℓ⟩ = |m − ℓ mod d⟩`; self-inverse.
pub fn negation_shift(d: usize, m: usize) -> GateMatrix {
    assert!(d >= 2 && m < d, "negation shift needs 0 ≤ m < d");
    GateMatrix::from_parts(&format!("N{d}[{m}]"), permutation(d, |l| (m + d - l) % d), vec![d])
}

/// Bob's correction for outcome `m`: `V_m = U·Π₀ₘ·U†·N_m`.
///
/// After the deterministic protocol Bob holds `b_m = Σₙ U[n,m]|m − n⟩`;
/// `N_m` turns it into `U|m⟩`, `U†` into `|m⟩`, the transposition into `|0⟩`
/// and `U` into the target `U|0⟩`.
pub fn correction_unitary(u: &GateMatrix, m: usize) -> Result<GateMatrix> {
    if u.arity() != 1 {
        return Err(Error::ShapeError("correction needs a single-qudit encoder".into()));
    }
    if u.defect() > CORRECTION_DEFECT_TOL {
        return Err(Error::NonUnitaryGate {
            name: u.name().to_string(),
            defect: u.defect(),
        });
    }
    let d = u.dims()[0];
    if m >= d {
        return Err(Error::IndexOutOfRange { index: m, dim: d });
    }
    let swap = permutation(d, |j| {
        if j == 0 {
            m
        } else if j == m {
            0
        } else {
            j
        }
    });
    let v = u
        .matrix()
        .matmul(&swap)?
        .matmul(&dagger(u.matrix()))?
        .matmul(negation_shift(d, m).matrix())?;
    GateMatrix::new(format!("V{m}"), v, vec![d])
}

/// Measurement bases and phase gate of the maximal-channel protocol for the
/// target `a|0⟩ + b e^{iγ}|1⟩`.
///
/// Returns the μ′ basis (columns `a|0⟩ + b|1⟩`, `b|0⟩ − a|1⟩`), the ν basis
/// (columns `(|0⟩ + e^{iγ}|1⟩)/√2`, `(e^{−iγ}|0⟩ − |1⟩)/√2`) and
/// `P_C = diag(1, e^{2iγ})`.
pub fn nguyen_bases(a: f64, b: f64, gamma: f64) -> Result<(CMat, CMat, GateMatrix)> {
    if (a * a + b * b - 1.0).abs() > STRUCTURAL_TOL || !gamma.is_finite() {
        return Err(Error::InvalidState(format!(
            "basis coefficients ({a}, {b}) are not normalized"
        )));
    }
    let mu = CMat::from_real_rows(&[&[a, b], &[b, -a]])?;
    let h = 1.0 / SQRT_2;
    let nu = CMat::new(
        2,
        2,
        vec![
            c(h, 0.0),
            C64::from_polar(h, -gamma),
            C64::from_polar(h, gamma),
            c(-h, 0.0),
        ],
    )?;
    let phase = GateMatrix::new(
        "P_C",
        CMat::diag(&[c(1.0, 0.0), C64::from_polar(1.0, 2.0 * gamma)]),
        vec![2],
    )?;
    Ok((mu, nu, phase))
}

/// Literal-encoder defect in closed form: `2√2·|x₀||x₁||sinθ|`.
pub fn literal_defect_closed_form(x0: f64, x1mag: f64, theta: f64) -> f64 {
    2.0 * SQRT_2 * (x0 * x1mag * theta.sin()).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{fidelity_pure, CVec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    fn pow(g: &CMat, k: usize) -> CMat {
        (0..k).fold(CMat::identity(g.rows()), |acc, _| acc.matmul(g).unwrap())
    }

    fn random_target(d: usize, rng: &mut impl Rng) -> TargetState {
        let v: Vec<C64> = (0..d)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        TargetState::new(v.into_iter().map(|z| z / n).collect()).unwrap()
    }

    fn is_permutation(m: &CMat) -> bool {
        let n = m.rows();
        let one = c(1.0, 0.0);
        let ok = |z: C64| z == one || z == C64::default();
        (0..n).all(|i| {
            (0..n).filter(|&j| m[(i, j)] == one).count() == 1
                && (0..n).filter(|&j| m[(j, i)] == one).count() == 1
                && (0..n).all(|j| ok(m[(i, j)]))
        })
    }

    #[test]
    fn qubit_paulis() {
        assert_eq!(pauli_x(2).matrix(), &CMat::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap());
        let z = pauli_z(2);
        assert!(z.matrix().max_abs_diff(&CMat::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]).unwrap()) < 1e-15);
    }

    #[test]
    fn shift_and_clock_have_order_d() {
        for d in [2, 3, 5] {
            assert!(pow(pauli_x(d).matrix(), d).max_abs_diff(&CMat::identity(d)) < 1e-12);
            assert!(pow(pauli_z(d).matrix(), d).max_abs_diff(&CMat::identity(d)) < 1e-12);
        }
    }

    #[test]
    fn clock_phase_on_two() {
        let out = pauli_z(3).matrix().apply(&CVec::basis(3, 2).unwrap()).unwrap();
        let w2 = C64::from_polar(1.0, 4.0 * PI / 3.0);
        assert!((out[2] - w2).norm() < 1e-15);
    }

    #[test]
    fn controlled_shift_cases() {
        let cnot = controlled_shift(2, &ShiftTable::new(2, vec![0, 1]).unwrap());
        let out = cnot.matrix().apply(&CVec::basis(4, 2).unwrap()).unwrap();
        assert_eq!(out, CVec::basis(4, 3).unwrap());

        let cadd = controlled_shift(3, &ShiftTable::cadd(3));
        // |1,2⟩ = index 5 → |1,0⟩ = index 3
        let out = cadd.matrix().apply(&CVec::basis(9, 5).unwrap()).unwrap();
        assert_eq!(out, CVec::basis(9, 3).unwrap());

        let csub = controlled_shift(3, &ShiftTable::csub(3));
        assert_eq!(csub.matrix().matmul(cadd.matrix()).unwrap(), CMat::identity(9));
    }

    #[test]
    fn controlled_shifts_are_permutations() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for d in 2..=8 {
            for table in [ShiftTable::cadd(d), ShiftTable::csub(d)] {
                let g = controlled_shift(d, &table);
                assert!(is_permutation(g.matrix()));
                assert_eq!(g.defect(), 0.0);
            }
            let random = ShiftTable::new(d, (0..d).map(|_| rng.random_range(0..d)).collect()).unwrap();
            assert!(is_permutation(controlled_shift(d, &random).matrix()));
        }
    }

    #[test]
    fn shift_table_validation() {
        assert!(ShiftTable::new(3, vec![0, 1, 3]).is_err());
        assert!(ShiftTable::new(3, vec![0, 1]).is_err());
    }

    #[test]
    fn concentration_cases() {
        let g = cu_concentration(FRAC_1_SQRT_2, FRAC_1_SQRT_2).unwrap();
        assert!(g.matrix().max_abs_diff(&CMat::identity(4)) < 1e-15);

        let g = cu_concentration(0.6, 0.8).unwrap();
        // block column for |0⟩ sits in column 2 (control |1⟩, target |0⟩)
        assert!((g.matrix()[(2, 2)].re - 0.75).abs() < 1e-15);
        assert!((g.matrix()[(3, 2)].re + 0.4375f64.sqrt()).abs() < 1e-15);
        assert!((g.matrix()[(3, 2)].re + 0.661_437_827_766_147_8).abs() < 1e-15);
        assert!(g.defect() < 1e-15);

        assert!(cu_concentration(0.8, 0.6).is_err());
        assert!(cu_concentration(0.5, 0.5).is_err());
        // a product channel still defines a valid gate
        assert!(cu_concentration(0.0, 1.0).unwrap().defect() < 1e-15);
    }

    #[test]
    fn literal_encoder_cases() {
        let (x0, x1) = (0.6, 0.8);
        let g = encoding_unitary_literal(x0, x1, 0.0);
        assert_eq!(g.matrix(), &CMat::from_real_rows(&[&[x0, -x1], &[x1, x0]]).unwrap());
        assert_eq!(g.defect(), 0.0);
        assert!(g.is_literal());

        let g = encoding_unitary_literal(FRAC_1_SQRT_2, FRAC_1_SQRT_2, FRAC_PI_2);
        assert!((g.defect() - SQRT_2).abs() < 1e-12);

        let g = encoding_unitary_literal(1.0, 0.0, 0.3);
        assert!(g.matrix().max_abs_diff(&CMat::identity(2)) < 1e-15);
        assert_eq!(g.defect(), 0.0);
    }

    #[test]
    fn literal_defect_matches_closed_form() {
        for i in 0..=10 {
            for j in 0..=10 {
                let x0 = i as f64 / 10.0;
                let x1 = (1.0 - x0 * x0).sqrt();
                let theta = j as f64 * PI / 5.0;
                let g = encoding_unitary_literal(x0, x1, theta);
                assert!((g.defect() - literal_defect_closed_form(x0, x1, theta)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn encoder_cases() {
        let t = TargetState::new(vec![c(1.0, 0.0), C64::default(), C64::default()]).unwrap();
        assert!(encoding_unitary(&t).unwrap().matrix().max_abs_diff(&CMat::identity(3)) < 1e-15);

        let t = TargetState::new(vec![c(0.6, 0.0), c(0.8, 0.0)]).unwrap();
        let lit = encoding_unitary_literal(0.6, 0.8, 0.0);
        assert!(encoding_unitary(&t).unwrap().matrix().max_abs_diff(lit.matrix()) < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let t = random_target(5, &mut rng);
            let u = encoding_unitary(&t).unwrap();
            assert!(u.defect() <= 1e-12);
            assert!(u.matrix().column(0).max_abs_diff(&t.as_cvec()) <= 1e-14);
        }
    }

    #[test]
    fn negation_shift_cases() {
        assert_eq!(negation_shift(2, 0).matrix(), &CMat::identity(2));
        assert_eq!(negation_shift(2, 1).matrix(), pauli_x(2).matrix());
        let n = negation_shift(3, 0);
        let m = n.matrix();
        assert_eq!(m.apply(&CVec::basis(3, 1).unwrap()).unwrap(), CVec::basis(3, 2).unwrap());
        assert_eq!(m.apply(&CVec::basis(3, 2).unwrap()).unwrap(), CVec::basis(3, 1).unwrap());
        assert_eq!(m.apply(&CVec::basis(3, 0).unwrap()).unwrap(), CVec::basis(3, 0).unwrap());
        for d in 2..6 {
            for k in 0..d {
                let g = negation_shift(d, k);
                assert_eq!(g.matrix().matmul(g.matrix()).unwrap(), CMat::identity(d));
            }
        }
    }

    /// Bob's raw branch state `b_m = Σₙ U[n,m]|m − n⟩`.
    fn branch(u: &CMat, m: usize) -> CVec {
        let d = u.rows();
        let mut v = vec![C64::default(); d];
        for n in 0..d {
            v[(m + d - n) % d] += u[(n, m)];
        }
        CVec::new(v).unwrap()
    }

    #[test]
    fn correction_cases() {
        let t = TargetState::new(vec![c(0.6, 0.0), c(0.8, 0.0)]).unwrap();
        let u = encoding_unitary(&t).unwrap();
        assert!(correction_unitary(&u, 0).unwrap().matrix().max_abs_diff(&CMat::identity(2)) < 1e-15);

        let b1 = branch(u.matrix(), 1);
        let v1 = correction_unitary(&u, 1).unwrap();
        let fixed = v1.matrix().apply(&b1).unwrap();
        assert!(fixed.max_abs_diff(&t.as_cvec()) < 1e-15);
        let by_z = pauli_z(2).matrix().apply(&b1).unwrap();
        assert!(fixed.max_abs_diff(&by_z) < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let t = random_target(4, &mut rng);
        let u = encoding_unitary(&t).unwrap();
        for m in 0..4 {
            let v = correction_unitary(&u, m).unwrap();
            let out = v.matrix().apply(&branch(u.matrix(), m)).unwrap();
            assert!((fidelity_pure(&out, &t.as_cvec()).unwrap() - 1.0).abs() < 1e-12);
        }

        let lit = encoding_unitary_literal(FRAC_1_SQRT_2, FRAC_1_SQRT_2, 1.0);
        assert!(matches!(correction_unitary(&lit, 1), Err(Error::NonUnitaryGate { .. })));
    }

    #[test]
    fn correction_exact_for_all_small_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for d in 2..=8 {
            for _ in 0..5 {
                let t = random_target(d, &mut rng);
                let u = encoding_unitary(&t).unwrap();
                for m in 0..d {
                    let v = correction_unitary(&u, m).unwrap();
                    assert!(v.defect() <= STRUCTURAL_TOL);
                    let out = v.matrix().apply(&branch(u.matrix(), m)).unwrap();
                    assert!(out.max_abs_diff(&t.as_cvec()) <= 1e-11);
                }
            }
        }
    }

    #[test]
    fn nguyen_basis_cases() {
        let (mu, nu, p) = nguyen_bases(1.0, 0.0, 0.0).unwrap();
        assert!(mu.max_abs_diff(&CMat::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]).unwrap()) < 1e-15);
        let h = FRAC_1_SQRT_2;
        assert!(nu.max_abs_diff(&CMat::from_real_rows(&[&[h, h], &[h, -h]]).unwrap()) < 1e-15);
        assert!(p.matrix().max_abs_diff(&CMat::identity(2)) < 1e-15);

        let (_, _, p) = nguyen_bases(0.6, 0.8, FRAC_PI_2).unwrap();
        assert!(p.matrix().max_abs_diff(pauli_z(2).matrix()) < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b = (1.0 - a * a).sqrt();
            let (mu, nu, p) = nguyen_bases(a, b, rng.random_range(0.0..2.0 * PI)).unwrap();
            assert!(unitarity_defect(&mu) <= 1e-12);
            assert!(unitarity_defect(&nu) <= 1e-12);
            assert!(p.defect() <= 1e-12);
        }
        assert!(nguyen_bases(0.5, 0.5, 0.0).is_err());
    }
}
