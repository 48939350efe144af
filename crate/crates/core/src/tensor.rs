//! Dense complex linear algebra used by the simulator.
//!
//! Everything here works on small, dense, row-major matrices of
//! double-precision complex numbers. Registers in this crate never exceed
//! [`MAX_REGISTER_DIM`] amplitudes, so no blocking or sparsity is attempted.

use std::fmt;
use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;
pub use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Largest register (product of subsystem dimensions) the crate will build.
pub const MAX_REGISTER_DIM: usize = 1 << 20;

/// Default tolerance for structural checks (normalization, unitarity).
pub const STRUCTURAL_TOL: f64 = 1e-10;

#[inline]
pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// A complex column vector.
#[derive(Clone, Debug, PartialEq)]
pub struct CVec {
    entries: Vec<C64>,
}

impl CVec {
    pub fn new(entries: Vec<C64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::ShapeError("vector must have at least one entry".into()));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("vector has non-finite entries".into()));
        }
        Ok(Self { entries })
    }

    pub fn from_real(entries: &[f64]) -> Result<Self> {
        Self::new(entries.iter().map(|&x| c(x, 0.0)).collect())
    }

    /// Computational basis vector `|k⟩` of dimension `dim`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::IndexOutOfRange { index: k, dim });
        }
        let mut entries = vec![C64::default(); dim];
        entries[k] = c(1.0, 0.0);
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[C64] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<C64> {
        self.entries
    }

    pub fn norm_sqr(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    /// Returns the vector scaled to unit norm.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n < 1e-300 {
            return Err(Error::DegenerateState(n * n));
        }
        Ok(self.scale(c(1.0 / n, 0.0)))
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            entries: self.entries.iter().map(|z| z * s).collect(),
        }
    }

    /// `⟨self|other⟩`, conjugate-linear in `self`.
    pub fn inner(&self, other: &CVec) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(Error::ShapeError(format!(
                "inner product of dimensions {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn kron(&self, other: &CVec) -> Result<CVec> {
        let dim = checked_dim(self.dim(), other.dim())?;
        let mut entries = Vec::with_capacity(dim);
        for a in &self.entries {
            for b in &other.entries {
                entries.push(a * b);
            }
        }
        Ok(CVec { entries })
    }

    /// Largest per-entry modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &CVec) -> f64 {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch");
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Outer product `|self⟩⟨other|`.
    pub fn outer(&self, other: &CVec) -> CMat {
        CMat::from_fn(self.dim(), other.dim(), |i, j| {
            self.entries[i] * other.entries[j].conj()
        })
    }
}

impl Index<usize> for CVec {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.entries[i]
    }
}

impl fmt::Display for CVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, z) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", format_complex(*z))?;
        }
        write!(f, ")")
    }
}

pub(crate) fn format_complex(z: C64) -> String {
    let clean = |x: f64| if x.abs() < 5e-13 { 0.0 } else { x };
    let (re, im) = (clean(z.re), clean(z.im));
    if im == 0.0 {
        format!("{re:.6}")
    } else if re == 0.0 {
        format!("{im:.6}i")
    } else {
        format!("{re:.6}{im:+.6}i")
    }
}

/// A dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMat {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::ShapeError("matrix dimensions must be positive".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::ShapeError(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("matrix has non-finite entries".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a square matrix from real row-major entries.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let data = rows
            .iter()
            .flat_map(|r| r.iter().map(|&x| c(x, 0.0)))
            .collect();
        Self::new(n, rows.first().map_or(0, |r| r.len()), data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| C64::default())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { c(1.0, 0.0) } else { C64::default() })
    }

    pub fn diag(entries: &[C64]) -> Self {
        let n = entries.len();
        Self::from_fn(n, n, |i, j| if i == j { entries[i] } else { C64::default() })
    }

    /// Matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[CVec]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, CVec::dim);
        if cols == 0 || columns.iter().any(|v| v.dim() != rows) {
            return Err(Error::ShapeError("columns must be non-empty and equal length".into()));
        }
        Ok(Self::from_fn(rows, cols, |i, j| columns[j][i]))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> CVec {
        CVec {
            entries: (0..self.rows).map(|i| self[(i, j)]).collect(),
        }
    }

    pub fn matmul(&self, other: &CMat) -> Result<CMat> {
        if self.cols != other.rows {
            return Err(Error::ShapeError(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = CMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::default() {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        Ok(out)
    }

    pub fn apply(&self, v: &CVec) -> Result<CVec> {
        if self.cols != v.dim() {
            return Err(Error::ShapeError(format!(
                "cannot apply {}x{} matrix to vector of dimension {}",
                self.rows,
                self.cols,
                v.dim()
            )));
        }
        let entries = (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(v.entries())
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        Ok(CVec { entries })
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn scale(&self, s: C64) -> CMat {
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn sub(&self, other: &CMat) -> Result<CMat> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &CMat) -> Result<CMat> {
        self.zip_with(other, |a, b| a + b)
    }

    fn zip_with(&self, other: &CMat, f: impl Fn(C64, C64) -> C64) -> Result<CMat> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::ShapeError(format!(
                "{}x{} and {}x{} matrices differ in shape",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Largest per-entry modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &CMat) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Display for CMat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            write!(f, "[")?;
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", format_complex(self[(i, j)]))?;
            }
            writeln!(f, "]")?;
        }
        Ok(())
    }
}

fn checked_dim(a: usize, b: usize) -> Result<usize> {
    match a.checked_mul(b) {
        Some(n) if n <= MAX_REGISTER_DIM => Ok(n),
        _ => Err(Error::CapacityExceeded {
            requested: a.saturating_mul(b),
            max: MAX_REGISTER_DIM,
        }),
    }
}

/// Kronecker product; entry `(i·br + k, j·bc + l)` is `a[i,j]·b[k,l]`.
pub fn kron(a: &CMat, b: &CMat) -> Result<CMat> {
    let rows = checked_dim(a.rows, b.rows)?;
    let cols = checked_dim(a.cols, b.cols)?;
    let mut out = CMat::zeros(rows, cols);
    for i in 0..a.rows {
        for j in 0..a.cols {
            let s = a[(i, j)];
            for k in 0..b.rows {
                for l in 0..b.cols {
                    out[(i * b.rows + k, j * b.cols + l)] = s * b[(k, l)];
                }
            }
        }
    }
    Ok(out)
}

/// Conjugate transpose.
pub fn dagger(m: &CMat) -> CMat {
    CMat::from_fn(m.cols, m.rows, |i, j| m[(j, i)].conj())
}

/// Frobenius norm of `m†m − I`.
pub fn unitarity_defect(m: &CMat) -> f64 {
    let n = m.cols;
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mut g: C64 = (0..m.rows).map(|k| m[(k, i)].conj() * m[(k, j)]).sum();
            if i == j {
                g -= 1.0;
            }
            acc += g.norm_sqr();
        }
    }
    acc.sqrt()
}

fn require_normalized(v: &CVec, what: &str) -> Result<()> {
    if v.is_normalized(STRUCTURAL_TOL) {
        Ok(())
    } else {
        Err(Error::InvalidState(format!(
            "{what} has norm {:.12}, expected 1",
            v.norm()
        )))
    }
}

/// Unitary matrix whose first column is exactly `col0`.
///
/// Uses the Householder reflection `H = I − 2vv†/‖v‖²` with
/// `v = col0 + e^{i·arg(col0[0])}·e₀`, which sends `col0` to
/// `−e^{i·arg(col0[0])}·e₀` without cancellation. Column 0 of `H` is then
/// rephased (and overwritten) so that it reproduces `col0` exactly; the
/// remaining columns are those of `H`.
pub fn complete_to_unitary(col0: &CVec) -> Result<CMat> {
    require_normalized(col0, "first column")?;
    let n = col0.dim();
    let x0 = col0[0];
    let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { c(1.0, 0.0) };
    let mut v = col0.entries().to_vec();
    v[0] += phase;
    // ‖v‖² = ‖col0‖² + 2|x0| + 1 ≥ 2
    let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    let mut u = CMat::from_fn(n, n, |i, j| {
        let h = v[i] * v[j].conj() * (-2.0 / vnorm2);
        if i == j {
            h + 1.0
        } else {
            h
        }
    });
    for i in 0..n {
        u[(i, 0)] = col0[i];
    }
    Ok(u)
}

/// `|⟨a|b⟩|²` for pure states.
pub fn fidelity_pure(a: &CVec, b: &CVec) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr())
}

/// Unitary `V` with `V·from = to`, phase included.
pub fn transport_unitary(from: &CVec, to: &CVec) -> Result<CMat> {
    if from.dim() != to.dim() {
        return Err(Error::ShapeError(format!(
            "transport between dimensions {} and {}",
            from.dim(),
            to.dim()
        )));
    }
    require_normalized(from, "source state")?;
    require_normalized(to, "destination state")?;
    let u_from = complete_to_unitary(from)?;
    let u_to = complete_to_unitary(to)?;
    u_to.matmul(&dagger(&u_from))
}

/// Eigenvalues (ascending) and matching eigenvectors (as columns) of a
/// Hermitian matrix. Only the Hermitian part of `m` is used.
pub fn hermitian_eigen(m: &CMat) -> Result<(Vec<f64>, CMat)> {
    if !m.is_square() {
        return Err(Error::ShapeError("eigendecomposition needs a square matrix".into()));
    }
    let herm = m.add(&dagger(m))?.scale(c(0.5, 0.0));
    let eig = herm.to_nalgebra().symmetric_eigen();
    let n = m.rows;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMat::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Ok((values, vectors))
}

pub fn hermitian_eigenvalues(m: &CMat) -> Result<Vec<f64>> {
    hermitian_eigen(m).map(|(v, _)| v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_unit(d: usize, rng: &mut impl Rng) -> CVec {
        let v = CVec::new(
            (0..d)
                .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect(),
        )
        .unwrap();
        v.normalized().unwrap()
    }

    fn random_mat(n: usize, rng: &mut impl Rng) -> CMat {
        CMat::from_fn(n, n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    fn x2() -> CMat {
        CMat::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap()
    }

    #[test]
    fn kron_identity() {
        let i4 = kron(&CMat::identity(2), &CMat::identity(2)).unwrap();
        assert_eq!(i4, CMat::identity(4));
    }

    #[test]
    fn kron_x_identity_permutes_basis() {
        let m = kron(&x2(), &CMat::identity(2)).unwrap();
        let out = m.apply(&CVec::basis(4, 0).unwrap()).unwrap();
        assert_eq!(out, CVec::basis(4, 2).unwrap());
    }

    #[test]
    fn kron_mixed_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10 {
            let (a, b) = (random_mat(2, &mut rng), random_mat(2, &mut rng));
            let (u, v) = (random_unit(2, &mut rng), random_unit(2, &mut rng));
            let lhs = kron(&a, &b).unwrap().apply(&u.kron(&v).unwrap()).unwrap();
            let rhs = a.apply(&u).unwrap().kron(&b.apply(&v).unwrap()).unwrap();
            assert!(lhs.max_abs_diff(&rhs) < 1e-14);
        }
    }

    #[test]
    fn kron_capacity() {
        let big = CMat::identity(1 << 11);
        assert!(matches!(kron(&big, &big), Err(Error::CapacityExceeded { .. })));
    }

    #[test]
    fn kron_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b, m) = (random_mat(2, &mut rng), random_mat(3, &mut rng), random_mat(2, &mut rng));
        let left = kron(&kron(&a, &b).unwrap(), &m).unwrap();
        let right = kron(&a, &kron(&b, &m).unwrap()).unwrap();
        assert!(left.max_abs_diff(&right) < 1e-15);
    }

    #[test]
    fn dagger_cases() {
        assert_eq!(dagger(&CMat::identity(3)), CMat::identity(3));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_mat(4, &mut rng);
        assert_eq!(dagger(&dagger(&m)), m);
        let g = 0.7_f64;
        let p = CMat::diag(&[c(1.0, 0.0), C64::from_polar(1.0, g)]);
        let pd = CMat::diag(&[c(1.0, 0.0), C64::from_polar(1.0, -g)]);
        assert!(dagger(&p).max_abs_diff(&pd) < 1e-15);
    }

    #[test]
    fn defect_of_identity_and_literal_encoder() {
        assert_eq!(unitarity_defect(&CMat::identity(4)), 0.0);
        // [[x0, -|x1|e^{iθ}], [|x1|e^{iθ}, x0]] at x0 = |x1| = 1/√2, θ = π/2
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let e = C64::from_polar(h, std::f64::consts::FRAC_PI_2);
        let u = CMat::new(2, 2, vec![c(h, 0.0), -e, e, c(h, 0.0)]).unwrap();
        assert!((unitarity_defect(&u) - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn completion_basic_cases() {
        let u = complete_to_unitary(&CVec::basis(2, 0).unwrap()).unwrap();
        assert!(u.max_abs_diff(&CMat::identity(2)) < 1e-15);

        let (x0, x1) = (0.6, 0.8);
        let u = complete_to_unitary(&CVec::from_real(&[x0, x1]).unwrap()).unwrap();
        let expect = CMat::from_real_rows(&[&[x0, -x1], &[x1, x0]]).unwrap();
        assert!(u.max_abs_diff(&expect) < 1e-15);
        assert!(unitarity_defect(&u) < 1e-12);
    }

    #[test]
    fn completion_random_d5() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let x = random_unit(5, &mut rng);
            let u = complete_to_unitary(&x).unwrap();
            assert!(unitarity_defect(&u) <= 1e-12);
            assert!(u.column(0).max_abs_diff(&x) <= 1e-14);
        }
    }

    #[test]
    fn completion_rejects_unnormalized() {
        let v = CVec::from_real(&[1.0, 1.0]).unwrap();
        assert!(matches!(complete_to_unitary(&v), Err(Error::InvalidState(_))));
    }

    #[test]
    fn completion_zero_leading_entry() {
        let x = CVec::new(vec![C64::default(), c(0.0, 0.6), c(0.8, 0.0)]).unwrap();
        let u = complete_to_unitary(&x).unwrap();
        assert!(unitarity_defect(&u) < 1e-12);
        assert_eq!(u.column(0), x);
    }

    #[test]
    fn fidelity_cases() {
        let z0 = CVec::basis(2, 0).unwrap();
        let z1 = CVec::basis(2, 1).unwrap();
        assert_eq!(fidelity_pure(&z0, &z0).unwrap(), 1.0);
        assert_eq!(fidelity_pure(&z0, &z1).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi = random_unit(3, &mut rng);
        let rot = psi.scale(C64::from_polar(1.0, 1.234));
        assert!((fidelity_pure(&psi, &rot).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            fidelity_pure(&z0, &CVec::basis(3, 0).unwrap()),
            Err(Error::ShapeError(_))
        ));
    }

    #[test]
    fn transport_cases() {
        let z0 = CVec::basis(2, 0).unwrap();
        let v = transport_unitary(&z0, &z0).unwrap();
        assert!(v.max_abs_diff(&CMat::identity(2)) < 1e-15);

        let (x0, x1) = (0.6, 0.8);
        let from = CVec::from_real(&[x0, -x1]).unwrap();
        let to = CVec::from_real(&[x0, x1]).unwrap();
        let v = transport_unitary(&from, &to).unwrap();
        let sigma_z = CMat::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]).unwrap();
        assert!(v.apply(&from).unwrap().max_abs_diff(&to) < 1e-12);
        assert!(v
            .apply(&from)
            .unwrap()
            .max_abs_diff(&sigma_z.apply(&from).unwrap())
            < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (a, b) = (random_unit(4, &mut rng), random_unit(4, &mut rng));
        let v = transport_unitary(&a, &b).unwrap();
        assert!((fidelity_pure(&v.apply(&a).unwrap(), &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hermitian_eigenvalues_sorted() {
        let m = CMat::from_real_rows(&[&[0.5, 0.5], &[0.5, 0.5]]).unwrap();
        let ev = hermitian_eigenvalues(&m).unwrap();
        assert!((ev[0]).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn unit_vec(d: usize) -> impl Strategy<Value = CVec> {
            prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), d)
                .prop_filter("non-zero", |v| v.iter().any(|(a, b)| a.abs() + b.abs() > 1e-3))
                .prop_map(|v| {
                    CVec::new(v.into_iter().map(|(a, b)| c(a, b)).collect())
                        .unwrap()
                        .normalized()
                        .unwrap()
                })
        }

        proptest! {
            #[test]
            fn completion_and_transport_are_unitary(
                (a, b) in (2usize..9).prop_flat_map(|d| (unit_vec(d), unit_vec(d)))
            ) {
                let u = complete_to_unitary(&a).unwrap();
                prop_assert!(unitarity_defect(&u) <= 1e-10);
                let v = transport_unitary(&a, &b).unwrap();
                prop_assert!(unitarity_defect(&v) <= 1e-10);
                prop_assert!(v.apply(&a).unwrap().max_abs_diff(&b) <= 1e-12);
            }

            #[test]
            fn fidelity_symmetric_and_phase_blind(
                (a, b) in (2usize..6).prop_flat_map(|d| (unit_vec(d), unit_vec(d))),
                phi in 0.0f64..6.3,
            ) {
                let fab = fidelity_pure(&a, &b).unwrap();
                let fba = fidelity_pure(&b, &a).unwrap();
                let rot = fidelity_pure(&a.scale(C64::from_polar(1.0, phi)), &b).unwrap();
                prop_assert!((fab - fba).abs() <= 1e-12);
                prop_assert!((fab - rot).abs() <= 1e-12);
                prop_assert!((0.0..=1.0 + 1e-12).contains(&fab));
            }
        }
    }
}
