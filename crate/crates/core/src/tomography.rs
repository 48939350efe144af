//! Simulated single-qubit state tomography by linear inversion.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::register::{DensityMatrix, StateRegister};
use crate::tensor::{c, hermitian_eigen, hermitian_eigenvalues, CMat, CVec, C64};

/// Estimated Bloch components and the shots spent on each axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PauliEstimates {
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
    /// Shots on the X, Y and Z axes.
    pub shots: [u64; 3],
}

impl PauliEstimates {
    pub fn bloch(&self) -> [f64; 3] {
        [self.rx, self.ry, self.rz]
    }
}

/// Anything that can be measured as a single qubit.
pub trait QubitSource {
    fn qubit_density(&self) -> Result<DensityMatrix>;
}

impl QubitSource for DensityMatrix {
    fn qubit_density(&self) -> Result<DensityMatrix> {
        if self.dim() != 2 {
            return Err(Error::ShapeError(format!("tomography of a {}-level system", self.dim())));
        }
        Ok(self.clone())
    }
}

impl QubitSource for StateRegister {
    fn qubit_density(&self) -> Result<DensityMatrix> {
        if self.dims() != [2] {
            return Err(Error::ShapeError(format!(
                "tomography needs a single qubit, register has dims {:?}",
                self.dims()
            )));
        }
        DensityMatrix::from_pure(self.amplitudes())
    }
}

impl QubitSource for CVec {
    fn qubit_density(&self) -> Result<DensityMatrix> {
        if self.dim() != 2 {
            return Err(Error::ShapeError(format!("tomography of a {}-level system", self.dim())));
        }
        DensityMatrix::from_pure(self)
    }
}

/// Exact Bloch vector `(2Re ρ₀₁, −2Im ρ₀₁, ρ₀₀ − ρ₁₁)`.
pub fn bloch_vector(rho: &DensityMatrix) -> Result<[f64; 3]> {
    if rho.dim() != 2 {
        return Err(Error::ShapeError(format!("Bloch vector of a {}-level system", rho.dim())));
    }
    let m = rho.matrix();
    Ok([2.0 * m[(0, 1)].re, -2.0 * m[(0, 1)].im, m[(0, 0)].re - m[(1, 1)].re])
}

/// Splits `shots` over X, Y, Z; the remainder goes to Z.
pub fn shot_allocation(shots: u64) -> [u64; 3] {
    let per = shots / 3;
    [per, per, shots - 2 * per]
}

/// Simulates projective measurements in the X, Y and Z eigenbases.
///
/// Each axis estimate is `(N₊ − N₋)/N_axis`.
pub fn sample_pauli_expectations(
    state: &impl QubitSource,
    shots: u64,
    rng: &mut impl Rng,
) -> Result<PauliEstimates> {
    if shots < 3 {
        return Err(Error::InvalidState(format!("need at least 3 shots, got {shots}")));
    }
    let rho = state.qubit_density()?;
    let r = bloch_vector(&rho)?;
    let alloc = shot_allocation(shots);
    let mut est = [0.0; 3];
    for axis in 0..3 {
        let n = alloc[axis];
        let p_plus = ((1.0 + r[axis]) / 2.0).clamp(0.0, 1.0);
        let plus = Binomial::new(n, p_plus)
            .map_err(|e| Error::InvalidState(format!("binomial sampler: {e}")))?
            .sample(rng);
        est[axis] = ((2 * plus) as f64 - n as f64) / n as f64;
    }
    Ok(PauliEstimates {
        rx: est[0].clamp(-1.0, 1.0),
        ry: est[1].clamp(-1.0, 1.0),
        rz: est[2].clamp(-1.0, 1.0),
        shots: alloc,
    })
}

/// Linear inversion `(I + rₓX + r_yY + r_zZ)/2`, projected onto the physical
/// set by clipping negative eigenvalues and renormalizing the trace.
pub fn reconstruct_qubit(est: &PauliEstimates) -> DensityMatrix {
    let (x, y, z) = (est.rx, est.ry, est.rz);
    let raw = CMat::new(
        2,
        2,
        vec![
            c((1.0 + z) / 2.0, 0.0),
            c(x / 2.0, -y / 2.0),
            c(x / 2.0, y / 2.0),
            c((1.0 - z) / 2.0, 0.0),
        ],
    )
    .expect("2x2");
    let (vals, vecs) = hermitian_eigen(&raw).expect("2x2 Hermitian");
    let clipped: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    let weights: Vec<f64> = if total > 0.0 {
        clipped.iter().map(|v| v / total).collect()
    } else {
        vec![0.5, 0.5]
    };
    let mut rho = CMat::zeros(2, 2);
    for (k, w) in weights.iter().enumerate() {
        let v = vecs.column(k);
        rho = rho.add(&v.outer(&v).scale(c(*w, 0.0))).expect("2x2");
    }
    // exact Hermitian symmetrization
    let h = CMat::from_fn(2, 2, |i, j| (rho[(i, j)] + rho[(j, i)].conj()) / 2.0);
    DensityMatrix::new_unchecked(h)
}

/// `½‖ρ − σ‖₁`.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::ShapeError(format!(
            "trace distance between dims {} and {}",
            rho.dim(),
            sigma.dim()
        )));
    }
    let diff = rho.matrix().sub(sigma.matrix())?;
    Ok(hermitian_eigenvalues(&diff)?.iter().map(|v| v.abs()).sum::<f64>() / 2.0)
}

/// `⟨t|ρ|t⟩`.
pub fn fidelity_mixed(rho: &DensityMatrix, target: &CVec) -> Result<f64> {
    if rho.dim() != target.dim() {
        return Err(Error::ShapeError(format!(
            "fidelity between a {}-level state and a {}-level target",
            rho.dim(),
            target.dim()
        )));
    }
    let rt = rho.matrix().apply(target)?;
    Ok(target.inner(&rt)?.re)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TomoResult {
    pub estimates: PauliEstimates,
    pub rho: DensityMatrix,
    pub fidelity_to_target: f64,
    pub trace_distance_to_target: f64,
    pub shots: u64,
}

/// Samples, reconstructs and scores a qubit state against `target`.
pub fn tomograph(
    state: &impl QubitSource,
    target: &CVec,
    shots: u64,
    rng: &mut impl Rng,
) -> Result<TomoResult> {
    let estimates = sample_pauli_expectations(state, shots, rng)?;
    let rho = reconstruct_qubit(&estimates);
    let exact = target.qubit_density()?;
    Ok(TomoResult {
        estimates,
        fidelity_to_target: fidelity_mixed(&rho, target)?,
        trace_distance_to_target: trace_distance(&rho, &exact)?,
        rho,
        shots,
    })
}

/// `x₀|0⟩ + |x₁|e^{iθ}|1⟩` as a vector; handy for tests and the CLI.
pub fn qubit_vector(x0: f64, x1mag: f64, theta: f64) -> CVec {
    CVec::new(vec![c(x0, 0.0), C64::from_polar(x1mag, theta)]).expect("two entries")
}
