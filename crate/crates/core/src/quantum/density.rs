use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use super::state::{check_duration, check_qubits, outcome_index, sample_index};
use super::{Basis, MeasurementOutcome, QuantumError, StateVector};

const HERMITIAN_TOLERANCE: f64 = 1e-12;
const TRACE_TOLERANCE: f64 = 1e-12;
const EIGEN_FLOOR: f64 = -1e-10;

/// Mixed state of `n` qubits, same index convention as [`StateVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    qubits: usize,
    rho: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Wraps a matrix after checking Hermiticity, unit trace and positivity.
    pub fn new(qubits: usize, rho: DMatrix<Complex64>) -> Result<Self, QuantumError> {
        check_qubits(qubits, 1)?;
        let dim = 1 << qubits;
        if rho.nrows() != dim || rho.ncols() != dim {
            return Err(QuantumError::DimensionMismatch {
                expected: dim * dim,
                found: rho.len(),
            });
        }
        let out = Self { qubits, rho };
        out.validate()?;
        Ok(out)
    }

    pub fn from_pure(state: &StateVector) -> Self {
        let v = nalgebra::DVector::from_column_slice(state.amplitudes());
        Self {
            qubits: state.qubits(),
            rho: &v * v.adjoint(),
        }
    }

    /// Checks the density-matrix invariants.
    pub fn validate(&self) -> Result<(), QuantumError> {
        let dim = self.dim();
        for i in 0..dim {
            for j in i..dim {
                let d = (self.rho[(i, j)] - self.rho[(j, i)].conj()).norm();
                if d > HERMITIAN_TOLERANCE {
                    return Err(QuantumError::NotHermitian(d));
                }
            }
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > TRACE_TOLERANCE {
            return Err(QuantumError::NotNormalized(tr));
        }
        let min = self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if min < EIGEN_FLOOR {
            return Err(QuantumError::NotPositive(min));
        }
        Ok(())
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.qubits
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.rho[(i, i)].re).sum()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.rho.clone().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Von Neumann entropy in bits.
    pub fn entropy_bits(&self) -> f64 {
        self.eigenvalues()
            .into_iter()
            .filter(|&l| l > 1e-15)
            .map(|l| -l * l.log2())
            .sum()
    }

    fn stride(&self, qubit: usize) -> Result<usize, QuantumError> {
        if qubit >= self.qubits {
            return Err(QuantumError::QubitOutOfRange {
                index: qubit,
                qubits: self.qubits,
            });
        }
        Ok(1 << (self.qubits - 1 - qubit))
    }

    /// `H ρ H` on one qubit.
    pub fn hadamard(mut self, qubit: usize) -> Result<Self, QuantumError> {
        let s = self.stride(qubit)?;
        hadamard_both_sides(&mut self.rho, s);
        Ok(self)
    }

    /// Unitary free evolution, same phase law as [`StateVector::evolve_qubits`].
    pub fn evolve_qubits(mut self, detunings: &[(usize, f64)], duration: f64) -> Result<Self, QuantumError> {
        check_duration(duration)?;
        let mut strides = Vec::with_capacity(detunings.len());
        for &(q, omega) in detunings {
            strides.push((self.stride(q)?, 0.5 * omega * duration));
        }
        let phases: Vec<Complex64> = (0..self.dim())
            .map(|i| {
                let angle: f64 = strides
                    .iter()
                    .map(|&(s, half)| if i & s == 0 { -half } else { half })
                    .sum();
                Complex64::from_polar(1.0, angle)
            })
            .collect();
        let dim = self.dim();
        for j in 0..dim {
            for i in 0..dim {
                self.rho[(i, j)] *= phases[i] * phases[j].conj();
            }
        }
        Ok(self)
    }

    pub fn evolve_all(self, detuning: f64, duration: f64) -> Result<Self, QuantumError> {
        let list: Vec<(usize, f64)> = (0..self.qubits).map(|q| (q, detuning)).collect();
        self.evolve_qubits(&list, duration)
    }

    /// Independent pure dephasing of the listed qubits at rate `gamma` for
    /// `duration`: every coherence between basis states that differ on a
    /// listed qubit shrinks by `e^(−γt)` per differing qubit.
    pub fn dephase_qubits(mut self, qubits: &[usize], gamma: f64, duration: f64) -> Result<Self, QuantumError> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(QuantumError::NegativeRate(gamma));
        }
        check_duration(duration)?;
        let mut mask = 0usize;
        for &q in qubits {
            mask |= self.stride(q)?;
        }
        if gamma == 0.0 || duration == 0.0 {
            return Ok(self);
        }
        let decay = (-gamma * duration).exp();
        let dim = self.dim();
        for j in 0..dim {
            for i in 0..dim {
                let differing = ((i ^ j) & mask).count_ones();
                if differing > 0 {
                    self.rho[(i, j)] *= decay.powi(differing as i32);
                }
            }
        }
        Ok(self)
    }

    pub fn dephase_all(self, gamma: f64, duration: f64) -> Result<Self, QuantumError> {
        let all: Vec<usize> = (0..self.qubits).collect();
        self.dephase_qubits(&all, gamma, duration)
    }

    /// Joint Z outcome distribution of `qubits` (first listed = MSB).
    pub fn z_probabilities(&self, qubits: &[usize]) -> Result<Vec<f64>, QuantumError> {
        let strides = self.outcome_strides(qubits)?;
        let mut probs = vec![0.0; 1 << strides.len()];
        for i in 0..self.dim() {
            probs[outcome_index(i, &strides)] += self.rho[(i, i)].re;
        }
        Ok(probs)
    }

    fn outcome_strides(&self, qubits: &[usize]) -> Result<Vec<usize>, QuantumError> {
        if qubits.is_empty() {
            return Err(QuantumError::NothingToMeasure);
        }
        let mut strides = Vec::with_capacity(qubits.len());
        for &q in qubits {
            let s = self.stride(q)?;
            if strides.contains(&s) {
                return Err(QuantumError::DuplicateQubit(q));
            }
            strides.push(s);
        }
        Ok(strides)
    }

    /// Sampled projective measurement; see [`StateVector::measure`].
    pub fn measure<R: Rng + ?Sized>(
        mut self,
        basis: Basis,
        qubits: &[usize],
        rng: &mut R,
    ) -> Result<MeasurementOutcome<DensityMatrix>, QuantumError> {
        let strides = self.outcome_strides(qubits)?;
        if basis == Basis::X {
            for &s in &strides {
                hadamard_both_sides(&mut self.rho, s);
            }
        }
        let mut probs = vec![0.0; 1 << strides.len()];
        for i in 0..self.dim() {
            probs[outcome_index(i, &strides)] += self.rho[(i, i)].re.max(0.0);
        }
        let outcome = sample_index(&probs, rng);
        let scale = 1.0 / probs[outcome];
        let dim = self.dim();
        for j in 0..dim {
            let keep_j = outcome_index(j, &strides) == outcome;
            for i in 0..dim {
                if keep_j && outcome_index(i, &strides) == outcome {
                    self.rho[(i, j)] *= scale;
                } else {
                    self.rho[(i, j)] = Complex64::new(0.0, 0.0);
                }
            }
        }
        if basis == Basis::X {
            for &s in &strides {
                hadamard_both_sides(&mut self.rho, s);
            }
        }
        let k = strides.len();
        let results = (0..k).map(|j| ((outcome >> (k - 1 - j)) & 1) as u8).collect();
        Ok(MeasurementOutcome {
            basis,
            results,
            post_state: self,
        })
    }

    /// Non-selective projective measurement: the outcome-averaged state.
    pub fn measure_unread(mut self, basis: Basis, qubits: &[usize]) -> Result<Self, QuantumError> {
        let strides = self.outcome_strides(qubits)?;
        if basis == Basis::X {
            for &s in &strides {
                hadamard_both_sides(&mut self.rho, s);
            }
        }
        let dim = self.dim();
        for j in 0..dim {
            for i in 0..dim {
                if outcome_index(i, &strides) != outcome_index(j, &strides) {
                    self.rho[(i, j)] = Complex64::new(0.0, 0.0);
                }
            }
        }
        if basis == Basis::X {
            for &s in &strides {
                hadamard_both_sides(&mut self.rho, s);
            }
        }
        Ok(self)
    }

    /// Reduced state of the listed qubits (kept in the listed order).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self, QuantumError> {
        check_qubits(keep.len(), 1)?;
        let mut keep_strides = Vec::with_capacity(keep.len());
        for &q in keep {
            let s = self.stride(q)?;
            if keep_strides.contains(&s) {
                return Err(QuantumError::DuplicateQubit(q));
            }
            keep_strides.push(s);
        }
        let kept_mask: usize = keep_strides.iter().sum();
        let dim = self.dim();
        let out_dim = 1 << keep.len();
        let mut out = DMatrix::<Complex64>::zeros(out_dim, out_dim);
        for i in 0..dim {
            let a = outcome_index(i, &keep_strides);
            for j in 0..dim {
                if (i & !kept_mask) == (j & !kept_mask) {
                    let b = outcome_index(j, &keep_strides);
                    out[(a, b)] += self.rho[(i, j)];
                }
            }
        }
        Ok(Self {
            qubits: keep.len(),
            rho: out,
        })
    }

    /// `Tr(ρ X⊗X⊗…⊗X)` over all qubits.
    pub fn x_parity(&self) -> f64 {
        let flip = self.dim() - 1;
        (0..self.dim()).map(|i| self.rho[(i ^ flip, i)].re).sum()
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn fidelity_pure(&self, psi: &StateVector) -> Result<f64, QuantumError> {
        if psi.qubits() != self.qubits {
            return Err(QuantumError::DimensionMismatch {
                expected: self.dim(),
                found: psi.dim(),
            });
        }
        let a = psi.amplitudes();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                acc += a[i].conj() * self.rho[(i, j)] * a[j];
            }
        }
        Ok(acc.re)
    }
}

fn hadamard_both_sides(rho: &mut DMatrix<Complex64>, stride: usize) {
    let h = FRAC_1_SQRT_2;
    let dim = rho.nrows();
    // Left multiply: mix row pairs.
    for base in (0..dim).step_by(2 * stride) {
        for i in base..base + stride {
            for c in 0..dim {
                let a = rho[(i, c)];
                let b = rho[(i + stride, c)];
                rho[(i, c)] = (a + b) * h;
                rho[(i + stride, c)] = (a - b) * h;
            }
        }
    }
    // Right multiply: mix column pairs.
    for base in (0..dim).step_by(2 * stride) {
        for j in base..base + stride {
            for r in 0..dim {
                let a = rho[(r, j)];
                let b = rho[(r, j + stride)];
                rho[(r, j)] = (a + b) * h;
                rho[(r, j + stride)] = (a - b) * h;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dephasing_halves_coherence_at_ln2() {
        let rho = DensityMatrix::from_pure(&StateVector::plus())
            .dephase_all(1.0, std::f64::consts::LN_2)
            .unwrap();
        assert!((rho.entries()[(0, 1)].re - 0.25).abs() < 1e-15);
        assert!((rho.entries()[(1, 0)].re - 0.25).abs() < 1e-15);
        assert!((rho.entries()[(0, 0)].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_rate_is_identity_and_long_time_is_diagonal() {
        let rho = DensityMatrix::from_pure(&StateVector::singlet());
        assert_eq!(rho.clone().dephase_all(0.0, 10.0).unwrap(), rho);
        let flat = DensityMatrix::from_pure(&StateVector::plus())
            .dephase_all(1.0, 1e3)
            .unwrap();
        assert!(flat.entries()[(0, 1)].norm() < 1e-300);
        assert!((flat.entries()[(0, 0)].re - 0.5).abs() < 1e-15);
        flat.validate().unwrap();
    }

    #[test]
    fn dephase_rejects_negative_inputs() {
        let rho = DensityMatrix::from_pure(&StateVector::plus());
        assert!(matches!(
            rho.clone().dephase_all(-1.0, 1.0),
            Err(QuantumError::NegativeRate(_))
        ));
        assert!(matches!(
            rho.dephase_all(1.0, -1.0),
            Err(QuantumError::NegativeDuration(_))
        ));
    }

    #[test]
    fn singlet_reduced_state_is_maximally_mixed() {
        let rho = DensityMatrix::from_pure(&StateVector::singlet());
        for q in 0..2 {
            let red = rho.partial_trace(&[q]).unwrap();
            assert!((red.entries()[(0, 0)].re - 0.5).abs() < 1e-15);
            assert!(red.entries()[(0, 1)].norm() < 1e-15);
            assert!((red.entropy_bits() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn new_rejects_non_density_matrices() {
        let bad = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.5, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(-0.5, 0.0),
            ],
        );
        assert!(matches!(DensityMatrix::new(1, bad), Err(QuantumError::NotPositive(_))));
        let skew = DMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.5, 0.0),
                Complex64::new(0.1, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.5, 0.0),
            ],
        );
        assert!(matches!(DensityMatrix::new(1, skew), Err(QuantumError::NotHermitian(_))));
    }

    #[test]
    fn hadamard_conjugation_matches_pure_path() {
        let psi = StateVector::singlet().evolve_qubits(&[(0, 1.3)], 0.7).unwrap();
        let via_rho = DensityMatrix::from_pure(&psi).hadamard(1).unwrap();
        let via_psi = DensityMatrix::from_pure(&psi.hadamard(1).unwrap());
        assert!((via_rho.entries() - via_psi.entries()).norm() < 1e-14);
    }
}
