use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::Rng;

use super::{Basis, MeasurementOutcome, QuantumError, MAX_QUBITS, NORM_TOLERANCE};

/// Pure state of `n` qubits as a dense amplitude vector.
///
/// Basis index bits are big-endian in qubit order: qubit 0 is the most
/// significant bit, so for two qubits `|01⟩` (first qubit 0, second 1) is
/// index 1.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// Builds a state from raw amplitudes, rejecting anything not normalized
    /// to within `NORM_TOLERANCE`.
    pub fn new(qubits: usize, amps: Vec<Complex64>) -> Result<Self, QuantumError> {
        check_qubits(qubits, 1)?;
        if amps.len() != 1 << qubits {
            return Err(QuantumError::DimensionMismatch {
                expected: 1 << qubits,
                found: amps.len(),
            });
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if !norm.is_finite() || (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(QuantumError::NotNormalized(norm));
        }
        Ok(Self { qubits, amps })
    }

    /// Builds a state from amplitudes of any nonzero norm, rescaling them.
    pub fn normalized(qubits: usize, mut amps: Vec<Complex64>) -> Result<Self, QuantumError> {
        check_qubits(qubits, 1)?;
        if amps.len() != 1 << qubits {
            return Err(QuantumError::DimensionMismatch {
                expected: 1 << qubits,
                found: amps.len(),
            });
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(QuantumError::NotNormalized(norm));
        }
        let scale = 1.0 / norm.sqrt();
        amps.iter_mut().for_each(|a| *a *= scale);
        Ok(Self { qubits, amps })
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(qubits: usize, index: usize) -> Result<Self, QuantumError> {
        check_qubits(qubits, 1)?;
        let dim = 1 << qubits;
        if index >= dim {
            return Err(QuantumError::QubitOutOfRange { index, qubits });
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(Self { qubits, amps })
    }

    /// All qubits in `|0⟩`.
    pub fn zeros(qubits: usize) -> Result<Self, QuantumError> {
        Self::basis(qubits, 0)
    }

    pub fn plus() -> Self {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        Self { qubits: 1, amps: vec![h, h] }
    }

    pub fn minus() -> Self {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        Self { qubits: 1, amps: vec![h, -h] }
    }

    /// Zero-qubit stand-in used while a state is moved out and back.
    pub(crate) fn placeholder() -> Self {
        Self {
            qubits: 0,
            amps: Vec::new(),
        }
    }

    /// `(|01⟩ − |10⟩)/√2`, the shared pair state before the clocks start.
    pub fn singlet() -> Self {
        let h = FRAC_1_SQRT_2;
        Self {
            qubits: 2,
            amps: vec![
                Complex64::new(0.0, 0.0),
                Complex64::new(h, 0.0),
                Complex64::new(-h, 0.0),
                Complex64::new(0.0, 0.0),
            ],
        }
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Tensor product `self ⊗ other`; `self` supplies the leading qubits.
    pub fn kron(&self, other: &StateVector) -> Result<Self, QuantumError> {
        check_qubits(self.qubits + other.qubits, 1)?;
        let mut amps = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        Ok(Self {
            qubits: self.qubits + other.qubits,
            amps,
        })
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

    /// Hadamard on one qubit: `|0⟩ → |+⟩`, `|1⟩ → |−⟩`.
    pub fn hadamard(mut self, qubit: usize) -> Result<Self, QuantumError> {
        let stride = self.stride(qubit)?;
        hadamard_in_place(&mut self.amps, stride);
        Ok(self)
    }

    /// Pauli Z on one qubit (a local relative-phase flip).
    pub fn phase_flip(mut self, qubit: usize) -> Result<Self, QuantumError> {
        let stride = self.stride(qubit)?;
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & stride != 0 {
                *a = -*a;
            }
        }
        Ok(self)
    }

    /// Free evolution in the rotating frame of each qubit's own drive.
    ///
    /// Each listed qubit's `|0⟩` component picks up `e^(−iΩt/2)` and its
    /// `|1⟩` component `e^(+iΩt/2)`, with `Ω` the detuning paired with it.
    pub fn evolve_qubits(mut self, detunings: &[(usize, f64)], duration: f64) -> Result<Self, QuantumError> {
        check_duration(duration)?;
        let mut strides = Vec::with_capacity(detunings.len());
        for &(q, omega) in detunings {
            strides.push((self.stride(q)?, 0.5 * omega * duration));
        }
        for (i, a) in self.amps.iter_mut().enumerate() {
            let angle: f64 = strides
                .iter()
                .map(|&(s, half)| if i & s == 0 { -half } else { half })
                .sum();
            *a *= Complex64::from_polar(1.0, angle);
        }
        Ok(self)
    }

    /// Free evolution of every qubit with the same detuning.
    pub fn evolve_all(self, detuning: f64, duration: f64) -> Result<Self, QuantumError> {
        let list: Vec<(usize, f64)> = (0..self.qubits).map(|q| (q, detuning)).collect();
        self.evolve_qubits(&list, duration)
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<Complex64, QuantumError> {
        if self.qubits != other.qubits {
            return Err(QuantumError::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// `|⟨self|other⟩|²`, insensitive to global phase.
    pub fn fidelity(&self, other: &StateVector) -> Result<f64, QuantumError> {
        Ok(self.inner(other)?.norm_sqr())
    }

    /// Joint Z-basis outcome distribution of `qubits`, indexed by the
    /// outcome bits in the order the qubits are listed (first = MSB).
    pub fn z_probabilities(&self, qubits: &[usize]) -> Result<Vec<f64>, QuantumError> {
        let strides = self.outcome_strides(qubits)?;
        let mut probs = vec![0.0; 1 << strides.len()];
        for (i, a) in self.amps.iter().enumerate() {
            probs[outcome_index(i, &strides)] += a.norm_sqr();
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

    /// Projective measurement of `qubits` in `basis`, sampled per the Born
    /// rule. For the X basis, result bit 0 is `|+⟩` and 1 is `|−⟩`, and the
    /// post-measurement state carries those eigenstates.
    pub fn measure<R: Rng + ?Sized>(
        mut self,
        basis: Basis,
        qubits: &[usize],
        rng: &mut R,
    ) -> Result<MeasurementOutcome<StateVector>, QuantumError> {
        let strides = self.outcome_strides(qubits)?;
        if basis == Basis::X {
            for &s in &strides {
                hadamard_in_place(&mut self.amps, s);
            }
        }
        let mut probs = vec![0.0; 1 << strides.len()];
        for (i, a) in self.amps.iter().enumerate() {
            probs[outcome_index(i, &strides)] += a.norm_sqr();
        }
        let outcome = sample_index(&probs, rng);
        let scale = 1.0 / probs[outcome].sqrt();
        for (i, a) in self.amps.iter_mut().enumerate() {
            if outcome_index(i, &strides) == outcome {
                *a *= scale;
            } else {
                *a = Complex64::new(0.0, 0.0);
            }
        }
        if basis == Basis::X {
            for &s in &strides {
                hadamard_in_place(&mut self.amps, s);
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

    /// `⟨X⊗X⊗…⊗X⟩` over all qubits.
    pub fn x_parity(&self) -> f64 {
        let flip = self.dim() - 1;
        self.amps
            .iter()
            .enumerate()
            .map(|(i, a)| (a.conj() * self.amps[i ^ flip]).re)
            .sum()
    }
}

pub(crate) fn hadamard_in_place(amps: &mut [Complex64], stride: usize) {
    let h = FRAC_1_SQRT_2;
    for base in (0..amps.len()).step_by(2 * stride) {
        for i in base..base + stride {
            let a = amps[i];
            let b = amps[i + stride];
            amps[i] = (a + b) * h;
            amps[i + stride] = (a - b) * h;
        }
    }
}

pub(crate) fn outcome_index(i: usize, strides: &[usize]) -> usize {
    strides
        .iter()
        .fold(0, |acc, &s| (acc << 1) | usize::from(i & s != 0))
}

/// Samples an index from a discrete distribution that sums to ~1.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_nonzero = k;
            acc += p;
            if u < acc {
                return k;
            }
        }
    }
    last_nonzero
}

pub(crate) fn check_qubits(qubits: usize, min: usize) -> Result<(), QuantumError> {
    if qubits < min || qubits > MAX_QUBITS {
        return Err(QuantumError::QubitCount {
            qubits,
            min,
            max: MAX_QUBITS,
        });
    }
    Ok(())
}

pub(crate) fn check_duration(duration: f64) -> Result<(), QuantumError> {
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(QuantumError::NegativeDuration(duration));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SimRng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn hadamard_maps_zero_to_plus() {
        let s = StateVector::zeros(1).unwrap().hadamard(0).unwrap();
        assert!((s.fidelity(&StateVector::plus()).unwrap() - 1.0).abs() < 1e-15);
        assert!((s.amplitudes()[0].re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((s.amplitudes()[1].re - FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn hadamard_rejects_bad_index() {
        let err = StateVector::zeros(2).unwrap().hadamard(2).unwrap_err();
        assert!(matches!(err, QuantumError::QubitOutOfRange { index: 2, qubits: 2 }));
    }

    #[test]
    fn hadamard_on_singlet_matches_matrix_product() {
        // H ⊗ I as an explicit 4×4 matrix.
        let h = FRAC_1_SQRT_2;
        let m = [
            [h, 0.0, h, 0.0],
            [0.0, h, 0.0, h],
            [h, 0.0, -h, 0.0],
            [0.0, h, 0.0, -h],
        ];
        let psi = StateVector::singlet();
        let expected: Vec<Complex64> = (0..4)
            .map(|r| (0..4).map(|k| psi.amplitudes()[k] * m[r][k]).sum())
            .collect();
        let got = psi.hadamard(0).unwrap();
        for (g, e) in got.amplitudes().iter().zip(&expected) {
            assert!((g - e).norm() < 1e-15);
        }
    }

    #[test]
    fn evolve_identity_at_zero_and_flip_at_pi() {
        let p = StateVector::plus();
        let same = p.clone().evolve_all(3.7, 0.0).unwrap();
        assert_eq!(same, p);
        let flipped = StateVector::plus()
            .evolve_all(std::f64::consts::PI, 1.0)
            .unwrap();
        assert!((flipped.fidelity(&StateVector::minus()).unwrap() - 1.0).abs() < 1e-15);
        // Global phase e^(−iπ/2) relative to |−⟩.
        let ratio = flipped.amplitudes()[0] / StateVector::minus().amplitudes()[0];
        assert!((ratio - c(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn evolve_rejects_negative_duration() {
        let err = StateVector::plus().evolve_all(1.0, -1.0).unwrap_err();
        assert!(matches!(err, QuantumError::NegativeDuration(_)));
    }

    #[test]
    fn z_measurement_of_zero_is_certain() {
        let mut rng = SimRng::seeded(1);
        for _ in 0..100 {
            let out = StateVector::zeros(1)
                .unwrap()
                .measure(Basis::Z, &[0], &mut rng)
                .unwrap();
            assert_eq!(out.results, vec![0]);
        }
    }

    #[test]
    fn measuring_nothing_is_an_error() {
        let mut rng = SimRng::seeded(1);
        let err = StateVector::plus().measure(Basis::Z, &[], &mut rng).unwrap_err();
        assert!(matches!(err, QuantumError::NothingToMeasure));
        let err = StateVector::singlet()
            .measure(Basis::Z, &[1, 1], &mut rng)
            .unwrap_err();
        assert!(matches!(err, QuantumError::DuplicateQubit(1)));
    }

    #[test]
    fn repeated_measurement_is_stable() {
        let mut rng = SimRng::seeded(9);
        for basis in [Basis::X, Basis::Z] {
            for _ in 0..50 {
                let first = StateVector::singlet().measure(basis, &[0], &mut rng).unwrap();
                let again = first
                    .post_state
                    .clone()
                    .measure(basis, &[0], &mut rng)
                    .unwrap();
                assert_eq!(first.results, again.results);
                assert!((first.post_state.norm_sqr() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn new_rejects_unnormalized_and_wrong_length() {
        assert!(matches!(
            StateVector::new(1, vec![c(1.0, 0.0), c(1.0, 0.0)]),
            Err(QuantumError::NotNormalized(_))
        ));
        assert!(matches!(
            StateVector::new(2, vec![c(1.0, 0.0)]),
            Err(QuantumError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            StateVector::zeros(13),
            Err(QuantumError::QubitCount { .. })
        ));
    }

    #[test]
    fn parity_of_plus_is_one() {
        assert!((StateVector::plus().x_parity() - 1.0).abs() < 1e-15);
        assert!((StateVector::minus().x_parity() + 1.0).abs() < 1e-15);
    }
}
