//! Dense linear-algebra engine for small qubit registers.
//!
//! States are immutable values: operations consume a state and return the
//! transformed one. Anything stochastic takes an explicit generator.

mod clock;
mod density;
mod state;

use rand::Rng;
use thiserror::Error;

pub use clock::{validity_ratio, ClockConfig, RamseyValidity, VALIDITY_THRESHOLD};
pub use density::DensityMatrix;
pub use state::StateVector;

/// Largest register held as a dense vector.
pub const MAX_QUBITS: usize = 12;

/// Allowed deviation of `Σ|a|²` from one.
pub const NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("qubit index {index} out of range for a {qubits}-qubit register")]
    QubitOutOfRange { index: usize, qubits: usize },
    #[error("qubit {0} listed more than once")]
    DuplicateQubit(usize),
    #[error("qubit count {qubits} outside {min}..={max}")]
    QubitCount { qubits: usize, min: usize, max: usize },
    #[error("expected {expected} entries, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("state is not normalized (norm/trace {0})")]
    NotNormalized(f64),
    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("matrix has negative eigenvalue {0:e}")]
    NotPositive(f64),
    #[error("duration must be finite and >= 0, got {0}")]
    NegativeDuration(f64),
    #[error("rate must be finite and >= 0, got {0}")]
    NegativeRate(f64),
    #[error("no qubits selected for measurement")]
    NothingToMeasure,
    #[error("invalid clock configuration: {0}")]
    InvalidClock(String),
}

/// Measurement basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Basis {
    /// `|0⟩ / |1⟩`
    Z,
    /// `|+⟩ / |−⟩`
    X,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementOutcome<S> {
    pub basis: Basis,
    /// One bit per measured qubit, in the order requested.
    pub results: Vec<u8>,
    pub post_state: S,
}

/// Hadamard on `qubit`.
pub fn hadamard(state: StateVector, qubit: usize) -> Result<StateVector, QuantumError> {
    state.hadamard(qubit)
}

/// Free evolution of every qubit under `clock` for `duration` seconds.
pub fn evolve_free(state: StateVector, clock: &ClockConfig, duration: f64) -> Result<StateVector, QuantumError> {
    state.evolve_all(clock.detuning(), duration)
}

/// Independent per-qubit dephasing of all qubits.
pub fn dephase(rho: DensityMatrix, gamma: f64, duration: f64) -> Result<DensityMatrix, QuantumError> {
    rho.dephase_all(gamma, duration)
}

pub fn measure<R: Rng + ?Sized>(
    state: StateVector,
    basis: Basis,
    qubits: &[usize],
    rng: &mut R,
) -> Result<MeasurementOutcome<StateVector>, QuantumError> {
    state.measure(basis, qubits, rng)
}

/// Exact `(P0, P1)` for a single atom after Hadamard, free evolution for
/// `duration`, Hadamard.
///
/// With `use_density` the evolution is carried out on the density matrix
/// and the clock's dephasing rate is applied; otherwise the pure path is
/// used and `gamma` is ignored.
pub fn ramsey_sequence(clock: &ClockConfig, duration: f64, use_density: bool) -> Result<(f64, f64), QuantumError> {
    let start = StateVector::zeros(1)?.hadamard(0)?;
    let probs = if use_density {
        DensityMatrix::from_pure(&start)
            .evolve_all(clock.detuning(), duration)?
            .dephase_all(clock.gamma(), duration)?
            .hadamard(0)?
            .z_probabilities(&[0])?
    } else {
        start
            .evolve_all(clock.detuning(), duration)?
            .hadamard(0)?
            .z_probabilities(&[0])?
    };
    Ok((probs[0], probs[1]))
}

/// `|Ω|/b` with the default warning threshold.
pub fn ramsey_validity(clock: &ClockConfig) -> RamseyValidity {
    clock.validity()
}

/// `(|0…0⟩ + |1…1⟩)/√2` on `n` qubits, `2 ≤ n ≤ 12`.
pub fn ghz_state(n: usize) -> Result<StateVector, QuantumError> {
    if !(2..=MAX_QUBITS).contains(&n) {
        return Err(QuantumError::QubitCount {
            qubits: n,
            min: 2,
            max: MAX_QUBITS,
        });
    }
    cat_state(n)
}

/// Same as [`ghz_state`] but also accepts `n = 1` (where it is `|+⟩`).
pub(crate) fn cat_state(n: usize) -> Result<StateVector, QuantumError> {
    let mut amps = vec![num_complex::Complex64::new(0.0, 0.0); 1 << n];
    let h = std::f64::consts::FRAC_1_SQRT_2;
    amps[0] = num_complex::Complex64::new(h, 0.0);
    amps[(1 << n) - 1] = num_complex::Complex64::new(h, 0.0);
    StateVector::new(n, amps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn clock(detuning: f64, gamma: f64) -> ClockConfig {
        ClockConfig::new(9_192_631_770.0, detuning, 1e4, gamma).unwrap()
    }

    #[test]
    fn ramsey_endpoints() {
        let (p0, p1) = ramsey_sequence(&clock(1.0, 0.0), 0.0, false).unwrap();
        assert!((p0 - 1.0).abs() < 1e-15 && p1.abs() < 1e-15);
        let (p0, p1) = ramsey_sequence(&clock(PI, 0.0), 1.0, false).unwrap();
        assert!(p0.abs() < 1e-15 && (p1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dephased_ramsey_at_ln2() {
        let c = clock(2.0, 1.0);
        let t = std::f64::consts::LN_2;
        let (_, p1) = ramsey_sequence(&c, t, true).unwrap();
        let expected = 0.5 * (1.0 - 0.5 * (2.0 * t).cos());
        assert!((p1 - expected).abs() < 1e-14);
    }

    #[test]
    fn ghz_amplitudes() {
        let g2 = ghz_state(2).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((g2.amplitudes()[0].re - h).abs() < 1e-15);
        assert!((g2.amplitudes()[3].re - h).abs() < 1e-15);
        let g3 = ghz_state(3).unwrap();
        for (i, a) in g3.amplitudes().iter().enumerate() {
            let want = if i == 0 || i == 7 { h } else { 0.0 };
            assert!((a.re - want).abs() < 1e-15 && a.im == 0.0);
        }
        assert!(ghz_state(1).is_err());
        assert!(ghz_state(13).is_err());
    }
}
