use std::f64::consts::TAU;

use super::QuantumError;

/// Detuning-to-microwave-amplitude ratio above which the two-level fringe
/// formula is flagged as approximate.
pub const VALIDITY_THRESHOLD: f64 = 0.01;

/// Parameters of one party's clock.
///
/// The drive frequency is not stored separately: at caesium frequencies
/// `2π·ν₀` is ~5.8e10 rad/s and an `f64` can only resolve it to ~8e-6 rad/s,
/// so the detuning is the primary quantity and `omega_drive` is derived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockConfig {
    nu0: f64,
    detuning: f64,
    b_param: f64,
    gamma: f64,
}

impl ClockConfig {
    /// `nu0` in Hz, `detuning` Ω = ω − ω₀ in rad/s, `b_param` in rad/s,
    /// `gamma` (dephasing rate) in 1/s.
    pub fn new(nu0: f64, detuning: f64, b_param: f64, gamma: f64) -> Result<Self, QuantumError> {
        if !(nu0.is_finite() && nu0 >= 0.0) {
            return Err(QuantumError::InvalidClock(format!("nu0 must be finite and >= 0, got {nu0}")));
        }
        if !detuning.is_finite() {
            return Err(QuantumError::InvalidClock(format!("detuning must be finite, got {detuning}")));
        }
        if !(b_param.is_finite() && b_param > 0.0) {
            return Err(QuantumError::InvalidClock(format!("b_param must be > 0, got {b_param}")));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(QuantumError::NegativeRate(gamma));
        }
        Ok(Self {
            nu0,
            detuning,
            b_param,
            gamma,
        })
    }

    /// Builds from an absolute drive frequency. Precision of the derived
    /// detuning is limited by the magnitude of `omega_drive`.
    pub fn from_drive(nu0: f64, omega_drive: f64, b_param: f64, gamma: f64) -> Result<Self, QuantumError> {
        Self::new(nu0, omega_drive - TAU * nu0, b_param, gamma)
    }

    pub fn nu0(&self) -> f64 {
        self.nu0
    }

    pub fn detuning(&self) -> f64 {
        self.detuning
    }

    pub fn b_param(&self) -> f64 {
        self.b_param
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// ω₀ = 2π·ν₀.
    pub fn resonance(&self) -> f64 {
        TAU * self.nu0
    }

    /// ω = ω₀ + Ω.
    pub fn omega_drive(&self) -> f64 {
        self.resonance() + self.detuning
    }

    /// Whether a separately supplied drive frequency agrees with the stored
    /// detuning, to 1e-9 rad/s or the representable resolution of ω,
    /// whichever is coarser.
    pub fn drive_consistent(&self, omega_drive: f64) -> bool {
        let tol = 1e-9_f64.max(4.0 * f64::EPSILON * omega_drive.abs());
        (omega_drive - self.resonance() - self.detuning).abs() <= tol
    }

    pub fn with_detuning(mut self, detuning: f64) -> Result<Self, QuantumError> {
        if !detuning.is_finite() {
            return Err(QuantumError::InvalidClock(format!("detuning must be finite, got {detuning}")));
        }
        self.detuning = detuning;
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self, QuantumError> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(QuantumError::NegativeRate(gamma));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn validity(&self) -> RamseyValidity {
        RamseyValidity::from_ratio(self.detuning.abs() / self.b_param)
    }
}

/// Result of the `|Ω|/b` check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RamseyValidity {
    pub ratio: f64,
    pub warning: bool,
}

impl RamseyValidity {
    fn from_ratio(ratio: f64) -> Self {
        Self {
            ratio,
            warning: ratio >= VALIDITY_THRESHOLD,
        }
    }
}

/// `|Ω|/b` for raw parameters.
pub fn validity_ratio(detuning: f64, b_param: f64) -> Result<RamseyValidity, QuantumError> {
    if !(b_param > 0.0) {
        return Err(QuantumError::InvalidClock(format!("b_param must be > 0, got {b_param}")));
    }
    Ok(RamseyValidity::from_ratio(detuning.abs() / b_param))
}
