//! Internal-level bookkeeping for the photon-to-atom transfer.
//!
//! A received photon is absorbed on the D line into an `m_F = ±1` excited
//! sublevel according to its circular polarisation, then Raman π pulses move
//! that population onto the two `m_F = 0` clock states. Pulses are ideal, so
//! the whole chain is a fixed relabelling applied amplitude-wise.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::link::ChannelModel;
use crate::quantum::{QuantumError, StateVector, MAX_QUBITS};

/// Caesium ground-state hyperfine frequency defining the SI second, in Hz.
pub const CS_CLOCK_HZ: f64 = 9_192_631_770.0;

/// Second-order Zeeman coefficient of the caesium clock transition, Hz/T².
pub const CS_QUADRATIC_ZEEMAN: f64 = 427e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AtomError {
    #[error("magnetic field must be finite and >= 0 T, got {0}")]
    NegativeField(f64),
    #[error("invalid level {term} F={f} mF={m_f}: {reason}")]
    InvalidLevel {
        term: Term,
        f: u8,
        m_f: i8,
        reason: &'static str,
    },
    #[error("level {0} is not on the transfer path")]
    NotOnPath(AtomicLevel),
    #[error("level scheme line {line}: {message}")]
    Scheme { line: usize, message: String },
    #[error("unknown term symbol {0:?}")]
    UnknownTerm(String),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}

/// Static field and unperturbed clock frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldConfig {
    b_static: f64,
    nu0: f64,
}

impl FieldConfig {
    pub fn new(b_static: f64, nu0: f64) -> Result<Self, AtomError> {
        if !(b_static.is_finite() && b_static >= 0.0) {
            return Err(AtomError::NegativeField(b_static));
        }
        Ok(Self { b_static, nu0 })
    }

    /// Caesium clock at field `b_static` (tesla).
    pub fn cesium(b_static: f64) -> Result<Self, AtomError> {
        Self::new(b_static, CS_CLOCK_HZ)
    }

    pub fn b_static(&self) -> f64 {
        self.b_static
    }

    pub fn nu0(&self) -> f64 {
        self.nu0
    }
}

/// Quadratic Zeeman shift of the clock line, `427·10⁸·B²` Hz.
pub fn zeeman_shift(b_static: f64) -> Result<f64, AtomError> {
    if !(b_static.is_finite() && b_static >= 0.0) {
        return Err(AtomError::NegativeField(b_static));
    }
    Ok(CS_QUADRATIC_ZEEMAN * b_static * b_static)
}

/// Clock-transition frequency `ν₀ + 427·10⁸·B²` in Hz.
pub fn clock_frequency(field: &FieldConfig) -> f64 {
    field.nu0 + CS_QUADRATIC_ZEEMAN * field.b_static * field.b_static
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    /// Caesium 6²S₁/₂
    Cs6S1_2,
    /// Caesium 6²P₃/₂
    Cs6P3_2,
    /// Rubidium 5S₁/₂
    Rb5S1_2,
    /// Rubidium 5P₁/₂
    Rb5P1_2,
}

impl Term {
    fn allowed_f(self) -> &'static [u8] {
        match self {
            Term::Cs6S1_2 => &[3, 4],
            Term::Cs6P3_2 => &[3],
            Term::Rb5S1_2 => &[1, 2],
            Term::Rb5P1_2 => &[1, 2],
        }
    }

    fn species(self) -> &'static str {
        match self {
            Term::Cs6S1_2 | Term::Cs6P3_2 => "Cs",
            Term::Rb5S1_2 | Term::Rb5P1_2 => "Rb",
        }
    }

    fn is_ground(self) -> bool {
        matches!(self, Term::Cs6S1_2 | Term::Rb5S1_2)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Term::Cs6S1_2 => "6S1/2",
            Term::Cs6P3_2 => "6P3/2",
            Term::Rb5S1_2 => "5S1/2",
            Term::Rb5P1_2 => "5P1/2",
        })
    }
}

impl FromStr for Term {
    type Err = AtomError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "6S1/2" => Ok(Term::Cs6S1_2),
            "6P3/2" => Ok(Term::Cs6P3_2),
            "5S1/2" => Ok(Term::Rb5S1_2),
            "5P1/2" => Ok(Term::Rb5P1_2),
            other => Err(AtomError::UnknownTerm(other.to_string())),
        }
    }
}

/// A hyperfine Zeeman sublevel `(term, F, m_F)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AtomicLevel {
    term: Term,
    f: u8,
    m_f: i8,
}

impl AtomicLevel {
    pub fn new(term: Term, f: u8, m_f: i8) -> Result<Self, AtomError> {
        let invalid = |reason| AtomError::InvalidLevel { term, f, m_f, reason };
        if !term.allowed_f().contains(&f) {
            return Err(invalid("F not in the level scheme for this term"));
        }
        if m_f.unsigned_abs() > f {
            return Err(invalid("|mF| exceeds F"));
        }
        Ok(Self { term, f, m_f })
    }

    pub fn term(&self) -> Term {
        self.term
    }

    pub fn f(&self) -> u8 {
        self.f
    }

    pub fn m_f(&self) -> i8 {
        self.m_f
    }
}

impl fmt::Display for AtomicLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} F={} mF={:+}", self.term, self.f, self.m_f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhotonPolarization {
    /// Right circular.
    R,
    /// Left circular.
    L,
}

/// Clock-qubit basis state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Logical {
    Zero,
    One,
}

impl Logical {
    pub fn bit(self) -> usize {
        match self {
            Logical::Zero => 0,
            Logical::One => 1,
        }
    }
}

/// Which transfer sequence each party runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TransferMode {
    /// Excited `m_F = ±1` straight to the clock states; no loss detection.
    Direct,
    /// Park in ground `m_F = ±1`, probe `m_F = 0` for fluorescence, then
    /// move the parked population to the clock states.
    #[default]
    Heralded,
}

impl fmt::Display for TransferMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransferMode::Direct => "direct",
            TransferMode::Heralded => "heralded",
        })
    }
}

impl FromStr for TransferMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(TransferMode::Direct),
            "heralded" => Ok(TransferMode::Heralded),
            other => Err(format!("unknown transfer mode {other:?} (expected direct|heralded)")),
        }
    }
}

/// The levels used by the transfer chain for one species.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelScheme {
    pub logical0: AtomicLevel,
    pub logical1: AtomicLevel,
    pub excited_plus: AtomicLevel,
    pub excited_minus: AtomicLevel,
    pub parked_plus: AtomicLevel,
    pub parked_minus: AtomicLevel,
    /// Clock frequency in Hz, when known for the species.
    pub nu0: Option<f64>,
}

const ROLES: [&str; 6] = [
    "logical0",
    "logical1",
    "excited_plus",
    "excited_minus",
    "parked_plus",
    "parked_minus",
];

impl LevelScheme {
    pub fn cesium() -> Self {
        let lvl = |t, f, m| AtomicLevel::new(t, f, m).expect("static caesium level");
        Self {
            logical0: lvl(Term::Cs6S1_2, 3, 0),
            logical1: lvl(Term::Cs6S1_2, 4, 0),
            excited_plus: lvl(Term::Cs6P3_2, 3, 1),
            excited_minus: lvl(Term::Cs6P3_2, 3, -1),
            parked_plus: lvl(Term::Cs6S1_2, 3, 1),
            parked_minus: lvl(Term::Cs6S1_2, 3, -1),
            nu0: Some(CS_CLOCK_HZ),
        }
    }

    /// Rubidium analogue; its clock frequency has no built-in value.
    pub fn rubidium(nu0: f64) -> Self {
        let lvl = |t, f, m| AtomicLevel::new(t, f, m).expect("static rubidium level");
        Self {
            logical0: lvl(Term::Rb5S1_2, 1, 0),
            logical1: lvl(Term::Rb5S1_2, 2, 0),
            excited_plus: lvl(Term::Rb5P1_2, 1, 1),
            excited_minus: lvl(Term::Rb5P1_2, 1, -1),
            parked_plus: lvl(Term::Rb5S1_2, 1, 1),
            parked_minus: lvl(Term::Rb5S1_2, 1, -1),
            nu0: Some(nu0),
        }
    }

    /// Parses a scheme table: one `term F mF role` per line, an optional
    /// `nu0 <Hz>` line, `#` comments.
    ///
    /// ```text
    /// # rubidium
    /// 5S1/2 1  0 logical0
    /// 5S1/2 2  0 logical1
    /// 5P1/2 1  1 excited_plus
    /// 5P1/2 1 -1 excited_minus
    /// 5S1/2 1  1 parked_plus
    /// 5S1/2 1 -1 parked_minus
    /// nu0 6834682610.904
    /// ```
    pub fn parse(text: &str) -> Result<Self, AtomError> {
        let mut slots: [Option<AtomicLevel>; 6] = [None; 6];
        let mut nu0 = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| AtomError::Scheme { line, message };
            let fields: Vec<&str> = content.split_whitespace().collect();
            if fields[0] == "nu0" {
                if fields.len() != 2 || nu0.is_some() {
                    return Err(err("expected a single `nu0 <Hz>`".into()));
                }
                let v: f64 = fields[1].parse().map_err(|_| err(format!("bad nu0 {:?}", fields[1])))?;
                if !(v.is_finite() && v > 0.0) {
                    return Err(err(format!("nu0 must be > 0, got {v}")));
                }
                nu0 = Some(v);
                continue;
            }
            if fields.len() != 4 {
                return Err(err("expected `term F mF role`".into()));
            }
            let term: Term = fields[0].parse().map_err(|e: AtomError| err(e.to_string()))?;
            let f: u8 = fields[1].parse().map_err(|_| err(format!("bad F {:?}", fields[1])))?;
            let m_f: i8 = fields[2].parse().map_err(|_| err(format!("bad mF {:?}", fields[2])))?;
            let level = AtomicLevel::new(term, f, m_f).map_err(|e| err(e.to_string()))?;
            let slot = ROLES
                .iter()
                .position(|r| *r == fields[3])
                .ok_or_else(|| err(format!("unknown role {:?}", fields[3])))?;
            if slots[slot].is_some() {
                return Err(err(format!("role {} given twice", fields[3])));
            }
            slots[slot] = Some(level);
        }
        let last = text.lines().count().max(1);
        let take = |i: usize| {
            slots[i].ok_or_else(|| AtomError::Scheme {
                line: last,
                message: format!("missing role {}", ROLES[i]),
            })
        };
        let scheme = Self {
            logical0: take(0)?,
            logical1: take(1)?,
            excited_plus: take(2)?,
            excited_minus: take(3)?,
            parked_plus: take(4)?,
            parked_minus: take(5)?,
            nu0,
        };
        scheme.check_shape(last)?;
        Ok(scheme)
    }

    fn check_shape(&self, line: usize) -> Result<(), AtomError> {
        let err = |message: &str| AtomError::Scheme {
            line,
            message: message.to_string(),
        };
        let all = [
            self.logical0,
            self.logical1,
            self.excited_plus,
            self.excited_minus,
            self.parked_plus,
            self.parked_minus,
        ];
        let species = self.logical0.term.species();
        if all.iter().any(|l| l.term.species() != species) {
            return Err(err("levels mix species"));
        }
        if self.logical0.m_f != 0 || self.logical1.m_f != 0 || !self.logical0.term.is_ground() || !self.logical1.term.is_ground()
        {
            return Err(err("logical levels must be ground mF=0"));
        }
        if self.logical0.f == self.logical1.f {
            return Err(err("logical levels must differ in F"));
        }
        if self.excited_plus.m_f != 1 || self.excited_minus.m_f != -1 || self.excited_plus.term.is_ground() {
            return Err(err("excited levels must be excited mF=+1 / mF=-1"));
        }
        if self.parked_plus.m_f != 1 || self.parked_minus.m_f != -1 || !self.parked_plus.term.is_ground() {
            return Err(err("parked levels must be ground mF=+1 / mF=-1"));
        }
        Ok(())
    }
}

/// Excited sublevel reached by absorbing a photon of polarisation `pol`
/// from the `logical0` ground state: R → `m_F = +1`, L → `m_F = −1`.
pub fn polarization_to_level(scheme: &LevelScheme, pol: PhotonPolarization) -> AtomicLevel {
    match pol {
        PhotonPolarization::R => scheme.excited_plus,
        PhotonPolarization::L => scheme.excited_minus,
    }
}

/// Direct two-pulse transfer from the excited path states to the clock
/// qubit: `m_F = +1` → `|0⟩`, `m_F = −1` → `|1⟩`.
pub fn raman_transfer(scheme: &LevelScheme, excited: &AtomicLevel) -> Result<Logical, AtomError> {
    if *excited == scheme.excited_plus {
        Ok(Logical::Zero)
    } else if *excited == scheme.excited_minus {
        Ok(Logical::One)
    } else {
        Err(AtomError::NotOnPath(*excited))
    }
}

/// First pulse of the heralded sequence: excited `m_F = ±1` to the stable
/// ground `m_F = ±1` sublevels.
pub fn park(scheme: &LevelScheme, excited: &AtomicLevel) -> Result<AtomicLevel, AtomError> {
    if *excited == scheme.excited_plus {
        Ok(scheme.parked_plus)
    } else if *excited == scheme.excited_minus {
        Ok(scheme.parked_minus)
    } else {
        Err(AtomError::NotOnPath(*excited))
    }
}

/// Second pulse of the heralded sequence: ground `m_F = +1` → upper clock
/// state `|1⟩`, ground `m_F = −1` → lower clock state `|0⟩`.
pub fn unpark(scheme: &LevelScheme, parked: &AtomicLevel) -> Result<Logical, AtomError> {
    if *parked == scheme.parked_plus {
        Ok(Logical::One)
    } else if *parked == scheme.parked_minus {
        Ok(Logical::Zero)
    } else {
        Err(AtomError::NotOnPath(*parked))
    }
}

/// The full polarisation → clock-state map for a transfer mode.
pub fn transfer_map(scheme: &LevelScheme, mode: TransferMode, pol: PhotonPolarization) -> Logical {
    let excited = polarization_to_level(scheme, pol);
    let out = match mode {
        TransferMode::Direct => raman_transfer(scheme, &excited),
        TransferMode::Heralded => park(scheme, &excited).and_then(|p| unpark(scheme, &p)),
    };
    out.expect("excited level comes from the same scheme")
}

/// Fluorescence check on one atom.
///
/// An atom that absorbed nothing is still in the probed `m_F = 0` level and
/// fluoresces, so it is discarded unless the detector misses it (`p_miss`).
/// An atom that absorbed is parked out of the probe's reach and kept, unless
/// a false fluorescence click (`p_false`) discards it.
pub fn herald_check<R: Rng + ?Sized>(absorbed: bool, detector: &ChannelModel, rng: &mut R) -> bool {
    if absorbed {
        !bernoulli(detector.p_false(), rng)
    } else {
        bernoulli(detector.p_miss(), rng)
    }
}

pub(crate) fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    // Exact at the endpoints, one draw otherwise.
    if p <= 0.0 {
        false
    } else if p >= 1.0 {
        true
    } else {
        rng.random::<f64>() < p
    }
}

/// Result of running one party's transfer sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransferOutcome {
    pub absorbed: bool,
    pub logical_qubit: Option<Logical>,
    pub herald_kept: bool,
}

/// One party's transfer of a photon in a definite polarisation, or of
/// nothing when the photon was lost (`None`).
pub fn transfer_single<R: Rng + ?Sized>(
    scheme: &LevelScheme,
    mode: TransferMode,
    photon: Option<PhotonPolarization>,
    detector: &ChannelModel,
    rng: &mut R,
) -> TransferOutcome {
    let absorbed = photon.is_some();
    let logical_qubit = photon.map(|p| transfer_map(scheme, mode, p));
    let herald_kept = match mode {
        TransferMode::Direct => true,
        TransferMode::Heralded => herald_check(absorbed, detector, rng),
    };
    TransferOutcome {
        absorbed,
        logical_qubit,
        herald_kept,
    }
}

/// Polarisation state of `n` photons; index bit 0 = R, 1 = L, photon 0 is
/// the most significant bit.
#[derive(Debug, Clone, PartialEq)]
pub struct PhotonState {
    photons: usize,
    amps: Vec<Complex64>,
}

impl PhotonState {
    pub fn new(photons: usize, amps: Vec<Complex64>) -> Result<Self, AtomError> {
        // Reuse the qubit-register checks for length and norm.
        let checked = StateVector::new(photons, amps)?;
        Ok(Self {
            photons,
            amps: checked.amplitudes().to_vec(),
        })
    }

    /// `(|RL⟩ + |LR⟩)/√2`.
    pub fn pair() -> Self {
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let z = Complex64::new(0.0, 0.0);
        Self {
            photons: 2,
            amps: vec![z, h, h, z],
        }
    }

    /// `(|RR…R⟩ + |LL…L⟩)/√2` on `n` photons.
    pub fn cat(n: usize) -> Result<Self, AtomError> {
        if !(1..=MAX_QUBITS).contains(&n) {
            return Err(QuantumError::QubitCount {
                qubits: n,
                min: 1,
                max: MAX_QUBITS,
            }
            .into());
        }
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = h;
        amps[(1 << n) - 1] = h;
        Ok(Self { photons: n, amps })
    }

    pub fn photons(&self) -> usize {
        self.photons
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }
}

/// Applies the transfer chain to every photon of `photons` coherently,
/// giving the joint clock-qubit state of the receiving atoms.
pub fn transfer_photons(scheme: &LevelScheme, mode: TransferMode, photons: &PhotonState) -> StateVector {
    let n = photons.photons;
    let bit_of = |pol| transfer_map(scheme, mode, pol).bit();
    let r_bit = bit_of(PhotonPolarization::R);
    let l_bit = bit_of(PhotonPolarization::L);
    let mut out = vec![Complex64::new(0.0, 0.0); 1 << n];
    for (i, a) in photons.amps.iter().enumerate() {
        let mut j = 0usize;
        for k in 0..n {
            let is_l = (i >> (n - 1 - k)) & 1 == 1;
            j = (j << 1) | if is_l { l_bit } else { r_bit };
        }
        out[j] += a;
    }
    StateVector::new(n, out).expect("relabelling preserves norm")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::DensityMatrix;

    #[test]
    fn zero_field_is_the_si_definition() {
        let f = FieldConfig::cesium(0.0).unwrap();
        assert_eq!(clock_frequency(&f), 9_192_631_770.0);
    }

    #[test]
    fn zeeman_shift_examples() {
        // 427e8 · (1e-6)² = 4.27e-2 Hz, 427e8 · (1e-7)² = 4.27e-4 Hz.
        assert!((zeeman_shift(1e-6).unwrap() - 4.27e-2).abs() < 1e-15);
        assert!((zeeman_shift(1e-7).unwrap() - 4.27e-4).abs() < 1e-17);
        let f = FieldConfig::cesium(1e-6).unwrap();
        let ulp = CS_CLOCK_HZ * f64::EPSILON;
        assert!((clock_frequency(&f) - (CS_CLOCK_HZ + 4.27e-2)).abs() <= ulp);
        assert!(matches!(FieldConfig::cesium(-1e-6), Err(AtomError::NegativeField(_))));
        assert!(zeeman_shift(-1.0).is_err());
    }

    #[test]
    fn polarisations_reach_opposite_sublevels() {
        let cs = LevelScheme::cesium();
        let r = polarization_to_level(&cs, PhotonPolarization::R);
        let l = polarization_to_level(&cs, PhotonPolarization::L);
        assert_eq!((r.term(), r.f(), r.m_f()), (Term::Cs6P3_2, 3, 1));
        assert_eq!((l.term(), l.f(), l.m_f()), (Term::Cs6P3_2, 3, -1));
        assert_eq!(raman_transfer(&cs, &r).unwrap(), Logical::Zero);
        assert_eq!(raman_transfer(&cs, &l).unwrap(), Logical::One);
    }

    #[test]
    fn raman_rejects_off_path_levels() {
        let cs = LevelScheme::cesium();
        assert!(matches!(
            raman_transfer(&cs, &cs.logical0),
            Err(AtomError::NotOnPath(_))
        ));
        assert!(unpark(&cs, &cs.excited_plus).is_err());
    }

    #[test]
    fn heralded_chain_targets() {
        let cs = LevelScheme::cesium();
        let parked = park(&cs, &cs.excited_plus).unwrap();
        assert_eq!((parked.term(), parked.f(), parked.m_f()), (Term::Cs6S1_2, 3, 1));
        assert_eq!(unpark(&cs, &parked).unwrap(), Logical::One);
        assert_eq!(unpark(&cs, &cs.parked_minus).unwrap(), Logical::Zero);
    }

    #[test]
    fn both_chains_are_bijections() {
        let cs = LevelScheme::cesium();
        for mode in [TransferMode::Direct, TransferMode::Heralded] {
            let r = transfer_map(&cs, mode, PhotonPolarization::R);
            let l = transfer_map(&cs, mode, PhotonPolarization::L);
            assert_ne!(r, l);
        }
    }

    #[test]
    fn superposition_is_mapped_linearly() {
        let cs = LevelScheme::cesium();
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let photon = PhotonState::new(1, vec![h, h]).unwrap();
        let atom = transfer_photons(&cs, TransferMode::Direct, &photon);
        assert!((atom.fidelity(&StateVector::plus()).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn photon_pair_maps_to_maximal_entanglement() {
        let cs = LevelScheme::cesium();
        for mode in [TransferMode::Direct, TransferMode::Heralded] {
            let atoms = transfer_photons(&cs, mode, &PhotonState::pair());
            let s = DensityMatrix::from_pure(&atoms)
                .partial_trace(&[0])
                .unwrap()
                .entropy_bits();
            assert!((s - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn herald_logic_with_ideal_detector() {
        let ideal = ChannelModel::ideal();
        let mut rng = crate::rng::SimRng::seeded(3);
        for _ in 0..1000 {
            assert!(herald_check(true, &ideal, &mut rng));
            assert!(!herald_check(false, &ideal, &mut rng));
        }
    }

    #[test]
    fn direct_mode_never_discards() {
        let cs = LevelScheme::cesium();
        let ideal = ChannelModel::ideal();
        let mut rng = crate::rng::SimRng::seeded(3);
        let out = transfer_single(&cs, TransferMode::Direct, None, &ideal, &mut rng);
        assert!(out.herald_kept && !out.absorbed && out.logical_qubit.is_none());
        let out = transfer_single(&cs, TransferMode::Heralded, None, &ideal, &mut rng);
        assert!(!out.herald_kept);
        let out = transfer_single(&cs, TransferMode::Heralded, Some(PhotonPolarization::L), &ideal, &mut rng);
        assert!(out.herald_kept && out.logical_qubit == Some(Logical::Zero));
    }

    #[test]
    fn level_invariants() {
        assert!(AtomicLevel::new(Term::Cs6S1_2, 3, 4).is_err());
        assert!(AtomicLevel::new(Term::Cs6S1_2, 5, 0).is_err());
        assert!(AtomicLevel::new(Term::Cs6P3_2, 4, 0).is_err());
        assert!(AtomicLevel::new(Term::Cs6S1_2, 4, -4).is_ok());
    }

    #[test]
    fn scheme_table_round_trip() {
        let text = "\
# rubidium
5S1/2 1  0 logical0
5S1/2 2  0 logical1
5P1/2 1  1 excited_plus
5P1/2 1 -1 excited_minus
5S1/2 1  1 parked_plus
5S1/2 1 -1 parked_minus
nu0 6834682610.904
";
        let rb = LevelScheme::parse(text).unwrap();
        assert_eq!(rb, LevelScheme::rubidium(6834682610.904));
        let no_nu0: String = text.lines().filter(|l| !l.starts_with("nu0")).collect::<Vec<_>>().join("\n");
        assert_eq!(LevelScheme::parse(&no_nu0).unwrap().nu0, None);
    }

    #[test]
    fn scheme_errors_are_line_anchored() {
        let err = LevelScheme::parse("6S1/2 3 0 logical0\n6S1/2 9 0 logical1\n").unwrap_err();
        assert!(matches!(err, AtomError::Scheme { line: 2, .. }));
        let err = LevelScheme::parse("6S1/2 3 0 logical0\n").unwrap_err();
        assert!(err.to_string().contains("missing role logical1"));
        let mixed = "\
6S1/2 3 0 logical0
6S1/2 4 0 logical1
6P3/2 3 1 excited_plus
6P3/2 3 -1 excited_minus
5S1/2 1 1 parked_plus
6S1/2 3 -1 parked_minus
";
        assert!(LevelScheme::parse(mixed).unwrap_err().to_string().contains("mix species"));
    }
}
