//! Distribution of entangled atom pairs over two lossy photon arms.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use thiserror::Error;

use crate::atom::{
    bernoulli, herald_check, transfer_map, transfer_photons, LevelScheme, PhotonPolarization, PhotonState,
    TransferMode,
};
use crate::quantum::{Basis, DensityMatrix, QuantumError, StateVector};
use crate::rng::{SimRng, StreamSeed};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("{name} must be in [0, 1], got {value}")]
    Probability { name: &'static str, value: f64 },
    #[error("pair count must be at least 1")]
    EmptyRequest,
    #[error("duplicate label {0}")]
    DuplicateLabel(u64),
    #[error("label 0 is not allowed (labels start at 1)")]
    ZeroLabel,
    #[error("joint state of label {label} has {qubits} qubits, expected 2")]
    NotAPair { label: u64, qubits: usize },
    #[error(transparent)]
    Quantum(#[from] QuantumError),
}

/// Per-arm transmission and herald detector error rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    eta_a: f64,
    eta_b: f64,
    p_miss: f64,
    p_false: f64,
}

impl ChannelModel {
    pub fn new(eta_a: f64, eta_b: f64, p_miss: f64, p_false: f64) -> Result<Self, LinkError> {
        for (name, value) in [("eta_a", eta_a), ("eta_b", eta_b), ("p_miss", p_miss), ("p_false", p_false)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(LinkError::Probability { name, value });
            }
        }
        Ok(Self {
            eta_a,
            eta_b,
            p_miss,
            p_false,
        })
    }

    /// Lossless arms and a perfect detector.
    pub fn ideal() -> Self {
        Self {
            eta_a: 1.0,
            eta_b: 1.0,
            p_miss: 0.0,
            p_false: 0.0,
        }
    }

    pub fn eta_a(&self) -> f64 {
        self.eta_a
    }

    pub fn eta_b(&self) -> f64 {
        self.eta_b
    }

    /// Probability that a non-fluorescing (photon-less) atom goes unnoticed.
    pub fn p_miss(&self) -> f64 {
        self.p_miss
    }

    /// Probability that an atom holding a photon is wrongly seen to fluoresce.
    pub fn p_false(&self) -> f64 {
        self.p_false
    }

    fn party_keep(&self, eta: f64) -> f64 {
        eta * (1.0 - self.p_false) + (1.0 - eta) * self.p_miss
    }

    /// Exact probability that a pair survives both heralds.
    pub fn keep_probability(&self, mode: TransferMode) -> f64 {
        match mode {
            TransferMode::Direct => 1.0,
            TransferMode::Heralded => self.party_keep(self.eta_a) * self.party_keep(self.eta_b),
        }
    }

    /// Probability that a kept pair actually holds two absorbed photons.
    pub fn kept_pair_purity(&self, mode: TransferMode) -> f64 {
        let both = self.eta_a * self.eta_b;
        match mode {
            TransferMode::Direct => both,
            TransferMode::Heralded => {
                let keep = self.keep_probability(mode);
                if keep == 0.0 {
                    0.0
                } else {
                    both * (1.0 - self.p_false).powi(2) / keep
                }
            }
        }
    }
}

/// Relative phase convention for the two-atom state made from the photon
/// pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PairPhase {
    /// `(|01⟩ − |10⟩)/√2`: a local Z on Alice's atom after transfer.
    #[default]
    Singlet,
    /// The bare image of `(|RL⟩ + |LR⟩)/√2`, i.e. `(|01⟩ + |10⟩)/√2`.
    Linear,
}

impl fmt::Display for PairPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairPhase::Singlet => "singlet",
            PairPhase::Linear => "linear",
        })
    }
}

impl FromStr for PairPhase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "singlet" => Ok(PairPhase::Singlet),
            "linear" => Ok(PairPhase::Linear),
            other => Err(format!("unknown pair phase {other:?} (expected singlet|linear)")),
        }
    }
}

/// Transfer-sequence options shared by both parties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LinkOptions {
    pub transfer: TransferMode,
    pub phase: PairPhase,
}

/// Subensemble assigned by Alice's start measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TypeTag {
    /// Alice found `|+⟩` (Bob holds `|−⟩`).
    I,
    /// Alice found `|−⟩` (Bob holds `|+⟩`).
    II,
}

impl TypeTag {
    pub fn other(self) -> Self {
        match self {
            TypeTag::I => TypeTag::II,
            TypeTag::II => TypeTag::I,
        }
    }
}

impl fmt::Display for TypeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TypeTag::I => "I",
            TypeTag::II => "II",
        })
    }
}

impl FromStr for TypeTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "I" => Ok(TypeTag::I),
            "II" => Ok(TypeTag::II),
            other => Err(format!("unknown type tag {other:?} (expected I|II)")),
        }
    }
}

/// Joint state of one pair: pure unless storage dephasing has been applied.
#[derive(Debug, Clone, PartialEq)]
pub enum JointState {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

impl JointState {
    pub fn qubits(&self) -> usize {
        match self {
            JointState::Pure(s) => s.qubits(),
            JointState::Mixed(r) => r.qubits(),
        }
    }

    pub fn to_density(&self) -> DensityMatrix {
        match self {
            JointState::Pure(s) => DensityMatrix::from_pure(s),
            JointState::Mixed(r) => r.clone(),
        }
    }

    /// Fidelity to a pure target state.
    pub fn fidelity(&self, target: &StateVector) -> Result<f64, QuantumError> {
        match self {
            JointState::Pure(s) => s.fidelity(target),
            JointState::Mixed(r) => r.fidelity_pure(target),
        }
    }

    pub fn evolve_qubits(self, detunings: &[(usize, f64)], duration: f64) -> Result<Self, QuantumError> {
        Ok(match self {
            JointState::Pure(s) => JointState::Pure(s.evolve_qubits(detunings, duration)?),
            JointState::Mixed(r) => JointState::Mixed(r.evolve_qubits(detunings, duration)?),
        })
    }

    pub fn hadamard(self, qubit: usize) -> Result<Self, QuantumError> {
        Ok(match self {
            JointState::Pure(s) => JointState::Pure(s.hadamard(qubit)?),
            JointState::Mixed(r) => JointState::Mixed(r.hadamard(qubit)?),
        })
    }

    pub fn z_probabilities(&self, qubits: &[usize]) -> Result<Vec<f64>, QuantumError> {
        match self {
            JointState::Pure(s) => s.z_probabilities(qubits),
            JointState::Mixed(r) => r.z_probabilities(qubits),
        }
    }

    /// Sampled projective measurement; returns the result bits and the
    /// post-measurement state.
    pub fn measure<R: rand::Rng + ?Sized>(
        self,
        basis: Basis,
        qubits: &[usize],
        rng: &mut R,
    ) -> Result<(Vec<u8>, Self), QuantumError> {
        Ok(match self {
            JointState::Pure(s) => {
                let out = s.measure(basis, qubits, rng)?;
                (out.results, JointState::Pure(out.post_state))
            }
            JointState::Mixed(r) => {
                let out = r.measure(basis, qubits, rng)?;
                (out.results, JointState::Mixed(out.post_state))
            }
        })
    }

    /// Off-diagonal element `⟨0|ρ_q|1⟩` of the reduced state of `qubit`.
    pub fn coherence(&self, qubit: usize) -> Complex64 {
        let bit = 1 << (self.qubits() - 1 - qubit);
        match self {
            JointState::Pure(s) => {
                let a = s.amplitudes();
                (0..a.len()).filter(|i| i & bit == 0).map(|i| a[i] * a[i | bit].conj()).sum()
            }
            JointState::Mixed(r) => {
                let m = r.entries();
                (0..m.nrows()).filter(|i| i & bit == 0).map(|i| m[(i, i | bit)]).sum()
            }
        }
    }

    /// Dephases the listed qubits; a pure state becomes mixed when `γt > 0`.
    pub fn dephase_qubits(self, qubits: &[usize], gamma: f64, duration: f64) -> Result<Self, QuantumError> {
        if gamma == 0.0 || duration == 0.0 {
            // Still validate the arguments.
            if !(gamma >= 0.0 && gamma.is_finite()) {
                return Err(QuantumError::NegativeRate(gamma));
            }
            if !(duration >= 0.0 && duration.is_finite()) {
                return Err(QuantumError::NegativeDuration(duration));
            }
            return Ok(self);
        }
        Ok(JointState::Mixed(self.to_density().dephase_qubits(qubits, gamma, duration)?))
    }
}

/// One labelled pair shared between Alice (qubit 0) and Bob (qubit 1).
#[derive(Debug, Clone, PartialEq)]
pub struct AtomPairRecord {
    pub label: u64,
    pub joint_state: JointState,
    pub herald_kept: bool,
    pub type_tag: Option<TypeTag>,
}

/// Provenance of one generation batch inside an ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceMeta {
    pub stream: StreamSeed,
    pub count: u64,
    pub first_label: u64,
    pub channel: ChannelModel,
    pub options: LinkOptions,
}

/// A storage interval applied to every kept pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageStep {
    pub gamma: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnsembleMeta {
    pub sources: Vec<SourceMeta>,
    pub storage: Vec<StorageStep>,
}

/// Labelled pairs ordered by label.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ensemble {
    records: Vec<AtomPairRecord>,
    meta: EnsembleMeta,
}

impl Ensemble {
    /// Sorts by label and checks label uniqueness and pair shape.
    pub fn new(mut records: Vec<AtomPairRecord>, meta: EnsembleMeta) -> Result<Self, LinkError> {
        records.sort_by_key(|r| r.label);
        for w in records.windows(2) {
            if w[0].label == w[1].label {
                return Err(LinkError::DuplicateLabel(w[0].label));
            }
        }
        for r in &records {
            if r.label == 0 {
                return Err(LinkError::ZeroLabel);
            }
            if r.joint_state.qubits() != 2 {
                return Err(LinkError::NotAPair {
                    label: r.label,
                    qubits: r.joint_state.qubits(),
                });
            }
        }
        Ok(Self { records, meta })
    }

    pub fn records(&self) -> &[AtomPairRecord] {
        &self.records
    }

    pub(crate) fn records_mut(&mut self) -> &mut [AtomPairRecord] {
        &mut self.records
    }

    pub fn meta(&self) -> &EnsembleMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, label: u64) -> Option<&AtomPairRecord> {
        self.index_of(label).map(|i| &self.records[i])
    }

    /// Position of `label` in [`Ensemble::records`].
    pub fn index_of(&self, label: u64) -> Option<usize> {
        self.records.binary_search_by_key(&label, |r| r.label).ok()
    }

    pub fn kept(&self) -> impl Iterator<Item = &AtomPairRecord> {
        self.records.iter().filter(|r| r.herald_kept)
    }

    pub fn kept_labels(&self) -> BTreeSet<u64> {
        self.kept().map(|r| r.label).collect()
    }

    pub fn kept_count(&self) -> usize {
        self.kept().count()
    }

    /// Fraction of attempted pairs that survived heralding.
    pub fn yield_fraction(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.kept_count() as f64 / self.records.len() as f64
        }
    }

    /// Whether Alice has already measured (any pair carries a type tag).
    pub fn is_started(&self) -> bool {
        self.records.iter().any(|r| r.type_tag.is_some())
    }

    /// Holds every kept pair for `duration` with per-atom dephasing `gamma`.
    pub fn store(mut self, gamma: f64, duration: f64) -> Result<Self, LinkError> {
        for r in self.records.iter_mut().filter(|r| r.herald_kept) {
            let state = std::mem::replace(&mut r.joint_state, JointState::Pure(StateVector::singlet()));
            r.joint_state = state.dephase_qubits(&[0, 1], gamma, duration)?;
        }
        self.meta.storage.push(StorageStep { gamma, duration });
        Ok(self)
    }
}

/// Two-atom state for a pair where both photons arrived.
pub fn entangled_pair_state(scheme: &LevelScheme, options: &LinkOptions) -> StateVector {
    let atoms = transfer_photons(scheme, options.transfer, &PhotonState::pair());
    match options.phase {
        PairPhase::Singlet => atoms.phase_flip(0).expect("two-qubit state"),
        PairPhase::Linear => atoms,
    }
}

/// Generates `count` labelled pair attempts (labels `1..=count`).
///
/// Per label, in this draw order: arm A delivery, arm B delivery, the lost
/// partner's polarisation when exactly one photon arrived, herald A,
/// herald B. A photon lost in its arm leaves its partner in a definite
/// polarisation; that is sampled so every record stays a pure state.
pub fn generate_pairs(
    count: u64,
    channel: &ChannelModel,
    options: &LinkOptions,
    stream: StreamSeed,
) -> Result<Ensemble, LinkError> {
    if count == 0 {
        return Err(LinkError::EmptyRequest);
    }
    let scheme = LevelScheme::cesium();
    let mut rng = stream.rng();
    let entangled = entangled_pair_state(&scheme, options);
    let records = (1..=count)
        .map(|label| generate_one(label, &scheme, &entangled, channel, options, &mut rng))
        .collect();
    let meta = EnsembleMeta {
        sources: vec![SourceMeta {
            stream,
            count,
            first_label: 1,
            channel: *channel,
            options: *options,
        }],
        storage: Vec::new(),
    };
    Ensemble::new(records, meta)
}

fn generate_one(
    label: u64,
    scheme: &LevelScheme,
    entangled: &StateVector,
    channel: &ChannelModel,
    options: &LinkOptions,
    rng: &mut SimRng,
) -> AtomPairRecord {
    let got_a = bernoulli(channel.eta_a(), rng);
    let got_b = bernoulli(channel.eta_b(), rng);
    let joint = match (got_a, got_b) {
        (true, true) => entangled.clone(),
        (false, false) => StateVector::zeros(2).expect("two qubits"),
        (a_only, _) => {
            let lost = if bernoulli(0.5, rng) {
                PhotonPolarization::R
            } else {
                PhotonPolarization::L
            };
            // |RL⟩ + |LR⟩: the survivor carries the opposite polarisation.
            let survivor = match lost {
                PhotonPolarization::R => PhotonPolarization::L,
                PhotonPolarization::L => PhotonPolarization::R,
            };
            let bit = transfer_map(scheme, options.transfer, survivor).bit();
            let index = if a_only { bit << 1 } else { bit };
            StateVector::basis(2, index).expect("two qubits")
        }
    };
    let herald_kept = match options.transfer {
        TransferMode::Direct => true,
        TransferMode::Heralded => {
            let keep_a = herald_check(got_a, channel, rng);
            let keep_b = herald_check(got_b, channel, rng);
            keep_a && keep_b
        }
    };
    AtomPairRecord {
        label,
        joint_state: JointState::Pure(joint),
        herald_kept,
        type_tag: None,
    }
}

/// Merges stored batches into one ensemble, relabelling consecutively from 1
/// in input order. Pair states are carried over untouched.
pub fn stockpile(ensembles: Vec<Ensemble>) -> Result<Ensemble, LinkError> {
    let mut records = Vec::new();
    let mut meta = EnsembleMeta::default();
    let mut next = 1u64;
    for ens in ensembles {
        let offset = next;
        for src in &ens.meta.sources {
            let mut src = *src;
            src.first_label = src.first_label + offset - 1;
            meta.sources.push(src);
        }
        meta.storage.extend(ens.meta.storage.iter().copied());
        for mut r in ens.records {
            r.label = next;
            next += 1;
            records.push(r);
        }
    }
    Ensemble::new(records, meta)
}

/// Regenerates an ensemble from its metadata (sources, then storage).
pub fn replay(meta: &EnsembleMeta) -> Result<Ensemble, LinkError> {
    let parts = meta
        .sources
        .iter()
        .map(|s| generate_pairs(s.count, &s.channel, &s.options, s.stream))
        .collect::<Result<Vec<_>, _>>()?;
    let mut ens = stockpile(parts)?;
    for step in &meta.storage {
        ens = ens.store(step.gamma, step.duration)?;
    }
    Ok(ens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seed(n: u64) -> StreamSeed {
        StreamSeed::derive(n, "link", 0)
    }

    #[test]
    fn lossless_link_keeps_every_pair_as_singlet() {
        let ens = generate_pairs(200, &ChannelModel::ideal(), &LinkOptions::default(), seed(1)).unwrap();
        assert_eq!(ens.kept_count(), 200);
        for r in ens.records() {
            let f = r.joint_state.fidelity(&StateVector::singlet()).unwrap();
            assert!((f - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dead_link_keeps_nothing() {
        let dead = ChannelModel::new(0.0, 0.0, 0.0, 0.0).unwrap();
        let ens = generate_pairs(500, &dead, &LinkOptions::default(), seed(2)).unwrap();
        assert_eq!(ens.kept_count(), 0);
        assert_eq!(ens.len(), 500);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            ChannelModel::new(1.2, 0.5, 0.0, 0.0),
            Err(LinkError::Probability { name: "eta_a", .. })
        ));
        assert!(matches!(
            generate_pairs(0, &ChannelModel::ideal(), &LinkOptions::default(), seed(0)),
            Err(LinkError::EmptyRequest)
        ));
    }

    #[test]
    fn linear_phase_gives_the_triplet_image() {
        let opts = LinkOptions {
            phase: PairPhase::Linear,
            ..LinkOptions::default()
        };
        let state = entangled_pair_state(&LevelScheme::cesium(), &opts);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((state.amplitudes()[1].re - h).abs() < 1e-15);
        assert!((state.amplitudes()[2].re - h).abs() < 1e-15);
    }

    #[test]
    fn one_sided_loss_leaves_product_states() {
        let ch = ChannelModel::new(1.0, 0.0, 1.0, 0.0).unwrap();
        let ens = generate_pairs(100, &ch, &LinkOptions::default(), seed(4)).unwrap();
        // p_miss = 1: Bob's empty atom is never caught.
        assert_eq!(ens.kept_count(), 100);
        for r in ens.records() {
            let JointState::Pure(s) = &r.joint_state else { panic!() };
            // Bob's atom is in |0⟩, Alice's in a basis state.
            let p = s.z_probabilities(&[1]).unwrap();
            assert_eq!(p[0], 1.0);
            let pa = s.z_probabilities(&[0]).unwrap();
            assert!(pa[0] == 1.0 || pa[1] == 1.0);
        }
    }

    #[test]
    fn stockpile_relabels() {
        let a = generate_pairs(3, &ChannelModel::ideal(), &LinkOptions::default(), seed(5)).unwrap();
        let b = generate_pairs(2, &ChannelModel::ideal(), &LinkOptions::default(), seed(6)).unwrap();
        let merged = stockpile(vec![a.clone(), b]).unwrap();
        assert_eq!(merged.kept_count(), 5);
        let labels: Vec<u64> = merged.records().iter().map(|r| r.label).collect();
        assert_eq!(labels, vec![1, 2, 3, 4, 5]);
        assert_eq!(merged.meta().sources[1].first_label, 4);
        let same = stockpile(vec![Ensemble::default(), a.clone()]).unwrap();
        assert_eq!(same.records(), a.records());
    }

    #[test]
    fn duplicate_labels_rejected() {
        let rec = AtomPairRecord {
            label: 1,
            joint_state: JointState::Pure(StateVector::singlet()),
            herald_kept: true,
            type_tag: None,
        };
        let err = Ensemble::new(vec![rec.clone(), rec], EnsembleMeta::default()).unwrap_err();
        assert_eq!(err, LinkError::DuplicateLabel(1));
    }

    #[test]
    fn replay_is_bit_identical() {
        let ch = ChannelModel::new(0.7, 0.6, 0.05, 0.02).unwrap();
        let a = generate_pairs(300, &ch, &LinkOptions::default(), seed(7)).unwrap();
        let b = generate_pairs(100, &ch, &LinkOptions::default(), seed(8)).unwrap();
        let ens = stockpile(vec![a, b]).unwrap().store(0.1, 2.0).unwrap();
        assert_eq!(replay(ens.meta()).unwrap(), ens);
    }

    #[test]
    fn storage_dephasing_reduces_singlet_fidelity() {
        let ens = generate_pairs(1, &ChannelModel::ideal(), &LinkOptions::default(), seed(9))
            .unwrap()
            .store(1.0, std::f64::consts::LN_2)
            .unwrap();
        // Coherence |01⟩⟨10| decays by e^(−2γt) = 1/4: F = (1 + 1/4)/2.
        let f = ens.records()[0].joint_state.fidelity(&StateVector::singlet()).unwrap();
        assert!((f - 0.625).abs() < 1e-12);
    }

    #[test]
    fn keep_probability_closed_form() {
        let ch = ChannelModel::new(0.5, 0.4, 0.0, 0.0).unwrap();
        assert!((ch.keep_probability(TransferMode::Heralded) - 0.2).abs() < 1e-15);
        let ch = ChannelModel::new(0.5, 0.4, 0.1, 0.2).unwrap();
        let qa = 0.5 * 0.8 + 0.5 * 0.1;
        let qb = 0.4 * 0.8 + 0.6 * 0.1;
        assert!((ch.keep_probability(TransferMode::Heralded) - qa * qb).abs() < 1e-15);
        assert_eq!(ch.keep_probability(TransferMode::Direct), 1.0);
    }
}
