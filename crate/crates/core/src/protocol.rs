//! Two-party start synchronisation on a shared ensemble of pairs.
//!
//! Alice measures her atom of every kept pair in the X basis at a single
//! instant `t0`. Each pair collapses to `|+⟩_A|−⟩_B` (type I) or
//! `|−⟩_A|+⟩_B` (type II). Both atoms of a collapsed pair then run as
//! clocks started at `t0`. Alice announces the labels of one type over a
//! classical channel so Bob can pick out the atoms that are in phase with
//! hers.

use std::collections::BTreeSet;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

use crate::atom::{bernoulli, herald_check, transfer_map, LevelScheme, PhotonPolarization, TransferMode};
use crate::link::{ChannelModel, Ensemble, JointState, LinkError, LinkOptions, TypeTag};
use crate::quantum::{cat_state, Basis, ClockConfig, DensityMatrix, QuantumError, StateVector, MAX_QUBITS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("ensemble has already been started")]
    AlreadyStarted,
    #[error("label {0} is not a kept pair of this ensemble")]
    UnknownLabel(u64),
    #[error("{party} has already measured the atom of label {label}")]
    Consumed { party: PartyName, label: u64 },
    #[error("label {label} is outside {party}'s selected set")]
    NotSelected { party: PartyName, label: u64 },
    #[error("readout time {at_time} precedes the start time {t0}")]
    BeforeStart { at_time: f64, t0: f64 },
    #[error("GHZ size {0} outside 1..={MAX_QUBITS}")]
    GhzSize(usize),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Link(#[from] LinkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PartyName {
    Alice,
    Bob,
}

impl PartyName {
    /// Which qubit of each pair the party holds.
    pub fn qubit(self) -> usize {
        match self {
            PartyName::Alice => 0,
            PartyName::Bob => 1,
        }
    }
}

impl fmt::Display for PartyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartyName::Alice => "alice",
            PartyName::Bob => "bob",
        })
    }
}

impl std::str::FromStr for PartyName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "alice" => Ok(PartyName::Alice),
            "bob" => Ok(PartyName::Bob),
            other => Err(format!("unknown party {other:?}")),
        }
    }
}

/// One laboratory and the clock it runs its atoms against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Party {
    pub name: PartyName,
    pub clock: ClockConfig,
}

impl Party {
    pub fn alice(clock: ClockConfig) -> Self {
        Self {
            name: PartyName::Alice,
            clock,
        }
    }

    pub fn bob(clock: ClockConfig) -> Self {
        Self {
            name: PartyName::Bob,
            clock,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalMessage {
    pub sent_at: f64,
    pub payload: Vec<(u64, TypeTag)>,
}

/// Bob's working set after reading Alice's message.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub labels: BTreeSet<u64>,
    /// Set when the selection is empty.
    pub degenerate: bool,
}

/// One batch of destructive readouts at a single time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutSample {
    pub time: f64,
    pub party: PartyName,
    /// Atoms found in `|1⟩`.
    pub ones: u64,
    pub trials: u64,
    /// Mean exact `P1` over the measured atoms.
    pub exact_p1: f64,
}

/// Protocol state after Alice's start measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncRun {
    t0: f64,
    alice_keeps: TypeTag,
    ensemble: Ensemble,
    alice_selection: BTreeSet<u64>,
    bob_selection: Option<BTreeSet<u64>>,
    /// Per record position: selected by Bob.
    bob_mask: Option<Vec<bool>>,
    /// Per record position and party: already read out.
    consumed: [Vec<bool>; 2],
    samples: Vec<ReadoutSample>,
}

/// Starts both parties' clocks at `t0`, with Alice keeping type I.
pub fn alice_start<R: Rng + ?Sized>(ensemble: Ensemble, t0: f64, rng: &mut R) -> Result<SyncRun, ProtocolError> {
    alice_start_keeping(ensemble, t0, TypeTag::I, rng)
}

/// Starts the clocks; `alice_keeps` picks which subensemble Alice uses
/// (Bob then uses the other).
pub fn alice_start_keeping<R: Rng + ?Sized>(
    mut ensemble: Ensemble,
    t0: f64,
    alice_keeps: TypeTag,
    rng: &mut R,
) -> Result<SyncRun, ProtocolError> {
    if ensemble.is_started() {
        return Err(ProtocolError::AlreadyStarted);
    }
    for rec in ensemble.records_mut().iter_mut().filter(|r| r.herald_kept) {
        let state = std::mem::replace(&mut rec.joint_state, JointState::Pure(StateVector::placeholder()));
        let (bits, post) = state.measure(Basis::X, &[0], rng)?;
        rec.joint_state = post;
        rec.type_tag = Some(if bits[0] == 0 { TypeTag::I } else { TypeTag::II });
    }
    let n = ensemble.len();
    Ok(SyncRun {
        t0,
        alice_keeps,
        alice_selection: tagged(&ensemble, alice_keeps),
        ensemble,
        bob_selection: None,
        bob_mask: None,
        consumed: [vec![false; n], vec![false; n]],
        samples: Vec::new(),
    })
}

fn tagged(ensemble: &Ensemble, tag: TypeTag) -> BTreeSet<u64> {
    ensemble
        .kept()
        .filter(|r| r.type_tag == Some(tag))
        .map(|r| r.label)
        .collect()
}

impl SyncRun {
    /// Rebuilds a run from its parts (used when loading from text). Every
    /// selected or consumed label must name a kept pair.
    pub fn from_parts(
        t0: f64,
        alice_keeps: TypeTag,
        ensemble: Ensemble,
        bob_selection: Option<BTreeSet<u64>>,
        consumed: [BTreeSet<u64>; 2],
        samples: Vec<ReadoutSample>,
    ) -> Result<Self, ProtocolError> {
        let n = ensemble.len();
        let mask = |labels: &BTreeSet<u64>| -> Result<Vec<bool>, ProtocolError> {
            let mut m = vec![false; n];
            for &label in labels {
                match ensemble.index_of(label) {
                    Some(i) if ensemble.records()[i].herald_kept => m[i] = true,
                    _ => return Err(ProtocolError::UnknownLabel(label)),
                }
            }
            Ok(m)
        };
        let bob_mask = bob_selection.as_ref().map(&mask).transpose()?;
        let consumed = [mask(&consumed[0])?, mask(&consumed[1])?];
        Ok(Self {
            t0,
            alice_keeps,
            alice_selection: tagged(&ensemble, alice_keeps),
            ensemble,
            bob_selection,
            bob_mask,
            consumed,
            samples,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn alice_keeps(&self) -> TypeTag {
        self.alice_keeps
    }

    pub fn ensemble(&self) -> &Ensemble {
        &self.ensemble
    }

    pub fn samples(&self) -> &[ReadoutSample] {
        &self.samples
    }

    pub fn bob_selection(&self) -> Option<&BTreeSet<u64>> {
        self.bob_selection.as_ref()
    }

    /// Labels `party` has already read out.
    pub fn consumed(&self, party: PartyName) -> BTreeSet<u64> {
        self.ensemble
            .records()
            .iter()
            .zip(&self.consumed[party.qubit()])
            .filter(|(_, &c)| c)
            .map(|(r, _)| r.label)
            .collect()
    }

    pub fn is_consumed(&self, party: PartyName, label: u64) -> bool {
        self.ensemble
            .index_of(label)
            .is_some_and(|i| self.consumed[party.qubit()][i])
    }

    pub fn labels_of(&self, tag: TypeTag) -> BTreeSet<u64> {
        tagged(&self.ensemble, tag)
    }

    pub fn type_i_labels(&self) -> BTreeSet<u64> {
        self.labels_of(TypeTag::I)
    }

    pub fn type_ii_labels(&self) -> BTreeSet<u64> {
        self.labels_of(TypeTag::II)
    }

    /// Alice's own clock atoms.
    pub fn alice_selection(&self) -> &BTreeSet<u64> {
        &self.alice_selection
    }

    /// Announces the labels of `which` type.
    pub fn send_labels(&self, which: TypeTag, sent_at: f64) -> ClassicalMessage {
        ClassicalMessage {
            sent_at,
            payload: self.labels_of(which).into_iter().map(|l| (l, which)).collect(),
        }
    }

    /// Bob keeps every kept pair the message does not list.
    pub fn bob_select(&mut self, message: &ClassicalMessage) -> Result<Selection, ProtocolError> {
        let records = self.ensemble.records();
        let mut mask: Vec<bool> = records.iter().map(|r| r.herald_kept).collect();
        for &(label, _) in &message.payload {
            match self.ensemble.index_of(label) {
                Some(i) if records[i].herald_kept => mask[i] = false,
                _ => return Err(ProtocolError::UnknownLabel(label)),
            }
        }
        let labels: BTreeSet<u64> = records.iter().zip(&mask).filter(|(_, &m)| m).map(|(r, _)| r.label).collect();
        self.bob_mask = Some(mask);
        self.bob_selection = Some(labels.clone());
        Ok(Selection {
            degenerate: labels.is_empty(),
            labels,
        })
    }

    /// Exact `P1` for `party`'s atom of `label` read out at `at_time`,
    /// without consuming it.
    pub fn exact_p1(&self, party: &Party, label: u64, at_time: f64) -> Result<f64, ProtocolError> {
        let rec = self
            .ensemble
            .get(label)
            .filter(|r| r.herald_kept)
            .ok_or(ProtocolError::UnknownLabel(label))?;
        let elapsed = self.elapsed(at_time)?;
        Ok(ramsey_readout_p1(&rec.joint_state, party, elapsed))
    }

    fn elapsed(&self, at_time: f64) -> Result<f64, ProtocolError> {
        if !(at_time >= self.t0) {
            return Err(ProtocolError::BeforeStart { at_time, t0: self.t0 });
        }
        Ok(at_time - self.t0)
    }

    /// Ramsey readout of `party`'s atoms in `labels` at `at_time`: free
    /// evolution since `t0`, Hadamard, Z measurement. Atoms are consumed.
    ///
    /// Alice may only read her selected subensemble; Bob is restricted to his
    /// selection once he has made one. All labels are checked before any is
    /// consumed.
    pub fn readout<R: Rng + ?Sized>(
        &mut self,
        party: &Party,
        labels: &[u64],
        at_time: f64,
        rng: &mut R,
    ) -> Result<ReadoutSample, ProtocolError> {
        let elapsed = self.elapsed(at_time)?;
        let who = party.name;
        let records = self.ensemble.records();
        let mut indices = Vec::with_capacity(labels.len());
        for &label in labels {
            let i = self
                .ensemble
                .index_of(label)
                .filter(|&i| records[i].herald_kept)
                .ok_or(ProtocolError::UnknownLabel(label))?;
            let selected = match who {
                PartyName::Alice => records[i].type_tag == Some(self.alice_keeps),
                PartyName::Bob => self.bob_mask.as_ref().is_none_or(|m| m[i]),
            };
            if !selected {
                return Err(ProtocolError::NotSelected { party: who, label });
            }
            if self.consumed[who.qubit()][i] {
                return Err(ProtocolError::Consumed { party: who, label });
            }
            indices.push(i);
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(ProtocolError::Consumed {
                party: who,
                label: records[w[0]].label,
            });
        }
        let mut ones = 0u64;
        let mut p1_sum = 0.0;
        for &i in &indices {
            let p1 = ramsey_readout_p1(&records[i].joint_state, party, elapsed);
            p1_sum += p1;
            if bernoulli(p1, rng) {
                ones += 1;
            }
        }
        for &i in &indices {
            self.consumed[who.qubit()][i] = true;
        }
        let trials = labels.len() as u64;
        let sample = ReadoutSample {
            time: at_time,
            party: who,
            ones,
            trials,
            exact_p1: if trials == 0 { f64::NAN } else { p1_sum / trials as f64 },
        };
        self.samples.push(sample);
        Ok(sample)
    }

    /// Bob's one-atom state averaged over the kept pairs, as it stands
    /// before he learns any labels.
    pub fn bob_ensemble_state(&self) -> Result<DensityMatrix, ProtocolError> {
        let mut acc: Option<nalgebra::DMatrix<num_complex::Complex64>> = None;
        let mut n = 0usize;
        for rec in self.ensemble.kept() {
            let red = rec.joint_state.to_density().partial_trace(&[1])?;
            acc = Some(match acc {
                None => red.entries().clone(),
                Some(m) => m + red.entries(),
            });
            n += 1;
        }
        let m = acc.ok_or(ProtocolError::Link(LinkError::EmptyRequest))?;
        Ok(DensityMatrix::new(1, m / num_complex::Complex64::new(n as f64, 0.0))?)
    }
}

/// Exact `P1` of the Ramsey readout of `party`'s qubit, `elapsed` seconds
/// after the start.
fn ramsey_readout_p1(state: &JointState, party: &Party, elapsed: f64) -> f64 {
    // Evolution turns the qubit's coherence ρ01 into ρ01·e^(−iΩt−γt); after
    // the Hadamard P1 = 1/2 − Re ρ01.
    let rho01 = state.coherence(party.name.qubit());
    let rotated = rho01 * Complex64::from_polar((-party.clock.gamma() * elapsed).exp(), -party.clock.detuning() * elapsed);
    (0.5 - rotated.re).clamp(0.0, 1.0)
}

/// Bob's reduced state once Alice has measured but before any message:
/// the outcome-averaged collapse of `pre_start`, traced over Alice.
pub fn bob_state_before_message(pre_start: &JointState) -> Result<DensityMatrix, ProtocolError> {
    Ok(pre_start
        .to_density()
        .measure_unread(Basis::X, &[0])?
        .partial_trace(&[1])?)
}

/// Splits `labels` across `slots` readout times: equal shares, with the
/// remainder going one each to the earliest slots.
pub fn schedule_labels(labels: &[u64], slots: usize) -> Vec<Vec<u64>> {
    if slots == 0 {
        return Vec::new();
    }
    let base = labels.len() / slots;
    let extra = labels.len() % slots;
    let mut out = Vec::with_capacity(slots);
    let mut at = 0;
    for k in 0..slots {
        let take = base + usize::from(k < extra);
        out.push(labels[at..at + take].to_vec());
        at += take;
    }
    out
}

/// Parity readout of an `n`-atom GHZ clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GhzReadout {
    pub n: usize,
    /// `⟨X⊗…⊗X⟩` of the ideal distributed state after evolution.
    pub exact_parity: f64,
    /// Mean sampled parity over kept shots; `None` when nothing was kept.
    pub sampled_parity: Option<f64>,
    pub kept_shots: u64,
    pub attempts: u64,
}

/// Distributes `(|RR…⟩ + |LL…⟩)/√2` to `n` atoms, lets them evolve for `t`,
/// and reads the X-parity over `shots` attempts.
///
/// Arm 0 (Alice) uses `eta_a`, every other arm `eta_b`. An attempt counts
/// only if every atom passes its herald.
#[allow(clippy::too_many_arguments)]
pub fn ghz_distribute_and_read<R: Rng + ?Sized>(
    n: usize,
    channel: &ChannelModel,
    options: &LinkOptions,
    clock: &ClockConfig,
    t: f64,
    shots: u64,
    rng: &mut R,
) -> Result<GhzReadout, ProtocolError> {
    if !(1..=MAX_QUBITS).contains(&n) {
        return Err(ProtocolError::GhzSize(n));
    }
    let scheme = LevelScheme::cesium();
    let ideal = crate::atom::transfer_photons(&scheme, options.transfer, &crate::atom::PhotonState::cat(n).map_err(|_| ProtocolError::GhzSize(n))?);
    debug_assert_eq!(
        ideal.fidelity(&cat_state(n)?).map(|f| (f - 1.0).abs() < 1e-12),
        Ok(true)
    );
    let evolve = |s: StateVector| -> Result<JointState, ProtocolError> {
        let s = JointState::Pure(s.evolve_all(clock.detuning(), t)?);
        let all: Vec<usize> = (0..n).collect();
        Ok(s.dephase_qubits(&all, clock.gamma(), t)?)
    };
    let exact_parity = match evolve(ideal.clone())? {
        JointState::Pure(s) => s.x_parity(),
        JointState::Mixed(r) => r.x_parity(),
    };
    let all: Vec<usize> = (0..n).collect();
    let mut parity_sum = 0i64;
    let mut kept_shots = 0u64;
    for _ in 0..shots {
        let delivered: Vec<bool> = (0..n)
            .map(|k| bernoulli(if k == 0 { channel.eta_a() } else { channel.eta_b() }, rng))
            .collect();
        let state = if delivered.iter().all(|&d| d) {
            ideal.clone()
        } else {
            // A lost photon fixes the branch for everyone else.
            let pol = if bernoulli(0.5, rng) {
                PhotonPolarization::R
            } else {
                PhotonPolarization::L
            };
            let bit = transfer_map(&scheme, options.transfer, pol).bit();
            let index = delivered.iter().fold(0usize, |acc, &d| (acc << 1) | if d { bit } else { 0 });
            StateVector::basis(n, index)?
        };
        let kept = match options.transfer {
            TransferMode::Direct => true,
            // every atom is probed, so no short-circuit
            TransferMode::Heralded => delivered.iter().filter(|&&d| !herald_check(d, channel, rng)).count() == 0,
        };
        if !kept {
            continue;
        }
        let (bits, _) = evolve(state)?.measure(Basis::X, &all, rng)?;
        let odd = bits.iter().filter(|&&b| b == 1).count() % 2 == 1;
        parity_sum += if odd { -1 } else { 1 };
        kept_shots += 1;
    }
    Ok(GhzReadout {
        n,
        exact_parity,
        sampled_parity: (kept_shots > 0).then(|| parity_sum as f64 / kept_shots as f64),
        kept_shots,
        attempts: shots,
    })
}
