//! Two-clock frequency comparison.
//!
//! i) Alice starts the first ensemble at `t = 0`. ii) Each party fits its
//! own fringe on part of its subensemble; Bob holds the rest back.
//! iii) Alice starts the second ensemble at `t1 = Θ/Ω̂_A`. Bob then reads
//! both of his clocks over a short window after `t1`. His first clock runs
//! ahead of the second by `Ω_B·t1`, so `Ω_B/Ω̂_A = Φ/Θ` once the phase
//! `Φ` is unwrapped against his own coarse `Ω̂_B`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::fit::{fit_fringe, fit_phase_offset, FringeFit, PhaseFit};
use super::{CompareError, Estimate, FitError, FringeDataset, FringePoint};
use crate::link::{Ensemble, TypeTag};
use crate::protocol::{alice_start, Party, SyncRun};
use crate::quantum::ClockConfig;

/// How `n_periods` turns into the start phase `Θ = Ω̂_A·t1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NConvention {
    /// `Θ = 2π·n`.
    #[default]
    Periods,
    /// `Θ = n`.
    Radians,
}

impl NConvention {
    pub fn theta(self, n: u64) -> f64 {
        match self {
            NConvention::Periods => TAU * n as f64,
            NConvention::Radians => n as f64,
        }
    }
}

impl fmt::Display for NConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NConvention::Periods => "periods",
            NConvention::Radians => "radians",
        })
    }
}

impl FromStr for NConvention {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "periods" => Ok(NConvention::Periods),
            "radians" => Ok(NConvention::Radians),
            other => Err(format!("unknown convention {other:?} (expected periods or radians)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonPlan {
    pub n_periods: u64,
    pub convention: NConvention,
    /// Atoms read per fringe point.
    pub trials_per_point: u64,
    /// Fringe periods (at each party's nominal detuning) covered by step ii.
    pub fit_periods: f64,
    /// Fringe periods covered by Bob's readout window after `t1`.
    pub compare_periods: f64,
    /// Fraction of Bob's first-ensemble atoms spent on his own fit.
    pub bob_fit_share: f64,
    /// Record expected counts `trials·P1` instead of binomial draws.
    pub expected_counts: bool,
}

impl Default for ComparisonPlan {
    fn default() -> Self {
        Self {
            n_periods: 10,
            convention: NConvention::Periods,
            trials_per_point: 1000,
            fit_periods: 10.0,
            compare_periods: 2.0,
            bob_fit_share: 0.5,
            expected_counts: false,
        }
    }
}

impl ComparisonPlan {
    fn validate(&self) -> Result<(), CompareError> {
        let bad = |m: &str| Err(CompareError::Plan(m.into()));
        if self.n_periods == 0 {
            return bad("n_periods must be >= 1");
        }
        if self.trials_per_point == 0 {
            return bad("trials_per_point must be >= 1");
        }
        if !(self.fit_periods.is_finite() && self.fit_periods > 0.0) {
            return bad("fit_periods must be positive");
        }
        if !(self.compare_periods.is_finite() && self.compare_periods > 0.0) {
            return bad("compare_periods must be positive");
        }
        if !(self.bob_fit_share > 0.0 && self.bob_fit_share < 1.0) {
            return bad("bob_fit_share must lie strictly between 0 and 1");
        }
        Ok(())
    }
}

/// Every fringe the comparison recorded. Times are absolute for the step-ii
/// fits and relative to `t1` for the two comparison fringes.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonData {
    pub alice_fit: FringeDataset,
    pub bob_fit: FringeDataset,
    pub bob_first: FringeDataset,
    pub bob_second: FringeDataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonResult {
    pub omega_a: Estimate,
    pub omega_b: Estimate,
    pub alice_fit: FringeFit,
    pub bob_fit: FringeFit,
    pub t1: f64,
    pub n_periods: u64,
    pub convention: NConvention,
    /// `Θ = Ω̂_A·t1`.
    pub theta: f64,
    pub joint: PhaseFit,
    /// Unwrapped phase of Bob's first clock relative to his second.
    pub bob_phase: Estimate,
    /// `(Ω_B − Ω_A)/Ω_A` with standard error.
    pub fractional_offset: Estimate,
    /// Three-sigma interval on the offset.
    pub interval: (f64, f64),
    /// Set when Bob's step-ii frequency is too coarse to fix the whole
    /// number of turns in `Φ` (`σ_Ω̂B·t1 > π/3`).
    pub phase_ambiguous: bool,
    pub data: ComparisonData,
}

/// Start time for a second clock at the first fringe maximum
/// (`Ω̂·t ≡ π mod 2π`) not earlier than `earliest`.
pub fn peak_start_strategy(fit: &FringeFit, earliest: f64) -> Result<f64, FitError> {
    let omega = fit.omega.value;
    if !(omega.is_finite() && omega > 0.0 && fit.omega.std_error.is_finite()) {
        return Err(FitError::Degenerate);
    }
    let k = ((earliest * omega - PI) / TAU).ceil().max(0.0);
    let mut t = (PI + TAU * k) / omega;
    if t < earliest {
        t += TAU / omega;
    }
    Ok(t)
}

/// Minimum readout points per fringe period; wider windows are shortened
/// rather than sampled stroboscopically.
const POINTS_PER_PERIOD: f64 = 3.5;

/// `points` evenly spaced times ending at `periods` fringe periods (capped
/// by [`POINTS_PER_PERIOD`]).
fn readout_grid(period: f64, periods: f64, points: usize) -> Vec<f64> {
    let span = period * periods.min(points as f64 / POINTS_PER_PERIOD);
    (0..points).map(|k| span * (k + 1) as f64 / points as f64).collect()
}

fn point_count(atoms: usize, trials_per_point: u64) -> usize {
    (atoms / trials_per_point as usize).max(5)
}

/// Reads `labels` in `times.len()` equal chunks, chunk `k` at
/// `offset + times[k]`; the dataset keeps the times without `offset`.
#[allow(clippy::too_many_arguments)]
fn read_fringe<R: Rng + ?Sized>(
    run: &mut SyncRun,
    party: &Party,
    labels: &[u64],
    offset: f64,
    times: &[f64],
    hint: Option<f64>,
    expected: bool,
    who: &'static str,
    rng: &mut R,
) -> Result<FringeDataset, CompareError> {
    let p = times.len();
    if labels.len() < p {
        return Err(CompareError::EmptySubensemble(who));
    }
    let mut points = Vec::with_capacity(p);
    for (k, &t) in times.iter().enumerate() {
        let chunk = &labels[k * labels.len() / p..(k + 1) * labels.len() / p];
        let s = run.readout(party, chunk, offset + t, rng)?;
        let successes = if expected {
            s.exact_p1 * s.trials as f64
        } else {
            s.ones as f64
        };
        points.push(FringePoint {
            time: t,
            successes: successes.clamp(0.0, s.trials as f64),
            trials: s.trials,
        });
    }
    FringeDataset::new(points, hint).map_err(|source| CompareError::Fit { stage: who, source })
}

fn nominal_period(clock: &ClockConfig) -> Result<f64, CompareError> {
    if clock.detuning() == 0.0 {
        return Err(CompareError::Plan("a clock with zero detuning shows no fringe".into()));
    }
    Ok(TAU / clock.detuning().abs())
}

/// Runs steps i–iii on two fresh ensembles and infers Bob's fractional
/// frequency offset from Alice.
pub fn compare_clocks<R: Rng + ?Sized>(
    first: Ensemble,
    second: Ensemble,
    alice_clock: &ClockConfig,
    bob_clock: &ClockConfig,
    plan: &ComparisonPlan,
    rng: &mut R,
) -> Result<ComparisonResult, CompareError> {
    plan.validate()?;
    let alice = Party::alice(*alice_clock);
    let bob = Party::bob(*bob_clock);
    let fit_stage = |stage| move |source| CompareError::Fit { stage, source };

    // i) start the first pair of clocks
    let mut run1 = alice_start(first, 0.0, rng)?;
    let msg = run1.send_labels(TypeTag::I, 0.0);
    if run1.bob_select(&msg)?.degenerate {
        return Err(CompareError::EmptySubensemble("bob first"));
    }
    let alice_labels: Vec<u64> = run1.alice_selection().iter().copied().collect();
    let bob_labels: Vec<u64> = run1.bob_selection().into_iter().flatten().copied().collect();
    if alice_labels.is_empty() {
        return Err(CompareError::EmptySubensemble("alice first"));
    }

    // ii) each party fits its own fringe
    let times_a = readout_grid(
        nominal_period(alice_clock)?,
        plan.fit_periods,
        point_count(alice_labels.len(), plan.trials_per_point),
    );
    let alice_data = read_fringe(
        &mut run1,
        &alice,
        &alice_labels,
        0.0,
        &times_a,
        Some(alice_clock.detuning()),
        plan.expected_counts,
        "alice fit",
        rng,
    )?;
    let alice_fit = fit_fringe(&alice_data).map_err(fit_stage("alice fit"))?;

    let split = ((bob_labels.len() as f64 * plan.bob_fit_share).round() as usize).clamp(1, bob_labels.len());
    let (bob_fit_labels, bob_reserved) = bob_labels.split_at(split);
    let times_b = readout_grid(
        nominal_period(bob_clock)?,
        plan.fit_periods,
        point_count(bob_fit_labels.len(), plan.trials_per_point),
    );
    let bob_data = read_fringe(
        &mut run1,
        &bob,
        bob_fit_labels,
        0.0,
        &times_b,
        Some(bob_clock.detuning()),
        plan.expected_counts,
        "bob fit",
        rng,
    )?;
    let bob_fit = fit_fringe(&bob_data).map_err(fit_stage("bob fit"))?;

    // iii) second pair of clocks at t1
    let theta = plan.convention.theta(plan.n_periods);
    let t1 = theta / alice_fit.omega.value;
    let mut run2 = alice_start(second, t1, rng)?;
    let msg = run2.send_labels(TypeTag::I, t1);
    if run2.bob_select(&msg)?.degenerate {
        return Err(CompareError::EmptySubensemble("bob second"));
    }
    let bob_second_labels: Vec<u64> = run2.bob_selection().into_iter().flatten().copied().collect();

    let points = point_count(bob_reserved.len().min(bob_second_labels.len()), plan.trials_per_point);
    let times_c = readout_grid(TAU / bob_fit.omega.value, plan.compare_periods, points);
    let second_data = read_fringe(
        &mut run2,
        &bob,
        &bob_second_labels,
        t1,
        &times_c,
        None,
        plan.expected_counts,
        "bob second",
        rng,
    )?;
    let first_data = read_fringe(
        &mut run1,
        &bob,
        bob_reserved,
        t1,
        &times_c,
        None,
        plan.expected_counts,
        "bob first",
        rng,
    )?;
    let joint = fit_phase_offset(
        &second_data,
        &first_data,
        t1,
        bob_fit.omega.value,
        bob_fit.gamma.value,
    )
    .map_err(fit_stage("phase fit"))?;

    let predicted = bob_fit.omega.value * t1;
    let turns = ((predicted - joint.phase.value) / TAU).round();
    let phase = joint.phase.value + TAU * turns;
    let phase_ambiguous = bob_fit.omega.std_error * t1 > PI / 3.0;

    let ratio = phase / theta;
    let sigma = ((joint.phase.std_error / theta).powi(2)
        + (ratio * alice_fit.omega.std_error / alice_fit.omega.value).powi(2))
    .sqrt();
    let fractional_offset = Estimate {
        value: ratio - 1.0,
        std_error: sigma,
    };
    Ok(ComparisonResult {
        omega_a: alice_fit.omega,
        omega_b: bob_fit.omega,
        alice_fit,
        bob_fit,
        t1,
        n_periods: plan.n_periods,
        convention: plan.convention,
        theta,
        joint,
        bob_phase: Estimate {
            value: phase,
            std_error: joint.phase.std_error,
        },
        fractional_offset,
        interval: fractional_offset.interval(3.0),
        phase_ambiguous,
        data: ComparisonData {
            alice_fit: alice_data,
            bob_fit: bob_data,
            bob_first: first_data,
            bob_second: second_data,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::{generate_pairs, ChannelModel, LinkOptions};
    use crate::rng::{SimRng, StreamSeed};

    fn fit_with(omega: f64) -> FringeFit {
        let e = Estimate {
            value: omega,
            std_error: 1e-6,
        };
        FringeFit {
            omega: e,
            gamma: Estimate {
                value: 0.0,
                std_error: 0.0,
            },
            chi_square: 0.0,
            residual_ss: 0.0,
            iterations: 1,
        }
    }

    #[test]
    fn peak_start_examples() {
        assert!((peak_start_strategy(&fit_with(TAU), 0.0).unwrap() - 0.5).abs() < 1e-12);
        assert!((peak_start_strategy(&fit_with(TAU), 0.6).unwrap() - 1.5).abs() < 1e-12);
        assert!((peak_start_strategy(&fit_with(TAU), 0.5).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(peak_start_strategy(&fit_with(0.0), 0.0), Err(FitError::Degenerate));
        assert_eq!(peak_start_strategy(&fit_with(f64::NAN), 0.0), Err(FitError::Degenerate));
    }

    fn ensembles(count: u64, seed: u64) -> (Ensemble, Ensemble) {
        let ch = ChannelModel::ideal();
        let opt = LinkOptions::default();
        let a = generate_pairs(count, &ch, &opt, StreamSeed::derive(seed, "first", 0)).unwrap();
        let b = generate_pairs(count, &ch, &opt, StreamSeed::derive(seed, "second", 0)).unwrap();
        (a, b)
    }

    #[test]
    fn identical_clocks_noiseless_give_zero_offset() {
        let clock = ClockConfig::new(9.19e9, TAU * 2.0, 1e4, 0.0).unwrap();
        let (a, b) = ensembles(4000, 3);
        let plan = ComparisonPlan {
            expected_counts: true,
            trials_per_point: 100,
            ..ComparisonPlan::default()
        };
        let mut rng = SimRng::seeded(3);
        let res = compare_clocks(a, b, &clock, &clock, &plan, &mut rng).unwrap();
        assert!(res.fractional_offset.value.abs() < 1e-9, "{:?}", res.fractional_offset);
        assert!((res.t1 * res.omega_a.value - res.theta).abs() < 1e-9);
        assert!(!res.phase_ambiguous);
    }

    #[test]
    fn injected_offset_is_recovered() {
        let a_clock = ClockConfig::new(9.19e9, TAU * 2.0, 1e4, 0.0).unwrap();
        let b_clock = a_clock.with_detuning(TAU * 2.0 * (1.0 + 1e-3)).unwrap();
        let (a, b) = ensembles(20_000, 5);
        let mut rng = SimRng::seeded(5);
        let res = compare_clocks(a, b, &a_clock, &b_clock, &ComparisonPlan::default(), &mut rng).unwrap();
        assert!(res.fractional_offset.covers(1e-3, 3.0), "{:?}", res.fractional_offset);
    }

    #[test]
    fn too_small_budget_is_reported() {
        let clock = ClockConfig::new(9.19e9, TAU, 1e4, 0.0).unwrap();
        let (a, b) = ensembles(6, 1);
        let mut rng = SimRng::seeded(1);
        let err = compare_clocks(a, b, &clock, &clock, &ComparisonPlan::default(), &mut rng).unwrap_err();
        assert!(matches!(err, CompareError::EmptySubensemble(_)), "{err:?}");
    }
}
