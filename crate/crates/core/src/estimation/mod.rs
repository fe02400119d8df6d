//! Fringe fitting and two-clock frequency comparison.

mod compare;
mod fit;

use std::fmt::Write as _;

use thiserror::Error;

use crate::link::LinkError;
use crate::protocol::ProtocolError;

pub use compare::{compare_clocks, peak_start_strategy, ComparisonData, ComparisonPlan, ComparisonResult, NConvention};
pub use fit::{fit_fringe, fit_phase_offset, FringeFit, PhaseFit, MAX_ITERATIONS, STEP_TOLERANCE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("data span {span} s covers less than one fringe period ({period} s)")]
    InsufficientSpan { span: f64, period: f64 },
    #[error("no fringe in the data; frequency is unidentifiable")]
    Degenerate,
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("invalid data at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid point {index}: {message}")]
    InvalidPoint { index: usize, message: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompareError {
    #[error("{0} subensemble is empty")]
    EmptySubensemble(&'static str),
    #[error("{stage}: {source}")]
    Fit {
        stage: &'static str,
        #[source]
        source: FitError,
    },
    #[error("invalid comparison plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Link(#[from] LinkError),
}

/// An estimate with its one-sigma standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// `value ± k·σ`.
    pub fn interval(&self, k: f64) -> (f64, f64) {
        (self.value - k * self.std_error, self.value + k * self.std_error)
    }

    pub fn covers(&self, truth: f64, k: f64) -> bool {
        (self.value - truth).abs() <= k * self.std_error
    }
}

/// One readout time: `successes` of `trials` atoms found in `|1⟩`.
/// `successes` may be fractional for noiseless (expected-value) data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringePoint {
    pub time: f64,
    pub successes: f64,
    pub trials: u64,
}

impl FringePoint {
    pub fn fraction(&self) -> f64 {
        self.successes / self.trials as f64
    }
}

/// Fringe samples with strictly increasing times.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FringeDataset {
    points: Vec<FringePoint>,
    clock_hint: Option<f64>,
}

impl FringeDataset {
    pub fn new(points: Vec<FringePoint>, clock_hint: Option<f64>) -> Result<Self, FitError> {
        for (index, p) in points.iter().enumerate() {
            let bad = |message: String| FitError::InvalidPoint { index, message };
            if p.trials == 0 {
                return Err(bad("trials must be >= 1".into()));
            }
            if !p.time.is_finite() {
                return Err(bad(format!("time {} is not finite", p.time)));
            }
            if !(0.0..=p.trials as f64).contains(&p.successes) {
                return Err(bad(format!("successes {} outside 0..={}", p.successes, p.trials)));
            }
            if index > 0 && !(p.time > points[index - 1].time) {
                return Err(bad("times must be strictly increasing".into()));
            }
        }
        if let Some(h) = clock_hint {
            if !(h.is_finite() && h != 0.0) {
                return Err(FitError::InvalidPoint {
                    index: 0,
                    message: format!("clock hint {h} must be finite and nonzero"),
                });
            }
        }
        Ok(Self { points, clock_hint })
    }

    pub fn points(&self) -> &[FringePoint] {
        &self.points
    }

    pub fn clock_hint(&self) -> Option<f64> {
        self.clock_hint
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Delimited text: `time<TAB>successes<TAB>trials` per line, `#`
    /// comments; an optional `# clock_hint = <rad/s>` line carries the hint.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# time\tsuccesses\ttrials\n");
        if let Some(h) = self.clock_hint {
            let _ = writeln!(out, "# clock_hint = {h:?}");
        }
        for p in &self.points {
            let _ = writeln!(out, "{:?}\t{:?}\t{}", p.time, p.successes, p.trials);
        }
        out
    }

    /// Parses [`FringeDataset::to_text`] output. Fields may be separated by
    /// tabs, commas or spaces.
    pub fn from_text(text: &str) -> Result<Self, FitError> {
        let mut points = Vec::new();
        let mut hint = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let err = |message: String| FitError::Parse { line, message };
            let trimmed = raw.trim();
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some((k, v)) = comment.split_once('=') {
                    if k.trim() == "clock_hint" {
                        hint = Some(v.trim().parse::<f64>().map_err(|_| err(format!("bad clock hint {:?}", v.trim())))?);
                    }
                }
                continue;
            }
            if trimmed.is_empty() {
                continue;
            }
            let fields: Vec<&str> = trimmed
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if fields.len() != 3 {
                return Err(err(format!("expected 3 fields, found {}", fields.len())));
            }
            let time = fields[0].parse::<f64>().map_err(|_| err(format!("bad time {:?}", fields[0])))?;
            let successes = fields[1]
                .parse::<f64>()
                .map_err(|_| err(format!("bad successes {:?}", fields[1])))?;
            let trials = fields[2].parse::<u64>().map_err(|_| err(format!("bad trials {:?}", fields[2])))?;
            points.push(FringePoint { time, successes, trials });
        }
        Self::new(points, hint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_validation() {
        let p = |time, successes, trials| FringePoint { time, successes, trials };
        assert!(FringeDataset::new(vec![p(0.0, 1.0, 0)], None).is_err());
        assert!(FringeDataset::new(vec![p(1.0, 1.0, 2), p(1.0, 1.0, 2)], None).is_err());
        assert!(FringeDataset::new(vec![p(0.0, 3.0, 2)], None).is_err());
        assert!(FringeDataset::new(vec![p(0.0, 1.0, 2)], Some(0.0)).is_err());
        assert!(FringeDataset::new(vec![p(0.0, 1.0, 2), p(0.5, 0.0, 2)], Some(1.0)).is_ok());
    }

    #[test]
    fn text_round_trip_and_comments() {
        let ds = FringeDataset::new(
            vec![
                FringePoint { time: 0.1, successes: 3.0, trials: 10 },
                FringePoint { time: 0.30000000000000004, successes: 2.5, trials: 10 },
            ],
            Some(6.283185307179587),
        )
        .unwrap();
        let back = FringeDataset::from_text(&ds.to_text()).unwrap();
        assert_eq!(back, ds);
        let csv = "# a comment\n0.0, 1, 4\n\n1.0,2,4\n";
        assert_eq!(FringeDataset::from_text(csv).unwrap().len(), 2);
        let err = FringeDataset::from_text("0 1\n").unwrap_err();
        assert!(matches!(err, FitError::Parse { line: 1, .. }));
    }
}
