//! Line-oriented text form of ensembles and protocol runs.
//!
//! ```text
//! # comment lines are ignored
//! source seed=7 stream=123 count=100 first_label=1 eta_a=1.0 eta_b=1.0 p_miss=0.0 p_false=0.0 transfer=heralded phase=singlet
//! storage gamma=0.0 duration=5.0
//! records 100
//! 1 1 pure <re im ×4> -
//! 2 0 mixed <re im ×16, row-major> I
//! run t0=0.0 alice_keeps=I
//! bob_selection 2 5 9
//! consumed alice 1 3
//! consumed bob
//! sample time=0.5 party=alice ones=3 trials=10 exact_p1=0.25
//! ```
//!
//! Floats are written in shortest round-trip form, so text → value → text
//! is the identity. `bob_selection none` marks a run where Bob has not yet
//! selected. The `run` block and everything after it are present only for
//! a [`SyncRun`].

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use crate::link::{
    AtomPairRecord, ChannelModel, Ensemble, EnsembleMeta, JointState, LinkOptions, SourceMeta, StorageStep, TypeTag,
};
use crate::protocol::{PartyName, ReadoutSample, SyncRun};
use crate::quantum::{DensityMatrix, StateVector};
use crate::rng::StreamSeed;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {message}")]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

fn write_complex(out: &mut String, z: &Complex64) {
    let _ = write!(out, " {:?} {:?}", z.re, z.im);
}

/// Text form of an ensemble.
pub fn ensemble_to_text(ensemble: &Ensemble) -> String {
    let mut out = String::with_capacity(ensemble.len() * 200 + 256);
    write_ensemble(&mut out, ensemble);
    out
}

fn write_ensemble(out: &mut String, ensemble: &Ensemble) {
    let meta = ensemble.meta();
    for s in &meta.sources {
        let _ = writeln!(
            out,
            "source seed={} stream={} count={} first_label={} eta_a={:?} eta_b={:?} p_miss={:?} p_false={:?} transfer={} phase={}",
            s.stream.seed,
            s.stream.stream,
            s.count,
            s.first_label,
            s.channel.eta_a(),
            s.channel.eta_b(),
            s.channel.p_miss(),
            s.channel.p_false(),
            s.options.transfer,
            s.options.phase
        );
    }
    for st in &meta.storage {
        let _ = writeln!(out, "storage gamma={:?} duration={:?}", st.gamma, st.duration);
    }
    let _ = writeln!(out, "records {}", ensemble.len());
    for r in ensemble.records() {
        let _ = write!(out, "{} {}", r.label, u8::from(r.herald_kept));
        match &r.joint_state {
            JointState::Pure(s) => {
                out.push_str(" pure");
                for a in s.amplitudes() {
                    write_complex(out, a);
                }
            }
            JointState::Mixed(d) => {
                out.push_str(" mixed");
                let m = d.entries();
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        write_complex(out, &m[(i, j)]);
                    }
                }
            }
        }
        match r.type_tag {
            Some(t) => {
                let _ = writeln!(out, " {t}");
            }
            None => out.push_str(" -\n"),
        }
    }
}

/// Text form of a run: its ensemble followed by the run sections.
pub fn run_to_text(run: &SyncRun) -> String {
    let mut out = String::with_capacity(run.ensemble().len() * 220 + 256);
    write_ensemble(&mut out, run.ensemble());
    let _ = writeln!(out, "run t0={:?} alice_keeps={}", run.t0(), run.alice_keeps());
    match run.bob_selection() {
        None => out.push_str("bob_selection none\n"),
        Some(sel) => {
            out.push_str("bob_selection");
            for l in sel {
                let _ = write!(out, " {l}");
            }
            out.push('\n');
        }
    }
    for party in [PartyName::Alice, PartyName::Bob] {
        let _ = write!(out, "consumed {party}");
        for l in run.consumed(party) {
            let _ = write!(out, " {l}");
        }
        out.push('\n');
    }
    for s in run.samples() {
        let _ = writeln!(
            out,
            "sample time={:?} party={} ones={} trials={} exact_p1={:?}",
            s.time, s.party, s.ones, s.trials, s.exact_p1
        );
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)>> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty() && !l.starts_with('#')),
        );
        Self {
            inner: it.peekable(),
            last: 0,
        }
    }

    fn peek_keyword(&mut self) -> Option<&'a str> {
        self.inner.peek().map(|(_, l)| l.split_whitespace().next().unwrap_or(""))
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        let n = self.inner.next();
        if let Some((i, _)) = n {
            self.last = i;
        }
        n
    }

    fn eof_error(&self, what: &str) -> FormatError {
        FormatError {
            line: self.last + 1,
            message: format!("unexpected end of input, expected {what}"),
        }
    }
}

/// `key=value` fields of a header line, in order and all required.
fn fields<'a>(line: usize, rest: &'a str, keys: &[&str]) -> Result<Vec<&'a str>, FormatError> {
    let parts: Vec<&str> = rest.split_whitespace().collect();
    if parts.len() != keys.len() {
        return Err(FormatError {
            line,
            message: format!("expected {} fields ({}), found {}", keys.len(), keys.join(" "), parts.len()),
        });
    }
    parts
        .iter()
        .zip(keys)
        .map(|(p, k)| match p.split_once('=') {
            Some((pk, v)) if pk == *k => Ok(v),
            _ => Err(FormatError {
                line,
                message: format!("expected {k}=<value>, found {p:?}"),
            }),
        })
        .collect()
}

fn parse<T: FromStr>(line: usize, what: &str, s: &str) -> Result<T, FormatError> {
    s.parse().map_err(|_| FormatError {
        line,
        message: format!("bad {what} {s:?}"),
    })
}

fn parse_with<T, E: std::fmt::Display>(line: usize, r: Result<T, E>) -> Result<T, FormatError> {
    r.map_err(|e| FormatError {
        line,
        message: e.to_string(),
    })
}

fn read_ensemble(lines: &mut Lines<'_>) -> Result<Ensemble, FormatError> {
    let mut meta = EnsembleMeta::default();
    loop {
        match lines.peek_keyword() {
            Some("source") => {
                let (n, l) = lines.next().expect("peeked");
                let f = fields(
                    n,
                    &l["source".len()..],
                    &[
                        "seed",
                        "stream",
                        "count",
                        "first_label",
                        "eta_a",
                        "eta_b",
                        "p_miss",
                        "p_false",
                        "transfer",
                        "phase",
                    ],
                )?;
                let channel = parse_with(
                    n,
                    ChannelModel::new(
                        parse(n, "eta_a", f[4])?,
                        parse(n, "eta_b", f[5])?,
                        parse(n, "p_miss", f[6])?,
                        parse(n, "p_false", f[7])?,
                    ),
                )?;
                meta.sources.push(SourceMeta {
                    stream: StreamSeed::new(parse(n, "seed", f[0])?, parse(n, "stream", f[1])?),
                    count: parse(n, "count", f[2])?,
                    first_label: parse(n, "first_label", f[3])?,
                    channel,
                    options: LinkOptions {
                        transfer: parse_with(n, f[8].parse())?,
                        phase: parse_with(n, f[9].parse())?,
                    },
                });
            }
            Some("storage") => {
                let (n, l) = lines.next().expect("peeked");
                let f = fields(n, &l["storage".len()..], &["gamma", "duration"])?;
                meta.storage.push(StorageStep {
                    gamma: parse(n, "gamma", f[0])?,
                    duration: parse(n, "duration", f[1])?,
                });
            }
            _ => break,
        }
    }
    let (n, l) = lines.next().ok_or_else(|| lines.eof_error("records <count>"))?;
    let count: usize = match l.split_whitespace().collect::<Vec<_>>()[..] {
        ["records", c] => parse(n, "record count", c)?,
        _ => {
            return Err(FormatError {
                line: n,
                message: format!("expected records <count>, found {l:?}"),
            })
        }
    };
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, l) = lines.next().ok_or_else(|| lines.eof_error("a record"))?;
        records.push(parse_record(n, l)?);
    }
    parse_with(n, Ensemble::new(records, meta))
}

fn parse_record(n: usize, l: &str) -> Result<AtomPairRecord, FormatError> {
    let parts: Vec<&str> = l.split_whitespace().collect();
    let err = |message: String| FormatError { line: n, message };
    if parts.len() < 4 {
        return Err(err(format!("record has {} fields", parts.len())));
    }
    let label: u64 = parse(n, "label", parts[0])?;
    let herald_kept = match parts[1] {
        "0" => false,
        "1" => true,
        other => return Err(err(format!("kept flag must be 0 or 1, found {other:?}"))),
    };
    let floats = |k: usize| -> Result<Vec<Complex64>, FormatError> {
        if parts.len() != 2 * k + 4 {
            return Err(err(format!("{} record needs {} numbers, found {}", parts[2], 2 * k, parts.len().saturating_sub(4))));
        }
        (0..k)
            .map(|i| {
                Ok(Complex64::new(
                    parse(n, "number", parts[3 + 2 * i])?,
                    parse(n, "number", parts[4 + 2 * i])?,
                ))
            })
            .collect()
    };
    let joint_state = match parts[2] {
        "pure" => JointState::Pure(parse_with(n, StateVector::new(2, floats(4)?))?),
        "mixed" => {
            let m = DMatrix::from_row_slice(4, 4, &floats(16)?);
            JointState::Mixed(parse_with(n, DensityMatrix::new(2, m))?)
        }
        other => return Err(err(format!("state kind must be pure or mixed, found {other:?}"))),
    };
    let tag = parts[parts.len() - 1];
    let type_tag = if tag == "-" { None } else { Some(parse_with(n, tag.parse::<TypeTag>())?) };
    Ok(AtomPairRecord {
        label,
        joint_state,
        herald_kept,
        type_tag,
    })
}

fn expect_end(lines: &mut Lines<'_>) -> Result<(), FormatError> {
    match lines.next() {
        None => Ok(()),
        Some((n, l)) => Err(FormatError {
            line: n,
            message: format!("unexpected line {l:?}"),
        }),
    }
}

/// Parses [`ensemble_to_text`] output.
pub fn ensemble_from_text(text: &str) -> Result<Ensemble, FormatError> {
    let mut lines = Lines::new(text);
    let ens = read_ensemble(&mut lines)?;
    expect_end(&mut lines)?;
    Ok(ens)
}

fn label_list(n: usize, items: &[&str]) -> Result<BTreeSet<u64>, FormatError> {
    items.iter().map(|s| parse(n, "label", s)).collect()
}

/// Parses [`run_to_text`] output.
pub fn run_from_text(text: &str) -> Result<SyncRun, FormatError> {
    let mut lines = Lines::new(text);
    let ensemble = read_ensemble(&mut lines)?;
    let (n, l) = lines.next().ok_or_else(|| lines.eof_error("run header"))?;
    let rest = l.strip_prefix("run").ok_or_else(|| FormatError {
        line: n,
        message: format!("expected run header, found {l:?}"),
    })?;
    let f = fields(n, rest, &["t0", "alice_keeps"])?;
    let t0: f64 = parse(n, "t0", f[0])?;
    let alice_keeps: TypeTag = parse_with(n, f[1].parse())?;

    let (n, l) = lines.next().ok_or_else(|| lines.eof_error("bob_selection"))?;
    let parts: Vec<&str> = l.split_whitespace().collect();
    let bob_selection = match parts[..] {
        ["bob_selection", "none"] => None,
        ["bob_selection", ref rest @ ..] => Some(label_list(n, rest)?),
        _ => {
            return Err(FormatError {
                line: n,
                message: format!("expected bob_selection, found {l:?}"),
            })
        }
    };
    let mut consumed: [BTreeSet<u64>; 2] = Default::default();
    for party in [PartyName::Alice, PartyName::Bob] {
        let (n, l) = lines.next().ok_or_else(|| lines.eof_error("consumed"))?;
        let parts: Vec<&str> = l.split_whitespace().collect();
        if parts.len() < 2 || parts[0] != "consumed" || parts[1] != party.to_string() {
            return Err(FormatError {
                line: n,
                message: format!("expected consumed {party}, found {l:?}"),
            });
        }
        consumed[party.qubit()] = label_list(n, &parts[2..])?;
    }
    let mut samples = Vec::new();
    while let Some((n, l)) = lines.next() {
        let rest = l.strip_prefix("sample").ok_or_else(|| FormatError {
            line: n,
            message: format!("expected sample, found {l:?}"),
        })?;
        let f = fields(n, rest, &["time", "party", "ones", "trials", "exact_p1"])?;
        samples.push(ReadoutSample {
            time: parse(n, "time", f[0])?,
            party: parse_with(n, f[1].parse())?,
            ones: parse(n, "ones", f[2])?,
            trials: parse(n, "trials", f[3])?,
            exact_p1: parse(n, "exact_p1", f[4])?,
        });
    }
    let line = lines.last;
    parse_with(
        line,
        SyncRun::from_parts(t0, alice_keeps, ensemble, bob_selection, consumed, samples),
    )
}
