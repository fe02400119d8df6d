//! Scenario configuration files.
//!
//! Grammar, one item per line:
//!
//! ```text
//! # comment (also after a value: `key = 1.0  # note`)
//! seed = 42                 top-level keys come before any section
//! scenario = compare        optional; must match the subcommand when given
//! [clock]                   section header
//! detuning = 6.283185307179586
//! ```
//!
//! Keys are `[a-z_]+`; unknown sections, unknown keys and repeated keys are
//! errors. Omitted keys take the defaults shown by [`ScenarioConfig::normalized`].
//! `seed` is required.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::atom::{zeeman_shift, FieldConfig, TransferMode, CS_CLOCK_HZ};
use crate::estimation::NConvention;
use crate::link::{ChannelModel, LinkOptions, PairPhase};
use crate::quantum::{ClockConfig, MAX_QUBITS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: {key}: {message}")]
    Value { line: usize, key: String, message: String },
    #[error("missing required key {0}")]
    Missing(&'static str),
    #[error("config is for scenario {config}, not {requested}")]
    ScenarioMismatch { config: ScenarioKind, requested: ScenarioKind },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    Ramsey,
    Distribute,
    Sync,
    Compare,
    Ghz,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::Ramsey,
        ScenarioKind::Distribute,
        ScenarioKind::Sync,
        ScenarioKind::Compare,
        ScenarioKind::Ghz,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Ramsey => "ramsey",
            ScenarioKind::Distribute => "distribute",
            ScenarioKind::Sync => "sync",
            ScenarioKind::Compare => "compare",
            ScenarioKind::Ghz => "ghz",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scenario {s:?} (expected ramsey|distribute|sync|compare|ghz)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClockSection {
    /// Zero-field resonance, Hz.
    pub nu0: f64,
    /// Drive detuning from the zero-field resonance, rad/s.
    pub detuning: f64,
    /// Rabi-type pulse parameter for the validity check, rad/s.
    pub b_param: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSection {
    pub eta_a: f64,
    pub eta_b: f64,
    pub p_miss: f64,
    pub p_false: f64,
    pub transfer: TransferMode,
    pub phase: PairPhase,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSection {
    /// Static field, tesla.
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RamseySection {
    pub t_max: f64,
    pub points: usize,
    pub shots: u64,
    pub density: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributeSection {
    pub pairs: u64,
    pub storage_time: f64,
    pub storage_gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncSection {
    pub pairs: u64,
    pub t0: f64,
    pub message_delay: f64,
    pub t_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSection {
    /// Injected `(Ω_B − Ω_A)/Ω_A`.
    pub offset: f64,
    pub n_periods: u64,
    pub convention: NConvention,
    pub atoms: u64,
    pub trials_per_point: u64,
    pub fit_periods: f64,
    pub compare_periods: f64,
    pub bob_fit_share: f64,
    pub expected_counts: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GhzSection {
    pub sizes: Vec<usize>,
    pub t_max: f64,
    pub points: usize,
    pub shots: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Option<ScenarioKind>,
    pub seed: u64,
    pub clock: ClockSection,
    pub channel: ChannelSection,
    pub field: FieldSection,
    pub ramsey: RamseySection,
    pub distribute: DistributeSection,
    pub sync: SyncSection,
    pub compare: CompareSection,
    pub ghz: GhzSection,
    pub output: OutputSection,
}

impl ScenarioConfig {
    /// All defaults with the given seed.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            scenario: None,
            seed,
            clock: ClockSection {
                nu0: CS_CLOCK_HZ,
                detuning: std::f64::consts::TAU,
                b_param: 1e4,
                gamma: 0.0,
            },
            channel: ChannelSection {
                eta_a: 1.0,
                eta_b: 1.0,
                p_miss: 0.0,
                p_false: 0.0,
                transfer: TransferMode::Heralded,
                phase: PairPhase::Singlet,
            },
            field: FieldSection { b: 0.0 },
            ramsey: RamseySection {
                t_max: 1.0,
                points: 101,
                shots: 1000,
                density: false,
            },
            distribute: DistributeSection {
                pairs: 1000,
                storage_time: 0.0,
                storage_gamma: 0.0,
            },
            sync: SyncSection {
                pairs: 10_000,
                t0: 0.0,
                message_delay: 1.0,
                t_max: 2.0,
                points: 20,
            },
            compare: CompareSection {
                offset: 1e-3,
                n_periods: 10,
                convention: NConvention::Periods,
                atoms: 100_000,
                trials_per_point: 1000,
                fit_periods: 10.0,
                compare_periods: 2.0,
                bob_fit_share: 0.5,
                expected_counts: false,
            },
            ghz: GhzSection {
                sizes: vec![2, 3, 4],
                t_max: 1.0,
                points: 100,
                shots: 1000,
            },
            output: OutputSection { dir: PathBuf::from("out") },
        }
    }

    /// Alice's clock (and Bob's, except in the comparison) with the static
    /// field applied: the resonance moves up by the quadratic Zeeman shift,
    /// and the detuning of the unchanged drive moves down by the same amount.
    pub fn clock_config(&self) -> ClockConfig {
        let shift = zeeman_shift(self.field.b).expect("validated field");
        ClockConfig::new(
            self.clock.nu0 + shift,
            self.clock.detuning - std::f64::consts::TAU * shift,
            self.clock.b_param,
            self.clock.gamma,
        )
        .expect("validated clock")
    }

    pub fn field_config(&self) -> FieldConfig {
        FieldConfig::new(self.field.b, self.clock.nu0).expect("validated field")
    }

    pub fn channel_model(&self) -> ChannelModel {
        let c = &self.channel;
        ChannelModel::new(c.eta_a, c.eta_b, c.p_miss, c.p_false).expect("validated channel")
    }

    pub fn link_options(&self) -> LinkOptions {
        LinkOptions {
            transfer: self.channel.transfer,
            phase: self.channel.phase,
        }
    }

    /// Parses and fully validates config text.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::with_seed(0);
        let mut seen: Vec<(String, String)> = Vec::new();
        let mut have_seed = false;
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(inner) = content.strip_prefix('[') {
                let name = inner.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line,
                    message: format!("unterminated section header {content:?}"),
                })?;
                let name = name.trim();
                if !SCHEMA.iter().any(|(s, _)| *s == name) || name.is_empty() {
                    return Err(ConfigError::Syntax {
                        line,
                        message: format!("unknown section [{name}]"),
                    });
                }
                if seen.iter().any(|(s, k)| s == name && k.is_empty()) {
                    return Err(ConfigError::Syntax {
                        line,
                        message: format!("section [{name}] appears twice"),
                    });
                }
                seen.push((name.to_string(), String::new()));
                section = name.to_string();
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("expected key = value, found {content:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let keys = SCHEMA.iter().find(|(s, _)| *s == section).map(|(_, k)| *k).unwrap_or(&[]);
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            if !keys.contains(&key) {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("unknown key {full}"),
                });
            }
            if seen.iter().any(|(s, k)| *s == section && k == key) {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("key {full} given twice"),
                });
            }
            seen.push((section.clone(), key.to_string()));
            if value.is_empty() {
                return Err(ConfigError::Value {
                    line,
                    key: full,
                    message: "empty value".into(),
                });
            }
            cfg.set(&section, key, value).map_err(|message| ConfigError::Value {
                line,
                key: full.clone(),
                message,
            })?;
            have_seed |= section.is_empty() && key == "seed";
        }
        if !have_seed {
            return Err(ConfigError::Missing("seed"));
        }
        Ok(cfg)
    }

    /// Reads and parses a config file.
    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    fn set(&mut self, section: &str, key: &str, v: &str) -> Result<(), String> {
        match (section, key) {
            ("", "seed") => self.seed = parse_num(v)?,
            ("", "scenario") => self.scenario = Some(v.parse()?),
            ("clock", "nu0") => self.clock.nu0 = bounded(v, 0.0, f64::INFINITY, ">= 0")?,
            ("clock", "detuning") => self.clock.detuning = finite(v)?,
            ("clock", "b_param") => self.clock.b_param = positive(v)?,
            ("clock", "gamma") => self.clock.gamma = bounded(v, 0.0, f64::INFINITY, ">= 0")?,
            ("channel", "eta_a") => self.channel.eta_a = probability(v)?,
            ("channel", "eta_b") => self.channel.eta_b = probability(v)?,
            ("channel", "p_miss") => self.channel.p_miss = probability(v)?,
            ("channel", "p_false") => self.channel.p_false = probability(v)?,
            ("channel", "transfer") => self.channel.transfer = v.parse()?,
            ("channel", "phase") => self.channel.phase = v.parse()?,
            ("field", "b") => self.field.b = bounded(v, 0.0, f64::INFINITY, ">= 0")?,
            ("ramsey", "t_max") => self.ramsey.t_max = bounded(v, 0.0, f64::INFINITY, ">= 0")?,
            ("ramsey", "points") => self.ramsey.points = at_least(v, 2)?,
            ("ramsey", "shots") => self.ramsey.shots = at_least(v, 1)?,
            ("ramsey", "density") => self.ramsey.density = boolean(v)?,
            ("distribute", "pairs") => self.distribute.pairs = at_least(v, 1)?,
            ("distribute", "storage_time") => self.distribute.storage_time = bounded(v, 0.0, f64::INFINITY, ">= 0")?,
            ("distribute", "storage_gamma") => self.distribute.storage_gamma = bounded(v, 0.0, f64::INFINITY, ">= 0")?,
            ("sync", "pairs") => self.sync.pairs = at_least(v, 1)?,
            ("sync", "t0") => self.sync.t0 = bounded(v, 0.0, f64::INFINITY, ">= 0")?,
            ("sync", "message_delay") => self.sync.message_delay = bounded(v, 0.0, f64::INFINITY, ">= 0")?,
            ("sync", "t_max") => self.sync.t_max = positive(v)?,
            ("sync", "points") => self.sync.points = at_least(v, 1)?,
            ("compare", "offset") => self.compare.offset = bounded(v, -0.5, 0.5, "in [-0.5, 0.5]")?,
            ("compare", "n_periods") => self.compare.n_periods = at_least(v, 1)?,
            ("compare", "convention") => self.compare.convention = v.parse()?,
            ("compare", "atoms") => self.compare.atoms = at_least(v, 10)?,
            ("compare", "trials_per_point") => self.compare.trials_per_point = at_least(v, 1)?,
            ("compare", "fit_periods") => self.compare.fit_periods = positive(v)?,
            ("compare", "compare_periods") => self.compare.compare_periods = positive(v)?,
            ("compare", "bob_fit_share") => {
                let x = finite(v)?;
                if !(x > 0.0 && x < 1.0) {
                    return Err(format!("{x} out of range: must be in (0, 1)"));
                }
                self.compare.bob_fit_share = x;
            }
            ("compare", "expected_counts") => self.compare.expected_counts = boolean(v)?,
            ("ghz", "sizes") => {
                let sizes = v
                    .split(',')
                    .map(|s| {
                        let n: usize = parse_num(s.trim())?;
                        if !(1..=MAX_QUBITS).contains(&n) {
                            return Err(format!("size {n} out of range: must be in 1..={MAX_QUBITS}"));
                        }
                        Ok(n)
                    })
                    .collect::<Result<Vec<_>, String>>()?;
                self.ghz.sizes = sizes;
            }
            ("ghz", "t_max") => self.ghz.t_max = bounded(v, 0.0, f64::INFINITY, ">= 0")?,
            ("ghz", "points") => self.ghz.points = at_least(v, 2)?,
            ("ghz", "shots") => self.ghz.shots = at_least(v, 1)?,
            ("output", "dir") => self.output.dir = PathBuf::from(v),
            _ => unreachable!("schema and setter disagree on {section}.{key}"),
        }
        Ok(())
    }

    /// Canonical text: every key in schema order with its effective value.
    /// Parsing it gives back an equal config.
    pub fn normalized(&self) -> String {
        let mut o = String::new();
        let w = &mut o;
        let _ = writeln!(w, "seed = {}", self.seed);
        if let Some(s) = self.scenario {
            let _ = writeln!(w, "scenario = {s}");
        }
        let c = &self.clock;
        let _ = writeln!(w, "\n[clock]\nnu0 = {:?}\ndetuning = {:?}\nb_param = {:?}\ngamma = {:?}", c.nu0, c.detuning, c.b_param, c.gamma);
        let c = &self.channel;
        let _ = writeln!(
            w,
            "\n[channel]\neta_a = {:?}\neta_b = {:?}\np_miss = {:?}\np_false = {:?}\ntransfer = {}\nphase = {}",
            c.eta_a, c.eta_b, c.p_miss, c.p_false, c.transfer, c.phase
        );
        let _ = writeln!(w, "\n[field]\nb = {:?}", self.field.b);
        let r = &self.ramsey;
        let _ = writeln!(w, "\n[ramsey]\nt_max = {:?}\npoints = {}\nshots = {}\ndensity = {}", r.t_max, r.points, r.shots, r.density);
        let d = &self.distribute;
        let _ = writeln!(
            w,
            "\n[distribute]\npairs = {}\nstorage_time = {:?}\nstorage_gamma = {:?}",
            d.pairs, d.storage_time, d.storage_gamma
        );
        let s = &self.sync;
        let _ = writeln!(
            w,
            "\n[sync]\npairs = {}\nt0 = {:?}\nmessage_delay = {:?}\nt_max = {:?}\npoints = {}",
            s.pairs, s.t0, s.message_delay, s.t_max, s.points
        );
        let c = &self.compare;
        let _ = writeln!(
            w,
            "\n[compare]\noffset = {:?}\nn_periods = {}\nconvention = {}\natoms = {}\ntrials_per_point = {}\nfit_periods = {:?}\ncompare_periods = {:?}\nbob_fit_share = {:?}\nexpected_counts = {}",
            c.offset, c.n_periods, c.convention, c.atoms, c.trials_per_point, c.fit_periods, c.compare_periods, c.bob_fit_share, c.expected_counts
        );
        let g = &self.ghz;
        let sizes: Vec<String> = g.sizes.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(
            w,
            "\n[ghz]\nsizes = {}\nt_max = {:?}\npoints = {}\nshots = {}",
            sizes.join(","),
            g.t_max,
            g.points,
            g.shots
        );
        let _ = writeln!(w, "\n[output]\ndir = {}", self.output.dir.display());
        o
    }
}

const SCHEMA: &[(&str, &[&str])] = &[
    ("", &["seed", "scenario"]),
    ("clock", &["nu0", "detuning", "b_param", "gamma"]),
    ("channel", &["eta_a", "eta_b", "p_miss", "p_false", "transfer", "phase"]),
    ("field", &["b"]),
    ("ramsey", &["t_max", "points", "shots", "density"]),
    ("distribute", &["pairs", "storage_time", "storage_gamma"]),
    ("sync", &["pairs", "t0", "message_delay", "t_max", "points"]),
    (
        "compare",
        &[
            "offset",
            "n_periods",
            "convention",
            "atoms",
            "trials_per_point",
            "fit_periods",
            "compare_periods",
            "bob_fit_share",
            "expected_counts",
        ],
    ),
    ("ghz", &["sizes", "t_max", "points", "shots"]),
    ("output", &["dir"]),
];

fn parse_num<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?} as a number"))
}

fn finite(v: &str) -> Result<f64, String> {
    let x: f64 = parse_num(v)?;
    if !x.is_finite() {
        return Err(format!("{v} is not finite"));
    }
    Ok(x)
}

fn bounded(v: &str, lo: f64, hi: f64, rule: &str) -> Result<f64, String> {
    let x = finite(v)?;
    if !(lo..=hi).contains(&x) {
        return Err(format!("{x} out of range: must be {rule}"));
    }
    Ok(x)
}

fn positive(v: &str) -> Result<f64, String> {
    let x = finite(v)?;
    if x <= 0.0 {
        return Err(format!("{x} out of range: must be > 0"));
    }
    Ok(x)
}

fn probability(v: &str) -> Result<f64, String> {
    bounded(v, 0.0, 1.0, "in [0, 1]")
}

fn at_least<T: FromStr + PartialOrd + From<u8> + fmt::Display>(v: &str, min: u8) -> Result<T, String> {
    let x: T = parse_num(v)?;
    if x < T::from(min) {
        return Err(format!("{x} out of range: must be >= {min}"));
    }
    Ok(x)
}

fn boolean(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, found {v:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_normalized_text() {
        let mut cfg = ScenarioConfig::with_seed(7);
        cfg.scenario = Some(ScenarioKind::Ghz);
        cfg.compare.offset = 0.1 + 0.2;
        let text = cfg.normalized();
        let back = ScenarioConfig::parse(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.normalized(), text);
    }

    #[test]
    fn parses_sections_comments_and_overrides() {
        let text = "# demo\nseed = 3\n\n[channel]\neta_a = 0.5 # half\ntransfer = direct\n[ghz]\nsizes = 2, 5\n";
        let cfg = ScenarioConfig::parse(text).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.channel.eta_a, 0.5);
        assert_eq!(cfg.channel.transfer, TransferMode::Direct);
        assert_eq!(cfg.ghz.sizes, vec![2, 5]);
    }

    #[test]
    fn out_of_range_value_names_key_and_bound() {
        let err = ScenarioConfig::parse("seed = 1\n[channel]\neta_a = 1.2\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::Value {
                line: 3,
                key: "channel.eta_a".into(),
                message: "1.2 out of range: must be in [0, 1]".into()
            }
        );
        assert!(err.to_string().contains("line 3"));
    }

    #[test]
    fn missing_seed_is_an_error() {
        assert_eq!(
            ScenarioConfig::parse("[clock]\ngamma = 0.1\n").unwrap_err(),
            ConfigError::Missing("seed")
        );
    }

    #[test]
    fn structural_errors_are_line_anchored() {
        let cases = [
            ("seed = 1\n[nope]\n", 2),
            ("seed = 1\n[clock]\nfoo = 1\n", 3),
            ("seed = 1\nseed = 2\n", 2),
            ("seed = 1\n[clock]\ngamma\n", 3),
            ("seed = 1\n[clock\n", 2),
            ("seed = x\n", 1),
            ("seed = 1\n[clock]\n[clock]\n", 3),
            ("seed = 1\n[ghz]\nsizes = 2,13\n", 3),
            ("[clock]\nseed = 1\n", 2),
        ];
        for (text, line) in cases {
            let err = ScenarioConfig::parse(text).unwrap_err();
            let got = match err {
                ConfigError::Syntax { line, .. } | ConfigError::Value { line, .. } => line,
                other => panic!("{text:?}: {other:?}"),
            };
            assert_eq!(got, line, "{text:?}");
        }
    }

    #[test]
    fn field_moves_detuning_by_the_zeeman_shift() {
        let mut cfg = ScenarioConfig::with_seed(1);
        cfg.field.b = 1e-3;
        let clock = cfg.clock_config();
        assert!((clock.nu0() - (CS_CLOCK_HZ + 42_700.0)).abs() < 1e-6);
        assert!((clock.detuning() - (std::f64::consts::TAU - std::f64::consts::TAU * 42_700.0)).abs() < 1e-6);
    }
}
