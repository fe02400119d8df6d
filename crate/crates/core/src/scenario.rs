//! Batch scenarios behind the command-line runner.
//!
//! Each scenario writes `<name>_table.tsv` and `<name>_summary.txt` into the
//! output directory; `distribute` and `sync` also write the ensemble or run
//! in the text format of [`crate::format`]. Every file opens with `#` lines
//! carrying the seed and the normalized config, and nothing else in the
//! output depends on wall-clock time or the environment.

use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::atom::{bernoulli, clock_frequency, LevelScheme};
use crate::config::{ConfigError, ScenarioConfig, ScenarioKind};
use crate::estimation::{compare_clocks, fit_fringe, CompareError, ComparisonPlan, FitError, FringeDataset, FringePoint};
use crate::format::{ensemble_to_text, run_to_text};
use crate::link::{entangled_pair_state, generate_pairs, JointState};
use crate::protocol::{alice_start, ghz_distribute_and_read, Party};
use crate::quantum::ramsey_sequence;
use crate::rng::{SimRng, StreamSeed};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("degenerate run: {0}")]
    Degenerate(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("simulation error: {0}")]
    Simulation(String),
}

impl ScenarioError {
    /// Process exit status: 1 I/O, 2 config, 3 degenerate run, 4 fit
    /// failure, 5 internal simulation error.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Io { .. } => 1,
            ScenarioError::Config(_) => 2,
            ScenarioError::Degenerate(_) => 3,
            ScenarioError::Fit(_) => 4,
            ScenarioError::Simulation(_) => 5,
        }
    }
}

fn sim<E: std::fmt::Display>(e: E) -> ScenarioError {
    ScenarioError::Simulation(e.to_string())
}

/// Files written by one scenario run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioOutput {
    pub files: Vec<PathBuf>,
}

fn header(kind: ScenarioKind, cfg: &ScenarioConfig) -> String {
    let mut h = format!("# qclock {kind}\n# seed = {}\n# config:\n", cfg.seed);
    for line in cfg.normalized().lines() {
        if line.is_empty() {
            h.push_str("#\n");
        } else {
            let _ = writeln!(h, "#   {line}");
        }
    }
    h
}

struct Writer<'a> {
    dir: &'a Path,
    header: String,
    kind: ScenarioKind,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn write(&mut self, suffix: &str, body: &str) -> Result<(), ScenarioError> {
        let path = self.dir.join(format!("{}_{suffix}", self.kind));
        let mut text = String::with_capacity(self.header.len() + body.len());
        text.push_str(&self.header);
        text.push_str(body);
        std::fs::write(&path, text).map_err(|e| ScenarioError::Io {
            path: path.clone(),
            message: e.to_string(),
        })?;
        self.files.push(path);
        Ok(())
    }
}

/// Runs `kind` with `cfg`, writing into `cfg.output.dir`.
pub fn run_scenario(kind: ScenarioKind, cfg: &ScenarioConfig) -> Result<ScenarioOutput, ScenarioError> {
    if let Some(configured) = cfg.scenario {
        if configured != kind {
            return Err(ConfigError::ScenarioMismatch {
                config: configured,
                requested: kind,
            }
            .into());
        }
    }
    let dir = &cfg.output.dir;
    std::fs::create_dir_all(dir).map_err(|e| ScenarioError::Io {
        path: dir.clone(),
        message: e.to_string(),
    })?;
    let mut w = Writer {
        dir,
        header: header(kind, cfg),
        kind,
        files: Vec::new(),
    };
    let outcome = match kind {
        ScenarioKind::Ramsey => ramsey(cfg, &mut w),
        ScenarioKind::Distribute => distribute(cfg, &mut w),
        ScenarioKind::Sync => sync(cfg, &mut w),
        ScenarioKind::Compare => compare(cfg, &mut w),
        ScenarioKind::Ghz => ghz(cfg, &mut w),
    };
    outcome.map(|()| ScenarioOutput { files: w.files })
}

fn fringe_oracle(omega: f64, gamma: f64, t: f64) -> f64 {
    0.5 * (1.0 - (-gamma * t).exp() * (omega * t).cos())
}

fn validity_lines(s: &mut String, cfg: &ScenarioConfig) {
    let clock = cfg.clock_config();
    let v = clock.validity();
    let _ = writeln!(s, "clock_frequency_hz = {:?}", clock_frequency(&cfg.field_config()));
    let _ = writeln!(s, "detuning_rad_s = {:?}", clock.detuning());
    let _ = writeln!(s, "gamma_per_s = {:?}", clock.gamma());
    let _ = writeln!(s, "validity_ratio = {:?}", v.ratio);
    let _ = writeln!(s, "validity_warning = {}", v.warning);
}

fn ramsey(cfg: &ScenarioConfig, w: &mut Writer<'_>) -> Result<(), ScenarioError> {
    let clock = cfg.clock_config();
    let r = &cfg.ramsey;
    let mut rng = SimRng::substream(cfg.seed, "ramsey");
    let mut table = String::from("t\tp1_exact\tp1_oracle\tp1_sampled\tones\tshots\n");
    let mut max_dev: f64 = 0.0;
    let mut points = Vec::with_capacity(r.points);
    for k in 0..r.points {
        let t = r.t_max * k as f64 / (r.points - 1) as f64;
        let (_, p1) = ramsey_sequence(&clock, t, r.density).map_err(sim)?;
        let oracle = fringe_oracle(clock.detuning(), clock.gamma(), t);
        max_dev = max_dev.max((p1 - oracle).abs());
        let ones = (0..r.shots).filter(|_| bernoulli(p1, &mut rng)).count() as u64;
        let _ = writeln!(
            table,
            "{t:?}\t{p1:?}\t{oracle:?}\t{:?}\t{ones}\t{}",
            ones as f64 / r.shots as f64,
            r.shots
        );
        points.push(FringePoint {
            time: t,
            successes: ones as f64,
            trials: r.shots,
        });
    }
    let mut s = String::new();
    validity_lines(&mut s, cfg);
    let _ = writeln!(s, "points = {}", r.points);
    let _ = writeln!(s, "max_abs_exact_minus_oracle = {max_dev:?}");
    let hint = (clock.detuning() != 0.0).then(|| clock.detuning().abs());
    let fit = FringeDataset::new(points, hint)
        .map_err(sim)
        .and_then(|ds| fit_fringe(&ds).map_err(|e| ScenarioError::Fit(e.to_string())));
    match fit {
        Ok(f) => {
            let _ = writeln!(s, "fit_status = ok");
            let _ = writeln!(s, "omega_hat = {:?}", f.omega.value);
            let _ = writeln!(s, "omega_se = {:?}", f.omega.std_error);
            let _ = writeln!(s, "gamma_hat = {:?}", f.gamma.value);
            let _ = writeln!(s, "gamma_se = {:?}", f.gamma.std_error);
            let _ = writeln!(s, "fit_iterations = {}", f.iterations);
        }
        Err(e) => {
            let _ = writeln!(s, "fit_status = unavailable ({e})");
        }
    }
    w.write("table.tsv", &table)?;
    w.write("summary.txt", &s)
}

fn distribute(cfg: &ScenarioConfig, w: &mut Writer<'_>) -> Result<(), ScenarioError> {
    let d = &cfg.distribute;
    let channel = cfg.channel_model();
    let options = cfg.link_options();
    let mut ens = generate_pairs(d.pairs, &channel, &options, StreamSeed::derive(cfg.seed, "link", 0)).map_err(sim)?;
    if d.storage_time > 0.0 {
        ens = ens.store(d.storage_gamma, d.storage_time).map_err(sim)?;
    }
    let target = entangled_pair_state(&LevelScheme::cesium(), &options);
    let mut table = String::from("label\tkept\tstate\tfidelity\n");
    let mut fid_sum = 0.0;
    for r in ens.records() {
        let f = r.joint_state.fidelity(&target).map_err(sim)?;
        if r.herald_kept {
            fid_sum += f;
        }
        let kind = match r.joint_state {
            JointState::Pure(_) => "pure",
            JointState::Mixed(_) => "mixed",
        };
        let _ = writeln!(table, "{}\t{}\t{kind}\t{f:?}", r.label, u8::from(r.herald_kept));
    }
    let kept = ens.kept_count();
    let mut s = String::new();
    let _ = writeln!(s, "pairs = {}", ens.len());
    let _ = writeln!(s, "kept = {kept}");
    let _ = writeln!(s, "yield = {:?}", ens.yield_fraction());
    let _ = writeln!(s, "expected_yield = {:?}", channel.keep_probability(options.transfer));
    let _ = writeln!(s, "expected_kept_pair_purity = {:?}", channel.kept_pair_purity(options.transfer));
    if kept > 0 {
        let _ = writeln!(s, "mean_kept_fidelity = {:?}", fid_sum / kept as f64);
    }
    w.write("table.tsv", &table)?;
    w.write("summary.txt", &s)?;
    w.write("ensemble.txt", &ensemble_to_text(&ens))?;
    if kept == 0 {
        return Err(ScenarioError::Degenerate("no pair passed the herald check".into()));
    }
    Ok(())
}

fn sync(cfg: &ScenarioConfig, w: &mut Writer<'_>) -> Result<(), ScenarioError> {
    let sc = &cfg.sync;
    let clock = cfg.clock_config();
    let ens = generate_pairs(
        sc.pairs,
        &cfg.channel_model(),
        &cfg.link_options(),
        StreamSeed::derive(cfg.seed, "link", 0),
    )
    .map_err(sim)?;
    let mut start_rng = SimRng::substream(cfg.seed, "start");
    let mut run = alice_start(ens, sc.t0, &mut start_rng).map_err(sim)?;
    let sent_at = sc.t0 + sc.message_delay;
    let msg = run.send_labels(run.alice_keeps(), sent_at);
    let selection = run.bob_select(&msg).map_err(sim)?;
    let alice_labels: Vec<u64> = run.alice_selection().iter().copied().collect();
    let bob_labels: Vec<u64> = selection.labels.iter().copied().collect();
    let type_i = run.type_i_labels().len();
    let type_ii = run.type_ii_labels().len();
    let kept = type_i + type_ii;

    let mut readout_rng = SimRng::substream(cfg.seed, "readout");
    let mut table = String::from("time\tparty\ttrials\tones\tp1_sampled\tp1_exact\tp1_oracle\n");
    let mut max_diff: f64 = 0.0;
    let parties = [(Party::alice(clock), &alice_labels), (Party::bob(clock), &bob_labels)];
    if !selection.degenerate && !alice_labels.is_empty() {
        for k in 0..sc.points {
            let time = sc.t0 + sc.t_max * (k + 1) as f64 / sc.points as f64;
            let oracle = fringe_oracle(clock.detuning(), clock.gamma(), time - sc.t0);
            let mut exact = [0.0; 2];
            for (i, (party, labels)) in parties.iter().enumerate() {
                let chunk = &labels[k * labels.len() / sc.points..(k + 1) * labels.len() / sc.points];
                exact[i] = run.exact_p1(party, labels[0], time).map_err(sim)?;
                if chunk.is_empty() {
                    continue;
                }
                let smp = run.readout(party, chunk, time, &mut readout_rng).map_err(sim)?;
                let _ = writeln!(
                    table,
                    "{time:?}\t{}\t{}\t{}\t{:?}\t{:?}\t{oracle:?}",
                    party.name,
                    smp.trials,
                    smp.ones,
                    smp.ones as f64 / smp.trials as f64,
                    smp.exact_p1
                );
            }
            max_diff = max_diff.max((exact[0] - exact[1]).abs());
        }
    }
    let mut s = String::new();
    validity_lines(&mut s, cfg);
    let _ = writeln!(s, "attempts = {}", run.ensemble().len());
    let _ = writeln!(s, "kept = {kept}");
    let _ = writeln!(s, "type_i = {type_i}");
    let _ = writeln!(s, "type_ii = {type_ii}");
    if kept > 0 {
        let frac = type_i as f64 / kept as f64;
        let _ = writeln!(s, "type_i_fraction = {frac:?}");
        let _ = writeln!(s, "type_i_z_score = {:?}", (frac - 0.5) / (0.25 / kept as f64).sqrt());
    }
    let _ = writeln!(s, "alice_keeps = {}", run.alice_keeps());
    let _ = writeln!(s, "t0 = {:?}", sc.t0);
    let _ = writeln!(s, "message_sent_at = {sent_at:?}");
    let _ = writeln!(s, "alice_atoms = {}", alice_labels.len());
    let _ = writeln!(s, "bob_atoms = {}", bob_labels.len());
    let _ = writeln!(s, "max_abs_alice_minus_bob_exact_p1 = {max_diff:?}");
    w.write("table.tsv", &table)?;
    w.write("summary.txt", &s)?;
    w.write("run.txt", &run_to_text(&run))?;
    if selection.degenerate || alice_labels.is_empty() {
        return Err(ScenarioError::Degenerate(format!(
            "empty subensemble (alice {}, bob {})",
            alice_labels.len(),
            bob_labels.len()
        )));
    }
    Ok(())
}

fn compare(cfg: &ScenarioConfig, w: &mut Writer<'_>) -> Result<(), ScenarioError> {
    let c = &cfg.compare;
    let alice_clock = cfg.clock_config();
    let bob_clock = alice_clock
        .with_detuning(alice_clock.detuning() * (1.0 + c.offset))
        .map_err(sim)?;
    let channel = cfg.channel_model();
    let options = cfg.link_options();
    let gen = |name: &str| generate_pairs(c.atoms, &channel, &options, StreamSeed::derive(cfg.seed, name, 0)).map_err(sim);
    let first = gen("first")?;
    let second = gen("second")?;
    let plan = ComparisonPlan {
        n_periods: c.n_periods,
        convention: c.convention,
        trials_per_point: c.trials_per_point,
        fit_periods: c.fit_periods,
        compare_periods: c.compare_periods,
        bob_fit_share: c.bob_fit_share,
        expected_counts: c.expected_counts,
    };
    let mut rng = SimRng::substream(cfg.seed, "compare");
    let res = compare_clocks(first, second, &alice_clock, &bob_clock, &plan, &mut rng).map_err(|e| match e {
        CompareError::EmptySubensemble(_) => ScenarioError::Degenerate(e.to_string()),
        CompareError::Fit {
            source: FitError::Degenerate,
            ..
        } => ScenarioError::Degenerate(e.to_string()),
        CompareError::Fit { .. } => ScenarioError::Fit(e.to_string()),
        CompareError::Plan(_) => ScenarioError::Degenerate(e.to_string()),
        other => sim(other),
    })?;
    let mut table = String::from("dataset\ttime\tsuccesses\ttrials\tfraction\n");
    for (name, ds) in [
        ("alice_fit", &res.data.alice_fit),
        ("bob_fit", &res.data.bob_fit),
        ("bob_first", &res.data.bob_first),
        ("bob_second", &res.data.bob_second),
    ] {
        for p in ds.points() {
            let _ = writeln!(table, "{name}\t{:?}\t{:?}\t{}\t{:?}", p.time, p.successes, p.trials, p.fraction());
        }
    }
    let truth = bob_clock.detuning() / alice_clock.detuning() - 1.0;
    let mut s = String::new();
    validity_lines(&mut s, cfg);
    let _ = writeln!(s, "omega_a_hat = {:?}", res.omega_a.value);
    let _ = writeln!(s, "omega_a_se = {:?}", res.omega_a.std_error);
    let _ = writeln!(s, "omega_b_hat = {:?}", res.omega_b.value);
    let _ = writeln!(s, "omega_b_se = {:?}", res.omega_b.std_error);
    let _ = writeln!(s, "n_periods = {}", res.n_periods);
    let _ = writeln!(s, "convention = {}", res.convention);
    let _ = writeln!(s, "theta = {:?}", res.theta);
    let _ = writeln!(s, "t1 = {:?}", res.t1);
    let _ = writeln!(s, "bob_phase = {:?}", res.bob_phase.value);
    let _ = writeln!(s, "bob_phase_se = {:?}", res.bob_phase.std_error);
    let _ = writeln!(s, "phase_ambiguous = {}", res.phase_ambiguous);
    let _ = writeln!(s, "fractional_offset = {:?}", res.fractional_offset.value);
    let _ = writeln!(s, "fractional_offset_se = {:?}", res.fractional_offset.std_error);
    let _ = writeln!(s, "ci_3sigma_low = {:?}", res.interval.0);
    let _ = writeln!(s, "ci_3sigma_high = {:?}", res.interval.1);
    let _ = writeln!(s, "injected_offset = {truth:?}");
    let _ = writeln!(s, "injected_within_ci = {}", res.fractional_offset.covers(truth, 3.0));
    w.write("table.tsv", &table)?;
    w.write("summary.txt", &s)
}

fn ghz(cfg: &ScenarioConfig, w: &mut Writer<'_>) -> Result<(), ScenarioError> {
    let g = &cfg.ghz;
    let clock = cfg.clock_config();
    let channel = cfg.channel_model();
    let options = cfg.link_options();
    let mut table = String::from("n\tt\tparity_exact\tparity_oracle\tparity_sampled\tkept_shots\tattempts\n");
    let mut s = String::new();
    validity_lines(&mut s, cfg);
    for &n in &g.sizes {
        let mut rng = SimRng::from_stream(StreamSeed::derive(cfg.seed, "ghz", n as u64));
        let mut max_dev: f64 = 0.0;
        let mut kept = 0u64;
        for k in 0..g.points {
            let t = g.t_max * k as f64 / (g.points - 1) as f64;
            let r = ghz_distribute_and_read(n, &channel, &options, &clock, t, g.shots, &mut rng).map_err(sim)?;
            let oracle = (-(n as f64) * clock.gamma() * t).exp() * (n as f64 * clock.detuning() * t).cos();
            max_dev = max_dev.max((r.exact_parity - oracle).abs());
            kept += r.kept_shots;
            let sampled = r.sampled_parity.map_or_else(|| "nan".to_string(), |p| format!("{p:?}"));
            let _ = writeln!(
                table,
                "{n}\t{t:?}\t{:?}\t{oracle:?}\t{sampled}\t{}\t{}",
                r.exact_parity, r.kept_shots, r.attempts
            );
        }
        let period = if clock.detuning() == 0.0 {
            f64::INFINITY
        } else {
            TAU / (n as f64 * clock.detuning().abs())
        };
        let _ = writeln!(s, "n{n}_fringe_period = {period:?}");
        let _ = writeln!(s, "n{n}_max_abs_exact_minus_oracle = {max_dev:?}");
        let _ = writeln!(s, "n{n}_kept_shots = {kept}");
    }
    w.write("table.tsv", &table)?;
    w.write("summary.txt", &s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_in(dir: &Path) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::with_seed(11);
        cfg.output.dir = dir.to_path_buf();
        cfg.sync.pairs = 400;
        cfg.compare.atoms = 20_000;
        cfg.distribute.pairs = 50;
        cfg.ghz.shots = 50;
        cfg.ghz.points = 10;
        cfg
    }

    #[test]
    fn every_scenario_runs_and_embeds_seed() {
        let dir = std::env::temp_dir().join(format!("qclock-scn-{}", std::process::id()));
        let cfg = cfg_in(&dir);
        for kind in ScenarioKind::ALL {
            let out = run_scenario(kind, &cfg).unwrap_or_else(|e| panic!("{kind}: {e}"));
            assert!(out.files.len() >= 2);
            for f in &out.files {
                let text = std::fs::read_to_string(f).unwrap();
                assert!(text.starts_with(&format!("# qclock {kind}\n# seed = 11\n")));
            }
        }
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn zero_yield_distribution_is_degenerate() {
        let dir = std::env::temp_dir().join(format!("qclock-deg-{}", std::process::id()));
        let mut cfg = cfg_in(&dir);
        cfg.channel.eta_a = 0.0;
        let err = run_scenario(ScenarioKind::Distribute, &cfg).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn mismatched_scenario_is_a_config_error() {
        let mut cfg = ScenarioConfig::with_seed(1);
        cfg.scenario = Some(ScenarioKind::Ghz);
        assert_eq!(run_scenario(ScenarioKind::Ramsey, &cfg).unwrap_err().exit_code(), 2);
    }
}
