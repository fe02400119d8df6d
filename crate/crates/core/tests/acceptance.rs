//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::f64::consts::{PI, TAU};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use qclock::atom::{clock_frequency, FieldConfig, TransferMode, CS_CLOCK_HZ};
use qclock::estimation::{compare_clocks, fit_fringe, ComparisonPlan, FringeDataset, FringePoint};
use qclock::link::{generate_pairs, ChannelModel, LinkOptions, TypeTag};
use qclock::protocol::{alice_start, ghz_distribute_and_read, Party};
use qclock::quantum::{ramsey_sequence, ClockConfig, StateVector};
use qclock::rng::{SimRng, StreamSeed};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn clock(detuning: f64) -> ClockConfig {
    ClockConfig::new(CS_CLOCK_HZ, detuning, 1e4, 0.0).unwrap()
}

fn ramsey_oracle() -> Outcome {
    let omega = TAU * 1.3;
    let c = clock(omega);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let phase = 4.0 * PI * k as f64 / 999.0;
        let t = phase / omega;
        let oracle = 0.5 * (1.0 - phase.cos());
        for density in [false, true] {
            let (p0, p1) = ramsey_sequence(&c, t, density).unwrap();
            worst = worst.max((p1 - oracle).abs()).max((p0 - (1.0 - oracle)).abs());
        }
    }
    outcome(worst <= 1e-10, format!("max |P - oracle| = {worst:.3e}"))
}

fn singlet_stationarity() -> Outcome {
    let mut rng = SimRng::seeded(2);
    let singlet = StateVector::singlet();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let omega = rng.random_range(-1e3..1e3);
        let t = rng.random_range(0.0..1e3);
        let f = singlet.clone().evolve_all(omega, t).unwrap().fidelity(&singlet).unwrap();
        worst = worst.max((f - 1.0).abs());
    }
    outcome(worst <= 1e-12, format!("max |F - 1| = {worst:.3e}"))
}

fn collapse_statistics() -> Outcome {
    let n = 100_000u64;
    let ens = generate_pairs(n, &ChannelModel::ideal(), &LinkOptions::default(), StreamSeed::derive(3, "link", 0)).unwrap();
    let run = alice_start(ens, 0.0, &mut SimRng::substream(3, "start")).unwrap();
    let type_i = run.type_i_labels().len() as f64;
    let type_ii = run.type_ii_labels().len() as f64;
    let frac = type_i / n as f64;
    let expected = n as f64 / 2.0;
    let chi2 = (type_i - expected).powi(2) / expected + (type_ii - expected).powi(2) / expected;
    let p = 1.0 - ChiSquared::new(1.0).unwrap().cdf(chi2);
    let pass = (frac - 0.5).abs() <= 0.0047 && p > 0.001 && type_i + type_ii == n as f64;
    outcome(pass, format!("type-I fraction {frac:.5}, chi2 {chi2:.3}, p {p:.3}"))
}

fn phase_agreement() -> Outcome {
    let c = clock(TAU * 0.7);
    let mut rng = SimRng::seeded(4);
    let times: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..20.0)).collect();
    let mut worst: f64 = 0.0;
    let mut latency_worst: f64 = 0.0;
    let mut curves = Vec::new();
    for delay in [1.0, 1e3] {
        let ens = generate_pairs(200, &ChannelModel::ideal(), &LinkOptions::default(), StreamSeed::derive(4, "link", 0)).unwrap();
        let mut run = alice_start(ens, 0.0, &mut SimRng::substream(4, "start")).unwrap();
        let msg = run.send_labels(TypeTag::I, delay);
        run.bob_select(&msg).unwrap();
        let a = *run.alice_selection().iter().next().unwrap();
        let b = *run.bob_selection().unwrap().iter().find(|&&l| run.ensemble().get(l).unwrap().type_tag == Some(TypeTag::II)).unwrap();
        let mut curve = Vec::new();
        for &t in &times {
            let pa = run.exact_p1(&Party::alice(c), a, t).unwrap();
            let pb = run.exact_p1(&Party::bob(c), b, t).unwrap();
            worst = worst.max((pa - pb).abs());
            curve.push((pa, pb));
        }
        curves.push(curve);
    }
    for (x, y) in curves[0].iter().zip(&curves[1]) {
        latency_worst = latency_worst.max((x.0 - y.0).abs()).max((x.1 - y.1).abs());
    }
    outcome(
        worst <= 1e-12 && latency_worst == 0.0,
        format!("max |P_A - P_B| = {worst:.3e}, latency change {latency_worst:.1e}"),
    )
}

fn heralded_yield() -> Outcome {
    let n = 100_000u64;
    let ch = ChannelModel::new(0.5, 0.4, 0.0, 0.0).unwrap();
    let opts = LinkOptions {
        transfer: TransferMode::Heralded,
        ..LinkOptions::default()
    };
    let ens = generate_pairs(n, &ch, &opts, StreamSeed::derive(5, "link", 0)).unwrap();
    let frac = ens.yield_fraction();
    let sigma = (0.2f64 * 0.8 / n as f64).sqrt();
    outcome(
        (frac - 0.2).abs() <= 3.0 * sigma,
        format!("kept fraction {frac:.5} vs 0.20 ± {:.5}", 3.0 * sigma),
    )
}

fn zeeman_formula() -> Outcome {
    let f = |b: f64| clock_frequency(&FieldConfig::cesium(b).unwrap());
    let at_zero = f(0.0) == 9_192_631_770.0;
    let mut worst: f64 = 0.0;
    for b in [1e-3, 5e-3, 1e-2] {
        let lhs = f(2.0 * b) - CS_CLOCK_HZ;
        let rhs = 4.0 * (f(b) - CS_CLOCK_HZ);
        worst = worst.max(((lhs - rhs) / rhs).abs());
    }
    outcome(at_zero && worst <= 1e-9, format!("f(0) exact: {at_zero}, max relative error {worst:.3e}"))
}

fn frequency_comparison() -> Outcome {
    let delta = 1e-3;
    let a_clock = clock(TAU);
    let b_clock = a_clock.with_detuning(TAU * (1.0 + delta)).unwrap();
    let truth = b_clock.detuning() / a_clock.detuning() - 1.0;
    let plan = ComparisonPlan {
        n_periods: 10,
        trials_per_point: 1000,
        ..ComparisonPlan::default()
    };
    let reps = 500u64;
    let mut covered = 0;
    let mut failures = 0;
    for seed in 0..reps {
        let gen = |name| generate_pairs(100_000, &ChannelModel::ideal(), &LinkOptions::default(), StreamSeed::derive(seed, name, 0)).unwrap();
        let mut rng = SimRng::substream(seed, "compare");
        match compare_clocks(gen("first"), gen("second"), &a_clock, &b_clock, &plan, &mut rng) {
            Ok(r) if r.fractional_offset.covers(truth, 3.0) => covered += 1,
            Ok(_) => {}
            Err(_) => failures += 1,
        }
    }
    let rate = covered as f64 / reps as f64;
    outcome(
        rate >= 0.99,
        format!("coverage {covered}/{reps} = {:.1}% ({failures} errors)", 100.0 * rate),
    )
}

fn fit_recovery() -> Outcome {
    let omega = TAU * 5.0;
    let times: Vec<f64> = (1..=50).map(|i| i as f64 / 50.0).collect();
    let mut worst_omega: f64 = 0.0;
    let mut worst_gamma: f64 = 0.0;
    for gamma in [0.0, 0.3, 2.0] {
        let pts = times
            .iter()
            .map(|&t| FringePoint {
                time: t,
                successes: 1000.0 * 0.5 * (1.0 - (-gamma * t).exp() * (omega * t).cos()),
                trials: 1000,
            })
            .collect();
        match fit_fringe(&FringeDataset::new(pts, None).unwrap()) {
            Ok(f) => {
                worst_omega = worst_omega.max((f.omega.value - omega).abs() / omega);
                worst_gamma = worst_gamma.max((f.gamma.value - gamma).abs());
            }
            Err(e) => return outcome(false, format!("fit failed at gamma {gamma}: {e}")),
        }
    }
    outcome(
        worst_omega <= 1e-6 && worst_gamma <= 1e-6,
        format!("Ω rel err {worst_omega:.3e}, γ abs err {worst_gamma:.3e}"),
    )
}

fn ghz_fringe() -> Outcome {
    let omega = TAU * 0.8;
    let c = clock(omega);
    let ch = ChannelModel::ideal();
    let opts = LinkOptions::default();
    let mut rng = SimRng::seeded(9);
    let mut worst: f64 = 0.0;
    let mut period_worst: f64 = 0.0;
    for n in [2usize, 3, 4] {
        let period = TAU / (n as f64 * omega);
        for k in 0..100 {
            let t = 2.0 * TAU / omega * k as f64 / 99.0;
            let p = ghz_distribute_and_read(n, &ch, &opts, &c, t, 0, &mut rng).unwrap().exact_parity;
            worst = worst.max((p - (n as f64 * omega * t).cos()).abs());
            let shifted = ghz_distribute_and_read(n, &ch, &opts, &c, t + period, 0, &mut rng).unwrap().exact_parity;
            period_worst = period_worst.max((shifted - p).abs());
        }
        let half = ghz_distribute_and_read(n, &ch, &opts, &c, period / 2.0, 0, &mut rng).unwrap().exact_parity;
        period_worst = period_worst.max((half + 1.0).abs());
    }
    outcome(
        worst <= 1e-10 && period_worst <= 1e-10,
        format!("max |parity - cos nΩt| = {worst:.3e}, period check {period_worst:.3e}"),
    )
}

fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("scenario.conf");
    std::fs::write(
        &config,
        "seed = 2024\n[channel]\neta_a = 0.8\neta_b = 0.7\np_miss = 0.05\np_false = 0.01\n\
         [distribute]\npairs = 300\nstorage_time = 2.0\nstorage_gamma = 0.1\n\
         [sync]\npairs = 2000\n[compare]\natoms = 20000\n[ghz]\nshots = 200\npoints = 20\n",
    )
    .unwrap();
    let bin = env!("CARGO_BIN_EXE_qclock");
    let mut mismatched = Vec::new();
    for scenario in ["ramsey", "distribute", "sync", "compare", "ghz"] {
        let mut runs = Vec::new();
        // Same output path both times: the path is part of the config echo.
        let out = tmp.path().join(scenario);
        for _ in 0..2 {
            let _ = std::fs::remove_dir_all(&out);
            let status = Command::new(bin)
                .args([scenario, config.to_str().unwrap(), "--out", out.to_str().unwrap()])
                .output()
                .unwrap()
                .status;
            if !status.success() {
                return outcome(false, format!("{scenario} exited with {status}"));
            }
            runs.push(read_dir(&out));
        }
        if runs[0].is_empty() || runs[0] != runs[1] {
            mismatched.push(scenario);
        }
    }
    outcome(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            "all five scenarios byte-identical".to_string()
        } else {
            format!("differing output: {}", mismatched.join(", "))
        },
    )
}

fn main() {
    type Criterion = (&'static str, Duration, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("Ramsey oracle equivalence", Duration::from_secs(1), ramsey_oracle),
        ("Singlet stationarity", Duration::from_secs(1), singlet_stationarity),
        ("Collapse statistics", Duration::from_secs(10), collapse_statistics),
        ("Phase agreement", Duration::from_secs(1), phase_agreement),
        ("Heralded yield", Duration::from_secs(10), heralded_yield),
        ("Zeeman formula", Duration::from_secs(1), zeeman_formula),
        ("Frequency comparison", Duration::from_secs(120), frequency_comparison),
        ("Fit recovery", Duration::from_secs(1), fit_recovery),
        ("GHZ fringe", Duration::from_secs(1), ghz_fringe),
        ("Determinism", Duration::from_secs(600), determinism),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= *limit;
        let pass = result.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {name}: {} [{:.3} s, limit {} s{}]",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail,
            elapsed.as_secs_f64(),
            limit.as_secs(),
            if in_time { "" } else { ", over time" }
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
