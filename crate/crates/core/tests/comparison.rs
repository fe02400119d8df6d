use qclock::atom::CS_CLOCK_HZ;
use qclock::estimation::{compare_clocks, ComparisonPlan, ComparisonResult};
use qclock::link::{generate_pairs, ChannelModel, LinkOptions};
use qclock::quantum::ClockConfig;
use qclock::rng::{SimRng, StreamSeed};

const OMEGA: f64 = std::f64::consts::TAU;

fn run(seed: u64, offset: f64, plan: &ComparisonPlan) -> ComparisonResult {
    let ensemble = |name| {
        generate_pairs(100_000, &ChannelModel::ideal(), &LinkOptions::default(), StreamSeed::derive(seed, name, 0)).unwrap()
    };
    let alice = ClockConfig::new(CS_CLOCK_HZ, OMEGA, 1e4, 0.0).unwrap();
    let bob = ClockConfig::new(CS_CLOCK_HZ, OMEGA * (1.0 + offset), 1e4, 0.0).unwrap();
    let mut rng = SimRng::substream(seed, "compare");
    compare_clocks(ensemble("first"), ensemble("second"), &alice, &bob, plan, &mut rng).unwrap()
}

#[test]
fn offset_is_linear_in_the_injected_detuning() {
    let plan = ComparisonPlan::default();
    let deltas = [1e-4, 3e-4, 1e-3];
    let results: Vec<ComparisonResult> = deltas.iter().map(|&d| run(42, d, &plan)).collect();
    // least-squares line through the three points, weighted by their errors
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (d, r) in deltas.iter().zip(&results) {
        let w = r.fractional_offset.std_error.powi(-2);
        let y = r.fractional_offset.value;
        sw += w;
        sx += w * d;
        sy += w * y;
        sxx += w * d * d;
        sxy += w * d * y;
    }
    let slope = (sw * sxy - sx * sy) / (sw * sxx - sx * sx);
    let intercept = (sy - slope * sx) / sw;
    for (d, r) in deltas.iter().zip(&results) {
        let line = intercept + slope * d;
        assert!(
            r.fractional_offset.covers(line, 3.0),
            "δ = {d}: offset {} ± {} off the line {line}",
            r.fractional_offset.value,
            r.fractional_offset.std_error
        );
        assert!(r.fractional_offset.covers(*d, 3.0));
    }
}

#[test]
fn offset_error_shrinks_with_baseline() {
    let mut previous = f64::INFINITY;
    for n in [10, 100, 1000] {
        let plan = ComparisonPlan { n_periods: n, ..ComparisonPlan::default() };
        let r = run(7, 3e-4, &plan);
        let sigma = r.fractional_offset.std_error;
        assert!(sigma < previous, "n = {n}: σ = {sigma} not below {previous}");
        assert!(r.fractional_offset.covers(3e-4, 3.0), "n = {n}");
        previous = sigma;
    }
}
