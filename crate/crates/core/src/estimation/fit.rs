//! Weighted least-squares fits of Ramsey fringes.
//!
//! Model for a clock started at `t = 0`: `P1(t) = (1 − e^(−γt)·cos Ωt)/2`.
//! Points are weighted by their binomial variance `p(1−p)/trials`,
//! evaluated at the current model value and floored at `1/(4·trials)` on
//! `p(1−p)`. Weights are refreshed from the model for the first
//! [`WEIGHT_REFRESHES`] iterations and then held fixed: near fringe minima
//! `p` is small and the weights are so sensitive to it that continued
//! refreshing can settle into a slowly decaying oscillation.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};

use super::{Estimate, FitError, FringeDataset};

/// Iteration cap for the damped Gauss–Newton loop.
pub const MAX_ITERATIONS: usize = 100;
/// Convergence threshold on the relative parameter step.
pub const STEP_TOLERANCE: f64 = 1e-10;

/// Iterations during which the weights follow the model.
pub const WEIGHT_REFRESHES: usize = 10;

const MIN_POINTS: usize = 5;
const MAX_HALVINGS: usize = 40;
const SCAN_OVERSAMPLE: f64 = 10.0;
const SCAN_CANDIDATES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeFit {
    /// Fringe angular frequency `|Ω|`, rad/s.
    pub omega: Estimate,
    /// Contrast decay rate, 1/s.
    pub gamma: Estimate,
    /// `Σ w·r²` at the optimum.
    pub chi_square: f64,
    /// Unweighted `Σ r²` in probability units.
    pub residual_ss: f64,
    pub iterations: usize,
}

/// Joint fit of two clocks read out on the same oscillator, the first one
/// started `age` seconds before the second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseFit {
    pub omega: Estimate,
    /// Phase lead of the first clock over the second, wrapped to `[0, 2π)`.
    pub phase: Estimate,
    pub gamma: Estimate,
    pub chi_square: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Obs {
    series: usize,
    time: f64,
    y: f64,
    trials: f64,
}

struct Solution {
    params: Vec<f64>,
    covariance: DMatrix<f64>,
    chi_square: f64,
    residual_ss: f64,
    iterations: usize,
}

fn weight(p_model: f64, trials: f64) -> f64 {
    let p = p_model.clamp(0.0, 1.0);
    let var = (p * (1.0 - p)).max(0.25 / trials) / trials;
    1.0 / var
}

/// Damped Gauss–Newton with step halving. `model` returns the predicted
/// probability and writes its parameter gradient into the slice.
fn gauss_newton<F>(obs: &[Obs], init: Vec<f64>, model: F) -> Result<Solution, FitError>
where
    F: Fn(&Obs, &[f64], &mut [f64]) -> f64,
{
    let k = init.len();
    let mut params = init;
    let mut grad = vec![0.0; k];
    let weighted_ss = |params: &[f64], weights: &[f64], grad: &mut [f64]| -> f64 {
        obs.iter()
            .zip(weights)
            .map(|(o, w)| {
                let r = o.y - model(o, params, grad);
                w * r * r
            })
            .sum()
    };
    let mut weights = vec![0.0; obs.len()];
    for iteration in 1..=MAX_ITERATIONS {
        let mut jtj = DMatrix::<f64>::zeros(k, k);
        let mut jtr = DVector::<f64>::zeros(k);
        let mut current = 0.0;
        for (o, w) in obs.iter().zip(weights.iter_mut()) {
            let m = model(o, &params, &mut grad);
            if iteration <= WEIGHT_REFRESHES {
                *w = weight(m, o.trials);
            }
            let w = *w;
            let r = o.y - m;
            current += w * r * r;
            for a in 0..k {
                jtr[a] += w * grad[a] * r;
                for b in 0..k {
                    jtj[(a, b)] += w * grad[a] * grad[b];
                }
            }
        }
        let step = jtj.clone().cholesky().ok_or(FitError::Degenerate)?.solve(&jtr);
        if step.iter().any(|s| !s.is_finite()) {
            return Err(FitError::Degenerate);
        }
        let scale = params.iter().map(|p| p.abs()).fold(0.0, f64::max).max(1e-12);
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p + lambda * s).collect();
            let ss = weighted_ss(&trial, &weights, &mut grad);
            if ss.is_finite() && ss <= current {
                accepted = Some(trial);
                break;
            }
            lambda *= 0.5;
        }
        let rel_step = lambda * step.amax() / scale;
        match accepted {
            Some(next) => params = next,
            // No downhill step left at machine precision: at the minimum.
            None => return finish(obs, params, &weights, &model, iteration),
        }
        if rel_step < STEP_TOLERANCE {
            return finish(obs, params, &weights, &model, iteration);
        }
    }
    Err(FitError::NoConvergence(MAX_ITERATIONS))
}

fn finish<F>(obs: &[Obs], params: Vec<f64>, weights: &[f64], model: &F, iterations: usize) -> Result<Solution, FitError>
where
    F: Fn(&Obs, &[f64], &mut [f64]) -> f64,
{
    let k = params.len();
    let mut grad = vec![0.0; k];
    let mut jtj = DMatrix::<f64>::zeros(k, k);
    let mut chi_square = 0.0;
    let mut residual_ss = 0.0;
    for (o, &w) in obs.iter().zip(weights) {
        let m = model(o, &params, &mut grad);
        let r = o.y - m;
        chi_square += w * r * r;
        residual_ss += r * r;
        for a in 0..k {
            for b in 0..k {
                jtj[(a, b)] += w * grad[a] * grad[b];
            }
        }
    }
    let covariance = jtj.cholesky().ok_or(FitError::Degenerate)?.inverse();
    if covariance.iter().any(|c| !c.is_finite()) {
        return Err(FitError::Degenerate);
    }
    Ok(Solution {
        params,
        covariance,
        chi_square,
        residual_ss,
        iterations,
    })
}

/// `(1 − e^(−γ·age)·cos(Ωτ + φ))/2` and its gradient in `(Ω, φ, γ)`.
fn fringe(tau: f64, age: f64, omega: f64, phase: f64, gamma: f64, grad: [&mut f64; 3]) -> f64 {
    let env = (-gamma * age).exp();
    let (s, c) = (omega * tau + phase).sin_cos();
    *grad[0] = 0.5 * env * s * tau;
    *grad[1] = 0.5 * env * s;
    *grad[2] = 0.5 * age * env * c;
    0.5 * (1.0 - env * c)
}

fn single_model(o: &Obs, p: &[f64], grad: &mut [f64]) -> f64 {
    let (mut g_omega, mut g_phase, mut g_gamma) = (0.0, 0.0, 0.0);
    let m = fringe(o.time, o.time, p[0], 0.0, p[1], [&mut g_omega, &mut g_phase, &mut g_gamma]);
    grad[0] = g_omega;
    grad[1] = g_gamma;
    m
}

/// Frequencies of the strongest local maxima of the periodogram of the
/// mean-subtracted data.
fn spectral_candidates(obs: &[Obs], lo: f64, hi: f64, step: f64) -> Vec<(f64, f64)> {
    let mean = obs.iter().map(|o| o.y).sum::<f64>() / obs.len() as f64;
    let power = |omega: f64| {
        let (re, im) = obs.iter().fold((0.0, 0.0), |(re, im), o| {
            let (s, c) = (omega * o.time).sin_cos();
            (re + (o.y - mean) * c, im - (o.y - mean) * s)
        });
        re * re + im * im
    };
    let n = ((hi - lo) / step).ceil().max(1.0) as usize;
    let grid: Vec<(f64, f64)> = (0..=n)
        .map(|i| {
            let w = lo + (hi - lo) * i as f64 / n as f64;
            (w, power(w))
        })
        .collect();
    let mut peaks: Vec<(f64, f64)> = (0..grid.len())
        .filter(|&i| {
            let left = if i == 0 { f64::NEG_INFINITY } else { grid[i - 1].1 };
            let right = grid.get(i + 1).map_or(f64::NEG_INFINITY, |g| g.1);
            grid[i].1 >= left && grid[i].1 >= right
        })
        .map(|i| grid[i])
        .collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    peaks.truncate(SCAN_CANDIDATES);
    peaks
}

/// Fits `(Ω, γ)` to a single-clock fringe.
///
/// Starts from the dominant spectral peaks (within ±50% of the dataset's
/// clock hint when it has one) and keeps the best converged solution.
/// `Ω` is reported as a magnitude; the fringe does not carry its sign.
pub fn fit_fringe(data: &FringeDataset) -> Result<FringeFit, FitError> {
    let pts = data.points();
    if pts.len() < MIN_POINTS {
        return Err(FitError::TooFewPoints {
            needed: MIN_POINTS,
            got: pts.len(),
        });
    }
    let obs: Vec<Obs> = pts
        .iter()
        .map(|p| Obs {
            series: 0,
            time: p.time,
            y: p.fraction(),
            trials: p.trials as f64,
        })
        .collect();
    let first = pts[0].time;
    let last = pts[pts.len() - 1].time;
    let span = last - first;
    if let Some(h) = data.clock_hint() {
        let period = TAU / h.abs();
        if span < period {
            return Err(FitError::InsufficientSpan { span, period });
        }
    }
    let mean = obs.iter().map(|o| o.y).sum::<f64>() / obs.len() as f64;
    if obs.iter().all(|o| (o.y - mean).abs() < 1e-12) {
        return Err(FitError::Degenerate);
    }
    let step = TAU / (SCAN_OVERSAMPLE * span);
    let (lo, hi) = match data.clock_hint() {
        Some(h) => (0.5 * h.abs(), 1.5 * h.abs()),
        None => {
            let min_dt = pts.windows(2).map(|w| w[1].time - w[0].time).fold(f64::INFINITY, f64::min);
            (step, PI / min_dt)
        }
    };
    let candidates = spectral_candidates(&obs, lo, hi.max(lo + step), step);
    let mut best: Option<Solution> = None;
    let mut first_err = None;
    for (omega0, _) in candidates {
        match gauss_newton(&obs, vec![omega0, 0.0], single_model) {
            Ok(sol) => {
                if best.as_ref().is_none_or(|b| sol.chi_square < b.chi_square) {
                    best = Some(sol);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let sol = best.ok_or_else(|| first_err.unwrap_or(FitError::Degenerate))?;
    let omega = sol.params[0].abs();
    if data.clock_hint().is_none() {
        let period = TAU / omega;
        if span < period {
            return Err(FitError::InsufficientSpan { span, period });
        }
    }
    Ok(FringeFit {
        omega: Estimate {
            value: omega,
            std_error: sol.covariance[(0, 0)].sqrt(),
        },
        gamma: Estimate {
            value: sol.params[1],
            std_error: sol.covariance[(1, 1)].sqrt(),
        },
        chi_square: sol.chi_square,
        residual_ss: sol.residual_ss,
        iterations: sol.iterations,
    })
}

/// Jointly fits a freshly started clock (`second`, times measured from its
/// start) and an older clock on the same oscillator (`first`, read at the
/// same kind of offsets but started `age` seconds earlier).
///
/// Shared `(Ω, γ)`; the older clock carries an extra phase `φ = Ω·age`
/// modulo `2π`, which is what the fit returns.
pub fn fit_phase_offset(
    second: &FringeDataset,
    first: &FringeDataset,
    age: f64,
    omega_guess: f64,
    gamma_guess: f64,
) -> Result<PhaseFit, FitError> {
    for ds in [second, first] {
        if ds.len() < 3 {
            return Err(FitError::TooFewPoints { needed: 3, got: ds.len() });
        }
    }
    let to_obs = |ds: &FringeDataset, series| {
        ds.points()
            .iter()
            .map(move |p| Obs {
                series,
                time: p.time,
                y: p.fraction(),
                trials: p.trials as f64,
            })
            .collect::<Vec<_>>()
    };
    let mut obs = to_obs(second, 0);
    obs.extend(to_obs(first, 1));
    let model = |o: &Obs, p: &[f64], grad: &mut [f64]| -> f64 {
        let (mut g0, mut g1, mut g2) = (0.0, 0.0, 0.0);
        let (phase, env_age) = if o.series == 0 { (0.0, o.time) } else { (p[1], o.time + age) };
        let m = fringe(o.time, env_age, p[0], phase, p[2], [&mut g0, &mut g1, &mut g2]);
        grad[0] = g0;
        grad[1] = if o.series == 0 { 0.0 } else { g1 };
        grad[2] = g2;
        m
    };
    let omega0 = omega_guess.abs();
    let gamma0 = gamma_guess.max(0.0);
    let mut grad = [0.0; 3];
    let phase0 = (0..32)
        .map(|i| TAU * i as f64 / 32.0)
        .map(|phi| {
            let ss: f64 = obs
                .iter()
                .map(|o| {
                    let r = o.y - model(o, &[omega0, phi, gamma0], &mut grad);
                    o.trials * r * r
                })
                .sum();
            (phi, ss)
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(phi, _)| phi)
        .unwrap_or(0.0);
    let sol = gauss_newton(&obs, vec![omega0, phase0, gamma0], model)?;
    Ok(PhaseFit {
        omega: Estimate {
            value: sol.params[0].abs(),
            std_error: sol.covariance[(0, 0)].sqrt(),
        },
        phase: Estimate {
            value: sol.params[1].rem_euclid(TAU),
            std_error: sol.covariance[(1, 1)].sqrt(),
        },
        gamma: Estimate {
            value: sol.params[2],
            std_error: sol.covariance[(2, 2)].sqrt(),
        },
        chi_square: sol.chi_square,
        iterations: sol.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::super::FringePoint;
    use super::*;

    fn noiseless(omega: f64, gamma: f64, times: &[f64], trials: u64) -> FringeDataset {
        let pts = times
            .iter()
            .map(|&t| FringePoint {
                time: t,
                successes: trials as f64 * 0.5 * (1.0 - (-gamma * t).exp() * (omega * t).cos()),
                trials,
            })
            .collect();
        FringeDataset::new(pts, None).unwrap()
    }

    #[test]
    fn recovers_noiseless_generator() {
        let times: Vec<f64> = (1..=50).map(|i| i as f64 * 0.02).collect();
        let omega = TAU * 5.0;
        let fit = fit_fringe(&noiseless(omega, 0.0, &times, 1000)).unwrap();
        assert!((fit.omega.value - omega).abs() / omega < 1e-6);
        assert!(fit.gamma.value.abs() < 1e-6);
        assert!(fit.residual_ss < 1e-12);

        let fit = fit_fringe(&noiseless(omega, 0.7, &times, 1000)).unwrap();
        assert!((fit.omega.value - omega).abs() / omega < 1e-6);
        assert!((fit.gamma.value - 0.7).abs() < 1e-6);
    }

    #[test]
    fn flat_data_is_degenerate() {
        let pts = (0..10)
            .map(|i| FringePoint {
                time: i as f64 * 0.1,
                successes: 50.0,
                trials: 100,
            })
            .collect();
        let ds = FringeDataset::new(pts, None).unwrap();
        assert_eq!(fit_fringe(&ds).unwrap_err(), FitError::Degenerate);
    }

    #[test]
    fn too_few_points_or_short_span() {
        let ds = noiseless(1.0, 0.0, &[0.1, 0.2, 0.3], 10);
        assert!(matches!(fit_fringe(&ds), Err(FitError::TooFewPoints { .. })));
        let times: Vec<f64> = (1..=10).map(|i| i as f64 * 0.01).collect();
        let pts = noiseless(TAU, 0.0, &times, 10).points().to_vec();
        let hinted = FringeDataset::new(pts, Some(TAU)).unwrap();
        assert!(matches!(fit_fringe(&hinted), Err(FitError::InsufficientSpan { .. })));
    }

    #[test]
    fn joint_phase_fit_recovers_offset() {
        let omega = TAU * 3.0;
        let age = 10.37;
        let taus: Vec<f64> = (1..=20).map(|i| i as f64 * 0.035).collect();
        let second = noiseless(omega, 0.0, &taus, 1000);
        let phase = (omega * age).rem_euclid(TAU);
        let first_pts = taus
            .iter()
            .map(|&t| FringePoint {
                time: t,
                successes: 1000.0 * 0.5 * (1.0 - (omega * t + phase).cos()),
                trials: 1000,
            })
            .collect();
        let first = FringeDataset::new(first_pts, None).unwrap();
        let fit = fit_phase_offset(&second, &first, age, omega * 1.001, 0.0).unwrap();
        assert!((fit.phase.value - phase).abs() < 1e-8, "{} vs {}", fit.phase.value, phase);
        assert!((fit.omega.value - omega).abs() < 1e-8);
    }
}
