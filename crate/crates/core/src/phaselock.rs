//! Active phase-drift compensation from the control-laser fringe.

use std::f64::consts::{PI, TAU};
use std::sync::mpsc;
use std::thread;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::photonics::{fringe_intensity, fringe_intensity_exact};
use crate::qstate::wrap_phase;
use crate::rng::{substream, SimRng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FringeSample {
    pub phi: f64,
    pub intensity: f64,
}

/// Forward model used to synthesize sweeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FringeModel {
    /// `I₀(3 − 4cos(φ−θ) + 2cos(2(φ−θ)))`.
    ThreeLine,
    /// Full Bessel expansion at the configured modulation index.
    #[default]
    Bessel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LockConfig {
    /// Seconds between fringe fits.
    pub cadence: f64,
    pub sweep_points: usize,
    /// Relative Gaussian intensity noise per sample.
    pub noise_rel: f64,
    /// Ratio of the signal photon's phase to the control laser's.
    pub proxy_factor: f64,
    /// Number of cadences between the start of a sweep and its correction
    /// taking effect.
    pub latency_cadences: u32,
    pub fringe_model: FringeModel,
    pub bessel_max_order: usize,
}

impl Default for LockConfig {
    fn default() -> Self {
        LockConfig {
            cadence: 2.0,
            sweep_points: 24,
            noise_rel: 0.01,
            proxy_factor: 1.0,
            latency_cadences: 1,
            fringe_model: FringeModel::Bessel,
            bessel_max_order: 12,
        }
    }
}

impl LockConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cadence > 0.0 && self.cadence.is_finite()) {
            return Err(Error::param("lock.cadence", "must be finite and > 0"));
        }
        if self.sweep_points < 5 {
            return Err(Error::param("lock.sweep_points", "need at least 5 points"));
        }
        if !(0.0..1.0).contains(&self.noise_rel) {
            return Err(Error::param("lock.noise_rel", "must lie in [0, 1)"));
        }
        if !self.proxy_factor.is_finite() {
            return Err(Error::param("lock.proxy_factor", "must be finite"));
        }
        Ok(())
    }
}

/// Uniform sweep of `n_points` phases over one period with multiplicative
/// Gaussian noise.
pub fn sweep_fringe(theta_true: f64, n_points: usize, noise_rel: f64, seed: u64) -> Result<Vec<FringeSample>> {
    let mut rng = substream(seed, "fringe", 0);
    sweep_with(FringeModel::ThreeLine, 1.4, 0, theta_true, n_points, noise_rel, &mut rng)
}

pub fn sweep_with(
    model: FringeModel,
    modulation_index: f64,
    max_order: usize,
    theta_true: f64,
    n_points: usize,
    noise_rel: f64,
    rng: &mut SimRng,
) -> Result<Vec<FringeSample>> {
    if n_points < 5 {
        return Err(Error::param("n_points", "need at least 5 points"));
    }
    if !(0.0..1.0).contains(&noise_rel) {
        return Err(Error::param("noise_rel", "must lie in [0, 1)"));
    }
    Ok((0..n_points)
        .map(|k| {
            let phi = TAU * k as f64 / n_points as f64;
            let clean = match model {
                FringeModel::ThreeLine => fringe_intensity(theta_true, phi, 1.0),
                FringeModel::Bessel => fringe_intensity_exact(modulation_index, theta_true, phi, max_order),
            };
            let intensity = if noise_rel > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                (clean * (1.0 + noise_rel * z)).max(0.0)
            } else {
                clean
            };
            FringeSample { phi, intensity }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FringeFit {
    /// In `[0, 2π)`.
    pub theta: f64,
    pub i0: f64,
    /// RMS misfit over mean intensity.
    pub residual: f64,
}

fn shape(d: f64) -> f64 {
    3.0 - 4.0 * d.cos() + 2.0 * (2.0 * d).cos()
}

fn shape_deriv(d: f64) -> f64 {
    4.0 * d.sin() - 4.0 * (2.0 * d).sin()
}

/// Profiled sum of squares at `theta` with I₀ solved in closed form.
fn profiled(samples: &[FringeSample], theta: f64) -> (f64, f64) {
    let (mut ig, mut gg) = (0.0, 0.0);
    for s in samples {
        let g = shape(s.phi - theta);
        ig += s.intensity * g;
        gg += g * g;
    }
    let i0 = ig / gg;
    let ss = samples.iter().map(|s| (s.intensity - i0 * shape(s.phi - theta)).powi(2)).sum();
    (ss, i0)
}

/// Least-squares fit of the three-line fringe in `(I₀, θ)`.
pub fn fit_theta(samples: &[FringeSample]) -> Result<FringeFit> {
    if samples.len() < 5 {
        return Err(Error::Unfittable(format!("{} samples, need at least 5", samples.len())));
    }
    if samples.iter().any(|s| !s.phi.is_finite() || !s.intensity.is_finite()) {
        return Err(Error::Unfittable("non-finite sample".into()));
    }
    let mut phis: Vec<f64> = samples.iter().map(|s| wrap_phase(s.phi)).collect();
    phis.sort_by(f64::total_cmp);
    let mut gap = TAU - (phis[phis.len() - 1] - phis[0]);
    for w in phis.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    if TAU - gap < PI - 1e-9 {
        return Err(Error::Unfittable("samples span less than half a period".into()));
    }
    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), s| {
        (l.min(s.intensity), h.max(s.intensity))
    });
    if hi - lo <= 1e-12 * hi.abs().max(1e-300) {
        return Err(Error::Unfittable("constant intensity".into()));
    }

    // Start: first circular harmonic, checked against a coarse grid.
    let (mut re, mut im) = (0.0, 0.0);
    for s in samples {
        re += s.intensity * s.phi.cos();
        im -= s.intensity * s.phi.sin();
    }
    let mut theta = wrap_phase(-(-im).atan2(-re));
    let mut best = profiled(samples, theta).0;
    for k in 0..72 {
        let t = TAU * k as f64 / 72.0;
        let ss = profiled(samples, t).0;
        if ss < best {
            best = ss;
            theta = t;
        }
    }
    let mut i0 = lo.max(profiled(samples, theta).1);

    // Levenberg–Marquardt on (I₀, θ).
    let sse = |i0: f64, th: f64| -> f64 {
        samples.iter().map(|s| (i0 * shape(s.phi - th) - s.intensity).powi(2)).sum()
    };
    let mut cost = sse(i0, theta);
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for s in samples {
            let d = s.phi - theta;
            let g = shape(d);
            let r = i0 * g - s.intensity;
            let j1 = g;
            let j2 = -i0 * shape_deriv(d);
            a11 += j1 * j1;
            a12 += j1 * j2;
            a22 += j2 * j2;
            b1 += j1 * r;
            b2 += j2 * r;
        }
        let mut improved = false;
        for _ in 0..30 {
            let m11 = a11 * (1.0 + lambda);
            let m22 = a22 * (1.0 + lambda);
            let det = m11 * m22 - a12 * a12;
            if det.abs() < 1e-300 {
                lambda *= 10.0;
                continue;
            }
            let d1 = -(m22 * b1 - a12 * b2) / det;
            let d2 = -(m11 * b2 - a12 * b1) / det;
            let trial = sse(i0 + d1, theta + d2);
            if trial <= cost {
                let converged = d2.abs() < 1e-15 && d1.abs() <= 1e-15 * i0.abs().max(1.0);
                i0 += d1;
                theta += d2;
                cost = trial;
                lambda = (lambda * 0.3).max(1e-12);
                improved = !converged;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    if !(i0 > 0.0) {
        return Err(Error::Unfittable(format!("fitted amplitude {i0} is not positive")));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.intensity).sum::<f64>() / n;
    Ok(FringeFit { theta: wrap_phase(theta), i0, residual: (cost / n).sqrt() / mean })
}

/// Representative of `new_mod_2pi` nearest to `previous`.
pub fn unwrap(previous: f64, new_mod_2pi: f64) -> f64 {
    new_mod_2pi + TAU * ((previous - new_mod_2pi) / TAU).round()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LockState {
    pub theta_unwrapped: f64,
    pub last_fit_residual: f64,
    pub cadence: f64,
}

impl LockState {
    pub fn new(cadence: f64) -> Result<Self> {
        if !(cadence > 0.0) {
            return Err(Error::param("cadence", "must be > 0"));
        }
        Ok(LockState { theta_unwrapped: 0.0, last_fit_residual: 0.0, cadence })
    }
}

/// Fits the sweep, unwraps against the lock state and returns the new state
/// with the correction (the unwrapped phase). On error the caller keeps its
/// previous state.
pub fn control_step(lock: &LockState, samples: &[FringeSample]) -> Result<(LockState, f64, FringeFit)> {
    let fit = fit_theta(samples)?;
    let theta = unwrap(lock.theta_unwrapped, fit.theta);
    let next = LockState { theta_unwrapped: theta, last_fit_residual: fit.residual, cadence: lock.cadence };
    Ok((next, theta, fit))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LockTraceEntry {
    pub time_s: f64,
    pub theta_fit: f64,
    pub theta_unwrapped: f64,
    /// Correction in force from `time_s + latency` on; zero when unlocked.
    pub correction: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LockTrace {
    pub cadence: f64,
    pub latency_cadences: u32,
    pub entries: Vec<LockTraceEntry>,
}

impl LockTrace {
    /// Correction applied at time `t`: the most recent one whose latency has
    /// elapsed, else zero.
    pub fn correction_at(&self, t: f64) -> f64 {
        let k = (t / self.cadence).floor() as i64 - i64::from(self.latency_cadences);
        if k < 0 || self.entries.is_empty() {
            return 0.0;
        }
        self.entries[(k as usize).min(self.entries.len() - 1)].correction
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,theta_fit_rad,theta_unwrapped_rad,correction_rad,residual\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.time_s, e.theta_fit, e.theta_unwrapped, e.correction, e.residual
            ));
        }
        out
    }
}

enum Request {
    Sweep { time_s: f64, samples: Vec<FringeSample> },
    Stop,
}

struct Reply {
    time_s: f64,
    outcome: Result<(LockState, f64, FringeFit)>,
}

/// Runs `steps` lock cycles. The simulator side sweeps the control fringe at
/// `theta_control(t)` and ships the samples to a controller task over a
/// channel; the controller owns the [`LockState`] and answers with the
/// correction.
pub fn run_closed_loop(
    cfg: &LockConfig,
    modulation_index: f64,
    theta_control: &(dyn Fn(f64) -> f64 + Sync),
    steps: usize,
    locked: bool,
    seed: u64,
) -> Result<LockTrace> {
    cfg.validate()?;
    let (req_tx, req_rx) = mpsc::channel::<Request>();
    let (rep_tx, rep_rx) = mpsc::channel::<Reply>();
    let cadence = cfg.cadence;
    thread::scope(|scope| {
        scope.spawn(move || {
            let mut state = LockState { theta_unwrapped: 0.0, last_fit_residual: 0.0, cadence };
            while let Ok(Request::Sweep { time_s, samples }) = req_rx.recv() {
                let outcome = control_step(&state, &samples);
                if let Ok((next, _, _)) = &outcome {
                    state = *next;
                }
                if rep_tx.send(Reply { time_s, outcome }).is_err() {
                    break;
                }
            }
        });

        let mut trace = LockTrace { cadence, latency_cadences: cfg.latency_cadences, entries: Vec::with_capacity(steps) };
        let mut last_good = (0.0, 0.0);
        let mut result = Ok(());
        for k in 0..steps {
            let t = k as f64 * cadence;
            let mut rng = substream(seed, "fringe", k as u64);
            let samples = match sweep_with(
                cfg.fringe_model,
                modulation_index,
                cfg.bessel_max_order,
                theta_control(t),
                cfg.sweep_points,
                cfg.noise_rel,
                &mut rng,
            ) {
                Ok(s) => s,
                Err(e) => {
                    result = Err(e);
                    break;
                }
            };
            if req_tx.send(Request::Sweep { time_s: t, samples }).is_err() {
                result = Err(Error::InvalidParameter { name: "lock".into(), reason: "controller stopped".into() });
                break;
            }
            let reply = match rep_rx.recv() {
                Ok(r) => r,
                Err(_) => {
                    result = Err(Error::InvalidParameter { name: "lock".into(), reason: "controller stopped".into() });
                    break;
                }
            };
            let entry = match reply.outcome {
                Ok((state, correction, fit)) => {
                    last_good = (state.theta_unwrapped, if locked { correction } else { 0.0 });
                    LockTraceEntry {
                        time_s: reply.time_s,
                        theta_fit: fit.theta,
                        theta_unwrapped: state.theta_unwrapped,
                        correction: last_good.1,
                        residual: fit.residual,
                    }
                }
                Err(_) => LockTraceEntry {
                    time_s: reply.time_s,
                    theta_fit: f64::NAN,
                    theta_unwrapped: last_good.0,
                    correction: last_good.1,
                    residual: f64::NAN,
                },
            };
            trace.entries.push(entry);
        }
        let _ = req_tx.send(Request::Stop);
        result.map(|_| trace)
    })
}
