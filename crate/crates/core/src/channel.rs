//! Fiber spool: attenuation, time of flight and thermal phase drift.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::scalar::Real;

/// Vacuum speed of light in cm/s.
pub const SPEED_OF_LIGHT_CM_S: f64 = 2.997_924_58e10;

const CM_PER_KM: f64 = 1.0e5;

/// Measured (length km, total loss dB) pairs for the laboratory spools.
pub const SPOOL_LOSS_ANCHORS: [(f64, f64); 4] = [(2.6, 1.4), (8.0, 2.0), (10.6, 3.2), (26.0, 5.0)];

pub const DEFAULT_LOSS_PER_KM: f64 = 0.19;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberSpool {
    pub length_km: f64,
    /// dB/km.
    pub loss_per_km: f64,
    /// Connector and splice loss in dB on top of the per-km figure.
    pub excess_loss: f64,
    pub group_index: f64,
    /// Thermo-optic coefficient α_to, 1/°C.
    pub thermo_optic: f64,
    /// Fractional thermal expansion α_exp, 1/°C.
    pub expansion: f64,
    /// Replaces the physical drift slope (deg·km⁻¹·°C⁻¹) when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_slope_override: Option<f64>,
}

impl Default for FiberSpool {
    fn default() -> Self {
        FiberSpool {
            length_km: 0.0,
            loss_per_km: DEFAULT_LOSS_PER_KM,
            excess_loss: 0.0,
            group_index: 1.468,
            thermo_optic: 1.1e-5,
            expansion: 5.0e-7,
            drift_slope_override: None,
        }
    }
}

impl FiberSpool {
    /// Spool of `length_km` whose total loss reproduces the measured anchor
    /// when the length matches one, else the bare per-km loss.
    pub fn with_length(length_km: f64) -> Self {
        let excess = SPOOL_LOSS_ANCHORS
            .iter()
            .find(|(l, _)| (l - length_km).abs() < 1e-9)
            .map(|(l, db)| (db - DEFAULT_LOSS_PER_KM * l).max(0.0))
            .unwrap_or(0.0);
        FiberSpool { length_km, excess_loss: excess, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_km >= 0.0 && self.length_km.is_finite()) {
            return Err(Error::param("spool.length_km", "must be finite and ≥ 0"));
        }
        if !(self.loss_per_km >= 0.0) || !(self.excess_loss >= 0.0) {
            return Err(Error::param("spool", "losses must be ≥ 0"));
        }
        if !(1.3..=1.6).contains(&self.group_index) {
            return Err(Error::param("spool.group_index", format!("{} outside [1.3, 1.6]", self.group_index)));
        }
        if let Some(s) = self.drift_slope_override {
            if !s.is_finite() {
                return Err(Error::param("spool.drift_slope_override", "must be finite"));
            }
        }
        Ok(())
    }

    pub fn total_loss_db(&self) -> f64 {
        self.loss_per_km * self.length_km + self.excess_loss
    }
}

pub fn db_to_linear<T: Real>(db: T) -> T {
    T::lit(10.0).powf(-db / T::lit(10.0))
}

pub fn spool_transmission(spool: &FiberSpool) -> f64 {
    db_to_linear(spool.total_loss_db())
}

/// `(α_to + n·α_exp)·L·ΔT` in cm for a length in km.
pub fn optical_path_shift<T: Real>(thermo_optic: T, group_index: T, expansion: T, length_km: T, delta_t: T) -> T {
    (thermo_optic + group_index * expansion) * length_km * T::lit(CM_PER_KM) * delta_t
}

pub fn spool_path_shift(spool: &FiberSpool, delta_t: f64) -> f64 {
    optical_path_shift(spool.thermo_optic, spool.group_index, spool.expansion, spool.length_km, delta_t)
}

/// `2π·Δν·ΔL/c` for ΔL in cm and Δν in Hz.
pub fn phase_from_path<T: Real>(delta_l_cm: T, bin_spacing: T) -> T {
    T::TAU() * bin_spacing * delta_l_cm / T::lit(SPEED_OF_LIGHT_CM_S)
}

/// Physical drift slope in deg·km⁻¹·°C⁻¹, ignoring any override.
pub fn phase_drift_slope(spool: &FiberSpool, bin_spacing: f64) -> f64 {
    let unit = optical_path_shift(spool.thermo_optic, spool.group_index, spool.expansion, 1.0, 1.0);
    phase_from_path(unit, bin_spacing).to_degrees()
}

/// Slope actually used by the simulator: the override if present.
pub fn effective_drift_slope(spool: &FiberSpool, bin_spacing: f64) -> f64 {
    spool.drift_slope_override.unwrap_or_else(|| phase_drift_slope(spool, bin_spacing))
}

/// Phase (rad) accumulated by the bin pair for a temperature change.
pub fn drift_phase(spool: &FiberSpool, bin_spacing: f64, delta_t: f64) -> f64 {
    effective_drift_slope(spool, bin_spacing).to_radians() * spool.length_km * delta_t
}

/// `passes·n·L/c` in seconds.
pub fn time_of_flight(spool: &FiberSpool, passes: u32) -> Result<f64> {
    if passes == 0 {
        return Err(Error::param("passes", "must be ≥ 1"));
    }
    Ok(passes as f64 * spool.group_index * spool.length_km * CM_PER_KM / SPEED_OF_LIGHT_CM_S)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureMode {
    /// Mean-reverting random walk.
    #[default]
    Random,
    /// Deterministic linear rise of `step_rms_per_600s` every 600 s.
    Ramp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureProcess {
    pub initial: f64,
    /// Mean absolute temperature change over 600 s, °C.
    pub step_rms_per_600s: f64,
    /// Mean-reversion time in s; `inf` gives a plain random walk.
    pub correlation_time: f64,
    /// First-order thermal time constant of the spool in s. The walk is
    /// low-pass filtered with it; 0 leaves the walk unfiltered.
    #[serde(default = "default_thermal_time")]
    pub thermal_time: f64,
    #[serde(default)]
    pub mode: TemperatureMode,
}

fn default_thermal_time() -> f64 {
    60.0
}

impl Default for TemperatureProcess {
    fn default() -> Self {
        TemperatureProcess {
            initial: 22.0,
            step_rms_per_600s: 0.03,
            correlation_time: 1800.0,
            thermal_time: default_thermal_time(),
            mode: TemperatureMode::Random,
        }
    }
}

impl TemperatureProcess {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_rms_per_600s >= 0.0 && self.step_rms_per_600s.is_finite()) {
            return Err(Error::param("temperature.step_rms_per_600s", "must be finite and ≥ 0"));
        }
        if !(self.correlation_time > 0.0) {
            return Err(Error::param("temperature.correlation_time", "must be > 0"));
        }
        if !(self.thermal_time >= 0.0 && self.thermal_time.is_finite()) {
            return Err(Error::param("temperature.thermal_time", "must be finite and ≥ 0"));
        }
        if self.thermal_time > 0.0 && !(self.thermal_time < self.correlation_time) {
            return Err(Error::param("temperature.thermal_time", "must be shorter than correlation_time"));
        }
        if !self.initial.is_finite() {
            return Err(Error::param("temperature.initial", "must be finite"));
        }
        Ok(())
    }

    /// Standard deviation of a 600 s increment giving the configured mean
    /// absolute change (half-normal mean is `sd·√(2/π)`).
    pub fn increment_sd_600(&self) -> f64 {
        self.step_rms_per_600s / (2.0 / std::f64::consts::PI).sqrt()
    }

    fn smoothed(&self) -> bool {
        self.thermal_time > 0.0
    }

    /// Reversion rate `a` of the driving walk and filter rate `b`.
    fn rates(&self) -> (f64, f64) {
        let b = if self.smoothed() { 1.0 / self.thermal_time } else { f64::INFINITY };
        (1.0 / self.correlation_time, b)
    }

    /// Autocovariance at lag `l` of the temperature for unit driving noise.
    /// The filtered walk is `b/(b−a)·(x_a − x_b)` with `x_a`, `x_b`
    /// mean-reverting at rates `a`, `b` and sharing one noise source.
    fn unit_autocov(&self, l: f64) -> f64 {
        let (a, b) = self.rates();
        if !self.smoothed() {
            return (-a * l).exp() / (2.0 * a);
        }
        let c = b / (b - a);
        let (ea, eb) = ((-a * l).exp(), (-b * l).exp());
        c * c * (ea / (2.0 * a) + eb / (2.0 * b) - (ea + eb) / (a + b))
    }

    /// Driving noise intensity that yields `increment_sd_600` (per √s).
    fn noise_scale(&self) -> f64 {
        if !self.correlation_time.is_finite() {
            return self.increment_sd_600() / 600f64.sqrt();
        }
        let var600 = 2.0 * (self.unit_autocov(0.0) - self.unit_autocov(600.0));
        self.increment_sd_600() / var600.sqrt()
    }

    /// Stationary standard deviation of the mean-reverting component.
    pub fn stationary_sd(&self) -> f64 {
        self.noise_scale() * self.unit_autocov(0.0).sqrt()
    }

    /// Covariance of the `(x_a, x_b)` innovations over `dt` for unit noise;
    /// `dt = ∞` gives the stationary covariance.
    fn pair_cov(&self, dt: f64) -> [f64; 3] {
        let (a, b) = self.rates();
        let (ea, eb) = ((-a * dt).exp(), (-b * dt).exp());
        [(1.0 - ea * ea) / (2.0 * a), (1.0 - eb * eb) / (2.0 * b), (1.0 - ea * eb) / (a + b)]
    }
}

/// Stateful sampler of a [`TemperatureProcess`].
#[derive(Clone, Debug)]
pub struct TemperatureWalk {
    proc: TemperatureProcess,
    rng: SimRng,
    /// Driving walk `x_a` and, when filtered, the fast component `x_b`.
    state: [f64; 2],
    sigma: f64,
    offset: f64,
    origin: f64,
    elapsed: f64,
}

impl TemperatureWalk {
    pub fn new(proc: &TemperatureProcess, rng: SimRng) -> Result<Self> {
        proc.validate()?;
        let sigma = proc.noise_scale();
        let mut walk =
            TemperatureWalk { proc: proc.clone(), rng, state: [0.0; 2], sigma, offset: 0.0, origin: 0.0, elapsed: 0.0 };
        if walk.proc.mode == TemperatureMode::Random && walk.proc.correlation_time.is_finite() {
            // Start from the stationary distribution so increments are
            // stationary from t = 0.
            walk.state = walk.correlated_pair(f64::INFINITY);
            walk.offset = walk.output();
            walk.origin = walk.offset;
        }
        Ok(walk)
    }

    /// Innovation pair over `dt`, drawn by Cholesky factor of its covariance.
    fn correlated_pair(&mut self, dt: f64) -> [f64; 2] {
        let z1: f64 = self.rng.sample(StandardNormal);
        let [vaa, vbb, vab] = self.proc.pair_cov(dt);
        let l11 = vaa.sqrt();
        if !self.proc.smoothed() {
            return [self.sigma * l11 * z1, 0.0];
        }
        let z2: f64 = self.rng.sample(StandardNormal);
        let l21 = vab / l11;
        let l22 = (vbb - l21 * l21).max(0.0).sqrt();
        [self.sigma * l11 * z1, self.sigma * (l21 * z1 + l22 * z2)]
    }

    fn output(&self) -> f64 {
        if self.proc.smoothed() {
            let (a, b) = self.proc.rates();
            b / (b - a) * (self.state[0] - self.state[1])
        } else {
            self.state[0]
        }
    }

    pub fn current(&self) -> f64 {
        self.proc.initial + self.offset - self.origin
    }

    pub fn elapsed(&self) -> f64 {
        self.elapsed
    }

    /// Advances by `dt` seconds and returns the temperature increment.
    pub fn temperature_step(&mut self, dt: f64) -> Result<f64> {
        if !(dt > 0.0) {
            return Err(Error::param("dt", "must be > 0"));
        }
        let before = self.offset;
        match self.proc.mode {
            TemperatureMode::Ramp => self.offset += self.proc.step_rms_per_600s * dt / 600.0,
            TemperatureMode::Random => {
                if self.proc.step_rms_per_600s > 0.0 {
                    if self.proc.correlation_time.is_finite() {
                        let (a, b) = self.proc.rates();
                        let [da, db] = self.correlated_pair(dt);
                        self.state[0] = self.state[0] * (-a * dt).exp() + da;
                        self.state[1] = self.state[1] * (-b * dt).exp() + db;
                        self.offset = self.output();
                    } else {
                        let z: f64 = self.rng.sample(StandardNormal);
                        self.offset += self.sigma * dt.sqrt() * z;
                    }
                }
            }
        }
        self.elapsed += dt;
        Ok(self.offset - before)
    }

    /// Temperatures at `t = 0, dt, 2dt, …` up to and including `duration`.
    pub fn trajectory(&mut self, duration: f64, dt: f64) -> Result<Vec<f64>> {
        if !(dt > 0.0) {
            return Err(Error::param("dt", "must be > 0"));
        }
        let n = (duration / dt).floor() as usize;
        let mut out = Vec::with_capacity(n + 1);
        out.push(self.current());
        for _ in 0..n {
            self.temperature_step(dt)?;
            out.push(self.current());
        }
        Ok(out)
    }
}
