//! Photon-pair source, electro-optic sidebands and the control-laser fringe.

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C;
use crate::scalar::Real;

/// Pair-source parameters. Rates are in pairs/s, powers in mW.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    /// Quadratic brightness `a` in pairs·s⁻¹·mW⁻².
    pub brightness_a: f64,
    pub pump_power_per_line: f64,
    /// Roll-off power; `inf` recovers the pure quadratic law.
    pub saturation_power: f64,
    pub car_target: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            brightness_a: 27.0e6,
            pump_power_per_line: 0.4,
            saturation_power: calibrate_saturation_power(27.0e6, 0.4, 0.7e6).unwrap_or(f64::INFINITY),
            car_target: 20.0,
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("source.brightness_a", self.brightness_a),
            ("source.pump_power_per_line", self.pump_power_per_line),
            ("source.saturation_power", self.saturation_power),
            ("source.car_target", self.car_target),
        ] {
            if !(v > 0.0) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn pair_rate(&self) -> f64 {
        pair_rate(self.brightness_a, self.pump_power_per_line, self.saturation_power)
    }
}

/// `a·P² / (1 + (P/P_sat)²)`.
pub fn pair_rate<T: Real>(brightness_a: T, pump_power: T, saturation_power: T) -> T {
    let x = pump_power / saturation_power;
    brightness_a * pump_power * pump_power / (T::one() + x * x)
}

/// Saturation power that makes `pair_rate(a, p, P_sat) == target`.
pub fn calibrate_saturation_power(brightness_a: f64, pump_power: f64, target: f64) -> Result<f64> {
    let quad = brightness_a * pump_power * pump_power;
    if !(target > 0.0 && target < quad) {
        return Err(Error::param(
            "target",
            format!("must lie in (0, a·P²={quad}) to be reached by roll-off, got {target}"),
        ));
    }
    Ok(pump_power / (quad / target - 1.0).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulatorConfig {
    /// Modulation index δ.
    pub modulation_index: f64,
    /// Δν in Hz.
    pub bin_spacing: f64,
    pub rf_phase: f64,
}

impl Default for ModulatorConfig {
    fn default() -> Self {
        ModulatorConfig { modulation_index: 1.4, bin_spacing: 15.0e9, rf_phase: 0.0 }
    }
}

impl ModulatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.modulation_index >= 0.0 && self.modulation_index.is_finite()) {
            return Err(Error::param("modulator.modulation_index", "must be finite and ≥ 0"));
        }
        if !(self.bin_spacing > 0.0 && self.bin_spacing.is_finite()) {
            return Err(Error::param("modulator.bin_spacing", "must be finite and > 0"));
        }
        Ok(())
    }
}

/// `J_0(x) ..= J_n(x)` for `x ≥ 0` by Miller's backward recurrence,
/// normalized with `J_0 + 2·Σ J_2k = 1`.
pub fn bessel_j_upto<T: Real>(n: usize, x: T) -> Vec<T> {
    let mut out = vec![T::zero(); n + 1];
    if x == T::zero() {
        out[0] = T::one();
        return out;
    }
    let xf = x.to_f64_lossy().abs();
    let start = {
        let m = (n as f64).max(xf) + 20.0 + (40.0 * xf.max(1.0)).sqrt();
        let m = m.ceil() as usize;
        m + (m & 1)
    };
    let two = T::lit(2.0);
    let big = T::max_value().sqrt();
    let mut next = T::zero();
    let mut cur = T::min_positive_value().sqrt();
    let mut norm = T::zero();
    for k in (1..=start).rev() {
        let prev = two * T::lit(k as f64) / x * cur - next;
        next = cur;
        cur = prev;
        // index of `cur` is now k-1
        let idx = k - 1;
        if idx <= n {
            out[idx] = cur;
        }
        if idx > 0 && idx % 2 == 0 {
            norm = norm + two * cur;
        }
        if cur.abs() > big {
            let s = T::one() / big;
            cur = cur * s;
            next = next * s;
            norm = norm * s;
            for v in out.iter_mut() {
                *v = *v * s;
            }
        }
    }
    norm = norm + cur;
    for v in out.iter_mut() {
        *v = *v / norm;
    }
    out
}

/// `J_k(x)` for any integer order.
pub fn bessel_j<T: Real>(k: i32, x: T) -> T {
    let n = k.unsigned_abs() as usize;
    let v = bessel_j_upto(n, x.abs())[n];
    let mut s = v;
    if k < 0 && n % 2 == 1 {
        s = -s;
    }
    if x < T::zero() && n % 2 == 1 {
        s = -s;
    }
    s
}

/// Sideband amplitudes `J_k(δ)·e^{ikφ}` for `k` in `-max_order..=max_order`,
/// returned in ascending order of `k`.
pub fn eom_sidebands<T: Real>(modulation_index: T, rf_phase: T, max_order: usize) -> Vec<(i32, C<T>)> {
    let j = bessel_j_upto(max_order, modulation_index.abs());
    let m = max_order as i32;
    (-m..=m)
        .map(|k| {
            let n = k.unsigned_abs() as usize;
            let odd = n % 2 == 1;
            let flip = (k < 0 && odd) ^ (modulation_index < T::zero() && odd);
            let amp = if flip { -j[n] } else { j[n] };
            (k, C::from_polar(T::one(), T::lit(k as f64) * rf_phase) * amp)
        })
        .collect()
}

pub fn sideband_power<T: Real>(bands: &[(i32, C<T>)]) -> T {
    bands.iter().map(|(_, a)| a.norm_sqr()).sum()
}

/// Three-line fringe `I₀(3 − 4cos(φ−θ) + 2cos(2(φ−θ)))`.
pub fn fringe_intensity<T: Real>(theta: T, phi: T, i0: T) -> T {
    let d = phi - theta;
    i0 * (T::lit(3.0) - T::lit(4.0) * d.cos() + T::lit(2.0) * (d + d).cos())
}

/// Baseband intensity after two modulators of index `δ` separated by a fiber
/// imparting `θ` between adjacent bins, summing all Bessel orders up to
/// `max_order`: `|Σ_m (−1)^m J_m² e^{im(θ−φ)}|²`.
pub fn fringe_intensity_exact<T: Real>(modulation_index: T, theta: T, phi: T, max_order: usize) -> T {
    let j = bessel_j_upto(max_order, modulation_index.abs());
    let d = theta - phi;
    let mut amp: C<T> = C::zero();
    for m in -(max_order as i32)..=(max_order as i32) {
        let jm = j[m.unsigned_abs() as usize];
        let w = if m.rem_euclid(2) == 1 { -jm * jm } else { jm * jm };
        amp = amp + C::from_polar(w, T::lit(m as f64) * d);
    }
    amp.norm_sqr()
}

/// Uncorrelated coincidence rate `S_a·S_b·w` (Hz, Hz, s).
pub fn accidental_rate<T: Real>(singles_a: T, singles_b: T, window: T) -> Result<T> {
    if singles_a < T::zero() || singles_b < T::zero() || window < T::zero() {
        return Err(Error::param("accidental_rate", "inputs must be nonnegative"));
    }
    Ok(singles_a * singles_b * window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    // Power-series oracle, adequate for moderate x.
    fn bessel_series(n: u32, x: f64) -> f64 {
        let mut term = (x / 2.0).powi(n as i32) / (1..=n).map(f64::from).product::<f64>();
        let mut sum = term;
        for m in 1..80 {
            term *= -(x * x / 4.0) / (m as f64 * (m + n) as f64);
            sum += term;
        }
        sum
    }

    #[test]
    fn bessel_matches_power_series() {
        for &x in &[0.1, 0.5, 1.0, 1.4, 2.4048, 3.0, 5.0, 8.0] {
            let j = bessel_j_upto(10, x);
            for (n, v) in j.iter().enumerate() {
                let oracle = bessel_series(n as u32, x);
                assert!((v - oracle).abs() < 1e-13, "J_{n}({x}) = {v} vs {oracle}");
            }
        }
        assert!((bessel_j(-1, 1.4f64) + bessel_j(1, 1.4)).abs() < 1e-15);
        assert!((bessel_j(-2, 1.4f64) - bessel_j(2, 1.4)).abs() < 1e-15);
    }

    #[test]
    fn sideband_examples() {
        let b = eom_sidebands(0.0f64, 0.3, 3);
        for (k, a) in &b {
            let expect = if *k == 0 { 1.0 } else { 0.0 };
            assert!((a.norm() - expect).abs() < 1e-15);
        }
        let b = eom_sidebands(1.4f64, 0.0, 1);
        let (jm1, j0, j1) = (b[0].1.re, b[1].1.re, b[2].1.re);
        assert!((jm1 + j1).abs() < 1e-15);
        assert!((j0.abs() - j1.abs()).abs() < 0.03, "J0={j0}, J1={j1}");
        let p = sideband_power(&eom_sidebands(1.4f64, 0.7, 20));
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sideband_phases() {
        let phi = 0.37;
        for (k, a) in eom_sidebands(1.4, phi, 4) {
            let j = bessel_j(k, 1.4);
            let expect = C::from_polar(j, k as f64 * phi);
            assert!((a - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn pair_rate_examples() {
        assert_eq!(pair_rate(27.0e6, 0.0, 0.2), 0.0);
        assert!((pair_rate(27.0e6, 0.05, f64::INFINITY) - 67.5e3).abs() < 1e-6);
        let psat = calibrate_saturation_power(27.0e6, 0.4, 0.7e6).unwrap();
        assert!((psat - 0.176).abs() < 1e-3);
        assert!((pair_rate(27.0e6, 0.4, psat) - 0.7e6).abs() < 1e-6);
        assert!(calibrate_saturation_power(27.0e6, 0.4, 5.0e6).is_err());
        let d = SourceConfig::default();
        assert!((d.pair_rate() - 0.7e6).abs() < 1e-6);
    }

    #[test]
    fn fringe_examples() {
        assert!((fringe_intensity(0.4f64, 0.4, 2.0) - 2.0).abs() < 1e-14);
        assert!((fringe_intensity(0.0f64, PI, 1.0) - 9.0).abs() < 1e-14);
        assert!((fringe_intensity(0.0f64, PI / 2.0, 1.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn exact_fringe_reduces_to_three_line_model() {
        // With only orders ±1 kept and J₁ = −J₋₁ the exact model is
        // J₀⁴·(1 − 2r·cos d)² where r = J₁²/J₀²; at r = 1 this is the
        // three-line formula with I₀ = J₀⁴.
        let x = 1.4f64;
        let j0 = bessel_j(0, x);
        let j1 = bessel_j(1, x);
        for k in 0..16 {
            let d = k as f64 * 0.4;
            let direct = (j0 * j0 - 2.0 * j1 * j1 * d.cos()).powi(2);
            assert!((fringe_intensity_exact(x, 0.0, d, 1) - direct).abs() < 1e-14);
        }
        // Neumann's addition theorem gives the closed form J₀(2δ·cos(d/2))²:
        // symmetric about φ = θ with its maximum at φ − θ = π.
        let th = 0.9;
        let closed = |d: f64| bessel_j(0, 2.0 * x * (d / 2.0).cos()).powi(2);
        for k in 0..40 {
            let e = k as f64 * 0.15;
            let l = fringe_intensity_exact(x, th, th - e, 20);
            let r = fringe_intensity_exact(x, th, th + e, 20);
            assert!((l - r).abs() < 1e-14);
            assert!((l - closed(e)).abs() < 1e-13);
        }
        assert!((fringe_intensity_exact(x, th, th + PI, 20) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn accidental_examples() {
        assert_eq!(accidental_rate(0.0, 1e5, 700e-12).unwrap(), 0.0);
        assert!((accidental_rate(1e5f64, 1e5, 700e-12).unwrap() - 7.0).abs() < 1e-12);
        assert!((accidental_rate(120.0f64, 120.0, 700e-12).unwrap() - 1.008e-5).abs() < 1e-9);
        assert!(accidental_rate(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn single_precision_bessel() {
        let j = bessel_j_upto(3, 1.4f32);
        assert!((j[0] - 0.566_855_4).abs() < 1e-5);
        assert!((j[1] - 0.541_947_7).abs() < 1e-5);
    }
}
