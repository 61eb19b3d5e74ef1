//! Small statistics helpers for time series.

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Two-sided Mann-Kendall trend test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MannKendall {
    pub s: i64,
    pub variance: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Normal approximation with the tie-corrected variance and a continuity
/// correction of one.
pub fn mann_kendall(xs: &[f64]) -> Result<MannKendall> {
    let n = xs.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("Mann-Kendall needs at least 3 points, got {n}")));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::param("series", "contains non-finite values"));
    }
    let mut s = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            s += match xs[j].partial_cmp(&xs[i]) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut k = 0;
    while k < n {
        let mut m = k + 1;
        while m < n && sorted[m] == sorted[k] {
            m += 1;
        }
        let t = (m - k) as f64;
        ties += t * (t - 1.0) * (2.0 * t + 5.0);
        k = m;
    }
    let nf = n as f64;
    let variance = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - ties) / 18.0;
    let z = if variance <= 0.0 {
        0.0
    } else if s > 0 {
        (s - 1) as f64 / variance.sqrt()
    } else if s < 0 {
        (s + 1) as f64 / variance.sqrt()
    } else {
        0.0
    };
    let p_value = erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0);
    Ok(MannKendall { s, variance, z, p_value })
}

/// Location and spread of a series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesSummary {
    pub n: usize,
    pub mean: f64,
    /// Root-mean-square deviation from the mean.
    pub rms: f64,
    pub min: f64,
    pub max: f64,
}

impl SeriesSummary {
    pub fn of(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::InsufficientData("empty series".into()));
        }
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let rms = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(SeriesSummary { n, mean, rms, min, max })
    }

    pub fn relative_rms(&self) -> f64 {
        self.rms / self.mean.abs()
    }

    pub fn excursion(&self) -> f64 {
        self.max - self.min
    }

    /// Largest distance of any point from the mean.
    pub fn max_deviation(&self) -> f64 {
        (self.max - self.mean).max(self.mean - self.min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_series_is_significant() {
        let up: Vec<f64> = (0..30).map(f64::from).collect();
        let mk = mann_kendall(&up).unwrap();
        assert_eq!(mk.s, 30 * 29 / 2);
        assert!(mk.p_value < 1e-6);
        let down: Vec<f64> = up.iter().rev().copied().collect();
        assert!(mann_kendall(&down).unwrap().z < 0.0);
    }

    #[test]
    fn hand_computed_small_case() {
        // Pairs of [1, 3, 2, 4]: five increases, one decrease.
        let mk = mann_kendall(&[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!(mk.s, 4);
        assert!((mk.variance - 4.0 * 3.0 * 13.0 / 18.0).abs() < 1e-12);
        let z = 3.0 / (52.0f64 / 6.0).sqrt();
        assert!((mk.z - z).abs() < 1e-12);
        // Φ(1.019) ≈ 0.8459 from tables.
        assert!((mk.p_value - 2.0 * (1.0 - 0.8459)).abs() < 2e-3);
    }

    #[test]
    fn constant_series_has_no_trend() {
        let mk = mann_kendall(&[0.1; 10]).unwrap();
        assert_eq!(mk.s, 0);
        assert_eq!(mk.p_value, 1.0);
    }

    #[test]
    fn short_series_rejected() {
        assert!(mann_kendall(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn summary_values() {
        let s = SeriesSummary::of(&[1.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.rms, 1.0);
        assert_eq!(s.relative_rms(), 0.5);
        assert_eq!(s.excursion(), 2.0);
    }
}
