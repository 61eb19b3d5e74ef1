//! BBM92 sifting, QBER estimation and the asymptotic key-rate bound.

use serde::{Deserialize, Serialize};

use crate::coincidence::CoincidenceEvent;
use crate::detection::{Projector, ProjectorOutcome};
use crate::error::{Error, Result};
use crate::qstate::{Basis, CorrelationMatrix};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SiftedBit {
    pub basis: Basis,
    pub alice_bit: u8,
    pub bob_bit: u8,
    pub timestamp_ps: u64,
}

/// Keeps matched-basis events and returns them with the kept fraction
/// (zero for no input).
pub fn sift(events: &[CoincidenceEvent]) -> (Vec<SiftedBit>, f64) {
    let bits: Vec<SiftedBit> = events
        .iter()
        .filter(|e| e.outcome.alice.basis() == e.outcome.bob.basis())
        .map(|e| SiftedBit {
            basis: e.outcome.alice.basis(),
            alice_bit: e.outcome.alice.bit(),
            bob_bit: e.outcome.bob.bit(),
            timestamp_ps: e.alice_time_ps,
        })
        .collect();
    let ratio = if events.is_empty() { 0.0 } else { bits.len() as f64 / events.len() as f64 };
    (bits, ratio)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QberEstimate {
    pub rate: f64,
    /// Binomial standard error `√(ε(1−ε)/N)`.
    pub se: f64,
    pub n: u64,
}

impl QberEstimate {
    pub fn from_counts(errors: u64, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InsufficientData("no sifted bits in this basis".into()));
        }
        let rate = errors as f64 / n as f64;
        Ok(QberEstimate { rate, se: (rate * (1.0 - rate) / n as f64).sqrt(), n })
    }
}

pub fn qber(bits: &[SiftedBit], basis: Basis) -> Result<QberEstimate> {
    let (mut n, mut err) = (0u64, 0u64);
    for b in bits.iter().filter(|b| b.basis == basis) {
        n += 1;
        err += u64::from(b.alice_bit != b.bob_bit);
    }
    QberEstimate::from_counts(err, n)
}

/// `−x·log₂x − (1−x)·log₂(1−x)`, zero at both ends.
pub fn binary_entropy<T: Real>(x: T) -> Result<T> {
    if !(x >= T::zero() && x <= T::one()) {
        return Err(Error::param("x", format!("{x} outside [0, 1]")));
    }
    let term = |p: T| if p > T::zero() { -p * p.log2() } else { T::zero() };
    Ok(term(x) + term(T::one() - x))
}

/// Inputs to the key-rate bound besides the error rates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkrParams<T = f64> {
    /// Reconciliation efficiency `f ≥ 1`.
    pub f: T,
    /// Sifting ratio `S` in (0, 1].
    pub sift_ratio: T,
    /// `R_r`, Hz.
    pub qubit_rate: T,
    pub alpha: T,
    pub eta: T,
}

impl<T: Real> SkrParams<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: T| v > T::zero() && v <= T::one();
        if !(self.f >= T::one()) {
            return Err(Error::param("f", format!("{} < 1", self.f)));
        }
        if !unit(self.sift_ratio) {
            return Err(Error::param("sift_ratio", "must lie in (0, 1]"));
        }
        if !(self.qubit_rate >= T::zero() && self.qubit_rate.is_finite()) {
            return Err(Error::param("qubit_rate", "must be finite and ≥ 0"));
        }
        if !unit(self.alpha) {
            return Err(Error::param("alpha", "must lie in (0, 1]"));
        }
        if !unit(self.eta) {
            return Err(Error::param("eta", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// `max(0, 1 − f·H₂(ε_Z) − H₂(ε_X))·S·R_r·α·η` in bits/s.
pub fn skr_lower_bound<T: Real>(eps_z: T, eps_x: T, params: &SkrParams<T>) -> Result<T> {
    let half = T::lit(0.5);
    for (name, e) in [("eps_z", eps_z), ("eps_x", eps_x)] {
        if !(e >= T::zero() && e <= half) {
            return Err(Error::param(name, format!("{e} outside [0, 0.5]")));
        }
    }
    params.validate()?;
    let bracket = T::one() - binary_entropy(eps_z)? * params.f - binary_entropy(eps_x)?;
    Ok(bracket.max(T::zero()) * params.sift_ratio * params.qubit_rate * params.alpha * params.eta)
}

/// Tally of the sixteen outcomes, indexed `[alice][bob]` in `{+, −, 0, 1}`
/// order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts(pub [[u64; 4]; 4]);

impl OutcomeCounts {
    pub fn add(&mut self, outcome: ProjectorOutcome) {
        self.0[outcome.alice.index()][outcome.bob.index()] += 1;
    }

    pub fn extend(&mut self, events: &[CoincidenceEvent]) {
        for e in events {
            self.add(e.outcome);
        }
    }

    pub fn merge(&mut self, other: &OutcomeCounts) {
        for i in 0..4 {
            for j in 0..4 {
                self.0[i][j] += other.0[i][j];
            }
        }
    }

    pub fn get(&self, outcome: ProjectorOutcome) -> u64 {
        self.0[outcome.alice.index()][outcome.bob.index()]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    fn block(&self, basis: Basis) -> [[u64; 2]; 2] {
        let mut b = [[0; 2]; 2];
        for (i, row) in b.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                let a = Projector::from_basis_bit(basis, i as u8);
                let c = Projector::from_basis_bit(basis, j as u8);
                *v = self.0[a.index()][c.index()];
            }
        }
        b
    }

    pub fn sifted(&self, basis: Basis) -> u64 {
        self.block(basis).iter().flatten().sum()
    }

    pub fn n_sifted(&self) -> u64 {
        self.sifted(Basis::X) + self.sifted(Basis::Z)
    }

    pub fn sift_ratio(&self) -> f64 {
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            self.n_sifted() as f64 / t as f64
        }
    }

    pub fn qber(&self, basis: Basis) -> Result<QberEstimate> {
        let b = self.block(basis);
        QberEstimate::from_counts(b[0][1] + b[1][0], self.sifted(basis))
    }

    pub fn correlation_matrix(&self) -> Result<CorrelationMatrix<f64>> {
        CorrelationMatrix::from_counts(&self.0)
    }
}

/// Per-run summary written as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub fiber_km: f64,
    pub eps_z: f64,
    pub eps_x: f64,
    pub se_z: f64,
    pub se_x: f64,
    pub sift_ratio: f64,
    pub skr_bps: f64,
    pub n_sifted: u64,
}

impl RunSummary {
    /// Measured-mode summary: `R_r` is the coincidence rate over
    /// `duration_s`, with `α = η = 1` since the losses are already in it.
    pub fn from_counts(fiber_km: f64, counts: &OutcomeCounts, duration_s: f64, f: f64) -> Result<Self> {
        let ez = counts.qber(Basis::Z)?;
        let ex = counts.qber(Basis::X)?;
        let params = SkrParams {
            f,
            sift_ratio: counts.sift_ratio(),
            qubit_rate: counts.total() as f64 / duration_s,
            alpha: 1.0,
            eta: 1.0,
        };
        let skr = skr_lower_bound(ez.rate.min(0.5), ex.rate.min(0.5), &params)?;
        Ok(RunSummary {
            fiber_km,
            eps_z: ez.rate,
            eps_x: ex.rate,
            se_z: ez.se,
            se_x: ex.se,
            sift_ratio: params.sift_ratio,
            skr_bps: skr,
            n_sifted: counts.n_sifted(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(label: &str, t: u64) -> CoincidenceEvent {
        let outcome: ProjectorOutcome = label.parse().unwrap();
        let (a, b) = outcome.detectors();
        CoincidenceEvent { alice_time_ps: t, alice_detector: a, bob_detector: b, delta_t_ps: 0, outcome }
    }

    #[test]
    fn sift_examples() {
        let zz: Vec<_> = ["00", "11", "01"].iter().enumerate().map(|(i, l)| ev(l, i as u64)).collect();
        let (bits, s) = sift(&zz);
        assert_eq!(s, 1.0);
        assert_eq!(bits.len(), 3);
        assert_eq!((bits[2].alice_bit, bits[2].bob_bit), (0, 1));

        let all: Vec<_> = ProjectorOutcome::all().map(|o| ev(&o.label(), 0)).collect();
        let (bits, s) = sift(&all);
        assert_eq!(s, 0.5);
        assert!(bits.iter().all(|b| b.basis == Basis::X || b.basis == Basis::Z));
        assert_eq!(sift(&[]).1, 0.0);
    }

    #[test]
    fn qber_examples() {
        let same: Vec<_> = (0..10).map(|i| SiftedBit { basis: Basis::Z, alice_bit: i % 2, bob_bit: i % 2, timestamp_ps: 0 }).collect();
        assert_eq!(qber(&same, Basis::Z).unwrap().rate, 0.0);
        let flip: Vec<_> = (0..10).map(|i| SiftedBit { basis: Basis::X, alice_bit: i % 2, bob_bit: 1 - i % 2, timestamp_ps: 0 }).collect();
        let q = qber(&flip, Basis::X).unwrap();
        assert_eq!((q.rate, q.se, q.n), (1.0, 0.0, 10));
        assert!(matches!(qber(&same, Basis::X), Err(Error::InsufficientData(_))));
        let e = QberEstimate::from_counts(10, 100).unwrap();
        assert!((e.se - (0.1f64 * 0.9 / 100.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.11f64).unwrap() - 0.4999).abs() < 1e-4);
        assert!(binary_entropy(1.5).is_err());
    }

    fn params(f: f64) -> SkrParams {
        SkrParams { f, sift_ratio: 0.5, qubit_rate: 1000.0, alpha: 0.8, eta: 0.9 }
    }

    #[test]
    fn skr_examples() {
        assert_eq!(skr_lower_bound(0.0, 0.0, &params(1.0)).unwrap(), 0.5 * 1000.0 * 0.8 * 0.9);
        // H₂(0.11) = 0.49992, so the bracket is 1.7e-4 rather than exactly 0.
        let p = params(1.0);
        let prefactor = p.sift_ratio * p.qubit_rate * p.alpha * p.eta;
        let near_zero = skr_lower_bound(0.11, 0.11, &p).unwrap();
        assert!(near_zero >= 0.0 && near_zero / prefactor < 2e-4);
        assert_eq!(skr_lower_bound(0.12, 0.12, &p).unwrap(), 0.0);
        assert!(skr_lower_bound(0.6, 0.0, &params(1.0)).is_err());
        assert!(skr_lower_bound(0.0, 0.0, &params(0.9)).is_err());
        let mut bad = params(1.1);
        bad.alpha = 0.0;
        assert!(skr_lower_bound(0.01, 0.01, &bad).is_err());
    }

    #[test]
    fn counts_match_event_sifting() {
        let labels = ["00", "01", "++", "+-", "0+", "1-", "11", "--"];
        let events: Vec<_> = labels.iter().enumerate().map(|(i, l)| ev(l, i as u64)).collect();
        let mut c = OutcomeCounts::default();
        c.extend(&events);
        let (bits, s) = sift(&events);
        assert_eq!(c.sift_ratio(), s);
        assert_eq!(c.n_sifted(), bits.len() as u64);
        assert_eq!(c.qber(Basis::Z).unwrap(), qber(&bits, Basis::Z).unwrap());
        assert_eq!(c.qber(Basis::X).unwrap(), qber(&bits, Basis::X).unwrap());
    }
}
