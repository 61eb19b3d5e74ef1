use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::types::{DetectorId, Party, Projector, ProjectorOutcome};
use crate::error::{Error, Result};
use crate::qstate::Basis;

/// Relative-delay decode. Bob's time minus Alice's time is `0` for XX, `2τ`
/// for XZ, `−τ` for ZX and `τ` for ZZ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayMap {
    /// τ in seconds.
    pub tau: f64,
    /// Total coincidence window in seconds (accepts ±window/2).
    pub window: f64,
}

impl Default for DelayMap {
    fn default() -> Self {
        DelayMap { tau: 10e-9, window: 700e-12 }
    }
}

impl DelayMap {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1e-6) {
            return Err(Error::param("delays.tau", "must lie in (0, 1 µs)"));
        }
        if !(self.window > 0.0) {
            return Err(Error::param("delays.window", "must be > 0"));
        }
        if self.window / 2.0 >= self.tau / 2.0 {
            return Err(Error::param(
                "delays.window",
                format!("half-window {} s must be below τ/2 = {} s for unambiguous decode", self.window / 2.0, self.tau / 2.0),
            ));
        }
        Ok(())
    }

    pub fn tau_ps(&self) -> i64 {
        (self.tau * 1e12).round() as i64
    }

    pub fn half_window_ps(&self) -> i64 {
        (self.window * 1e12 / 2.0).round() as i64
    }

    /// Fixed delay of a single-party path, in ps.
    pub fn path_delay_ps(&self, party: Party, projector: Projector) -> i64 {
        match (party, projector.basis()) {
            (_, Basis::X) => 0,
            (Party::Alice, Basis::Z) => self.tau_ps(),
            (Party::Bob, Basis::Z) => 2 * self.tau_ps(),
        }
    }

    /// Nominal `t_bob − t_alice` for an outcome, in ps.
    pub fn delay_for(&self, outcome: ProjectorOutcome) -> i64 {
        self.path_delay_ps(Party::Bob, outcome.bob) - self.path_delay_ps(Party::Alice, outcome.alice)
    }

    pub fn min_delay_ps(&self) -> i64 {
        -self.tau_ps()
    }

    pub fn max_delay_ps(&self) -> i64 {
        2 * self.tau_ps()
    }

    /// Precomputed `(nominal delay, outcome)` lists per detector pair.
    pub fn decoder(&self) -> Decoder {
        let mut table = vec![Vec::new(); 9];
        for o in ProjectorOutcome::all() {
            let (a, b) = o.detectors();
            table[Decoder::slot(a, b)].push((self.delay_for(o), o));
        }
        Decoder { table, half_window: self.half_window_ps() }
    }

    /// All sixteen `(detectors, delay) → outcome` entries.
    pub fn entries(&self) -> HashMap<(DetectorId, DetectorId, i64), ProjectorOutcome> {
        ProjectorOutcome::all().map(|o| {
            let (a, b) = o.detectors();
            ((a, b, self.delay_for(o)), o)
        }).collect()
    }
}

/// Fast lookup from (Alice detector, Bob detector, Δt) to an outcome.
#[derive(Clone, Debug)]
pub struct Decoder {
    table: Vec<Vec<(i64, ProjectorOutcome)>>,
    half_window: i64,
}

impl Decoder {
    fn slot(a: DetectorId, b: DetectorId) -> usize {
        a.slot() * 3 + (b.slot() - 3)
    }

    pub fn half_window(&self) -> i64 {
        self.half_window
    }

    /// Nominal delays available to a detector pair.
    pub fn candidates(&self, a: DetectorId, b: DetectorId) -> &[(i64, ProjectorOutcome)] {
        &self.table[Self::slot(a, b)]
    }

    /// Outcome and residual `Δt − nominal` if `Δt` falls inside a window.
    pub fn decode(&self, a: DetectorId, b: DetectorId, delta_t: i64) -> Option<(ProjectorOutcome, i64)> {
        self.candidates(a, b)
            .iter()
            .map(|&(d, o)| (o, delta_t - d))
            .find(|&(_, r)| r.abs() <= self.half_window)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use DetectorId::*;

    fn o(s: &str) -> ProjectorOutcome {
        s.parse().unwrap()
    }

    #[test]
    fn decode_table_rows() {
        let m = DelayMap::default();
        let tau = m.tau_ps();
        assert_eq!(tau, 10_000);
        let table = [
            ("++", D1, D4, 0), ("+-", D1, D5, 0), ("+0", D1, D5, 2), ("+1", D1, D6, 2),
            ("-+", D2, D4, 0), ("0+", D2, D4, -1), ("--", D2, D5, 0), ("-0", D2, D5, 2),
            ("0-", D2, D5, -1), ("00", D2, D5, 1), ("-1", D2, D6, 2), ("01", D2, D6, 1),
            ("1+", D3, D4, -1), ("1-", D3, D5, -1), ("10", D3, D5, 1), ("11", D3, D6, 1),
        ];
        let entries = m.entries();
        assert_eq!(entries.len(), 16);
        for (label, a, b, k) in table {
            let out = o(label);
            assert_eq!(out.detectors(), (a, b), "{label}");
            assert_eq!(m.delay_for(out), k * tau, "{label}");
            assert_eq!(entries[&(a, b, k * tau)], out);
        }
    }

    #[test]
    fn d2_d5_has_four_distinct_delays() {
        let m = DelayMap::default();
        let dec = m.decoder();
        let mut delays: Vec<i64> = dec.candidates(D2, D5).iter().map(|c| c.0).collect();
        delays.sort();
        assert_eq!(delays, vec![-10_000, 0, 10_000, 20_000]);
        assert_eq!(dec.decode(D2, D5, 10_300).unwrap().0, o("00"));
        assert_eq!(dec.decode(D2, D5, 10_351), None);
        assert_eq!(dec.decode(D1, D4, 30).unwrap(), (o("++"), 30));
    }

    #[test]
    fn window_must_be_below_half_tau() {
        let bad = DelayMap { tau: 1e-9, window: 1e-9 };
        assert!(bad.validate().is_err());
        DelayMap::default().validate().unwrap();
    }
}
