use serde::{Deserialize, Serialize};

use super::types::{DetectorConfig, DetectorId, Party, Projector};
use crate::channel::{db_to_linear, spool_transmission, FiberSpool};
use crate::error::{Error, Result};

/// Chip-to-detector loss per projector in dB, ordered `{+, −, 0, 1}`.
/// The figures already contain a detector efficiency, listed in
/// `reference_efficiency` so that other detector settings rescale them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLossTable {
    pub alice_db: [f64; 4],
    pub bob_db: [f64; 4],
    /// Efficiencies of D1..D6 folded into the dB figures.
    pub reference_efficiency: [f64; 6],
}

impl Default for PathLossTable {
    fn default() -> Self {
        PathLossTable {
            alice_db: [13.0, 13.9, 8.4, 9.1],
            bob_db: [22.5, 21.7, 16.7, 16.6],
            reference_efficiency: [0.85, 0.85, 0.85, 0.73, 0.85, 0.73],
        }
    }
}

impl PathLossTable {
    pub fn validate(&self) -> Result<()> {
        for v in self.alice_db.iter().chain(&self.bob_db) {
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Error::param("losses", format!("dB figure {v} must be finite and ≥ 0")));
            }
        }
        for e in &self.reference_efficiency {
            if !(*e > 0.0 && *e <= 1.0) {
                return Err(Error::param("losses.reference_efficiency", "entries must lie in (0, 1]"));
            }
        }
        Ok(())
    }

    pub fn loss_db(&self, party: Party, projector: Projector) -> f64 {
        match party {
            Party::Alice => self.alice_db[projector.index()],
            Party::Bob => self.bob_db[projector.index()],
        }
    }

    pub fn reference_efficiency(&self, det: DetectorId) -> f64 {
        self.reference_efficiency[det.slot()]
    }
}

/// `10^(−dB/10)` for the projector, times the spool for Bob.
pub fn path_transmission(table: &PathLossTable, party: Party, projector: Projector, spool: Option<&FiberSpool>) -> f64 {
    let t = db_to_linear(table.loss_db(party, projector));
    match (party, spool) {
        (Party::Bob, Some(s)) => t * spool_transmission(s),
        _ => t,
    }
}

/// Detection probability for a photon entering the projector path, with
/// the table's efficiency swapped for the configured detector's.
pub fn survival_probability(
    table: &PathLossTable,
    detectors: &[DetectorConfig],
    party: Party,
    projector: Projector,
    spool: Option<&FiberSpool>,
) -> f64 {
    let det = projector.detector(party);
    let eff = detectors.iter().find(|d| d.id == det).map_or(0.0, |d| d.efficiency);
    (path_transmission(table, party, projector, spool) * eff / table.reference_efficiency(det)).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transmission_examples() {
        let t = PathLossTable::default();
        let a0 = path_transmission(&t, Party::Alice, Projector::Zero, None);
        assert!((a0 - 0.1445).abs() < 1e-4);
        let bp = path_transmission(&t, Party::Bob, Projector::Plus, None);
        assert!((bp - 0.00562).abs() < 1e-5);
        let spool = FiberSpool::with_length(26.0);
        let b1 = path_transmission(&t, Party::Bob, Projector::One, Some(&spool));
        assert!((b1 - 10f64.powf(-2.16)).abs() < 1e-9);
        // The spool never touches Alice.
        let a1 = path_transmission(&t, Party::Alice, Projector::One, Some(&spool));
        assert_eq!(a1, path_transmission(&t, Party::Alice, Projector::One, None));
    }

    #[test]
    fn default_ranges() {
        let t = PathLossTable::default();
        assert!(t.alice_db.iter().all(|v| (8.0..=14.0).contains(v)));
        assert!(t.bob_db.iter().all(|v| (16.0..=23.0).contains(v)));
    }

    #[test]
    fn survival_uses_configured_efficiency() {
        let t = PathLossTable::default();
        let dets = DetectorConfig::defaults();
        let s = survival_probability(&t, &dets, Party::Bob, Projector::One, None);
        assert!((s - path_transmission(&t, Party::Bob, Projector::One, None)).abs() < 1e-15);
        let mut half = dets.clone();
        half[5].efficiency = 0.365;
        let h = survival_probability(&t, &half, Party::Bob, Projector::One, None);
        assert!((h - s / 2.0).abs() < 1e-15);
    }
}
