use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qstate::Basis;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

/// Single-party projector, ordered `{+, −, 0, 1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Projector {
    Plus,
    Minus,
    Zero,
    One,
}

impl Projector {
    pub const ALL: [Projector; 4] = [Projector::Plus, Projector::Minus, Projector::Zero, Projector::One];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn basis(self) -> Basis {
        match self {
            Projector::Plus | Projector::Minus => Basis::X,
            Projector::Zero | Projector::One => Basis::Z,
        }
    }

    /// Outcome index inside its basis: `+`/`0` → 0, `−`/`1` → 1.
    pub fn bit(self) -> u8 {
        match self {
            Projector::Plus | Projector::Zero => 0,
            Projector::Minus | Projector::One => 1,
        }
    }

    pub fn from_basis_bit(basis: Basis, bit: u8) -> Self {
        match (basis, bit) {
            (Basis::X, 0) => Projector::Plus,
            (Basis::X, _) => Projector::Minus,
            (Basis::Z, 0) => Projector::Zero,
            (Basis::Z, _) => Projector::One,
        }
    }

    pub fn label(self) -> &'static str {
        ["+", "-", "0", "1"][self.index()]
    }

    /// Detector clicking for this projector (six-detector wiring).
    pub fn detector(self, party: Party) -> DetectorId {
        use DetectorId::*;
        match (party, self) {
            (Party::Alice, Projector::Plus) => D1,
            (Party::Alice, Projector::Minus | Projector::Zero) => D2,
            (Party::Alice, Projector::One) => D3,
            (Party::Bob, Projector::Plus) => D4,
            (Party::Bob, Projector::Minus | Projector::Zero) => D5,
            (Party::Bob, Projector::One) => D6,
        }
    }
}

impl fmt::Display for Projector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Projector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "+" => Ok(Projector::Plus),
            "-" => Ok(Projector::Minus),
            "0" => Ok(Projector::Zero),
            "1" => Ok(Projector::One),
            _ => Err(Error::Parse(format!("unknown projector `{s}`"))),
        }
    }
}

/// Joint outcome `⟨alice bob|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProjectorOutcome {
    pub alice: Projector,
    pub bob: Projector,
}

impl ProjectorOutcome {
    pub fn new(alice: Projector, bob: Projector) -> Self {
        ProjectorOutcome { alice, bob }
    }

    pub fn all() -> impl Iterator<Item = ProjectorOutcome> {
        Projector::ALL.into_iter().flat_map(|a| Projector::ALL.into_iter().map(move |b| ProjectorOutcome::new(a, b)))
    }

    pub fn detectors(&self) -> (DetectorId, DetectorId) {
        (self.alice.detector(Party::Alice), self.bob.detector(Party::Bob))
    }

    pub fn label(&self) -> String {
        format!("{}{}", self.alice, self.bob)
    }
}

impl fmt::Display for ProjectorOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.alice, self.bob)
    }
}

impl FromStr for ProjectorOutcome {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.chars();
        match (chars.next(), chars.next(), chars.next()) {
            (Some(a), Some(b), None) => Ok(ProjectorOutcome::new(a.to_string().parse()?, b.to_string().parse()?)),
            _ => Err(Error::Parse(format!("bad outcome label `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum DetectorId {
    D1 = 1,
    D2 = 2,
    D3 = 3,
    D4 = 4,
    D5 = 5,
    D6 = 6,
}

impl DetectorId {
    pub const ALL: [DetectorId; 6] = [DetectorId::D1, DetectorId::D2, DetectorId::D3, DetectorId::D4, DetectorId::D5, DetectorId::D6];

    pub fn number(self) -> u8 {
        self as u8
    }

    /// Zero-based position in [`DetectorId::ALL`].
    pub fn slot(self) -> usize {
        self as usize - 1
    }

    pub fn from_number(n: u8) -> Result<Self> {
        Self::ALL
            .get(usize::from(n).wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::Parse(format!("detector id {n} outside 1..=6")))
    }

    pub fn party(self) -> Party {
        if self.number() <= 3 {
            Party::Alice
        } else {
            Party::Bob
        }
    }

    /// Projectors wired to this detector.
    pub fn projectors(self) -> Vec<Projector> {
        let party = self.party();
        Projector::ALL.into_iter().filter(|p| p.detector(party) == self).collect()
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "D{}", self.number())
    }
}

impl FromStr for DetectorId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let digits = s.trim().trim_start_matches(['D', 'd']);
        let n: u8 = digits.parse().map_err(|_| Error::Parse(format!("bad detector `{s}`")))?;
        Self::from_number(n)
    }
}

/// One click: detector and arrival time in picoseconds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimestampRecord {
    pub time_ps: u64,
    pub detector: DetectorId,
}

impl TimestampRecord {
    pub fn new(detector: DetectorId, time_ps: u64) -> Self {
        TimestampRecord { time_ps, detector }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub id: DetectorId,
    pub efficiency: f64,
    /// Hz.
    pub dark_rate: f64,
    /// Gaussian timing jitter, seconds.
    pub jitter_sigma: f64,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::param(format!("detector {}.efficiency", self.id), "must lie in [0, 1]"));
        }
        if !(self.dark_rate >= 0.0 && self.dark_rate.is_finite()) {
            return Err(Error::param(format!("detector {}.dark_rate", self.id), "must be finite and ≥ 0"));
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma < 1e-9) {
            return Err(Error::param(format!("detector {}.jitter_sigma", self.id), "must lie in [0, 1 ns)"));
        }
        Ok(())
    }

    /// The six default detectors: 85 % efficiency except D4 and D6 at 73 %.
    pub fn defaults() -> Vec<DetectorConfig> {
        DetectorId::ALL
            .into_iter()
            .map(|id| DetectorConfig {
                id,
                efficiency: if matches!(id, DetectorId::D4 | DetectorId::D6) { 0.73 } else { 0.85 },
                dark_rate: 120.0,
                jitter_sigma: 35e-12,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wiring_matches_decode_table() {
        use DetectorId::*;
        assert_eq!(D2.projectors(), vec![Projector::Minus, Projector::Zero]);
        assert_eq!(D5.projectors(), vec![Projector::Minus, Projector::Zero]);
        assert_eq!(D1.projectors(), vec![Projector::Plus]);
        assert_eq!(D6.projectors(), vec![Projector::One]);
        let o: ProjectorOutcome = "+0".parse().unwrap();
        assert_eq!(o.detectors(), (D1, D5));
    }

    #[test]
    fn labels_round_trip() {
        for o in ProjectorOutcome::all() {
            assert_eq!(o.label().parse::<ProjectorOutcome>().unwrap(), o);
        }
        assert_eq!(ProjectorOutcome::all().count(), 16);
        for d in DetectorId::ALL {
            assert_eq!(d.to_string().parse::<DetectorId>().unwrap(), d);
        }
        assert!(DetectorId::from_number(0).is_err());
        assert!(DetectorId::from_number(7).is_err());
    }
}
