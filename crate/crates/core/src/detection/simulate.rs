use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use super::delays::DelayMap;
use super::losses::survival_probability;
use super::types::{DetectorId, Party, Projector, TimestampRecord};
use crate::config::LinkConfig;
use crate::error::Result;
use crate::qstate::{noisy_state, outcome_probabilities_unchecked, Basis, MeasurementSetting};
use crate::rng::{substream, SimRng};

const PS_PER_S: f64 = 1e12;
const JITTER_CLAMP_SIGMAS: f64 = 10.0;

/// State rotation and Bob's X analysis phase in force during a segment.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseSetting {
    pub state_theta: f64,
    pub bob_phase: f64,
}

/// Per-projector detection probabilities (Bob's include the spool).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurvivalTable {
    pub alice: [f64; 4],
    pub bob: [f64; 4],
    /// Bob's values without the spool, seen by noise entering after it.
    pub bob_bare: [f64; 4],
}

impl SurvivalTable {
    pub fn from_link(link: &LinkConfig) -> Self {
        let s = |party, p, spool| survival_probability(&link.losses, &link.detectors, party, p, spool);
        SurvivalTable {
            alice: Projector::ALL.map(|p| s(Party::Alice, p, None)),
            bob: Projector::ALL.map(|p| s(Party::Bob, p, Some(&link.spool))),
            bob_bare: Projector::ALL.map(|p| s(Party::Bob, p, None)),
        }
    }
}

/// Records of one party within one segment, sorted by `(time, detector)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SegmentStreams {
    pub index: u64,
    pub start_ps: u64,
    pub end_ps: u64,
    pub alice: Vec<TimestampRecord>,
    pub bob: Vec<TimestampRecord>,
}

#[derive(Clone, Copy, Debug)]
enum Category {
    Both(Projector, Projector),
    AliceOnly(Projector),
    BobOnly(Projector),
}

/// Outcome table `[alice bit][bob bit]` of the rotated Werner state for a
/// basis pair, with Bob's X result flipped with probability `x_flip`.
pub fn joint_outcome_table(p_werner: f64, x_flip: f64, phase: PhaseSetting, alice: Basis, bob: Basis) -> [[f64; 2]; 2] {
    let rho = noisy_state(p_werner, phase.state_theta).expect("werner weight checked by caller");
    let sa = match alice {
        Basis::Z => MeasurementSetting::z(),
        Basis::X => MeasurementSetting::x(0.0),
    };
    let sb = match bob {
        Basis::Z => MeasurementSetting::z(),
        Basis::X => MeasurementSetting::x(phase.bob_phase),
    };
    let mut t = outcome_probabilities_unchecked(&rho, &sa, &sb);
    if bob == Basis::X {
        for row in t.iter_mut() {
            let (p0, p1) = (row[0], row[1]);
            row[0] = (1.0 - x_flip) * p0 + x_flip * p1;
            row[1] = (1.0 - x_flip) * p1 + x_flip * p0;
        }
    }
    t
}

pub(crate) fn basis_prob(p_x: f64, b: Basis) -> f64 {
    match b {
        Basis::X => p_x,
        Basis::Z => 1.0 - p_x,
    }
}

/// Segment-wise generator of detection streams for one link.
#[derive(Clone, Debug)]
pub struct Simulator {
    seed: u64,
    pair_rate: f64,
    p_werner: f64,
    x_flip: f64,
    alice_x: f64,
    bob_x: f64,
    survival: SurvivalTable,
    delays: DelayMap,
    jitter_ps: [f64; 6],
    /// Per-party noise: total rate (Hz) and cumulative detector weights.
    noise: [(f64, Vec<(f64, DetectorId)>); 2],
    segment_ps: u64,
    duration_ps: u64,
}

impl Simulator {
    pub fn new(link: &LinkConfig, duration_s: f64, seed: u64) -> Result<Self> {
        link.validate()?;
        let survival = SurvivalTable::from_link(link);
        let mut jitter_ps = [0.0; 6];
        let mut dark = [0.0; 6];
        for d in &link.detectors {
            jitter_ps[d.id.slot()] = d.jitter_sigma * PS_PER_S;
            dark[d.id.slot()] = d.dark_rate;
        }
        let nc = link.noise.chip_noise_rate;
        let nrx = link.noise.receiver_noise_rate;
        let mut rates = dark;
        for p in Projector::ALL {
            let ra = nc * basis_prob(link.routing.alice_x_probability, p.basis()) * 0.5;
            rates[p.detector(Party::Alice).slot()] += ra * survival.alice[p.index()];
            let rb = basis_prob(link.routing.bob_x_probability, p.basis()) * 0.5;
            rates[p.detector(Party::Bob).slot()] +=
                rb * (nc * survival.bob[p.index()] + nrx * survival.bob_bare[p.index()]);
        }
        let party_noise = |dets: [DetectorId; 3]| {
            let total: f64 = dets.iter().map(|d| rates[d.slot()]).sum();
            let mut acc = 0.0;
            let cum = dets
                .iter()
                .map(|d| {
                    acc += rates[d.slot()];
                    (if total > 0.0 { acc / total } else { 0.0 }, *d)
                })
                .collect();
            (total, cum)
        };
        use DetectorId::*;
        let segment_ps = (link.simulation.segment_duration * PS_PER_S).round().max(1.0) as u64;
        Ok(Simulator {
            seed,
            pair_rate: link.source.pair_rate(),
            p_werner: link.noise.p_werner,
            x_flip: link.noise.x_flip_prob,
            alice_x: link.routing.alice_x_probability,
            bob_x: link.routing.bob_x_probability,
            survival,
            delays: link.delays.clone(),
            jitter_ps,
            noise: [party_noise([D1, D2, D3]), party_noise([D4, D5, D6])],
            segment_ps,
            duration_ps: (duration_s.max(0.0) * PS_PER_S).round() as u64,
        })
    }

    pub fn survival(&self) -> &SurvivalTable {
        &self.survival
    }

    /// Mean noise-plus-dark rate per party (Hz), Alice first.
    pub fn noise_rates(&self) -> [f64; 2] {
        [self.noise[0].0, self.noise[1].0]
    }

    pub fn segment_count(&self) -> u64 {
        self.duration_ps.div_ceil(self.segment_ps)
    }

    pub fn segment_bounds(&self, index: u64) -> (u64, u64) {
        let start = index * self.segment_ps;
        (start, (start + self.segment_ps).min(self.duration_ps))
    }

    /// Midpoint of a segment in seconds; the phase is held at its value there.
    pub fn segment_midpoint_s(&self, index: u64) -> f64 {
        let (a, b) = self.segment_bounds(index);
        (a + b) as f64 / 2.0 / PS_PER_S
    }

    /// Largest amount by which a record can precede its segment start.
    pub fn lookback_ps(&self) -> u64 {
        let max_sigma = self.jitter_ps.iter().copied().fold(0.0, f64::max);
        (JITTER_CLAMP_SIGMAS * max_sigma).ceil() as u64 + 1
    }

    /// Joint outcome table for a basis pair, including Bob's X flip.
    pub fn joint_probabilities(&self, phase: PhaseSetting, alice: Basis, bob: Basis) -> [[f64; 2]; 2] {
        joint_outcome_table(self.p_werner, self.x_flip, phase, alice, bob)
    }

    fn categories(&self, phase: PhaseSetting) -> (f64, Vec<(f64, Category)>) {
        let mut cats = Vec::with_capacity(24);
        let mut alice_only = [0.0; 4];
        let mut bob_only = [0.0; 4];
        for ab in [Basis::X, Basis::Z] {
            for bb in [Basis::X, Basis::Z] {
                let route = basis_prob(self.alice_x, ab) * basis_prob(self.bob_x, bb);
                let t = self.joint_probabilities(phase, ab, bb);
                for (i, row) in t.iter().enumerate() {
                    for (j, p) in row.iter().enumerate() {
                        let pa = Projector::from_basis_bit(ab, i as u8);
                        let pb = Projector::from_basis_bit(bb, j as u8);
                        let w = route * p;
                        let sa = self.survival.alice[pa.index()];
                        let sb = self.survival.bob[pb.index()];
                        cats.push((w * sa * sb, Category::Both(pa, pb)));
                        alice_only[pa.index()] += w * sa * (1.0 - sb);
                        bob_only[pb.index()] += w * (1.0 - sa) * sb;
                    }
                }
            }
        }
        for p in Projector::ALL {
            cats.push((alice_only[p.index()], Category::AliceOnly(p)));
            cats.push((bob_only[p.index()], Category::BobOnly(p)));
        }
        let total: f64 = cats.iter().map(|c| c.0).sum();
        let mut acc = 0.0;
        for c in cats.iter_mut() {
            acc += c.0;
            c.0 = if total > 0.0 { acc / total } else { 0.0 };
        }
        (total, cats)
    }

    /// Probability that an emitted pair leaves at least one click.
    pub fn visible_fraction(&self, phase: PhaseSetting) -> f64 {
        self.categories(phase).0
    }

    fn jitter(&self, rng: &mut SimRng, det: DetectorId) -> i64 {
        let sigma = self.jitter_ps[det.slot()];
        if sigma <= 0.0 {
            return 0;
        }
        let z: f64 = rng.sample(StandardNormal);
        (z.clamp(-JITTER_CLAMP_SIGMAS, JITTER_CLAMP_SIGMAS) * sigma).round() as i64
    }

    fn push_click(&self, out: &mut Vec<TimestampRecord>, rng: &mut SimRng, det: DetectorId, base: u64, path: i64) {
        let t = base as i64 + path + self.jitter(rng, det);
        if t >= 0 {
            out.push(TimestampRecord::new(det, t as u64));
        }
    }

    /// Generates one segment. Depends only on `(seed, index, phase)`.
    pub fn segment(&self, index: u64, phase: PhaseSetting) -> SegmentStreams {
        let (start, end) = self.segment_bounds(index);
        let mut rng = substream(self.seed, "detection", index);
        let span_s = (end.saturating_sub(start)) as f64 / PS_PER_S;
        let mut sig_a = Vec::new();
        let mut sig_b = Vec::new();

        let (p_vis, cats) = self.categories(phase);
        let rate = self.pair_rate * p_vis;
        if rate > 0.0 && span_s > 0.0 {
            let mut t = 0.0;
            loop {
                let gap: f64 = rng.sample(Exp1);
                t += gap / rate;
                if t >= span_s {
                    break;
                }
                let base = start + (t * PS_PER_S) as u64;
                let u: f64 = rng.random();
                let cat = cats.iter().find(|c| u < c.0).unwrap_or(&cats[cats.len() - 1]).1;
                match cat {
                    Category::Both(a, b) => {
                        let (da, db) = (a.detector(Party::Alice), b.detector(Party::Bob));
                        self.push_click(&mut sig_a, &mut rng, da, base, self.delays.path_delay_ps(Party::Alice, a));
                        self.push_click(&mut sig_b, &mut rng, db, base, self.delays.path_delay_ps(Party::Bob, b));
                    }
                    Category::AliceOnly(a) => {
                        let da = a.detector(Party::Alice);
                        self.push_click(&mut sig_a, &mut rng, da, base, self.delays.path_delay_ps(Party::Alice, a));
                    }
                    Category::BobOnly(b) => {
                        let db = b.detector(Party::Bob);
                        self.push_click(&mut sig_b, &mut rng, db, base, self.delays.path_delay_ps(Party::Bob, b));
                    }
                }
            }
        }
        sig_a.sort_unstable();
        sig_b.sort_unstable();

        let noise_a = self.noise_stream(&mut rng, 0, start, span_s);
        let noise_b = self.noise_stream(&mut rng, 1, start, span_s);
        SegmentStreams {
            index,
            start_ps: start,
            end_ps: end,
            alice: merge_sorted(sig_a, noise_a),
            bob: merge_sorted(sig_b, noise_b),
        }
    }

    fn noise_stream(&self, rng: &mut SimRng, party: usize, start: u64, span_s: f64) -> Vec<TimestampRecord> {
        let (rate, cum) = &self.noise[party];
        let mut out = Vec::new();
        if *rate <= 0.0 || span_s <= 0.0 {
            return out;
        }
        out.reserve((rate * span_s * 1.05) as usize + 16);
        let mut t = 0.0;
        loop {
            let gap: f64 = rng.sample(Exp1);
            t += gap / rate;
            if t >= span_s {
                break;
            }
            let u: f64 = rng.random();
            let det = cum.iter().find(|c| u < c.0).unwrap_or(&cum[2]).1;
            out.push(TimestampRecord::new(det, start + (t * PS_PER_S) as u64));
        }
        // Rounding can put equal times out of detector order.
        out.sort_unstable();
        out
    }
}

/// Two-way merge of sorted record vectors.
pub(crate) fn merge_sorted(a: Vec<TimestampRecord>, b: Vec<TimestampRecord>) -> Vec<TimestampRecord> {
    if a.is_empty() {
        return b;
    }
    if b.is_empty() {
        return a;
    }
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Reassembles globally sorted streams from segments fed in index order.
#[derive(Clone, Debug, Default)]
pub struct StreamMerger {
    lookback_ps: u64,
    alice: Vec<TimestampRecord>,
    bob: Vec<TimestampRecord>,
}

impl StreamMerger {
    pub fn new(lookback_ps: u64) -> Self {
        StreamMerger { lookback_ps, ..Default::default() }
    }

    /// Adds a segment and returns the records that no later segment can
    /// precede.
    pub fn push(&mut self, seg: SegmentStreams) -> (Vec<TimestampRecord>, Vec<TimestampRecord>) {
        let cutoff = seg.end_ps.saturating_sub(self.lookback_ps);
        let a = merge_sorted(std::mem::take(&mut self.alice), seg.alice);
        let b = merge_sorted(std::mem::take(&mut self.bob), seg.bob);
        let (fa, ra) = split_before(a, cutoff);
        let (fb, rb) = split_before(b, cutoff);
        self.alice = ra;
        self.bob = rb;
        (fa, fb)
    }

    pub fn finish(self) -> (Vec<TimestampRecord>, Vec<TimestampRecord>) {
        (self.alice, self.bob)
    }
}

fn split_before(mut v: Vec<TimestampRecord>, cutoff: u64) -> (Vec<TimestampRecord>, Vec<TimestampRecord>) {
    let k = v.partition_point(|r| r.time_ps < cutoff);
    let rest = v.split_off(k);
    (v, rest)
}

/// Full streams for `duration_s` seconds, `phase(t)` sampled at each segment
/// midpoint. Returns Alice's (D1–D3) and Bob's (D4–D6) records, each sorted.
pub fn simulate_streams(
    link: &LinkConfig,
    duration_s: f64,
    phase: &(dyn Fn(f64) -> PhaseSetting + Sync),
    seed: u64,
) -> Result<(Vec<TimestampRecord>, Vec<TimestampRecord>)> {
    let sim = Simulator::new(link, duration_s, seed)?;
    let segments: Vec<SegmentStreams> = (0..sim.segment_count())
        .into_par_iter()
        .map(|i| sim.segment(i, phase(sim.segment_midpoint_s(i))))
        .collect();
    let mut merger = StreamMerger::new(sim.lookback_ps());
    let (mut alice, mut bob) = (Vec::new(), Vec::new());
    for seg in segments {
        let (a, b) = merger.push(seg);
        alice.extend(a);
        bob.extend(b);
    }
    let (a, b) = merger.finish();
    alice.extend(a);
    bob.extend(b);
    Ok((alice, bob))
}
