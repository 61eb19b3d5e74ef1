#![allow(dead_code)]

use freqbin_qkd::coincidence::{CoincidenceEvent, CoincidenceFinder};
use freqbin_qkd::detection::{DelayMap, DetectorId, Projector, ProjectorOutcome, TimestampRecord};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Nominal Bob-minus-Alice delay of each basis pair, in units of τ.
fn nominal_delay(o: ProjectorOutcome, tau: i64) -> i64 {
    let z = |p: Projector| matches!(p, Projector::Zero | Projector::One);
    match (z(o.alice), z(o.bob)) {
        (false, false) => 0,
        (false, true) => 2 * tau,
        (true, false) => -tau,
        (true, true) => tau,
    }
}

fn alice_det(p: Projector) -> DetectorId {
    match p {
        Projector::Plus => DetectorId::D1,
        Projector::Minus | Projector::Zero => DetectorId::D2,
        Projector::One => DetectorId::D3,
    }
}

fn bob_det(p: Projector) -> DetectorId {
    match p {
        Projector::Plus => DetectorId::D4,
        Projector::Minus | Projector::Zero => DetectorId::D5,
        Projector::One => DetectorId::D6,
    }
}

/// Quadratic reference matcher: for each Alice record in order, scan every
/// unused Bob record against every outcome and keep the smallest
/// `(|residual|, bob time, bob detector)`.
pub fn brute_force_match(alice: &[TimestampRecord], bob: &[TimestampRecord], tau: i64, half: i64) -> Vec<CoincidenceEvent> {
    let all: Vec<ProjectorOutcome> = Projector::ALL
        .iter()
        .flat_map(|&a| Projector::ALL.iter().map(move |&b| ProjectorOutcome::new(a, b)))
        .collect();
    let mut used = vec![false; bob.len()];
    let mut out = Vec::new();
    for a in alice {
        let mut best: Option<((i64, u64, DetectorId), usize, ProjectorOutcome)> = None;
        for (j, b) in bob.iter().enumerate() {
            if used[j] {
                continue;
            }
            let dt = b.time_ps as i64 - a.time_ps as i64;
            for &o in &all {
                if alice_det(o.alice) != a.detector || bob_det(o.bob) != b.detector {
                    continue;
                }
                let r = dt - nominal_delay(o, tau);
                if r.abs() <= half {
                    let key = (r.abs(), b.time_ps, b.detector);
                    if best.map_or(true, |(k, _, _)| key < k) {
                        best = Some((key, j, o));
                    }
                }
            }
        }
        if let Some(((_, tb, bd), j, o)) = best {
            used[j] = true;
            out.push(CoincidenceEvent {
                alice_time_ps: a.time_ps,
                alice_detector: a.detector,
                bob_detector: bd,
                delta_t_ps: tb as i64 - a.time_ps as i64,
                outcome: o,
            });
        }
    }
    out
}

/// Random streams with correlated pairs, contested partners and idle gaps
/// wide enough to allow independent slices.
pub fn random_instance(seed: u64, max_records: usize, tau: i64, half: i64) -> (Vec<TimestampRecord>, Vec<TimestampRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=max_records.max(2));
    let alice_dets = [DetectorId::D1, DetectorId::D2, DetectorId::D3];
    let bob_dets = [DetectorId::D4, DetectorId::D5, DetectorId::D6];
    let (mut alice, mut bob) = (Vec::new(), Vec::new());
    let mut t: u64 = 5 * tau as u64;
    while alice.len() + bob.len() < n {
        t += if rng.random_bool(0.05) { rng.random_range(0..(20 * tau as u64)) } else { rng.random_range(0..(tau as u64)) };
        match rng.random_range(0..4) {
            0 => alice.push(TimestampRecord::new(alice_dets[rng.random_range(0..3)], t)),
            1 => bob.push(TimestampRecord::new(bob_dets[rng.random_range(0..3)], t)),
            _ => {
                let a = Projector::ALL[rng.random_range(0..4)];
                let b = Projector::ALL[rng.random_range(0..4)];
                let o = ProjectorOutcome::new(a, b);
                let jitter = rng.random_range(-(half + 50)..=(half + 50));
                let tb = (t as i64 + nominal_delay(o, tau) + jitter).max(0) as u64;
                alice.push(TimestampRecord::new(alice_det(a), t));
                bob.push(TimestampRecord::new(bob_det(b), tb));
                if rng.random_bool(0.2) {
                    // A second Bob click competing for the same Alice record.
                    let tb2 = (tb as i64 + rng.random_range(-half..=half)).max(0) as u64;
                    bob.push(TimestampRecord::new(bob_det(b), tb2));
                }
            }
        }
    }
    alice.sort_unstable();
    bob.sort_unstable();
    (alice, bob)
}

/// Feeds both streams to the incremental matcher in chunks of `chunk_ps`,
/// processing up to each chunk boundary.
pub fn streamed(alice: &[TimestampRecord], bob: &[TimestampRecord], delays: &DelayMap, chunk_ps: u64) -> Vec<CoincidenceEvent> {
    let mut f = CoincidenceFinder::new(delays);
    let mut out = Vec::new();
    let end = alice.iter().chain(bob).map(|r| r.time_ps).max().unwrap_or(0) + 1;
    let (mut ia, mut ib) = (0, 0);
    let mut w = chunk_ps;
    while w < end + chunk_ps {
        let na = alice[ia..].partition_point(|r| r.time_ps < w) + ia;
        let nb = bob[ib..].partition_point(|r| r.time_ps < w) + ib;
        f.push_alice(&alice[ia..na]).unwrap();
        f.push_bob(&bob[ib..nb]).unwrap();
        f.process(w, &mut out);
        ia = na;
        ib = nb;
        w += chunk_ps;
    }
    f.finish(&mut out);
    out
}
