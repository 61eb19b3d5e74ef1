mod common;

use common::{brute_force_match, random_instance, streamed};
use freqbin_qkd::coincidence::{find_coincidences, find_coincidences_parallel};
use freqbin_qkd::detection::{DelayMap, DetectorId, TimestampRecord};
use freqbin_qkd::Error;

#[test]
fn sequential_streaming_and_parallel_agree_with_brute_force() {
    let delays = DelayMap::default();
    let (tau, half) = (delays.tau_ps(), delays.half_window_ps());
    for seed in 0..25 {
        let (a, b) = random_instance(seed, 3000, tau, half);
        let expect = brute_force_match(&a, &b, tau, half);
        assert!(!expect.is_empty());
        assert_eq!(find_coincidences(&a, &b, &delays).unwrap(), expect, "seed {seed}");
        assert_eq!(streamed(&a, &b, &delays, 7 * tau as u64 + 13), expect, "streamed, seed {seed}");
        for pieces in [2, 5, 16] {
            assert_eq!(find_coincidences_parallel(&a, &b, &delays, pieces).unwrap(), expect, "{pieces} pieces, seed {seed}");
        }
    }
}

#[test]
fn closest_partner_wins_and_is_not_reused() {
    let delays = DelayMap::default();
    let tau = delays.tau_ps() as u64;
    let a = vec![TimestampRecord::new(DetectorId::D1, 1_000_000), TimestampRecord::new(DetectorId::D1, 1_000_010)];
    // Two XX candidates for the first Alice click; the second sits closer.
    let b = vec![TimestampRecord::new(DetectorId::D4, 1_000_200), TimestampRecord::new(DetectorId::D4, 1_000_005)];
    let mut b_sorted = b.clone();
    b_sorted.sort_unstable();
    let ev = find_coincidences(&a, &b_sorted, &delays).unwrap();
    assert_eq!(ev.len(), 2);
    assert_eq!(ev[0].delta_t_ps, 5);
    assert_eq!(ev[1].delta_t_ps, 190);
    assert!(tau > 1000);
}

#[test]
fn unsorted_stream_is_rejected() {
    let delays = DelayMap::default();
    let a = vec![TimestampRecord::new(DetectorId::D1, 10), TimestampRecord::new(DetectorId::D1, 5)];
    let err = find_coincidences(&a, &[], &delays).unwrap_err();
    assert!(matches!(err, Error::StreamOrder { index: 1, .. }));
    assert!(find_coincidences_parallel(&a, &[], &delays, 4).is_err());
}

#[test]
fn window_edges_are_inclusive() {
    let delays = DelayMap::default();
    let h = delays.half_window_ps() as u64;
    let t0 = 1_000_000u64;
    let a = [TimestampRecord::new(DetectorId::D1, t0)];
    let inside = [TimestampRecord::new(DetectorId::D4, t0 + h)];
    let outside = [TimestampRecord::new(DetectorId::D4, t0 + h + 1)];
    assert_eq!(find_coincidences(&a, &inside, &delays).unwrap().len(), 1);
    assert!(find_coincidences(&a, &outside, &delays).unwrap().is_empty());
}
