use std::time::{Duration, Instant};

use freqbin_qkd::coincidence::find_coincidences;
use freqbin_qkd::detection::{
    read_binary, read_csv, simulate_streams, write_binary, write_csv, DetectorId, PhaseSetting, ProjectorOutcome,
};
use freqbin_qkd::keyproc::OutcomeCounts;
use freqbin_qkd::model::link_rates;
use freqbin_qkd::scenario::{decode, with_spool_length};
use freqbin_qkd::{Basis, LinkConfig};

fn counts_for(link: &LinkConfig, secs: f64, phase: PhaseSetting, seed: u64) -> (OutcomeCounts, [u64; 6]) {
    let (a, b) = simulate_streams(link, secs, &|_| phase, seed).unwrap();
    let mut singles = [0u64; 6];
    for r in a.iter().chain(&b) {
        singles[r.detector.slot()] += 1;
    }
    let mut c = OutcomeCounts::default();
    c.extend(&find_coincidences(&a, &b, &link.delays).unwrap());
    (c, singles)
}

#[test]
fn simulated_rates_match_the_closed_form() {
    for km in [0.0, 26.0] {
        let link = with_spool_length(&LinkConfig::default(), km);
        let secs = 20.0;
        let phase = PhaseSetting::default();
        let (counts, singles) = counts_for(&link, secs, phase, 3);
        let rates = link_rates(&link, phase).unwrap();
        for (k, &n) in singles.iter().enumerate() {
            let mu = rates.singles[k] * secs;
            assert!((n as f64 - mu).abs() < 5.0 * mu.sqrt(), "{km} km D{}: {n} vs {mu}", k + 1);
        }
        for o in ProjectorOutcome::all() {
            let mu = rates.coincidences(o) * secs;
            let n = counts.get(o) as f64;
            // Poisson spread plus 2% for the greedy pairing of accidentals.
            let tol = 5.0 * mu.sqrt() + 0.02 * mu;
            assert!((n - mu).abs() < tol, "{km} km {}: {n} vs {mu:.1}", o.label());
        }
    }
}

#[test]
fn z_basis_is_blind_to_the_phase_while_x_flips() {
    let link = LinkConfig::default();
    let (zero, _) = counts_for(&link, 10.0, PhaseSetting { state_theta: 0.0, bob_phase: 0.0 }, 8);
    let (pi, _) = counts_for(&link, 10.0, PhaseSetting { state_theta: std::f64::consts::PI, bob_phase: 0.0 }, 8);
    let ez0 = zero.qber(Basis::Z).unwrap();
    let ezp = pi.qber(Basis::Z).unwrap();
    assert!((ez0.rate - ezp.rate).abs() < 4.0 * (ez0.se.powi(2) + ezp.se.powi(2)).sqrt());
    for (counts, theta) in [(&zero, 0.0), (&pi, std::f64::consts::PI)] {
        let ex = counts.qber(Basis::X).unwrap();
        let model = link_rates(&link, PhaseSetting { state_theta: theta, bob_phase: 0.0 }).unwrap().qber(Basis::X);
        assert!((ex.rate - model).abs() < 5.0 * ex.se, "θ={theta}: {} vs {model}", ex.rate);
    }
    assert!(pi.qber(Basis::X).unwrap().rate > 0.5);
    // A compensating analysis phase restores the locked error rate.
    let (comp, _) = counts_for(
        &link,
        10.0,
        PhaseSetting { state_theta: std::f64::consts::PI, bob_phase: -std::f64::consts::PI },
        8,
    );
    assert!(comp.qber(Basis::X).unwrap().rate < 0.2);
}

#[test]
fn stream_files_round_trip_and_decode() {
    let link = with_spool_length(&LinkConfig::default(), 2.6);
    let (a, b) = simulate_streams(&link, 2.0, &|_| PhaseSetting::default(), 21).unwrap();
    let mut all: Vec<_> = a.iter().chain(&b).copied().collect();
    all.sort_unstable();

    let mut bin = Vec::new();
    write_binary(&mut bin, &all).unwrap();
    assert_eq!(read_binary(bin.as_slice()).unwrap(), all);
    let mut csv = Vec::new();
    write_csv(&mut csv, &all).unwrap();
    assert_eq!(read_csv(csv.as_slice()).unwrap(), all);

    let report = decode(&link, &all).unwrap();
    let direct = find_coincidences(&a, &b, &link.delays).unwrap();
    assert_eq!(report.events, direct);
    assert!(report.duration_s > 1.99 && report.duration_s <= 2.0);
    assert!(report.summary.eps_z < 0.1);
    assert!(all.iter().any(|r| r.detector == DetectorId::D6));
}

fn best_of(n: usize, f: impl Fn()) -> Duration {
    (0..n)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed()
        })
        .min()
        .unwrap()
}

#[test]
fn throughput_scales_linearly_with_duration() {
    let link = LinkConfig::default();
    let run = |secs: f64| {
        let (a, b) = simulate_streams(&link, secs, &|_| PhaseSetting::default(), 5).unwrap();
        std::hint::black_box(find_coincidences(&a, &b, &link.delays).unwrap().len());
    };
    let short = best_of(3, || run(1.0));
    let long = best_of(2, || run(10.0));
    let ratio = long.as_secs_f64() / short.as_secs_f64();
    assert!((6.0..=14.0).contains(&ratio), "ratio {ratio}");
}
