//! Coincidence extraction and decoding from sorted time-tag streams.
//!
//! Alice's records are visited in time order. Each one claims the unused Bob
//! record with the smallest `|Δt − nominal|` among those falling inside a
//! decode window for its detector pair; ties go to the earlier Bob record,
//! then the lower detector number.

use std::collections::VecDeque;
use std::io::Write;

use rayon::prelude::*;

use crate::detection::{DelayMap, DetectorId, ProjectorOutcome, TimestampRecord};
use crate::detection::Decoder;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CoincidenceEvent {
    pub alice_time_ps: u64,
    pub alice_detector: DetectorId,
    pub bob_detector: DetectorId,
    /// Bob's time minus Alice's time.
    pub delta_t_ps: i64,
    pub outcome: ProjectorOutcome,
}

impl CoincidenceEvent {
    pub fn bob_time_ps(&self) -> u64 {
        (self.alice_time_ps as i64 + self.delta_t_ps) as u64
    }
}

fn check_order(prev: &mut Option<(usize, u64)>, index: usize, rec: &TimestampRecord) -> Result<()> {
    if let Some((_, p)) = *prev {
        if rec.time_ps < p {
            return Err(Error::StreamOrder { index, prev_ps: p, next_ps: rec.time_ps });
        }
    }
    *prev = Some((index, rec.time_ps));
    Ok(())
}

/// Incremental matcher. Feed both streams in order, then call
/// [`CoincidenceFinder::process`] with a watermark below which both streams
/// are complete; [`CoincidenceFinder::finish`] drains the rest.
#[derive(Clone, Debug)]
pub struct CoincidenceFinder {
    decoder: Decoder,
    min_delay: i64,
    max_delay: i64,
    half: i64,
    alice: VecDeque<TimestampRecord>,
    bob: VecDeque<(TimestampRecord, bool)>,
    last_alice: Option<(usize, u64)>,
    last_bob: Option<(usize, u64)>,
    n_alice: usize,
    n_bob: usize,
}

impl CoincidenceFinder {
    pub fn new(delays: &DelayMap) -> Self {
        CoincidenceFinder {
            decoder: delays.decoder(),
            min_delay: delays.min_delay_ps(),
            max_delay: delays.max_delay_ps(),
            half: delays.half_window_ps(),
            alice: VecDeque::new(),
            bob: VecDeque::new(),
            last_alice: None,
            last_bob: None,
            n_alice: 0,
            n_bob: 0,
        }
    }

    pub fn push_alice(&mut self, records: &[TimestampRecord]) -> Result<()> {
        for r in records {
            check_order(&mut self.last_alice, self.n_alice, r)?;
            self.n_alice += 1;
            self.alice.push_back(*r);
        }
        Ok(())
    }

    pub fn push_bob(&mut self, records: &[TimestampRecord]) -> Result<()> {
        for r in records {
            check_order(&mut self.last_bob, self.n_bob, r)?;
            self.n_bob += 1;
            self.bob.push_back((*r, false));
        }
        Ok(())
    }

    /// Matches every pending Alice record whose latest possible partner lies
    /// strictly below `watermark_ps`.
    pub fn process(&mut self, watermark_ps: u64, out: &mut Vec<CoincidenceEvent>) {
        while let Some(a) = self.alice.front().copied() {
            if a.time_ps as i64 + self.max_delay + self.half >= watermark_ps as i64 {
                break;
            }
            self.alice.pop_front();
            self.match_one(a, out);
        }
    }

    pub fn finish(mut self, out: &mut Vec<CoincidenceEvent>) {
        while let Some(a) = self.alice.pop_front() {
            self.match_one(a, out);
        }
    }

    fn match_one(&mut self, a: TimestampRecord, out: &mut Vec<CoincidenceEvent>) {
        let ta = a.time_ps as i64;
        let lo = ta + self.min_delay - self.half;
        let hi = ta + self.max_delay + self.half;
        while let Some((b, _)) = self.bob.front() {
            if (b.time_ps as i64) < lo {
                self.bob.pop_front();
            } else {
                break;
            }
        }
        let mut best: Option<(i64, u64, DetectorId, usize, ProjectorOutcome)> = None;
        for (i, (b, used)) in self.bob.iter().enumerate() {
            let tb = b.time_ps as i64;
            if tb > hi {
                break;
            }
            if *used {
                continue;
            }
            if let Some((o, r)) = self.decoder.decode(a.detector, b.detector, tb - ta) {
                let key = (r.abs(), b.time_ps, b.detector);
                if best.is_none_or(|x| key < (x.0, x.1, x.2)) {
                    best = Some((key.0, key.1, key.2, i, o));
                }
            }
        }
        if let Some((_, tb, bd, i, o)) = best {
            self.bob[i].1 = true;
            out.push(CoincidenceEvent {
                alice_time_ps: a.time_ps,
                alice_detector: a.detector,
                bob_detector: bd,
                delta_t_ps: tb as i64 - ta,
                outcome: o,
            });
        }
    }
}

/// Single-pass matching of two complete, time-sorted streams.
pub fn find_coincidences(
    alice: &[TimestampRecord],
    bob: &[TimestampRecord],
    delays: &DelayMap,
) -> Result<Vec<CoincidenceEvent>> {
    let mut f = CoincidenceFinder::new(delays);
    f.push_alice(alice)?;
    f.push_bob(bob)?;
    let mut out = Vec::new();
    f.finish(&mut out);
    Ok(out)
}

/// Indices `i` such that Alice records `..i` and `i..` can never compete for
/// the same Bob record.
pub fn independent_split_points(alice: &[TimestampRecord], delays: &DelayMap) -> Vec<usize> {
    let reach = (delays.max_delay_ps() - delays.min_delay_ps() + 2 * delays.half_window_ps()) as u64;
    (1..alice.len())
        .filter(|&i| alice[i].time_ps - alice[i - 1].time_ps > reach)
        .collect()
}

/// Same result as [`find_coincidences`], computed on `pieces` independent
/// time slices in parallel. Slices are cut only where Alice's stream has a
/// gap wider than the full decode reach, so no Bob record is contested
/// across a cut; each slice receives the Bob records its windows can touch.
pub fn find_coincidences_parallel(
    alice: &[TimestampRecord],
    bob: &[TimestampRecord],
    delays: &DelayMap,
    pieces: usize,
) -> Result<Vec<CoincidenceEvent>> {
    for (i, w) in alice.windows(2).enumerate() {
        if w[1].time_ps < w[0].time_ps {
            return Err(Error::StreamOrder { index: i + 1, prev_ps: w[0].time_ps, next_ps: w[1].time_ps });
        }
    }
    for (i, w) in bob.windows(2).enumerate() {
        if w[1].time_ps < w[0].time_ps {
            return Err(Error::StreamOrder { index: i + 1, prev_ps: w[0].time_ps, next_ps: w[1].time_ps });
        }
    }
    let splits = independent_split_points(alice, delays);
    let pieces = pieces.max(1);
    let mut cuts = vec![0usize];
    for k in 1..pieces {
        let target = alice.len() * k / pieces;
        let j = splits.partition_point(|&s| s < target);
        if let Some(&s) = splits.get(j) {
            if s > *cuts.last().unwrap() {
                cuts.push(s);
            }
        }
    }
    cuts.push(alice.len());
    cuts.dedup();

    let lo_reach = delays.min_delay_ps() - delays.half_window_ps();
    let hi_reach = delays.max_delay_ps() + delays.half_window_ps();
    let slices: Vec<(usize, usize)> = cuts.windows(2).map(|w| (w[0], w[1])).filter(|(a, b)| b > a).collect();
    let parts: Vec<Result<Vec<CoincidenceEvent>>> = slices
        .par_iter()
        .map(|&(s, e)| {
            let first = alice[s].time_ps as i64 + lo_reach;
            let last = alice[e - 1].time_ps as i64 + hi_reach;
            let b0 = bob.partition_point(|r| (r.time_ps as i64) < first);
            let b1 = bob.partition_point(|r| (r.time_ps as i64) <= last);
            find_coincidences(&alice[s..e], &bob[b0..b1], delays)
        })
        .collect();
    let mut out = Vec::new();
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Writes events as `alice_det,bob_det,delta_t_ps,outcome_label`.
pub fn write_events_csv<W: Write>(mut w: W, events: &[CoincidenceEvent]) -> Result<()> {
    writeln!(w, "alice_det,bob_det,delta_t_ps,outcome_label")?;
    for e in events {
        writeln!(w, "{},{},{},{}", e.alice_detector, e.bob_detector, e.delta_t_ps, e.outcome)?;
    }
    w.flush()?;
    Ok(())
}

/// Counts of `Δt` in bins of width `bin_width_ps` centered on multiples of
/// the bin width, covering `[-span_ps, span_ps]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DelayHistogram {
    pub bin_width_ps: i64,
    pub half_bins: i64,
    pub counts: Vec<u64>,
}

impl DelayHistogram {
    pub fn new(bin_width_ps: i64, span_ps: i64) -> Result<Self> {
        if bin_width_ps <= 0 {
            return Err(Error::param("bin_width", "must be > 0"));
        }
        if span_ps < 0 {
            return Err(Error::param("span", "must be ≥ 0"));
        }
        let half_bins = span_ps / bin_width_ps;
        Ok(DelayHistogram { bin_width_ps, half_bins, counts: vec![0; (2 * half_bins + 1) as usize] })
    }

    pub fn span_ps(&self) -> i64 {
        self.half_bins * self.bin_width_ps
    }

    pub fn bin_center(&self, k: usize) -> i64 {
        (k as i64 - self.half_bins) * self.bin_width_ps
    }

    pub fn bin_of(&self, delta_t_ps: i64) -> Option<usize> {
        let k = (delta_t_ps as f64 / self.bin_width_ps as f64).round() as i64;
        (k.abs() <= self.half_bins).then(|| (k + self.half_bins) as usize)
    }

    pub fn add(&mut self, delta_t_ps: i64) {
        if let Some(k) = self.bin_of(delta_t_ps) {
            self.counts[k] += 1;
        }
    }

    pub fn merge(&mut self, other: &DelayHistogram) -> Result<()> {
        if other.bin_width_ps != self.bin_width_ps || other.half_bins != self.half_bins {
            return Err(Error::param("histogram", "binning mismatch"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Center of the fullest bin (earliest on ties).
    pub fn peak_center(&self) -> Option<i64> {
        let (k, c) = self.counts.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
        (*c > 0).then(|| self.bin_center(k))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta_t_ps,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{}\n", self.bin_center(k), c));
        }
        out
    }
}

/// Histogram of decoded events' `Δt`.
pub fn delay_histogram(events: &[CoincidenceEvent], bin_width_ps: i64, span_ps: i64) -> Result<DelayHistogram> {
    let mut h = DelayHistogram::new(bin_width_ps, span_ps)?;
    for e in events {
        h.add(e.delta_t_ps);
    }
    Ok(h)
}

/// Start-stop histogram over every Alice/Bob pair within `span_ps`, fed
/// incrementally like [`CoincidenceFinder`].
#[derive(Clone, Debug)]
pub struct RawHistogrammer {
    hist: DelayHistogram,
    alice: VecDeque<u64>,
    bob: VecDeque<u64>,
    alice_filter: Option<Vec<DetectorId>>,
    bob_filter: Option<Vec<DetectorId>>,
}

impl RawHistogrammer {
    pub fn new(bin_width_ps: i64, span_ps: i64) -> Result<Self> {
        Ok(RawHistogrammer {
            hist: DelayHistogram::new(bin_width_ps, span_ps)?,
            alice: VecDeque::new(),
            bob: VecDeque::new(),
            alice_filter: None,
            bob_filter: None,
        })
    }

    /// Restricts the histogram to the given detectors.
    pub fn with_detectors(mut self, alice: &[DetectorId], bob: &[DetectorId]) -> Self {
        self.alice_filter = Some(alice.to_vec());
        self.bob_filter = Some(bob.to_vec());
        self
    }

    pub fn push(&mut self, alice: &[TimestampRecord], bob: &[TimestampRecord]) {
        let keep = |f: &Option<Vec<DetectorId>>, d: DetectorId| f.as_ref().is_none_or(|v| v.contains(&d));
        self.alice.extend(alice.iter().filter(|r| keep(&self.alice_filter, r.detector)).map(|r| r.time_ps));
        self.bob.extend(bob.iter().filter(|r| keep(&self.bob_filter, r.detector)).map(|r| r.time_ps));
    }

    fn reach(&self) -> i64 {
        self.hist.span_ps() + self.hist.bin_width_ps
    }

    pub fn process(&mut self, watermark_ps: u64) {
        let reach = self.reach();
        while let Some(&ta) = self.alice.front() {
            if ta as i64 + reach >= watermark_ps as i64 {
                break;
            }
            self.alice.pop_front();
            self.add_alice(ta);
        }
    }

    fn add_alice(&mut self, ta: u64) {
        let reach = self.reach();
        let ta = ta as i64;
        while let Some(&tb) = self.bob.front() {
            if (tb as i64) < ta - reach {
                self.bob.pop_front();
            } else {
                break;
            }
        }
        for &tb in &self.bob {
            let d = tb as i64 - ta;
            if d > reach {
                break;
            }
            self.hist.add(d);
        }
    }

    pub fn finish(mut self) -> DelayHistogram {
        while let Some(ta) = self.alice.pop_front() {
            self.add_alice(ta);
        }
        self.hist
    }
}

/// Histogram of all Alice/Bob start-stop differences within `span_ps`.
pub fn raw_delay_histogram(
    alice: &[TimestampRecord],
    bob: &[TimestampRecord],
    bin_width_ps: i64,
    span_ps: i64,
) -> Result<DelayHistogram> {
    let mut h = RawHistogrammer::new(bin_width_ps, span_ps)?;
    h.push(alice, bob);
    Ok(h.finish())
}

/// Peak-window sum over the mean background content of an equal width.
///
/// The peak is the fullest bin; its window holds the bins whose centers lie
/// within `±peak_window_ps/2`. Background bins are all bins farther than that
/// from every outlier bin (count above `median + 5·√(median+1)`).
pub fn car_estimate(hist: &DelayHistogram, peak_window_ps: i64) -> Result<f64> {
    if peak_window_ps < 0 {
        return Err(Error::param("peak_window", "must be ≥ 0"));
    }
    let half = peak_window_ps / 2;
    let peak = hist
        .peak_center()
        .ok_or_else(|| Error::InsufficientData("empty histogram".into()))?;
    let mut sorted = hist.counts.clone();
    sorted.sort_unstable();
    let median = sorted[sorted.len() / 2] as f64;
    let threshold = median + 5.0 * (median + 1.0).sqrt();
    let outliers: Vec<i64> = (0..hist.counts.len())
        .filter(|&k| hist.counts[k] as f64 > threshold)
        .map(|k| hist.bin_center(k))
        .collect();

    let (mut peak_sum, mut n_peak) = (0u64, 0usize);
    let (mut bg_sum, mut n_bg) = (0u64, 0usize);
    for (k, &c) in hist.counts.iter().enumerate() {
        let x = hist.bin_center(k);
        if (x - peak).abs() <= half {
            peak_sum += c;
            n_peak += 1;
        }
        if (x - peak).abs() > half && outliers.iter().all(|o| (x - o).abs() > half) {
            bg_sum += c;
            n_bg += 1;
        }
    }
    if n_bg == 0 || bg_sum == 0 {
        return Err(Error::InsufficientData("no background counts outside the peaks".into()));
    }
    let bg_mean = bg_sum as f64 / n_bg as f64;
    Ok(peak_sum as f64 / (bg_mean * n_peak as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use DetectorId::*;

    fn rec(d: DetectorId, t: u64) -> TimestampRecord {
        TimestampRecord::new(d, t)
    }

    #[test]
    fn empty_and_single_pair() {
        let m = DelayMap::default();
        assert!(find_coincidences(&[], &[], &m).unwrap().is_empty());
        let ev = find_coincidences(&[rec(D1, 1_000_000)], &[rec(D4, 1_000_030)], &m).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].outcome.to_string(), "++");
        assert_eq!(ev[0].delta_t_ps, 30);
        assert_eq!(ev[0].bob_time_ps(), 1_000_030);
    }

    #[test]
    fn unsorted_input_is_rejected() {
        let m = DelayMap::default();
        let err = find_coincidences(&[rec(D1, 10), rec(D2, 5)], &[], &m).unwrap_err();
        assert!(matches!(err, Error::StreamOrder { index: 1, .. }));
        assert!(find_coincidences_parallel(&[], &[rec(D4, 10), rec(D4, 5)], &m, 2).is_err());
    }

    #[test]
    fn one_partner_per_click() {
        let m = DelayMap::default();
        // Two Alice clicks compete for one Bob click; the first wins.
        let ev = find_coincidences(&[rec(D1, 1000), rec(D1, 1100)], &[rec(D4, 1050)], &m).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].alice_time_ps, 1000);
        // Nearest residual wins among candidates.
        let ev = find_coincidences(&[rec(D1, 1000)], &[rec(D4, 700), rec(D4, 1010)], &m).unwrap();
        assert_eq!(ev[0].delta_t_ps, 10);
    }

    #[test]
    fn streaming_with_watermarks_matches_batch() {
        let m = DelayMap::default();
        let alice: Vec<_> = (0..200u64).map(|k| rec([D1, D2, D3][(k % 3) as usize], k * 7_000)).collect();
        let bob: Vec<_> = (0..200u64).map(|k| rec([D4, D5, D6][(k % 3) as usize], k * 7_000 + 10_000)).collect();
        let batch = find_coincidences(&alice, &bob, &m).unwrap();
        let mut f = CoincidenceFinder::new(&m);
        let mut out = Vec::new();
        for chunk in 0..10u64 {
            let cut = (chunk + 1) * 140_000;
            let a: Vec<_> = alice.iter().filter(|r| r.time_ps < cut && r.time_ps >= cut - 140_000).copied().collect();
            let b: Vec<_> = bob.iter().filter(|r| r.time_ps < cut && r.time_ps >= cut - 140_000).copied().collect();
            f.push_alice(&a).unwrap();
            f.push_bob(&b).unwrap();
            f.process(cut, &mut out);
        }
        f.push_bob(&bob.iter().filter(|r| r.time_ps >= 1_400_000).copied().collect::<Vec<_>>()).unwrap();
        f.finish(&mut out);
        assert_eq!(out, batch);
        assert_eq!(find_coincidences_parallel(&alice, &bob, &m, 4).unwrap(), batch);
    }

    #[test]
    fn histogram_and_car_examples() {
        let h = DelayHistogram::new(100, 2_000).unwrap();
        assert!(h.counts.iter().all(|c| *c == 0));
        assert!(car_estimate(&h, 700).is_err());

        let mut flat = DelayHistogram::new(100, 2_000).unwrap();
        flat.counts.iter_mut().for_each(|c| *c = 50);
        assert!((car_estimate(&flat, 700).unwrap() - 1.0).abs() < 1e-12);

        let mut peaked = DelayHistogram::new(100, 5_000).unwrap();
        peaked.counts.iter_mut().for_each(|c| *c = 10);
        let k = peaked.bin_of(1_000).unwrap();
        peaked.counts[k] = 200;
        assert!((car_estimate(&peaked, 0).unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(peaked.peak_center(), Some(1_000));
    }

    #[test]
    fn raw_histogram_pairs_everything_in_span() {
        let a = [rec(D1, 100_000), rec(D2, 200_000)];
        let b = [rec(D4, 110_000), rec(D5, 190_000)];
        let h = raw_delay_histogram(&a, &b, 1_000, 20_000).unwrap();
        assert_eq!(h.counts[h.bin_of(10_000).unwrap()], 1);
        assert_eq!(h.counts[h.bin_of(-10_000).unwrap()], 1);
        assert_eq!(h.total(), 2);
    }

    #[test]
    fn events_csv_header() {
        let m = DelayMap::default();
        let ev = find_coincidences(&[rec(D2, 0)], &[rec(D5, 10_050)], &m).unwrap();
        let mut buf = Vec::new();
        write_events_csv(&mut buf, &ev).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "alice_det,bob_det,delta_t_ps,outcome_label\nD2,D5,10050,00\n");
    }
}
