//! Closed-form mean rates of the simulated link.
//!
//! Singles, true and accidental coincidences per outcome, the QBERs and key
//! rate they imply, and the noise calibration that pins the default link to
//! a CAR of 20 and ε_X = 0.13 at 0 km.

use serde::Serialize;

use crate::channel::{spool_transmission, FiberSpool};
use crate::config::LinkConfig;
use crate::detection::{basis_prob, joint_outcome_table, Party, PhaseSetting, Projector, ProjectorOutcome, SurvivalTable};
use crate::error::{Error, Result};
use crate::keyproc::{skr_lower_bound, SkrParams};
use crate::qstate::Basis;

/// Measured QBERs per spool length: `(km, ε_Z, ε_X)`.
pub const REFERENCE_QBER: [(f64, f64, f64); 5] =
    [(0.0, 0.049, 0.13), (2.6, 0.054, 0.14), (8.0, 0.057, 0.138), (10.6, 0.057, 0.14), (26.0, 0.065, 0.143)];

/// Reported lower bound on the key rate at 26 km, bits/s.
pub const REFERENCE_SKR_26KM: f64 = 4.5;

/// Mean rates (Hz) for one link and phase setting.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinkRates {
    pub fiber_km: f64,
    /// Singles per detector, D1..D6.
    pub singles: [f64; 6],
    /// True coincidences, `[alice projector][bob projector]`.
    pub trues: [[f64; 4]; 4],
    /// Accidental coincidences inside each outcome's window.
    pub accidentals: [[f64; 4]; 4],
    pub window_s: f64,
}

impl LinkRates {
    pub fn coincidences(&self, o: ProjectorOutcome) -> f64 {
        let (a, b) = (o.alice.index(), o.bob.index());
        self.trues[a][b] + self.accidentals[a][b]
    }

    pub fn total(&self) -> f64 {
        ProjectorOutcome::all().map(|o| self.coincidences(o)).sum()
    }

    pub fn sifted(&self, basis: Basis) -> f64 {
        ProjectorOutcome::all()
            .filter(|o| o.alice.basis() == basis && o.bob.basis() == basis)
            .map(|o| self.coincidences(o))
            .sum()
    }

    pub fn qber(&self, basis: Basis) -> f64 {
        let n = self.sifted(basis);
        if n <= 0.0 {
            return 0.0;
        }
        let err: f64 = ProjectorOutcome::all()
            .filter(|o| o.alice.basis() == basis && o.bob.basis() == basis && o.alice.bit() != o.bob.bit())
            .map(|o| self.coincidences(o))
            .sum();
        err / n
    }

    pub fn sift_ratio(&self) -> f64 {
        let t = self.total();
        if t > 0.0 {
            (self.sifted(Basis::Z) + self.sifted(Basis::X)) / t
        } else {
            0.0
        }
    }

    /// Peak-to-background ratio of the all-detector delay histogram at the
    /// ZZ delay, with the peak integrated over one window.
    pub fn pooled_car(&self) -> f64 {
        let sa: f64 = self.singles[..3].iter().sum();
        let sb: f64 = self.singles[3..].iter().sum();
        let zz: f64 = ProjectorOutcome::all()
            .filter(|o| o.alice.basis() == Basis::Z && o.bob.basis() == Basis::Z)
            .map(|o| self.trues[o.alice.index()][o.bob.index()])
            .sum();
        let acc = sa * sb * self.window_s;
        if acc > 0.0 {
            1.0 + zz / acc
        } else {
            f64::INFINITY
        }
    }
}

/// Mean rates of `link` with the state and Bob's analysis phase set by `phase`.
pub fn link_rates(link: &LinkConfig, phase: PhaseSetting) -> Result<LinkRates> {
    link.validate()?;
    let surv = SurvivalTable::from_link(link);
    let r = link.source.pair_rate();
    let nc = link.noise.chip_noise_rate;
    let nrx = link.noise.receiver_noise_rate;
    let (ax, bx) = (link.routing.alice_x_probability, link.routing.bob_x_probability);

    let mut singles = [0.0; 6];
    for d in &link.detectors {
        singles[d.id.slot()] = d.dark_rate;
    }
    for p in Projector::ALL {
        let i = p.index();
        singles[p.detector(Party::Alice).slot()] += basis_prob(ax, p.basis()) * 0.5 * (r + nc) * surv.alice[i];
        singles[p.detector(Party::Bob).slot()] +=
            basis_prob(bx, p.basis()) * 0.5 * ((r + nc) * surv.bob[i] + nrx * surv.bob_bare[i]);
    }

    let window = link.delays.window;
    let mut trues = [[0.0; 4]; 4];
    let mut accidentals = [[0.0; 4]; 4];
    for ab in [Basis::X, Basis::Z] {
        for bb in [Basis::X, Basis::Z] {
            let t = joint_outcome_table(link.noise.p_werner, link.noise.x_flip_prob, phase, ab, bb);
            let route = basis_prob(ax, ab) * basis_prob(bx, bb);
            for (i, row) in t.iter().enumerate() {
                for (j, prob) in row.iter().enumerate() {
                    let pa = Projector::from_basis_bit(ab, i as u8);
                    let pb = Projector::from_basis_bit(bb, j as u8);
                    let (a, b) = (pa.index(), pb.index());
                    trues[a][b] = r * route * prob * surv.alice[a] * surv.bob[b];
                    accidentals[a][b] =
                        singles[pa.detector(Party::Alice).slot()] * singles[pb.detector(Party::Bob).slot()] * window;
                }
            }
        }
    }
    Ok(LinkRates { fiber_km: link.spool.length_km, singles, trues, accidentals, window_s: window })
}

/// Analytic expectation for one spool length, as plotted against the
/// simulated points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelPoint {
    pub fiber_km: f64,
    pub eps_z: f64,
    pub eps_x: f64,
    pub sift_ratio: f64,
    pub coincidence_rate: f64,
    pub car: f64,
    pub skr_bps: f64,
}

/// Key rate projected from the source: `R_r` is the pair rate, `α` the spool
/// transmission and `η` the fraction of transmitted pairs that end up as
/// coincidences.
pub fn model_point(link: &LinkConfig, phase: PhaseSetting) -> Result<ModelPoint> {
    let rates = link_rates(link, phase)?;
    let eps_z = rates.qber(Basis::Z);
    let eps_x = rates.qber(Basis::X);
    let r = link.source.pair_rate();
    let alpha = spool_transmission(&link.spool);
    let total = rates.total();
    let skr_bps = if total > 0.0 && r > 0.0 {
        let params = SkrParams {
            f: link.skr.reconciliation_efficiency,
            sift_ratio: rates.sift_ratio(),
            qubit_rate: r,
            alpha,
            eta: (total / (r * alpha)).min(1.0),
        };
        skr_lower_bound(eps_z, eps_x, &params)?
    } else {
        0.0
    };
    Ok(ModelPoint {
        fiber_km: link.spool.length_km,
        eps_z,
        eps_x,
        sift_ratio: rates.sift_ratio(),
        coincidence_rate: total,
        car: rates.pooled_car(),
        skr_bps,
    })
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if flo.signum() == fhi.signum() {
        return Err(Error::Unfittable(format!("target not bracketed in [{lo}, {hi}]")));
    }
    let rising = fhi > flo;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid)? > 0.0) == rising {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * hi.abs().max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Chip noise rate and X-flip probability that give the configured CAR
/// target and the reference 0 km ε_X on a 0 km version of `link`.
///
/// The CAR depends only on the noise rate, so the two solves are
/// sequential.
pub fn calibrate_noise(link: &LinkConfig) -> Result<(f64, f64)> {
    let mut base = link.clone();
    base.spool = FiberSpool { drift_slope_override: link.spool.drift_slope_override, ..FiberSpool::with_length(0.0) };
    let target_car = link.source.car_target;
    let target_x = REFERENCE_QBER[0].2;
    let phase = PhaseSetting::default();

    let car_at = |nc: f64| -> Result<f64> {
        let mut c = base.clone();
        c.noise.chip_noise_rate = nc;
        Ok(link_rates(&c, phase)?.pooled_car() - target_car)
    };
    let nc = bisect(0.0, 1e9, car_at)?;
    base.noise.chip_noise_rate = nc;

    let ex_at = |q: f64| -> Result<f64> {
        let mut c = base.clone();
        c.noise.x_flip_prob = q;
        Ok(link_rates(&c, phase)?.qber(Basis::X) - target_x)
    };
    let q = bisect(0.0, 0.5, ex_at)?;
    Ok((nc, q))
}
