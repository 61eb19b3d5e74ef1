//! Two-qubit state tomography from the 36 Pauli-eigenvector product
//! projectors: linear inversion and maximum likelihood.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat4, C};
use crate::qstate::DensityMatrix;
use crate::rng::substream;
use crate::scalar::Real;

/// Eigenvector of a single-qubit Pauli operator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PauliEigenstate {
    ZPlus,
    ZMinus,
    XPlus,
    XMinus,
    YPlus,
    YMinus,
}

impl PauliEigenstate {
    pub const ALL: [PauliEigenstate; 6] = [
        PauliEigenstate::ZPlus,
        PauliEigenstate::ZMinus,
        PauliEigenstate::XPlus,
        PauliEigenstate::XMinus,
        PauliEigenstate::YPlus,
        PauliEigenstate::YMinus,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PauliEigenstate::ZPlus => "Z+",
            PauliEigenstate::ZMinus => "Z-",
            PauliEigenstate::XPlus => "X+",
            PauliEigenstate::XMinus => "X-",
            PauliEigenstate::YPlus => "Y+",
            PauliEigenstate::YMinus => "Y-",
        }
    }

    /// `Z+ = |0⟩`, `Z− = |1⟩`, `X± = (|0⟩ ± |1⟩)/√2`, `Y± = (|0⟩ ± i|1⟩)/√2`.
    pub fn ket<T: Real>(self) -> [C<T>; 2] {
        let h = T::FRAC_1_SQRT_2();
        let (z, o) = (T::zero(), T::one());
        match self {
            PauliEigenstate::ZPlus => [C::new(o, z), C::new(z, z)],
            PauliEigenstate::ZMinus => [C::new(z, z), C::new(o, z)],
            PauliEigenstate::XPlus => [C::new(h, z), C::new(h, z)],
            PauliEigenstate::XMinus => [C::new(h, z), C::new(-h, z)],
            PauliEigenstate::YPlus => [C::new(h, z), C::new(z, h)],
            PauliEigenstate::YMinus => [C::new(h, z), C::new(z, -h)],
        }
    }

    pub fn projector<T: Real>(self) -> [[C<T>; 2]; 2] {
        let k = self.ket::<T>();
        let mut p = [[C::new(T::zero(), T::zero()); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                p[i][j] = k[i] * k[j].conj();
            }
        }
        p
    }
}

impl fmt::Display for PauliEigenstate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PauliEigenstate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().replace('−', "-");
        PauliEigenstate::ALL
            .into_iter()
            .find(|p| p.label().eq_ignore_ascii_case(&t))
            .ok_or_else(|| Error::Parse(format!("unknown Pauli eigenstate `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TomographySetting {
    pub alice_projector: PauliEigenstate,
    pub bob_projector: PauliEigenstate,
    pub shots: u64,
}

impl TomographySetting {
    /// Joint projector in the signal-first ordering `Π_bob ⊗ Π_alice`.
    pub fn projector<T: Real>(&self) -> Mat4<T> {
        linalg::kron2(&self.bob_projector.projector(), &self.alice_projector.projector())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TomographyRecord {
    pub setting: TomographySetting,
    pub count: u64,
}

impl TomographyRecord {
    pub fn new(setting: TomographySetting, count: u64) -> Result<Self> {
        if count > setting.shots {
            return Err(Error::param("count", format!("{count} exceeds {} shots", setting.shots)));
        }
        Ok(TomographyRecord { setting, count })
    }

    pub fn frequency(&self) -> f64 {
        if self.setting.shots == 0 {
            0.0
        } else {
            self.count as f64 / self.setting.shots as f64
        }
    }
}

/// All 36 product settings, Alice-major.
pub fn projector_set(shots: u64) -> Vec<TomographySetting> {
    let mut out = Vec::with_capacity(36);
    for a in PauliEigenstate::ALL {
        for b in PauliEigenstate::ALL {
            out.push(TomographySetting { alice_projector: a, bob_projector: b, shots });
        }
    }
    out
}

/// Binomial counts for every setting; setting `k` draws from its own
/// substream of `seed`.
pub fn simulate_counts(rho: &DensityMatrix<f64>, shots_per_setting: u64, seed: u64) -> Result<Vec<TomographyRecord>> {
    if shots_per_setting == 0 {
        return Err(Error::param("shots_per_setting", "must be ≥ 1"));
    }
    projector_set(shots_per_setting)
        .into_iter()
        .enumerate()
        .map(|(k, s)| {
            let p = rho.expectation(&s.projector()).clamp(0.0, 1.0);
            let mut rng = substream(seed, "tomography", k as u64);
            let dist = Binomial::new(shots_per_setting, p).map_err(|e| Error::param("probability", e.to_string()))?;
            TomographyRecord::new(s, dist.sample(&mut rng))
        })
        .collect()
}

/// Orthonormal (Hilbert–Schmidt) basis of 4×4 Hermitian matrices: the
/// diagonal units, then symmetric and antisymmetric off-diagonal pairs.
pub fn hermitian_basis<T: Real>() -> Vec<Mat4<T>> {
    let mut out = Vec::with_capacity(16);
    let z = C::new(T::zero(), T::zero());
    for k in 0..4 {
        let mut m = [[z; 4]; 4];
        m[k][k] = C::new(T::one(), T::zero());
        out.push(m);
    }
    let h = T::FRAC_1_SQRT_2();
    for j in 0..4 {
        for k in j + 1..4 {
            let mut s = [[z; 4]; 4];
            s[j][k] = C::new(h, T::zero());
            s[k][j] = C::new(h, T::zero());
            out.push(s);
            let mut a = [[z; 4]; 4];
            a[j][k] = C::new(T::zero(), -h);
            a[k][j] = C::new(T::zero(), h);
            out.push(a);
        }
    }
    out
}

/// Rows `Tr(B_k Π_s)` of the linear map from basis coefficients to outcome
/// probabilities.
pub fn measurement_matrix<T: Real>(settings: &[TomographySetting]) -> Vec<[T; 16]> {
    let basis = hermitian_basis::<T>();
    settings
        .iter()
        .map(|s| {
            let p = s.projector::<T>();
            let mut row = [T::zero(); 16];
            for (k, b) in basis.iter().enumerate() {
                row[k] = linalg::trace_product(b, &p).re;
            }
            row
        })
        .collect()
}

fn gram<T: Real>(rows: &[[T; 16]]) -> Vec<Vec<T>> {
    let mut g = vec![vec![T::zero(); 16]; 16];
    for r in rows {
        for i in 0..16 {
            for j in 0..16 {
                g[i][j] = g[i][j] + r[i] * r[j];
            }
        }
    }
    g
}

/// Numerical rank of the measurement map (singular values above `1e-8`
/// of the largest).
pub fn measurement_rank<T: Real>(settings: &[TomographySetting]) -> usize {
    let g = gram(&measurement_matrix::<T>(settings));
    let rows: Vec<Vec<C<T>>> = g.iter().map(|r| r.iter().map(|&x| C::new(x, T::zero())).collect()).collect();
    let (vals, _) = linalg::hermitian_eigen(&rows);
    let top = vals.iter().copied().fold(T::zero(), T::max);
    if top <= T::zero() {
        return 0;
    }
    // Eigenvalues of MᵀM are squared singular values.
    let floor = top * T::lit(1e-16);
    vals.iter().filter(|&&v| v > floor).count()
}

/// Unconstrained least-squares estimate. The result is Hermitian but need not
/// be positive or unit-trace.
pub fn linear_inversion<T: Real>(records: &[TomographyRecord]) -> Result<Mat4<T>> {
    let settings: Vec<TomographySetting> = records.iter().map(|r| r.setting).collect();
    let rank = measurement_rank::<T>(&settings);
    if rank < 16 {
        return Err(Error::IncompleteData { rank });
    }
    let rows = measurement_matrix::<T>(&settings);
    let g = gram(&rows);
    let mut rhs = vec![T::zero(); 16];
    for (r, rec) in rows.iter().zip(records) {
        let f = T::lit(rec.frequency());
        for k in 0..16 {
            rhs[k] = rhs[k] + r[k] * f;
        }
    }
    let x = linalg::solve(g, rhs).ok_or(Error::IncompleteData { rank })?;
    let mut m = linalg::zeros();
    for (b, xk) in hermitian_basis::<T>().iter().zip(x) {
        m = linalg::add(&m, &linalg::scale(b, xk));
    }
    Ok(m)
}

/// Half the sum of absolute eigenvalues of `a − b` for Hermitian inputs.
pub fn trace_distance_hermitian<T: Real>(a: &Mat4<T>, b: &Mat4<T>) -> T {
    let d = linalg::add(a, &linalg::scale(b, -T::one()));
    let (vals, _) = linalg::eigen4(&d);
    vals.iter().map(|v| v.abs()).sum::<T>() * T::lit(0.5)
}

/// Nearest unit-trace PSD matrix in eigenvalue space: negative eigenvalues
/// are clipped and the rest renormalized.
pub fn clip_to_physical(m: &Mat4<f64>) -> DensityMatrix<f64> {
    let (vals, vecs) = linalg::eigen4(m);
    let clipped: Vec<f64> = vals.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clipped.iter().sum();
    if total <= 0.0 {
        return DensityMatrix::maximally_mixed();
    }
    let mut out = linalg::zeros();
    for (k, lam) in clipped.iter().enumerate() {
        let col = [vecs[0][k], vecs[1][k], vecs[2][k], vecs[3][k]];
        out = linalg::add(&out, &linalg::scale(&linalg::outer(&col, &col), lam / total));
    }
    hermitize(&mut out);
    DensityMatrix::new_unchecked(out)
}

fn hermitize(m: &mut Mat4<f64>) {
    for i in 0..4 {
        m[i][i].im = 0.0;
        for j in i + 1..4 {
            let avg = (m[i][j] + m[j][i].conj()) * 0.5;
            m[i][j] = avg;
            m[j][i] = avg.conj();
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MleOptions {
    pub max_iterations: usize,
    /// Stop once an iteration improves the per-shot log-likelihood by less.
    pub tolerance: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions { max_iterations: 5000, tolerance: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MleResult {
    pub rho: DensityMatrix<f64>,
    /// Per-shot log-likelihood relative to the saturated model (≤ 0).
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Objective after every accepted iteration, starting point first.
    pub history: Vec<f64>,
}

/// Index pairs of the 16 real parameters of a lower-triangular factor:
/// four real diagonals, then real and imaginary parts below the diagonal.
const N_PARAMS: usize = 16;

fn factor_from_params(x: &[f64; N_PARAMS]) -> Mat4<f64> {
    let mut t = linalg::zeros();
    for i in 0..4 {
        t[i][i] = C::new(x[i], 0.0);
    }
    let mut k = 4;
    for i in 1..4 {
        for j in 0..i {
            t[i][j] = C::new(x[k], x[k + 1]);
            k += 2;
        }
    }
    t
}

fn params_from_factor(t: &Mat4<f64>) -> [f64; N_PARAMS] {
    let mut x = [0.0; N_PARAMS];
    for i in 0..4 {
        x[i] = t[i][i].re;
    }
    let mut k = 4;
    for i in 1..4 {
        for j in 0..i {
            x[k] = t[i][j].re;
            x[k + 1] = t[i][j].im;
            k += 2;
        }
    }
    x
}

fn rho_from_factor(t: &Mat4<f64>) -> Option<Mat4<f64>> {
    let a = linalg::matmul(&linalg::adjoint(t), t);
    let tr = linalg::trace(&a).re;
    if !(tr > 0.0 && tr.is_finite()) {
        return None;
    }
    let mut r = linalg::scale(&a, 1.0 / tr);
    hermitize(&mut r);
    Some(r)
}

/// Lower-triangular `T` with `T†T = ρ`, via the upper Cholesky factor of `ρ`
/// regularized towards the identity.
fn factor_of(rho: &Mat4<f64>) -> Mat4<f64> {
    let mut m = linalg::add(&linalg::scale(rho, 0.98), &linalg::scale(&linalg::identity(), 0.005));
    hermitize(&mut m);
    // ρ = L L†; then T = L† is upper, so use the reversed index order to get
    // a lower-triangular T with T†T = ρ.
    let p = |i: usize| 3 - i;
    let mut r = [[0.0f64; 4]; 4].map(|row| row.map(|_| C::new(0.0, 0.0)));
    for i in 0..4 {
        for j in 0..4 {
            r[i][j] = m[p(i)][p(j)];
        }
    }
    let mut l = linalg::zeros::<f64>();
    for j in 0..4 {
        let mut d = r[j][j].re;
        for k in 0..j {
            d -= l[j][k].norm_sqr();
        }
        let djj = d.max(1e-12).sqrt();
        l[j][j] = C::new(djj, 0.0);
        for i in j + 1..4 {
            let mut s = r[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k].conj();
            }
            l[i][j] = s / djj;
        }
    }
    // r = l l†, so ρ (original order) = P l l† P = (P l P)(P l P)†; with
    // T = (P l P)†, which is lower triangular, T†T = ρ.
    let mut pl = linalg::zeros::<f64>();
    for i in 0..4 {
        for j in 0..4 {
            pl[i][j] = l[p(i)][p(j)];
        }
    }
    linalg::adjoint(&pl)
}

struct Objective {
    projectors: Vec<Mat4<f64>>,
    counts: Vec<f64>,
    misses: Vec<f64>,
    saturated: f64,
    total: f64,
}

impl Objective {
    fn new(records: &[TomographyRecord]) -> Self {
        let mut saturated = 0.0;
        let mut total = 0.0;
        for r in records {
            let n = r.count as f64;
            let m = (r.setting.shots - r.count) as f64;
            let f = r.frequency();
            if n > 0.0 {
                saturated += n * f.ln();
            }
            if m > 0.0 {
                saturated += m * (1.0 - f).ln();
            }
            total += r.setting.shots as f64;
        }
        Objective {
            projectors: records.iter().map(|r| r.setting.projector()).collect(),
            counts: records.iter().map(|r| r.count as f64).collect(),
            misses: records.iter().map(|r| (r.setting.shots - r.count) as f64).collect(),
            saturated,
            total: total.max(1.0),
        }
    }

    /// Per-shot binomial log-likelihood minus its saturated value, and the
    /// Hermitian derivative `Σ_s (n_s/p_s − m_s/(1−p_s)) Π_s / N`.
    fn eval(&self, rho: &Mat4<f64>, want_grad: bool) -> (f64, Option<Mat4<f64>>) {
        let mut ll = 0.0;
        let mut g = linalg::zeros();
        for ((proj, &n), &m) in self.projectors.iter().zip(&self.counts).zip(&self.misses) {
            let p = linalg::trace_product(rho, proj).re;
            let mut w = 0.0;
            if n > 0.0 {
                if p <= 0.0 {
                    return (f64::NEG_INFINITY, None);
                }
                ll += n * p.ln();
                w += n / p;
            }
            if m > 0.0 {
                if p >= 1.0 {
                    return (f64::NEG_INFINITY, None);
                }
                ll += m * (1.0 - p).ln();
                w -= m / (1.0 - p);
            }
            if want_grad && w != 0.0 {
                g = linalg::add(&g, &linalg::scale(proj, w / self.total));
            }
        }
        ((ll - self.saturated) / self.total, want_grad.then_some(g))
    }

    fn value_at(&self, x: &[f64; N_PARAMS]) -> f64 {
        match rho_from_factor(&factor_from_params(x)) {
            Some(r) => self.eval(&r, false).0,
            None => f64::NEG_INFINITY,
        }
    }

    /// Objective and its gradient with respect to the factor parameters.
    fn value_grad(&self, x: &[f64; N_PARAMS]) -> (f64, [f64; N_PARAMS]) {
        let t = factor_from_params(x);
        let Some(rho) = rho_from_factor(&t) else {
            return (f64::NEG_INFINITY, [0.0; N_PARAMS]);
        };
        let (ll, g) = self.eval(&rho, true);
        let Some(r) = g else {
            return (ll, [0.0; N_PARAMS]);
        };
        let tr = linalg::trace(&linalg::matmul(&linalg::adjoint(&t), &t)).re;
        let shift = linalg::trace_product(&r, &rho).re;
        let gm = linalg::add(&r, &linalg::scale(&linalg::identity(), -shift));
        // dL = (2/tr) Re Tr(G T† dT).
        let gt = linalg::matmul(&gm, &linalg::adjoint(&t));
        let mut grad = [0.0; N_PARAMS];
        for i in 0..4 {
            grad[i] = 2.0 / tr * gt[i][i].re;
        }
        let mut k = 4;
        for i in 1..4 {
            for j in 0..i {
                grad[k] = 2.0 / tr * gt[j][i].re;
                grad[k + 1] = -2.0 / tr * gt[j][i].im;
                k += 2;
            }
        }
        (ll, grad)
    }
}

fn dot(a: &[f64; N_PARAMS], b: &[f64; N_PARAMS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64; N_PARAMS], s: f64, d: &[f64; N_PARAMS]) -> [f64; N_PARAMS] {
    let mut out = *x;
    for k in 0..N_PARAMS {
        out[k] += s * d[k];
    }
    out
}

/// Maximum-likelihood density matrix with default options.
pub fn mle_reconstruct(records: &[TomographyRecord]) -> Result<MleResult> {
    mle_reconstruct_with(records, &MleOptions::default())
}

/// Quasi-Newton ascent (limited-memory BFGS directions, Armijo backtracking)
/// on `ρ = T†T / Tr(T†T)`, starting from the clipped linear-inversion
/// estimate. Every accepted step increases the likelihood.
pub fn mle_reconstruct_with(records: &[TomographyRecord], opts: &MleOptions) -> Result<MleResult> {
    let lin = linear_inversion::<f64>(records)?;
    let start = clip_to_physical(&lin);
    let obj = Objective::new(records);

    let mut x = params_from_factor(&factor_of(start.entries()));
    let (mut f, mut g) = obj.value_grad(&x);
    if !f.is_finite() {
        // Data with p = 0 or 1 exactly can make the clipped start infeasible;
        // the maximally mixed state is always feasible.
        x = params_from_factor(&factor_of(DensityMatrix::<f64>::maximally_mixed().entries()));
        (f, g) = obj.value_grad(&x);
    }
    let mut history = vec![f];
    const MEMORY: usize = 8;
    let mut s_hist: Vec<[f64; N_PARAMS]> = Vec::new();
    let mut y_hist: Vec<[f64; N_PARAMS]> = Vec::new();
    let mut last_improvement = f64::INFINITY;

    for iter in 1..=opts.max_iterations {
        // Two-loop recursion on the negated objective.
        let mut q = g.map(|v| -v);
        let mut alphas = Vec::with_capacity(s_hist.len());
        for (s, y) in s_hist.iter().zip(&y_hist).rev() {
            let rho_k = 1.0 / dot(y, s);
            let a = rho_k * dot(s, &q);
            q = axpy(&q, -a, y);
            alphas.push((a, rho_k));
        }
        let gamma = match (s_hist.last(), y_hist.last()) {
            (Some(s), Some(y)) => dot(s, y) / dot(y, y),
            _ => 1.0 / dot(&g, &g).sqrt().max(1e-12),
        };
        let mut r = q.map(|v| v * gamma);
        for ((s, y), (a, rho_k)) in s_hist.iter().zip(&y_hist).zip(alphas.into_iter().rev()) {
            let b = rho_k * dot(y, &r);
            r = axpy(&r, a - b, s);
        }
        let mut dir = r.map(|v| -v);
        let mut slope = dot(&g, &dir);
        if !(slope > 0.0) {
            dir = g;
            slope = dot(&g, &g);
            s_hist.clear();
            y_hist.clear();
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = axpy(&x, step, &dir);
            let fn_ = obj.value_at(&xn);
            if fn_.is_finite() && fn_ >= f + 1e-4 * step * slope {
                accepted = Some((xn, fn_));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_)) = accepted else {
            // No ascent step left at double precision.
            return finish(&x, f, iter - 1, history);
        };
        let (_, gn) = obj.value_grad(&xn);
        let s = std::array::from_fn(|k| xn[k] - x[k]);
        let y = std::array::from_fn(|k| -(gn[k] - g[k]));
        if dot(&s, &y) > 1e-16 {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > MEMORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }
        last_improvement = fn_ - f;
        debug_assert!(last_improvement >= 0.0);
        x = xn;
        f = fn_;
        g = gn;
        history.push(f);
        if last_improvement < opts.tolerance {
            return finish(&x, f, iter, history);
        }
    }
    let rho = rho_from_factor(&factor_from_params(&x)).unwrap_or_else(|| *DensityMatrix::<f64>::maximally_mixed().entries());
    Err(Error::NotConverged { iterations: opts.max_iterations, last_improvement, last_iterate: Box::new(rho) })
}

fn finish(x: &[f64; N_PARAMS], f: f64, iterations: usize, history: Vec<f64>) -> Result<MleResult> {
    let rho = rho_from_factor(&factor_from_params(x)).ok_or_else(|| Error::InvalidState("degenerate factor".into()))?;
    Ok(MleResult { rho: DensityMatrix::new_unchecked(rho), log_likelihood: f, iterations, history })
}

pub fn records_to_csv(records: &[TomographyRecord]) -> String {
    let mut s = String::from("alice_projector,bob_projector,shots,count\n");
    for r in records {
        s.push_str(&format!("{},{},{},{}\n", r.setting.alice_projector, r.setting.bob_projector, r.setting.shots, r.count));
    }
    s
}

pub fn records_from_csv(text: &str) -> Result<Vec<TomographyRecord>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty tomography CSV".into()))?;
    if header.trim() != "alice_projector,bob_projector,shots,count" {
        return Err(Error::Parse(format!("unexpected header `{header}`")));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(Error::Parse(format!("line {}: expected 4 fields", i + 2)));
            }
            let num = |s: &str| s.parse::<u64>().map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)));
            let setting = TomographySetting { alice_projector: f[0].parse()?, bob_projector: f[1].parse()?, shots: num(f[2])? };
            TomographyRecord::new(setting, num(f[3])?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{bell_state, noisy_state};

    fn exact_records(rho: &DensityMatrix<f64>, shots: u64) -> Vec<TomographyRecord> {
        projector_set(shots)
            .into_iter()
            .map(|s| {
                let p = rho.expectation(&s.projector()).clamp(0.0, 1.0);
                TomographyRecord::new(s, (p * shots as f64).round() as u64).unwrap()
            })
            .collect()
    }

    #[test]
    fn set_is_complete() {
        let s = projector_set(1);
        assert_eq!(s.len(), 36);
        assert_eq!(measurement_rank::<f64>(&s), 16);
        assert!(measurement_rank::<f64>(&s[..12]) < 16);
    }

    #[test]
    fn basis_is_orthonormal() {
        let b = hermitian_basis::<f64>();
        for i in 0..16 {
            for j in 0..16 {
                let ip = linalg::trace_product(&b[i], &b[j]);
                assert!((ip.re - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
                assert!(ip.im.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn linear_inversion_is_exact_on_exact_data() {
        let rho = noisy_state(0.7, 0.4).unwrap();
        let recs: Vec<_> = projector_set(1u64 << 40)
            .into_iter()
            .map(|s| {
                let p = rho.expectation(&s.projector());
                TomographyRecord::new(s, (p * (1u64 << 40) as f64).round() as u64).unwrap()
            })
            .collect();
        let est = linear_inversion::<f64>(&recs).unwrap();
        assert!(linalg::max_abs_diff(&est, rho.entries()) < 1e-9);
    }

    #[test]
    fn factor_round_trip() {
        let rho = noisy_state(0.8, 1.0).unwrap();
        let t = factor_of(rho.entries());
        for i in 0..4 {
            for j in i + 1..4 {
                assert_eq!(t[i][j], C::new(0.0, 0.0));
            }
        }
        let back = rho_from_factor(&t).unwrap();
        assert!(linalg::max_abs_diff(&back, rho.entries()) < 0.02);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let rho = noisy_state(0.9, 0.3).unwrap();
        let obj = Objective::new(&simulate_counts(&rho, 10_000, 1).unwrap());
        let x = params_from_factor(&factor_of(noisy_state(0.6, 0.1).unwrap().entries()));
        let (_, g) = obj.value_grad(&x);
        for k in 0..N_PARAMS {
            let h = 1e-6;
            let fd = (obj.value_at(&axpy(&x, h, &unit(k))) - obj.value_at(&axpy(&x, -h, &unit(k)))) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", g[k]);
        }
    }

    fn unit(k: usize) -> [f64; N_PARAMS] {
        let mut e = [0.0; N_PARAMS];
        e[k] = 1.0;
        e
    }

    #[test]
    fn exact_bell_data_reconstructs_bell_state() {
        let rho = bell_state(0.0);
        let res = mle_reconstruct(&exact_records(&rho, 1_000_000_000)).unwrap();
        let f = res.rho.expectation(rho.entries());
        assert!(f >= 0.999, "fidelity {f}");
        assert!(res.history.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn incomplete_data_is_rejected() {
        let recs = simulate_counts(&bell_state(0.0), 100, 3).unwrap();
        assert!(matches!(mle_reconstruct(&recs[..20]), Err(Error::IncompleteData { .. })));
    }

    #[test]
    fn too_few_iterations_report_last_iterate() {
        let recs = simulate_counts(&noisy_state(0.9, 0.0).unwrap(), 10_000, 5).unwrap();
        let err = mle_reconstruct_with(&recs, &MleOptions { max_iterations: 1, tolerance: 0.0 }).unwrap_err();
        match err {
            Error::NotConverged { iterations, last_iterate, .. } => {
                assert_eq!(iterations, 1);
                DensityMatrix::new(*last_iterate).unwrap();
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let recs = simulate_counts(&bell_state(0.3), 50, 9).unwrap();
        assert_eq!(records_from_csv(&records_to_csv(&recs)).unwrap(), recs);
        assert!(records_from_csv("a,b\n").is_err());
    }

    #[test]
    fn simulation_is_seeded() {
        let rho = noisy_state(0.9, 0.0).unwrap();
        assert_eq!(simulate_counts(&rho, 1000, 4).unwrap(), simulate_counts(&rho, 1000, 4).unwrap());
        assert_ne!(simulate_counts(&rho, 1000, 4).unwrap(), simulate_counts(&rho, 1000, 5).unwrap());
    }
}
