//! Two-qubit frequency-bin state algebra.
//!
//! Basis order is `{|00⟩, |01⟩, |10⟩, |11⟩}` with the **signal** qubit
//! (Bob's photon) first and the idler (Alice's photon) second. All joint
//! projectors are therefore built as `Π_bob ⊗ Π_alice`.

use std::fmt;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat4, C};
use crate::scalar::Real;

/// A validated 4×4 density matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix<T: Real> {
    entries: Mat4<T>,
}

impl<T: Real> DensityMatrix<T> {
    /// Wraps `entries` after checking Hermiticity, unit trace and PSD.
    pub fn new(entries: Mat4<T>) -> Result<Self> {
        let rho = DensityMatrix { entries };
        rho.validate()?;
        Ok(rho)
    }

    pub(crate) fn new_unchecked(entries: Mat4<T>) -> Self {
        DensityMatrix { entries }
    }

    pub fn maximally_mixed() -> Self {
        Self::new_unchecked(linalg::scale(&linalg::identity(), T::lit(0.25)))
    }

    pub fn entries(&self) -> &Mat4<T> {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> C<T> {
        self.entries[row][col]
    }

    pub fn trace(&self) -> C<T> {
        linalg::trace(&self.entries)
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> [T; 4] {
        linalg::eigen4(&self.entries).0
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.entries;
        if m.iter().flatten().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(Error::InvalidState("non-finite entry".into()));
        }
        let herm = linalg::max_abs_diff(m, &linalg::adjoint(m));
        if herm.to_f64_lossy() > T::HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (deviation {herm})")));
        }
        let tr = self.trace();
        if (tr - C::one()).norm().to_f64_lossy() > T::TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min_eig = self.eigenvalues()[0];
        if min_eig.to_f64_lossy() < T::PSD_FLOOR {
            return Err(Error::InvalidState(format!("negative eigenvalue {min_eig}")));
        }
        Ok(())
    }

    /// Expectation `Tr(ρ·Π)` of a Hermitian operator, real part.
    pub fn expectation(&self, op: &Mat4<T>) -> T {
        linalg::trace_product(&self.entries, op).re
    }

    /// Trace distance `½‖ρ−σ‖₁`.
    pub fn trace_distance(&self, other: &Self) -> T {
        let diff = linalg::add(&self.entries, &linalg::scale(&other.entries, -T::one()));
        let (vals, _) = linalg::eigen4(&diff);
        vals.iter().map(|v| v.abs()).sum::<T>() * T::lit(0.5)
    }
}

/// Pure two-qubit state vector in the same basis order as [`DensityMatrix`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PureState<T: Real>(pub [C<T>; 4]);

impl<T: Real> PureState<T> {
    /// `(|00⟩ + e^{iθ}|11⟩)/√2`.
    pub fn bell(theta: T) -> Self {
        let h = T::FRAC_1_SQRT_2();
        PureState([
            C::new(h, T::zero()),
            C::zero(),
            C::zero(),
            C::from_polar(h, theta),
        ])
    }

    pub fn psi_plus() -> Self {
        Self::bell(T::zero())
    }

    pub fn psi_minus() -> Self {
        Self::bell(T::PI())
    }

    pub fn norm_sqr(&self) -> T {
        self.0.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn density(&self) -> DensityMatrix<T> {
        DensityMatrix::new_unchecked(linalg::outer(&self.0, &self.0))
    }
}

/// Density matrix of `(|00⟩ + e^{iθ}|11⟩)/√2`.
pub fn bell_state<T: Real>(theta: T) -> DensityMatrix<T> {
    PureState::bell(theta).density()
}

/// Werner mixture `p·|ψ(θ)⟩⟨ψ(θ)| + (1−p)·I/4`.
pub fn noisy_state<T: Real>(p_werner: T, theta: T) -> Result<DensityMatrix<T>> {
    if !(p_werner >= T::zero() && p_werner <= T::one()) {
        return Err(Error::param("p_werner", format!("{p_werner} outside [0, 1]")));
    }
    let pure = linalg::scale(bell_state(theta).entries(), p_werner);
    let mixed = linalg::scale(&linalg::identity(), (T::one() - p_werner) * T::lit(0.25));
    Ok(DensityMatrix::new_unchecked(linalg::add(&pure, &mixed)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Z => "Z",
            Basis::X => "X",
        })
    }
}

/// Local measurement choice. For `X` the outcome-0 projector is
/// `(⟨0| + e^{iφ}⟨1|)/√2` and outcome 1 is its orthogonal complement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeasurementSetting<T: Real> {
    basis: Basis,
    analysis_phase: T,
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_phase<T: Real>(phi: T) -> T {
    let two_pi = T::TAU();
    let mut w = phi % two_pi;
    if w < T::zero() {
        w = w + two_pi;
    }
    if w >= two_pi {
        w = w - two_pi;
    }
    w
}

impl<T: Real> MeasurementSetting<T> {
    pub fn z() -> Self {
        MeasurementSetting { basis: Basis::Z, analysis_phase: T::zero() }
    }

    pub fn x(analysis_phase: T) -> Self {
        MeasurementSetting { basis: Basis::X, analysis_phase: wrap_phase(analysis_phase) }
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn analysis_phase(&self) -> T {
        self.analysis_phase
    }

    /// Kets onto which outcome 0 and outcome 1 project.
    pub fn kets(&self) -> [[C<T>; 2]; 2] {
        match self.basis {
            Basis::Z => [[C::one(), C::zero()], [C::zero(), C::one()]],
            Basis::X => {
                let h = T::FRAC_1_SQRT_2();
                // The bra carries e^{+iφ}, so the ket carries e^{-iφ}.
                let e = C::from_polar(h, -self.analysis_phase);
                [[C::new(h, T::zero()), e], [C::new(h, T::zero()), -e]]
            }
        }
    }

    pub fn projector(&self, outcome: usize) -> [[C<T>; 2]; 2] {
        let k = self.kets()[outcome];
        let mut p = [[C::zero(); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                p[i][j] = k[i] * k[j].conj();
            }
        }
        p
    }
}

/// Joint projector for Alice outcome `a` and Bob outcome `b`
/// (signal-first ordering: `Π_bob ⊗ Π_alice`).
pub fn joint_projector<T: Real>(
    alice: &MeasurementSetting<T>,
    a: usize,
    bob: &MeasurementSetting<T>,
    b: usize,
) -> Mat4<T> {
    linalg::kron2(&bob.projector(b), &alice.projector(a))
}

/// `table[a][b]` = probability of Alice outcome `a` and Bob outcome `b`
/// (index 0 is `+`/`0`, index 1 is `−`/`1`).
pub type OutcomeTable<T> = [[T; 2]; 2];

pub fn outcome_probabilities<T: Real>(
    rho: &DensityMatrix<T>,
    alice: &MeasurementSetting<T>,
    bob: &MeasurementSetting<T>,
) -> Result<OutcomeTable<T>> {
    rho.validate()?;
    Ok(outcome_probabilities_unchecked(rho, alice, bob))
}

/// As [`outcome_probabilities`] without re-validating `rho`; used in hot
/// simulation loops where the state was validated on construction.
pub fn outcome_probabilities_unchecked<T: Real>(
    rho: &DensityMatrix<T>,
    alice: &MeasurementSetting<T>,
    bob: &MeasurementSetting<T>,
) -> OutcomeTable<T> {
    let mut t = [[T::zero(); 2]; 2];
    for (a, row) in t.iter_mut().enumerate() {
        for (b, p) in row.iter_mut().enumerate() {
            *p = rho.expectation(&joint_projector(alice, a, bob, b)).max(T::zero());
        }
    }
    t
}

/// Relative two-photon coincidence rate `(1 + V·cos θ)/2`.
pub fn two_photon_fringe<T: Real>(visibility: T, theta_sum: T) -> Result<T> {
    if !(visibility >= T::zero() && visibility <= T::one()) {
        return Err(Error::param("visibility", format!("{visibility} outside [0, 1]")));
    }
    Ok((T::one() + visibility * theta_sum.cos()) * T::lit(0.5))
}

/// `⟨ψ|ρ|ψ⟩` for a normalized pure target.
pub fn fidelity_to_pure<T: Real>(rho: &DensityMatrix<T>, target: &PureState<T>) -> Result<T> {
    let n = target.norm_sqr();
    if (n - T::one()).abs().to_f64_lossy() > 1e-9_f64.max(T::TRACE_TOL) {
        return Err(Error::param("target", format!("state not normalized (norm² {n})")));
    }
    let psi = &target.0;
    let mut acc: C<T> = C::zero();
    for i in 0..4 {
        for j in 0..4 {
            acc = acc + psi[i].conj() * rho.get(i, j) * psi[j];
        }
    }
    Ok(acc.re.max(T::zero()).min(T::one()))
}

/// Outcome labels for correlation-matrix rows/columns.
pub const OUTCOME_LABELS: [&str; 4] = ["+", "-", "0", "1"];

/// 4×4 correlation matrix of outcome probabilities. Rows index Alice and
/// columns Bob, both ordered `{+, −, 0, 1}`; every 2×2 basis block is
/// normalized separately.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationMatrix<T: Real> {
    entries: [[T; 4]; 4],
}

fn block_offset(b: Basis) -> usize {
    match b {
        Basis::X => 0,
        Basis::Z => 2,
    }
}

const BASES: [Basis; 2] = [Basis::X, Basis::Z];

impl<T: Real> CorrelationMatrix<T> {
    pub fn new(entries: [[T; 4]; 4]) -> Result<Self> {
        let m = CorrelationMatrix { entries };
        for a in BASES {
            for b in BASES {
                let block = m.block(a, b);
                if block.iter().flatten().any(|x| !(*x >= T::zero())) {
                    return Err(Error::param("correlation", format!("negative entry in {a}{b} block")));
                }
                let s: T = block.iter().flatten().copied().sum();
                if (s - T::one()).abs().to_f64_lossy() > 1e-9 {
                    return Err(Error::param("correlation", format!("{a}{b} block sums to {s}")));
                }
            }
        }
        Ok(m)
    }

    /// Ideal matrix for |Ψ⁺⟩: perfect correlation in XX and ZZ, uniform in
    /// the cross-basis blocks.
    pub fn ideal() -> Self {
        let h = T::lit(0.5);
        let q = T::lit(0.25);
        let z = T::zero();
        CorrelationMatrix {
            entries: [[h, z, q, q], [z, h, q, q], [q, q, h, z], [q, q, z, h]],
        }
    }

    pub fn entries(&self) -> &[[T; 4]; 4] {
        &self.entries
    }

    /// 2×2 block for Alice basis `alice` and Bob basis `bob`.
    pub fn block(&self, alice: Basis, bob: Basis) -> [[T; 2]; 2] {
        let (r, c) = (block_offset(alice), block_offset(bob));
        [
            [self.entries[r][c], self.entries[r][c + 1]],
            [self.entries[r + 1][c], self.entries[r + 1][c + 1]],
        ]
    }

    /// Normalizes each 2×2 block of a count matrix by its own total.
    pub fn from_counts(counts: &[[u64; 4]; 4]) -> Result<Self> {
        let mut entries = [[T::zero(); 4]; 4];
        for a in BASES {
            for b in BASES {
                let (r, c) = (block_offset(a), block_offset(b));
                let total: u64 = (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| counts[r + i][c + j]).sum();
                if total == 0 {
                    return Err(Error::InsufficientData(format!("no counts in the {a}{b} subspace")));
                }
                let tot = T::lit(total as f64);
                for i in 0..2 {
                    for j in 0..2 {
                        entries[r + i][c + j] = T::lit(counts[r + i][c + j] as f64) / tot;
                    }
                }
            }
        }
        Ok(CorrelationMatrix { entries })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("alice\\bob");
        for l in OUTCOME_LABELS {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (i, row) in self.entries.iter().enumerate() {
            out.push_str(OUTCOME_LABELS[i]);
            for v in row {
                out.push_str(&format!(",{}", v.to_f64_lossy()));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty correlation CSV".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() != 5 || cols[1..] != OUTCOME_LABELS {
            return Err(Error::Parse(format!("unexpected header `{header}`")));
        }
        let mut entries = [[T::zero(); 4]; 4];
        for (i, row) in entries.iter_mut().enumerate() {
            let line = lines.next().ok_or_else(|| Error::Parse("missing row".into()))?;
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 || fields[0] != OUTCOME_LABELS[i] {
                return Err(Error::Parse(format!("bad row `{line}`")));
            }
            for (j, f) in fields[1..].iter().enumerate() {
                let v: f64 = f.parse().map_err(|_| Error::Parse(format!("bad number `{f}`")))?;
                row[j] = T::lit(v);
            }
        }
        Self::new(entries)
    }
}

fn trace_ata<T: Real, const N: usize>(a: &[[T; N]; N], b: &[[T; N]; N]) -> T {
    // Tr(AᵀB) = Σ_ij A_ij B_ij
    a.iter().zip(b).flat_map(|(ra, rb)| ra.iter().zip(rb)).map(|(x, y)| *x * *y).sum()
}

fn matrix_fidelity<T: Real, const N: usize>(exp: &[[T; N]; N], th: &[[T; N]; N]) -> Result<T> {
    let ee = trace_ata(exp, exp);
    let tt = trace_ata(th, th);
    if ee <= T::zero() || tt <= T::zero() {
        return Err(Error::param("correlation", "zero matrix has no fidelity"));
    }
    let et = trace_ata(exp, th);
    let te = trace_ata(th, exp);
    Ok(et * te / (ee * tt))
}

/// `Tr(AᵀB)·Tr(BᵀA) / (Tr(AᵀA)·Tr(BᵀB))`; 1 iff the matrices are proportional.
pub fn correlation_fidelity<T: Real>(exp: &CorrelationMatrix<T>, th: &CorrelationMatrix<T>) -> Result<T> {
    matrix_fidelity(&exp.entries, &th.entries)
}

/// The same overlap restricted to one 2×2 basis block.
pub fn subspace_fidelity<T: Real>(
    exp: &CorrelationMatrix<T>,
    th: &CorrelationMatrix<T>,
    alice: Basis,
    bob: Basis,
) -> Result<T> {
    matrix_fidelity(&exp.block(alice, bob), &th.block(alice, bob))
}

pub fn ideal_correlation_matrix<T: Real>() -> CorrelationMatrix<T> {
    CorrelationMatrix::ideal()
}

pub fn normalize_counts_to_correlation<T: Real>(counts: &[[u64; 4]; 4]) -> Result<CorrelationMatrix<T>> {
    CorrelationMatrix::from_counts(counts)
}

impl<T: Real> fmt::Display for DensityMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.entries {
            let cells: Vec<String> = row.iter().map(|c| format!("{:+.4}{:+.4}i", c.re, c.im)).collect();
            writeln!(f, "{}", cells.join("  "))?;
        }
        Ok(())
    }
}

/// Writes ρ as two 4×4 CSV blocks, real parts then imaginary parts.
pub fn density_to_csv<T: Real>(rho: &DensityMatrix<T>) -> String {
    let mut out = String::from("part,c00,c01,c10,c11\n");
    for (part, pick) in [("re", 0usize), ("im", 1usize)] {
        for row in rho.entries() {
            out.push_str(part);
            for c in row {
                let v = if pick == 0 { c.re } else { c.im };
                out.push_str(&format!(",{}", v.to_f64_lossy()));
            }
            out.push('\n');
        }
    }
    out
}

pub fn density_from_csv(text: &str) -> Result<DensityMatrix<f64>> {
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(str::trim).collect())
        .collect();
    if rows.len() != 8 || rows.iter().any(|r| r.len() != 5) {
        return Err(Error::Parse("density CSV needs 8 rows of 5 fields".into()));
    }
    let mut m = linalg::zeros::<f64>();
    for (k, r) in rows.iter().enumerate() {
        let (i, imag) = (k % 4, k >= 4);
        for j in 0..4 {
            let v: f64 = r[j + 1].parse().map_err(|_| Error::Parse(format!("bad number `{}`", r[j + 1])))?;
            if imag {
                m[i][j].im = v;
            } else {
                m[i][j].re = v;
            }
        }
    }
    DensityMatrix::new(m)
}

impl<T: Real> From<PureState<T>> for DensityMatrix<T> {
    fn from(p: PureState<T>) -> Self {
        p.density()
    }
}
