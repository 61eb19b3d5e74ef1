//! Small dense linear algebra over `Complex<T>`: just what 4×4 density
//! matrices and the 16-parameter tomography map need.

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::scalar::Real;

pub type C<T> = Complex<T>;
pub type Mat4<T> = [[C<T>; 4]; 4];

pub fn zeros<T: Real>() -> Mat4<T> {
    [[C::zero(); 4]; 4]
}

pub fn identity<T: Real>() -> Mat4<T> {
    let mut m = zeros();
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = C::one();
    }
    m
}

pub fn matmul<T: Real>(a: &Mat4<T>, b: &Mat4<T>) -> Mat4<T> {
    let mut out = zeros();
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).fold(C::zero(), |s, x| s + x);
        }
    }
    out
}

pub fn adjoint<T: Real>(a: &Mat4<T>) -> Mat4<T> {
    let mut out = zeros();
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = a[j][i].conj();
        }
    }
    out
}

pub fn trace<T: Real>(a: &Mat4<T>) -> C<T> {
    (0..4).map(|i| a[i][i]).fold(C::zero(), |s, x| s + x)
}

/// `Tr(a·b)` without forming the product.
pub fn trace_product<T: Real>(a: &Mat4<T>, b: &Mat4<T>) -> C<T> {
    let mut s = C::zero();
    for i in 0..4 {
        for k in 0..4 {
            s = s + a[i][k] * b[k][i];
        }
    }
    s
}

pub fn scale<T: Real>(a: &Mat4<T>, s: T) -> Mat4<T> {
    let mut out = *a;
    out.iter_mut().flatten().for_each(|x| *x = *x * s);
    out
}

pub fn add<T: Real>(a: &Mat4<T>, b: &Mat4<T>) -> Mat4<T> {
    let mut out = *a;
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = out[i][j] + b[i][j];
        }
    }
    out
}

/// `|a⟩⟨b|` for 4-vectors.
pub fn outer<T: Real>(a: &[C<T>; 4], b: &[C<T>; 4]) -> Mat4<T> {
    let mut out = zeros();
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = a[i] * b[j].conj();
        }
    }
    out
}

/// Kronecker product of two 2×2 matrices, first factor on the high bit.
pub fn kron2<T: Real>(a: &[[C<T>; 2]; 2], b: &[[C<T>; 2]; 2]) -> Mat4<T> {
    let mut out = zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[2 * i + k][2 * j + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn max_abs_diff<T: Real>(a: &Mat4<T>, b: &Mat4<T>) -> T {
    let mut m = T::zero();
    for i in 0..4 {
        for j in 0..4 {
            m = m.max((a[i][j] - b[i][j]).norm());
        }
    }
    m
}

/// Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi
/// rotations. Returns ascending eigenvalues and the matching eigenvectors as
/// columns of the second value.
pub fn hermitian_eigen<T: Real>(m: &[Vec<C<T>>]) -> (Vec<T>, Vec<Vec<C<T>>>) {
    let n = m.len();
    let mut h: Vec<Vec<C<T>>> = m.to_vec();
    let mut v: Vec<Vec<C<T>>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { C::one() } else { C::zero() }).collect())
        .collect();
    let norm: T = h.iter().flatten().map(|x| x.norm_sqr()).sum::<T>().sqrt();
    let tiny = T::epsilon() * norm.max(T::min_positive_value());

    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| h[i][j].norm_sqr())
            .sum::<T>()
            .sqrt();
        if off <= tiny {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let a = h[p][q];
                let b = a.norm();
                if b <= tiny * T::lit(1e-3) {
                    continue;
                }
                // Phase that makes h[p][q] real and positive, then a real
                // rotation that annihilates it.
                let phase = C::from_polar(T::one(), -a.arg());
                let theta = (h[q][q].re - h[p][p].re) / (T::lit(2.0) * b);
                let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                let t = sign / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;

                // G = D·R; only columns p and q differ from identity.
                // G[p][p]=c, G[p][q]=s, G[q][p]=-s·phase, G[q][q]=c·phase.
                let gpp = C::new(c, T::zero());
                let gpq = C::new(s, T::zero());
                let gqp = phase * (-s);
                let gqq = phase * c;

                // h <- h·G
                for row in h.iter_mut() {
                    let hp = row[p];
                    let hq = row[q];
                    row[p] = hp * gpp + hq * gqp;
                    row[q] = hp * gpq + hq * gqq;
                }
                // h <- G†·h
                for col in 0..n {
                    let hp = h[p][col];
                    let hq = h[q][col];
                    h[p][col] = gpp.conj() * hp + gqp.conj() * hq;
                    h[q][col] = gpq.conj() * hp + gqq.conj() * hq;
                }
                for row in v.iter_mut() {
                    let vp = row[p];
                    let vq = row[q];
                    row[p] = vp * gpp + vq * gqp;
                    row[q] = vp * gpq + vq * gqq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| h[a][a].re.partial_cmp(&h[b][b].re).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| h[i][i].re).collect();
    let vectors = (0..n).map(|r| order.iter().map(|&c| v[r][c]).collect()).collect();
    (values, vectors)
}

pub fn mat4_to_rows<T: Real>(m: &Mat4<T>) -> Vec<Vec<C<T>>> {
    m.iter().map(|r| r.to_vec()).collect()
}

pub fn eigen4<T: Real>(m: &Mat4<T>) -> ([T; 4], Mat4<T>) {
    let (vals, vecs) = hermitian_eigen(&mat4_to_rows(m));
    let mut values = [T::zero(); 4];
    values.copy_from_slice(&vals);
    let mut out = zeros();
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = vecs[i][j];
        }
    }
    (values, out)
}

/// Solves `a·x = b` by Gaussian elimination with partial pivoting. Returns
/// `None` for a numerically singular system.
pub fn solve<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<Vec<T>> {
    let n = b.len();
    let scale = a.iter().flatten().fold(T::zero(), |m, x| m.max(x.abs()));
    let tol = T::epsilon() * T::lit(64.0) * scale * T::lit(n as f64);
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].abs() <= tol {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col][k];
                a[row][k] = a[row][k] - f * v;
            }
            let bc = b[col];
            b[row] = b[row] - f * bc;
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let s = ((row + 1)..n).fold(b[row], |s, k| s - a[row][k] * x[k]);
        x[row] = s / a[row][row];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C<f64> {
        C::new(re, im)
    }

    #[test]
    fn eigen_reconstructs_hermitian_matrix() {
        let m: Mat4<f64> = [
            [c(2.0, 0.0), c(0.5, 0.3), c(0.0, -0.2), c(0.1, 0.0)],
            [c(0.5, -0.3), c(1.0, 0.0), c(0.25, 0.25), c(0.0, 0.4)],
            [c(0.0, 0.2), c(0.25, -0.25), c(-1.0, 0.0), c(0.3, -0.1)],
            [c(0.1, 0.0), c(0.0, -0.4), c(0.3, 0.1), c(0.5, 0.0)],
        ];
        let (vals, vecs) = eigen4(&m);
        let mut d = zeros();
        for i in 0..4 {
            d[i][i] = c(vals[i], 0.0);
        }
        let back = matmul(&matmul(&vecs, &d), &adjoint(&vecs));
        assert!(max_abs_diff(&back, &m) < 1e-12);
        let unit = matmul(&adjoint(&vecs), &vecs);
        assert!(max_abs_diff(&unit, &identity()) < 1e-12);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn solve_small_system() {
        let a: Vec<Vec<f64>> = vec![vec![4.0, 1.0], vec![1.0, 3.0]];
        let x = solve(a, vec![1.0, 2.0]).unwrap();
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-14);
        assert!(solve(vec![vec![1.0, 2.0], vec![2.0, 4.0]], vec![1.0, 1.0]).is_none());
    }
}
