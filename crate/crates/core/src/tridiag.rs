//! Symmetric tridiagonal eigensolver.
//!
//! Implicit QL with a Wilkinson-type shift taken from the leading 2x2
//! submatrix, in the spirit of the EISPACK `tql2` routine. Eigenvectors come
//! either from accumulating the QL rotations (each plane rotation acts on two
//! contiguous columns of a column-major buffer) or from inverse iteration on
//! the converged eigenvalues, which is `O(n^2)` instead of `O(n^3)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Eigenvalues (ascending) and, optionally, the matching orthonormal
/// eigenvectors stored as matrix columns.
#[derive(Debug, Clone)]
pub struct TridiagEigen {
    pub values: Vec<f64>,
    pub vectors: Option<DMatrix<f64>>,
}

/// How eigenvectors are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorMethod {
    /// Accumulate the QL rotations.
    Rotations,
    /// Inverse iteration on the QL eigenvalues, reorthogonalized inside
    /// clusters of close eigenvalues.
    InverseIteration,
}

/// Below this dimension [`eigh_tridiagonal`] accumulates rotations.
pub const ROTATION_CUTOFF: usize = 256;

/// Diagonalize the symmetric tridiagonal matrix with main diagonal `diag`
/// and superdiagonal `offdiag` (`offdiag.len() == diag.len() - 1`).
///
/// The iteration cap is `50 * n` QL sweeps in total; exceeding it reports
/// the index of the eigenvalue that was being isolated.
pub fn eigh_tridiagonal(diag: &[f64], offdiag: &[f64], want_vectors: bool) -> Result<TridiagEigen> {
    if !want_vectors {
        return ql(diag, offdiag, false);
    }
    let method = if diag.len() <= ROTATION_CUTOFF {
        VectorMethod::Rotations
    } else {
        VectorMethod::InverseIteration
    };
    eigh_tridiagonal_with(diag, offdiag, method)
}

/// Eigenvalues and eigenvectors with an explicit choice of vector method.
pub fn eigh_tridiagonal_with(diag: &[f64], offdiag: &[f64], method: VectorMethod) -> Result<TridiagEigen> {
    match method {
        VectorMethod::Rotations => ql(diag, offdiag, true),
        VectorMethod::InverseIteration => {
            let values = ql(diag, offdiag, false)?.values;
            let vectors = inverse_iteration(diag, offdiag, &values);
            Ok(TridiagEigen {
                values,
                vectors: Some(vectors),
            })
        }
    }
}

fn ql(diag: &[f64], offdiag: &[f64], want_vectors: bool) -> Result<TridiagEigen> {
    let n = diag.len();
    if n == 0 {
        return Ok(TridiagEigen {
            values: Vec::new(),
            vectors: want_vectors.then(|| DMatrix::zeros(0, 0)),
        });
    }
    if offdiag.len() + 1 != n {
        return Err(Error::DimensionMismatch {
            expected: n - 1,
            found: offdiag.len(),
        });
    }

    let mut d = diag.to_vec();
    let mut e = Vec::with_capacity(n);
    e.extend_from_slice(offdiag);
    e.push(0.0);

    let mut z = if want_vectors {
        let mut z = vec![0.0; n * n];
        for i in 0..n {
            z[i * n + i] = 1.0;
        }
        Some(z)
    } else {
        None
    };

    let eps = f64::EPSILON;
    let cap = 50 * n.max(1);
    let mut sweeps = 0usize;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;

    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        // e[n-1] == 0 guarantees m < n.

        if m > l {
            loop {
                sweeps += 1;
                if sweeps > cap {
                    return Err(Error::NoConvergence {
                        index: l,
                        iterations: sweeps - 1,
                    });
                }

                // Shift from the leading 2x2 block.
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    let h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);

                    if let Some(z) = z.as_mut() {
                        rotate_columns(z, n, i, c, s);
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values: Vec<f64> = order.iter().map(|&i| d[i]).collect();

    let vectors = z.map(|z| {
        let mut sorted = vec![0.0; n * n];
        for (dst, &src) in order.iter().enumerate() {
            sorted[dst * n..(dst + 1) * n].copy_from_slice(&z[src * n..(src + 1) * n]);
        }
        DMatrix::from_vec(n, n, sorted)
    });

    Ok(TridiagEigen { values, vectors })
}

/// Apply the plane rotation to columns `i` and `i + 1` of the column-major
/// `n x n` buffer.
#[inline]
fn rotate_columns(z: &mut [f64], n: usize, i: usize, c: f64, s: f64) {
    let (left, right) = z.split_at_mut((i + 1) * n);
    let zi = &mut left[i * n..];
    let zi1 = &mut right[..n];
    for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
        let h = *b;
        *b = s * *a + c * h;
        *a = c * *a - s * h;
    }
}

/// LU factorization of `T - λI` with partial pivoting. `u0`, `u1`, `u2` are
/// the diagonal and the two superdiagonals of `U`, `mult` the multipliers.
struct ShiftedLu {
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    mult: Vec<f64>,
    swapped: Vec<bool>,
}

impl ShiftedLu {
    fn new(diag: &[f64], offdiag: &[f64], lambda: f64) -> Self {
        let n = diag.len();
        let mut u0: Vec<f64> = diag.iter().map(|d| d - lambda).collect();
        let mut u1 = offdiag.to_vec();
        u1.push(0.0);
        let mut u2 = vec![0.0; n];
        let mut mult = vec![0.0; n];
        let mut swapped = vec![false; n];
        for k in 0..n.saturating_sub(1) {
            let sub = offdiag[k];
            if u0[k].abs() >= sub.abs() {
                let m = if u0[k] == 0.0 { 0.0 } else { sub / u0[k] };
                mult[k] = m;
                u0[k + 1] -= m * u1[k];
            } else {
                let m = u0[k] / sub;
                mult[k] = m;
                swapped[k] = true;
                u0[k] = sub;
                let below = u0[k + 1];
                u0[k + 1] = u1[k] - m * below;
                if k + 2 < n {
                    u2[k] = u1[k + 1];
                    u1[k + 1] = -m * u2[k];
                }
                u1[k] = below;
            }
        }
        Self {
            u0,
            u1,
            u2,
            mult,
            swapped,
        }
    }

    /// Solve in place; zero pivots are replaced by `±tiny`.
    fn solve(&self, y: &mut [f64], tiny: f64) {
        let n = y.len();
        for k in 0..n.saturating_sub(1) {
            if self.swapped[k] {
                let t = y[k];
                y[k] = y[k + 1];
                y[k + 1] = t - self.mult[k] * y[k];
            } else {
                y[k + 1] -= self.mult[k] * y[k];
            }
        }
        for k in (0..n).rev() {
            let mut t = y[k];
            if k + 1 < n {
                t -= self.u1[k] * y[k + 1];
            }
            if k + 2 < n {
                t -= self.u2[k] * y[k + 2];
            }
            let mut p = self.u0[k];
            if p.abs() < tiny {
                p = if p < 0.0 { -tiny } else { tiny };
            }
            y[k] = t / p;
        }
    }
}

fn inverse_iteration(diag: &[f64], offdiag: &[f64], values: &[f64]) -> DMatrix<f64> {
    let n = diag.len();
    let norm = (0..n)
        .map(|i| {
            diag[i].abs()
                + if i > 0 { offdiag[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { offdiag[i].abs() } else { 0.0 }
        })
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let tiny = f64::EPSILON * norm;
    let cluster_gap = 1e-5 * norm;

    let mut z = vec![0.0; n * n];
    let mut seed = 0x9e37_79b9_7f4a_7c15u64;
    let mut cluster_start = 0;
    for (col, &lambda) in values.iter().enumerate() {
        if col > 0 && lambda - values[col - 1] > cluster_gap {
            cluster_start = col;
        }
        // Coincident eigenvalues inside a cluster would give identical
        // factorizations; nudge them apart.
        let shift = lambda + (col - cluster_start) as f64 * tiny;
        let lu = ShiftedLu::new(diag, offdiag, shift);
        let mut x: Vec<f64> = (0..n)
            .map(|_| {
                seed ^= seed << 13;
                seed ^= seed >> 7;
                seed ^= seed << 17;
                (seed >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        for _ in 0..3 {
            lu.solve(&mut x, tiny);
            let done = &z[..col * n];
            for prev in cluster_start..col {
                let v = &done[prev * n..(prev + 1) * n];
                let proj: f64 = v.iter().zip(&x).map(|(a, b)| a * b).sum();
                for (xi, vi) in x.iter_mut().zip(v) {
                    *xi -= proj * vi;
                }
            }
            let scale = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            for xi in x.iter_mut() {
                *xi /= scale;
            }
        }
        z[col * n..(col + 1) * n].copy_from_slice(&x);
    }
    DMatrix::from_vec(n, n, z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(diag: &[f64], off: &[f64]) -> DMatrix<f64> {
        let n = diag.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                diag[i]
            } else if j == i + 1 {
                off[i]
            } else if i == j + 1 {
                off[j]
            } else {
                0.0
            }
        })
    }

    #[test]
    fn two_by_two_closed_form() {
        let res = eigh_tridiagonal(&[2.0, -1.0], &[0.5], true).unwrap();
        let mean = 0.5;
        let rad = (1.5f64 * 1.5 + 0.25).sqrt();
        assert!((res.values[0] - (mean - rad)).abs() < 1e-14);
        assert!((res.values[1] - (mean + rad)).abs() < 1e-14);
    }

    #[test]
    fn empty_and_single() {
        let res = eigh_tridiagonal(&[], &[], true).unwrap();
        assert!(res.values.is_empty());
        let res = eigh_tridiagonal(&[3.5], &[], true).unwrap();
        assert_eq!(res.values, vec![3.5]);
        assert_eq!(res.vectors.unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn rejects_bad_offdiagonal_length() {
        assert!(matches!(
            eigh_tridiagonal(&[1.0, 2.0], &[], false),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn matches_dense_oracle_and_reconstructs() {
        // Deterministic pseudo-random entries.
        let n = 37;
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let diag: Vec<f64> = (0..n).map(|_| 10.0 * next()).collect();
        let off: Vec<f64> = (0..n - 1).map(|_| next()).collect();
        let res = eigh_tridiagonal(&diag, &off, true).unwrap();
        let a = dense(&diag, &off);
        let mut oracle: Vec<f64> = a.clone().symmetric_eigenvalues().iter().copied().collect();
        oracle.sort_by(f64::total_cmp);
        for (x, y) in res.values.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
        let v = res.vectors.unwrap();
        let gram = v.transpose() * &v;
        assert!((gram - DMatrix::identity(n, n)).amax() < 1e-13);
        for k in 0..n {
            let col = v.column(k);
            let resid = (&a * col - col * res.values[k]).amax();
            assert!(resid < 1e-12);
        }
    }

    #[test]
    fn values_only_agree_with_vector_path() {
        let diag: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let off: Vec<f64> = (0..19).map(|i| 1.0 + 0.1 * i as f64).collect();
        let a = eigh_tridiagonal(&diag, &off, false).unwrap();
        let b = eigh_tridiagonal(&diag, &off, true).unwrap();
        assert!(a.vectors.is_none());
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn already_diagonal() {
        let res = eigh_tridiagonal(&[3.0, 1.0, 2.0], &[0.0, 0.0], true).unwrap();
        assert_eq!(res.values, vec![1.0, 2.0, 3.0]);
        let v = res.vectors.unwrap();
        assert_eq!(v[(1, 0)], 1.0);
        assert_eq!(v[(2, 1)], 1.0);
        assert_eq!(v[(0, 2)], 1.0);
    }
    #[test]
    fn inverse_iteration_matches_rotations() {
        let n = 300;
        let diag: Vec<f64> = (0..n).map(|i| ((i * i) as f64 * 0.37).cos() * 5.0 + i as f64 * 0.1).collect();
        let off: Vec<f64> = (0..n - 1).map(|i| 0.5 + ((i as f64) * 1.3).sin()).collect();
        let a = eigh_tridiagonal_with(&diag, &off, VectorMethod::Rotations).unwrap();
        let b = eigh_tridiagonal_with(&diag, &off, VectorMethod::InverseIteration).unwrap();
        assert_eq!(a.values, b.values);
        let (va, vb) = (a.vectors.unwrap(), b.vectors.unwrap());
        let gram = vb.transpose() * &vb;
        assert!((gram - DMatrix::identity(n, n)).amax() < 1e-10);
        let t = dense(&diag, &off);
        for k in 0..n {
            let overlap = va.column(k).dot(&vb.column(k)).abs();
            assert!((overlap - 1.0).abs() < 1e-9, "column {k}: {overlap}");
            let resid = (&t * vb.column(k) - vb.column(k) * b.values[k]).amax();
            assert!(resid < 1e-10);
        }
    }

    #[test]
    fn inverse_iteration_handles_exact_degeneracy() {
        // Two decoupled copies of the same block give pairwise equal
        // eigenvalues.
        let diag = [1.0, 2.0, 3.0, 1.0, 2.0, 3.0];
        let off = [0.5, 0.5, 0.0, 0.5, 0.5];
        let res = eigh_tridiagonal_with(&diag, &off, VectorMethod::InverseIteration).unwrap();
        let v = res.vectors.unwrap();
        let gram = v.transpose() * &v;
        assert!((gram - DMatrix::identity(6, 6)).amax() < 1e-12);
        let t = dense(&diag, &off);
        for k in 0..6 {
            assert!((&t * v.column(k) - v.column(k) * res.values[k]).amax() < 1e-12);
        }
    }
}
