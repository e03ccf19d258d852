//! The anharmonic Lipkin-Meshkov-Glick Hamiltonian in the `j = N/2` sector
//!
//! ```text
//! H = (1 - ξ)(j + Jz) + (2ξ/j)(j² - Jx²) + (α/2j)(j + Jz)(j + Jz + 1)
//! ```
//!
//! The coefficient of the `Jx²` term is `2ξ/j`, with `j = N/2` the spin
//! length. Parity `Π = exp(iπ(j + Jz))` commutes with `H`, so the matrix
//! splits into two real symmetric tridiagonal blocks over the sublevels with
//! even and odd `k = j + m`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::operator::{real_matvec, BlockOp, Parity, SectorVec};
use crate::state::{ladder, StateVector};
use crate::tridiag::eigh_tridiagonal;

/// Control parameters `(ξ, α)` and spin length `j = two_j / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams {
    xi: f64,
    alpha: f64,
    two_j: u32,
}

impl ModelParams {
    pub fn new(xi: f64, alpha: f64, two_j: u32) -> Result<Self> {
        if !(0.0..=1.0).contains(&xi) {
            return Err(invalid("xi", format!("{xi} is outside [0, 1]")));
        }
        if !alpha.is_finite() {
            return Err(invalid("alpha", "must be finite"));
        }
        if two_j == 0 {
            return Err(invalid("two_j", "must be at least 1"));
        }
        Ok(Self { xi, alpha, two_j })
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn two_j(&self) -> u32 {
        self.two_j
    }

    pub fn j(&self) -> f64 {
        f64::from(self.two_j) / 2.0
    }

    /// Particle number `N = 2j`.
    pub fn particles(&self) -> f64 {
        f64::from(self.two_j)
    }

    pub fn dim(&self) -> usize {
        self.two_j as usize + 1
    }

    /// Same `(ξ, α)` at another system size.
    pub fn with_two_j(&self, two_j: u32) -> Result<Self> {
        Self::new(self.xi, self.alpha, two_j)
    }
}

/// Parameters of the infinite-range XYZ spin model that maps onto the aLMG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XyzParams {
    pub h: f64,
    pub h_x: f64,
    pub h_z: f64,
    pub n_sites: u32,
}

/// Field and couplings of the XYZ model equivalent to `params`.
pub fn xyz_identification(params: &ModelParams) -> XyzParams {
    let j = params.j();
    XyzParams {
        h: 0.5 * (1.0 - params.xi + params.alpha / (2.0 * j) * (2.0 * j + 1.0)),
        h_x: -params.xi / j,
        h_z: params.alpha / (4.0 * j),
        n_sites: params.two_j,
    }
}

/// Inverse of [`xyz_identification`]; `h` is implied by the couplings.
pub fn almg_from_xyz(xyz: &XyzParams) -> Result<ModelParams> {
    let j = f64::from(xyz.n_sites) / 2.0;
    ModelParams::new(-xyz.h_x * j, 4.0 * j * xyz.h_z, xyz.n_sites)
}

/// One parity block of the Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct ParityBlock {
    pub parity: Parity,
    /// Magnetic quantum numbers, ascending in steps of two.
    pub m_values: Vec<f64>,
    pub diag: Vec<f64>,
    pub offdiag: Vec<f64>,
}

impl ParityBlock {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }
}

fn diagonal_entry(params: &ModelParams, k: usize) -> f64 {
    let (xi, alpha, j) = (params.xi, params.alpha, params.j());
    let kf = k as f64;
    let m = kf - j;
    let jx2 = 0.5 * (j * (j + 1.0) - m * m);
    (1.0 - xi) * kf + 2.0 * xi / j * (j * j - jx2) + alpha / (2.0 * j) * kf * (kf + 1.0)
}

/// `⟨k+2|H|k⟩`.
fn coupling_entry(params: &ModelParams, k: usize) -> f64 {
    let j = params.j();
    -params.xi / (2.0 * j) * ladder(params.two_j, k) * ladder(params.two_j, k + 1)
}

/// Even and odd tridiagonal blocks of the Hamiltonian.
pub fn build_blocks(params: &ModelParams) -> Result<(ParityBlock, ParityBlock)> {
    if params.two_j == 0 {
        return Err(invalid("two_j", "must be at least 1"));
    }
    let block = |parity: Parity| {
        let start = match parity {
            Parity::Even => 0,
            Parity::Odd => 1,
        };
        let ks: Vec<usize> = (start..=params.two_j as usize).step_by(2).collect();
        ParityBlock {
            parity,
            m_values: ks.iter().map(|&k| k as f64 - params.j()).collect(),
            diag: ks.iter().map(|&k| diagonal_entry(params, k)).collect(),
            offdiag: ks
                .iter()
                .take(ks.len().saturating_sub(1))
                .map(|&k| coupling_entry(params, k))
                .collect(),
        }
    };
    Ok((block(Parity::Even), block(Parity::Odd)))
}

/// Dense Hamiltonian in the magnetic ordering, assembled from the blocks.
pub fn dense_hamiltonian(params: &ModelParams) -> Result<DMatrix<f64>> {
    let (even, odd) = build_blocks(params)?;
    let dim = params.dim();
    let mut h = DMatrix::zeros(dim, dim);
    for (b, start) in [(&even, 0usize), (&odd, 1)] {
        for (i, &d) in b.diag.iter().enumerate() {
            h[(start + 2 * i, start + 2 * i)] = d;
        }
        for (i, &o) in b.offdiag.iter().enumerate() {
            let (r, c) = (start + 2 * i, start + 2 * i + 2);
            h[(r, c)] = o;
            h[(c, r)] = o;
        }
    }
    Ok(h)
}

/// Eigenpairs of one parity block.
#[derive(Debug, Clone)]
pub struct SectorEigen {
    pub parity: Parity,
    /// Extensive eigenvalues, ascending.
    pub energies: Vec<f64>,
    /// Columns are eigenvectors over the block's sublevels.
    pub vectors: DMatrix<f64>,
}

impl SectorEigen {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }
}

/// Flip each column so that its largest-magnitude entry is positive.
pub(crate) fn fix_signs(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &x in col.iter() {
            if x.abs() > best {
                best = x.abs();
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

/// Diagonalize one block: ascending energies, orthonormal eigenvectors with
/// the largest component of each made positive.
pub fn diagonalize(block: &ParityBlock) -> Result<SectorEigen> {
    let res = eigh_tridiagonal(&block.diag, &block.offdiag, true)?;
    let mut vectors = res.vectors.expect("vectors requested");
    fix_signs(&mut vectors);
    Ok(SectorEigen {
        parity: block.parity,
        energies: res.values,
        vectors,
    })
}

/// One eigenlevel, labelled by parity and its index within the sector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Level {
    pub parity: Parity,
    pub n: usize,
    pub energy: f64,
}

/// Full spectral decomposition of one Hamiltonian.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub params: ModelParams,
    pub even: SectorEigen,
    pub odd: SectorEigen,
}

impl EigenSystem {
    pub fn new(params: ModelParams) -> Result<Self> {
        let (even_block, odd_block) = build_blocks(&params)?;
        let (even, odd) = rayon::join(|| diagonalize(&even_block), || diagonalize(&odd_block));
        Ok(Self {
            params,
            even: even?,
            odd: odd?,
        })
    }

    pub fn sector(&self, parity: Parity) -> &SectorEigen {
        match parity {
            Parity::Even => &self.even,
            Parity::Odd => &self.odd,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.even.dim(), self.odd.dim())
    }

    /// `ε = E / N`.
    pub fn scaled(&self, energy: f64) -> f64 {
        energy / self.params.particles()
    }

    pub fn scaled_energies(&self, parity: Parity) -> Vec<f64> {
        self.sector(parity)
            .energies
            .iter()
            .map(|&e| self.scaled(e))
            .collect()
    }

    /// All levels sorted by energy.
    pub fn levels(&self) -> Vec<Level> {
        let mut out: Vec<Level> = [&self.even, &self.odd]
            .iter()
            .flat_map(|s| {
                s.energies.iter().enumerate().map(move |(n, &energy)| Level {
                    parity: s.parity,
                    n,
                    energy,
                })
            })
            .collect();
        out.sort_by(|a, b| a.energy.total_cmp(&b.energy));
        out
    }

    pub fn energy(&self, parity: Parity, n: usize) -> f64 {
        self.sector(parity).energies[n]
    }

    /// Eigenvector embedded in the full magnetic basis.
    pub fn full_vector(&self, parity: Parity, n: usize) -> Vec<f64> {
        let s = self.sector(parity);
        let offset = match parity {
            Parity::Even => 0,
            Parity::Odd => 1,
        };
        let mut v = vec![0.0; self.params.dim()];
        for (i, &x) in s.vectors.column(n).iter().enumerate() {
            v[offset + 2 * i] = x;
        }
        v
    }

    /// Overlaps `c = ⟨E_{n,±}|ψ⟩`.
    pub fn project(&self, psi: &StateVector) -> Result<SectorVec> {
        self.check_state(psi)?;
        let s = psi.sectors();
        Ok(SectorVec {
            plus: real_matvec(&self.even.vectors, &s.plus, true),
            minus: real_matvec(&self.odd.vectors, &s.minus, true),
        })
    }

    /// `ψ = Σ c |E⟩`.
    pub fn reconstruct(&self, coeffs: &SectorVec) -> Result<StateVector> {
        let (dp, dm) = self.dims();
        if coeffs.plus.len() != dp || coeffs.minus.len() != dm {
            return Err(Error::DimensionMismatch {
                expected: dp + dm,
                found: coeffs.plus.len() + coeffs.minus.len(),
            });
        }
        let sectors = SectorVec {
            plus: real_matvec(&self.even.vectors, &coeffs.plus, false),
            minus: real_matvec(&self.odd.vectors, &coeffs.minus, false),
        };
        StateVector::from_sectors(self.params.two_j, &sectors)
    }

    /// Multiply each coefficient by `exp(-i E t)`.
    pub fn propagate_coefficients(&self, coeffs: &SectorVec, t: f64) -> SectorVec {
        let phase = |c: &Complex64, e: f64| c * Complex64::from_polar(1.0, -e * t);
        SectorVec {
            plus: coeffs
                .plus
                .iter()
                .zip(&self.even.energies)
                .map(|(c, &e)| phase(c, e))
                .collect(),
            minus: coeffs
                .minus
                .iter()
                .zip(&self.odd.energies)
                .map(|(c, &e)| phase(c, e))
                .collect(),
        }
    }

    /// Express a magnetic-basis operator in this eigenbasis.
    pub fn to_energy_basis(&self, op: &BlockOp) -> Result<BlockOp> {
        let (dp, dm) = op.dims();
        if (dp, dm) != self.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.params.dim(),
                found: dp + dm,
            });
        }
        Ok(op.transform(&self.even.vectors, &self.odd.vectors))
    }

    pub(crate) fn check_state(&self, psi: &StateVector) -> Result<()> {
        if psi.two_j() != self.params.two_j {
            return Err(Error::DimensionMismatch {
                expected: self.params.dim(),
                found: psi.amplitudes().len(),
            });
        }
        Ok(())
    }
}

/// Cartesian component of the collective spin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Dense Hermitian matrix of `J_x`, `J_y` or `J_z` in the magnetic ordering.
pub fn collective_operator(two_j: u32, which: Axis) -> Result<DMatrix<Complex64>> {
    if two_j == 0 {
        return Err(invalid("two_j", "must be at least 1"));
    }
    let dim = two_j as usize + 1;
    let j = f64::from(two_j) / 2.0;
    let mut out = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
    for k in 0..dim {
        match which {
            Axis::Z => out[(k, k)] = Complex64::new(k as f64 - j, 0.0),
            Axis::X | Axis::Y => {
                if k + 1 < dim {
                    let a = ladder(two_j, k) / 2.0;
                    // ⟨k+1|J|k⟩ and its conjugate.
                    let up = match which {
                        Axis::X => Complex64::new(a, 0.0),
                        _ => Complex64::new(0.0, -a),
                    };
                    out[(k + 1, k)] = up;
                    out[(k, k + 1)] = up.conj();
                }
            }
        }
    }
    Ok(out)
}

/// Sign acquired by the (odd `k`, even `k'`) entry under the quarter turn
/// `exp(-iπJz/2)` about `z`, after factoring out `-i`.
pub(crate) fn quarter_turn_sign(k_row: usize, k_col: usize) -> f64 {
    let d = k_row as i64 - k_col as i64;
    if ((d - 1) / 2).rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Collective spin component as a parity-resolved operator.
pub fn collective_blockop(two_j: u32, which: Axis) -> Result<BlockOp> {
    if two_j == 0 {
        return Err(invalid("two_j", "must be at least 1"));
    }
    let dim = two_j as usize + 1;
    let (dp, dm) = (dim.div_ceil(2), dim / 2);
    let j = f64::from(two_j) / 2.0;
    Ok(match which {
        Axis::Z => BlockOp::Even {
            plus: DMatrix::from_diagonal(&nalgebra::DVector::from_fn(dp, |i, _| {
                (2 * i) as f64 - j
            })),
            minus: DMatrix::from_diagonal(&nalgebra::DVector::from_fn(dm, |i, _| {
                (2 * i + 1) as f64 - j
            })),
        },
        Axis::X | Axis::Y => {
            let mut block = DMatrix::zeros(dm, dp);
            for r in 0..dm {
                let k = 2 * r + 1;
                for kc in [k - 1, k + 1] {
                    if kc < dim {
                        let a = ladder(two_j, k.min(kc)) / 2.0;
                        let s = if which == Axis::Y {
                            quarter_turn_sign(k, kc)
                        } else {
                            1.0
                        };
                        block[(r, kc / 2)] = s * a;
                    }
                }
            }
            let scale = if which == Axis::Y {
                Complex64::new(0.0, -1.0)
            } else {
                Complex64::new(1.0, 0.0)
            };
            BlockOp::Odd { scale, block }
        }
    })
}

/// One row of the level-flow table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumRow {
    pub xi: f64,
    pub n: usize,
    pub parity: Parity,
    pub energy: f64,
    pub eps: f64,
}

/// Eigenvalues over a grid of `ξ` at fixed `α` and size.
///
/// Rows come out in grid order, each grid point's levels by parity (even
/// first) and then ascending energy.
pub fn spectrum_flow(two_j: u32, alpha: f64, xi_grid: &[f64]) -> Result<Vec<SpectrumRow>> {
    let per_point: Vec<Result<Vec<SpectrumRow>>> = xi_grid
        .par_iter()
        .map(|&xi| {
            let wrap = |e: Error| Error::AtGridPoint {
                xi,
                source: Box::new(e),
            };
            let params = ModelParams::new(xi, alpha, two_j).map_err(wrap)?;
            let (even, odd) = build_blocks(&params).map_err(wrap)?;
            let mut rows = Vec::with_capacity(params.dim());
            for block in [even, odd] {
                let res = eigh_tridiagonal(&block.diag, &block.offdiag, false).map_err(wrap)?;
                rows.extend(res.values.into_iter().enumerate().map(|(n, energy)| SpectrumRow {
                    xi,
                    n,
                    parity: block.parity,
                    energy,
                    eps: energy / params.particles(),
                }));
            }
            Ok(rows)
        })
        .collect();
    let mut out = Vec::new();
    for rows in per_point {
        out.extend(rows?);
    }
    Ok(out)
}

/// Ground-state scaled energy along a spectrum-flow table, one entry per
/// grid point.
pub fn ground_curve(rows: &[SpectrumRow]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for r in rows {
        match out.last_mut() {
            Some((xi, e)) if *xi == r.xi => *e = e.min(r.eps),
            _ => out.push((r.xi, r.eps)),
        }
    }
    out
}

/// Location of the largest negative curvature of the ground-state energy,
/// from second finite differences on a uniform grid.
pub fn curvature_peak(curve: &[(f64, f64)]) -> Option<f64> {
    if curve.len() < 3 {
        return None;
    }
    let h = curve[1].0 - curve[0].0;
    (1..curve.len() - 1)
        .map(|i| {
            let d2 = (curve[i + 1].1 - 2.0 * curve[i].1 + curve[i - 1].1) / (h * h);
            (curve[i].0, -d2)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(xi, _)| xi)
}
