//! Parity-resolved operators and state amplitudes.
//!
//! Every operator used in the model either commutes with the parity `Π`
//! (block diagonal in the even/odd sectors) or anticommutes with it (only
//! the odd-even cross block survives). All of them also have real blocks up
//! to one global complex factor, which keeps the storage real.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Eigenvalue of the parity operator `Π = exp(iπ(j + Jz))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Parity::Even => "+1",
            Parity::Odd => "-1",
        }
    }

    /// Parity of the magnetic sublevel with `j + m = k`.
    pub fn of_level(k: usize) -> Self {
        if k.is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

/// Amplitudes split by parity sector.
///
/// In the magnetic basis the entries are ordered by ascending `m` within
/// each sector; in an energy eigenbasis they are ordered by ascending energy.
#[derive(Debug, Clone, PartialEq)]
pub struct SectorVec {
    pub plus: Vec<Complex64>,
    pub minus: Vec<Complex64>,
}

impl SectorVec {
    pub fn zeros(dim_plus: usize, dim_minus: usize) -> Self {
        Self {
            plus: vec![Complex64::new(0.0, 0.0); dim_plus],
            minus: vec![Complex64::new(0.0, 0.0); dim_minus],
        }
    }

    pub fn sector(&self, parity: Parity) -> &[Complex64] {
        match parity {
            Parity::Even => &self.plus,
            Parity::Odd => &self.minus,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.weight(Parity::Even) + self.weight(Parity::Odd)
    }

    /// Squared norm carried by one sector.
    pub fn weight(&self, parity: Parity) -> f64 {
        self.sector(parity).iter().map(|c| c.norm_sqr()).sum()
    }

    /// `⟨Π⟩` of the represented state.
    pub fn parity_expectation(&self) -> f64 {
        self.weight(Parity::Even) - self.weight(Parity::Odd)
    }

    pub fn inner(&self, other: &SectorVec) -> Complex64 {
        dot(&self.plus, &other.plus) + dot(&self.minus, &other.minus)
    }
}

/// `Σ conj(a_i) b_i`.
pub(crate) fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Product of a real matrix (or its transpose) with a complex vector.
pub(crate) fn real_matvec(m: &DMatrix<f64>, x: &[Complex64], transpose: bool) -> Vec<Complex64> {
    let rows = x.len();
    let stacked = DMatrix::from_fn(rows, 2, |i, c| if c == 0 { x[i].re } else { x[i].im });
    let out = if transpose {
        m.tr_mul(&stacked)
    } else {
        m * stacked
    };
    (0..out.nrows())
        .map(|i| Complex64::new(out[(i, 0)], out[(i, 1)]))
        .collect()
}

/// Operator with definite behaviour under parity.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockOp {
    /// Commutes with `Π`; real symmetric blocks on each sector.
    Even {
        plus: DMatrix<f64>,
        minus: DMatrix<f64>,
    },
    /// Anticommutes with `Π`. `scale * block` is the (odd rows, even
    /// columns) block; the (even, odd) block is its adjoint.
    Odd { scale: Complex64, block: DMatrix<f64> },
}

impl BlockOp {
    pub fn parity(dim_plus: usize, dim_minus: usize) -> Self {
        BlockOp::Even {
            plus: DMatrix::identity(dim_plus, dim_plus),
            minus: -DMatrix::identity(dim_minus, dim_minus),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            BlockOp::Even { plus, minus } => (plus.nrows(), minus.nrows()),
            BlockOp::Odd { block, .. } => (block.ncols(), block.nrows()),
        }
    }

    pub fn is_odd(&self) -> bool {
        matches!(self, BlockOp::Odd { .. })
    }

    /// `⟨ψ|O|ψ⟩` for amplitudes given in the same basis as the operator.
    pub fn expectation(&self, psi: &SectorVec) -> Result<f64> {
        self.check_dims(psi)?;
        Ok(match self {
            BlockOp::Even { plus, minus } => {
                let a = real_matvec(plus, &psi.plus, false);
                let b = real_matvec(minus, &psi.minus, false);
                (dot(&psi.plus, &a) + dot(&psi.minus, &b)).re
            }
            BlockOp::Odd { scale, block } => {
                let mv = real_matvec(block, &psi.plus, false);
                2.0 * (scale * dot(&psi.minus, &mv)).re
            }
        })
    }

    /// Apply the operator to a vector.
    pub fn apply(&self, psi: &SectorVec) -> Result<SectorVec> {
        self.check_dims(psi)?;
        Ok(match self {
            BlockOp::Even { plus, minus } => SectorVec {
                plus: real_matvec(plus, &psi.plus, false),
                minus: real_matvec(minus, &psi.minus, false),
            },
            BlockOp::Odd { scale, block } => {
                let minus: Vec<Complex64> = real_matvec(block, &psi.plus, false)
                    .into_iter()
                    .map(|z| scale * z)
                    .collect();
                let plus: Vec<Complex64> = real_matvec(block, &psi.minus, true)
                    .into_iter()
                    .map(|z| scale.conj() * z)
                    .collect();
                SectorVec { plus, minus }
            }
        })
    }

    fn check_dims(&self, psi: &SectorVec) -> Result<()> {
        let (dp, dm) = self.dims();
        if psi.plus.len() != dp {
            return Err(Error::DimensionMismatch {
                expected: dp,
                found: psi.plus.len(),
            });
        }
        if psi.minus.len() != dm {
            return Err(Error::DimensionMismatch {
                expected: dm,
                found: psi.minus.len(),
            });
        }
        Ok(())
    }

    /// Change of basis `V† O V` with real sector bases (columns).
    pub fn transform(&self, v_plus: &DMatrix<f64>, v_minus: &DMatrix<f64>) -> BlockOp {
        match self {
            BlockOp::Even { plus, minus } => BlockOp::Even {
                plus: v_plus.tr_mul(&(plus * v_plus)),
                minus: v_minus.tr_mul(&(minus * v_minus)),
            },
            BlockOp::Odd { scale, block } => BlockOp::Odd {
                scale: *scale,
                block: v_minus.tr_mul(&(block * v_plus)),
            },
        }
    }

    /// Keep only the rows and columns whose sector index is selected.
    pub fn masked(&self, keep_plus: &[bool], keep_minus: &[bool]) -> BlockOp {
        let mask = |m: &DMatrix<f64>, rows: &[bool], cols: &[bool]| {
            DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
                if rows[i] && cols[j] {
                    m[(i, j)]
                } else {
                    0.0
                }
            })
        };
        match self {
            BlockOp::Even { plus, minus } => BlockOp::Even {
                plus: mask(plus, keep_plus, keep_plus),
                minus: mask(minus, keep_minus, keep_minus),
            },
            BlockOp::Odd { scale, block } => BlockOp::Odd {
                scale: *scale,
                block: mask(block, keep_minus, keep_plus),
            },
        }
    }

    /// Cross element `⟨minus_n|O|plus_m⟩` between sector basis vectors.
    pub fn cross_element(&self, minus_n: usize, plus_m: usize) -> Complex64 {
        match self {
            BlockOp::Even { .. } => Complex64::new(0.0, 0.0),
            BlockOp::Odd { scale, block } => scale * block[(minus_n, plus_m)],
        }
    }

    /// Diagonal element on one sector basis vector.
    pub fn diagonal_element(&self, parity: Parity, n: usize) -> f64 {
        match (self, parity) {
            (BlockOp::Even { plus, .. }, Parity::Even) => plus[(n, n)],
            (BlockOp::Even { minus, .. }, Parity::Odd) => minus[(n, n)],
            (BlockOp::Odd { .. }, _) => 0.0,
        }
    }

    /// Dense matrix in the interleaved magnetic ordering `k = j + m`
    /// (even sector at even `k`). Only meaningful for magnetic-basis
    /// operators.
    pub fn to_dense_magnetic(&self) -> DMatrix<Complex64> {
        let (dp, dm) = self.dims();
        let dim = dp + dm;
        let sector = |k: usize| (Parity::of_level(k), k / 2);
        DMatrix::from_fn(dim, dim, |r, c| {
            let (pr, ir) = sector(r);
            let (pc, ic) = sector(c);
            self.entry(pr, ir, pc, ic)
        })
    }

    /// Dense matrix with all even-sector indices first.
    pub fn to_dense_sectors(&self) -> DMatrix<Complex64> {
        let (dp, dm) = self.dims();
        let sector = |k: usize| {
            if k < dp {
                (Parity::Even, k)
            } else {
                (Parity::Odd, k - dp)
            }
        };
        DMatrix::from_fn(dp + dm, dp + dm, |r, c| {
            let (pr, ir) = sector(r);
            let (pc, ic) = sector(c);
            self.entry(pr, ir, pc, ic)
        })
    }

    fn entry(&self, pr: Parity, ir: usize, pc: Parity, ic: usize) -> Complex64 {
        let zero = Complex64::new(0.0, 0.0);
        match (self, pr, pc) {
            (BlockOp::Even { plus, .. }, Parity::Even, Parity::Even) => plus[(ir, ic)].into(),
            (BlockOp::Even { minus, .. }, Parity::Odd, Parity::Odd) => minus[(ir, ic)].into(),
            (BlockOp::Odd { scale, block }, Parity::Odd, Parity::Even) => scale * block[(ir, ic)],
            (BlockOp::Odd { scale, block }, Parity::Even, Parity::Odd) => {
                scale.conj() * block[(ic, ir)]
            }
            _ => zero,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn odd_operator_is_hermitian_and_expectation_matches_dense() {
        let block = DMatrix::from_row_slice(1, 2, &[0.3, -0.7]);
        let op = BlockOp::Odd {
            scale: c(0.0, 1.0),
            block,
        };
        let dense = op.to_dense_magnetic();
        assert!((dense.adjoint() - &dense).camax() < 1e-15);
        let psi = SectorVec {
            plus: vec![c(0.2, 0.1), c(-0.4, 0.3)],
            minus: vec![c(0.5, -0.6)],
        };
        // magnetic order: k=0 even0, k=1 odd0, k=2 even1
        let full = nalgebra::DVector::from_vec(vec![psi.plus[0], psi.minus[0], psi.plus[1]]);
        let direct = (full.adjoint() * &dense * &full)[(0, 0)];
        assert!((op.expectation(&psi).unwrap() - direct.re).abs() < 1e-14);
        assert!(direct.im.abs() < 1e-14);
    }

    #[test]
    fn apply_agrees_with_dense() {
        let op = BlockOp::Odd {
            scale: c(0.6, 0.8),
            block: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
        };
        let psi = SectorVec {
            plus: vec![c(1.0, 0.0), c(0.0, 1.0)],
            minus: vec![c(0.5, 0.5), c(-1.0, 0.2)],
        };
        let out = op.apply(&psi).unwrap();
        let dense = op.to_dense_sectors();
        let v = nalgebra::DVector::from_vec(
            psi.plus.iter().chain(&psi.minus).copied().collect::<Vec<_>>(),
        );
        let w = dense * v;
        let got: Vec<Complex64> = out.plus.iter().chain(&out.minus).copied().collect();
        for (a, b) in got.iter().zip(w.iter()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let op = BlockOp::parity(2, 1);
        let psi = SectorVec::zeros(1, 1);
        assert!(matches!(
            op.expectation(&psi),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn parity_expectation() {
        let psi = SectorVec {
            plus: vec![c(0.6, 0.0)],
            minus: vec![c(0.0, 0.8)],
        };
        let pi = BlockOp::parity(1, 1);
        assert!((pi.expectation(&psi).unwrap() - (0.36 - 0.64)).abs() < 1e-15);
        assert!((psi.parity_expectation() - (0.36 - 0.64)).abs() < 1e-15);
    }
}
