//! Extended generalized microcanonical ensemble.
//!
//! The density matrix is a sum of `2 × 2` blocks, one per parity doublet
//! whose mean energy lies in the window `[⟨ε⟩ − Δε, ⟨ε⟩ + Δε]`:
//!
//! ```text
//! ρ = (1 / 2N) Σ_doublets [ (1 + p) |+⟩⟨+| + (1 − p) |−⟩⟨−| + (ρ₊₋ |+⟩⟨−| + h.c.) ]
//! ```
//!
//! Phase-I doublets carry the `(c_x, k_x)` coherence along the phase of
//! `⟨E−|Cx|E+⟩`, phase-III doublets carry `(c_y, k_y)` along `⟨E−|Cy|E+⟩`,
//! and phase-II blocks are diagonal.

use num_complex::Complex64;
use serde::Serialize;

use crate::charges::{ChargeSet, DoubletTable};
use crate::classical::{CriticalEnergies, Phase};
use crate::error::{invalid, Error, Result};
use crate::operator::{real_matvec, BlockOp, Parity, SectorVec};
use crate::protocol::ldos;
use crate::spinmodel::EigenSystem;

/// One doublet of the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GmeBlock {
    pub index_plus: usize,
    pub index_minus: usize,
    pub eps_mean: f64,
    pub phase: Phase,
    /// `⟨E+|ρ|E−⟩` times `2N`.
    pub coherence: Complex64,
}

/// Expectations of the projected charges in the quenched state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TildeCharges {
    pub c_x: f64,
    pub k_x: f64,
    pub c_y: f64,
    pub k_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GmeEnsemble {
    pub mean_eps: f64,
    pub sigma_eps: f64,
    pub delta_eps: f64,
    pub window: (f64, f64),
    pub n_i: usize,
    pub n_ii: usize,
    pub n_iii: usize,
    /// `Σ |⟨E−|Cx|E+⟩|` over the phase-I doublets in the window (equals
    /// `n_i` when the charge elements have unit modulus).
    pub weight_i: f64,
    /// `Σ |⟨E−|Cy|E+⟩|` over the phase-III doublets in the window.
    pub weight_iii: f64,
    pub p: f64,
    pub c_x: f64,
    pub k_x: f64,
    pub c_y: f64,
    pub k_y: f64,
    /// The measured projected charges the parameters were solved from.
    pub measured: TildeCharges,
    /// A projected charge was nonzero although no doublet of its phase lies
    /// in the window; its value is not represented by the ensemble.
    pub inconsistent: bool,
    /// `p² + c² + k² ≤ 1` for every block.
    pub physical: bool,
    pub blocks: Vec<GmeBlock>,
    dims: (usize, usize),
}

impl GmeEnsemble {
    pub fn total(&self) -> usize {
        self.blocks.len()
    }

    pub fn trace(&self) -> f64 {
        // Each block contributes (1 + p) + (1 − p) over 2N.
        if self.blocks.is_empty() {
            0.0
        } else {
            self.blocks.len() as f64 * 2.0 / (2.0 * self.total() as f64)
        }
    }
}

/// `⟨ψ̃|O|ψ̃⟩` where `ψ̃` keeps only the levels selected by `keep`.
fn projected_expectation(
    overlaps: &SectorVec,
    eig: &EigenSystem,
    op_magnetic: &BlockOp,
    keep: impl Fn(f64) -> bool,
) -> Result<f64> {
    let mask = |parity: Parity| -> Vec<Complex64> {
        overlaps
            .sector(parity)
            .iter()
            .zip(&eig.sector(parity).energies)
            .map(|(c, &e)| {
                if keep(eig.scaled(e)) {
                    *c
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect()
    };
    let coeffs = SectorVec {
        plus: mask(Parity::Even),
        minus: mask(Parity::Odd),
    };
    let psi = SectorVec {
        plus: real_matvec(&eig.even.vectors, &coeffs.plus, false),
        minus: real_matvec(&eig.odd.vectors, &coeffs.minus, false),
    };
    op_magnetic.expectation(&psi)
}

/// `⟨E−_m|O|E+_n⟩` for a magnetic-basis odd operator.
fn cross_element(op_magnetic: &BlockOp, eig: &EigenSystem, n: usize, m: usize) -> Complex64 {
    match op_magnetic {
        BlockOp::Even { .. } => Complex64::new(0.0, 0.0),
        BlockOp::Odd { scale, block } => {
            let w = block * eig.even.vectors.column(n);
            scale * eig.odd.vectors.column(m).dot(&w)
        }
    }
}

/// Projected charges `⟨C̃x⟩, ⟨K̃x⟩` (levels below `ε_c1`) and `⟨C̃y⟩, ⟨K̃y⟩`
/// (levels above `ε_c2`) of the state with final-basis `overlaps`.
pub fn tilde_charges(
    overlaps: &SectorVec,
    eig: &EigenSystem,
    charges: &ChargeSet,
    crit: &CriticalEnergies,
) -> Result<TildeCharges> {
    let below = |e: f64| e < crit.eps_c1;
    let above = |e: f64| e > crit.eps_c2;
    Ok(TildeCharges {
        c_x: projected_expectation(overlaps, eig, &charges.c_x, below)?,
        k_x: projected_expectation(overlaps, eig, &charges.k_x, below)?,
        c_y: projected_expectation(overlaps, eig, &charges.c_y, above)?,
        k_y: projected_expectation(overlaps, eig, &charges.k_y, above)?,
    })
}

/// Build the ensemble for a quenched state.
///
/// `width_sigmas` sets `Δε = width_sigmas · σ_ε`; `charges` are in the
/// magnetic basis and `table` is the doublet pairing of `eig`.
pub fn build_gme(
    overlaps: &SectorVec,
    eig: &EigenSystem,
    charges: &ChargeSet,
    table: &DoubletTable,
    crit: &CriticalEnergies,
    width_sigmas: f64,
) -> Result<GmeEnsemble> {
    if !(width_sigmas >= 0.0 && width_sigmas.is_finite()) {
        return Err(invalid("width_sigmas", "must be nonnegative"));
    }
    if !crit.regime_flag {
        return Err(invalid(
            "params",
            "final Hamiltonian is outside the three-phase regime",
        ));
    }
    let l = ldos(overlaps, eig, crit)?;
    let delta_eps = width_sigmas * l.sigma_eps;
    let (lo, hi) = (l.mean_eps - delta_eps, l.mean_eps + delta_eps);
    let rows: Vec<_> = table
        .rows
        .iter()
        .filter(|r| r.eps_mean >= lo && r.eps_mean <= hi)
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptyWindow { lo, hi });
    }

    let p = overlaps.parity_expectation();
    let measured = tilde_charges(overlaps, eig, charges, crit)?;

    let mut blocks = Vec::with_capacity(rows.len());
    let mut directions = Vec::with_capacity(rows.len());
    let (mut n_i, mut n_ii, mut n_iii) = (0, 0, 0);
    let (mut weight_i, mut weight_iii) = (0.0, 0.0);
    for r in &rows {
        let phase = r.phase.expect("regime checked above");
        let a = match phase {
            Phase::I => cross_element(&charges.c_x, eig, r.index_plus, r.index_minus),
            Phase::III => cross_element(&charges.c_y, eig, r.index_plus, r.index_minus),
            Phase::II => Complex64::new(0.0, 0.0),
        };
        match phase {
            Phase::I => {
                n_i += 1;
                weight_i += a.norm();
            }
            Phase::II => n_ii += 1,
            Phase::III => {
                n_iii += 1;
                weight_iii += a.norm();
            }
        }
        let dir = if a.norm() > 0.0 {
            a.conj() / a.norm()
        } else {
            Complex64::new(0.0, 0.0)
        };
        directions.push(dir);
        blocks.push(GmeBlock {
            index_plus: r.index_plus,
            index_minus: r.index_minus,
            eps_mean: r.eps_mean,
            phase,
            coherence: Complex64::new(0.0, 0.0),
        });
    }
    let total = blocks.len() as f64;
    let solve = |measured: f64, weight: f64| {
        if weight > 0.0 {
            measured * total / weight
        } else {
            0.0
        }
    };
    let (c_x, k_x) = (solve(measured.c_x, weight_i), solve(measured.k_x, weight_i));
    let (c_y, k_y) = (solve(measured.c_y, weight_iii), solve(measured.k_y, weight_iii));
    let tol = 1e-8;
    let inconsistent = (n_i == 0 && (measured.c_x.abs() > tol || measured.k_x.abs() > tol))
        || (n_iii == 0 && (measured.c_y.abs() > tol || measured.k_y.abs() > tol));

    let mut physical = true;
    for (b, dir) in blocks.iter_mut().zip(&directions) {
        let (c, k) = match b.phase {
            Phase::I => (c_x, k_x),
            Phase::III => (c_y, k_y),
            Phase::II => (0.0, 0.0),
        };
        b.coherence = Complex64::new(c, -k) * dir;
        physical &= p * p + c * c + k * k <= 1.0 + 1e-12;
    }

    Ok(GmeEnsemble {
        mean_eps: l.mean_eps,
        sigma_eps: l.sigma_eps,
        delta_eps,
        window: (lo, hi),
        n_i,
        n_ii,
        n_iii,
        weight_i,
        weight_iii,
        p,
        c_x,
        k_x,
        c_y,
        k_y,
        measured,
        inconsistent,
        physical,
        blocks,
        dims: eig.dims(),
    })
}

/// `Tr[ρ O]` for an operator in the magnetic basis.
pub fn gme_expectation(ens: &GmeEnsemble, eig: &EigenSystem, op_magnetic: &BlockOp) -> Result<f64> {
    if op_magnetic.dims() != ens.dims || eig.dims() != ens.dims {
        return Err(Error::DimensionMismatch {
            expected: ens.dims.0 + ens.dims.1,
            found: op_magnetic.dims().0 + op_magnetic.dims().1,
        });
    }
    let norm = 1.0 / (2.0 * ens.total() as f64);
    let mut acc = 0.0;
    match op_magnetic {
        BlockOp::Even { plus, minus } => {
            for b in &ens.blocks {
                let vp = eig.even.vectors.column(b.index_plus);
                let vm = eig.odd.vectors.column(b.index_minus);
                let dp = vp.dot(&(plus * vp));
                let dm = vm.dot(&(minus * vm));
                acc += (1.0 + ens.p) * dp + (1.0 - ens.p) * dm;
            }
        }
        BlockOp::Odd { .. } => {
            for b in &ens.blocks {
                if b.coherence.norm() == 0.0 {
                    continue;
                }
                let x = cross_element(op_magnetic, eig, b.index_plus, b.index_minus);
                acc += 2.0 * (b.coherence * x).re;
            }
        }
    }
    Ok(norm * acc)
}

/// `Tr[ρ O]` for an operator already in the eigenbasis of the final
/// Hamiltonian.
pub fn gme_expectation_energy_basis(ens: &GmeEnsemble, op: &BlockOp) -> Result<f64> {
    if op.dims() != ens.dims {
        return Err(Error::DimensionMismatch {
            expected: ens.dims.0 + ens.dims.1,
            found: op.dims().0 + op.dims().1,
        });
    }
    let norm = 1.0 / (2.0 * ens.total() as f64);
    let acc: f64 = ens
        .blocks
        .iter()
        .map(|b| {
            (1.0 + ens.p) * op.diagonal_element(Parity::Even, b.index_plus)
                + (1.0 - ens.p) * op.diagonal_element(Parity::Odd, b.index_minus)
                + 2.0 * (b.coherence * op.cross_element(b.index_minus, b.index_plus)).re
        })
        .sum();
    Ok(norm * acc)
}
