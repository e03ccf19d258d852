//! Parity, the sign-operator charges `Cx = sign(Jx)`, `Cy = sign(Jy)`, the
//! commutator charges `K = iCΠ`, their energy-window projections and the
//! doublet analysis.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::classical::{classify_phase, CriticalEnergies, Phase};
use crate::error::{invalid, Error, Result};
use crate::operator::{BlockOp, Parity};
use crate::spinmodel::{collective_blockop, quarter_turn_sign, Axis, EigenSystem};
use crate::tridiag::eigh_tridiagonal;

/// Diagonal `(-1)^(j+m)` over the magnetic sublevels.
pub fn parity_matrix(two_j: u32) -> Result<DMatrix<f64>> {
    if two_j == 0 {
        return Err(invalid("two_j", "must be at least 1"));
    }
    let dim = two_j as usize + 1;
    Ok(DMatrix::from_diagonal(&DVector::from_fn(dim, |k, _| {
        Parity::of_level(k).sign()
    })))
}

/// `sign(Jx)` or `sign(Jy)` as a parity-odd operator; the kernel of `J` (one
/// vector at integer `j`) is mapped to zero.
pub fn sign_operator(which: Axis, two_j: u32) -> Result<BlockOp> {
    let b = match collective_blockop(two_j, Axis::X)? {
        BlockOp::Odd { block, .. } => block,
        BlockOp::Even { .. } => unreachable!("Jx is parity odd"),
    };
    // Polar factor: with Jx = [[0, Bᵀ], [B, 0]] (even, odd ordering),
    // sign(Jx) has odd-even block (BBᵀ)^(-1/2) B. BBᵀ is tridiagonal and
    // its eigenvalues are the squared nonzero eigenvalues of Jx.
    let dm = b.nrows();
    let g = &b * b.transpose();
    let diag: Vec<f64> = (0..dm).map(|i| g[(i, i)]).collect();
    let off: Vec<f64> = (0..dm.saturating_sub(1)).map(|i| g[(i, i + 1)]).collect();
    let eig = eigh_tridiagonal(&diag, &off, true)?;
    let w = eig.vectors.expect("vectors requested");
    let mut wtb = w.tr_mul(&b);
    for (mut row, &lam) in wtb.row_iter_mut().zip(&eig.values) {
        row /= lam.sqrt();
    }
    let block = w * wtb;
    match which {
        Axis::X => Ok(BlockOp::Odd {
            scale: Complex64::new(1.0, 0.0),
            block,
        }),
        Axis::Y => Ok(quarter_turn(&block)),
        Axis::Z => Err(invalid("which", "charges exist for x and y only")),
    }
}

/// `R O R†` with `R = exp(-iπJz/2)` for a real odd-even block with unit scale.
fn quarter_turn(block: &DMatrix<f64>) -> BlockOp {
    let mut b = block.clone();
    for r in 0..b.nrows() {
        for c in 0..b.ncols() {
            b[(r, c)] *= quarter_turn_sign(2 * r + 1, 2 * c);
        }
    }
    BlockOp::Odd {
        scale: Complex64::new(0.0, -1.0),
        block: b,
    }
}

/// Dense `(i/2)(CΠ − ΠC)`.
pub fn k_operator(c: &DMatrix<Complex64>, pi: &DMatrix<f64>) -> Result<DMatrix<Complex64>> {
    if c.shape() != pi.shape() || c.nrows() != c.ncols() {
        return Err(Error::DimensionMismatch {
            expected: pi.nrows(),
            found: c.nrows(),
        });
    }
    let pic = pi.map(Complex64::from);
    let k = (c * &pic - &pic * c) * Complex64::new(0.0, 0.5);
    let residual = (k.adjoint() - &k).camax();
    if residual > 1e-10 {
        return Err(Error::NotHermitian { residual });
    }
    Ok(k)
}

/// `K = iCΠ` for a parity-odd `C`.
pub fn k_blockop(c: &BlockOp) -> Result<BlockOp> {
    match c {
        BlockOp::Odd { scale, block } => Ok(BlockOp::Odd {
            scale: Complex64::new(0.0, 1.0) * scale,
            block: block.clone(),
        }),
        BlockOp::Even { .. } => Err(invalid("c", "charge must anticommute with parity")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Charge {
    Cx,
    Cy,
    Kx,
    Ky,
}

impl Charge {
    pub const ALL: [Charge; 4] = [Charge::Cx, Charge::Cy, Charge::Kx, Charge::Ky];
}

/// `Π`, `Cx`, `Cy`, `Kx`, `Ky` in the magnetic basis.
#[derive(Debug, Clone)]
pub struct ChargeSet {
    pub two_j: u32,
    pub pi: BlockOp,
    pub c_x: BlockOp,
    pub c_y: BlockOp,
    pub k_x: BlockOp,
    pub k_y: BlockOp,
}

impl ChargeSet {
    pub fn new(two_j: u32) -> Result<Self> {
        let c_x = sign_operator(Axis::X, two_j)?;
        let c_y = match &c_x {
            BlockOp::Odd { block, .. } => quarter_turn(block),
            BlockOp::Even { .. } => unreachable!("sign(Jx) is parity odd"),
        };
        let (dp, dm) = c_x.dims();
        Ok(Self {
            two_j,
            pi: BlockOp::parity(dp, dm),
            k_x: k_blockop(&c_x)?,
            k_y: k_blockop(&c_y)?,
            c_x,
            c_y,
        })
    }

    pub fn get(&self, which: Charge) -> &BlockOp {
        match which {
            Charge::Cx => &self.c_x,
            Charge::Cy => &self.c_y,
            Charge::Kx => &self.k_x,
            Charge::Ky => &self.k_y,
        }
    }

    /// All charges expressed in the eigenbasis of `eig`.
    pub fn in_energy_basis(&self, eig: &EigenSystem) -> Result<ChargeSet> {
        Ok(ChargeSet {
            two_j: self.two_j,
            pi: self.pi.clone(),
            c_x: eig.to_energy_basis(&self.c_x)?,
            c_y: eig.to_energy_basis(&self.c_y)?,
            k_x: eig.to_energy_basis(&self.k_x)?,
            k_y: eig.to_energy_basis(&self.k_y)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WindowSide {
    BelowC1,
    AboveC2,
}

/// Projected operator and whether the window held no levels.
#[derive(Debug, Clone)]
pub struct Projected {
    pub op: BlockOp,
    pub empty: bool,
}

/// `𝕀 O 𝕀` with `𝕀` the projector on levels below `ε_c1` or above `ε_c2`.
/// `op` must be in the eigenbasis of `eig`.
pub fn project_tilde(
    op: &BlockOp,
    eig: &EigenSystem,
    crit: &CriticalEnergies,
    side: WindowSide,
) -> Result<Projected> {
    let cutoff = match side {
        WindowSide::BelowC1 => crit.eps_c1,
        WindowSide::AboveC2 => crit.eps_c2,
    };
    project_tilde_at(op, eig, side, cutoff)
}

/// [`project_tilde`] with an explicit scaled-energy cutoff.
pub fn project_tilde_at(
    op: &BlockOp,
    eig: &EigenSystem,
    side: WindowSide,
    cutoff: f64,
) -> Result<Projected> {
    if op.dims() != eig.dims() {
        return Err(Error::DimensionMismatch {
            expected: eig.params.dim(),
            found: op.dims().0 + op.dims().1,
        });
    }
    let keep = |parity: Parity| -> Vec<bool> {
        eig.scaled_energies(parity)
            .iter()
            .map(|&e| match side {
                WindowSide::BelowC1 => e < cutoff,
                WindowSide::AboveC2 => e > cutoff,
            })
            .collect()
    };
    let (kp, km) = (keep(Parity::Even), keep(Parity::Odd));
    let empty = !kp.iter().chain(&km).any(|&k| k);
    Ok(Projected {
        op: op.masked(&kp, &km),
        empty,
    })
}

/// One opposite-parity pair of levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoubletRow {
    pub index_plus: usize,
    pub index_minus: usize,
    pub e_plus: f64,
    pub e_minus: f64,
    pub gap: f64,
    pub eps_mean: f64,
    /// `None` outside the three-phase regime.
    pub phase: Option<Phase>,
    /// Mean energy lies within five local spacings of a critical energy.
    pub ambiguous: bool,
    pub abs_cx: f64,
    pub abs_cy: f64,
    pub abs_kx: f64,
    pub abs_ky: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DoubletTable {
    pub rows: Vec<DoubletRow>,
    pub unpaired_plus: Vec<usize>,
    pub unpaired_minus: Vec<usize>,
}

/// Injective pairing of two ascending energy lists.
///
/// Candidate pairs between each `plus` level and the few `minus` levels
/// around it are accepted in order of increasing gap, so that degenerate
/// doublets claim each other before any neighbour can. Any `plus` level left
/// over then takes the nearest unused `minus` level, in ascending order.
/// Returns `(plus, minus)` index pairs sorted by `plus`, and the leftovers.
pub fn pair_levels(plus: &[f64], minus: &[f64]) -> (Vec<(usize, usize)>, Vec<usize>, Vec<usize>) {
    const REACH: usize = 2;
    let mut edges = Vec::new();
    for (n, &e) in plus.iter().enumerate() {
        let pos = minus.partition_point(|&x| x < e);
        for m in pos.saturating_sub(REACH)..(pos + REACH).min(minus.len()) {
            edges.push(((e - minus[m]).abs(), n, m));
        }
    }
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut partner: Vec<Option<usize>> = vec![None; plus.len()];
    let mut unused: BTreeSet<usize> = (0..minus.len()).collect();
    for (_, n, m) in edges {
        if partner[n].is_none() && unused.contains(&m) {
            partner[n] = Some(m);
            unused.remove(&m);
        }
    }
    let mut lone_plus = Vec::new();
    for (n, &e) in plus.iter().enumerate() {
        if partner[n].is_some() {
            continue;
        }
        let pos = minus.partition_point(|&x| x < e);
        let below = unused.range(..pos).next_back().copied();
        let above = unused.range(pos..).next().copied();
        let best = match (below, above) {
            (Some(b), Some(a)) => {
                if (e - minus[b]).abs() <= (minus[a] - e).abs() {
                    Some(b)
                } else {
                    Some(a)
                }
            }
            (b, a) => b.or(a),
        };
        match best {
            Some(m) => {
                unused.remove(&m);
                partner[n] = Some(m);
            }
            None => lone_plus.push(n),
        }
    }
    let pairs = partner
        .iter()
        .enumerate()
        .filter_map(|(n, m)| m.map(|m| (n, m)))
        .collect();
    (pairs, lone_plus, unused.into_iter().collect())
}

/// Pair levels into doublets and label them; charge columns are NaN until
/// [`doublet_matrix_elements`] fills them.
pub fn doublet_pairing(eig: &EigenSystem, crit: &CriticalEnergies) -> Result<DoubletTable> {
    if eig.even.dim() == 0 {
        return Err(Error::MissingSector("even"));
    }
    if eig.odd.dim() == 0 {
        return Err(Error::MissingSector("odd"));
    }
    let (pairs, unpaired_plus, unpaired_minus) =
        pair_levels(&eig.even.energies, &eig.odd.energies);
    let mut rows: Vec<DoubletRow> = pairs
        .into_iter()
        .map(|(n, m)| {
            let (ep, em) = (eig.even.energies[n], eig.odd.energies[m]);
            let eps_mean = eig.scaled(0.5 * (ep + em));
            DoubletRow {
                index_plus: n,
                index_minus: m,
                e_plus: ep,
                e_minus: em,
                gap: (ep - em).abs(),
                eps_mean,
                phase: crit.regime_flag.then(|| classify_phase(eps_mean, crit)),
                ambiguous: false,
                abs_cx: f64::NAN,
                abs_cy: f64::NAN,
                abs_kx: f64::NAN,
                abs_ky: f64::NAN,
            }
        })
        .collect();
    let eps: Vec<f64> = rows.iter().map(|r| r.eps_mean).collect();
    let k = eps.len();
    for (i, row) in rows.iter_mut().enumerate() {
        let spacing = if k < 2 {
            f64::INFINITY
        } else if i == 0 {
            eps[1] - eps[0]
        } else if i == k - 1 {
            eps[k - 1] - eps[k - 2]
        } else {
            0.5 * (eps[i + 1] - eps[i - 1])
        };
        let near = |c: f64| (row.eps_mean - c).abs() < 5.0 * spacing.abs();
        row.ambiguous = near(crit.eps_c1) || near(crit.eps_c2);
    }
    Ok(DoubletTable {
        rows,
        unpaired_plus,
        unpaired_minus,
    })
}

/// `⟨E_{m,−}|O|E_{n,+}⟩` for every row, with `op` in the magnetic basis.
pub fn doublet_cross_elements(
    op: &BlockOp,
    eig: &EigenSystem,
    table: &DoubletTable,
) -> Result<Vec<Complex64>> {
    if op.dims() != eig.dims() {
        return Err(Error::DimensionMismatch {
            expected: eig.params.dim(),
            found: op.dims().0 + op.dims().1,
        });
    }
    match op {
        BlockOp::Even { .. } => Ok(vec![Complex64::new(0.0, 0.0); table.rows.len()]),
        BlockOp::Odd { scale, block } => {
            let bv = block * &eig.even.vectors;
            Ok(table
                .rows
                .iter()
                .map(|r| {
                    scale * eig.odd.vectors.column(r.index_minus).dot(&bv.column(r.index_plus))
                })
                .collect())
        }
    }
}

/// Fill the `|⟨E−|O|E+⟩|` columns for the four charges.
pub fn doublet_matrix_elements(
    table: &mut DoubletTable,
    charges: &ChargeSet,
    eig: &EigenSystem,
) -> Result<()> {
    let cx = doublet_cross_elements(&charges.c_x, eig, table)?;
    let cy = doublet_cross_elements(&charges.c_y, eig, table)?;
    let kx = doublet_cross_elements(&charges.k_x, eig, table)?;
    let ky = doublet_cross_elements(&charges.k_y, eig, table)?;
    for (i, row) in table.rows.iter_mut().enumerate() {
        row.abs_cx = cx[i].norm();
        row.abs_cy = cy[i].norm();
        row.abs_kx = kx[i].norm();
        row.abs_ky = ky[i].norm();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::critical_energies;
    use crate::spinmodel::{collective_operator, dense_hamiltonian, ModelParams};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Spectral sign function through a dense Hermitian eigendecomposition.
    fn dense_sign(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let eig = m.clone().symmetric_eigen();
        let d = eig.eigenvalues.map(|x| {
            if x.abs() < 1e-9 {
                c(0.0, 0.0)
            } else {
                c(x.signum(), 0.0)
            }
        });
        &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.adjoint()
    }

    #[test]
    fn parity_examples() {
        assert_eq!(
            parity_matrix(2).unwrap().diagonal().as_slice(),
            &[1.0, -1.0, 1.0]
        );
        assert_eq!(parity_matrix(1).unwrap().diagonal().as_slice(), &[1.0, -1.0]);
        let pi = parity_matrix(8).unwrap();
        assert_eq!(&pi * &pi, DMatrix::identity(9, 9));
        let h = dense_hamiltonian(&ModelParams::new(0.5, -0.6, 8).unwrap()).unwrap();
        assert!((&h * &pi - &pi * &h).amax() < 1e-13);
    }

    #[test]
    fn sign_operators_match_dense_oracle() {
        for two_j in 1..=20 {
            for axis in [Axis::X, Axis::Y] {
                let oracle = dense_sign(&collective_operator(two_j, axis).unwrap());
                let ours = sign_operator(axis, two_j).unwrap().to_dense_magnetic();
                assert!((oracle - ours).camax() < 1e-11, "two_j={two_j} {axis:?}");
            }
        }
    }

    #[test]
    fn rotation_consistency() {
        for two_j in 1..=40 {
            let cs = ChargeSet::new(two_j).unwrap();
            let j = f64::from(two_j) / 2.0;
            let dim = two_j as usize + 1;
            let r = DMatrix::from_diagonal(&DVector::from_fn(dim, |k, _| {
                Complex64::from_polar(1.0, -std::f64::consts::FRAC_PI_2 * (k as f64 - j))
            }));
            let cx = cs.c_x.to_dense_magnetic();
            let cy = cs.c_y.to_dense_magnetic();
            assert!((cy - &r * cx * r.adjoint()).camax() < 1e-11);
        }
    }

    #[test]
    fn small_j_examples() {
        let cx = sign_operator(Axis::X, 2).unwrap().to_dense_magnetic();
        let jx = collective_operator(2, Axis::X).unwrap();
        assert!((&cx - &jx).camax() < 1e-14);
        let ev = cx.symmetric_eigen().eigenvalues;
        let mut ev: Vec<f64> = ev.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] + 1.0).abs() < 1e-12 && ev[1].abs() < 1e-12 && (ev[2] - 1.0).abs() < 1e-12);

        let half = sign_operator(Axis::X, 1).unwrap().to_dense_magnetic();
        let mut ev: Vec<f64> = half.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] + 1.0).abs() < 1e-15 && (ev[1] - 1.0).abs() < 1e-15);

        let cs = ChargeSet::new(2).unwrap();
        let kx = cs.k_x.to_dense_magnetic();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((kx[(0, 1)] - c(0.0, -r)).norm() < 1e-14);
        assert!((kx[(1, 0)] - c(0.0, r)).norm() < 1e-14);
    }

    #[test]
    fn charge_algebra() {
        for two_j in 1..=20 {
            let cs = ChargeSet::new(two_j).unwrap();
            let dim = two_j as usize + 1;
            let pi = parity_matrix(two_j).unwrap();
            let pic = pi.map(Complex64::from);
            let id = DMatrix::<Complex64>::identity(dim, dim);
            let i = c(0.0, 1.0);
            for (cb, kb) in [(&cs.c_x, &cs.k_x), (&cs.c_y, &cs.k_y)] {
                let cm = cb.to_dense_magnetic();
                let km = kb.to_dense_magnetic();
                assert!((&pic * &cm * &pic + &cm).camax() < 1e-12);
                assert!((&km - &cm * &pic * i).camax() < 1e-12);
                assert!((&km - k_operator(&cm, &pi).unwrap()).camax() < 1e-12);
                let c2 = &cm * &cm;
                // C² is the projector off the kernel.
                assert!((&c2 * &c2 - &c2).camax() < 1e-12);
                let rank = c2.trace().re.round() as usize;
                assert_eq!(rank, if two_j % 2 == 0 { dim - 1 } else { dim });
                assert!((&km * &km - &c2).camax() < 1e-12);
                let comm = &cm * &km - &km * &cm;
                assert!((comm - &c2 * &pic * c(0.0, 2.0)).camax() < 1e-12);
                if two_j % 2 == 1 {
                    assert!((&c2 - &id).camax() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn k_operator_rejects_mismatch() {
        let cm = DMatrix::<Complex64>::zeros(3, 3);
        let pi = parity_matrix(1).unwrap();
        assert!(matches!(k_operator(&cm, &pi), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn toy_pairing() {
        let (pairs, lone_plus, lone_minus) = pair_levels(&[0.0, 1.0], &[0.5]);
        assert_eq!(pairs, vec![(0, 0)]);
        assert_eq!(lone_plus, vec![1]);
        assert!(lone_minus.is_empty());
    }

    #[test]
    fn degenerate_pairs_are_not_stolen() {
        // The lone + level at 0.9 would take the − level at 1.0 under a
        // plain ascending sweep, pushing every later doublet off by one.
        let plus = [0.9, 1.0 + 1e-9, 2.0 + 1e-9];
        let minus = [1.0, 2.0];
        let (pairs, lone_plus, _) = pair_levels(&plus, &minus);
        assert_eq!(pairs, vec![(1, 0), (2, 1)]);
        assert_eq!(lone_plus, vec![0]);
    }

    #[test]
    fn pairing_covers_spectrum() {
        for two_j in [9, 10, 60, 61] {
            let eig = EigenSystem::new(ModelParams::new(0.5, -0.6, two_j).unwrap()).unwrap();
            let crit = critical_energies(&eig.params);
            let t = doublet_pairing(&eig, &crit).unwrap();
            assert_eq!(
                2 * t.rows.len() + t.unpaired_plus.len() + t.unpaired_minus.len(),
                two_j as usize + 1
            );
            let mut minus: Vec<usize> = t.rows.iter().map(|r| r.index_minus).collect();
            minus.sort();
            minus.dedup();
            assert_eq!(minus.len(), t.rows.len());
            assert!(t.rows.iter().all(|r| r.gap >= 0.0));
        }
    }

    #[test]
    fn tilde_projection_limits() {
        let params = ModelParams::new(0.5, -0.6, 30).unwrap();
        let eig = EigenSystem::new(params).unwrap();
        let cs = ChargeSet::new(30).unwrap();
        let cx = eig.to_energy_basis(&cs.c_x).unwrap();
        let all = project_tilde_at(&cx, &eig, WindowSide::BelowC1, 1e9).unwrap();
        assert!(!all.empty);
        assert_eq!(all.op, cx);
        let none = project_tilde_at(&cx, &eig, WindowSide::BelowC1, -1e9).unwrap();
        assert!(none.empty);
        assert_eq!(none.op.to_dense_sectors().camax(), 0.0);

        // A state made from levels below ε_c1 sees no difference.
        let crit = critical_energies(&params);
        let low = |p: Parity| -> Vec<Complex64> {
            eig.scaled_energies(p)
                .iter()
                .enumerate()
                .map(|(n, &e)| if e < crit.eps_c1 { c(1.0 / (n + 1) as f64, 0.3) } else { c(0.0, 0.0) })
                .collect()
        };
        let mut psi = crate::operator::SectorVec {
            plus: low(Parity::Even),
            minus: low(Parity::Odd),
        };
        let norm = psi.norm_sqr().sqrt();
        psi.plus.iter_mut().chain(psi.minus.iter_mut()).for_each(|z| *z /= norm);
        let tilde = project_tilde(&cx, &eig, &crit, WindowSide::BelowC1).unwrap();
        let a = tilde.op.expectation(&psi).unwrap();
        let b = cx.expectation(&psi).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn cross_elements_match_energy_basis_transform() {
        let params = ModelParams::new(0.5, -0.6, 40).unwrap();
        let eig = EigenSystem::new(params).unwrap();
        let crit = critical_energies(&params);
        let cs = ChargeSet::new(40).unwrap();
        let mut table = doublet_pairing(&eig, &crit).unwrap();
        doublet_matrix_elements(&mut table, &cs, &eig).unwrap();
        let cy = eig.to_energy_basis(&cs.c_y).unwrap();
        for r in &table.rows {
            let z = cy.cross_element(r.index_minus, r.index_plus);
            assert!((z.norm() - r.abs_cy).abs() < 1e-12);
            assert!((r.abs_cx - r.abs_kx).abs() < 1e-12);
            assert!((r.abs_cy - r.abs_ky).abs() < 1e-12);
        }
    }
}
