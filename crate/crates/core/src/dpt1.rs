//! Long-time averages after the second quench and `τ_int` scans.
//!
//! Averages are evaluated in the eigenbasis of the final Hamiltonian. For a
//! uniform grid `{0, dt, …, M dt}` the trapezoidal mean of
//! `⟨O(t)⟩ = Σ c_a* c_b O_ab e^{i(E_a − E_b)t}` is exact through the kernel
//!
//! ```text
//! W(ω) = (1/M) [ Σ_{k=0}^{M} e^{iωk dt} − (1 + e^{iωM dt}) / 2 ]
//! ```
//!
//! so no time stepping is needed.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::charges::{doublet_pairing, ChargeSet, DoubletTable};
use crate::classical::{critical_energies, CriticalEnergies};
use crate::error::{invalid, Error, Result};
use crate::gme::{build_gme, gme_expectation_energy_basis};
use crate::operator::{BlockOp, SectorVec};
use crate::protocol::{ldos, Protocol};
use crate::spinmodel::{collective_blockop, Axis, EigenSystem};

/// Samples on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeries {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn uniform(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", "must be positive"));
        }
        Ok(Self { t0, dt, values })
    }

    /// Build from explicit sample times, which must be uniform to `1e-12`
    /// relative to the span.
    pub fn from_samples(times: &[f64], values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                found: values.len(),
            });
        }
        if times.len() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: times.len(),
            });
        }
        let n = times.len() - 1;
        let (t0, t1) = (times[0], times[n]);
        let dt = (t1 - t0) / n as f64;
        if !(dt > 0.0) {
            return Err(Error::NonUniformGrid);
        }
        let tol = 1e-12 * t1.abs().max(t0.abs()).max(1.0);
        for (i, &t) in times.iter().enumerate() {
            if (t - (t0 + i as f64 * dt)).abs() > tol {
                return Err(Error::NonUniformGrid);
            }
        }
        Ok(Self { t0, dt, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.values.len())
            .map(|i| self.t0 + i as f64 * self.dt)
            .collect()
    }
}

/// Trapezoidal mean over the span of the series.
pub fn time_average(series: &TimeSeries) -> Result<f64> {
    let v = &series.values;
    if v.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: v.len(),
        });
    }
    let inner: f64 = v[1..v.len() - 1].iter().sum();
    let sum = inner + 0.5 * (v[0] + v[v.len() - 1]);
    Ok(sum / (v.len() - 1) as f64)
}

/// Trapezoid weight of `e^{iωt}` on `{0, dt, …, M dt}`.
pub fn trapezoid_kernel(omega: f64, dt: f64, steps: usize) -> Complex64 {
    let m = steps as f64;
    let theta = (omega * dt).rem_euclid(2.0 * PI);
    let theta = if theta > PI { theta - 2.0 * PI } else { theta };
    let half = 0.5 * theta;
    let geometric = if half.sin().abs() < 1e-300 {
        Complex64::new(m + 1.0, 0.0)
    } else {
        Complex64::from_polar(((m + 1.0) * half).sin() / half.sin(), m * half)
    };
    let ends = 0.5 * (Complex64::new(1.0, 0.0) + Complex64::from_polar(1.0, m * theta));
    (geometric - ends) / m
}

/// Pair weights `Γ_ab` such that the averaged expectation of an
/// energy-basis operator is `Σ O_ab Γ_ab`.
#[derive(Debug, Clone)]
pub struct AveragingWeights {
    plus: DMatrix<Complex64>,
    minus: DMatrix<Complex64>,
    /// Rows are odd levels, columns even levels.
    cross: DMatrix<Complex64>,
}

impl AveragingWeights {
    fn build(overlaps: &SectorVec, eig: &EigenSystem, w: impl Fn(f64) -> Complex64 + Sync) -> Result<Self> {
        let (dp, dm) = eig.dims();
        if overlaps.plus.len() != dp || overlaps.minus.len() != dm {
            return Err(Error::DimensionMismatch {
                expected: dp + dm,
                found: overlaps.plus.len() + overlaps.minus.len(),
            });
        }
        let (ep, em) = (&eig.even.energies, &eig.odd.energies);
        let (cp, cm) = (&overlaps.plus, &overlaps.minus);
        let pair = |ca: &[Complex64], ea: &[f64], cb: &[Complex64], eb: &[f64]| {
            DMatrix::from_fn(ca.len(), cb.len(), |a, b| {
                ca[a].conj() * cb[b] * w(ea[a] - eb[b])
            })
        };
        Ok(Self {
            plus: pair(cp, ep, cp, ep),
            minus: pair(cm, em, cm, em),
            cross: pair(cm, em, cp, ep),
        })
    }

    /// Exact trapezoidal mean over `{0, dt, …, round(τ_fin/dt)·dt}`.
    pub fn finite_horizon(overlaps: &SectorVec, eig: &EigenSystem, tau_fin: f64, dt: f64) -> Result<Self> {
        let steps = horizon_steps(tau_fin, dt)?;
        Self::build(overlaps, eig, |omega| trapezoid_kernel(omega, dt, steps))
    }

    /// Infinite-time limit: diagonal terms plus opposite-parity pairs closer
    /// than `gap_threshold` in (unscaled) energy.
    pub fn infinite_time(overlaps: &SectorVec, eig: &EigenSystem, gap_threshold: f64) -> Result<Self> {
        let mut w = Self::build(overlaps, eig, |_| Complex64::new(0.0, 0.0))?;
        for (a, c) in overlaps.plus.iter().enumerate() {
            w.plus[(a, a)] = Complex64::new(c.norm_sqr(), 0.0);
        }
        for (a, c) in overlaps.minus.iter().enumerate() {
            w.minus[(a, a)] = Complex64::new(c.norm_sqr(), 0.0);
        }
        let (ep, em) = (&eig.even.energies, &eig.odd.energies);
        for (n, &e_m) in em.iter().enumerate() {
            // Energies ascend, so only a window of even levels can qualify.
            let lo = ep.partition_point(|&e| e <= e_m - gap_threshold);
            for m in lo..ep.len() {
                if ep[m] - e_m >= gap_threshold {
                    break;
                }
                w.cross[(n, m)] = overlaps.minus[n].conj() * overlaps.plus[m];
            }
        }
        Ok(w)
    }

    /// Averaged `⟨O⟩` for an operator in the final eigenbasis.
    pub fn average(&self, op: &BlockOp) -> Result<f64> {
        let dims = (self.plus.nrows(), self.minus.nrows());
        if op.dims() != dims {
            return Err(Error::DimensionMismatch {
                expected: dims.0 + dims.1,
                found: op.dims().0 + op.dims().1,
            });
        }
        let contract = |o: &DMatrix<f64>, g: &DMatrix<Complex64>| -> Complex64 {
            o.iter().zip(g.iter()).map(|(x, y)| y * *x).sum()
        };
        Ok(match op {
            BlockOp::Even { plus, minus } => {
                (contract(plus, &self.plus) + contract(minus, &self.minus)).re
            }
            BlockOp::Odd { scale, block } => 2.0 * (scale * contract(block, &self.cross)).re,
        })
    }
}

fn horizon_steps(tau_fin: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "must be positive"));
    }
    if !(tau_fin > 0.0 && tau_fin.is_finite()) {
        return Err(invalid("tau_fin", "must be positive"));
    }
    let steps = (tau_fin / dt).round() as usize;
    if steps == 0 {
        return Err(Error::TooFewSamples { needed: 2, got: 1 });
    }
    Ok(steps)
}

/// Trapezoidal mean of `⟨O(t)⟩` over `[0, τ_fin]` on the grid of step `dt`.
pub fn finite_horizon_average(
    overlaps: &SectorVec,
    eig: &EigenSystem,
    op: &BlockOp,
    tau_fin: f64,
    dt: f64,
) -> Result<f64> {
    AveragingWeights::finite_horizon(overlaps, eig, tau_fin, dt)?.average(op)
}

/// Doublet-resolved long-time average; `op` is in the final eigenbasis.
pub fn infinite_time_average(
    overlaps: &SectorVec,
    eig: &EigenSystem,
    op: &BlockOp,
    gap_threshold: f64,
) -> Result<f64> {
    AveragingWeights::infinite_time(overlaps, eig, gap_threshold)?.average(op)
}

pub fn default_gap_threshold(tau_fin: f64) -> f64 {
    2.0 * PI / tau_fin
}

/// Observables of the scan, in the final eigenbasis.
#[derive(Debug, Clone)]
pub struct FinalObservables {
    pub jx: BlockOp,
    pub jy: BlockOp,
    pub jz: BlockOp,
    pub charges: ChargeSet,
}

impl FinalObservables {
    pub fn new(eig: &EigenSystem, charges: &ChargeSet) -> Result<Self> {
        let two_j = eig.params.two_j();
        let to = |axis| eig.to_energy_basis(&collective_blockop(two_j, axis)?);
        Ok(Self {
            jx: to(Axis::X)?,
            jy: to(Axis::Y)?,
            jz: to(Axis::Z)?,
            charges: charges.in_energy_basis(eig)?,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ScanOptions {
    pub tau_fin: f64,
    pub dt: f64,
    /// `Δε` of the ensemble window in units of `σ_ε`.
    pub gme_width_sigmas: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            tau_fin: 2000.0,
            dt: 0.1,
            gme_width_sigmas: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanRow {
    pub tau_int: f64,
    pub eps_mean: f64,
    pub sigma_eps: f64,
    pub jx: f64,
    pub jy: f64,
    pub jz: f64,
    pub cx: f64,
    pub cy: f64,
    pub kx: f64,
    pub ky: f64,
    /// `NaN` when the ensemble could not be built.
    pub gme_jx: f64,
    pub gme_jy: f64,
    pub gme_jz: f64,
    pub occupation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanFailure {
    pub tau_int: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    pub rows: Vec<ScanRow>,
    pub failures: Vec<ScanFailure>,
}

/// Shared final-stage data for many quenches.
#[derive(Debug, Clone)]
pub struct ScanContext {
    pub observables: FinalObservables,
    pub charges: ChargeSet,
    pub crit: CriticalEnergies,
    pub table: DoubletTable,
}

impl ScanContext {
    pub fn new(fin: &EigenSystem) -> Result<Self> {
        let charges = ChargeSet::new(fin.params.two_j())?;
        let crit = critical_energies(&fin.params);
        Ok(Self {
            observables: FinalObservables::new(fin, &charges)?,
            table: doublet_pairing(fin, &crit)?,
            charges,
            crit,
        })
    }
}

/// One scan row from final-basis overlaps.
pub fn scan_row(
    tau_int: f64,
    overlaps: &SectorVec,
    fin: &EigenSystem,
    ctx: &ScanContext,
    opts: &ScanOptions,
) -> Result<ScanRow> {
    let l = ldos(overlaps, fin, &ctx.crit)?;
    let w = AveragingWeights::finite_horizon(overlaps, fin, opts.tau_fin, opts.dt)?;
    let obs = &ctx.observables;
    let (mut gme_jx, mut gme_jy, mut gme_jz) = (f64::NAN, f64::NAN, f64::NAN);
    if ctx.crit.regime_flag {
        let ens = build_gme(overlaps, fin, &ctx.charges, &ctx.table, &ctx.crit, opts.gme_width_sigmas)?;
        gme_jx = gme_expectation_energy_basis(&ens, &obs.jx)?;
        gme_jy = gme_expectation_energy_basis(&ens, &obs.jy)?;
        gme_jz = gme_expectation_energy_basis(&ens, &obs.jz)?;
    }
    Ok(ScanRow {
        tau_int,
        eps_mean: l.mean_eps,
        sigma_eps: l.sigma_eps,
        jx: w.average(&obs.jx)?,
        jy: w.average(&obs.jy)?,
        jz: w.average(&obs.jz)?,
        cx: w.average(&obs.charges.c_x)?,
        cy: w.average(&obs.charges.c_y)?,
        kx: w.average(&obs.charges.k_x)?,
        ky: w.average(&obs.charges.k_y)?,
        gme_jx,
        gme_jy,
        gme_jz,
        occupation: l.occupation,
    })
}

/// Long-time averages for each `τ_int`. Failed rows are recorded and the
/// scan continues; rows come back ordered by `τ_int`.
pub fn tau_scan(protocol: &Protocol, tau_grid: &[f64], opts: &ScanOptions) -> Result<ScanResult> {
    if tau_grid.is_empty() {
        return Err(invalid("tau_grid", "must be nonempty"));
    }
    let ctx = ScanContext::new(&protocol.fin)?;
    Ok(tau_scan_with(protocol, &ctx, tau_grid, opts))
}

pub fn tau_scan_with(protocol: &Protocol, ctx: &ScanContext, tau_grid: &[f64], opts: &ScanOptions) -> ScanResult {
    let mut taus = tau_grid.to_vec();
    taus.sort_by(f64::total_cmp);
    let outcomes: Vec<_> = taus
        .par_iter()
        .map(|&tau| {
            protocol
                .quench(tau)
                .and_then(|run| scan_row(tau, &run.overlaps, &protocol.fin, ctx, opts))
                .map_err(|e| ScanFailure {
                    tau_int: tau,
                    message: e.to_string(),
                })
        })
        .collect();
    let mut result = ScanResult {
        rows: Vec::new(),
        failures: Vec::new(),
    };
    for o in outcomes {
        match o {
            Ok(row) => result.rows.push(row),
            Err(f) => result.failures.push(f),
        }
    }
    result
}
