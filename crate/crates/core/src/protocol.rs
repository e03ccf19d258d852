//! Double-quench protocol: prepare a symmetry-broken superposition of the
//! two most excited levels of `H_ini`, evolve for `τ_int` under `H_int`,
//! then quench to `H_fin`.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::classical::{classify_phase, CriticalEnergies, Phase};
use crate::error::{invalid, Error, Result};
use crate::operator::{BlockOp, Parity, SectorVec};
use crate::spinmodel::{collective_blockop, Axis, EigenSystem, ModelParams};
use crate::state::StateVector;

/// Initial-state choice `(p, φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Superposition {
    pub p: f64,
    pub phi: f64,
}

impl Superposition {
    /// `p = 1/2`, `φ = 3π/2`: localized in the `P < 0` lobe.
    pub const S1: Superposition = Superposition {
        p: 0.5,
        phi: 1.5 * PI,
    };
    /// `p = 1/3`, `φ = 3π/5`: coherent over both lobes.
    pub const S2: Superposition = Superposition {
        p: 1.0 / 3.0,
        phi: 0.6 * PI,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProtocolSpec {
    pub theta_ini: ModelParams,
    pub theta_int: ModelParams,
    pub theta_fin: ModelParams,
    pub p: f64,
    pub phi: f64,
    pub tau_int: f64,
    pub tau_fin: f64,
    pub dt: f64,
}

impl ProtocolSpec {
    /// `Θ_ini = (0.6, −2)`, `Θ_int = (0.2, −0.8)`, `Θ_fin = (0.5, −0.6)`,
    /// `τ_fin = 2000`, `dt = 0.1`.
    pub fn standard(two_j: u32, state: Superposition, tau_int: f64) -> Result<Self> {
        let spec = Self {
            theta_ini: ModelParams::new(0.6, -2.0, two_j)?,
            theta_int: ModelParams::new(0.2, -0.8, two_j)?,
            theta_fin: ModelParams::new(0.5, -0.6, two_j)?,
            p: state.p,
            phi: state.phi,
            tau_int,
            tau_fin: 2000.0,
            dt: 0.1,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn two_j(&self) -> u32 {
        self.theta_fin.two_j()
    }

    pub fn validate(&self) -> Result<()> {
        let two_j = self.theta_ini.two_j();
        if self.theta_int.two_j() != two_j || self.theta_fin.two_j() != two_j {
            return Err(invalid("two_j", "all stages must share the system size"));
        }
        if !(0.0..=1.0).contains(&self.p) {
            return Err(invalid("p", format!("{} is outside [0, 1]", self.p)));
        }
        if !self.phi.is_finite() {
            return Err(invalid("phi", "must be finite"));
        }
        if !(self.tau_int >= 0.0 && self.tau_int.is_finite()) {
            return Err(invalid("tau_int", "must be nonnegative"));
        }
        if !(self.tau_fin > 0.0 && self.tau_fin.is_finite()) {
            return Err(invalid("tau_fin", "must be positive"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", "must be positive"));
        }
        Ok(())
    }
}

/// `Im⟨E_max,+|Jy|E_max,−⟩` for the top eigenvectors as stored.
fn top_jy_overlap(eig: &EigenSystem) -> Result<f64> {
    let (dp, dm) = eig.dims();
    if dp == 0 {
        return Err(Error::MissingSector("even"));
    }
    if dm == 0 {
        return Err(Error::MissingSector("odd"));
    }
    let jy = collective_blockop(eig.params.two_j(), Axis::Y)?;
    let BlockOp::Odd { block, .. } = &jy else {
        unreachable!("Jy is parity odd")
    };
    // ⟨−|Jy|+⟩ = −i vᵀ B v, so Im⟨+|Jy|−⟩ = vᵀ B v.
    let w = block * eig.even.vectors.column(dp - 1);
    Ok(eig.odd.vectors.column(dm - 1).dot(&w))
}

/// `√p |E_max,+⟩ + e^{iφ} √(1−p) |E_max,−⟩` with the odd top vector signed
/// so that `Im⟨E_max,+|Jy|E_max,−⟩ ≥ 0`.
pub fn prepare_initial_with(eig: &EigenSystem, p: f64, phi: f64) -> Result<StateVector> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid("p", format!("{p} is outside [0, 1]")));
    }
    let s = top_jy_overlap(eig)?;
    let sign = if s < 0.0 { -1.0 } else { 1.0 };
    let (dp, dm) = eig.dims();
    let mut coeffs = SectorVec::zeros(dp, dm);
    coeffs.plus[dp - 1] = Complex64::new(p.sqrt(), 0.0);
    coeffs.minus[dm - 1] = Complex64::from_polar(sign * (1.0 - p).sqrt(), phi);
    eig.reconstruct(&coeffs)
}

pub fn prepare_initial(theta_ini: &ModelParams, p: f64, phi: f64) -> Result<StateVector> {
    let eig = EigenSystem::new(*theta_ini)?;
    prepare_initial_with(&eig, p, phi)
}

/// `e^{−iHt} ψ` through the eigendecomposition of `H`.
pub fn evolve(state: &StateVector, eig: &EigenSystem, t: f64) -> Result<StateVector> {
    let c = eig.project(state)?;
    eig.reconstruct(&eig.propagate_coefficients(&c, t))
}

/// `⟨ψ|O|ψ⟩` for a dense Hermitian `O` in the magnetic basis.
pub fn expval(state: &StateVector, op: &DMatrix<Complex64>) -> Result<f64> {
    let dim = state.amplitudes().len();
    if op.nrows() != dim || op.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: op.nrows(),
        });
    }
    let scale = op.camax().max(1.0);
    let residual = (op.adjoint() - op).camax();
    if residual > 1e-12 * scale {
        return Err(Error::NotHermitian { residual });
    }
    let psi = nalgebra::DVector::from_column_slice(state.amplitudes());
    let z = psi.dotc(&(op * &psi));
    if z.im.abs() > 1e-10 * scale {
        return Err(Error::NotHermitian { residual: z.im.abs() });
    }
    Ok(z.re)
}

/// `⟨ψ|O|ψ⟩` for a parity-resolved operator in the magnetic basis.
pub fn expval_block(state: &StateVector, op: &BlockOp) -> Result<f64> {
    op.expectation(&state.sectors())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LdosEntry {
    pub eps: f64,
    pub weight: f64,
    pub parity: Parity,
    pub phase: Option<Phase>,
}

/// Weight distribution of a state over the levels of one Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ldos {
    pub levels: Vec<LdosEntry>,
    pub mean_eps: f64,
    pub sigma_eps: f64,
    /// Weight in phases I, II, III (zero outside the three-phase regime).
    pub occupation: [f64; 3],
}

pub fn ldos(overlaps: &SectorVec, eig: &EigenSystem, crit: &CriticalEnergies) -> Result<Ldos> {
    let (dp, dm) = eig.dims();
    if overlaps.plus.len() != dp || overlaps.minus.len() != dm {
        return Err(Error::DimensionMismatch {
            expected: dp + dm,
            found: overlaps.plus.len() + overlaps.minus.len(),
        });
    }
    let mut levels = Vec::with_capacity(dp + dm);
    for parity in [Parity::Even, Parity::Odd] {
        for (c, &e) in overlaps.sector(parity).iter().zip(&eig.sector(parity).energies) {
            let eps = eig.scaled(e);
            levels.push(LdosEntry {
                eps,
                weight: c.norm_sqr(),
                parity,
                phase: crit.regime_flag.then(|| classify_phase(eps, crit)),
            });
        }
    }
    levels.sort_by(|a, b| a.eps.total_cmp(&b.eps));
    let total: f64 = levels.iter().map(|l| l.weight).sum();
    let mean_eps = levels.iter().map(|l| l.weight * l.eps).sum::<f64>() / total;
    let var = levels
        .iter()
        .map(|l| l.weight * (l.eps - mean_eps).powi(2))
        .sum::<f64>()
        / total;
    let mut occupation = [0.0; 3];
    for l in &levels {
        if let Some(ph) = l.phase {
            occupation[ph.index()] += l.weight / total;
        }
    }
    Ok(Ldos {
        levels,
        mean_eps,
        sigma_eps: var.max(0.0).sqrt(),
        occupation,
    })
}

/// The three diagonalized stages and the prepared state, reusable across
/// many values of `τ_int`.
#[derive(Debug, Clone)]
pub struct Protocol {
    pub spec: ProtocolSpec,
    pub ini: Arc<EigenSystem>,
    pub int: Arc<EigenSystem>,
    pub fin: Arc<EigenSystem>,
    pub psi0: StateVector,
    c_int: SectorVec,
}

impl Protocol {
    pub fn new(spec: ProtocolSpec) -> Result<Self> {
        spec.validate()?;
        let ((ini, int), fin) = rayon::join(
            || {
                rayon::join(
                    || EigenSystem::new(spec.theta_ini),
                    || EigenSystem::new(spec.theta_int),
                )
            },
            || EigenSystem::new(spec.theta_fin),
        );
        Self::from_eigensystems(spec, Arc::new(ini?), Arc::new(int?), Arc::new(fin?))
    }

    pub fn from_eigensystems(
        spec: ProtocolSpec,
        ini: Arc<EigenSystem>,
        int: Arc<EigenSystem>,
        fin: Arc<EigenSystem>,
    ) -> Result<Self> {
        spec.validate()?;
        let psi0 = prepare_initial_with(&ini, spec.p, spec.phi)?;
        let c_int = int.project(&psi0)?;
        Ok(Self {
            spec,
            ini,
            int,
            fin,
            psi0,
            c_int,
        })
    }

    /// State after `tau_int` under `H_int`.
    pub fn state_at_tau(&self, tau_int: f64) -> Result<StateVector> {
        self.int
            .reconstruct(&self.int.propagate_coefficients(&self.c_int, tau_int))
    }

    /// Quench to `H_fin` after `tau_int`.
    pub fn quench(&self, tau_int: f64) -> Result<QuenchRun> {
        if !(tau_int >= 0.0 && tau_int.is_finite()) {
            return Err(invalid("tau_int", "must be nonnegative"));
        }
        let psi_tau = self.state_at_tau(tau_int)?;
        let overlaps = self.fin.project(&psi_tau)?;
        Ok(QuenchRun {
            tau_int,
            psi_tau,
            overlaps,
            fin: Arc::clone(&self.fin),
        })
    }

    /// Quench at the spec's own `τ_int`.
    pub fn run(&self) -> Result<QuenchRun> {
        self.quench(self.spec.tau_int)
    }
}

/// Final-stage dynamics of one quench.
#[derive(Debug, Clone)]
pub struct QuenchRun {
    pub tau_int: f64,
    /// State at the moment of the second quench.
    pub psi_tau: StateVector,
    /// `c^fin_{n,±} = ⟨E_{n,±}(Θ_fin)|ψ(τ_int)⟩`.
    pub overlaps: SectorVec,
    pub fin: Arc<EigenSystem>,
}

impl QuenchRun {
    /// State a time `t` after the second quench.
    pub fn state_at(&self, t: f64) -> Result<StateVector> {
        self.fin
            .reconstruct(&self.fin.propagate_coefficients(&self.overlaps, t))
    }

    /// `(⟨Jx⟩, ⟨Jy⟩, ⟨Jz⟩)` at each time.
    pub fn spin_series(&self, times: &[f64]) -> Result<Vec<[f64; 3]>> {
        times
            .iter()
            .map(|&t| Ok(self.state_at(t)?.spin_expectation()))
            .collect()
    }

    pub fn ldos(&self, crit: &CriticalEnergies) -> Result<Ldos> {
        ldos(&self.overlaps, &self.fin, crit)
    }
}

/// Run the full protocol; the final-stage grid is `{0, dt, …, τ_fin}`.
pub fn run_protocol(spec: &ProtocolSpec) -> Result<(Protocol, QuenchRun)> {
    let protocol = Protocol::new(*spec)?;
    let run = protocol.run()?;
    Ok((protocol, run))
}

/// `{0, dt, 2dt, …, t_max}` with `round(t_max/dt)` steps.
pub fn time_grid(t_max: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "must be positive"));
    }
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(invalid("t_max", "must be nonnegative"));
    }
    let steps = (t_max / dt).round() as usize;
    Ok((0..=steps).map(|i| i as f64 * dt).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::critical_energies;
    use crate::spinmodel::collective_operator;
    use proptest::prelude::*;

    fn small_spec(two_j: u32, tau_int: f64) -> ProtocolSpec {
        ProtocolSpec::standard(two_j, Superposition::S1, tau_int).unwrap()
    }

    #[test]
    fn parity_of_initial_state() {
        let ini = ModelParams::new(0.6, -2.0, 40).unwrap();
        let eig = EigenSystem::new(ini).unwrap();
        for (p, expected) in [(1.0, 1.0), (0.0, -1.0), (0.5, 0.0), (0.25, -0.5)] {
            let psi = prepare_initial_with(&eig, p, 0.3).unwrap();
            assert!((psi.norm() - 1.0).abs() < 1e-12);
            assert!((psi.parity_expectation() - expected).abs() < 1e-12);
        }
        assert!(prepare_initial_with(&eig, 1.5, 0.0).is_err());
    }

    #[test]
    fn s1_sits_in_negative_p_lobe() {
        let ini = ModelParams::new(0.6, -2.0, 400).unwrap();
        let eig = EigenSystem::new(ini).unwrap();
        let s1 = prepare_initial_with(&eig, 0.5, 1.5 * PI).unwrap();
        let [jx, jy, _] = s1.spin_expectation();
        assert!(jy > 0.0);
        assert!(jx.abs() < 1e-10);
        let img = crate::classical::quantum_to_classical(&s1).unwrap();
        assert!(img.state.p < 0.0);
        let jx_dense = expval(&s1, &collective_operator(400, Axis::X).unwrap()).unwrap();
        assert!(jx_dense.abs() < 1e-10);
        // Shifting φ by π mirrors the lobe.
        let flipped = prepare_initial_with(&eig, 0.5, 0.5 * PI).unwrap();
        let jy_flipped = flipped.spin_expectation()[1];
        assert!((jy_flipped + jy).abs() < 1e-10);
    }

    #[test]
    fn expval_examples() {
        let psi = StateVector::basis(6, 0);
        let jz = collective_operator(6, Axis::Z).unwrap();
        assert!((expval(&psi, &jz).unwrap() + 3.0).abs() < 1e-15);
        let mut bad = jz.clone();
        bad[(0, 1)] = Complex64::new(1.0, 0.0);
        assert!(matches!(expval(&psi, &bad), Err(Error::NotHermitian { .. })));
        let jx = collective_blockop(6, Axis::X).unwrap();
        assert_eq!(expval_block(&psi, &jx).unwrap(), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn evolution_conserves_norm_and_parity(
            two_j in 1u32..40, xi in 0.0f64..1.0, alpha in -2.0f64..1.0,
            t in -50.0f64..50.0, seed in 0u64..1000,
        ) {
            let params = ModelParams::new(xi, alpha, two_j).unwrap();
            let eig = EigenSystem::new(params).unwrap();
            let amps: Vec<Complex64> = (0..=two_j as u64)
                .map(|k| {
                    let x = ((k + 1) * (seed + 7)) as f64;
                    Complex64::new((x * 0.37).sin(), (x * 0.73).cos())
                })
                .collect();
            let n: f64 = amps.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            let psi = StateVector::new(two_j, amps.iter().map(|c| c / n).collect()).unwrap();
            let out = evolve(&psi, &eig, t).unwrap();
            prop_assert!((out.norm() - 1.0).abs() < 1e-12);
            prop_assert!((out.parity_expectation() - psi.parity_expectation()).abs() < 1e-12);
            let back = evolve(&out, &eig, -t).unwrap();
            let err = back.amplitudes().iter().zip(psi.amplitudes())
                .map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            prop_assert!(err < 1e-12);
        }
    }

    #[test]
    fn evolve_at_zero_is_identity() {
        let params = ModelParams::new(0.5, -0.6, 21).unwrap();
        let eig = EigenSystem::new(params).unwrap();
        let psi = StateVector::basis(21, 5);
        let out = evolve(&psi, &eig, 0.0).unwrap();
        for (a, b) in out.amplitudes().iter().zip(psi.amplitudes()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn zero_intermediate_time_is_a_direct_quench() {
        let spec = small_spec(60, 0.0);
        let (protocol, run) = run_protocol(&spec).unwrap();
        let direct = protocol.fin.project(&protocol.psi0).unwrap();
        for (a, b) in run.overlaps.plus.iter().zip(&direct.plus) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn populations_fixed_when_final_equals_intermediate() {
        let mut spec = small_spec(60, 0.0);
        spec.theta_fin = spec.theta_int;
        let protocol = Protocol::new(spec).unwrap();
        let crit = critical_energies(&spec.theta_fin);
        let w0 = protocol.quench(0.0).unwrap().ldos(&crit).unwrap();
        let w1 = protocol.quench(3.7).unwrap().ldos(&crit).unwrap();
        for (a, b) in w0.levels.iter().zip(&w1.levels) {
            assert!((a.weight - b.weight).abs() < 1e-12);
        }
    }

    #[test]
    fn ldos_normalization_and_final_time_independence() {
        let spec = small_spec(100, 1.5);
        let (protocol, run) = run_protocol(&spec).unwrap();
        let crit = critical_energies(&spec.theta_fin);
        let l = run.ldos(&crit).unwrap();
        let total: f64 = l.levels.iter().map(|e| e.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(l.sigma_eps >= 0.0);
        assert!(((l.occupation.iter().sum::<f64>()) - 1.0).abs() < 1e-12);
        let later = protocol.fin.project(&run.state_at(17.0).unwrap()).unwrap();
        let l2 = ldos(&later, &protocol.fin, &crit).unwrap();
        for (a, b) in l.levels.iter().zip(&l2.levels) {
            assert!((a.weight - b.weight).abs() < 1e-12);
        }
    }

    #[test]
    fn time_grid_endpoints() {
        let g = time_grid(1.0, 0.1).unwrap();
        assert_eq!(g.len(), 11);
        assert!((g[10] - 1.0).abs() < 1e-15);
        assert!(time_grid(1.0, 0.0).is_err());
    }

    #[test]
    fn spec_validation() {
        let mut spec = small_spec(10, 0.5);
        spec.tau_fin = 0.0;
        assert!(spec.validate().is_err());
        let mut spec = small_spec(10, 0.5);
        spec.theta_fin = ModelParams::new(0.5, -0.6, 12).unwrap();
        assert!(Protocol::new(spec).is_err());
    }
}
