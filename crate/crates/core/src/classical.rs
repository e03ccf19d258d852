//! Classical limit on the phase-space disk `Q² + P² ≤ 2`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spinmodel::ModelParams;
use crate::state::StateVector;

/// Slack allowed on the disk boundary for points produced numerically.
const DISK_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassicalState {
    pub q: f64,
    pub p: f64,
}

impl ClassicalState {
    pub fn new(q: f64, p: f64) -> Result<Self> {
        let s = Self { q, p };
        if !(q.is_finite() && p.is_finite()) || s.r2() > 2.0 + DISK_SLACK {
            return Err(Error::OutsideDisk { q, p });
        }
        Ok(s)
    }

    pub fn r2(&self) -> f64 {
        self.q * self.q + self.p * self.p
    }
}

fn energy(q: f64, p: f64, xi: f64, alpha: f64) -> f64 {
    let r2 = q * q + p * p;
    (1.0 - xi) * r2 / 2.0 + alpha / 4.0 * r2 * r2 + xi * q * q * (r2 - 2.0) + xi
}

fn rhs(q: f64, p: f64, xi: f64, alpha: f64) -> (f64, f64) {
    let (q2, p2) = (q * q, p * p);
    (
        p * ((alpha + 2.0 * xi) * q2 + alpha * p2 - xi + 1.0),
        -q * ((alpha + 2.0 * xi) * p2 + (alpha + 4.0 * xi) * q2 - 5.0 * xi + 1.0),
    )
}

/// Scaled classical energy `ε(Q, P)`.
pub fn classical_energy(state: &ClassicalState, params: &ModelParams) -> Result<f64> {
    ClassicalState::new(state.q, state.p)?;
    Ok(energy(state.q, state.p, params.xi(), params.alpha()))
}

/// `(dQ/dt, dP/dt)`.
pub fn hamilton_rhs(state: &ClassicalState, params: &ModelParams) -> (f64, f64) {
    rhs(state.q, state.p, params.xi(), params.alpha())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrbitPoint {
    pub t: f64,
    pub q: f64,
    pub p: f64,
    pub eps: f64,
}

/// Fixed-step RK4 from `state0` up to `t_max`, keeping every step.
pub fn integrate_orbit(
    state0: &ClassicalState,
    params: &ModelParams,
    t_max: f64,
    h: f64,
) -> Result<Vec<OrbitPoint>> {
    integrate_orbit_sampled(state0, params, t_max, h, 1)
}

/// As [`integrate_orbit`] but keeping only every `stride`-th step (the last
/// step is always kept).
pub fn integrate_orbit_sampled(
    state0: &ClassicalState,
    params: &ModelParams,
    t_max: f64,
    h: f64,
    stride: usize,
) -> Result<Vec<OrbitPoint>> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(crate::error::invalid("h", "step must be positive"));
    }
    if !(t_max >= 0.0 && t_max.is_finite()) {
        return Err(crate::error::invalid("t_max", "must be nonnegative"));
    }
    let stride = stride.max(1);
    let s0 = ClassicalState::new(state0.q, state0.p)?;
    let (xi, alpha) = (params.xi(), params.alpha());
    let steps = (t_max / h).round() as usize;
    let f = |q: f64, p: f64| rhs(q, p, xi, alpha);

    let (mut q, mut p) = (s0.q, s0.p);
    let mut out = Vec::with_capacity(steps / stride + 2);
    out.push(OrbitPoint {
        t: 0.0,
        q,
        p,
        eps: energy(q, p, xi, alpha),
    });
    for step in 1..=steps {
        let (k1q, k1p) = f(q, p);
        let (k2q, k2p) = f(q + 0.5 * h * k1q, p + 0.5 * h * k1p);
        let (k3q, k3p) = f(q + 0.5 * h * k2q, p + 0.5 * h * k2p);
        let (k4q, k4p) = f(q + h * k3q, p + h * k3p);
        q += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
        p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        let t = step as f64 * h;
        if !(q * q + p * p <= 2.0 + DISK_SLACK) {
            return Err(Error::DiskExit { t });
        }
        if step % stride == 0 || step == steps {
            out.push(OrbitPoint {
                t,
                q,
                p,
                eps: energy(q, p, xi, alpha),
            });
        }
    }
    Ok(out)
}

/// Coherent-state spin expectations `(j_x, j_y, j_z)`.
pub fn classical_spin(state: &ClassicalState, j: f64) -> [f64; 3] {
    let r2 = state.r2();
    let root = (2.0 - r2).max(0.0).sqrt();
    [j * state.q * root, -j * state.p * root, j * (r2 - 1.0)]
}

/// Canonical point of a quantum state together with the mismatch
/// `|Q² + P² − r²|` between its first moments and the disk radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassicalImage {
    pub state: ClassicalState,
    pub residual: f64,
}

/// Invert the coherent-state map using the first moments of `J`.
pub fn quantum_to_classical(psi: &StateVector) -> Result<ClassicalImage> {
    let j = psi.j();
    let [jx, jy, jz] = psi.spin_expectation();
    let r2 = 1.0 + jz / j;
    if !(-1e-12..=2.0 + 1e-12).contains(&r2) {
        return Err(Error::NoClassicalImage {
            reason: format!("r^2 = {r2} outside [0, 2]"),
        });
    }
    let r2 = r2.clamp(0.0, 2.0);
    let root = (2.0 - r2).sqrt();
    if root < 1e-6 {
        return Err(Error::NoClassicalImage {
            reason: format!("ill-conditioned near the disk boundary (r^2 = {r2})"),
        });
    }
    let q = jx / (j * root);
    let p = -jy / (j * root);
    Ok(ClassicalImage {
        state: ClassicalState { q, p },
        residual: (q * q + p * p - r2).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalEnergies {
    pub eps_c1: f64,
    pub eps_c2: f64,
    /// Both critical lines exist and separate three phases.
    pub regime_flag: bool,
    pub eps_min: f64,
    pub eps_max: f64,
}

/// Global extrema of the classical energy over the disk.
///
/// `ε` is constant (`1 + α`) on the boundary, so the extrema are among the
/// origin, the boundary and the interior stationary points, which solve
/// linear equations in `Q²` and `P²`.
pub fn energy_range(xi: f64, alpha: f64) -> (f64, f64) {
    let mut candidates = vec![xi, 1.0 + alpha];
    let mut push = |q2: f64, p2: f64| {
        if q2 >= 0.0 && p2 >= 0.0 && q2 + p2 <= 2.0 {
            candidates.push(energy(q2.sqrt(), p2.sqrt(), xi, alpha));
        }
    };
    if alpha != 0.0 {
        push(0.0, (xi - 1.0) / alpha);
    }
    if alpha + 4.0 * xi != 0.0 {
        push((5.0 * xi - 1.0) / (alpha + 4.0 * xi), 0.0);
    }
    let (a, b, c, d) = (alpha + 2.0 * xi, alpha, alpha + 4.0 * xi, alpha + 2.0 * xi);
    let det = a * d - b * c;
    if det.abs() > 1e-14 {
        let (r1, r2) = (xi - 1.0, 5.0 * xi - 1.0);
        push((r1 * d - b * r2) / det, (a * r2 - c * r1) / det);
    }
    let lo = candidates.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = candidates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

pub fn critical_energies(params: &ModelParams) -> CriticalEnergies {
    let (xi, alpha) = (params.xi(), params.alpha());
    let (eps_min, eps_max) = energy_range(xi, alpha);
    let eps_c1 = 1.0 + alpha;
    let eps_c2 = xi;
    CriticalEnergies {
        eps_c1,
        eps_c2,
        regime_flag: eps_min < eps_c1 && eps_c1 < eps_c2 && eps_c2 < eps_max,
        eps_min,
        eps_max,
    }
}

/// Spectral phase of a scaled energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Phase {
    I,
    II,
    III,
}

impl Phase {
    pub fn label(self) -> &'static str {
        match self {
            Phase::I => "I",
            Phase::II => "II",
            Phase::III => "III",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Phase::I => 0,
            Phase::II => 1,
            Phase::III => 2,
        }
    }
}

const TIE: f64 = 1e-12;

pub fn classify_phase(eps: f64, crit: &CriticalEnergies) -> Phase {
    if eps < crit.eps_c1 - TIE {
        Phase::I
    } else if eps > crit.eps_c2 + TIE {
        Phase::III
    } else {
        Phase::II
    }
}

/// `ε` on an `n_q × n_p` rectangular grid over `[-√2, √2]²`, keeping the
/// points inside the disk.
pub fn phase_space_grid(params: &ModelParams, n_q: usize, n_p: usize) -> Vec<(f64, f64, f64)> {
    let r = 2f64.sqrt();
    let axis = |n: usize, i: usize| {
        if n <= 1 {
            0.0
        } else {
            -r + 2.0 * r * i as f64 / (n - 1) as f64
        }
    };
    let mut out = Vec::new();
    for iq in 0..n_q {
        for ip in 0..n_p {
            let (q, p) = (axis(n_q, iq), axis(n_p, ip));
            if q * q + p * p <= 2.0 {
                out.push((q, p, energy(q, p, params.xi(), params.alpha())));
            }
        }
    }
    out
}
