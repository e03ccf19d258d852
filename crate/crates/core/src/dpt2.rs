//! Return probabilities and rate functions after the second quench.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::operator::{Parity, SectorVec};
use crate::precise::{auto_bits, precise_return, PreciseReturn};
use crate::protocol::{Protocol, ProtocolSpec};
use crate::spinmodel::EigenSystem;
use crate::state::StateVector;

/// Smallest probability passed to the logarithm.
pub const PROBABILITY_FLOOR: f64 = 1e-300;

/// `Σ_n |c_n|² e^{−iE_n t}` over one sector.
fn return_amplitude(weights: &[f64], energies: &[f64], t: f64) -> Complex64 {
    weights
        .iter()
        .zip(energies)
        .map(|(&w, &e)| {
            let (s, c) = (e * t).sin_cos();
            Complex64::new(w * c, -w * s)
        })
        .sum()
}

fn sector_weights(c: &SectorVec, parity: Parity) -> Vec<f64> {
    c.sector(parity).iter().map(|x| x.norm_sqr()).collect()
}

/// `|⟨ψ|e^{−iHt}|ψ⟩|²` from final-basis overlaps.
pub fn survival_from_overlaps(overlaps: &SectorVec, eig: &EigenSystem, times: &[f64]) -> Vec<f64> {
    let (wp, wm) = (sector_weights(overlaps, Parity::Even), sector_weights(overlaps, Parity::Odd));
    times
        .par_iter()
        .map(|&t| {
            (return_amplitude(&wp, &eig.even.energies, t) + return_amplitude(&wm, &eig.odd.energies, t))
                .norm_sqr()
        })
        .collect()
}

/// `(𝓛₊, 𝓛₋)` with `𝓛± = |⟨ψ±|e^{−iHt}|ψ⟩|²`.
pub fn pprp_from_overlaps(overlaps: &SectorVec, eig: &EigenSystem, times: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (wp, wm) = (sector_weights(overlaps, Parity::Even), sector_weights(overlaps, Parity::Odd));
    times
        .par_iter()
        .map(|&t| {
            (
                return_amplitude(&wp, &eig.even.energies, t).norm_sqr(),
                return_amplitude(&wm, &eig.odd.energies, t).norm_sqr(),
            )
        })
        .unzip()
}

/// Survival probability of `state` under the Hamiltonian of `eig`.
pub fn survival(state: &StateVector, eig: &EigenSystem, times: &[f64]) -> Result<Vec<f64>> {
    Ok(survival_from_overlaps(&eig.project(state)?, eig, times))
}

/// Parity-projected return probability and its two sector parts.
pub fn pprp(state: &StateVector, eig: &EigenSystem, times: &[f64]) -> Result<PprpSeries> {
    let (plus, minus) = pprp_from_overlaps(&eig.project(state)?, eig, times);
    let total = plus.iter().zip(&minus).map(|(a, b)| a + b).collect();
    Ok(PprpSeries { total, plus, minus })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PprpSeries {
    pub total: Vec<f64>,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

/// `−ln(value)/N` with the argument floored at [`PROBABILITY_FLOOR`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rate {
    pub values: Vec<f64>,
    /// Sample indices where the floor was applied.
    pub underflow: Vec<usize>,
}

pub fn rate(series: &[f64], n: f64) -> Result<Rate> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(invalid("n", "must be positive"));
    }
    let mut underflow = Vec::new();
    let values = series
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if !(v >= PROBABILITY_FLOOR) {
                underflow.push(i);
                -PROBABILITY_FLOOR.ln() / n
            } else {
                -v.ln() / n
            }
        })
        .collect();
    Ok(Rate { values, underflow })
}

/// Central differences, second-order one-sided at the ends.
pub fn rate_derivative(values: &[f64], dt: f64) -> Result<Vec<f64>> {
    let n = values.len();
    if n < 3 {
        return Err(Error::TooFewSamples { needed: 3, got: n });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "must be positive"));
    }
    let mut d = Vec::with_capacity(n);
    d.push((-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dt));
    for i in 1..n - 1 {
        d.push((values[i + 1] - values[i - 1]) / (2.0 * dt));
    }
    d.push((3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * dt));
    Ok(d)
}

/// Earliest index where `|second difference|` exceeds `factor` times its
/// median over the trace.
pub fn first_kink(values: &[f64], factor: f64) -> Option<usize> {
    if values.len() < 3 {
        return None;
    }
    let second: Vec<f64> = values
        .windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]).abs())
        .collect();
    let mut sorted = second.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    second.iter().position(|&s| s > factor * median).map(|i| i + 1)
}

/// Earliest time at which two traces differ by more than `threshold`.
pub fn separation_time(times: &[f64], a: &[f64], b: &[f64], threshold: f64) -> Option<f64> {
    times
        .iter()
        .zip(a.iter().zip(b))
        .find(|(_, (x, y))| (*x - *y).abs() > threshold)
        .map(|(&t, _)| t)
}

/// `max |f(t + h) − f(t − h)|` over grid times in `[lo, hi]`.
pub fn jump_magnitude(times: &[f64], values: &[f64], lo: f64, hi: f64, h: f64) -> Result<f64> {
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
    let dt = times[1] - times[0];
    let shift = (h / dt).round() as usize;
    let mut best: f64 = 0.0;
    for (i, &t) in times.iter().enumerate() {
        if t < lo || t > hi || i < shift || i + shift >= values.len() {
            continue;
        }
        best = best.max((values[i + shift] - values[i - shift]).abs());
    }
    Ok(best)
}

/// Working precision of the return probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Precision {
    Double,
    Bits(u32),
    /// Enough bits for `e^{−N·r}` with rates up to about 0.2.
    Auto,
}

impl Precision {
    /// `None` for plain double precision.
    pub fn bits(self, particles: f64) -> Option<u32> {
        match self {
            Precision::Double => None,
            Precision::Bits(b) => Some(b),
            Precision::Auto => Some(auto_bits(particles)),
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "double" => Ok(Precision::Double),
            "auto" => Ok(Precision::Auto),
            _ => s
                .parse::<u32>()
                .ok()
                .filter(|&b| b >= 53)
                .map(Precision::Bits)
                .ok_or_else(|| invalid("precision", "expected double, auto or a bit count of at least 53")),
        }
    }
}

/// Both return probabilities and their rate functions on one grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSeries {
    pub two_j: u32,
    pub tau_int: f64,
    pub times: Vec<f64>,
    pub sp: Vec<f64>,
    pub pprp: PprpSeries,
    /// `N = 2j`.
    pub n: f64,
    pub rate_sp: Rate,
    pub rate_pprp: Rate,
    pub drate_pprp: Vec<f64>,
    /// Mantissa bits used for the probabilities.
    pub bits: u32,
}

impl RateSeries {
    pub fn from_overlaps(
        overlaps: &SectorVec,
        eig: &EigenSystem,
        tau_int: f64,
        times: &[f64],
    ) -> Result<Self> {
        if times.len() < 3 {
            return Err(Error::TooFewSamples {
                needed: 3,
                got: times.len(),
            });
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        let sp = survival_from_overlaps(overlaps, eig, times);
        let (plus, minus) = pprp_from_overlaps(overlaps, eig, times);
        let total: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| a + b).collect();
        let n = eig.params.particles();
        let rate_sp = rate(&sp, n)?;
        let rate_pprp = rate(&total, n)?;
        let drate_pprp = rate_derivative(&rate_pprp.values, dt)?;
        Ok(Self {
            two_j: eig.params.two_j(),
            tau_int,
            times: times.to_vec(),
            sp,
            pprp: PprpSeries { total, plus, minus },
            n,
            rate_sp,
            rate_pprp,
            drate_pprp,
            bits: 53,
        })
    }

    /// Rates taken from extended-precision logarithms. Unresolved samples
    /// are reported as underflow in both rates.
    pub fn from_precise(ret: &PreciseReturn, two_j: u32, tau_int: f64, times: &[f64]) -> Result<Self> {
        if times.len() < 3 {
            return Err(Error::TooFewSamples {
                needed: 3,
                got: times.len(),
            });
        }
        if ret.sp.len() != times.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                found: ret.sp.len(),
            });
        }
        let n = two_j as f64;
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        let from_log = |ln: &[f64]| Rate {
            values: ln
                .iter()
                .map(|&l| if l.is_finite() { -l / n } else { -PROBABILITY_FLOOR.ln() / n })
                .collect(),
            underflow: ret.unresolved.clone(),
        };
        let rate_sp = from_log(&ret.ln_sp);
        let rate_pprp = from_log(&ret.ln_pprp);
        let drate_pprp = rate_derivative(&rate_pprp.values, dt)?;
        let total = ret.pprp_plus.iter().zip(&ret.pprp_minus).map(|(a, b)| a + b).collect();
        Ok(Self {
            two_j,
            tau_int,
            times: times.to_vec(),
            sp: ret.sp.clone(),
            pprp: PprpSeries {
                total,
                plus: ret.pprp_plus.clone(),
                minus: ret.pprp_minus.clone(),
            },
            n,
            rate_sp,
            rate_pprp,
            drate_pprp,
            bits: ret.bits,
        })
    }

    /// Bounds, `SP ≤ 2𝓛` and `𝓛 ≤ 𝓛(0)`, each to `tol`.
    pub fn check_invariants(&self, tol: f64) -> std::result::Result<(), String> {
        let l0 = self.pprp.total.first().copied().unwrap_or(1.0);
        for (i, (&sp, &l)) in self.sp.iter().zip(&self.pprp.total).enumerate() {
            let t = self.times[i];
            if !(-tol..=1.0 + tol).contains(&sp) {
                return Err(format!("SP({t}) = {sp} outside [0, 1]"));
            }
            if !(-tol..=1.0 + tol).contains(&l) {
                return Err(format!("L({t}) = {l} outside [0, 1]"));
            }
            if sp > 2.0 * l + tol {
                return Err(format!("SP({t}) = {sp} exceeds 2 L = {}", 2.0 * l));
            }
            if l > l0 + tol {
                return Err(format!("L({t}) = {l} exceeds L(0) = {l0}"));
            }
        }
        Ok(())
    }

    pub fn peak_rate_pprp(&self) -> f64 {
        self.rate_pprp.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Rate functions after one quench of `protocol`.
pub fn rate_series(protocol: &Protocol, tau_int: f64, times: &[f64], precision: Precision) -> Result<RateSeries> {
    let fin = &protocol.fin;
    match precision.bits(fin.params.particles()) {
        None => {
            let run = protocol.quench(tau_int)?;
            RateSeries::from_overlaps(&run.overlaps, fin, tau_int, times)
        }
        Some(bits) => {
            let ret = precise_return(protocol, tau_int, times, bits)?;
            RateSeries::from_precise(&ret, fin.params.two_j(), tau_int, times)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeFailure {
    pub two_j: u32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeScan {
    pub series: Vec<RateSeries>,
    pub failures: Vec<SizeFailure>,
}

/// `template` with every stage resized to `two_j`.
pub fn resize_spec(template: &ProtocolSpec, two_j: u32) -> Result<ProtocolSpec> {
    let spec = ProtocolSpec {
        theta_ini: template.theta_ini.with_two_j(two_j)?,
        theta_int: template.theta_int.with_two_j(two_j)?,
        theta_fin: template.theta_fin.with_two_j(two_j)?,
        ..*template
    };
    spec.validate()?;
    Ok(spec)
}

/// One protocol and rate computation per size, on a shared time grid.
pub fn size_scan(
    template: &ProtocolSpec,
    two_j_list: &[u32],
    tau_int: f64,
    times: &[f64],
    precision: Precision,
) -> Result<SizeScan> {
    if two_j_list.is_empty() {
        return Err(invalid("j_list", "must be nonempty"));
    }
    let outcomes: Vec<_> = two_j_list
        .iter()
        .map(|&two_j| {
            resize_spec(template, two_j)
                .and_then(Protocol::new)
                .and_then(|p| rate_series(&p, tau_int, times, precision))
                .map_err(|e| SizeFailure {
                    two_j,
                    message: e.to_string(),
                })
        })
        .collect();
    let mut scan = SizeScan {
        series: Vec::new(),
        failures: Vec::new(),
    };
    for o in outcomes {
        match o {
            Ok(s) => scan.series.push(s),
            Err(f) => scan.failures.push(f),
        }
    }
    Ok(scan)
}
