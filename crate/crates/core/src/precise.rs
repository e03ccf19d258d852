//! Return amplitudes in extended precision.
//!
//! Rate functions of order `0.1` at `N ~ 10³` mean return probabilities far
//! below `1e-30`. These come out of sums over many levels that cancel to
//! that size, so every input (eigenvalues, eigenvectors, overlaps) has to
//! carry that many digits. Each sector's eigenpairs are refined from their
//! double-precision estimates by Rayleigh-quotient iteration and consumed
//! one at a time.

use std::cmp::Ordering;

use rayon::prelude::*;
use rug::ops::NegAssign;
use rug::{Assign, Float};

use crate::error::{invalid, Error, Result};
use crate::operator::Parity;
use crate::protocol::Protocol;
use crate::spinmodel::{EigenSystem, ModelParams, SectorEigen};

/// Working precision for rates up to about `0.4` at `N` particles.
pub fn auto_bits(particles: f64) -> u32 {
    64 + (0.2 * particles / std::f64::consts::LN_2).ceil() as u32
}

struct Tridiag {
    diag: Vec<Float>,
    off: Vec<Float>,
    /// `‖T‖∞` to double precision.
    scale: f64,
}

fn sector_tridiag(params: &ModelParams, parity: Parity, prec: u32) -> Tridiag {
    let two_j = params.two_j() as u64;
    let start = match parity {
        Parity::Even => 0,
        Parity::Odd => 1,
    };
    let ks: Vec<u64> = (start..=two_j).step_by(2).collect();
    let xi = Float::with_val(prec, params.xi());
    let alpha = Float::with_val(prec, params.alpha());
    let j = Float::with_val(prec, two_j) / 2u32;
    let two_j_f = Float::with_val(prec, two_j);
    let diag: Vec<Float> = ks
        .iter()
        .map(|&k| {
            let kf = Float::with_val(prec, k);
            let m = Float::with_val(prec, &kf - &j);
            let j_sq = Float::with_val(prec, j.square_ref());
            // j² − (j(j+1) − m²)/2
            let jx2 = (Float::with_val(prec, &j_sq + &j) - Float::with_val(prec, m.square_ref())) / 2u32;
            let mut e = Float::with_val(prec, 1 - &xi) * &kf;
            e += Float::with_val(prec, &xi * (j_sq - jx2)) * 2u32 / &j;
            e += Float::with_val(prec, &alpha * Float::with_val(prec, k * (k + 1))) / &two_j_f;
            e
        })
        .collect();
    let off: Vec<Float> = ks
        .iter()
        .take(ks.len().saturating_sub(1))
        .map(|&k| {
            let prod = (two_j - k) as u128 * (k + 1) as u128 * (two_j - k - 1) as u128 * (k + 2) as u128;
            let root = Float::with_val(prec, Float::with_val(prec, prod).sqrt_ref());
            -(Float::with_val(prec, &xi * &root) / &two_j_f)
        })
        .collect();
    let n = diag.len();
    let scale = (0..n)
        .map(|i| {
            let mut row = diag[i].to_f64().abs();
            if i > 0 {
                row += off[i - 1].to_f64().abs();
            }
            if i + 1 < n {
                row += off[i].to_f64().abs();
            }
            row
        })
        .fold(1.0, f64::max);
    Tridiag { diag, off, scale }
}

fn dot(a: &[Float], b: &[Float], prec: u32) -> Float {
    let mut acc = Float::new(prec);
    let mut tmp = Float::new(prec);
    for (x, y) in a.iter().zip(b) {
        tmp.assign(x * y);
        acc += &tmp;
    }
    acc
}

fn normalize(v: &mut [Float], prec: u32) {
    let norm = Float::with_val(prec, dot(v, v, prec).sqrt_ref());
    for x in v.iter_mut() {
        *x /= &norm;
    }
}

/// `‖(T − σ)v‖²`.
fn residual_sqr(t: &Tridiag, sigma: &Float, v: &[Float], prec: u32) -> Float {
    let n = v.len();
    let mut tmp = Float::new(prec);
    let mut row = Float::new(prec);
    let mut acc = Float::new(prec);
    for i in 0..n {
        row.assign(&t.diag[i] - sigma);
        row *= &v[i];
        if i > 0 {
            tmp.assign(&t.off[i - 1] * &v[i - 1]);
            row += &tmp;
        }
        if i + 1 < n {
            tmp.assign(&t.off[i] * &v[i + 1]);
            row += &tmp;
        }
        tmp.assign(row.square_ref());
        acc += &tmp;
    }
    acc
}

/// `vᵀ T v`.
fn rayleigh(t: &Tridiag, v: &[Float], prec: u32) -> Float {
    let n = v.len();
    let mut tmp = Float::new(prec);
    let mut acc = Float::new(prec);
    for i in 0..n {
        tmp.assign(v[i].square_ref());
        tmp *= &t.diag[i];
        acc += &tmp;
        if i + 1 < n {
            tmp.assign(&v[i] * &v[i + 1]);
            tmp *= &t.off[i];
            acc += &tmp;
            acc += &tmp;
        }
    }
    acc
}

/// Solve `(T − σI) y = b` by elimination with partial pivoting.
fn shifted_solve(t: &Tridiag, sigma: &Float, b: &[Float], prec: u32) -> Vec<Float> {
    let n = b.len();
    let tiny = Float::with_val(prec, t.scale) >> (prec as i32 - 4);
    let mut u0: Vec<Float> = Vec::with_capacity(n);
    let mut u1: Vec<Float> = Vec::with_capacity(n);
    let mut u2: Vec<Float> = Vec::with_capacity(n);
    let mut rhs: Vec<Float> = Vec::with_capacity(n);
    // Pending row: entries at columns i, i+1, i+2 and its right-hand side.
    let mut d = Float::with_val(prec, &t.diag[0] - sigma);
    let mut e1 = if n > 1 { t.off[0].clone() } else { Float::new(prec) };
    let mut e2 = Float::new(prec);
    let mut r = b[0].clone();
    for i in 0..n - 1 {
        let l = &t.off[i];
        let nd = Float::with_val(prec, &t.diag[i + 1] - sigma);
        let ne1 = if i + 2 < n { t.off[i + 1].clone() } else { Float::new(prec) };
        let nr = b[i + 1].clone();
        if l.cmp_abs(&d) == Some(Ordering::Greater) {
            let m = Float::with_val(prec, &d / l);
            let pd = e1 - Float::with_val(prec, &m * &nd);
            let pe1 = e2 - Float::with_val(prec, &m * &ne1);
            let pr = r - Float::with_val(prec, &m * &nr);
            u0.push(l.clone());
            u1.push(nd);
            u2.push(ne1);
            rhs.push(nr);
            d = pd;
            e1 = pe1;
            r = pr;
        } else {
            if d.is_zero() {
                d.assign(&tiny);
            }
            let m = Float::with_val(prec, l / &d);
            let pd = nd - Float::with_val(prec, &m * &e1);
            let pe1 = ne1 - Float::with_val(prec, &m * &e2);
            let pr = nr - Float::with_val(prec, &m * &r);
            u0.push(d);
            u1.push(e1);
            u2.push(e2);
            rhs.push(r);
            d = pd;
            e1 = pe1;
            r = pr;
        }
        e2 = Float::new(prec);
    }
    if d.is_zero() {
        d.assign(&tiny);
    }
    u0.push(d);
    u1.push(Float::new(prec));
    u2.push(Float::new(prec));
    rhs.push(r);
    let mut y = vec![Float::new(prec); n];
    let mut tmp = Float::new(prec);
    for i in (0..n).rev() {
        let mut acc = rhs[i].clone();
        if i + 1 < n {
            tmp.assign(&u1[i] * &y[i + 1]);
            acc -= &tmp;
        }
        if i + 2 < n {
            tmp.assign(&u2[i] * &y[i + 2]);
            acc -= &tmp;
        }
        acc /= &u0[i];
        y[i] = acc;
    }
    y
}

/// Refine an approximate eigenpair; the result keeps the sign of `guess`.
fn refine(t: &Tridiag, guess: &[f64], prec: u32) -> Result<(Float, Vec<Float>)> {
    const MAX_ITER: usize = 8;
    let mut v: Vec<Float> = guess.iter().map(|&x| Float::with_val(prec, x)).collect();
    normalize(&mut v, prec);
    let tol = Float::with_val(prec, t.scale) >> (prec as i32 - 16);
    let tol_sqr = Float::with_val(prec, tol.square_ref());
    for _ in 0..MAX_ITER {
        let sigma = rayleigh(t, &v, prec);
        if residual_sqr(t, &sigma, &v, prec) <= tol_sqr {
            return Ok((sigma, v));
        }
        let mut y = shifted_solve(t, &sigma, &v, prec);
        normalize(&mut y, prec);
        let overlap: f64 = y.iter().zip(guess).map(|(a, &b)| a.to_f64() * b).sum();
        if overlap < 0.0 {
            for x in y.iter_mut() {
                x.neg_assign();
            }
        }
        v = y;
    }
    let sigma = rayleigh(t, &v, prec);
    if residual_sqr(t, &sigma, &v, prec) <= tol_sqr {
        Ok((sigma, v))
    } else {
        Err(Error::NoConvergence {
            index: 0,
            iterations: MAX_ITER,
        })
    }
}

/// Final-stage levels of one sector with their weights.
#[derive(Debug, Clone)]
pub struct PreciseSector {
    pub energies: Vec<Float>,
    pub weights: Vec<Float>,
}

/// `|⟨E_n^fin| e^{−iH_int τ} |top of H_ini⟩|²` times the sector weight.
fn sector_weights(protocol: &Protocol, parity: Parity, tau_int: f64, prec: u32) -> Result<PreciseSector> {
    let share = match parity {
        Parity::Even => protocol.spec.p,
        Parity::Odd => 1.0 - protocol.spec.p,
    };
    fn stage(eig: &EigenSystem, parity: Parity, prec: u32) -> (Tridiag, &SectorEigen) {
        (sector_tridiag(&eig.params, parity, prec), eig.sector(parity))
    }

    let (t_ini, s_ini) = stage(&protocol.ini, parity, prec);
    let top = s_ini.dim() - 1;
    let (_, u) = refine(&t_ini, s_ini.vectors.column(top).as_slice(), prec)?;

    let n = u.len();
    let tau = Float::with_val(prec, tau_int);
    let (t_int, s_int) = stage(&protocol.int, parity, prec);
    let zero_vec = || (vec![Float::new(prec); n], vec![Float::new(prec); n]);
    let add = |mut acc: (Vec<Float>, Vec<Float>), other: (Vec<Float>, Vec<Float>)| {
        for (a, b) in acc.0.iter_mut().zip(other.0) {
            *a += b;
        }
        for (a, b) in acc.1.iter_mut().zip(other.1) {
            *a += b;
        }
        acc
    };
    // ψ(τ) = Σ_k v_k e^{−iE_k τ} (v_k · u), accumulated as real and imaginary parts.
    let psi = (0..s_int.dim())
        .into_par_iter()
        .try_fold(zero_vec, |mut acc, k| -> Result<_> {
            let (e, v) = refine(&t_int, s_int.vectors.column(k).as_slice(), prec)?;
            let a = dot(&v, &u, prec);
            let phase = Float::with_val(prec, &e * &tau);
            let (mut s, mut c) = (Float::new(prec), Float::new(prec));
            (&mut s, &mut c).assign(phase.sin_cos_ref());
            let re = Float::with_val(prec, &c * &a);
            let im = -Float::with_val(prec, &s * &a);
            let mut tmp = Float::new(prec);
            for (i, x) in v.iter().enumerate() {
                tmp.assign(x * &re);
                acc.0[i] += &tmp;
                tmp.assign(x * &im);
                acc.1[i] += &tmp;
            }
            Ok(acc)
        })
        .try_reduce(zero_vec, |a, b| Ok(add(a, b)))?;

    let (t_fin, s_fin) = stage(&protocol.fin, parity, prec);
    let share = Float::with_val(prec, share);
    let levels: Vec<(Float, Float)> = (0..s_fin.dim())
        .into_par_iter()
        .map(|k| -> Result<_> {
            let (e, v) = refine(&t_fin, s_fin.vectors.column(k).as_slice(), prec)?;
            let re = dot(&v, &psi.0, prec);
            let im = dot(&v, &psi.1, prec);
            let w = (Float::with_val(prec, re.square_ref()) + Float::with_val(prec, im.square_ref())) * &share;
            Ok((e, w))
        })
        .collect::<Result<_>>()?;
    let (energies, weights) = levels.into_iter().unzip();
    Ok(PreciseSector { energies, weights })
}

/// Return probabilities on a uniform grid, with their logarithms.
#[derive(Debug, Clone, PartialEq)]
pub struct PreciseReturn {
    pub sp: Vec<f64>,
    pub pprp_plus: Vec<f64>,
    pub pprp_minus: Vec<f64>,
    pub ln_sp: Vec<f64>,
    pub ln_pprp: Vec<f64>,
    /// Sample indices whose probability is below what the working precision
    /// resolves.
    pub unresolved: Vec<usize>,
    pub bits: u32,
}

/// `SP(t)` and `𝓛±(t)` after a quench at `tau_int`, evaluated with `bits`
/// of working precision. `times` must be uniform.
pub fn precise_return(protocol: &Protocol, tau_int: f64, times: &[f64], bits: u32) -> Result<PreciseReturn> {
    if bits < 53 {
        return Err(invalid("bits", "must be at least 53"));
    }
    if times.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: times.len(),
        });
    }
    let nt = times.len();
    let t0 = times[0];
    let dt = (times[nt - 1] - t0) / (nt - 1) as f64;
    let tol = 1e-12 * times[nt - 1].abs().max(t0.abs()).max(1.0);
    if !(dt > 0.0) || times.iter().enumerate().any(|(i, &t)| (t - (t0 + i as f64 * dt)).abs() > tol) {
        return Err(Error::NonUniformGrid);
    }
    let prec = bits;
    let (plus, minus) = rayon::join(
        || sector_weights(protocol, Parity::Even, tau_int, prec),
        || sector_weights(protocol, Parity::Odd, tau_int, prec),
    );
    let (plus, minus) = (plus?, minus?);

    // Levels below the resolution floor cannot change the sums.
    let floor = Float::with_val(prec, 1u32) >> (prec as i32);
    let keep = |s: &PreciseSector| -> Vec<(Float, Float)> {
        s.energies
            .iter()
            .zip(&s.weights)
            .filter(|(_, w)| **w > floor)
            .map(|(e, w)| (e.clone(), w.clone()))
            .collect()
    };
    let (lp, lm) = (keep(&plus), keep(&minus));

    // Samples are taken as exact multiples of the step from the first time.
    let step = Float::with_val(prec, dt);
    let start = Float::with_val(prec, t0);
    const RESEED: usize = 256;
    let amplitudes = |levels: &[(Float, Float)]| -> Vec<(Float, Float)> {
        let phasor = |t: &Float| -> Vec<(Float, Float)> {
            levels
                .iter()
                .map(|(e, _)| {
                    let (mut s, mut c) = (Float::new(prec), Float::new(prec));
                    (&mut s, &mut c).assign(Float::with_val(prec, e * t).sin_cos_ref());
                    (c, -s)
                })
                .collect()
        };
        let rotors = phasor(&step);
        let mut z = Vec::new();
        let mut out = Vec::with_capacity(nt);
        let (mut a, mut b, mut tmp) = (Float::new(prec), Float::new(prec), Float::new(prec));
        for i in 0..nt {
            if i % RESEED == 0 {
                let t = Float::with_val(prec, &step * Float::with_val(prec, i as u64)) + &start;
                z = phasor(&t);
            } else {
                for (zk, rk) in z.iter_mut().zip(&rotors) {
                    // (x + iy)(c + is)
                    a.assign(&zk.0 * &rk.0);
                    tmp.assign(&zk.1 * &rk.1);
                    a -= &tmp;
                    b.assign(&zk.0 * &rk.1);
                    tmp.assign(&zk.1 * &rk.0);
                    b += &tmp;
                    zk.0.assign(&a);
                    zk.1.assign(&b);
                }
            }
            let (mut re, mut im) = (Float::new(prec), Float::new(prec));
            for ((_, w), zk) in levels.iter().zip(&z) {
                tmp.assign(w * &zk.0);
                re += &tmp;
                tmp.assign(w * &zk.1);
                im += &tmp;
            }
            out.push((re, im));
        }
        out
    };
    let (ap, am) = rayon::join(|| amplitudes(&lp), || amplitudes(&lm));

    // Absolute accuracy of an amplitude is a few hundred ulps of its weight.
    let resolution = (Float::with_val(prec, 1u32) >> (prec as i32 - 24)).to_f64();
    let resolution_sqr = Float::with_val(prec, resolution * resolution);
    let sq = |x: &(Float, Float)| Float::with_val(prec, x.0.square_ref()) + Float::with_val(prec, x.1.square_ref());
    let log = |x: &Float| -> f64 {
        if x.is_zero() {
            f64::NEG_INFINITY
        } else {
            Float::with_val(prec, x.ln_ref()).to_f64()
        }
    };
    let mut out = PreciseReturn {
        sp: Vec::with_capacity(nt),
        pprp_plus: Vec::with_capacity(nt),
        pprp_minus: Vec::with_capacity(nt),
        ln_sp: Vec::with_capacity(nt),
        ln_pprp: Vec::with_capacity(nt),
        unresolved: Vec::new(),
        bits,
    };
    for i in 0..nt {
        let lplus = sq(&ap[i]);
        let lminus = sq(&am[i]);
        let total = Float::with_val(prec, &lplus + &lminus);
        let sum = (
            Float::with_val(prec, &ap[i].0 + &am[i].0),
            Float::with_val(prec, &ap[i].1 + &am[i].1),
        );
        let sp = sq(&sum);
        if sp < resolution_sqr || total < resolution_sqr {
            out.unresolved.push(i);
        }
        out.sp.push(sp.to_f64());
        out.pprp_plus.push(lplus.to_f64());
        out.pprp_minus.push(lminus.to_f64());
        out.ln_sp.push(log(&sp));
        out.ln_pprp.push(log(&total));
    }
    Ok(out)
}
