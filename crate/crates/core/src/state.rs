use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operator::{Parity, SectorVec};

/// Wavefunction over the magnetic sublevels `k = j + m = 0, ..., 2j`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    two_j: u32,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn new(two_j: u32, amps: Vec<Complex64>) -> Result<Self> {
        let dim = two_j as usize + 1;
        if amps.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: amps.len(),
            });
        }
        Ok(Self { two_j, amps })
    }

    /// The sublevel `|j, m⟩` with `j + m = k`.
    pub fn basis(two_j: u32, k: usize) -> Self {
        let mut amps = vec![Complex64::new(0.0, 0.0); two_j as usize + 1];
        amps[k] = Complex64::new(1.0, 0.0);
        Self { two_j, amps }
    }

    pub fn from_sectors(two_j: u32, sectors: &SectorVec) -> Result<Self> {
        let dim = two_j as usize + 1;
        let (dp, dm) = (dim.div_ceil(2), dim / 2);
        if sectors.plus.len() != dp || sectors.minus.len() != dm {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: sectors.plus.len() + sectors.minus.len(),
            });
        }
        let amps = (0..dim)
            .map(|k| match Parity::of_level(k) {
                Parity::Even => sectors.plus[k / 2],
                Parity::Odd => sectors.minus[k / 2],
            })
            .collect();
        Ok(Self { two_j, amps })
    }

    pub fn two_j(&self) -> u32 {
        self.two_j
    }

    pub fn j(&self) -> f64 {
        f64::from(self.two_j) / 2.0
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn sectors(&self) -> SectorVec {
        let plus = self.amps.iter().step_by(2).copied().collect();
        let minus = self.amps.iter().skip(1).step_by(2).copied().collect();
        SectorVec { plus, minus }
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn parity_expectation(&self) -> f64 {
        self.amps
            .iter()
            .enumerate()
            .map(|(k, c)| Parity::of_level(k).sign() * c.norm_sqr())
            .sum()
    }

    /// `(⟨Jx⟩, ⟨Jy⟩, ⟨Jz⟩)` from the ladder structure, in `O(2j)`.
    pub fn spin_expectation(&self) -> [f64; 3] {
        let j = self.j();
        let mut jplus = Complex64::new(0.0, 0.0);
        let mut jz = 0.0;
        for (k, c) in self.amps.iter().enumerate() {
            jz += (k as f64 - j) * c.norm_sqr();
            if k < self.two_j as usize {
                jplus += self.amps[k + 1].conj() * c * ladder(self.two_j, k);
            }
        }
        [jplus.re, jplus.im, jz]
    }
}

/// `⟨k+1|J+|k⟩ = sqrt((2j - k)(k + 1))`.
pub(crate) fn ladder(two_j: u32, k: usize) -> f64 {
    (((two_j as usize - k) * (k + 1)) as f64).sqrt()
}
