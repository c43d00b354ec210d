use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::units::HARTREE_PER_CM;

/// Uniform internuclear-distance grid shared by every channel.
///
/// Both end points are grid points; the FFT treats the grid as periodic with
/// period `n * dr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub r_min: f64,
    pub r_max: f64,
    pub n: usize,
}

impl Default for RadialGrid {
    fn default() -> Self {
        RadialGrid {
            r_min: 3.5,
            r_max: 14.0,
            n: 128,
        }
    }
}

impl RadialGrid {
    pub fn new(r_min: f64, r_max: f64, n: usize) -> Result<Self> {
        if !(r_max > r_min) || n < 4 || !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "radial grid needs r_max > r_min and a power-of-two size, got [{r_min}, {r_max}] with n={n}"
            )));
        }
        Ok(RadialGrid { r_min, r_max, n })
    }

    pub fn dr(&self) -> f64 {
        (self.r_max - self.r_min) / (self.n - 1) as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        self.r_min + i as f64 * self.dr()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let n = self.n as i64;
        let dk = 2.0 * std::f64::consts::PI / (self.n as f64 * self.dr());
        (0..n)
            .map(|j| {
                let j = if j < n / 2 { j } else { j - n };
                j as f64 * dk
            })
            .collect()
    }

    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for r in self.points() {
            h.update(r.to_le_bytes());
        }
        hex_digest(h)
    }
}

/// Discretized photoelectron energies: `n` bin centres from `eps_min_cm` to
/// `eps_max_cm` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyGrid {
    pub eps_min_cm: f64,
    pub eps_max_cm: f64,
    pub n: usize,
}

impl Default for EnergyGrid {
    fn default() -> Self {
        EnergyGrid {
            eps_min_cm: 10.0,
            eps_max_cm: 190.0,
            n: 150,
        }
    }
}

impl EnergyGrid {
    pub fn new(eps_min_cm: f64, eps_max_cm: f64, n: usize) -> Result<Self> {
        if !(eps_max_cm > eps_min_cm) || n < 2 {
            return Err(Error::InvalidArgument(format!(
                "energy grid needs eps_max > eps_min and n >= 2, got [{eps_min_cm}, {eps_max_cm}] with n={n}"
            )));
        }
        Ok(EnergyGrid {
            eps_min_cm,
            eps_max_cm,
            n,
        })
    }

    pub fn width_cm(&self) -> f64 {
        (self.eps_max_cm - self.eps_min_cm) / (self.n - 1) as f64
    }

    pub fn width(&self) -> f64 {
        self.width_cm() * HARTREE_PER_CM
    }

    pub fn center_cm(&self, j: usize) -> f64 {
        self.eps_min_cm + j as f64 * self.width_cm()
    }

    pub fn center(&self, j: usize) -> f64 {
        self.center_cm(j) * HARTREE_PER_CM
    }

    pub fn centers_cm(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.center_cm(j)).collect()
    }

    pub fn contains_cm(&self, eps_cm: f64) -> bool {
        eps_cm >= self.eps_min_cm && eps_cm <= self.eps_max_cm
    }

    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for e in self.centers_cm() {
            h.update(e.to_le_bytes());
        }
        hex_digest(h)
    }
}

fn hex_digest(h: Sha256) -> String {
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
