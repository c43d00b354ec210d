//! Potential energy curves of the neutral E state and of the ion ground
//! state, plus the centrifugal and photon-dressing terms that turn them into
//! per-channel effective potentials.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{cm_to_hartree, li2_reduced_mass, nm_to_cm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveLabel {
    EState,
    Ion,
}

impl fmt::Display for CurveLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurveLabel::EState => write!(f, "E"),
            CurveLabel::Ion => write!(f, "ion"),
        }
    }
}

/// Morse oscillator `T_e - D_e + D_e (1 - exp(-a (R - R_e)))²`, atomic units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Morse {
    pub de: f64,
    pub a: f64,
    pub re: f64,
    pub te: f64,
}

impl Morse {
    /// Builds the Morse curve with harmonic wavenumber `omega_cm`, first
    /// anharmonic constant `omega_x_cm` and well bottom at `bottom_cm`.
    pub fn from_spectroscopic(mass: f64, omega_cm: f64, omega_x_cm: f64, re: f64, bottom_cm: f64) -> Self {
        let omega = cm_to_hartree(omega_cm);
        let omega_x = cm_to_hartree(omega_x_cm);
        let de = omega * omega / (4.0 * omega_x);
        Morse {
            de,
            a: (2.0 * mass * omega_x).sqrt(),
            re,
            te: cm_to_hartree(bottom_cm) + de,
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        let x = 1.0 - (-self.a * (r - self.re)).exp();
        self.te - self.de + self.de * x * x
    }

    pub fn harmonic_frequency(&self, mass: f64) -> f64 {
        self.a * (2.0 * self.de / mass).sqrt()
    }

    /// Exact Morse level `v` (rotationless), relative to the well bottom.
    pub fn level(&self, mass: f64, v: usize) -> f64 {
        let w = self.harmonic_frequency(mass);
        let x = w * (v as f64 + 0.5);
        x - x * x / (4.0 * self.de)
    }
}

/// Natural cubic spline through tabulated nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    y2: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 3 || y.len() != n {
            return Err(Error::InvalidArgument(
                "spline needs at least three (x, y) pairs".into(),
            ));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(
                "spline abscissae must be strictly increasing".into(),
            ));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("spline ordinates must be finite".into()));
        }
        // tridiagonal solve for second derivatives, natural end conditions
        let mut y2 = vec![0.0; n];
        let mut u = vec![0.0; n];
        for i in 1..n - 1 {
            let sig = (x[i] - x[i - 1]) / (x[i + 1] - x[i - 1]);
            let p = sig * y2[i - 1] + 2.0;
            y2[i] = (sig - 1.0) / p;
            let d = (y[i + 1] - y[i]) / (x[i + 1] - x[i]) - (y[i] - y[i - 1]) / (x[i] - x[i - 1]);
            u[i] = (6.0 * d / (x[i + 1] - x[i - 1]) - sig * u[i - 1]) / p;
        }
        y2[n - 1] = 0.0;
        for k in (0..n - 1).rev() {
            y2[k] = y2[k] * y2[k + 1] + u[k];
        }
        Ok(CubicSpline { x, y, y2 })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    pub fn value(&self, r: f64) -> f64 {
        let n = self.x.len();
        let hi = self.x.partition_point(|&xi| xi < r).clamp(1, n - 1);
        let lo = hi - 1;
        let h = self.x[hi] - self.x[lo];
        let a = (self.x[hi] - r) / h;
        let b = (r - self.x[lo]) / h;
        a * self.y[lo]
            + b * self.y[hi]
            + ((a * a * a - a) * self.y2[lo] + (b * b * b - b) * self.y2[hi]) * h * h / 6.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Representation {
    Morse(Morse),
    Tabulated(CubicSpline),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialCurve {
    pub label: CurveLabel,
    pub repr: Representation,
}

impl PotentialCurve {
    pub fn morse(label: CurveLabel, morse: Morse) -> Self {
        PotentialCurve {
            label,
            repr: Representation::Morse(morse),
        }
    }

    pub fn tabulated(label: CurveLabel, r: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        Ok(PotentialCurve {
            label,
            repr: Representation::Tabulated(CubicSpline::new(r, v)?),
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        match &self.repr {
            Representation::Morse(_) => (0.0, f64::INFINITY),
            Representation::Tabulated(s) => s.domain(),
        }
    }

    pub fn value(&self, r: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        if !(r >= lo && r <= hi) {
            return Err(Error::OutOfDomain { r, lo, hi });
        }
        Ok(match &self.repr {
            Representation::Morse(m) => m.value(r),
            Representation::Tabulated(s) => s.value(r),
        })
    }

    /// Reads a two-column text file (R in bohr, V in hartree); `#` starts a
    /// comment line, blank lines are ignored.
    pub fn load_tabulated(label: CurveLabel, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let parse_err = |line: usize, msg: &str| Error::Parse {
            path: path.to_path_buf(),
            message: format!("line {line}: {msg}"),
        };
        let mut r = Vec::new();
        let mut v = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split_whitespace();
            let (Some(a), Some(b)) = (cols.next(), cols.next()) else {
                return Err(parse_err(i + 1, "expected two columns"));
            };
            if cols.next().is_some() {
                return Err(parse_err(i + 1, "expected two columns"));
            }
            r.push(a.parse::<f64>().map_err(|e| parse_err(i + 1, &e.to_string()))?);
            v.push(b.parse::<f64>().map_err(|e| parse_err(i + 1, &e.to_string()))?);
        }
        Self::tabulated(label, r, v).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Centrifugal energy `N(N+1) / 2μR²`.
pub fn centrifugal(n: u32, mass: f64, r: f64) -> f64 {
    (n as f64) * (n as f64 + 1.0) / (2.0 * mass * r * r)
}

/// Effective potential of rotational level `N` on the points `r`, shifted by
/// `shift` (the photon dressing `-ω` for ion channels, zero otherwise).
pub fn evaluate(curve: &PotentialCurve, r: &[f64], n: u32, mass: f64, shift: f64) -> Result<Vec<f64>> {
    if r.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("R grid must be strictly increasing".into()));
    }
    r.iter()
        .map(|&ri| Ok(curve.value(ri)? + centrifugal(n, mass, ri) + shift))
        .collect()
}

/// A diatomic: reduced mass plus the two electronic curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MolecularModel {
    pub reduced_mass: f64,
    pub e_state: PotentialCurve,
    pub ion: PotentialCurve,
}

/// Spectroscopic constants of the bundled model curves (cm⁻¹, bohr).
pub mod li2_model {
    pub const E_OMEGA: f64 = 250.0;
    pub const E_OMEGA_X: f64 = 12.0;
    pub const ION_OMEGA: f64 = 276.0;
    pub const ION_OMEGA_X: f64 = 10.0;
    pub const RE: f64 = 5.86;
    /// Photoelectron energy of the `v_E = v⁺ = 0`, `N⁺ = N_E` line at 705 nm.
    pub const EPS_AT_705NM: f64 = 55.0;
}

/// Bundled Morse stand-ins for the Li₂ E(¹Σg⁺) and Li₂⁺ X(²Σg⁺) curves.
///
/// Both wells share R_e = 5.86 bohr (B_rot ≈ 0.5 cm⁻¹ for both states). The
/// E state is softer and more anharmonic than the ion (ω = 250 vs 276 cm⁻¹,
/// ωx = 12 vs 10 cm⁻¹), so the `v⁺ = v_E` photoelectron bands are spaced by
/// 30, 34, 38, 42 cm⁻¹ and the spacing grows with v. The ion well bottom is
/// placed so that 705 nm gives ε ≈ 55 cm⁻¹ from `v_E = 0`.
pub fn load_model_li2() -> MolecularModel {
    use li2_model::*;
    let mass = li2_reduced_mass();
    let g0 = |w: f64, wx: f64| 0.5 * w - 0.25 * wx;
    let ion_bottom = nm_to_cm(705.0) - EPS_AT_705NM + g0(E_OMEGA, E_OMEGA_X) - g0(ION_OMEGA, ION_OMEGA_X);
    MolecularModel {
        reduced_mass: mass,
        e_state: PotentialCurve::morse(
            CurveLabel::EState,
            Morse::from_spectroscopic(mass, E_OMEGA, E_OMEGA_X, RE, 0.0),
        ),
        ion: PotentialCurve::morse(
            CurveLabel::Ion,
            Morse::from_spectroscopic(mass, ION_OMEGA, ION_OMEGA_X, RE, ion_bottom),
        ),
    }
}
