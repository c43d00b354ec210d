//! Rovibrational levels on the shared radial grid.
//!
//! The Hamiltonian is the Fourier-grid one: its kinetic matrix is built from
//! the same FFT wavenumbers the propagator uses, so eigenstates found here are
//! stationary under field-free split-operator propagation up to the
//! splitting error.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::potentials::{evaluate, CurveLabel, MolecularModel, PotentialCurve};
use crate::units::hartree_to_cm;

#[derive(Debug, Clone, PartialEq)]
pub struct RovibLevel {
    pub v: usize,
    pub n: u32,
    /// Total energy in hartree.
    pub energy: f64,
    /// Real wavefunction normalized as `Σ χ_i² dR = 1`.
    pub wavefunction: Vec<f64>,
    pub grid: RadialGrid,
}

impl RovibLevel {
    pub fn nodes(&self) -> usize {
        let max = self.wavefunction.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let significant: Vec<f64> = self
            .wavefunction
            .iter()
            .copied()
            .filter(|x| x.abs() > 1e-6 * max)
            .collect();
        significant.windows(2).filter(|w| w[0] * w[1] < 0.0).count()
    }
}

/// Kinetic energy matrix `F⁻¹ diag(k²/2μ) F` on the periodic grid. It is
/// circulant and real.
pub fn kinetic_matrix(grid: &RadialGrid, mass: f64) -> DMatrix<f64> {
    let n = grid.n;
    let dr = grid.dr();
    let k = grid.wavenumbers();
    let row: Vec<f64> = (0..n)
        .map(|d| {
            let x = d as f64 * dr;
            k.iter().map(|&kj| kj * kj * (kj * x).cos()).sum::<f64>() / (2.0 * mass * n as f64)
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| row[(i as isize - j as isize).unsigned_abs()])
}

pub fn hamiltonian(grid: &RadialGrid, mass: f64, potential: &[f64]) -> DMatrix<f64> {
    let mut h = kinetic_matrix(grid, mass);
    for (i, v) in potential.iter().enumerate() {
        h[(i, i)] += v;
    }
    h
}

/// Lowest `n_levels` eigenpairs of the radial Hamiltonian for potential
/// samples `potential` on `grid`.
///
/// A level is counted as bound when it lies below both edge values of the
/// potential; asking for more than that is an error.
pub fn solve_potential(
    grid: &RadialGrid,
    mass: f64,
    potential: &[f64],
    n: u32,
    n_levels: usize,
) -> Result<Vec<RovibLevel>> {
    if potential.len() != grid.n {
        return Err(Error::GridMismatch(format!(
            "potential has {} samples, grid has {}",
            potential.len(),
            grid.n
        )));
    }
    if n_levels == 0 {
        return Ok(Vec::new());
    }
    let eig = SymmetricEigen::new(hamiltonian(grid, mass, potential));
    let mut order: Vec<usize> = (0..grid.n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let threshold = potential[0].min(potential[grid.n - 1]);
    let found = order
        .iter()
        .take_while(|&&i| eig.eigenvalues[i] < threshold)
        .count();
    if n_levels > found {
        return Err(Error::TooFewBoundStates {
            requested: n_levels,
            found,
        });
    }

    let dr = grid.dr();
    Ok(order
        .iter()
        .take(n_levels)
        .enumerate()
        .map(|(v, &col)| {
            let mut chi: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
            let norm = (chi.iter().map(|x| x * x).sum::<f64>() * dr).sqrt();
            let max = chi.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            // inner lobe positive
            let first = chi.iter().position(|x| x.abs() > 0.1 * max).unwrap_or(0);
            let sign = chi[first].signum() / norm;
            chi.iter_mut().for_each(|x| *x *= sign);
            RovibLevel {
                v,
                n,
                energy: eig.eigenvalues[col],
                wavefunction: chi,
                grid: *grid,
            }
        })
        .collect())
}

pub fn solve_bound(
    curve: &PotentialCurve,
    mass: f64,
    n: u32,
    n_levels: usize,
    grid: &RadialGrid,
) -> Result<Vec<RovibLevel>> {
    let v = evaluate(curve, &grid.points(), n, mass, 0.0)?;
    solve_potential(grid, mass, &v, n, n_levels)
}

/// Vibrational overlap `Σ χ⁺_i χ^E_i dR`.
pub fn franck_condon(a: &RovibLevel, b: &RovibLevel) -> Result<f64> {
    if a.grid != b.grid || a.wavefunction.len() != b.wavefunction.len() {
        return Err(Error::GridMismatch(
            "Franck-Condon overlap needs both levels on the same grid".into(),
        ));
    }
    let dr = a.grid.dr();
    Ok(a.wavefunction
        .iter()
        .zip(&b.wavefunction)
        .map(|(x, y)| x * y)
        .sum::<f64>()
        * dr)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PeakPrediction {
    /// Photoelectron energy in hartree.
    Open(f64),
    /// Channel closed; carries the (non-positive) energy balance.
    Closed(f64),
}

impl PeakPrediction {
    pub fn energy(&self) -> Option<f64> {
        match *self {
            PeakPrediction::Open(e) => Some(e),
            PeakPrediction::Closed(_) => None,
        }
    }

    pub fn energy_cm(&self) -> Option<f64> {
        self.energy().map(hartree_to_cm)
    }
}

/// Energy conservation for one photon `omega` (hartree):
/// `ε = E(v_E, N_E) + ω - E(v⁺, N⁺)`.
pub fn predict_peak(level_e: &RovibLevel, level_ion: &RovibLevel, omega: f64) -> PeakPrediction {
    let eps = level_e.energy + omega - level_ion.energy;
    if eps > 0.0 {
        PeakPrediction::Open(eps)
    } else {
        PeakPrediction::Closed(eps)
    }
}

/// Levels of both curves, computed once per `(curve, N)` and then shared
/// read-only.
#[derive(Debug, Clone)]
pub struct LevelTable {
    pub grid: RadialGrid,
    levels: BTreeMap<(u8, u32), Vec<RovibLevel>>,
}

fn curve_key(label: CurveLabel) -> u8 {
    match label {
        CurveLabel::EState => 0,
        CurveLabel::Ion => 1,
    }
}

impl LevelTable {
    /// Solves `n_levels` levels for every `N` in `rotations` on both curves.
    pub fn build(
        model: &MolecularModel,
        grid: &RadialGrid,
        rotations: &[u32],
        n_levels: usize,
    ) -> Result<Self> {
        let mut levels = BTreeMap::new();
        for curve in [&model.e_state, &model.ion] {
            for &n in rotations {
                let key = (curve_key(curve.label), n);
                if levels.contains_key(&key) {
                    continue;
                }
                levels.insert(key, solve_bound(curve, model.reduced_mass, n, n_levels, grid)?);
            }
        }
        Ok(LevelTable { grid: *grid, levels })
    }

    pub fn get(&self, label: CurveLabel, v: usize, n: u32) -> Result<&RovibLevel> {
        self.levels
            .get(&(curve_key(label), n))
            .and_then(|ls| ls.get(v))
            .ok_or(Error::MissingLevel { v, n })
    }

    pub fn levels(&self, label: CurveLabel, n: u32) -> Option<&[RovibLevel]> {
        self.levels.get(&(curve_key(label), n)).map(|v| v.as_slice())
    }
}
