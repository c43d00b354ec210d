//! Angular-momentum algebra: 3-j symbols, the preparation amplitudes of the
//! two-photon launch, the Fano frame transformation between the molecular
//! (Hund's case b) and laboratory (case d) electron channels, and the
//! bound-continuum rotational coupling elements.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const MAX_FACTORIAL: usize = 170;

fn factorials() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(MAX_FACTORIAL + 1);
        let mut acc = 1.0_f64;
        t.push(acc);
        for k in 1..=MAX_FACTORIAL {
            acc *= k as f64;
            t.push(acc);
        }
        t
    })
}

fn fact(n: i32) -> f64 {
    factorials()[n as usize]
}

fn parity_sign(k: i32) -> f64 {
    if k.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Wigner 3-j symbol for integer arguments, via the Racah single-sum formula.
///
/// Any combination violating the projection sum, the triangle rule or
/// `|m| <= j` evaluates to exactly zero.
pub fn wigner3j(j1: i32, j2: i32, j3: i32, m1: i32, m2: i32, m3: i32) -> f64 {
    if j1 < 0 || j2 < 0 || j3 < 0 {
        return 0.0;
    }
    if m1 + m2 + m3 != 0 || m1.abs() > j1 || m2.abs() > j2 || m3.abs() > j3 {
        return 0.0;
    }
    if j3 < (j1 - j2).abs() || j3 > j1 + j2 {
        return 0.0;
    }
    if j1 + j2 + j3 + 1 > MAX_FACTORIAL as i32 {
        return f64::NAN;
    }
    // (j1 j2 j3; 0 0 0) vanishes for odd J
    if m1 == 0 && m2 == 0 && (j1 + j2 + j3) % 2 == 1 {
        return 0.0;
    }

    let triangle = fact(j1 + j2 - j3) * fact(j1 - j2 + j3) * fact(-j1 + j2 + j3)
        / fact(j1 + j2 + j3 + 1);
    let projections = fact(j1 + m1)
        * fact(j1 - m1)
        * fact(j2 + m2)
        * fact(j2 - m2)
        * fact(j3 + m3)
        * fact(j3 - m3);

    let k_min = 0.max(j2 - j3 - m1).max(j1 - j3 + m2);
    let k_max = (j1 + j2 - j3).min(j1 - m1).min(j2 + m2);
    let mut sum = 0.0;
    let mut comp = 0.0;
    for k in k_min..=k_max {
        let denom = fact(k)
            * fact(j3 - j2 + k + m1)
            * fact(j3 - j1 + k - m2)
            * fact(j1 + j2 - j3 - k)
            * fact(j1 - k - m1)
            * fact(j2 - k + m2);
        // Kahan-compensated alternating sum
        let term = parity_sign(k) / denom - comp;
        let t = sum + term;
        comp = (t - sum) - term;
        sum = t;
    }
    parity_sign(j1 - j2 - m3) * (triangle * projections).sqrt() * sum
}

/// Amplitude `c_{N_E,M}` with which the two-step X → A → E excitation
/// populates the rotational level `N_E` from `(N_X, M)` through `N_A`.
pub fn prep_coefficient(n_x: u32, n_a: u32, n_e: u32, m: i32) -> f64 {
    let (nx, na, ne) = (n_x as i32, n_a as i32, n_e as i32);
    let degeneracy = ((2 * ne + 1) as f64).sqrt() * (2 * na + 1) as f64 * ((2 * nx + 1) as f64).sqrt();
    degeneracy
        * wigner3j(na, 1, nx, m, 0, -m)
        * wigner3j(na, 1, nx, 0, 0, 0)
        * wigner3j(ne, 1, na, m, 0, -m)
        * wigner3j(ne, 1, na, 0, 0, 0)
}

/// Element `⟨N' l' | N Λ⟩` of the frame transformation; with `l' = 1`,
/// `N' = N_E` it is the Hönl-London factor of the bound state.
pub fn frame_transform(n_prime: u32, l_prime: u32, n: u32, lambda: u32) -> f64 {
    let (np, lp, n, lam) = (n_prime as i32, l_prime as i32, n as i32, lambda as i32);
    let kron: f64 = if lam == 0 { 1.0 } else { 2.0 };
    parity_sign(np + lam + 1)
        * kron.sqrt()
        * ((2 * np + 1) as f64).sqrt()
        * wigner3j(lp, n, np, -lam, lam, 0)
}

/// The frame transformation is unitary only between states of the same
/// parity, `l + N + N'` even.
fn parity_allowed(l: u32, n: u32, n_prime: u32) -> bool {
    (l + n + n_prime) % 2 == 0
}

/// Short-range quantum defects of the σ and π p-continua.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumDefects {
    pub mu_sigma: f64,
    pub mu_pi: f64,
}

impl QuantumDefects {
    pub fn li2() -> Self {
        QuantumDefects {
            mu_sigma: 0.001,
            mu_pi: -0.287,
        }
    }

    pub fn isotropic(mu: f64) -> Self {
        QuantumDefects {
            mu_sigma: mu,
            mu_pi: mu,
        }
    }

    pub fn is_isotropic(&self) -> bool {
        self.mu_sigma == self.mu_pi
    }

    pub fn for_lambda(&self, lambda: u32) -> f64 {
        if lambda == 0 {
            self.mu_sigma
        } else {
            self.mu_pi
        }
    }
}

impl Default for QuantumDefects {
    fn default() -> Self {
        Self::li2()
    }
}

/// Molecular-frame source term `{N_E | N | N⁺ l}`.
///
/// Only `Λ = 0, 1` contribute (Σ ion core, one-photon dipole). The dipole
/// amplitude for each Λ is `(-1)^Λ (l 1 0; -Λ Λ 0) d`; the `(-1)^Λ` makes the
/// σ and π amplitudes equal for an s-type Rydberg electron, so that equal
/// quantum defects reduce the transformation to closure (no rotational
/// angular-momentum exchange).
pub fn source_term(
    n_e: u32,
    n: u32,
    n_plus: u32,
    l: u32,
    defects: &QuantumDefects,
    dipole: f64,
) -> Complex64 {
    if !parity_allowed(l, n, n_plus) || !parity_allowed(1, n, n_e) {
        return Complex64::new(0.0, 0.0);
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for lambda in 0..=1u32 {
        let lam = lambda as i32;
        let d = parity_sign(lam) * wigner3j(l as i32, 1, 0, -lam, lam, 0) * dipole;
        let phase = Complex64::from_polar(1.0, PI * defects.for_lambda(lambda));
        acc += phase
            * (frame_transform(n_plus, l, n, lambda) * d * frame_transform(n_e, 1, n, lambda));
    }
    acc
}

/// Rotational part of the dipole coupling between the bound channel
/// `(N_E, M)` and the ion channel `(N⁺, l, m)` with ion projection `M - m`.
pub fn coupling_element(
    n_e: u32,
    m_total: i32,
    n_plus: u32,
    l: u32,
    m: i32,
    defects: &QuantumDefects,
    dipole: f64,
) -> Complex64 {
    let (ne, np, li) = (n_e as i32, n_plus as i32, l as i32);
    if (m_total - m).abs() > np || m.abs() > li || m_total.abs() > ne {
        return Complex64::new(0.0, 0.0);
    }
    let n_lo = (np - li).abs().max((ne - 1).abs());
    let n_hi = (np + li).min(ne + 1);
    let mut acc = Complex64::new(0.0, 0.0);
    for n in n_lo..=n_hi {
        let angular = (2 * n + 1) as f64
            * wigner3j(np, li, n, m_total - m, m, -m_total)
            * wigner3j(ne, 1, n, m_total, 0, -m_total);
        if angular != 0.0 {
            acc += angular * source_term(n_e, n as u32, n_plus, l, defects, dipole);
        }
    }
    acc
}

/// Ion channel angular labels `(N⁺, l, m)`; the ion projection is `M - m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IonAngular {
    pub n_plus: u32,
    pub l: u32,
    pub m: i32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingElement {
    pub n_e: u32,
    pub m_total: i32,
    pub ion: IonAngular,
    pub value: Complex64,
}

/// Dense table of coupling elements for one value of `M`, rows indexed by the
/// bound rotational levels and columns by the ion angular channels.
#[derive(Debug, Clone)]
pub struct CouplingTable {
    pub m_total: i32,
    pub bound: Vec<u32>,
    pub ions: Vec<IonAngular>,
    values: Vec<Complex64>,
}

impl CouplingTable {
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.values[row * self.ions.len() + col]
    }

    pub fn element(&self, row: usize, col: usize) -> CouplingElement {
        CouplingElement {
            n_e: self.bound[row],
            m_total: self.m_total,
            ion: self.ions[col],
            value: self.get(row, col),
        }
    }

    pub fn lookup(&self, n_e: u32, ion: IonAngular) -> Option<Complex64> {
        let row = self.bound.iter().position(|&b| b == n_e)?;
        let col = self.ions.iter().position(|&c| c == ion)?;
        Some(self.get(row, col))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn elements(&self) -> impl Iterator<Item = CouplingElement> + '_ {
        (0..self.bound.len()).flat_map(move |r| (0..self.ions.len()).map(move |c| self.element(r, c)))
    }
}

pub fn coupling_matrix(
    bound: &[u32],
    ions: &[IonAngular],
    m_total: i32,
    defects: &QuantumDefects,
    dipole: f64,
) -> CouplingTable {
    let mut values = Vec::with_capacity(bound.len() * ions.len());
    for &n_e in bound {
        for ion in ions {
            values.push(coupling_element(n_e, m_total, ion.n_plus, ion.l, ion.m, defects, dipole));
        }
    }
    CouplingTable {
        m_total,
        bound: bound.to_vec(),
        ions: ions.to_vec(),
        values,
    }
}

/// Ion channels that can be reached by one-photon ionization (`l = 1`) from
/// any of the bound levels with projection `M`: `N⁺ ∈ N_E + {-2, 0, 2}`,
/// `|M - m| <= N⁺`. The set does not depend on the quantum defects.
pub fn reachable_ion_channels(bound: &[u32], m_total: i32) -> Vec<IonAngular> {
    let mut out = Vec::new();
    let l = 1u32;
    for &n_e in bound {
        for dn in [-2i32, 0, 2] {
            let np = n_e as i32 + dn;
            if np < 0 {
                continue;
            }
            for m in -(l as i32)..=(l as i32) {
                if (m_total - m).abs() <= np {
                    out.push(IonAngular {
                        n_plus: np as u32,
                        l,
                        m,
                    });
                }
            }
        }
    }
    out.sort();
    out.dedup();
    out
}
