//! Unit conversions. Everything inside the crate is in atomic units
//! (hartree, bohr, electron mass, ħ = 1); the constants below are only used
//! at configuration and output boundaries.

/// Hartree per wavenumber (cm⁻¹).
pub const HARTREE_PER_CM: f64 = 4.556_335_252_912e-6;

/// Atomic time units per femtosecond.
pub const AU_TIME_PER_FS: f64 = 41.341_373_335_18;

/// Atomic time units per picosecond.
pub const AU_TIME_PER_PS: f64 = 1.0e3 * AU_TIME_PER_FS;

/// Electron masses per unified atomic mass unit.
pub const ME_PER_AMU: f64 = 1_822.888_486_209;

/// Atomic mass of ⁷Li in unified atomic mass units.
pub const LI7_MASS_AMU: f64 = 7.016_003_436_6;

/// Reduced mass of ⁷Li₂ in electron masses.
pub fn li2_reduced_mass() -> f64 {
    0.5 * LI7_MASS_AMU * ME_PER_AMU
}

pub fn cm_to_hartree(cm: f64) -> f64 {
    cm * HARTREE_PER_CM
}

pub fn hartree_to_cm(e: f64) -> f64 {
    e / HARTREE_PER_CM
}

pub fn ps_to_au(ps: f64) -> f64 {
    ps * AU_TIME_PER_PS
}

pub fn fs_to_au(fs: f64) -> f64 {
    fs * AU_TIME_PER_FS
}

/// Vacuum wavelength in nm to wavenumber in cm⁻¹.
pub fn nm_to_cm(nm: f64) -> f64 {
    1.0e7 / nm
}

pub fn cm_to_nm(cm: f64) -> f64 {
    1.0e7 / cm
}
