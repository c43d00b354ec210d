//! Photoelectron observables computed from final wave packets.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::angmom::QuantumDefects;
use crate::boundstates::{franck_condon, predict_peak, LevelTable};
use crate::error::{Error, Result};
use crate::grid::EnergyGrid;
use crate::potentials::CurveLabel;
use crate::propagator::PulseParams;
use crate::quantumstate::{bound_levels, ChannelLabel, WavepacketState};
use crate::units::hartree_to_cm;

/// Per-band score above which a bit reads as 1.
pub const DECODE_THRESHOLD: f64 = 0.5;
/// Scores closer than this to the threshold are reported as ambiguous.
pub const DECODE_GUARD: f64 = 0.1;
/// Smallest |𝓕| accepted by the Franck-Condon renormalization.
pub const MIN_FRANCK_CONDON: f64 = 1e-6;

/// Product grid of Gauss-Legendre nodes in cos θ and uniform azimuths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngularGrid {
    pub cos_theta: Vec<f64>,
    pub cos_weights: Vec<f64>,
    pub n_phi: usize,
}

impl Default for AngularGrid {
    fn default() -> Self {
        AngularGrid::new(25, 13)
    }
}

impl AngularGrid {
    pub fn new(n_theta: usize, n_phi: usize) -> Self {
        let (cos_theta, cos_weights) = gauss_legendre(n_theta);
        AngularGrid {
            cos_theta,
            cos_weights,
            n_phi,
        }
    }

    pub fn len(&self) -> usize {
        self.cos_theta.len() * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(θ, φ, solid-angle weight)` for every direction, θ-major.
    pub fn directions(&self) -> Vec<(f64, f64, f64)> {
        let dphi = 2.0 * PI / self.n_phi as f64;
        let mut out = Vec::with_capacity(self.len());
        for (x, w) in self.cos_theta.iter().zip(&self.cos_weights) {
            for k in 0..self.n_phi {
                out.push((x.acos(), k as f64 * dphi, w * dphi));
            }
        }
        out
    }
}

/// Nodes and weights on [-1, 1], Newton iteration on P_n.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[n - 1 - i] = z;
        w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// `|Y_{1m}|²` as a function of cos θ.
pub fn y1m_squared(m: i32, cos_theta: f64) -> f64 {
    match m.abs() {
        0 => 3.0 * cos_theta * cos_theta / (4.0 * PI),
        1 => 3.0 * (1.0 - cos_theta * cos_theta) / (8.0 * PI),
        _ => 0.0,
    }
}

/// Photoelectron density per cm⁻¹ of one ion channel `(N⁺, m)` at total
/// projection `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpectrum {
    pub n_plus: u32,
    pub m: i32,
    pub m_total: i32,
    pub density: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub register: Option<u64>,
    pub phases: Vec<f64>,
    pub pulse: Option<PulseParams>,
    pub defects: Option<QuantumDefects>,
}

/// Spectra summed over all M runs. Densities are per cm⁻¹ so that
/// `Σ_j P_j dε` is the ion population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub energy_grid: EnergyGrid,
    pub total: Vec<f64>,
    pub channels: Vec<ChannelSpectrum>,
    pub angular_grid: AngularGrid,
    /// `P(ε, k̂)` indexed `[bin][direction]`, per steradian.
    pub angular: Vec<Vec<f64>>,
    pub ion_norm: f64,
    pub info: RunInfo,
}

impl SpectrumResult {
    pub fn eps_cm(&self) -> Vec<f64> {
        self.energy_grid.centers_cm()
    }

    pub fn by_n_plus(&self) -> BTreeMap<u32, Vec<f64>> {
        let mut out: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        for c in &self.channels {
            let acc = out
                .entry(c.n_plus)
                .or_insert_with(|| vec![0.0; self.energy_grid.n]);
            for (a, d) in acc.iter_mut().zip(&c.density) {
                *a += d;
            }
        }
        out
    }

    pub fn integral(&self) -> f64 {
        self.total.iter().sum::<f64>() * self.energy_grid.width_cm()
    }

    /// `∫ P dε` over bins whose centre lies in `[lo, hi)`.
    pub fn window_integral(&self, values: &[f64], lo_cm: f64, hi_cm: f64) -> f64 {
        self.energy_grid
            .centers_cm()
            .iter()
            .zip(values)
            .filter(|(e, _)| **e >= lo_cm && **e < hi_cm)
            .map(|(_, p)| p)
            .sum::<f64>()
            * self.energy_grid.width_cm()
    }

    /// Quadrature of `P(ε_j, k̂)` over the sphere.
    pub fn angular_integral(&self, bin: usize) -> f64 {
        self.angular_grid
            .directions()
            .iter()
            .zip(&self.angular[bin])
            .map(|((_, _, w), p)| w * p)
            .sum()
    }

    pub fn write_tsv<W: Write>(&self, mut w: W, delimiter: char) -> std::io::Result<()> {
        let per = self.by_n_plus();
        let mut header = vec!["eps_cm".to_string(), "P_total".to_string()];
        header.extend(per.keys().map(|n| format!("P_N+={n}")));
        writeln!(w, "{}", header.join(&delimiter.to_string()))?;
        for j in 0..self.energy_grid.n {
            let mut row = vec![
                format!("{:.6}", self.energy_grid.center_cm(j)),
                format!("{:.12e}", self.total[j]),
            ];
            row.extend(per.values().map(|v| format!("{:.12e}", v[j])));
            writeln!(w, "{}", row.join(&delimiter.to_string()))?;
        }
        Ok(())
    }
}

/// Writes named columns against the bin centres.
pub fn write_columns<W: Write>(
    mut w: W,
    energy_grid: &EnergyGrid,
    names: &[&str],
    columns: &[&[f64]],
    delimiter: char,
) -> std::io::Result<()> {
    let d = delimiter.to_string();
    let mut header = vec!["eps_cm"];
    header.extend_from_slice(names);
    writeln!(w, "{}", header.join(&d))?;
    for j in 0..energy_grid.n {
        let mut row = vec![format!("{:.6}", energy_grid.center_cm(j))];
        row.extend(columns.iter().map(|c| format!("{:.12e}", c[j])));
        writeln!(w, "{}", row.join(&d))?;
    }
    Ok(())
}

fn ion_populations(state: &WavepacketState) -> BTreeMap<(u32, i32), Vec<f64>> {
    let mut out: BTreeMap<(u32, i32), Vec<f64>> = BTreeMap::new();
    for (idx, c) in state.channels.iter().enumerate() {
        if let ChannelLabel::Ion { ion, bin, .. } = c.label {
            let entry = out
                .entry((ion.n_plus, ion.m))
                .or_insert_with(|| vec![0.0; state.energy_grid.n]);
            entry[bin] += state.channel_population(idx);
        }
    }
    out
}

/// `P_M(ε, k̂) = Σ_{N⁺, m} |Y_{1m}(k̂)|² ∫|ψ|² dR / dε`, indexed
/// `[bin][direction]`.
pub fn angular_distribution(state: &WavepacketState, grid: &AngularGrid) -> Vec<Vec<f64>> {
    let d_eps = state.energy_grid.width_cm();
    let pops = ion_populations(state);
    let dirs = grid.directions();
    let mut out = vec![vec![0.0; dirs.len()]; state.energy_grid.n];
    for (&(_, m), pop) in &pops {
        let weights: Vec<f64> = dirs.iter().map(|(th, _, _)| y1m_squared(m, th.cos())).collect();
        for (row, p) in out.iter_mut().zip(pop) {
            if *p == 0.0 {
                continue;
            }
            for (a, y) in row.iter_mut().zip(&weights) {
                *a += y * p / d_eps;
            }
        }
    }
    out
}

/// Sums the photoelectron spectra of the final states for every
/// `M ∈ [-N_X, N_X]`.
pub fn energy_spectrum(states: &[WavepacketState], n_x: u32) -> Result<SpectrumResult> {
    let mut by_m: BTreeMap<i32, &WavepacketState> = BTreeMap::new();
    for s in states {
        for m in s.m_values() {
            by_m.insert(m, s);
        }
    }
    for m in -(n_x as i32)..=(n_x as i32) {
        if !by_m.contains_key(&m) {
            return Err(Error::MissingMRun(m));
        }
    }
    let first = by_m.values().next().copied().ok_or(Error::MissingMRun(0))?;
    let energy_grid = first.energy_grid;
    if by_m.values().any(|s| s.energy_grid != energy_grid || s.grid != first.grid) {
        return Err(Error::GridMismatch("final states use different grids".into()));
    }
    let d_eps = energy_grid.width_cm();
    let angular_grid = AngularGrid::default();
    let mut total = vec![0.0; energy_grid.n];
    let mut channels = Vec::new();
    let mut angular = vec![vec![0.0; angular_grid.len()]; energy_grid.n];
    let mut ion_norm = 0.0;
    for (&m_total, state) in &by_m {
        ion_norm += state.ion_population();
        for ((n_plus, m), pop) in ion_populations(state) {
            let density: Vec<f64> = pop.iter().map(|p| p / d_eps).collect();
            for (t, d) in total.iter_mut().zip(&density) {
                *t += d;
            }
            channels.push(ChannelSpectrum {
                n_plus,
                m,
                m_total,
                density,
            });
        }
        for (acc, row) in angular.iter_mut().zip(angular_distribution(state, &angular_grid)) {
            for (a, r) in acc.iter_mut().zip(row) {
                *a += r;
            }
        }
    }
    Ok(SpectrumResult {
        energy_grid,
        total,
        channels,
        angular_grid,
        angular,
        ion_norm,
        info: RunInfo::default(),
    })
}

/// `S(n, ε) = P(n, ε) - P(0, ε)`.
pub fn signal_difference(p_n: &SpectrumResult, p_0: &SpectrumResult) -> Result<Vec<f64>> {
    if p_n.energy_grid != p_0.energy_grid {
        return Err(Error::GridMismatch("spectra on different energy grids".into()));
    }
    Ok(p_n.total.iter().zip(&p_0.total).map(|(a, b)| a - b).collect())
}

/// One ionization pathway `(v, N_E) → (v⁺ = v, N⁺)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pathway {
    pub n_e: u32,
    pub n_plus: u32,
    pub eps_cm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub v: usize,
    /// Peak of the `N⁺ = N_E = N_A - 1` line.
    pub center_cm: f64,
    pub pathways: Vec<Pathway>,
    pub lo_cm: f64,
    pub hi_cm: f64,
    /// Vibrational overlap `⟨v⁺ = v | v_E = v⟩`.
    pub franck_condon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandTable {
    pub bands: Vec<Band>,
}

impl BandTable {
    /// Windows reach three spectral FWHM beyond the outermost pathway of each
    /// band, are cut at the midpoint between neighbouring band centres and
    /// clipped to the energy grid.
    pub fn build(
        levels: &LevelTable,
        n_v: usize,
        n_a: u32,
        omega: f64,
        fwhm_cm: f64,
        energy_grid: &EnergyGrid,
    ) -> Result<Self> {
        let n_ref = bound_levels(n_a)[0];
        let mut bands = Vec::with_capacity(n_v);
        for v in 0..n_v {
            let e_ref = levels.get(CurveLabel::EState, v, n_ref)?;
            let i_ref = levels.get(CurveLabel::Ion, v, n_ref)?;
            let center_cm = predict_peak(e_ref, i_ref, omega).energy_cm().ok_or_else(|| {
                Error::Calibration(format!("band v={v} is closed at this carrier frequency"))
            })?;
            let mut pathways = Vec::new();
            for n_e in bound_levels(n_a) {
                for dn in [-2i32, 0, 2] {
                    let np = n_e as i32 + dn;
                    if np < 0 {
                        continue;
                    }
                    let e = levels.get(CurveLabel::EState, v, n_e)?;
                    let ion = levels.get(CurveLabel::Ion, v, np as u32)?;
                    if let Some(eps) = predict_peak(e, ion, omega).energy_cm() {
                        pathways.push(Pathway {
                            n_e,
                            n_plus: np as u32,
                            eps_cm: eps,
                        });
                    }
                }
            }
            let lo = pathways.iter().map(|p| p.eps_cm).fold(f64::INFINITY, f64::min) - 3.0 * fwhm_cm;
            let hi = pathways.iter().map(|p| p.eps_cm).fold(f64::NEG_INFINITY, f64::max) + 3.0 * fwhm_cm;
            bands.push(Band {
                v,
                center_cm,
                pathways,
                lo_cm: lo.max(energy_grid.eps_min_cm - 0.5 * energy_grid.width_cm()),
                hi_cm: hi.min(energy_grid.eps_max_cm + 0.5 * energy_grid.width_cm()),
                franck_condon: franck_condon(e_ref, i_ref)?,
            });
        }
        let mut order: Vec<usize> = (0..bands.len()).collect();
        order.sort_by(|&a, &b| bands[a].center_cm.total_cmp(&bands[b].center_cm));
        for w in order.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (bands[a].center_cm + bands[b].center_cm);
            bands[a].hi_cm = bands[a].hi_cm.min(mid);
            bands[b].lo_cm = bands[b].lo_cm.max(mid);
        }
        Ok(BandTable { bands })
    }

    pub fn band_at(&self, eps_cm: f64) -> Option<&Band> {
        self.bands
            .iter()
            .find(|b| eps_cm >= b.lo_cm && eps_cm < b.hi_cm)
    }

    /// Step function `𝓕(ε)`; `None` outside every band.
    pub fn franck_condon_at(&self, eps_cm: f64) -> Option<f64> {
        self.band_at(eps_cm).map(|b| b.franck_condon)
    }

    pub fn bins(&self, band: usize, energy_grid: &EnergyGrid) -> Vec<usize> {
        let b = &self.bands[band];
        (0..energy_grid.n)
            .filter(|&j| {
                let e = energy_grid.center_cm(j);
                e >= b.lo_cm && e < b.hi_cm
            })
            .collect()
    }
}

/// `S(ε) / 𝓕(ε)` on band bins. Bins outside every band keep their value and
/// are flagged `false` in the returned mask.
pub fn fc_renormalize(
    signal: &[f64],
    energy_grid: &EnergyGrid,
    bands: &BandTable,
) -> Result<(Vec<f64>, Vec<bool>)> {
    for b in &bands.bands {
        if b.franck_condon.abs() < MIN_FRANCK_CONDON {
            return Err(Error::SmallFranckCondon {
                band: b.v,
                value: b.franck_condon,
            });
        }
    }
    let mut out = signal.to_vec();
    let mut inside = vec![false; signal.len()];
    for (j, s) in out.iter_mut().enumerate() {
        if let Some(f) = bands.franck_condon_at(energy_grid.center_cm(j)) {
            *s /= f;
            inside[j] = true;
        }
    }
    Ok((out, inside))
}

/// Reference spectra for the decoder: the register holding 0 (every level
/// out of phase) and the register holding all ones (every level in phase).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderCalibration {
    pub reference: Vec<f64>,
    /// Per band, `P(ones) - P(0)` on the band bins and zero elsewhere.
    pub templates: Vec<Vec<f64>>,
    /// Per band, `∫P(ones) / ∫P(0)` over the band window.
    pub contrast: Vec<f64>,
}

impl DecoderCalibration {
    pub fn new(zero: &SpectrumResult, ones: &SpectrumResult, bands: &BandTable) -> Result<Self> {
        let diff = signal_difference(ones, zero)?;
        let eg = zero.energy_grid;
        let mut templates = Vec::with_capacity(bands.bands.len());
        let mut contrast = Vec::with_capacity(bands.bands.len());
        for (k, b) in bands.bands.iter().enumerate() {
            let mut t = vec![0.0; eg.n];
            for j in bands.bins(k, &eg) {
                t[j] = diff[j];
            }
            templates.push(t);
            let p0 = zero.window_integral(&zero.total, b.lo_cm, b.hi_cm);
            let p1 = ones.window_integral(&ones.total, b.lo_cm, b.hi_cm);
            contrast.push(if p0 > 0.0 { p1 / p0 } else { f64::NAN });
        }
        Ok(DecoderCalibration {
            reference: zero.total.clone(),
            templates,
            contrast,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeReport {
    pub value: u64,
    pub bits: Vec<bool>,
    /// Projection of `P(n) - P(0)` on each band template; 0 for a stored 0
    /// and 1 for a stored 1.
    pub scores: Vec<f64>,
    /// `∫P(n) / ∫P(0)` per band window.
    pub integrated_ratios: Vec<f64>,
}

/// Reads the register back from a spectrum.
///
/// Flipping a level from out of phase to in phase leaves the band-integrated
/// yield unchanged under an energy-independent dipole and only reshapes the
/// band. Each bit is therefore read as the least-squares amplitude of the
/// calibrated difference template in its band window.
pub fn decode(
    spectrum: &SpectrumResult,
    bands: &BandTable,
    calibration: &DecoderCalibration,
) -> Result<DecodeReport> {
    if spectrum.total.len() != calibration.reference.len() {
        return Err(Error::GridMismatch(
            "spectrum and decoder calibration use different energy grids".into(),
        ));
    }
    let mut bits = Vec::new();
    let mut scores = Vec::new();
    let mut ratios = Vec::new();
    for (k, band) in bands.bands.iter().enumerate() {
        let t = &calibration.templates[k];
        let tt: f64 = t.iter().map(|x| x * x).sum();
        let ref_sq: f64 = bands
            .bins(k, &spectrum.energy_grid)
            .iter()
            .map(|&j| calibration.reference[j].powi(2))
            .sum();
        if !(tt > 1e-12 * ref_sq) || tt == 0.0 {
            return Err(Error::NoContrast { band: band.v });
        }
        let proj: f64 = spectrum
            .total
            .iter()
            .zip(&calibration.reference)
            .zip(t)
            .map(|((p, r), x)| (p - r) * x)
            .sum();
        let score = proj / tt;
        if (score - DECODE_THRESHOLD).abs() < DECODE_GUARD {
            return Err(Error::DecodeAmbiguous {
                band: band.v,
                ratio: score,
                threshold: DECODE_THRESHOLD,
            });
        }
        bits.push(score > DECODE_THRESHOLD);
        scores.push(score);
        let p0 = spectrum.window_integral(&calibration.reference, band.lo_cm, band.hi_cm);
        let pn = spectrum.window_integral(&spectrum.total, band.lo_cm, band.hi_cm);
        ratios.push(pn / p0);
    }
    let value = bits
        .iter()
        .enumerate()
        .filter(|(_, b)| **b)
        .map(|(v, _)| 1u64 << v)
        .sum();
    Ok(DecodeReport {
        value,
        bits,
        scores,
        integrated_ratios: ratios,
    })
}

/// Spectral FWHM of the pulse in cm⁻¹.
pub fn pulse_fwhm_cm(pulse: &PulseParams) -> f64 {
    hartree_to_cm(pulse.spectral_fwhm())
}
