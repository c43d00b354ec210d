//! Configuration, scenario presets and the end-to-end pipeline from a config
//! file to spectra, decode reports and a rerun manifest.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angmom::QuantumDefects;
use crate::boundstates::LevelTable;
use crate::error::{Error, Result};
use crate::grid::{EnergyGrid, RadialGrid};
use crate::potentials::{load_model_li2, CurveLabel, MolecularModel, PotentialCurve};
use crate::propagator::{PropagationConfig, Propagator, PulseParams};
use crate::quantumstate::{
    add_component, assemble_initial, bound_levels, channel_layout, PhaseRegister, RotationalComponents,
    WavepacketState,
};
use crate::spectra::{
    decode, energy_spectrum, fc_renormalize, pulse_fwhm_cm, signal_difference, write_columns, BandTable,
    DecodeReport, DecoderCalibration, SpectrumResult,
};
use crate::units::{cm_to_hartree, fs_to_au, hartree_to_cm, nm_to_cm, ps_to_au};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Single rotational level `N_E ∈ {1, 3}`, anisotropic and isotropic
    /// defects, long and short pulse.
    Fig2,
    /// One vibrational level, both rotational components in and out of phase.
    Fig3,
    /// Two-bit register, every value.
    Fig4,
    /// Five-bit register, a few values plus Franck-Condon renormalization.
    Fig5,
    Custom,
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2" => Ok(Scenario::Fig2),
            "fig3" => Ok(Scenario::Fig3),
            "fig4" => Ok(Scenario::Fig4),
            "fig5" => Ok(Scenario::Fig5),
            "custom" => Ok(Scenario::Custom),
            other => Err(Error::config("scenario", format!("unknown scenario `{other}`"))),
        }
    }
}

/// Fully resolved experiment parameters. Every key can appear in a config
/// file; keys left out take the scenario preset value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Tabulated curve files; both or neither. Neither selects the bundled
    /// model curves.
    pub e_state_curve: Option<PathBuf>,
    pub ion_curve: Option<PathBuf>,
    pub n_x: u32,
    pub n_a: u32,
    pub n_v: usize,
    pub registers: Vec<u64>,
    /// Run every register value through superposed basis propagations.
    pub sweep_all: bool,
    pub tau_ps: Vec<f64>,
    pub wavelength_nm: Option<f64>,
    pub omega_cm: Option<f64>,
    /// Photoelectron energy of the `v = 0`, `N⁺ = N_E = N_A - 1` line used to
    /// calibrate the carrier when neither `wavelength_nm` nor `omega_cm` is set.
    pub target_eps_cm: Option<f64>,
    /// Reference wavelength of the scenario; informational only.
    pub nominal_wavelength_nm: Option<f64>,
    pub e0: f64,
    pub mu_sigma: f64,
    pub mu_pi: f64,
    pub eps_min_cm: f64,
    pub eps_max_cm: f64,
    pub n_bins: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub n_grid: usize,
    pub dt_fs: f64,
    pub workers: usize,
    pub log_every: usize,
    pub output_dir: PathBuf,
}

/// Same keys as [`ExperimentConfig`], all optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigOverrides {
    scenario: Option<Scenario>,
    e_state_curve: Option<PathBuf>,
    ion_curve: Option<PathBuf>,
    n_x: Option<u32>,
    n_a: Option<u32>,
    n_v: Option<usize>,
    registers: Option<Vec<u64>>,
    sweep_all: Option<bool>,
    tau_ps: Option<Vec<f64>>,
    wavelength_nm: Option<f64>,
    omega_cm: Option<f64>,
    target_eps_cm: Option<f64>,
    nominal_wavelength_nm: Option<f64>,
    e0: Option<f64>,
    mu_sigma: Option<f64>,
    mu_pi: Option<f64>,
    eps_min_cm: Option<f64>,
    eps_max_cm: Option<f64>,
    n_bins: Option<usize>,
    r_min: Option<f64>,
    r_max: Option<f64>,
    n_grid: Option<usize>,
    dt_fs: Option<f64>,
    workers: Option<usize>,
    log_every: Option<usize>,
    output_dir: Option<PathBuf>,
}

pub const DEFAULT_E0: f64 = 2e-5;

impl ExperimentConfig {
    pub fn preset(scenario: Scenario) -> Self {
        let li2 = QuantumDefects::li2();
        let mut cfg = ExperimentConfig {
            scenario,
            e_state_curve: None,
            ion_curve: None,
            n_x: 1,
            n_a: 2,
            n_v: 2,
            registers: vec![0, 1, 2, 3],
            sweep_all: false,
            tau_ps: vec![2.5],
            wavelength_nm: None,
            omega_cm: None,
            target_eps_cm: None,
            nominal_wavelength_nm: None,
            e0: DEFAULT_E0,
            mu_sigma: li2.mu_sigma,
            mu_pi: li2.mu_pi,
            eps_min_cm: 10.0,
            eps_max_cm: 190.0,
            n_bins: 150,
            r_min: 3.5,
            r_max: 14.0,
            n_grid: 128,
            dt_fs: 4.0,
            workers: 1,
            log_every: 0,
            output_dir: PathBuf::from(match scenario {
                Scenario::Fig2 => "fig2",
                Scenario::Fig3 => "fig3",
                Scenario::Fig4 => "fig4",
                Scenario::Fig5 => "fig5",
                Scenario::Custom => "custom",
            }),
        };
        match scenario {
            Scenario::Fig2 => {
                cfg.n_v = 1;
                cfg.registers = vec![];
                cfg.tau_ps = vec![15.0, 2.5];
                cfg.target_eps_cm = Some(55.0);
                cfg.nominal_wavelength_nm = Some(705.0);
            }
            Scenario::Fig3 => {
                cfg.n_v = 1;
                cfg.registers = vec![0, 1];
                cfg.target_eps_cm = Some(55.0);
                cfg.nominal_wavelength_nm = Some(705.0);
            }
            Scenario::Fig4 => {
                cfg.target_eps_cm = Some(55.0 + nm_to_cm(699.8) - nm_to_cm(705.0));
                cfg.nominal_wavelength_nm = Some(699.8);
            }
            Scenario::Fig5 => {
                cfg.n_v = 5;
                cfg.registers = vec![0, 1, 10, 31];
                cfg.target_eps_cm = Some(55.0 + nm_to_cm(699.6) - nm_to_cm(705.0));
                cfg.nominal_wavelength_nm = Some(699.6);
            }
            Scenario::Custom => {
                cfg.target_eps_cm = Some(55.0);
            }
        }
        cfg
    }

    /// Parses a config file body and applies `key=value` overrides on top.
    /// The `scenario` key picks the preset the remaining keys modify.
    pub fn load(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::config(item, "override must look like key=value"))?;
            let key = key.trim();
            let parsed = format!("v = {}", value.trim())
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(value.trim().to_string()));
            table.insert(key.to_string(), parsed);
        }
        let ov: ConfigOverrides = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| {
            let msg = e.message().to_string();
            let key = msg
                .split('`')
                .nth(1)
                .unwrap_or("<file>")
                .to_string();
            Error::config(key, msg)
        })?;
        let mut cfg = ExperimentConfig::preset(ov.scenario.unwrap_or(Scenario::Custom));
        let carrier_given = ov.wavelength_nm.is_some() || ov.omega_cm.is_some();
        macro_rules! apply {
            ($($f:ident),*) => { $( if let Some(v) = ov.$f { cfg.$f = v; } )* };
        }
        apply!(
            n_x, n_a, n_v, registers, sweep_all, tau_ps, e0, mu_sigma, mu_pi, eps_min_cm, eps_max_cm, n_bins,
            r_min, r_max, n_grid, dt_fs, workers, log_every, output_dir
        );
        cfg.e_state_curve = ov.e_state_curve.or(cfg.e_state_curve);
        cfg.ion_curve = ov.ion_curve.or(cfg.ion_curve);
        cfg.nominal_wavelength_nm = ov.nominal_wavelength_nm.or(cfg.nominal_wavelength_nm);
        if carrier_given {
            cfg.target_eps_cm = None;
        }
        cfg.wavelength_nm = ov.wavelength_nm;
        cfg.omega_cm = ov.omega_cm;
        if ov.target_eps_cm.is_some() {
            cfg.target_eps_cm = ov.target_eps_cm;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::load(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let carriers = [self.wavelength_nm.is_some(), self.omega_cm.is_some(), self.target_eps_cm.is_some()]
            .iter()
            .filter(|b| **b)
            .count();
        if carriers != 1 {
            return Err(Error::config(
                "wavelength_nm",
                "give exactly one of wavelength_nm, omega_cm and target_eps_cm",
            ));
        }
        let positive = [
            ("e0", self.e0),
            ("dt_fs", self.dt_fs),
            ("wavelength_nm", self.wavelength_nm.unwrap_or(1.0)),
            ("omega_cm", self.omega_cm.unwrap_or(1.0)),
            ("r_min", self.r_min),
        ];
        for (key, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(key, format!("must be positive, got {v}")));
            }
        }
        if self.tau_ps.is_empty() || self.tau_ps.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::config("tau_ps", "needs at least one positive pulse width"));
        }
        if !(self.mu_sigma.is_finite() && self.mu_pi.is_finite()) {
            return Err(Error::config("mu_sigma", "quantum defects must be finite"));
        }
        if self.n_a == 0 {
            return Err(Error::config("n_a", "N_A = 0 has a single rotational component"));
        }
        if self.n_x + 1 != self.n_a {
            return Err(Error::config(
                "n_x",
                "the parallel X -> A step reaches N_A = N_X + 1 only; set n_x = n_a - 1",
            ));
        }
        if self.n_v == 0 || self.n_v > 16 {
            return Err(Error::config("n_v", "must be between 1 and 16"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        if self.e_state_curve.is_some() != self.ion_curve.is_some() {
            return Err(Error::config("ion_curve", "give both curve files or neither"));
        }
        for &n in &self.registers {
            if n >= 1u64 << self.n_v {
                return Err(Error::config("registers", format!("{n} does not fit in {} bits", self.n_v)));
            }
        }
        RadialGrid::new(self.r_min, self.r_max, self.n_grid).map_err(|e| Error::config("n_grid", e.to_string()))?;
        EnergyGrid::new(self.eps_min_cm, self.eps_max_cm, self.n_bins)
            .map_err(|e| Error::config("n_bins", e.to_string()))?;
        Ok(())
    }

    pub fn radial_grid(&self) -> RadialGrid {
        RadialGrid {
            r_min: self.r_min,
            r_max: self.r_max,
            n: self.n_grid,
        }
    }

    pub fn energy_grid(&self) -> EnergyGrid {
        EnergyGrid {
            eps_min_cm: self.eps_min_cm,
            eps_max_cm: self.eps_max_cm,
            n: self.n_bins,
        }
    }

    pub fn defects(&self) -> QuantumDefects {
        QuantumDefects {
            mu_sigma: self.mu_sigma,
            mu_pi: self.mu_pi,
        }
    }

    pub fn model(&self) -> Result<MolecularModel> {
        match (&self.e_state_curve, &self.ion_curve) {
            (Some(e), Some(i)) => Ok(MolecularModel {
                reduced_mass: crate::units::li2_reduced_mass(),
                e_state: PotentialCurve::load_tabulated(CurveLabel::EState, e)?,
                ion: PotentialCurve::load_tabulated(CurveLabel::Ion, i)?,
            }),
            _ => Ok(load_model_li2()),
        }
    }

    /// Every config value with the carrier replaced by the resolved
    /// frequency, as TOML.
    pub fn resolved(&self, omega: f64) -> ExperimentConfig {
        let mut c = self.clone();
        c.wavelength_nm = None;
        c.target_eps_cm = None;
        c.omega_cm = Some(hartree_to_cm(omega));
        c
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Carrier frequency (hartree) that puts the `v = 0`, `N⁺ = N_E = N_A - 1`
/// line at `target_eps_cm`. Every one of the `n_v` bands must land inside
/// the energy grid.
pub fn calibrate_carrier(
    levels: &LevelTable,
    n_a: u32,
    n_v: usize,
    target_eps_cm: f64,
    energy_grid: &EnergyGrid,
) -> Result<f64> {
    if !energy_grid.contains_cm(target_eps_cm) {
        return Err(Error::Calibration(format!(
            "target {target_eps_cm} cm-1 lies outside the energy grid [{}, {}]",
            energy_grid.eps_min_cm, energy_grid.eps_max_cm
        )));
    }
    let n = bound_levels(n_a)[0];
    let e0 = levels.get(CurveLabel::EState, 0, n)?.energy;
    let i0 = levels.get(CurveLabel::Ion, 0, n)?.energy;
    let omega = cm_to_hartree(target_eps_cm) + i0 - e0;
    for v in 0..n_v {
        let e = levels.get(CurveLabel::EState, v, n)?.energy;
        let i = levels.get(CurveLabel::Ion, v, n)?.energy;
        let eps = hartree_to_cm(e + omega - i);
        if !energy_grid.contains_cm(eps) {
            return Err(Error::Calibration(format!(
                "band v={v} would sit at {eps:.2} cm-1, outside the energy grid"
            )));
        }
    }
    Ok(omega)
}

/// Rotational levels needed for `N_A`: both bound components and every ion
/// level they reach.
pub fn needed_rotations(n_a: u32) -> Vec<u32> {
    let mut r: Vec<u32> = bound_levels(n_a)
        .iter()
        .flat_map(|&n| [n as i32 - 2, n as i32, n as i32 + 2])
        .filter(|&n| n >= 0)
        .map(|n| n as u32)
        .collect();
    r.sort();
    r.dedup();
    r
}

/// Precomputed levels and settings shared by every propagation of an
/// experiment.
pub struct Simulator {
    pub model: MolecularModel,
    pub grid: RadialGrid,
    pub energy_grid: EnergyGrid,
    pub levels: LevelTable,
    pub n_x: u32,
    pub n_a: u32,
    pub omega: f64,
    pub e0: f64,
    pub dt: f64,
    pub log_every: usize,
    pool: Arc<rayon::ThreadPool>,
}

impl Simulator {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let model = cfg.model()?;
        let grid = cfg.radial_grid();
        let energy_grid = cfg.energy_grid();
        let levels = LevelTable::build(&model, &grid, &needed_rotations(cfg.n_a), cfg.n_v)?;
        let omega = match (cfg.wavelength_nm, cfg.omega_cm, cfg.target_eps_cm) {
            (Some(nm), _, _) => cm_to_hartree(nm_to_cm(nm)),
            (_, Some(w), _) => cm_to_hartree(w),
            (_, _, Some(t)) => calibrate_carrier(&levels, cfg.n_a, cfg.n_v, t, &energy_grid)?,
            _ => unreachable!("validated"),
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::config("workers", e.to_string()))?;
        Ok(Simulator {
            model,
            grid,
            energy_grid,
            levels,
            n_x: cfg.n_x,
            n_a: cfg.n_a,
            omega,
            e0: cfg.e0,
            dt: fs_to_au(cfg.dt_fs),
            log_every: cfg.log_every,
            pool: Arc::new(pool),
        })
    }

    pub fn pulse(&self, tau_ps: f64) -> PulseParams {
        PulseParams {
            e0: self.e0,
            omega: self.omega,
            tau: ps_to_au(tau_ps),
        }
    }

    pub fn m_values(&self) -> Vec<i32> {
        (-(self.n_x as i32)..=(self.n_x as i32)).collect()
    }

    fn propagation(&self, defects: QuantumDefects) -> PropagationConfig {
        PropagationConfig {
            dt: self.dt,
            defects,
            dipole: 1.0,
            log_every: self.log_every,
            check_every: 50,
        }
    }

    /// Propagates one initial state per M through the pulse.
    pub fn final_states(
        &self,
        tau_ps: f64,
        register: &PhaseRegister,
        components: RotationalComponents,
        defects: QuantumDefects,
    ) -> Result<Vec<WavepacketState>> {
        let pulse = self.pulse(tau_ps);
        let cfg = self.propagation(defects);
        self.pool.install(|| {
            self.m_values()
                .par_iter()
                .map(|&m| {
                    let init = assemble_initial(
                        register,
                        &self.levels,
                        self.n_a,
                        self.n_x,
                        m,
                        &self.energy_grid,
                        components,
                    )?;
                    log::debug!("propagating M={m} tau={tau_ps} ps");
                    Propagator::new(&self.model, &init, pulse, cfg.clone())?.propagate(&init)
                })
                .collect()
        })
    }

    pub fn spectrum(
        &self,
        tau_ps: f64,
        register: &PhaseRegister,
        components: RotationalComponents,
        defects: QuantumDefects,
    ) -> Result<SpectrumResult> {
        let finals = self.final_states(tau_ps, register, components, defects)?;
        let mut sp = energy_spectrum(&finals, self.n_x)?;
        sp.info.register = register.value;
        sp.info.phases = register.phases().to_vec();
        sp.info.pulse = Some(self.pulse(tau_ps));
        sp.info.defects = Some(defects);
        Ok(sp)
    }

    /// Propagates every single-level component `c e^{0} χ_{v,N_E}` once, so
    /// that any register can be assembled from the final states by linearity.
    pub fn register_basis(&self, tau_ps: f64, n_v: usize, defects: QuantumDefects) -> Result<RegisterBasis> {
        let pulse = self.pulse(tau_ps);
        let cfg = self.propagation(defects);
        let mut jobs = Vec::new();
        for m in self.m_values() {
            for v in 0..n_v {
                for n_e in bound_levels(self.n_a) {
                    if m.unsigned_abs() <= n_e {
                        jobs.push((m, v, n_e));
                    }
                }
            }
        }
        let finals: Vec<WavepacketState> = self.pool.install(|| {
            jobs.par_iter()
                .map(|&(m, v, n_e)| {
                    let labels = channel_layout(self.n_a, m, &self.energy_grid);
                    let mut init = WavepacketState::empty(self.grid, self.energy_grid, &labels);
                    add_component(&mut init, &self.levels, self.n_x, self.n_a, n_e, v, 0.0)?;
                    Propagator::new(&self.model, &init, pulse, cfg.clone())?.propagate(&init)
                })
                .collect::<Result<_>>()
        })?;
        Ok(RegisterBasis {
            n_x: self.n_x,
            n_a: self.n_a,
            n_v,
            pulse,
            defects,
            finals: jobs.into_iter().zip(finals).collect(),
        })
    }

    pub fn band_table(&self, n_v: usize, tau_ps: f64) -> Result<BandTable> {
        BandTable::build(
            &self.levels,
            n_v,
            self.n_a,
            self.omega,
            pulse_fwhm_cm(&self.pulse(tau_ps)),
            &self.energy_grid,
        )
    }
}

/// Final states of the single-level initial components, keyed by
/// `(M, v, N_E)`.
pub struct RegisterBasis {
    pub n_x: u32,
    pub n_a: u32,
    pub n_v: usize,
    pub pulse: PulseParams,
    pub defects: QuantumDefects,
    finals: BTreeMap<(i32, usize, u32), WavepacketState>,
}

impl RegisterBasis {
    /// Final states for `register`: `Σ_v [ψ_{v,N_A-1} + e^{iΔφ_v} ψ_{v,N_A+1}]`.
    pub fn final_states(&self, register: &PhaseRegister) -> Result<Vec<WavepacketState>> {
        if register.n_v != self.n_v {
            return Err(Error::InvalidArgument(format!(
                "register has {} levels, basis has {}",
                register.n_v, self.n_v
            )));
        }
        let n_a = self.n_a;
        self.combine(|v, n_e| {
            let phase = if n_e > n_a { register.delta_phi(v) } else { 0.0 };
            Complex64::from_polar(1.0, phase)
        })
    }

    /// Per-M final states of `Σ w(v, N_E) ψ_{v,N_E}`.
    pub fn combine<F: Fn(usize, u32) -> Complex64>(&self, weight: F) -> Result<Vec<WavepacketState>> {
        let mut out = Vec::new();
        for m in -(self.n_x as i32)..=(self.n_x as i32) {
            let mut acc: Option<WavepacketState> = None;
            for ((mm, v, n_e), st) in &self.finals {
                if *mm != m {
                    continue;
                }
                let w = weight(*v, *n_e);
                match acc.as_mut() {
                    None => {
                        let mut s = st.clone();
                        for c in s.channels.iter_mut() {
                            for a in c.amplitudes.iter_mut() {
                                *a *= w;
                            }
                        }
                        acc = Some(s);
                    }
                    Some(a) => {
                        for (ca, cs) in a.channels.iter_mut().zip(&st.channels) {
                            for (x, y) in ca.amplitudes.iter_mut().zip(&cs.amplitudes) {
                                *x += w * y;
                            }
                        }
                    }
                }
            }
            out.push(acc.ok_or(Error::MissingMRun(m))?);
        }
        Ok(out)
    }

    /// Final states of the single-level components, keyed by `(M, v, N_E)`.
    pub fn components(&self) -> impl Iterator<Item = (&(i32, usize, u32), &WavepacketState)> {
        self.finals.iter()
    }

    pub fn spectrum(&self, register: &PhaseRegister) -> Result<SpectrumResult> {
        let mut sp = energy_spectrum(&self.final_states(register)?, self.n_x)?;
        sp.info.register = register.value;
        sp.info.phases = register.phases().to_vec();
        sp.info.pulse = Some(self.pulse);
        sp.info.defects = Some(self.defects);
        Ok(sp)
    }
}

/// Outcome of decoding one stored register value.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub stored: u64,
    pub result: std::result::Result<DecodeReport, String>,
    pub ambiguous: bool,
}

impl DecodeOutcome {
    pub fn ok(&self) -> bool {
        matches!(&self.result, Ok(r) if r.value == self.stored)
    }
}

#[derive(Debug, Default)]
pub struct ArtifactSet {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub decodes: Vec<DecodeOutcome>,
    pub omega: f64,
    pub summary: Vec<String>,
}

impl ArtifactSet {
    pub fn decode_ok(&self) -> bool {
        self.decodes.iter().all(|d| d.ok())
    }

    pub fn any_ambiguous(&self) -> bool {
        self.decodes.iter().any(|d| d.ambiguous)
    }
}

#[derive(Serialize)]
struct SpectrumMeta<'a> {
    code_version: &'a str,
    radial_grid_sha256: String,
    energy_grid_sha256: String,
    omega_cm: f64,
    tau_ps: f64,
    register: Option<u64>,
    phases: Vec<f64>,
    mu_sigma: f64,
    mu_pi: f64,
    ion_norm: f64,
    config: &'a ExperimentConfig,
}

struct Writer<'a> {
    dir: PathBuf,
    cfg: &'a ExperimentConfig,
    sim: &'a Simulator,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<fs::File>> {
        let path = self.dir.join(name);
        let f = fs::File::create(&path)?;
        self.files.push(path);
        Ok(BufWriter::new(f))
    }

    fn spectrum(&mut self, stem: &str, sp: &SpectrumResult, tau_ps: f64) -> Result<()> {
        sp.write_tsv(self.create(&format!("{stem}.tsv"))?, '\t')?;
        let resolved = self.cfg.resolved(self.sim.omega);
        let defects = sp.info.defects.unwrap_or_default();
        let meta = SpectrumMeta {
            code_version: CODE_VERSION,
            radial_grid_sha256: self.sim.grid.hash(),
            energy_grid_sha256: self.sim.energy_grid.hash(),
            omega_cm: hartree_to_cm(self.sim.omega),
            tau_ps,
            register: sp.info.register,
            phases: sp.info.phases.clone(),
            mu_sigma: defects.mu_sigma,
            mu_pi: defects.mu_pi,
            ion_norm: sp.ion_norm,
            config: &resolved,
        };
        let text = toml::to_string(&meta).expect("metadata serializes");
        fs::write(self.dir.join(format!("{stem}.meta.toml")), text)?;
        self.files.push(self.dir.join(format!("{stem}.meta.toml")));
        Ok(())
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, body)?;
        self.files.push(path);
        Ok(())
    }
}

/// Text of the rerun manifest: the resolved config plus comment lines with
/// the code version and grid hashes.
pub fn manifest(cfg: &ExperimentConfig, sim: &Simulator) -> String {
    let mut out = String::new();
    out.push_str("# rotwave run manifest\n");
    out.push_str(&format!("# code_version = {CODE_VERSION}\n"));
    out.push_str(&format!("# radial_grid_sha256 = {}\n", sim.grid.hash()));
    out.push_str(&format!("# energy_grid_sha256 = {}\n", sim.energy_grid.hash()));
    if let Some(t) = cfg.target_eps_cm {
        out.push_str(&format!("# carrier calibrated for eps* = {t} cm-1\n"));
    }
    if let Some(nm) = cfg.nominal_wavelength_nm {
        out.push_str(&format!(
            "# nominal wavelength {nm} nm, calibrated {:.4} nm\n",
            1e7 / hartree_to_cm(sim.omega)
        ));
    }
    out.push_str(&cfg.resolved(sim.omega).to_toml());
    out
}

fn register_list(cfg: &ExperimentConfig) -> Vec<u64> {
    if cfg.sweep_all {
        (0..1u64 << cfg.n_v).collect()
    } else {
        cfg.registers.clone()
    }
}

/// Runs the configured scenario and writes its artifacts into `dir`.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<ArtifactSet> {
    let sim = Simulator::from_config(cfg)?;
    fs::create_dir_all(dir)?;
    let mut w = Writer {
        dir: dir.to_path_buf(),
        cfg,
        sim: &sim,
        files: Vec::new(),
    };
    w.text("manifest.toml", &manifest(cfg, &sim))?;
    let mut set = ArtifactSet {
        dir: dir.to_path_buf(),
        omega: sim.omega,
        ..Default::default()
    };
    match cfg.scenario {
        Scenario::Fig2 => run_fig2(cfg, &sim, &mut w, &mut set)?,
        Scenario::Fig3 => run_fig3(cfg, &sim, &mut w, &mut set)?,
        Scenario::Fig4 | Scenario::Fig5 | Scenario::Custom => run_register(cfg, &sim, &mut w, &mut set)?,
    }
    w.text("summary.txt", &(set.summary.join("\n") + "\n"))?;
    set.files = w.files;
    Ok(set)
}

fn tau_tag(tau: f64) -> String {
    format!("{tau}").replace('.', "p")
}

fn run_fig2(cfg: &ExperimentConfig, sim: &Simulator, w: &mut Writer, set: &mut ArtifactSet) -> Result<()> {
    let register = PhaseRegister::from_phases(vec![0.0]);
    let aniso = cfg.defects();
    let iso = QuantumDefects::isotropic(cfg.mu_sigma);
    for &tau in &cfg.tau_ps {
        for (tag, defects) in [("li2", aniso), ("isotropic", iso)] {
            for n_e in bound_levels(cfg.n_a) {
                let sp = sim.spectrum(tau, &register, RotationalComponents::Only(n_e), defects)?;
                let per = sp.by_n_plus();
                let main = per.get(&n_e).map(|v| v.iter().sum::<f64>()).unwrap_or(0.0);
                let sat: f64 = per
                    .iter()
                    .filter(|(n, _)| **n != n_e)
                    .map(|(_, v)| v.iter().sum::<f64>())
                    .sum();
                set.summary.push(format!(
                    "tau={tau} ps defects={tag} N_E={n_e}: satellite/main = {:.6e}",
                    sat / main
                ));
                w.spectrum(&format!("fig2_tau{}_{tag}_ne{n_e}", tau_tag(tau)), &sp, tau)?;
            }
        }
    }
    Ok(())
}

fn run_fig3(cfg: &ExperimentConfig, sim: &Simulator, w: &mut Writer, set: &mut ArtifactSet) -> Result<()> {
    for &tau in &cfg.tau_ps {
        let mut spectra = Vec::new();
        for (tag, dphi) in [("inphase", 0.0), ("outofphase", PI)] {
            let reg = PhaseRegister::from_phases(vec![dphi; cfg.n_v]);
            let sp = sim.spectrum(tau, &reg, RotationalComponents::Both, cfg.defects())?;
            w.spectrum(&format!("fig3_tau{}_{tag}", tau_tag(tau)), &sp, tau)?;
            spectra.push(sp);
        }
        let s = signal_difference(&spectra[0], &spectra[1])?;
        write_columns(
            w.create(&format!("fig3_tau{}_signal.tsv", tau_tag(tau)))?,
            &sim.energy_grid,
            &["P_inphase", "P_outofphase", "difference"],
            &[&spectra[0].total, &spectra[1].total, &s],
            '\t',
        )?;
        set.summary.push(format!(
            "tau={tau} ps: total ionization in-phase/out-of-phase = {:.6}",
            spectra[0].ion_norm / spectra[1].ion_norm
        ));
    }
    Ok(())
}

fn run_register(cfg: &ExperimentConfig, sim: &Simulator, w: &mut Writer, set: &mut ArtifactSet) -> Result<()> {
    let registers = register_list(cfg);
    let all_ones = (1u64 << cfg.n_v) - 1;
    for &tau in &cfg.tau_ps {
        let bands = sim.band_table(cfg.n_v, tau)?;
        let mut bands_txt = String::from("v\tcenter_cm\tlo_cm\thi_cm\tfranck_condon\n");
        for b in &bands.bands {
            bands_txt.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.10}\n",
                b.v, b.center_cm, b.lo_cm, b.hi_cm, b.franck_condon
            ));
        }
        w.text(&format!("bands_tau{}.tsv", tau_tag(tau)), &bands_txt)?;

        let basis = if cfg.sweep_all {
            Some(sim.register_basis(tau, cfg.n_v, cfg.defects())?)
        } else {
            None
        };
        let mut cache: BTreeMap<u64, SpectrumResult> = BTreeMap::new();
        let mut get = |n: u64| -> Result<SpectrumResult> {
            if let Some(s) = cache.get(&n) {
                return Ok(s.clone());
            }
            let reg = PhaseRegister::encode(n, cfg.n_v)?;
            let sp = match &basis {
                Some(b) => b.spectrum(&reg)?,
                None => sim.spectrum(tau, &reg, RotationalComponents::Both, cfg.defects())?,
            };
            cache.insert(n, sp.clone());
            Ok(sp)
        };
        let zero = get(0)?;
        let ones = get(all_ones)?;
        let calibration = DecoderCalibration::new(&zero, &ones, &bands)?;

        let mut names = Vec::new();
        let mut signals = Vec::new();
        let mut renormalized = Vec::new();
        let mut report = String::from("stored\tdecoded\tstatus\tscores\tintegrated_ratios\n");
        for &n in &registers {
            let sp = get(n)?;
            w.spectrum(&format!("{}_tau{}_n{n}", scenario_tag(cfg), tau_tag(tau)), &sp, tau)?;
            let s = signal_difference(&sp, &zero)?;
            let (sf, _) = fc_renormalize(&s, &sim.energy_grid, &bands)?;
            names.push(format!("S_n{n}"));
            signals.push(s);
            renormalized.push(sf);
            let outcome = match decode(&sp, &bands, &calibration) {
                Ok(r) => DecodeOutcome {
                    stored: n,
                    result: Ok(r),
                    ambiguous: false,
                },
                Err(e) => DecodeOutcome {
                    stored: n,
                    ambiguous: matches!(e, Error::DecodeAmbiguous { .. } | Error::NoContrast { .. }),
                    result: Err(e.to_string()),
                },
            };
            match &outcome.result {
                Ok(r) => report.push_str(&format!(
                    "{n}\t{}\t{}\t{}\t{}\n",
                    r.value,
                    if r.value == n { "ok" } else { "mismatch" },
                    join(&r.scores),
                    join(&r.integrated_ratios)
                )),
                Err(e) => report.push_str(&format!("{n}\t-\terror: {e}\t-\t-\n")),
            }
            set.decodes.push(outcome);
        }
        let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let cols: Vec<&[f64]> = signals.iter().map(|s| s.as_slice()).collect();
        write_columns(
            w.create(&format!("{}_tau{}_signal.tsv", scenario_tag(cfg), tau_tag(tau)))?,
            &sim.energy_grid,
            &name_refs,
            &cols,
            '\t',
        )?;
        let fc_names: Vec<String> = names.iter().map(|n| format!("{n}_over_F")).collect();
        let mut fc_refs: Vec<&str> = vec!["F"];
        fc_refs.extend(fc_names.iter().map(|s| s.as_str()));
        let fstep: Vec<f64> = sim
            .energy_grid
            .centers_cm()
            .iter()
            .map(|&e| bands.franck_condon_at(e).unwrap_or(0.0))
            .collect();
        let mut fc_cols: Vec<&[f64]> = vec![&fstep];
        fc_cols.extend(renormalized.iter().map(|s| s.as_slice()));
        write_columns(
            w.create(&format!("{}_tau{}_signal_fc.tsv", scenario_tag(cfg), tau_tag(tau)))?,
            &sim.energy_grid,
            &fc_refs,
            &fc_cols,
            '\t',
        )?;
        w.text(&format!("decode_tau{}.tsv", tau_tag(tau)), &report)?;
        let ok = set.decodes.iter().filter(|d| d.ok()).count();
        set.summary.push(format!(
            "tau={tau} ps: decoded {ok}/{} registers correctly",
            set.decodes.len()
        ));
    }
    Ok(())
}

fn scenario_tag(cfg: &ExperimentConfig) -> &'static str {
    match cfg.scenario {
        Scenario::Fig2 => "fig2",
        Scenario::Fig3 => "fig3",
        Scenario::Fig4 => "fig4",
        Scenario::Fig5 => "fig5",
        Scenario::Custom => "custom",
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(",")
}
