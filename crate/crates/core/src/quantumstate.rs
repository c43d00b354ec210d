//! Channel-resolved nuclear wave packets, the phase register and the
//! initial-state assembly.

use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angmom::{prep_coefficient, reachable_ion_channels, IonAngular};
use crate::boundstates::LevelTable;
use crate::error::{Error, Result};
use crate::grid::{EnergyGrid, RadialGrid};
use crate::potentials::CurveLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChannelLabel {
    Bound { n_e: u32, m_total: i32 },
    Ion { ion: IonAngular, m_total: i32, bin: usize },
}

impl ChannelLabel {
    pub fn is_bound(&self) -> bool {
        matches!(self, ChannelLabel::Bound { .. })
    }

    pub fn m_total(&self) -> i32 {
        match *self {
            ChannelLabel::Bound { m_total, .. } | ChannelLabel::Ion { m_total, .. } => m_total,
        }
    }
}

impl fmt::Display for ChannelLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelLabel::Bound { n_e, m_total } => write!(f, "bound N_E={n_e} M={m_total}"),
            ChannelLabel::Ion { ion, m_total, bin } => write!(
                f,
                "ion N+={} l={} m={} M={} bin={}",
                ion.n_plus, ion.l, ion.m, m_total, bin
            ),
        }
    }
}

impl std::str::FromStr for ChannelLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let mut words = s.split_whitespace();
        let kind = words.next().ok_or("empty channel label")?;
        let mut field = |name: &str| -> std::result::Result<i64, String> {
            let w = words.next().ok_or(format!("missing {name}"))?;
            let (k, v) = w.split_once('=').ok_or(format!("bad field {w}"))?;
            if k != name {
                return Err(format!("expected {name}, found {k}"));
            }
            v.parse::<i64>().map_err(|e| e.to_string())
        };
        match kind {
            "bound" => Ok(ChannelLabel::Bound {
                n_e: field("N_E")? as u32,
                m_total: field("M")? as i32,
            }),
            "ion" => {
                let n_plus = field("N+")? as u32;
                let l = field("l")? as u32;
                let m = field("m")? as i32;
                let m_total = field("M")? as i32;
                let bin = field("bin")? as usize;
                Ok(ChannelLabel::Ion {
                    ion: IonAngular { n_plus, l, m },
                    m_total,
                    bin,
                })
            }
            other => Err(format!("unknown channel kind {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub label: ChannelLabel,
    pub amplitudes: Vec<Complex64>,
}

/// All radial functions for one value of `M` on a common grid. Ion channels
/// hold discrete bin amplitudes: `Σ_i |ψ_i|² dR` is the population of the
/// bin and the plain sum over channels is the conserved norm.
#[derive(Debug, Clone, PartialEq)]
pub struct WavepacketState {
    pub grid: RadialGrid,
    pub energy_grid: EnergyGrid,
    pub time: f64,
    pub channels: Vec<Channel>,
}

impl WavepacketState {
    pub fn empty(grid: RadialGrid, energy_grid: EnergyGrid, labels: &[ChannelLabel]) -> Self {
        WavepacketState {
            grid,
            energy_grid,
            time: 0.0,
            channels: labels
                .iter()
                .map(|&label| Channel {
                    label,
                    amplitudes: vec![Complex64::new(0.0, 0.0); grid.n],
                })
                .collect(),
        }
    }

    fn population(&self, pred: impl Fn(&ChannelLabel) -> bool) -> f64 {
        let dr = self.grid.dr();
        self.channels
            .iter()
            .filter(|c| pred(&c.label))
            .map(|c| c.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            * dr
    }

    pub fn channel_population(&self, index: usize) -> f64 {
        self.channels[index]
            .amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            * self.grid.dr()
    }

    pub fn norm(&self) -> f64 {
        self.population(|_| true)
    }

    pub fn bound_population(&self) -> f64 {
        self.population(|l| l.is_bound())
    }

    pub fn ion_population(&self) -> f64 {
        self.population(|l| !l.is_bound())
    }

    pub fn find(&self, label: &ChannelLabel) -> Option<&Channel> {
        self.channels.iter().find(|c| &c.label == label)
    }

    pub fn m_values(&self) -> Vec<i32> {
        let mut ms: Vec<i32> = self.channels.iter().map(|c| c.label.m_total()).collect();
        ms.sort();
        ms.dedup();
        ms
    }

    /// `⟨self|other⟩`, matching channels by label.
    pub fn overlap(&self, other: &WavepacketState) -> Complex64 {
        let dr = self.grid.dr();
        let mut acc = Complex64::new(0.0, 0.0);
        for c in &self.channels {
            if let Some(o) = other.find(&c.label) {
                acc += c
                    .amplitudes
                    .iter()
                    .zip(&o.amplitudes)
                    .map(|(a, b)| a.conj() * b)
                    .sum::<Complex64>();
            }
        }
        acc * dr
    }

    /// Writes the plain-text snapshot: a header, then for every channel a
    /// `channel <label>` line followed by one `re im` line per grid point.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# rotwave state snapshot v1")?;
        writeln!(w, "time {:e}", self.time)?;
        writeln!(w, "grid {:e} {:e} {}", self.grid.r_min, self.grid.r_max, self.grid.n)?;
        writeln!(
            w,
            "energy_grid {:e} {:e} {}",
            self.energy_grid.eps_min_cm, self.energy_grid.eps_max_cm, self.energy_grid.n
        )?;
        for c in &self.channels {
            writeln!(w, "channel {}", c.label)?;
            for a in &c.amplitudes {
                writeln!(w, "{:e} {:e}", a.re, a.im)?;
            }
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(r: R) -> Result<Self> {
        let bad = |msg: String| Error::Parse {
            path: "<snapshot>".into(),
            message: msg,
        };
        let mut lines = r
            .lines()
            .filter(|l| l.as_ref().map(|s| !s.starts_with('#') && !s.trim().is_empty()).unwrap_or(true));
        let mut next = || -> Result<String> {
            Ok(lines.next().ok_or_else(|| bad("unexpected end of snapshot".into()))??)
        };
        let nums = |s: &str, key: &str| -> Result<Vec<String>> {
            let rest = s
                .strip_prefix(key)
                .ok_or_else(|| bad(format!("expected `{key}`")))?;
            Ok(rest.split_whitespace().map(String::from).collect())
        };
        let pf = |s: &str| s.parse::<f64>().map_err(|e| bad(e.to_string()));
        let pu = |s: &str| s.parse::<usize>().map_err(|e| bad(e.to_string()));

        let time = pf(&nums(&next()?, "time")?[0])?;
        let g = nums(&next()?, "grid")?;
        let grid = RadialGrid::new(pf(&g[0])?, pf(&g[1])?, pu(&g[2])?)?;
        let e = nums(&next()?, "energy_grid")?;
        let energy_grid = EnergyGrid::new(pf(&e[0])?, pf(&e[1])?, pu(&e[2])?)?;
        let mut channels = Vec::new();
        loop {
            let header = match next() {
                Ok(h) => h,
                Err(Error::Parse { .. }) => break,
                Err(e) => return Err(e),
            };
            let label: ChannelLabel = header
                .strip_prefix("channel ")
                .ok_or_else(|| bad(format!("expected channel header, got `{header}`")))?
                .parse()
                .map_err(bad)?;
            let mut amplitudes = Vec::with_capacity(grid.n);
            for _ in 0..grid.n {
                let line = next()?;
                let mut it = line.split_whitespace();
                let re = pf(it.next().unwrap_or(""))?;
                let im = pf(it.next().unwrap_or(""))?;
                amplitudes.push(Complex64::new(re, im));
            }
            channels.push(Channel { label, amplitudes });
        }
        Ok(WavepacketState {
            grid,
            energy_grid,
            time,
            channels,
        })
    }
}

/// Integer stored as per-level phase differences between the two rotational
/// components `N_A + 1` and `N_A - 1`.
///
/// Bit `v` of the integer lives on vibrational level `v` (most significant
/// bit on the highest level); a set bit is stored in phase (Δφ = 0), a clear
/// bit out of phase (Δφ = π).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRegister {
    pub n_v: usize,
    pub value: Option<u64>,
    phases: Vec<f64>,
}

impl PhaseRegister {
    pub fn encode(n: u64, n_v: usize) -> Result<Self> {
        if n_v == 0 || n_v >= 64 || n >= (1u64 << n_v) {
            return Err(Error::RegisterOutOfRange { n, n_v });
        }
        let phases = (0..n_v)
            .map(|v| if (n >> v) & 1 == 1 { 0.0 } else { PI })
            .collect();
        Ok(PhaseRegister {
            n_v,
            value: Some(n),
            phases,
        })
    }

    /// Arbitrary phase differences, one per vibrational level starting at v = 0.
    pub fn from_phases(phases: Vec<f64>) -> Self {
        PhaseRegister {
            n_v: phases.len(),
            value: None,
            phases,
        }
    }

    pub fn delta_phi(&self, v: usize) -> f64 {
        self.phases[v]
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn bit(&self, v: usize) -> bool {
        self.phases[v].cos() > 0.0
    }

    /// Reads the integer back from the phases.
    pub fn decode(&self) -> u64 {
        (0..self.n_v)
            .filter(|&v| self.bit(v))
            .map(|v| 1u64 << v)
            .sum()
    }
}

/// Channel layout for one value of `M`: the two bound rotational levels and
/// every reachable ion channel on every energy bin.
pub fn channel_layout(n_a: u32, m_total: i32, energy_grid: &EnergyGrid) -> Vec<ChannelLabel> {
    let bound = bound_levels(n_a);
    let mut labels: Vec<ChannelLabel> = bound
        .iter()
        .filter(|&&n_e| m_total.unsigned_abs() <= n_e)
        .map(|&n_e| ChannelLabel::Bound { n_e, m_total })
        .collect();
    let present: Vec<u32> = labels
        .iter()
        .map(|l| match l {
            ChannelLabel::Bound { n_e, .. } => *n_e,
            _ => unreachable!(),
        })
        .collect();
    for ion in reachable_ion_channels(&present, m_total) {
        for bin in 0..energy_grid.n {
            labels.push(ChannelLabel::Ion { ion, m_total, bin });
        }
    }
    labels
}

/// `N_E ∈ {N_A - 1, N_A + 1}`.
pub fn bound_levels(n_a: u32) -> Vec<u32> {
    if n_a == 0 {
        vec![1]
    } else {
        vec![n_a - 1, n_a + 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RotationalComponents {
    Both,
    Only(u32),
}

/// Builds the t = 0 state for projection `M`:
/// `ψ_{N_E} = c_{N_E,M} Σ_v exp(iφ_{v,N_E}) χ_{v,N_E}` with `φ_{v,N_A-1} = 0`
/// and `φ_{v,N_A+1} = Δφ_v`, equal weights for every v and all ion channels
/// empty. No global renormalization is applied.
pub fn assemble_initial(
    register: &PhaseRegister,
    levels: &LevelTable,
    n_a: u32,
    n_x: u32,
    m_total: i32,
    energy_grid: &EnergyGrid,
    components: RotationalComponents,
) -> Result<WavepacketState> {
    if m_total.unsigned_abs() > n_x {
        return Err(Error::InvalidArgument(format!(
            "|M| = {} exceeds N_X = {n_x}",
            m_total.abs()
        )));
    }
    let mut state = WavepacketState::empty(levels.grid, *energy_grid, &channel_layout(n_a, m_total, energy_grid));
    for n_e in bound_levels(n_a) {
        if let RotationalComponents::Only(only) = components {
            if only != n_e {
                continue;
            }
        }
        for v in 0..register.n_v {
            let phi = if n_e > n_a { register.delta_phi(v) } else { 0.0 };
            add_component(&mut state, levels, n_x, n_a, n_e, v, phi)?;
        }
    }
    Ok(state)
}

/// Adds `c_{N_E,M} e^{iφ} χ_{v,N_E}` to the bound channel `N_E` of `state`.
/// Does nothing if the channel is absent (|M| > N_E).
pub fn add_component(
    state: &mut WavepacketState,
    levels: &LevelTable,
    n_x: u32,
    n_a: u32,
    n_e: u32,
    v: usize,
    phase: f64,
) -> Result<()> {
    let chi = levels.get(CurveLabel::EState, v, n_e)?;
    for ch in state.channels.iter_mut() {
        let ChannelLabel::Bound { n_e: ne, m_total } = ch.label else {
            continue;
        };
        if ne != n_e {
            continue;
        }
        let w = Complex64::from_polar(prep_coefficient(n_x, n_a, n_e, m_total), phase);
        for (a, x) in ch.amplitudes.iter_mut().zip(&chi.wavefunction) {
            *a += w * x;
        }
    }
    Ok(())
}
