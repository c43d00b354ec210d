//! Split-operator propagation of the coupled bound/continuum radial equations
//! under a rotating-wave dressed sin² pulse.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::angmom::{coupling_element, QuantumDefects};
use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::potentials::{evaluate, MolecularModel};
use crate::quantumstate::{ChannelLabel, WavepacketState};
use crate::units::fs_to_au;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Field parameters, all in atomic units. `tau` is the envelope FWHM and the
/// pulse lasts `2 tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseParams {
    pub e0: f64,
    pub omega: f64,
    pub tau: f64,
}

impl PulseParams {
    pub fn duration(&self) -> f64 {
        2.0 * self.tau
    }

    /// `f(t) = sin²(πt / 2τ)` on `[0, 2τ]`, zero outside.
    pub fn envelope(&self, t: f64) -> f64 {
        if !(0.0..=self.duration()).contains(&t) {
            return 0.0;
        }
        (PI * t / (2.0 * self.tau)).sin().powi(2)
    }

    /// Rotating-wave coupling amplitude `E0 f(t) / 2`.
    pub fn rwa_amplitude(&self, t: f64) -> f64 {
        0.5 * self.e0 * self.envelope(t)
    }

    /// `|F(Δ)| / F(0)` with `F(Δ) = ∫ f(t) e^{iΔt} dt` over the pulse.
    pub fn spectral_profile(&self, detuning: f64) -> f64 {
        let x = detuning * self.tau;
        if x.abs() < 1e-6 {
            return 1.0;
        }
        if (x.abs() - PI).abs() < 1e-6 {
            return 0.5;
        }
        PI * PI * x.sin().abs() / (x.abs() * (x * x - PI * PI).abs())
    }

    /// Full width at half maximum of `|F(Δ)|²` in hartree.
    pub fn spectral_fwhm(&self) -> f64 {
        let half = |x: f64| {
            let p = self.spectral_profile(x / self.tau);
            p * p - 0.5
        };
        let (mut lo, mut hi) = (0.0, PI);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if half(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        2.0 * 0.5 * (lo + hi) / self.tau
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    pub dt: f64,
    pub defects: QuantumDefects,
    pub dipole: f64,
    /// Log a progress line every this many steps; 0 disables.
    pub log_every: usize,
    /// Check for NaN and runaway norm every this many steps.
    pub check_every: usize,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig {
            dt: fs_to_au(4.0),
            defects: QuantumDefects::li2(),
            dipole: 1.0,
            log_every: 0,
            check_every: 50,
        }
    }
}

/// `exp(-i k²/2μ h)` applied through forward/inverse FFT.
pub struct KineticOperator {
    kinetic: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl KineticOperator {
    pub fn new(grid: &RadialGrid, mass: f64) -> Self {
        let mut planner = FftPlanner::new();
        KineticOperator {
            kinetic: grid.wavenumbers().iter().map(|k| k * k / (2.0 * mass)).collect(),
            forward: planner.plan_fft_forward(grid.n),
            inverse: planner.plan_fft_inverse(grid.n),
        }
    }

    pub fn factors(&self, h: f64) -> Vec<Complex64> {
        let scale = 1.0 / self.kinetic.len() as f64;
        self.kinetic
            .iter()
            .map(|t| Complex64::from_polar(scale, -t * h))
            .collect()
    }

    pub fn scratch_len(&self) -> usize {
        self.forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len())
    }

    pub fn apply_with(&self, psi: &mut [Complex64], factors: &[Complex64], scratch: &mut [Complex64]) {
        self.forward.process_with_scratch(psi, scratch);
        for (a, f) in psi.iter_mut().zip(factors) {
            *a *= f;
        }
        self.inverse.process_with_scratch(psi, scratch);
    }

    pub fn apply(&self, psi: &mut [Complex64], h: f64) {
        let mut scratch = vec![ZERO; self.scratch_len()];
        self.apply_with(psi, &self.factors(h), &mut scratch);
    }
}

/// Pre-exponentiated operators for one signed step length `h`.
struct StepFactors {
    h: f64,
    kinetic_half: Vec<Complex64>,
    kinetic_full: Vec<Complex64>,
    /// One radial phase array per distinct potential shape, plus one
    /// constant phase per channel for its energy offset.
    shape_half: Vec<Vec<Complex64>>,
    offset_half: Vec<Complex64>,
}

/// Propagator for one value of `M`: the channel potentials, the kinetic
/// operator and the singular-value decomposition of the bound/continuum
/// coupling block `K = 𝓜 √dε`, so that `W(t) = -A(t) [[0, K], [K†, 0]]`.
pub struct Propagator {
    pub grid: RadialGrid,
    pub pulse: PulseParams,
    pub config: PropagationConfig,
    labels: Vec<ChannelLabel>,
    kinetic: KineticOperator,
    shapes: Vec<Vec<f64>>,
    /// `(shape index, constant offset)` per channel.
    channel_potential: Vec<(usize, f64)>,
    bound: Vec<usize>,
    ions: Vec<usize>,
    /// Columns of U (length n_b each), one per retained singular value.
    u: Vec<Vec<Complex64>>,
    /// Columns of V (length n_c each).
    v: Vec<Vec<Complex64>>,
    singular: Vec<f64>,
}

impl Propagator {
    pub fn new(
        model: &MolecularModel,
        state: &WavepacketState,
        pulse: PulseParams,
        config: PropagationConfig,
    ) -> Result<Self> {
        let grid = state.grid;
        let labels: Vec<ChannelLabel> = state.channels.iter().map(|c| c.label).collect();
        let mut ms: Vec<i32> = labels.iter().map(|l| l.m_total()).collect();
        ms.dedup();
        if ms.len() > 1 {
            return Err(Error::InvalidArgument(
                "a propagator handles a single total projection M".into(),
            ));
        }
        let mass = model.reduced_mass;
        let r = grid.points();
        let d_eps = state.energy_grid.width();
        let mut shapes: Vec<Vec<f64>> = Vec::new();
        let mut shape_keys: Vec<(bool, u32)> = Vec::new();
        let mut channel_potential = Vec::with_capacity(labels.len());
        let mut shape_of = |ion: bool, n: u32| -> Result<usize> {
            if let Some(i) = shape_keys.iter().position(|&k| k == (ion, n)) {
                return Ok(i);
            }
            let curve = if ion { &model.ion } else { &model.e_state };
            shapes.push(evaluate(curve, &r, n, mass, 0.0)?);
            shape_keys.push((ion, n));
            Ok(shapes.len() - 1)
        };
        let mut bound = Vec::new();
        let mut ions = Vec::new();
        for (idx, label) in labels.iter().enumerate() {
            match *label {
                ChannelLabel::Bound { n_e, .. } => {
                    bound.push(idx);
                    channel_potential.push((shape_of(false, n_e)?, 0.0));
                }
                ChannelLabel::Ion { ion, bin, .. } => {
                    ions.push(idx);
                    let shift = state.energy_grid.center(bin) - pulse.omega;
                    channel_potential.push((shape_of(true, ion.n_plus)?, shift));
                }
            }
        }

        let mut k = DMatrix::<Complex64>::zeros(bound.len(), ions.len());
        for (row, &b) in bound.iter().enumerate() {
            let ChannelLabel::Bound { n_e, m_total } = labels[b] else {
                unreachable!()
            };
            for (col, &c) in ions.iter().enumerate() {
                let ChannelLabel::Ion { ion, .. } = labels[c] else {
                    unreachable!()
                };
                k[(row, col)] = coupling_element(
                    n_e,
                    m_total,
                    ion.n_plus,
                    ion.l,
                    ion.m,
                    &config.defects,
                    config.dipole,
                ) * d_eps.sqrt();
            }
        }
        let (u, v, singular) = if bound.is_empty() || ions.is_empty() {
            (Vec::new(), Vec::new(), Vec::new())
        } else {
            let svd = k.svd(true, true);
            let uu = svd.u.expect("svd u");
            let vt = svd.v_t.expect("svd v_t");
            let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
            let mut u = Vec::new();
            let mut v = Vec::new();
            let mut s = Vec::new();
            for (j, &sv) in svd.singular_values.iter().enumerate() {
                if smax == 0.0 || sv <= 1e-14 * smax {
                    continue;
                }
                u.push(uu.column(j).iter().cloned().collect());
                v.push(vt.row(j).iter().map(|z| z.conj()).collect());
                s.push(sv);
            }
            (u, v, s)
        };

        Ok(Propagator {
            grid,
            pulse,
            config,
            labels,
            kinetic: KineticOperator::new(&grid, mass),
            shapes,
            channel_potential,
            bound,
            ions,
            u,
            v,
            singular,
        })
    }

    /// Singular values of the coupling block `𝓜 √dε`.
    pub fn coupling_singular_values(&self) -> &[f64] {
        &self.singular
    }

    /// Dressed effective potential of one channel, including the bin energy
    /// for ion channels.
    pub fn effective_potential(&self, channel: usize) -> Vec<f64> {
        let (shape, offset) = self.channel_potential[channel];
        self.shapes[shape].iter().map(|v| v + offset).collect()
    }

    fn check_layout(&self, state: &WavepacketState) -> Result<()> {
        if state.grid != self.grid
            || state.channels.len() != self.labels.len()
            || state.channels.iter().zip(&self.labels).any(|(c, l)| &c.label != l)
        {
            return Err(Error::GridMismatch(
                "state layout differs from the one the propagator was built for".into(),
            ));
        }
        Ok(())
    }

    fn factors(&self, h: f64) -> StepFactors {
        StepFactors {
            h,
            kinetic_half: self.kinetic.factors(0.5 * h),
            kinetic_full: self.kinetic.factors(h),
            shape_half: self
                .shapes
                .iter()
                .map(|p| p.iter().map(|v| Complex64::from_polar(1.0, -v * 0.5 * h)).collect())
                .collect(),
            offset_half: self
                .channel_potential
                .iter()
                .map(|&(_, c)| Complex64::from_polar(1.0, -c * 0.5 * h))
                .collect(),
        }
    }

    fn apply_kinetic(&self, state: &mut WavepacketState, factors: &[Complex64]) {
        let len = self.kinetic.scratch_len();
        state.channels.par_iter_mut().for_each_init(
            || vec![ZERO; len],
            |scratch, ch| self.kinetic.apply_with(&mut ch.amplitudes, factors, scratch),
        );
    }

    fn apply_potential(&self, state: &mut WavepacketState, f: &StepFactors) {
        state
            .channels
            .par_iter_mut()
            .zip(self.channel_potential.par_iter())
            .zip(f.offset_half.par_iter())
            .for_each(|((ch, &(shape, _)), &offset)| {
                for (a, p) in ch.amplitudes.iter_mut().zip(&f.shape_half[shape]) {
                    *a *= p * offset;
                }
            });
    }

    /// Exact `exp(-i W h)` with `W` evaluated for amplitude `amp`.
    fn apply_interaction(&self, state: &mut WavepacketState, amp: f64, h: f64) {
        if amp == 0.0 || h == 0.0 || self.singular.is_empty() {
            return;
        }
        let n = self.grid.n;
        let rank = self.singular.len();
        let mut pb = vec![vec![ZERO; n]; rank];
        let mut pc = vec![vec![ZERO; n]; rank];
        for k in 0..rank {
            for (b_local, &b) in self.bound.iter().enumerate() {
                let w = self.u[k][b_local].conj();
                for (acc, a) in pb[k].iter_mut().zip(&state.channels[b].amplitudes) {
                    *acc += w * a;
                }
            }
            for (c_local, &c) in self.ions.iter().enumerate() {
                let w = self.v[k][c_local].conj();
                if w == ZERO {
                    continue;
                }
                for (acc, a) in pc[k].iter_mut().zip(&state.channels[c].amplitudes) {
                    *acc += w * a;
                }
            }
        }
        // in the (u_k, v_k) pair basis W is -A s_k σ_x, so exp(-iWh) is a
        // rotation by θ_k = A s_k h
        let mut db = vec![vec![ZERO; n]; rank];
        let mut dc = vec![vec![ZERO; n]; rank];
        for k in 0..rank {
            let theta = amp * self.singular[k] * h;
            let alpha = Complex64::new(-2.0 * (0.5 * theta).sin().powi(2), 0.0);
            let beta = Complex64::new(0.0, theta.sin());
            for i in 0..n {
                db[k][i] = alpha * pb[k][i] + beta * pc[k][i];
                dc[k][i] = alpha * pc[k][i] + beta * pb[k][i];
            }
        }
        for (b_local, &b) in self.bound.iter().enumerate() {
            for k in 0..rank {
                let w = self.u[k][b_local];
                for (a, d) in state.channels[b].amplitudes.iter_mut().zip(&db[k]) {
                    *a += w * d;
                }
            }
        }
        let ion_set = &self.ions;
        let v = &self.v;
        let mut ion_channels: Vec<_> = state
            .channels
            .iter_mut()
            .enumerate()
            .filter(|(i, _)| ion_set.binary_search(i).is_ok())
            .map(|(_, c)| c)
            .collect();
        ion_channels
            .par_iter_mut()
            .enumerate()
            .for_each(|(c_local, ch)| {
                for k in 0..rank {
                    let w = v[k][c_local];
                    if w == ZERO {
                        continue;
                    }
                    for (a, d) in ch.amplitudes.iter_mut().zip(&dc[k]) {
                        *a += w * d;
                    }
                }
            });
    }

    pub fn kinetic_half_step(&self, state: &mut WavepacketState, dt: f64) -> Result<()> {
        self.check_layout(state)?;
        self.apply_kinetic(state, &self.kinetic.factors(0.5 * dt));
        Ok(())
    }

    pub fn potential_half_step(&self, state: &mut WavepacketState, dt: f64) -> Result<()> {
        self.check_layout(state)?;
        let f = self.factors(dt);
        self.apply_potential(state, &f);
        Ok(())
    }

    /// `exp(-i W(t) dt)` with the field amplitude sampled at `t`.
    pub fn interaction_step(&self, state: &mut WavepacketState, t: f64, dt: f64) -> Result<()> {
        self.check_layout(state)?;
        self.apply_interaction(state, self.pulse.rwa_amplitude(t), dt);
        Ok(())
    }

    fn step_with(&self, state: &mut WavepacketState, t: f64, f: &StepFactors) {
        let h = f.h;
        self.apply_kinetic(state, &f.kinetic_half);
        self.apply_potential(state, f);
        self.apply_interaction(state, self.pulse.rwa_amplitude(t + 0.5 * h), h);
        self.apply_potential(state, f);
        self.apply_kinetic(state, &f.kinetic_half);
        state.time = t + h;
    }

    /// One symmetric step `T(h/2) V(h/2) W(h) V(h/2) T(h/2)` from `t` to
    /// `t + h`, field sampled at the midpoint. `h` may be negative.
    pub fn step(&self, state: &mut WavepacketState, t: f64, h: f64) -> Result<()> {
        self.check_layout(state)?;
        self.step_with(state, t, &self.factors(h));
        Ok(())
    }

    /// Step boundaries from 0 to `2τ`; the last step is shortened.
    pub fn breakpoints(&self) -> Vec<f64> {
        let total = self.pulse.duration();
        let dt = self.config.dt.abs();
        let n = ((total / dt) - 1e-9).ceil().max(1.0) as usize;
        let mut t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        t.push(total);
        t
    }

    /// Evolves `state` through the pulse, `0 → 2τ`.
    pub fn propagate(&self, state: &WavepacketState) -> Result<WavepacketState> {
        self.evolve(state, &self.breakpoints())
    }

    /// Runs the pulse backwards, `2τ → 0`, with the same step boundaries.
    pub fn propagate_backward(&self, state: &WavepacketState) -> Result<WavepacketState> {
        let mut bp = self.breakpoints();
        bp.reverse();
        self.evolve(state, &bp)
    }

    /// Steps through the given boundaries in order.
    pub fn evolve(&self, initial: &WavepacketState, breakpoints: &[f64]) -> Result<WavepacketState> {
        self.check_layout(initial)?;
        let mut state = initial.clone();
        let norm0 = state.norm();
        let mut cached: Option<StepFactors> = None;
        let steps = breakpoints.len().saturating_sub(1);
        // the trailing T(h/2) of a step and the leading T(h/2) of the next are
        // applied together as one T(h) unless the state is inspected in between
        let mut pending_half = false;
        for (idx, w) in breakpoints.windows(2).enumerate() {
            let (t, h) = (w[0], w[1] - w[0]);
            if cached.as_ref().map_or(true, |f| f.h != h) {
                if pending_half {
                    let prev = cached.as_ref().unwrap();
                    self.apply_kinetic(&mut state, &prev.kinetic_half);
                    pending_half = false;
                }
                cached = Some(self.factors(h));
            }
            let f = cached.as_ref().unwrap();
            if pending_half {
                self.apply_kinetic(&mut state, &f.kinetic_full);
            } else {
                self.apply_kinetic(&mut state, &f.kinetic_half);
            }
            self.apply_potential(&mut state, f);
            self.apply_interaction(&mut state, self.pulse.rwa_amplitude(t + 0.5 * h), h);
            self.apply_potential(&mut state, f);
            state.time = t + h;
            pending_half = true;

            let last = idx + 1 == steps;
            let check = self.config.check_every > 0 && ((idx + 1) % self.config.check_every == 0 || last);
            let log = self.config.log_every > 0 && ((idx + 1) % self.config.log_every == 0 || last);
            if check || log || last {
                self.apply_kinetic(&mut state, &f.kinetic_half);
                pending_half = false;
            }
            if check {
                self.check_finite(&state, idx + 1, norm0)?;
            }
            if log {
                log::info!(
                    "step {:>6}/{} t={:.1} fs norm={:.12e} bound={:.6e} ion={:.6e}",
                    idx + 1,
                    steps,
                    state.time / fs_to_au(1.0),
                    state.norm(),
                    state.bound_population(),
                    state.ion_population()
                );
            }
        }
        Ok(state)
    }

    fn check_finite(&self, state: &WavepacketState, step: usize, norm0: f64) -> Result<()> {
        let norm = state.norm();
        if norm.is_finite() && norm <= 1.5 * norm0 + 1e-300 {
            return Ok(());
        }
        let mut worst = (0usize, 0.0f64);
        for (i, c) in state.channels.iter().enumerate() {
            for a in &c.amplitudes {
                let m = a.norm();
                if !m.is_finite() {
                    return Err(Error::Numerical {
                        step,
                        channel: c.label.to_string(),
                        max_amplitude: m,
                    });
                }
                if m > worst.1 {
                    worst = (i, m);
                }
            }
        }
        Err(Error::Numerical {
            step,
            channel: state.channels[worst.0].label.to_string(),
            max_amplitude: worst.1,
        })
    }
}
