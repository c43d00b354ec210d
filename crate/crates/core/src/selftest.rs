//! Fast analytic checks of the numerical core, run by `rotwave selftest`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::angmom::{coupling_matrix, reachable_ion_channels, wigner3j, IonAngular, QuantumDefects};
use crate::boundstates::solve_potential;
use crate::grid::{EnergyGrid, RadialGrid};
use crate::potentials::load_model_li2;
use crate::propagator::{KineticOperator, PropagationConfig, Propagator, PulseParams};
use crate::quantumstate::{ChannelLabel, PhaseRegister, WavepacketState};
use crate::units::{cm_to_hartree, li2_reduced_mass};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, err: f64, tol: f64) -> Check {
    Check {
        name,
        passed: err <= tol,
        detail: format!("error {err:.3e} (tolerance {tol:.0e})"),
    }
}

fn three_j_closed_forms() -> Check {
    let mut err = (wigner3j(1, 1, 2, 0, 0, 0) - (2.0f64 / 15.0).sqrt()).abs();
    err = err.max((wigner3j(1, 1, 3, 0, 0, 0)).abs());
    for j in 0..=10 {
        for m in -j..=j {
            let sign = if (j - m) % 2 == 0 { 1.0 } else { -1.0 };
            let exact = sign / ((2 * j + 1) as f64).sqrt();
            err = err.max((wigner3j(j, j, 0, m, -m, 0) - exact).abs());
        }
    }
    check("3j closed forms", err, 1e-12)
}

fn three_j_orthogonality() -> Check {
    let mut err: f64 = 0.0;
    for j1 in 0..=4i32 {
        for j2 in 0..=4i32 {
            for j3 in (j1 - j2).abs()..=(j1 + j2) {
                for j3p in (j1 - j2).abs()..=(j1 + j2) {
                    for m3 in -j3.min(j3p)..=j3.min(j3p) {
                        let mut s = 0.0;
                        for m1 in -j1..=j1 {
                            let m2 = -m1 - m3;
                            if m2.abs() > j2 {
                                continue;
                            }
                            s += wigner3j(j1, j2, j3, m1, m2, m3) * wigner3j(j1, j2, j3p, m1, m2, m3);
                        }
                        let expect = if j3 == j3p { 1.0 } else { 0.0 };
                        err = err.max(((2 * j3 + 1) as f64 * s - expect).abs());
                    }
                }
            }
        }
    }
    check("3j orthogonality", err, 1e-12)
}

fn harmonic_levels() -> Check {
    let g = RadialGrid::default();
    let mu = li2_reduced_mass();
    let w = cm_to_hartree(300.0);
    let v: Vec<f64> = g
        .points()
        .iter()
        .map(|r| 0.5 * mu * w * w * (r - 8.75) * (r - 8.75))
        .collect();
    match solve_potential(&g, mu, &v, 0, 10) {
        Ok(levels) => {
            let err = levels
                .iter()
                .map(|l| ((l.energy - w * (l.v as f64 + 0.5)) / (w * (l.v as f64 + 0.5))).abs())
                .fold(0.0, f64::max);
            check("harmonic levels", err, 1e-6)
        }
        Err(e) => Check {
            name: "harmonic levels",
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn isotropic_closure() -> Check {
    let defects = QuantumDefects::isotropic(0.1);
    let mut worst: f64 = 0.0;
    for m in -1..=1 {
        let bound = [1u32, 3];
        let ions = reachable_ion_channels(&bound, m);
        let t = coupling_matrix(&bound, &ions, m, &defects, 1.0);
        let max = t.max_abs();
        for e in t.elements() {
            if e.ion.n_plus != e.n_e {
                worst = worst.max(e.value.norm() / max);
            }
        }
    }
    check("isotropic defects keep N+ = N_E", worst, 1e-12)
}

fn rabi() -> Check {
    let model = load_model_li2();
    let grid = RadialGrid::default();
    let eg = EnergyGrid::new(50.0, 60.0, 2).expect("grid");
    let labels = [
        ChannelLabel::Bound { n_e: 1, m_total: 0 },
        ChannelLabel::Ion {
            ion: IonAngular { n_plus: 1, l: 1, m: 0 },
            m_total: 0,
            bin: 0,
        },
    ];
    let mut s = WavepacketState::empty(grid, eg, &labels);
    let width = 0.5;
    let norm = (2.0 * PI * width * width).powf(-0.25);
    for (a, r) in s.channels[0].amplitudes.iter_mut().zip(grid.points()) {
        *a = Complex64::new(norm * (-(r - 6.0f64).powi(2) / (4.0 * width * width)).exp(), 0.0);
    }
    let pulse = PulseParams {
        e0: 1e-3,
        omega: 0.06,
        tau: 1e4,
    };
    let cfg = PropagationConfig::default();
    let g = pulse.rwa_amplitude(pulse.tau)
        * crate::angmom::coupling_element(1, 0, 1, 1, 0, &cfg.defects, 1.0).norm()
        * eg.width().sqrt();
    let p0 = s.norm();
    let result = Propagator::new(&model, &s, pulse, cfg).and_then(|p| {
        let dt = 2000.0;
        p.interaction_step(&mut s, pulse.tau, dt)?;
        Ok(((s.channel_population(0) / p0) - (g * dt).cos().powi(2)).abs())
    });
    match result {
        Ok(err) => check("two-channel Rabi rotation", err, 1e-12),
        Err(e) => Check {
            name: "two-channel Rabi rotation",
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn free_dispersion() -> Check {
    let grid = RadialGrid::new(-100.0, 100.0, 512).expect("grid");
    let mass = 1.0;
    let sigma: f64 = 2.0;
    let x = grid.points();
    let mut psi: Vec<Complex64> = x
        .iter()
        .map(|r| Complex64::new((-r * r / (4.0 * sigma * sigma)).exp(), 0.0))
        .collect();
    let op = KineticOperator::new(&grid, mass);
    let t = 40.0;
    for _ in 0..400 {
        op.apply(&mut psi, t / 400.0);
    }
    let w: Vec<f64> = psi.iter().map(|a| a.norm_sqr()).collect();
    let norm: f64 = w.iter().sum();
    let var: f64 = w.iter().zip(&x).map(|(p, r)| p * r * r).sum::<f64>() / norm;
    let exact = sigma * sigma * (1.0 + (t / (2.0 * mass * sigma * sigma)).powi(2));
    check("free packet spreading", ((var - exact) / exact).abs(), 1e-8)
}

fn register_round_trip() -> Check {
    let mut failures = 0;
    for n_v in 1..=8 {
        for n in 0..(1u64 << n_v) {
            match PhaseRegister::encode(n, n_v) {
                Ok(r) if r.decode() == n => {}
                _ => failures += 1,
            }
        }
    }
    Check {
        name: "phase register encode/decode",
        passed: failures == 0,
        detail: format!("{failures} failures"),
    }
}

pub fn run_all() -> Vec<Check> {
    vec![
        three_j_closed_forms(),
        three_j_orthogonality(),
        harmonic_levels(),
        isotropic_closure(),
        rabi(),
        free_dispersion(),
        register_round_trip(),
    ]
}
