mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use rotwave_core::angmom::{coupling_matrix, reachable_ion_channels, wigner3j, IonAngular, QuantumDefects};
use rotwave_core::boundstates::LevelTable;
use rotwave_core::experiment::{needed_rotations, ExperimentConfig, Scenario, Simulator};
use rotwave_core::potentials::load_model_li2;
use rotwave_core::propagator::{PropagationConfig, Propagator, PulseParams};
use rotwave_core::quantumstate::{
    assemble_initial, channel_layout, ChannelLabel, PhaseRegister, RotationalComponents, WavepacketState,
};
use rotwave_core::spectra::energy_spectrum;
use rotwave_core::units::{cm_to_hartree, ps_to_au};
use rotwave_core::{EnergyGrid, RadialGrid};

fn three_j_args() -> impl Strategy<Value = (i32, i32, i32, i32, i32)> {
    (0..=10i32, 0..=10i32)
        .prop_flat_map(|(j1, j2)| (Just(j1), Just(j2), (j1 - j2).abs()..=(j1 + j2)))
        .prop_flat_map(|(j1, j2, j3)| (Just(j1), Just(j2), Just(j3), -j1..=j1, -j2..=j2))
}

fn relative_max_diff(a: &[f64], b: &[f64]) -> f64 {
    let peak = a.iter().chain(b).fold(0.0f64, |m, x| m.max(x.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / peak
}

proptest! {
    #[test]
    fn three_j_matches_exact_oracle((j1, j2, j3, m1, m2) in three_j_args()) {
        let m3 = -m1 - m2;
        let exact = common::wigner3j_exact(j1 as i64, j2 as i64, j3 as i64, m1 as i64, m2 as i64, m3 as i64);
        prop_assert!((wigner3j(j1, j2, j3, m1, m2, m3) - exact).abs() <= 1e-12);
    }

    #[test]
    fn three_j_permutation_and_reflection((j1, j2, j3, m1, m2) in three_j_args()) {
        let m3 = -m1 - m2;
        let w = wigner3j(j1, j2, j3, m1, m2, m3);
        let odd = if (j1 + j2 + j3) % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert!((wigner3j(j2, j3, j1, m2, m3, m1) - w).abs() <= 1e-13);
        prop_assert!((wigner3j(j2, j1, j3, m2, m1, m3) - odd * w).abs() <= 1e-13);
        prop_assert!((wigner3j(j1, j2, j3, -m1, -m2, -m3) - odd * w).abs() <= 1e-13);
    }

    #[test]
    fn register_round_trip(n_v in 1usize..=16, seed in any::<u64>()) {
        let n = seed % (1u64 << n_v);
        let r = PhaseRegister::encode(n, n_v).unwrap();
        prop_assert_eq!(r.decode(), n);
        prop_assert_eq!(PhaseRegister::from_phases(r.phases().to_vec()).decode(), n);
        prop_assert!(PhaseRegister::encode(n + (1u64 << n_v), n_v).is_err());
    }

    #[test]
    fn channel_label_text_round_trip(n_plus in 0u32..8, m in -1i32..=1, m_total in -3i32..=3, bin in 0usize..500, n_e in 0u32..8) {
        for label in [
            ChannelLabel::Ion { ion: IonAngular { n_plus, l: 1, m }, m_total, bin },
            ChannelLabel::Bound { n_e, m_total },
        ] {
            let parsed: ChannelLabel = label.to_string().parse().unwrap();
            prop_assert_eq!(parsed, label);
        }
    }

    /// Under M → -M the coupling magnitudes are mirrored.
    #[test]
    fn coupling_reflection(m_total in -1i32..=1, mu_sigma in -0.5f64..0.5, mu_pi in -0.5f64..0.5) {
        let defects = QuantumDefects { mu_sigma, mu_pi };
        let bound = [1u32, 3];
        let ions = reachable_ion_channels(&bound, m_total);
        let t = coupling_matrix(&bound, &ions, m_total, &defects, 1.0);
        let mirrored: Vec<IonAngular> = ions.iter().map(|i| IonAngular { m: -i.m, ..*i }).collect();
        let u = coupling_matrix(&bound, &mirrored, -m_total, &defects, 1.0);
        for row in 0..bound.len() {
            for col in 0..ions.len() {
                prop_assert!((t.get(row, col).norm() - u.get(row, col).norm()).abs() <= 1e-13);
            }
        }
    }

    /// Rows of the bound → ion coupling block belonging to different N_E are
    /// orthogonal for any defects. This is why band-integrated yields do not
    /// depend on the relative phase of the two rotational components.
    #[test]
    fn coupling_rows_are_orthogonal(m_total in -1i32..=1, mu_sigma in -0.5f64..0.5, mu_pi in -0.5f64..0.5) {
        let defects = QuantumDefects { mu_sigma, mu_pi };
        let bound = [1u32, 3];
        let ions = reachable_ion_channels(&bound, m_total);
        let t = coupling_matrix(&bound, &ions, m_total, &defects, 1.0);
        let cross: Complex64 = (0..ions.len()).map(|c| t.get(0, c) * t.get(1, c).conj()).sum();
        prop_assert!(cross.norm() <= 1e-13 * t.max_abs().powi(2));
    }

    #[test]
    fn config_toml_round_trip(n_v in 1usize..=6, tau in 0.5f64..20.0, e0 in 1e-6f64..1e-3, workers in 1usize..4) {
        let mut cfg = ExperimentConfig::preset(Scenario::Custom);
        cfg.n_v = n_v;
        cfg.registers = vec![(1u64 << n_v) - 1];
        cfg.tau_ps = vec![tau];
        cfg.e0 = e0;
        cfg.workers = workers;
        let back = ExperimentConfig::load(&cfg.to_toml(), &[]).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

struct Short {
    model: rotwave_core::MolecularModel,
    levels: LevelTable,
    grid: RadialGrid,
    eg: EnergyGrid,
    pulse: PulseParams,
}

fn short_setup() -> Short {
    let model = load_model_li2();
    let grid = RadialGrid::default();
    let eg = EnergyGrid::new(10.0, 190.0, 40).unwrap();
    let levels = LevelTable::build(&model, &grid, &needed_rotations(2), 2).unwrap();
    Short {
        model,
        levels,
        grid,
        eg,
        pulse: PulseParams {
            e0: 2e-5,
            omega: cm_to_hartree(14_240.0),
            tau: ps_to_au(0.2),
        },
    }
}

fn propagate(s: &Short, init: &WavepacketState, defects: QuantumDefects) -> WavepacketState {
    let cfg = PropagationConfig {
        defects,
        ..PropagationConfig::default()
    };
    Propagator::new(&s.model, init, s.pulse, cfg).unwrap().propagate(init).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    /// Only relative phases matter: a global phase on the initial state
    /// leaves the spectrum unchanged.
    #[test]
    fn spectrum_ignores_global_phase(theta in 0.0f64..std::f64::consts::TAU, n in 0u64..4) {
        let s = short_setup();
        let reg = PhaseRegister::encode(n, 2).unwrap();
        let init = assemble_initial(&reg, &s.levels, 2, 1, 0, &s.eg, RotationalComponents::Both).unwrap();
        let mut rotated = init.clone();
        let w = Complex64::from_polar(1.0, theta);
        for c in rotated.channels.iter_mut() {
            for a in c.amplitudes.iter_mut() {
                *a *= w;
            }
        }
        let a = energy_spectrum(&[propagate(&s, &init, QuantumDefects::li2())], 0).unwrap();
        let b = energy_spectrum(&[propagate(&s, &rotated, QuantumDefects::li2())], 0).unwrap();
        prop_assert!(relative_max_diff(&a.total, &b.total) <= 1e-12);
    }

    /// The channel order of the state only fixes storage, not physics.
    #[test]
    fn channel_order_does_not_matter(seed in any::<u64>()) {
        let s = short_setup();
        let reg = PhaseRegister::encode(1, 2).unwrap();
        let init = assemble_initial(&reg, &s.levels, 2, 1, 0, &s.eg, RotationalComponents::Both).unwrap();
        let mut labels: Vec<ChannelLabel> = channel_layout(2, 0, &s.eg);
        let mut x = seed | 1;
        for i in (1..labels.len()).rev() {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            labels.swap(i, (x % (i as u64 + 1)) as usize);
        }
        let mut shuffled = WavepacketState::empty(s.grid, s.eg, &labels);
        for c in shuffled.channels.iter_mut() {
            c.amplitudes = init.find(&c.label).unwrap().amplitudes.clone();
        }
        let a = energy_spectrum(&[propagate(&s, &init, QuantumDefects::li2())], 0).unwrap();
        let b = energy_spectrum(&[propagate(&s, &shuffled, QuantumDefects::li2())], 0).unwrap();
        prop_assert!(relative_max_diff(&a.total, &b.total) <= 1e-12);
    }
}

/// With equal defects each N_E feeds only N+ = N_E, so the two rotational
/// components of a level never share an exit channel.
#[test]
fn isotropic_defects_remove_phase_dependence() {
    let s = short_setup();
    let defects = QuantumDefects::isotropic(0.1);
    let spectra: Vec<Vec<f64>> = [0.0, 1.0, 2.0, std::f64::consts::PI]
        .iter()
        .map(|&dphi| {
            let reg = PhaseRegister::from_phases(vec![dphi]);
            let init = assemble_initial(&reg, &s.levels, 2, 1, 0, &s.eg, RotationalComponents::Both).unwrap();
            energy_spectrum(&[propagate(&s, &init, defects)], 0).unwrap().total
        })
        .collect();
    for sp in &spectra[1..] {
        let d = relative_max_diff(sp, &spectra[0]);
        assert!(d <= 1e-10, "{d:e}");
    }
}

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(Scenario::Fig4);
    cfg.tau_ps = vec![0.3];
    cfg.n_bins = 40;
    cfg
}

#[test]
fn basis_superposition_matches_direct_runs() {
    let sim = Simulator::from_config(&small_config()).unwrap();
    let basis = sim.register_basis(0.3, 2, QuantumDefects::li2()).unwrap();
    for n in 0..4u64 {
        let reg = PhaseRegister::encode(n, 2).unwrap();
        let direct = sim
            .spectrum(0.3, &reg, RotationalComponents::Both, QuantumDefects::li2())
            .unwrap();
        let assembled = basis.spectrum(&reg).unwrap();
        assert!(relative_max_diff(&direct.total, &assembled.total) <= 1e-10, "n = {n}");
    }
}

#[test]
fn ionization_scales_with_intensity() {
    let cfg = small_config();
    let yield_at = |e0: f64| {
        let mut c = cfg.clone();
        c.e0 = e0;
        let sim = Simulator::from_config(&c).unwrap();
        let reg = PhaseRegister::encode(3, 2).unwrap();
        sim.spectrum(0.3, &reg, RotationalComponents::Both, QuantumDefects::li2())
            .unwrap()
            .ion_norm
    };
    let base = yield_at(1e-6);
    for k in [2.0, 3.0, 5.0] {
        let ratio = yield_at(k * 1e-6) / base;
        assert!((ratio / (k * k) - 1.0).abs() < 1e-6, "k = {k}: {ratio}");
    }
}

#[test]
fn spectrum_converges_with_time_step() {
    let s = short_setup();
    let reg = PhaseRegister::encode(1, 2).unwrap();
    let init = assemble_initial(&reg, &s.levels, 2, 1, 0, &s.eg, RotationalComponents::Both).unwrap();
    let run = |dt_fs: f64| {
        let cfg = PropagationConfig {
            dt: rotwave_core::units::fs_to_au(dt_fs),
            ..PropagationConfig::default()
        };
        let fin = Propagator::new(&s.model, &init, s.pulse, cfg).unwrap().propagate(&init).unwrap();
        energy_spectrum(&[fin], 0).unwrap().total
    };
    let coarse = run(4.0);
    let mid = run(2.0);
    let fine = run(1.0);
    let e1 = relative_max_diff(&coarse, &mid);
    let e2 = relative_max_diff(&mid, &fine);
    // Second-order splitting: halving dt cuts the error about four times.
    assert!(e2 < 1e-3, "{e2}");
    assert!(e1 / e2 > 3.0 && e1 / e2 < 5.0, "{e1} {e2}");
}
