use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rotwave_core::experiment::{run_experiment, ExperimentConfig, Simulator};
use rotwave_core::spectra::{decode, DecoderCalibration};
use rotwave_core::units::{cm_to_nm, hartree_to_cm};
use rotwave_core::{selftest, Error, PhaseRegister, RotationalComponents};

const EXIT_FAILURE: u8 = 1;
const EXIT_AMBIGUOUS: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

#[derive(Parser)]
#[command(name = "rotwave", version, about = "Rotational wave-packet photoionization and phase-register readout")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file and write its artifacts.
    Run {
        config: PathBuf,
        /// Override a config key, e.g. `--set tau_ps=[2.5]`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Root directory for outputs; relative `output_dir` values land under it.
        #[arg(long, env = "ROTWAVE_OUTPUT_ROOT", default_value = ".")]
        output_root: PathBuf,
    },
    /// Resolve the carrier frequency for a config and print the band layout.
    Calibrate {
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Store `n` in `bits` vibrational levels, simulate, and read it back.
    EncodeDecode {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        bits: usize,
        /// Optional config supplying everything except the register.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run the fast analytic checks of the numerical core.
    Selftest,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::DecodeAmbiguous { .. } => EXIT_AMBIGUOUS,
        Error::Config { .. }
        | Error::Parse { .. }
        | Error::InvalidArgument(_)
        | Error::RegisterOutOfRange { .. }
        | Error::Calibration(_)
        | Error::OutOfDomain { .. }
        | Error::TooFewBoundStates { .. }
        | Error::GridMismatch(_) => EXIT_CONFIG,
        Error::Numerical { .. } | Error::SmallFranckCondon { .. } | Error::NoContrast { .. } => EXIT_NUMERICAL,
        Error::MissingLevel { .. } | Error::MissingMRun(_) | Error::Io(_) => EXIT_FAILURE,
    }
}

fn load(config: Option<&Path>, overrides: &[String]) -> rotwave_core::Result<ExperimentConfig> {
    match config {
        Some(path) => ExperimentConfig::from_file(path, overrides),
        None => ExperimentConfig::load("scenario = \"custom\"", overrides),
    }
}

fn run(config: &Path, overrides: &[String], root: &Path) -> rotwave_core::Result<u8> {
    let cfg = load(Some(config), overrides)?;
    let dir = root.join(&cfg.output_dir);
    let set = run_experiment(&cfg, &dir)?;
    for line in &set.summary {
        println!("{line}");
    }
    println!("wrote {} files to {}", set.files.len(), set.dir.display());
    Ok(if set.any_ambiguous() {
        EXIT_AMBIGUOUS
    } else if set.decode_ok() {
        0
    } else {
        EXIT_FAILURE
    })
}

fn calibrate(config: &Path, overrides: &[String]) -> rotwave_core::Result<u8> {
    let cfg = load(Some(config), overrides)?;
    let sim = Simulator::from_config(&cfg)?;
    let omega_cm = hartree_to_cm(sim.omega);
    println!("omega_cm = {omega_cm:.6}");
    println!("wavelength_nm = {:.6}", cm_to_nm(omega_cm));
    if let Some(nominal) = cfg.nominal_wavelength_nm {
        println!("nominal_wavelength_nm = {nominal}");
    }
    for &tau in &cfg.tau_ps {
        let bands = sim.band_table(cfg.n_v, tau)?;
        for b in &bands.bands {
            println!(
                "tau={tau} ps v={} center={:.3} cm-1 window=[{:.3}, {:.3}] franck_condon={:.6}",
                b.v, b.center_cm, b.lo_cm, b.hi_cm, b.franck_condon
            );
        }
    }
    Ok(0)
}

fn encode_decode(n: u64, bits: usize, config: Option<&Path>, overrides: &[String]) -> rotwave_core::Result<u8> {
    let register = PhaseRegister::encode(n, bits)?;
    let mut all = overrides.to_vec();
    all.push(format!("n_v={bits}"));
    all.push(format!("registers=[{n}]"));
    let cfg = load(config, &all)?;
    let sim = Simulator::from_config(&cfg)?;
    let tau = cfg.tau_ps[0];
    let defects = cfg.defects();
    let spectrum = |r: &PhaseRegister| sim.spectrum(tau, r, RotationalComponents::Both, defects);
    let ones = (1u64 << bits) - 1;
    let zero_sp = spectrum(&PhaseRegister::encode(0, bits)?)?;
    let ones_sp = spectrum(&PhaseRegister::encode(ones, bits)?)?;
    let stored_sp = match n {
        0 => zero_sp.clone(),
        x if x == ones => ones_sp.clone(),
        _ => spectrum(&register)?,
    };
    let bands = sim.band_table(bits, tau)?;
    let calibration = DecoderCalibration::new(&zero_sp, &ones_sp, &bands)?;
    let report = decode(&stored_sp, &bands, &calibration)?;
    for (v, (score, ratio)) in report.scores.iter().zip(&report.integrated_ratios).enumerate() {
        println!("band v={v}: score {score:.6} integrated ratio {ratio:.6}");
    }
    println!("stored {n}, decoded {}", report.value);
    Ok(if report.value == n { 0 } else { EXIT_FAILURE })
}

fn selftest() -> u8 {
    let checks = selftest::run_all();
    for c in &checks {
        println!("[{}] {}: {}", if c.passed { "ok" } else { "FAILED" }, c.name, c.detail);
    }
    if checks.iter().all(|c| c.passed) {
        0
    } else {
        EXIT_NUMERICAL
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            config,
            overrides,
            output_root,
        } => run(config, overrides, output_root),
        Command::Calibrate { config, overrides } => calibrate(config, overrides),
        Command::EncodeDecode {
            n,
            bits,
            config,
            overrides,
        } => encode_decode(*n, *bits, config.as_deref(), overrides),
        Command::Selftest => Ok(selftest()),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
