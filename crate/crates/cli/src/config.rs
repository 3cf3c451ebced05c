#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use trispdc::device::{coupling_constants, expand_potential};
use trispdc::rwa::{enumerate_terms, select_resonant, DEFAULT_TOLERANCE_GHZ};
use trispdc::{DeviceParams64, EffectiveHamiltonian64, Process};

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Contents of a run config file (TOML). Every field is optional; missing
/// ones take the defaults of [`RunConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub device: DeviceParams64,
    pub process: Process,
    /// `g·t`, dimensionless. `None` picks a per-process default.
    pub drive_strength: Option<f64>,
    /// Phase (rad) of the down-conversion coefficient. `None` keeps the
    /// phase implied by `device.pump_phase` and the coupling sign.
    pub hamiltonian_phase: Option<f64>,
    pub samples: usize,
    pub seed: u64,
    /// Added noise photons per mode; empty means none (or, for `fig2`, the
    /// 35:66 noise-to-signal reference regime).
    pub noise_photons: Vec<f64>,
    pub gain: f64,
    pub output_dir: PathBuf,
    /// Starting Fock cutoff per mode; grown automatically on leakage.
    pub cutoff: Option<usize>,
    pub tolerance_ghz: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            device: DeviceParams64::default(),
            process: Process::ThreeMode,
            drive_strength: None,
            hamiltonian_phase: None,
            samples: 1_000_000,
            seed: 1,
            noise_photons: Vec::new(),
            gain: 1.0,
            output_dir: PathBuf::from("out"),
            cutoff: None,
            tolerance_ghz: DEFAULT_TOLERANCE_GHZ,
        }
    }
}

pub fn default_drive(process: Process) -> f64 {
    match process {
        Process::SingleMode => 0.1,
        Process::TwoMode => 0.2,
        Process::ThreeMode => 0.3,
    }
}

fn field(name: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::usage(format!("config field `{name}`: {msg}"))
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text)
            .map_err(|e| CliError::usage(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the config with `output_dir` cleared, so identical runs
    /// written to different places share a hash.
    pub fn content_hash(&self) -> String {
        let cfg = Self {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        crate::artifacts::sha256_hex(cfg.to_toml().as_bytes())
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(field(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        self.device.validate().map_err(|e| field("device", e))?;
        if let Some(d) = self.drive_strength {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(field(
                    "drive_strength",
                    "must be a finite non-negative number",
                ));
            }
        }
        if let Some(p) = self.hamiltonian_phase {
            if !p.is_finite() {
                return Err(field("hamiltonian_phase", "must be finite"));
            }
        }
        if self.samples == 0 {
            return Err(field("samples", "must be at least 1"));
        }
        if self
            .noise_photons
            .iter()
            .any(|n| !(*n >= 0.0 && n.is_finite()))
        {
            return Err(field(
                "noise_photons",
                "entries must be finite and non-negative",
            ));
        }
        if self.noise_photons.len() > 3 {
            return Err(field("noise_photons", "at most one entry per mode (3)"));
        }
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(field("gain", "must be positive"));
        }
        if self.cutoff == Some(0) {
            return Err(field("cutoff", "must be at least 1"));
        }
        if !(self.tolerance_ghz > 0.0) {
            return Err(field("tolerance_ghz", "must be positive"));
        }
        if self.device.n_modes() < self.process.n_modes() {
            return Err(field(
                "device.mode_freqs",
                format!(
                    "{} needs {} modes",
                    self.process.name(),
                    self.process.n_modes()
                ),
            ));
        }
        Ok(())
    }

    pub fn drive(&self, process: Process) -> f64 {
        self.drive_strength
            .unwrap_or_else(|| default_drive(process))
    }

    /// Noise photons for an `n`-mode record: missing entries are zero, a
    /// single entry is broadcast.
    pub fn noise_for(&self, n: usize) -> Vec<f64> {
        match self.noise_photons.as_slice() {
            [] => vec![0.0; n],
            [x] => vec![*x; n],
            v => (0..n).map(|i| v.get(i).copied().unwrap_or(0.0)).collect(),
        }
    }
}

/// Effective Hamiltonian of `process` derived from the device: the cubic
/// expansion term is enumerated, the pump-resonant monomials selected, idle
/// modes dropped and the coefficient rescaled to unit modulus so that the
/// evolution time equals the drive strength `g·t`. `pump_phase` overrides
/// the device pump phase; `hamiltonian_phase` instead pins the phase of the
/// down-conversion coefficient. Returns `None` when the pump is off.
pub fn device_hamiltonian(
    cfg: &RunConfig,
    process: Process,
    pump_phase: Option<f64>,
    hamiltonian_phase: Option<f64>,
) -> CliResult<Option<EffectiveHamiltonian64>> {
    let mut device = cfg.device.clone();
    if let Some(p) = pump_phase {
        device.pump_phase = p;
    }
    if device.pump_amplitude == 0.0 {
        return Ok(None);
    }
    let expansion = expand_potential(&device, 3)?;
    let couplings = coupling_constants(&expansion, &device.zero_point_amplitudes)?;
    let g3 = couplings.by_order[3];
    if g3 == 0.0 {
        return Err(CliError::usage(
            "device has no cubic coupling (symmetric SQUID or flux bias at a symmetry point)",
        ));
    }
    let terms = enumerate_terms(&device.mode_freqs, 3, g3)?;
    let pump = process.pump_freq(&device.mode_freqs);
    let beta = num_complex::Complex::from_polar(device.pump_amplitude, device.pump_phase);
    let eff = select_resonant(&terms, pump, cfg.tolerance_ghz, beta)?;
    let (mut eff, found) = eff.normalized_process(1.0).ok_or_else(|| {
        CliError::runtime(format!(
            "pump at {pump} GHz does not select a cubic process"
        ))
    })?;
    if found != process {
        return Err(CliError::usage(format!(
            "pump at {pump:.4} GHz selects {} instead of {} for these mode frequencies",
            found.name(),
            process.name()
        )));
    }
    if let Some(theta) = hamiltonian_phase {
        let rot = num_complex::Complex::from_polar(1.0, theta - eff.pump_phase);
        for t in &mut eff.terms {
            t.coefficient *= if t.creation.iter().all(|&c| c == 0) {
                rot
            } else {
                rot.conj()
            };
        }
        eff.pump_phase = theta;
    }
    Ok(Some(eff))
}

/// Annotated sample config with units.
pub const SAMPLE_CONFIG: &str = include_str!("../../../config/example.toml");
