//! Flat `section.key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional; unknown keys are rejected. Relative paths are resolved
//! against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cuemwf_core::costs::Variant;
use cuemwf_core::scene::{ArrayGeometry, SceneSpec};
use cuemwf_core::solver::{Initialization, SolverConfig};
use cuemwf_core::stft::StftConfig;

use crate::error::{CliError, Result};

pub const DEFAULT_SPEECH_SECONDS: f64 = 5.0;
pub const DEFAULT_LOSS_FRACTION: f64 = 0.15;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    /// `|ρ|`.
    pub rho: f64,
    /// `∠ρ`, radians.
    pub rho_arg: f64,
    pub samples: usize,
    pub points: usize,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self {
            rho: 0.5,
            rho_arg: std::f64::consts::FRAC_PI_4,
            samples: 1_000_000,
            points: 360,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scene: SceneSpec,
    /// Mono WAV; a synthetic speech-like signal is used when absent.
    pub speech_file: Option<PathBuf>,
    pub speech_seconds: f64,
    /// Multichannel WAVs replacing the parametric head model.
    pub speech_ir: Option<PathBuf>,
    pub noise_ir: Option<PathBuf>,
    pub geometry: ArrayGeometry,
    pub stft: StftConfig,
    pub solver: SolverConfig,
    pub variants: Vec<Variant>,
    pub alpha: Option<f64>,
    pub alphas: Vec<f64>,
    /// Worst-ear SNR loss fraction to calibrate α for.
    pub calibrate: Option<f64>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub phase: PhaseConfig,
    /// Resolved `key = value` pairs as written, for the run report.
    pub entries: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: SceneSpec::default(),
            speech_file: None,
            speech_seconds: DEFAULT_SPEECH_SECONDS,
            speech_ir: None,
            noise_ir: None,
            geometry: ArrayGeometry::default(),
            stft: StftConfig::default(),
            solver: SolverConfig::default(),
            variants: Variant::ALL.to_vec(),
            alpha: None,
            alphas: Vec::new(),
            calibrate: None,
            seed: 0,
            out: None,
            phase: PhaseConfig::default(),
            entries: BTreeMap::new(),
        }
    }
}

fn number(key: &str, value: &str) -> Result<f64> {
    let v: f64 = value
        .parse()
        .map_err(|_| CliError::config(key, format!("`{value}` is not a number")))?;
    if !v.is_finite() {
        return Err(CliError::config(key, "must be finite"));
    }
    Ok(v)
}

fn positive(key: &str, value: &str) -> Result<f64> {
    let v = number(key, value)?;
    if v <= 0.0 {
        return Err(CliError::config(key, "must be positive"));
    }
    Ok(v)
}

fn count(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| CliError::config(key, format!("`{value}` is not a non-negative integer")))
}

fn list<T>(key: &str, value: &str, item: impl Fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<&str> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(CliError::config(key, "empty list"));
    }
    items.into_iter().map(|s| item(key, s)).collect()
}

fn variant(key: &str, value: &str) -> Result<Variant> {
    Variant::parse(value).ok_or_else(|| CliError::config(key, format!("unknown variant `{value}`")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text; relative paths are taken relative to `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::config(format!("line {}", n + 1), "expected `key = value`"));
            };
            let (key, value) = (key.trim(), value.trim());
            if cfg.entries.contains_key(key) {
                return Err(CliError::config(key, "given more than once"));
            }
            cfg.set(key, value, base)?;
            cfg.entries.insert(key.to_string(), value.to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        let path = || Some(base.join(value));
        match key {
            "scene.speech_azimuth" => self.scene.speech_azimuth = number(key, value)?,
            "scene.noise_azimuth" => self.scene.noise_azimuth = number(key, value)?,
            "scene.speech_distance" => self.scene.speech_distance = positive(key, value)?,
            "scene.noise_distance" => self.scene.noise_distance = positive(key, value)?,
            "scene.target_snr_worst_ear" => self.scene.target_snr_worst_ear = number(key, value)?,
            "scene.noise_cutoff" => self.scene.noise_cutoff = positive(key, value)?,
            "scene.sensor_noise_db" => {
                self.scene.sensor_noise_db = match value {
                    "none" | "off" => None,
                    v => Some(number(key, v)?),
                }
            }
            "scene.vad_threshold_db" => self.scene.vad_threshold_db = number(key, value)?,
            "scene.speech_file" => self.speech_file = path(),
            "scene.speech_seconds" => self.speech_seconds = positive(key, value)?,
            "scene.speech_ir" => self.speech_ir = path(),
            "scene.noise_ir" => self.noise_ir = path(),
            "geometry.mics_per_ear" => self.geometry.mics_per_ear = count(key, value)?,
            "geometry.spacing" => self.geometry.spacing = positive(key, value)?,
            "geometry.head_radius" => self.geometry.head_radius = positive(key, value)?,
            "geometry.sound_speed" => self.geometry.sound_speed = positive(key, value)?,
            "stft.fft_size" => self.stft.fft_size = count(key, value)?,
            "stft.window_len" => self.stft.window_len = count(key, value)?,
            "stft.hop" => self.stft.hop = count(key, value)?,
            "stft.sample_rate" => self.stft.sample_rate = positive(key, value)?,
            "solver.max_iterations" => self.solver.max_iterations = count(key, value)?,
            "solver.gradient_tolerance" => self.solver.gradient_tolerance = positive(key, value)?,
            "solver.diagonal_loading" => self.solver.diagonal_loading = positive(key, value)?,
            "solver.initialization" => {
                self.solver.initialization = Initialization::parse(value)
                    .ok_or_else(|| CliError::config(key, format!("unknown initialization `{value}`")))?
            }
            "solver.continuation_ratio" => self.solver.continuation_ratio = positive(key, value)?,
            "solver.continuation_start" => self.solver.continuation_start = positive(key, value)?,
            "run.variants" => self.variants = list(key, value, variant)?,
            "run.alpha" => self.alpha = Some(number(key, value)?),
            "run.alphas" => self.alphas = list(key, value, number)?,
            "run.calibrate" => self.calibrate = Some(number(key, value)?),
            "run.seed" => self.seed = value.parse().map_err(|_| CliError::config(key, "not a u64"))?,
            "run.out" => self.out = path(),
            "phase.rho" => self.phase.rho = number(key, value)?,
            "phase.rho_arg" => self.phase.rho_arg = number(key, value)?,
            "phase.samples" => self.phase.samples = count(key, value)?,
            "phase.points" => self.phase.points = count(key, value)?,
            _ => return Err(CliError::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Checks every field against the module contracts and that referenced
    /// files exist.
    pub fn validate(&self) -> Result<()> {
        let core = |key: &str, r: cuemwf_core::Result<()>| r.map_err(|e| CliError::config(key, e.to_string()));
        core("stft", self.stft.validate())?;
        core("geometry", self.geometry.validate())?;
        core("scene", self.scene.validate(&self.stft))?;
        if self.solver.max_iterations == 0 {
            return Err(CliError::config("solver.max_iterations", "must be at least 1"));
        }
        if self.solver.continuation_ratio <= 1.0 {
            return Err(CliError::config("solver.continuation_ratio", "must exceed 1"));
        }
        core("solver", self.solver.validate())?;
        if let Some(a) = self.alpha {
            if a < 0.0 {
                return Err(CliError::config("run.alpha", "must be non-negative"));
            }
        }
        if self.alphas.iter().any(|&a| a < 0.0) {
            return Err(CliError::config("run.alphas", "values must be non-negative"));
        }
        if let Some(l) = self.calibrate {
            if !(0.0..1.0).contains(&l) {
                return Err(CliError::config("run.calibrate", "loss fraction must lie in [0, 1)"));
            }
        }
        if !(0.0..1.0).contains(&self.phase.rho) {
            return Err(CliError::config("phase.rho", "|rho| must lie in [0, 1)"));
        }
        if self.phase.samples == 0 {
            return Err(CliError::config("phase.samples", "must be positive"));
        }
        if self.phase.points < 2 {
            return Err(CliError::config("phase.points", "need at least two grid points"));
        }
        if self.speech_seconds * self.stft.sample_rate < self.stft.window_len as f64 {
            return Err(CliError::config("scene.speech_seconds", "shorter than one analysis window"));
        }
        if self.speech_ir.is_some() != self.noise_ir.is_some() {
            return Err(CliError::config("scene.noise_ir", "speech and noise impulse responses go together"));
        }
        for (key, p) in [
            ("scene.speech_file", &self.speech_file),
            ("scene.speech_ir", &self.speech_ir),
            ("scene.noise_ir", &self.noise_ir),
        ] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(CliError::config(key, format!("{} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    /// α values with exact repeats removed, first occurrence kept, and the
    /// removed values.
    pub fn unique_alphas(&self) -> (Vec<f64>, Vec<f64>) {
        let mut keep: Vec<f64> = Vec::new();
        let mut dropped = Vec::new();
        for &a in &self.alphas {
            if keep.contains(&a) {
                dropped.push(a);
            } else {
                keep.push(a);
            }
        }
        (keep, dropped)
    }
}
