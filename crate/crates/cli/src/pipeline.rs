//! Scene construction and the four commands, computed in memory.

use std::f64::consts::PI;

use cuemwf_core::costs::{CostSpec, Variant};
use cuemwf_core::metrics::{self, Evaluator, MetricsReport};
use cuemwf_core::phase_model::{phase_pdf, sample_ratio_phase, RatioPhaseParams};
use cuemwf_core::scene::{self, Scene};
use cuemwf_core::solver::{self, Calibration, Problem, SolveResult, SweepRow};
use cuemwf_core::spatial::{estimate_coherence, CoherenceSet, Selector};
use cuemwf_core::stft::synthesize;
use cuemwf_core::{rng, C64, CUE_CUTOFF_HZ};

use crate::audio::read_wav;
use crate::config::{RunConfig, DEFAULT_LOSS_FRACTION};
use crate::error::{CliError, Result};
use crate::output::{self, Artifact};

/// Fraction of unconverged bins above which a run exits with status 3.
pub const UNCONVERGED_LIMIT: f64 = 0.10;

/// A rendered scene with everything needed to solve and score it.
pub struct Experiment {
    pub scene: Scene,
    pub phi: CoherenceSet,
    pub sel: Selector,
    pub evaluator: Evaluator,
    pub config: RunConfig,
}

impl Experiment {
    pub fn build(config: &RunConfig) -> Result<Self> {
        let rate = config.stft.sample_rate;
        let speech = match &config.speech_file {
            Some(p) => {
                let mut ch = read_wav(p, rate, "scene.speech_file")?;
                if ch.len() != 1 {
                    return Err(CliError::config("scene.speech_file", "speech must be a mono WAV"));
                }
                ch.remove(0)
            }
            None => scene::speech_like_signal(config.speech_seconds, rate, rng::derive_seed(config.seed, "speech")),
        };
        let spec = scene::SceneSpec {
            seed: config.seed,
            ..config.scene.clone()
        };
        let (scene, mics) = match (&config.speech_ir, &config.noise_ir) {
            (Some(s), Some(n)) => {
                let hs = read_wav(s, rate, "scene.speech_ir")?;
                let hn = read_wav(n, rate, "scene.noise_ir")?;
                let mics = hs.len() / 2;
                (scene::synthesize_scene_with_irs(&speech, &spec, &hs, &hn, &config.stft)?, mics)
            }
            _ => (
                scene::synthesize_scene(&speech, &spec, &config.geometry, &config.stft)?,
                config.geometry.mics_per_ear,
            ),
        };
        let sel = Selector::binaural(mics);
        let phi = estimate_coherence(&scene.y, &scene.vad)?;
        let evaluator = Evaluator::new(&scene.x, &scene.v, &scene.vad, sel, CUE_CUTOFF_HZ)?;
        Ok(Self {
            scene,
            phi,
            sel,
            evaluator,
            config: config.clone(),
        })
    }

    pub fn problem(&self) -> Problem<'_> {
        Problem {
            phi: &self.phi,
            sel: &self.sel,
            stft: &self.config.stft,
            solver: &self.config.solver,
            evaluator: &self.evaluator,
            worst_ear: self.scene.worst_ear,
        }
    }

    pub fn solve(&self, variant: Variant, alpha: f64) -> Result<VariantRun> {
        let result = self.problem().solve(&CostSpec::new(variant, alpha))?;
        let report = self.evaluator.evaluate(&result.filters)?;
        Ok(VariantRun {
            variant,
            alpha,
            calibration: None,
            result,
            report,
        })
    }

    pub fn calibrate(&self, variant: Variant, loss_fraction: f64) -> Result<VariantRun> {
        let c = solver::calibrate_alpha(&self.problem(), variant, loss_fraction)?;
        let mut run = self.solve(variant, c.alpha)?;
        run.calibration = Some(c);
        Ok(run)
    }

    /// Filtered mixture, left then right, in the time domain.
    pub fn enhance(&self, run: &VariantRun) -> Result<Vec<Vec<f64>>> {
        let z = metrics::apply_filters(&run.result.filters, &self.scene.y)?;
        Ok(synthesize(&z)?)
    }
}

/// One solved variant with its scores.
#[derive(Debug, Clone)]
pub struct VariantRun {
    pub variant: Variant,
    pub alpha: f64,
    pub calibration: Option<Calibration>,
    pub result: SolveResult,
    pub report: MetricsReport,
}

impl VariantRun {
    pub fn unconverged(&self) -> f64 {
        self.result.unconverged_fraction()
    }

    /// Mean output-noise `|IC|` over the cue band.
    pub fn mean_ic(&self, evaluator: &Evaluator) -> Option<f64> {
        metrics::mean_valid_ic(&evaluator.output_cues(&self.result.filters).noise)
    }
}

/// Result of a command: artifacts to write plus diagnostics.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub warnings: Vec<String>,
    /// Largest unconverged-bin fraction over all solves.
    pub worst_unconverged: f64,
    pub summary: Vec<String>,
}

impl Outcome {
    fn note_calibration(&mut self, run: &VariantRun) {
        if let Some(c) = run.calibration.as_ref().filter(|c| c.grid_exhausted) {
            self.warnings.push(format!(
                "{}: loss {:.4} stays below the target across the whole alpha grid; using alpha = {}",
                run.variant.name(),
                c.loss,
                c.alpha
            ));
        }
    }

    pub fn solver_failed(&self) -> bool {
        self.worst_unconverged > UNCONVERGED_LIMIT
    }
}

fn penalized_alpha(config: &RunConfig, variant: Variant) -> Result<Option<f64>> {
    if variant == Variant::Mwf || config.calibrate.is_some() {
        return Ok(None);
    }
    config
        .alpha
        .map(Some)
        .ok_or_else(|| CliError::config("run.alpha", format!("{} needs run.alpha or run.calibrate", variant.name())))
}

/// Solves every configured variant (calibrating α when asked), then
/// renders the report, per-bin tables and enhanced audio.
pub fn process(config: &RunConfig) -> Result<Outcome> {
    for &v in &config.variants {
        penalized_alpha(config, v)?;
    }
    let ex = Experiment::build(config)?;
    let mut runs = Vec::new();
    for &v in &config.variants {
        let run = match (v, config.calibrate) {
            (Variant::Mwf, _) => ex.solve(v, 0.0)?,
            (_, Some(loss)) => ex.calibrate(v, loss)?,
            (_, None) => ex.solve(v, penalized_alpha(config, v)?.unwrap_or(0.0))?,
        };
        runs.push(run);
    }
    let mut out = Outcome::default();
    out.artifacts.push(output::report_json("process", &ex, &runs)?);
    out.artifacts.push(output::coherence_csv(&ex.phi, &config.stft)?);
    for run in &runs {
        out.artifacts.push(output::bins_csv(&ex, run)?);
        out.artifacts.push(output::enhanced_wav(&ex, run)?);
        out.worst_unconverged = out.worst_unconverged.max(run.unconverged());
        out.summary.push(output::summary_line(&ex, run));
        out.note_calibration(run);
    }
    Ok(out)
}

/// One solve per (variant, α); one CSV per variant.
pub fn sweep(config: &RunConfig) -> Result<Outcome> {
    let (alphas, dropped) = config.unique_alphas();
    if alphas.len() < 2 {
        return Err(CliError::config("run.alphas", "a sweep needs at least two distinct values"));
    }
    let mut out = Outcome::default();
    if !dropped.is_empty() {
        out.warnings.push(format!("run.alphas: dropped repeated values {dropped:?}"));
    }
    let ex = Experiment::build(config)?;
    let mut tables: Vec<(Variant, Vec<SweepRow>)> = Vec::new();
    for &v in &config.variants {
        let rows = solver::alpha_sweep(&ex.problem(), v, &alphas)?;
        for r in &rows {
            out.worst_unconverged = out.worst_unconverged.max(r.unconverged_fraction);
        }
        tables.push((v, rows));
    }
    for (v, rows) in &tables {
        out.artifacts.push(output::sweep_csv(*v, rows)?);
        out.summary.push(format!("{}: {} rows", v.name(), rows.len()));
    }
    Ok(out)
}

/// α calibration for every penalized variant.
pub fn calibrate(config: &RunConfig) -> Result<Outcome> {
    let loss = config.calibrate.unwrap_or(DEFAULT_LOSS_FRACTION);
    let ex = Experiment::build(config)?;
    let mut runs = vec![ex.solve(Variant::Mwf, 0.0)?];
    for &v in config.variants.iter().filter(|&&v| v != Variant::Mwf) {
        runs.push(ex.calibrate(v, loss)?);
    }
    let mut out = Outcome::default();
    out.artifacts.push(output::report_json("calibrate", &ex, &runs)?);
    for run in &runs {
        out.worst_unconverged = out.worst_unconverged.max(run.unconverged());
        out.summary.push(output::summary_line(&ex, run));
        out.note_calibration(run);
    }
    Ok(out)
}

/// One row of the phase-density table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseRow {
    pub theta: f64,
    pub analytic: f64,
    pub monte_carlo: f64,
}

/// Grid of `points` angles `−π + i·2π/points`, `i = 1..=points`, so the
/// grid ends at `π`. Each Monte-Carlo value is the sample density over the
/// cell `(θ − 2π/points, θ]`.
pub fn phase_table(config: &RunConfig) -> Result<Vec<PhaseRow>> {
    let p = &config.phase;
    let params = RatioPhaseParams::unit(C64::from_polar(p.rho, p.rho_arg))
        .map_err(|e| CliError::config("phase.rho", e.to_string()))?;
    let samples = sample_ratio_phase(&params, p.samples, rng::derive_seed(config.seed, "phase-pdf"))?;
    let width = 2.0 * PI / p.points as f64;
    let mut counts = vec![0u64; p.points];
    for t in samples {
        let i = (((t + PI) / width).ceil() as isize - 1).clamp(0, p.points as isize - 1);
        counts[i as usize] += 1;
    }
    (0..p.points)
        .map(|i| {
            let theta = if i + 1 == p.points { PI } else { -PI + (i + 1) as f64 * width };
            Ok(PhaseRow {
                theta,
                analytic: phase_pdf(theta, &params)?,
                monte_carlo: counts[i] as f64 / (p.samples as f64 * width),
            })
        })
        .collect()
}

pub fn phase_pdf_command(config: &RunConfig) -> Result<Outcome> {
    let rows = phase_table(config)?;
    Ok(Outcome {
        artifacts: vec![output::phase_csv(&rows)?],
        summary: vec![format!("{} grid points", rows.len())],
        ..Outcome::default()
    })
}
