//! Artifact rendering (JSON, CSV, WAV) and writing.

use std::path::Path;

use serde::Serialize;

use cuemwf_core::costs::Variant;
use cuemwf_core::metrics::MetricsReport;
use cuemwf_core::scene::Ear;
use cuemwf_core::solver::{Calibration, SweepRow};
use cuemwf_core::spatial::CoherenceSet;
use cuemwf_core::stft::StftConfig;
use cuemwf_core::C64;

use crate::audio::encode_wav;
use crate::error::{CliError, Result};
use crate::pipeline::{Experiment, PhaseRow, VariantRun};

/// A named file image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Creates `dir` and writes every artifact into it.
pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for a in artifacts {
        let p = dir.join(&a.name);
        std::fs::write(&p, &a.bytes).map_err(|e| CliError::io(&p, e))?;
    }
    Ok(())
}

/// File-name form of a variant name.
pub fn slug(v: Variant) -> String {
    v.name().to_ascii_lowercase()
}

/// Shortest round-trip decimal, in exponent form outside `[1e-4, 1e6)`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e6).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn csv_artifact(name: String, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Artifact> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::io(&name, e);
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(&r).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(&name, e.error()))?;
    Ok(Artifact { name, bytes })
}

#[derive(Serialize)]
struct SceneSummary {
    worst_ear: Ear,
    input_snr_db: [f64; 2],
    noise_gain: f64,
    frames: usize,
    speech_frames: usize,
    noise_frames: usize,
    mics_per_ear: usize,
}

#[derive(Serialize)]
struct VariantSummary<'a> {
    variant: &'static str,
    alpha: f64,
    calibration: Option<&'a Calibration>,
    metrics: &'a MetricsReport,
    mean_noise_ic: Option<f64>,
    unconverged_fraction: f64,
    iterations: usize,
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'a str,
    seed: u64,
    config: &'a std::collections::BTreeMap<String, String>,
    scene: SceneSummary,
    variants: Vec<VariantSummary<'a>>,
}

pub fn report_json(command: &str, ex: &Experiment, runs: &[VariantRun]) -> Result<Artifact> {
    let report = Report {
        command,
        seed: ex.config.seed,
        config: &ex.config.entries,
        scene: SceneSummary {
            worst_ear: ex.scene.worst_ear,
            input_snr_db: ex.scene.input_snr_db,
            noise_gain: ex.scene.noise_gain,
            frames: ex.scene.vad.len(),
            speech_frames: ex.scene.vad.active_count(),
            noise_frames: ex.scene.vad.inactive_count(),
            mics_per_ear: ex.sel.channels / 2,
        },
        variants: runs
            .iter()
            .map(|r| VariantSummary {
                variant: r.variant.name(),
                alpha: r.alpha,
                calibration: r.calibration.as_ref(),
                metrics: &r.report,
                mean_noise_ic: r.mean_ic(&ex.evaluator),
                unconverged_fraction: r.unconverged(),
                iterations: r.result.total_iterations(),
            })
            .collect(),
    };
    let mut bytes = serde_json::to_vec_pretty(&report).map_err(|e| CliError::io("report.json", e))?;
    bytes.push(b'\n');
    Ok(Artifact {
        name: format!("{command}.json"),
        bytes,
    })
}

/// Per-bin cues of the speech and noise components before and after
/// filtering, with solver diagnostics.
pub fn bins_csv(ex: &Experiment, run: &VariantRun) -> Result<Artifact> {
    let inp = ex.evaluator.input_cues();
    let out = ex.evaluator.output_cues(&run.result.filters);
    let header = [
        "bin", "freq_hz", "cue_band", "ipd_in_n", "ipd_out_n", "ic_in_n", "ic_out_n", "ipd_in_s", "ipd_out_s",
        "ic_in_s", "ic_out_s", "initial_cost", "cost", "iterations", "converged", "loaded", "flagged",
        "gradient_norm",
    ];
    let rows = run.result.bins.iter().enumerate().map(|(k, d)| {
        vec![
            k.to_string(),
            num(inp.noise.freqs[k]),
            inp.noise.valid[k].to_string(),
            num(inp.noise.ipd[k]),
            num(out.noise.ipd[k]),
            num(inp.noise.ic[k].norm()),
            num(out.noise.ic[k].norm()),
            num(inp.speech.ipd[k]),
            num(out.speech.ipd[k]),
            num(inp.speech.ic[k].norm()),
            num(out.speech.ic[k].norm()),
            num(d.initial_cost),
            num(d.cost),
            d.iterations.to_string(),
            d.converged.to_string(),
            d.loaded.to_string(),
            d.flagged.to_string(),
            num(d.gradient_norm),
        ]
    });
    csv_artifact(format!("bins_{}.csv", slug(run.variant)), &header, rows)
}

pub fn enhanced_wav(ex: &Experiment, run: &VariantRun) -> Result<Artifact> {
    let audio = ex.enhance(run)?;
    Ok(Artifact {
        name: format!("enhanced_{}.wav", slug(run.variant)),
        bytes: encode_wav(&audio, ex.config.stft.sample_rate, true),
    })
}

/// Upper triangles of `Φ_yy`, `Φ_xx`, `Φ_vv`, one row per bin.
pub fn coherence_csv(phi: &CoherenceSet, stft: &StftConfig) -> Result<Artifact> {
    let m = phi.channels();
    let mut header = vec!["bin".to_string(), "freq_hz".to_string()];
    for name in ["yy", "xx", "vv"] {
        for i in 0..m {
            for j in i..m {
                header.push(format!("{name}_{i}{j}_re"));
                header.push(format!("{name}_{i}{j}_im"));
            }
        }
    }
    let rows = (0..phi.bins()).map(|k| {
        let mut r = vec![k.to_string(), num(stft.bin_frequency(k))];
        for mat in [&phi.phi_yy[k], &phi.phi_xx[k], &phi.phi_vv[k]] {
            for i in 0..m {
                for j in i..m {
                    let z: C64 = mat[(i, j)];
                    r.push(num(z.re));
                    r.push(num(z.im));
                }
            }
        }
        r
    });
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_artifact("coherence.csv".to_string(), &header, rows)
}

pub const SWEEP_COLUMNS: [&str; 9] = [
    "alpha", "snr_l_db", "snr_r_db", "disnr_l_db", "disnr_r_db", "ditd_s", "ditd_n", "dmsc_s", "dmsc_n",
];

pub fn sweep_csv(variant: Variant, rows: &[SweepRow]) -> Result<Artifact> {
    let body = rows.iter().map(|r| {
        let m = &r.report;
        [r.alpha, m.snr_l, m.snr_r, m.disnr_l, m.disnr_r, m.ditd_s, m.ditd_n, m.dmsc_s, m.dmsc_n]
            .into_iter()
            .map(num)
            .collect()
    });
    csv_artifact(format!("sweep_{}.csv", slug(variant)), &SWEEP_COLUMNS, body)
}

pub fn phase_csv(rows: &[PhaseRow]) -> Result<Artifact> {
    let body = rows
        .iter()
        .map(|r| vec![num(r.theta), num(r.analytic), num(r.monte_carlo)]);
    csv_artifact("phase_pdf.csv".to_string(), &["theta", "analytic", "monte_carlo"], body)
}

pub fn summary_line(ex: &Experiment, run: &VariantRun) -> String {
    let m = &run.report;
    let loss = run
        .calibration
        .as_ref()
        .map_or(String::new(), |c| format!(" loss={:.4}", c.loss));
    format!(
        "{:<8} alpha={}{} snr=({:.2}, {:.2}) dB ditd_n={:.4} dmsc_n={:.4} ditd_s={:.4} mean|ic|={:.3} unconverged={:.3}",
        run.variant.name(),
        num(run.alpha),
        loss,
        m.snr_l,
        m.snr_r,
        m.ditd_n,
        m.dmsc_n,
        m.ditd_s,
        run.mean_ic(&ex.evaluator).unwrap_or(f64::NAN),
        run.unconverged(),
    )
}
