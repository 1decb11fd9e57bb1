//! Synthetic binaural scenes: one speech source and one directional noise
//! source captured by two behind-the-ear arrays.
//!
//! Sources are rendered in the STFT domain through per-bin steering
//! vectors, `x(λ,k) = h_s(k) s(λ,k)` and `v(λ,k) = h_v(k) n(λ,k)`, so each
//! directional component is exactly rank one. The steering vectors come
//! from a parametric free-field head model:
//!
//! - interaural delay: Woodworth, `τ(θ) = (a/c)(θ + sin θ)`, split evenly
//!   between the ears;
//! - intra-array delay: plane wave across microphones spaced along the
//!   front-back axis (microphone 0 of each ear is the front one and the
//!   reference);
//! - gain: `1/r` spreading times the magnitude of a one-pole/one-zero head
//!   shadow filter, which attenuates the contralateral ear more as
//!   frequency rises.
//!
//! User-supplied impulse responses can replace the head model, in which
//! case the sources are convolved in the time domain before analysis.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::invalid;
use crate::linalg::CVec;
use crate::rng;
use crate::stft::{analyze, SpectralTensor, StftConfig};
use crate::{Result, C64};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ArrayGeometry {
    pub mics_per_ear: usize,
    /// Distance between neighbouring microphones of one device, meters.
    pub spacing: f64,
    pub head_radius: f64,
    pub sound_speed: f64,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        Self {
            mics_per_ear: 3,
            spacing: 0.0076,
            head_radius: 0.0875,
            sound_speed: 343.0,
        }
    }
}

impl ArrayGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.mics_per_ear == 0 {
            return invalid("geometry.mics_per_ear must be at least 1");
        }
        if !(self.spacing > 0.0) {
            return invalid("geometry.spacing must be positive");
        }
        if !(self.head_radius > 0.0) {
            return invalid("geometry.head_radius must be positive");
        }
        if !(self.sound_speed > 0.0) {
            return invalid("geometry.sound_speed must be positive");
        }
        Ok(())
    }

    pub fn channel_count(&self) -> usize {
        2 * self.mics_per_ear
    }

    pub fn reference_left(&self) -> usize {
        0
    }

    pub fn reference_right(&self) -> usize {
        self.mics_per_ear
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Ear {
    Left,
    Right,
}

impl Ear {
    pub fn index(self) -> usize {
        match self {
            Ear::Left => 0,
            Ear::Right => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SceneSpec {
    /// Degrees; negative is left of the sagittal plane.
    pub speech_azimuth: f64,
    pub noise_azimuth: f64,
    pub speech_distance: f64,
    pub noise_distance: f64,
    /// SNR at the reference microphone of the ear nearest the noise, dB.
    pub target_snr_worst_ear: f64,
    /// Hz.
    pub noise_cutoff: f64,
    /// Level of spatially white microphone self-noise relative to the mean
    /// directional-noise power at the two reference microphones, dB.
    /// `None` renders a purely directional (rank-one) noise field.
    pub sensor_noise_db: Option<f64>,
    /// Frames more than this many dB below the loudest clean-speech frame
    /// are labelled noise-only.
    pub vad_threshold_db: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            speech_azimuth: 0.0,
            noise_azimuth: 30.0,
            speech_distance: 0.8,
            noise_distance: 3.0,
            target_snr_worst_ear: 0.0,
            noise_cutoff: 1500.0,
            sensor_noise_db: Some(DEFAULT_SENSOR_NOISE_DB),
            vad_threshold_db: 40.0,
            seed: 0,
        }
    }
}

pub const DEFAULT_SENSOR_NOISE_DB: f64 = -30.0;

/// Taps of the FIR low-pass shaping the noise source.
pub const NOISE_FILTER_TAPS: usize = 513;

impl SceneSpec {
    pub fn validate(&self, cfg: &StftConfig) -> Result<()> {
        check_azimuth(self.speech_azimuth)?;
        check_azimuth(self.noise_azimuth)?;
        if !(self.speech_distance > 0.0) || !(self.noise_distance > 0.0) {
            return invalid("scene distances must be positive");
        }
        if !(self.noise_cutoff > 0.0) || self.noise_cutoff >= cfg.sample_rate / 2.0 {
            return invalid("scene.noise_cutoff must lie in (0, Nyquist)");
        }
        if !self.target_snr_worst_ear.is_finite() {
            return invalid("scene.target_snr_worst_ear must be finite");
        }
        if !(self.vad_threshold_db >= 0.0) {
            return invalid("scene.vad_threshold_db must be non-negative");
        }
        Ok(())
    }
}

fn check_azimuth(deg: f64) -> Result<()> {
    if !(deg.abs() <= 90.0) {
        return invalid("azimuth must lie in [-90, 90] degrees");
    }
    Ok(())
}

/// Per-bin acoustic transfer vectors from one source to all microphones.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVectorSet {
    vectors: Vec<CVec>,
}

impl SteeringVectorSet {
    pub fn from_vectors(vectors: Vec<CVec>) -> Self {
        Self { vectors }
    }

    pub fn at(&self, bin: usize) -> &CVec {
        &self.vectors[bin]
    }

    pub fn bins(&self) -> usize {
        self.vectors.len()
    }
}

/// Signed Woodworth interaural delay `τ_L - τ_R` in seconds; positive when
/// the source is on the right.
pub fn woodworth_itd(head_radius: f64, sound_speed: f64, azimuth_rad: f64) -> f64 {
    let t = azimuth_rad.abs();
    azimuth_rad.signum() * head_radius / sound_speed * (t + t.sin())
}

/// Magnitude of the one-pole/one-zero head-shadow filter for a wave
/// arriving `incidence_rad` away from the ear axis.
pub fn head_shadow_gain(freq: f64, incidence_rad: f64, head_radius: f64, sound_speed: f64) -> f64 {
    const ALPHA_MIN: f64 = 0.1;
    const THETA_MIN: f64 = 150.0 * PI / 180.0;
    let alpha = (1.0 + ALPHA_MIN / 2.0) + (1.0 - ALPHA_MIN / 2.0) * (incidence_rad / THETA_MIN * PI).cos();
    let w0 = sound_speed / head_radius;
    let u = 2.0 * PI * freq / (2.0 * w0);
    C64::new(1.0, alpha * u).norm() / C64::new(1.0, u).norm()
}

/// Free-field steering vectors for a source at `azimuth_deg` (zero
/// elevation) and `distance` meters.
///
/// Channel order is `L1..L_M, R1..R_M`. Delays are relative to the head
/// centre; the common propagation delay `r/c` is omitted.
pub fn steering_vector(
    geometry: &ArrayGeometry,
    azimuth_deg: f64,
    distance: f64,
    cfg: &StftConfig,
) -> Result<SteeringVectorSet> {
    geometry.validate()?;
    check_azimuth(azimuth_deg)?;
    if !(distance > 0.0) {
        return invalid("source distance must be positive");
    }
    let theta = azimuth_deg * PI / 180.0;
    let itd = woodworth_itd(geometry.head_radius, geometry.sound_speed, theta);
    let intra = geometry.spacing * theta.cos() / geometry.sound_speed;
    let incidence = [(theta + PI / 2.0).abs(), (theta - PI / 2.0).abs()];
    let ear_delay = [itd / 2.0, -itd / 2.0];
    let m = geometry.mics_per_ear;
    let vectors = (0..cfg.bin_count())
        .map(|k| {
            let f = cfg.bin_frequency(k);
            CVec::from_iterator(
                2 * m,
                (0..2 * m).map(|ch| {
                    let ear = ch / m;
                    let pos = ch % m;
                    let tau = ear_delay[ear] + pos as f64 * intra;
                    let gain = head_shadow_gain(f, incidence[ear], geometry.head_radius, geometry.sound_speed)
                        / distance;
                    C64::from_polar(gain, -2.0 * PI * f * tau)
                }),
            )
        })
        .collect();
    Ok(SteeringVectorSet { vectors })
}

/// Per-frame speech activity.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VadLabels {
    pub active: Vec<bool>,
}

impl VadLabels {
    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn inactive_count(&self) -> usize {
        self.len() - self.active_count()
    }
}

/// Labels a frame active iff its clean-speech energy is within
/// `threshold_db` of the loudest frame.
pub fn ideal_vad(clean_speech: &SpectralTensor, threshold_db: f64) -> Result<VadLabels> {
    if clean_speech.frames() == 0 || clean_speech.channels() == 0 {
        return invalid("empty tensor");
    }
    if !(threshold_db >= 0.0) {
        return invalid("VAD threshold must be non-negative");
    }
    let energy: Vec<f64> = (0..clean_speech.frames())
        .map(|l| clean_speech.frame_energy(l))
        .collect();
    let peak = energy.iter().copied().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return invalid("clean speech is silent");
    }
    let floor = peak * 10f64.powf(-threshold_db / 10.0);
    Ok(VadLabels {
        active: energy.iter().map(|&e| e > 0.0 && e >= floor).collect(),
    })
}

/// Blackman-windowed sinc low-pass.
///
/// The design frequency sits half a transition band below `cutoff`, so the
/// stop band starts at `cutoff`.
pub fn design_lowpass(cutoff: f64, sample_rate: f64, taps: usize) -> Result<Vec<f64>> {
    if taps < 3 || taps % 2 == 0 {
        return invalid("low-pass tap count must be odd and at least 3");
    }
    let half_transition = 2.75 * sample_rate / taps as f64;
    let fc = cutoff - half_transition;
    if !(fc > 0.0) || cutoff >= sample_rate / 2.0 {
        return invalid("low-pass cutoff out of range for this tap count");
    }
    let wc = 2.0 * PI * fc / sample_rate;
    let mid = (taps / 2) as f64;
    let n1 = (taps - 1) as f64;
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let t = i as f64 - mid;
            let sinc = if t == 0.0 { wc / PI } else { (wc * t).sin() / (PI * t) };
            let a = 2.0 * PI * i as f64 / n1;
            let w = 0.42 - 0.5 * a.cos() + 0.08 * (2.0 * a).cos();
            sinc * w
        })
        .collect();
    let dc: f64 = h.iter().sum();
    for v in &mut h {
        *v /= dc;
    }
    Ok(h)
}

/// Direct-form FIR filtering, output aligned to the input (group delay
/// removed) and of the same length.
pub fn fir_filter_centered(x: &[f64], h: &[f64]) -> Vec<f64> {
    let delay = h.len() / 2;
    (0..x.len())
        .map(|n| {
            let t = n + delay;
            let lo = t.saturating_sub(x.len() - 1);
            let hi = t.min(h.len() - 1);
            (lo..=hi).map(|j| h[j] * x[t - j]).sum()
        })
        .collect()
}

/// Full linear convolution.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut y = vec![0.0; x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (j, &hj) in h.iter().enumerate() {
            y[i + j] += xi * hj;
        }
    }
    y
}

/// Seeded white Gaussian noise, low-passed at `cutoff`.
pub fn lowpass_noise(len: usize, cutoff: f64, sample_rate: f64, seed: u64) -> Result<Vec<f64>> {
    let h = design_lowpass(cutoff, sample_rate, NOISE_FILTER_TAPS)?;
    let white = white_noise(len, rng::derive_seed(seed, "noise-source"));
    Ok(fir_filter_centered(&white, &h))
}

pub fn white_noise(len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, "white");
    (0..len).map(|_| StandardNormal.sample(&mut r)).collect()
}

/// A deterministic speech-like test signal: voiced syllables (harmonic
/// series with gliding pitch and two formant peaks, plus a little
/// aspiration noise) separated by pauses. Peak amplitude 0.5.
pub fn speech_like_signal(duration_s: f64, sample_rate: f64, seed: u64) -> Vec<f64> {
    let len = (duration_s * sample_rate).round().max(0.0) as usize;
    let mut out = vec![0.0; len];
    let mut r = rng::stream(seed, "speech-like");
    let lead = (0.25 * sample_rate) as usize;
    let mut pos = lead;
    let mut syllable = 0usize;
    while pos + (0.1 * sample_rate) as usize + lead < len {
        let dur = ((r.random_range(0.12..0.35)) * sample_rate) as usize;
        let dur = dur.min(len - lead - pos);
        let f0_start: f64 = r.random_range(95.0..150.0);
        let f0_end = f0_start * r.random_range(0.85..1.15);
        let f1: f64 = r.random_range(300.0..800.0);
        let f2: f64 = r.random_range(900.0..2200.0);
        let amp: f64 = r.random_range(0.4..1.0);
        let mut phases = [0.0f64; 64];
        for i in 0..dur {
            let t = i as f64 / dur as f64;
            let env = (PI * t).sin().powi(2);
            let f0 = f0_start + (f0_end - f0_start) * t;
            let mut s = 0.0;
            for (h, phase) in phases.iter_mut().enumerate() {
                let fh = (h + 1) as f64 * f0;
                if fh > 4000.0 {
                    break;
                }
                *phase += 2.0 * PI * fh / sample_rate;
                let shape = 1.0
                    + 3.0 * (-((fh - f1) / 150.0).powi(2)).exp()
                    + 2.0 * (-((fh - f2) / 200.0).powi(2)).exp();
                s += shape / ((h + 1) as f64).powf(0.7) * phase.sin();
            }
            let breath: f64 = StandardNormal.sample(&mut r);
            out[pos + i] += amp * env * (s + 0.03 * breath);
        }
        pos += dur;
        syllable += 1;
        let pause = if syllable % 4 == 0 {
            r.random_range(0.3..0.5)
        } else {
            r.random_range(0.06..0.3)
        };
        pos += (pause * sample_rate) as usize;
    }
    let peak = out.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if peak > 0.0 {
        for v in &mut out {
            *v *= 0.5 / peak;
        }
    }
    out
}

/// A rendered scene. `y = x + v` holds bin-wise.
#[derive(Debug, Clone)]
pub struct Scene {
    pub y: SpectralTensor,
    pub x: SpectralTensor,
    pub v: SpectralTensor,
    pub vad: VadLabels,
    pub worst_ear: Ear,
    /// Amplitude factor applied to the noise to meet the SNR target.
    pub noise_gain: f64,
    /// Unprocessed SNR at the left and right reference microphones, dB.
    pub input_snr_db: [f64; 2],
    pub reference: [usize; 2],
}

impl Scene {
    /// Rescales the noise component by `gain` and rebuilds `y`.
    pub fn with_noise_gain(&self, gain: f64) -> Self {
        let mut v = self.v.clone();
        v.scale(gain);
        let y = self.x.try_add(&v).expect("components share a shape");
        let input_snr_db = [
            reference_snr_db(&self.x, &v, &self.vad, self.reference[0]),
            reference_snr_db(&self.x, &v, &self.vad, self.reference[1]),
        ];
        Self {
            y,
            v,
            noise_gain: self.noise_gain * gain,
            input_snr_db,
            ..self.clone()
        }
    }
}

/// `10 log10(Σ|x|² / Σ|v|²)` at one channel over speech-active frames and
/// all bins.
pub fn reference_snr_db(x: &SpectralTensor, v: &SpectralTensor, vad: &VadLabels, channel: usize) -> f64 {
    let (mut px, mut pv) = (0.0, 0.0);
    for l in (0..x.frames()).filter(|&l| vad.active[l]) {
        px += x.frame(channel, l).iter().map(|c| c.norm_sqr()).sum::<f64>();
        pv += v.frame(channel, l).iter().map(|c| c.norm_sqr()).sum::<f64>();
    }
    10.0 * (px / pv).log10()
}

fn check_speech(speech: &[f64], cfg: &StftConfig) -> Result<()> {
    if speech.len() < cfg.window_len {
        return invalid("speech shorter than one analysis window");
    }
    if speech.iter().all(|v| *v == 0.0) {
        return invalid("speech signal is silent");
    }
    if speech.iter().any(|v| !v.is_finite()) {
        return invalid("speech signal contains non-finite samples");
    }
    Ok(())
}

fn apply_steering(source: &SpectralTensor, steering: &SteeringVectorSet) -> SpectralTensor {
    let channels = steering.at(0).len();
    let mut out = SpectralTensor::zeros(source.config().clone(), channels, source.frames());
    for m in 0..channels {
        for l in 0..source.frames() {
            let src = source.frame(0, l);
            let dst = out.frame_mut(m, l);
            for (k, d) in dst.iter_mut().enumerate() {
                *d = steering.at(k)[m] * src[k];
            }
        }
    }
    out
}

/// Renders speech and noise through the parametric head model.
pub fn synthesize_scene(
    speech: &[f64],
    spec: &SceneSpec,
    geometry: &ArrayGeometry,
    cfg: &StftConfig,
) -> Result<Scene> {
    cfg.validate()?;
    geometry.validate()?;
    spec.validate(cfg)?;
    check_speech(speech, cfg)?;
    let hs = steering_vector(geometry, spec.speech_azimuth, spec.speech_distance, cfg)?;
    let hv = steering_vector(geometry, spec.noise_azimuth, spec.noise_distance, cfg)?;
    let s = analyze(&[speech], cfg)?;
    let noise = lowpass_noise(speech.len(), spec.noise_cutoff, cfg.sample_rate, spec.seed)?;
    let n = analyze(&[noise], cfg)?;
    let x = apply_steering(&s, &hs);
    let v = apply_steering(&n, &hv);
    assemble(x, v, spec, geometry, cfg)
}

/// Renders speech and noise through measured impulse responses, one per
/// microphone in channel order `L1..L_M, R1..R_M`.
pub fn synthesize_scene_with_irs(
    speech: &[f64],
    spec: &SceneSpec,
    speech_ir: &[Vec<f64>],
    noise_ir: &[Vec<f64>],
    cfg: &StftConfig,
) -> Result<Scene> {
    cfg.validate()?;
    spec.validate(cfg)?;
    check_speech(speech, cfg)?;
    if speech_ir.is_empty() || speech_ir.len() % 2 != 0 || speech_ir.len() != noise_ir.len() {
        return invalid("impulse responses need the same even channel count for both sources");
    }
    if speech_ir.iter().chain(noise_ir).any(|h| h.is_empty()) {
        return invalid("empty impulse response");
    }
    let geometry = ArrayGeometry {
        mics_per_ear: speech_ir.len() / 2,
        ..ArrayGeometry::default()
    };
    let noise = lowpass_noise(speech.len(), spec.noise_cutoff, cfg.sample_rate, spec.seed)?;
    let render = |src: &[f64], irs: &[Vec<f64>]| -> Vec<Vec<f64>> {
        irs.iter()
            .map(|h| {
                let mut y = convolve(src, h);
                y.truncate(src.len());
                y
            })
            .collect()
    };
    let x = analyze(&render(speech, speech_ir), cfg)?;
    let v = analyze(&render(&noise, noise_ir), cfg)?;
    assemble(x, v, spec, &geometry, cfg)
}

fn assemble(
    x: SpectralTensor,
    mut v: SpectralTensor,
    spec: &SceneSpec,
    geometry: &ArrayGeometry,
    cfg: &StftConfig,
) -> Result<Scene> {
    let reference = [geometry.reference_left(), geometry.reference_right()];
    if let Some(level_db) = spec.sensor_noise_db {
        let channels = v.channels();
        let len = cfg.synthesis_len(v.frames());
        let audio: Vec<Vec<f64>> = (0..channels)
            .map(|m| white_noise(len, rng::derive_seed(spec.seed, &alloc::format!("sensor-{m}"))))
            .collect();
        let mut sensor = analyze(&audio, cfg)?;
        let power = |t: &SpectralTensor, ch: usize| -> f64 {
            (0..t.frames())
                .map(|l| t.frame(ch, l).iter().map(|c| c.norm_sqr()).sum::<f64>())
                .sum::<f64>()
        };
        let directional = 0.5 * (power(&v, reference[0]) + power(&v, reference[1]));
        let own = (0..channels).map(|m| power(&sensor, m)).sum::<f64>() / channels as f64;
        if directional > 0.0 && own > 0.0 {
            sensor.scale((directional / own * 10f64.powf(level_db / 10.0)).sqrt());
            v = v.try_add(&sensor)?;
        }
    }
    let vad = ideal_vad(&x, spec.vad_threshold_db)?;
    if vad.active_count() == 0 || vad.inactive_count() == 0 {
        return invalid("scene needs both speech-active and noise-only frames");
    }
    let snr = [
        reference_snr_db(&x, &v, &vad, reference[0]),
        reference_snr_db(&x, &v, &vad, reference[1]),
    ];
    if !snr.iter().all(|s| s.is_finite()) {
        return invalid("noise has no energy during speech");
    }
    let worst_ear = if spec.noise_azimuth > 0.0 {
        Ear::Right
    } else if spec.noise_azimuth < 0.0 {
        Ear::Left
    } else if snr[1] <= snr[0] {
        Ear::Right
    } else {
        Ear::Left
    };
    let gain = 10f64.powf((snr[worst_ear.index()] - spec.target_snr_worst_ear) / 20.0);
    v.scale(gain);
    let y = x.try_add(&v)?;
    let input_snr_db = [
        reference_snr_db(&x, &v, &vad, reference[0]),
        reference_snr_db(&x, &v, &vad, reference[1]),
    ];
    Ok(Scene {
        y,
        x,
        v,
        vad,
        worst_ear,
        noise_gain: gain,
        input_snr_db,
        reference,
    })
}
