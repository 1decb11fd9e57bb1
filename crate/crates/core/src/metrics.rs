//! Objective evaluation: SNR, intelligibility-weighted SNR gain, ITD and
//! coherence errors, and IC magnitude spectra.
//!
//! Filters are evaluated by shadow filtering: the filter computed on the
//! mixture is applied separately to the speech and noise components.

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::costs::FilterPair;
use crate::error::invalid;
use crate::linalg::CMat;
use crate::scene::{Ear, VadLabels};
use crate::spatial::{self, wrap_angle, CueEstimate, Selector};
use crate::stft::{SpectralTensor, StftConfig};
use crate::{Error, Result, C64};

/// `z = wᴴ t` per bin and frame. The result has two channels, left then
/// right.
pub fn apply_filters(filters: &FilterPair, t: &SpectralTensor) -> Result<SpectralTensor> {
    t.check_shape()?;
    if filters.bins.len() != t.bins() {
        return Err(Error::DimensionMismatch {
            expected: t.bins(),
            found: filters.bins.len(),
        });
    }
    if filters.channels() != t.channels() {
        return Err(Error::DimensionMismatch {
            expected: t.channels(),
            found: filters.channels(),
        });
    }
    let mut out = SpectralTensor::zeros(t.config().clone(), 2, t.frames());
    for l in 0..t.frames() {
        for (ear, pick) in [(0usize, false), (1usize, true)] {
            for k in 0..t.bins() {
                let w = if pick { &filters.bins[k].right } else { &filters.bins[k].left };
                let mut acc = C64::new(0.0, 0.0);
                for (m, wm) in w.iter().enumerate() {
                    acc += wm.conj() * t.get(m, l, k);
                }
                out.set(ear, l, k, acc);
            }
        }
    }
    Ok(out)
}

/// Shadow-filters the speech and noise components.
pub fn shadow_filter(
    filters: &FilterPair,
    x: &SpectralTensor,
    v: &SpectralTensor,
) -> Result<(SpectralTensor, SpectralTensor)> {
    x.same_shape(v)?;
    Ok((apply_filters(filters, x)?, apply_filters(filters, v)?))
}

/// Speech-active energy of one channel over a set of bins.
fn active_energy(t: &SpectralTensor, vad: &VadLabels, channel: usize, bins: core::ops::Range<usize>) -> f64 {
    (0..t.frames())
        .filter(|&l| vad.active[l])
        .map(|l| t.frame(channel, l)[bins.clone()].iter().map(|c| c.norm_sqr()).sum::<f64>())
        .sum()
}

fn db_ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        10.0 * (num / den).log10()
    } else {
        f64::INFINITY
    }
}

/// Left/right SNR in dB of two-channel component spectra over speech-active
/// frames and all bins. Zero noise energy gives `+∞`.
pub fn snr_db(zx: &SpectralTensor, zv: &SpectralTensor, vad: &VadLabels) -> Result<[f64; 2]> {
    zx.same_shape(zv)?;
    if zx.channels() != 2 || vad.len() != zx.frames() {
        return invalid("SNR needs two-channel spectra and one VAD label per frame");
    }
    let all = 0..zx.bins();
    Ok([0, 1].map(|ch| db_ratio(active_energy(zx, vad, ch, all.clone()), active_energy(zv, vad, ch, all.clone()))))
}

/// One-third-octave band importance function.
#[derive(Debug, Clone, PartialEq)]
pub struct BandImportance {
    pub centers: Vec<f64>,
    /// Normalized to sum to one.
    pub weights: Vec<f64>,
}

const SII_CENTERS: [f64; 18] = [
    160.0, 200.0, 250.0, 315.0, 400.0, 500.0, 630.0, 800.0, 1000.0, 1250.0, 1600.0, 2000.0, 2500.0, 3150.0,
    4000.0, 5000.0, 6300.0, 8000.0,
];
const SII_WEIGHTS: [f64; 18] = [
    0.0083, 0.0095, 0.0150, 0.0289, 0.0440, 0.0578, 0.0653, 0.0711, 0.0818, 0.0844, 0.0882, 0.0898, 0.0868,
    0.0844, 0.0771, 0.0527, 0.0364, 0.0185,
];

impl BandImportance {
    pub fn new(centers: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if centers.is_empty() || centers.len() != weights.len() {
            return invalid("band table needs one weight per centre frequency");
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || centers.iter().any(|c| !(*c > 0.0)) {
            return invalid("band weights must be non-negative and centres positive");
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return invalid("band weights sum to zero");
        }
        Ok(Self {
            centers,
            weights: weights.iter().map(|w| w / total).collect(),
        })
    }

    /// Speech-intelligibility-index one-third-octave table, 160 Hz to 8 kHz.
    pub fn sii_third_octave() -> Self {
        Self::new(SII_CENTERS.to_vec(), SII_WEIGHTS.to_vec()).expect("static table is valid")
    }

    /// Bin range `[lo, hi)` of each band, edges at `fc · 2^{±1/6}`.
    pub fn bin_ranges(&self, cfg: &StftConfig) -> Vec<core::ops::Range<usize>> {
        let df = cfg.sample_rate / cfg.fft_size as f64;
        let nb = cfg.bin_count();
        let edge = libm::pow(2.0, 1.0 / 6.0);
        self.centers
            .iter()
            .map(|fc| {
                let lo = ((fc / edge) / df).ceil() as usize;
                let hi = (((fc * edge) / df).ceil() as usize).min(nb);
                lo.min(hi)..hi
            })
            .collect()
    }
}

/// Per-band SNR in dB of one channel; `None` where either component is
/// silent or the band holds no bins.
pub fn band_snr_db(
    zx: &SpectralTensor,
    zv: &SpectralTensor,
    vad: &VadLabels,
    channel: usize,
    bands: &BandImportance,
) -> Vec<Option<f64>> {
    bands
        .bin_ranges(zx.config())
        .into_iter()
        .map(|r| {
            if r.is_empty() {
                return None;
            }
            let px = active_energy(zx, vad, channel, r.clone());
            let pv = active_energy(zv, vad, channel, r);
            (px > 0.0 && pv > 0.0).then(|| 10.0 * (px / pv).log10())
        })
        .collect()
}

/// `Σ_b I_b (SNR_out,b − SNR_in,b)` over bands defined on both sides, with
/// the weights renormalized over those bands. `None` if no band qualifies.
pub fn weighted_snr_gain(before: &[Option<f64>], after: &[Option<f64>], weights: &[f64]) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((b, a), w) in before.iter().zip(after).zip(weights) {
        if let (Some(b), Some(a)) = (b, a) {
            num += w * (a - b);
            den += w;
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Intelligibility-weighted SNR gain per ear, dB.
pub fn delta_isnr(
    before: (&SpectralTensor, &SpectralTensor),
    after: (&SpectralTensor, &SpectralTensor),
    vad: &VadLabels,
    bands: &BandImportance,
) -> Result<[f64; 2]> {
    before.0.same_shape(before.1)?;
    after.0.same_shape(after.1)?;
    before.0.same_shape(after.0)?;
    let mut out = [0.0; 2];
    for (ch, slot) in out.iter_mut().enumerate() {
        let b = band_snr_db(before.0, before.1, vad, ch, bands);
        let a = band_snr_db(after.0, after.1, vad, ch, bands);
        *slot = weighted_snr_gain(&b, &a, &bands.weights)
            .ok_or_else(|| Error::InvalidInput("no band with finite SNR on both sides".into()))?;
    }
    Ok(out)
}

/// Mean over bins with a defined phase on both sides of
/// `|wrap(ipd_out − ipd_in)| / π`.
pub fn delta_itd(cues_in: &CueEstimate, cues_out: &CueEstimate) -> Option<f64> {
    let bins: Vec<usize> = (0..cues_in.bins().min(cues_out.bins()))
        .filter(|&k| cues_in.ipd_defined[k] && cues_out.ipd_defined[k])
        .collect();
    if bins.is_empty() {
        return None;
    }
    let sum: f64 = bins
        .iter()
        .map(|&k| wrap_angle(cues_out.ipd[k] - cues_in.ipd[k]).abs() / PI)
        .sum();
    Some(sum / bins.len() as f64)
}

/// Mean over bins valid on both sides of `(|ic_out|² − |ic_in|²)²`.
pub fn delta_msc(cues_in: &CueEstimate, cues_out: &CueEstimate) -> Option<f64> {
    let bins: Vec<usize> = (0..cues_in.bins().min(cues_out.bins()))
        .filter(|&k| cues_in.valid[k] && cues_out.valid[k])
        .collect();
    if bins.is_empty() {
        return None;
    }
    let sum: f64 = bins
        .iter()
        .map(|&k| (cues_out.ic[k].norm_sqr().min(1.0) - cues_in.ic[k].norm_sqr().min(1.0)).powi(2))
        .sum();
    Some(sum / bins.len() as f64)
}

/// `|ic|` per bin; zero outside the valid set.
pub fn ic_spectrum(cues: &CueEstimate) -> Vec<f64> {
    (0..cues.bins())
        .map(|k| if cues.valid[k] { cues.ic[k].norm() } else { 0.0 })
        .collect()
}

/// Mean `|ic|` over valid bins.
pub fn mean_valid_ic(cues: &CueEstimate) -> Option<f64> {
    let n = cues.valid_bins().count();
    (n > 0).then(|| cues.valid_bins().map(|k| cues.ic[k].norm()).sum::<f64>() / n as f64)
}

/// Reference thresholds for IC magnitude plots.
pub const IC_THRESHOLDS: [f64; 2] = [0.2, 0.8];

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub snr_l: f64,
    pub snr_r: f64,
    pub disnr_l: f64,
    pub disnr_r: f64,
    pub ditd_s: f64,
    pub ditd_n: f64,
    pub dmsc_s: f64,
    pub dmsc_n: f64,
    /// Output noise `|IC|` per bin, zero outside the cue band.
    pub ic_magnitude_spectrum: Vec<f64>,
}

impl MetricsReport {
    pub fn snr(&self, ear: Ear) -> f64 {
        match ear {
            Ear::Left => self.snr_l,
            Ear::Right => self.snr_r,
        }
    }
}

/// Output cues of a filter set, for the speech and noise components.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentCues {
    pub speech: CueEstimate,
    pub noise: CueEstimate,
}

/// Precomputed state for evaluating many filter sets on one scene.
///
/// Cue metrics use the true component statistics: the noise coherence over
/// all frames and the speech coherence over speech-active frames.
#[derive(Debug, Clone)]
pub struct Evaluator {
    x: SpectralTensor,
    v: SpectralTensor,
    vad: VadLabels,
    sel: Selector,
    cutoff: f64,
    bands: BandImportance,
    phi_x: Vec<CMat>,
    phi_v: Vec<CMat>,
    input: ComponentCues,
    reference: (SpectralTensor, SpectralTensor),
}

impl Evaluator {
    pub fn new(x: &SpectralTensor, v: &SpectralTensor, vad: &VadLabels, sel: Selector, cutoff: f64) -> Result<Self> {
        x.same_shape(v)?;
        if vad.len() != x.frames() {
            return Err(Error::DimensionMismatch {
                expected: x.frames(),
                found: vad.len(),
            });
        }
        if sel.channels != x.channels() {
            return Err(Error::DimensionMismatch {
                expected: x.channels(),
                found: sel.channels,
            });
        }
        if vad.active_count() == 0 {
            return invalid("evaluation needs at least one speech-active frame");
        }
        let cfg = x.config().clone();
        let phi_x = spatial::covariance(x, |l| vad.active[l]);
        let phi_v = spatial::covariance(v, |_| true);
        let input = ComponentCues {
            speech: spatial::input_cues(&phi_x, &sel, &cfg, cutoff),
            noise: spatial::input_cues(&phi_v, &sel, &cfg, cutoff),
        };
        if input.noise.valid_bins().next().is_none() || input.speech.valid_bins().next().is_none() {
            return invalid("no valid cue bins in the evaluation scene");
        }
        let reference = (
            x.select_channels(&[sel.left, sel.right])?,
            v.select_channels(&[sel.left, sel.right])?,
        );
        Ok(Self {
            x: x.clone(),
            v: v.clone(),
            vad: vad.clone(),
            sel,
            cutoff,
            bands: BandImportance::sii_third_octave(),
            phi_x,
            phi_v,
            input,
            reference,
        })
    }

    pub fn selector(&self) -> &Selector {
        &self.sel
    }

    pub fn input_cues(&self) -> &ComponentCues {
        &self.input
    }

    /// Unprocessed reference SNR per ear.
    pub fn input_snr(&self) -> Result<[f64; 2]> {
        snr_db(&self.reference.0, &self.reference.1, &self.vad)
    }

    pub fn output_cues(&self, filters: &FilterPair) -> ComponentCues {
        let cfg = self.x.config();
        ComponentCues {
            speech: spatial::output_cues(&self.phi_x, filters, cfg, self.cutoff),
            noise: spatial::output_cues(&self.phi_v, filters, cfg, self.cutoff),
        }
    }

    pub fn shadow(&self, filters: &FilterPair) -> Result<(SpectralTensor, SpectralTensor)> {
        shadow_filter(filters, &self.x, &self.v)
    }

    pub fn snr(&self, filters: &FilterPair) -> Result<[f64; 2]> {
        let (zx, zv) = self.shadow(filters)?;
        snr_db(&zx, &zv, &self.vad)
    }

    pub fn evaluate(&self, filters: &FilterPair) -> Result<MetricsReport> {
        let (zx, zv) = self.shadow(filters)?;
        let snr = snr_db(&zx, &zv, &self.vad)?;
        let disnr = delta_isnr((&self.reference.0, &self.reference.1), (&zx, &zv), &self.vad, &self.bands)?;
        let out = self.output_cues(filters);
        let undefined = |what: &str| Error::InvalidInput(String::from(what));
        Ok(MetricsReport {
            snr_l: snr[0],
            snr_r: snr[1],
            disnr_l: disnr[0],
            disnr_r: disnr[1],
            ditd_s: delta_itd(&self.input.speech, &out.speech).ok_or_else(|| undefined("speech ITD error undefined"))?,
            ditd_n: delta_itd(&self.input.noise, &out.noise).ok_or_else(|| undefined("noise ITD error undefined"))?,
            dmsc_s: delta_msc(&self.input.speech, &out.speech).ok_or_else(|| undefined("speech MSC error undefined"))?,
            dmsc_n: delta_msc(&self.input.noise, &out.noise).ok_or_else(|| undefined("noise MSC error undefined"))?,
            ic_magnitude_spectrum: ic_spectrum(&out.noise),
        })
    }
}
