//! Coherence-matrix estimation and interaural cue estimators.
//!
//! Input cues use the reference selectors, output cues the filter pair:
//!
//! - `IPD = ∠(aᴴ Φ b)`
//! - `IC  = aᴴ Φ b / sqrt(aᴴ Φ a · bᴴ Φ b)`
//! - `ITD = IPD / (2π f)`, with no phase unwrapping (valid below 1.5 kHz)
//!
//! where `(a, b)` is `(q_L, q_R)` or `(w_L, w_R)`. The output form uses the
//! conjugate transpose of the left filter throughout, so that identity
//! filters reproduce the input cues.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::costs::FilterPair;
use crate::error::invalid;
use crate::linalg::{self, CMat, CVec};
use crate::scene::VadLabels;
use crate::stft::{SpectralTensor, StftConfig};
use crate::{Error, Result, C64};

/// Relative guard for vanishing powers, scaled by `trace(Φ_vv)`.
pub const POWER_EPS: f64 = 1e-12;

/// Per-bin coherence matrices of the mixture, noise and speech.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceSet {
    pub phi_yy: Vec<CMat>,
    pub phi_vv: Vec<CMat>,
    pub phi_xx: Vec<CMat>,
    pub speech_frames: usize,
    pub noise_frames: usize,
}

/// Borrowed view of one bin of a [`CoherenceSet`].
#[derive(Debug, Clone, Copy)]
pub struct BinStats<'a> {
    pub phi_yy: &'a CMat,
    pub phi_xx: &'a CMat,
    pub phi_vv: &'a CMat,
}

impl CoherenceSet {
    pub fn bins(&self) -> usize {
        self.phi_yy.len()
    }

    pub fn channels(&self) -> usize {
        self.phi_yy.first().map_or(0, |m| m.nrows())
    }

    pub fn bin(&self, k: usize) -> BinStats<'_> {
        BinStats {
            phi_yy: &self.phi_yy[k],
            phi_xx: &self.phi_xx[k],
            phi_vv: &self.phi_vv[k],
        }
    }
}

/// Reference-microphone selectors `q_L`, `q_R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Selector {
    pub left: usize,
    pub right: usize,
    pub channels: usize,
}

impl Selector {
    pub fn new(left: usize, right: usize, channels: usize) -> Result<Self> {
        if left >= channels || right >= channels {
            return invalid("reference index out of range");
        }
        Ok(Self { left, right, channels })
    }

    /// Front microphones of two arrays of `mics_per_ear` each.
    pub fn binaural(mics_per_ear: usize) -> Self {
        Self {
            left: 0,
            right: mics_per_ear,
            channels: 2 * mics_per_ear,
        }
    }

    pub fn q_left(&self) -> CVec {
        unit(self.channels, self.left)
    }

    pub fn q_right(&self) -> CVec {
        unit(self.channels, self.right)
    }

    pub fn index(&self, ear: crate::scene::Ear) -> usize {
        match ear {
            crate::scene::Ear::Left => self.left,
            crate::scene::Ear::Right => self.right,
        }
    }
}

fn unit(n: usize, i: usize) -> CVec {
    let mut v = CVec::zeros(n);
    v[i] = C64::new(1.0, 0.0);
    v
}

/// Averages `s sᴴ` over the frames where `mask` is true, for every bin.
pub fn covariance(spec: &SpectralTensor, mask: impl Fn(usize) -> bool) -> Vec<CMat> {
    let m = spec.channels();
    let mut out: Vec<CMat> = (0..spec.bins()).map(|_| CMat::zeros(m, m)).collect();
    let mut count = 0usize;
    let mut snap = Vec::with_capacity(m);
    for l in (0..spec.frames()).filter(|&l| mask(l)) {
        count += 1;
        for (k, acc) in out.iter_mut().enumerate() {
            snap.clear();
            snap.extend((0..m).map(|ch| spec.get(ch, l, k)));
            for i in 0..m {
                for j in i..m {
                    acc[(i, j)] += snap[i] * snap[j].conj();
                }
            }
        }
    }
    let scale = if count > 0 { 1.0 / count as f64 } else { 0.0 };
    for acc in &mut out {
        for i in 0..m {
            acc[(i, i)].im = 0.0;
            for j in i..m {
                acc[(i, j)] *= scale;
                if j > i {
                    acc[(j, i)] = acc[(i, j)].conj();
                }
            }
        }
    }
    out
}

/// Estimates `Φ_vv` on noise-only frames and `Φ_yy` on speech-active
/// frames of the mixture; `Φ_xx` is the PSD-floored difference.
pub fn estimate_coherence(spec: &SpectralTensor, vad: &VadLabels) -> Result<CoherenceSet> {
    if vad.len() != spec.frames() {
        return Err(Error::DimensionMismatch {
            expected: spec.frames(),
            found: vad.len(),
        });
    }
    let speech_frames = vad.active_count();
    let noise_frames = vad.inactive_count();
    if speech_frames < 2 || noise_frames < 2 {
        return invalid("need at least two speech-active and two noise-only frames");
    }
    let phi_yy = covariance(spec, |l| vad.active[l]);
    let phi_vv = covariance(spec, |l| !vad.active[l]);
    let phi_xx = phi_yy
        .iter()
        .zip(&phi_vv)
        .map(|(y, v)| linalg::psd_floor(&(y - v)))
        .collect();
    Ok(CoherenceSet {
        phi_yy,
        phi_vv,
        phi_xx,
        speech_frames,
        noise_frames,
    })
}

/// Per-bin interaural cues.
#[derive(Debug, Clone, PartialEq)]
pub struct CueEstimate {
    pub freqs: Vec<f64>,
    /// Radians in `(-π, π]`; zero where undefined.
    pub ipd: Vec<f64>,
    /// Seconds; zero where undefined.
    pub itd: Vec<f64>,
    pub ic: Vec<C64>,
    /// Bin lies in `(0, cutoff]` and both channel powers are nonzero.
    pub valid: Vec<bool>,
    /// `valid` and the cross term is nonzero, so the phase is meaningful.
    pub ipd_defined: Vec<bool>,
}

impl CueEstimate {
    pub fn bins(&self) -> usize {
        self.freqs.len()
    }

    pub fn valid_bins(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.bins()).filter(|&k| self.valid[k])
    }
}

/// Whether bin `k` is inside the cue band `(0, cutoff]`.
pub fn in_cue_band(cfg: &StftConfig, k: usize, cutoff: f64) -> bool {
    let f = cfg.bin_frequency(k);
    f > 0.0 && f <= cutoff
}

/// Maps an angle onto `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Interaural cues of one bin from a pair of combining vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinCue {
    pub cross: C64,
    pub power_left: f64,
    pub power_right: f64,
}

impl BinCue {
    pub fn compute(phi: &CMat, a: &CVec, b: &CVec) -> Self {
        Self {
            cross: linalg::sesquilinear(a, phi, b),
            power_left: linalg::sesquilinear(a, phi, a).re,
            power_right: linalg::sesquilinear(b, phi, b).re,
        }
    }

    pub fn ic(&self) -> C64 {
        self.cross / (self.power_left * self.power_right).sqrt()
    }
}

fn cues_from<F>(phis: &[CMat], cfg: &StftConfig, cutoff: f64, mut vectors: F) -> CueEstimate
where
    F: FnMut(usize) -> (CVec, CVec),
{
    let bins = phis.len();
    let mut est = CueEstimate {
        freqs: (0..bins).map(|k| cfg.bin_frequency(k)).collect(),
        ipd: alloc::vec![0.0; bins],
        itd: alloc::vec![0.0; bins],
        ic: alloc::vec![C64::new(0.0, 0.0); bins],
        valid: alloc::vec![false; bins],
        ipd_defined: alloc::vec![false; bins],
    };
    for (k, phi) in phis.iter().enumerate() {
        if !in_cue_band(cfg, k, cutoff) {
            continue;
        }
        let (a, b) = vectors(k);
        let cue = BinCue::compute(phi, &a, &b);
        let eps = POWER_EPS * linalg::trace_re(phi);
        if !(cue.power_left > eps && cue.power_right > eps) {
            continue;
        }
        let ic = cue.ic();
        est.valid[k] = true;
        est.ic[k] = ic;
        if ic.norm() > 1e-12 {
            est.ipd_defined[k] = true;
            let ipd = wrap_angle(cue.cross.arg());
            est.ipd[k] = ipd;
            est.itd[k] = ipd / (2.0 * PI * est.freqs[k]);
        }
    }
    est
}

/// Cues of the unprocessed reference microphones.
pub fn input_cues(phi: &[CMat], sel: &Selector, cfg: &StftConfig, cutoff: f64) -> CueEstimate {
    let (ql, qr) = (sel.q_left(), sel.q_right());
    cues_from(phi, cfg, cutoff, |_| (ql.clone(), qr.clone()))
}

/// Cues of the filter outputs `z_L = w_Lᴴ y`, `z_R = w_Rᴴ y`.
pub fn output_cues(phi: &[CMat], filters: &FilterPair, cfg: &StftConfig, cutoff: f64) -> CueEstimate {
    cues_from(phi, cfg, cutoff, |k| {
        let w = &filters.bins[k];
        (w.left.clone(), w.right.clone())
    })
}
