//! Short-time Fourier analysis and weighted overlap-add (WOLA) synthesis.
//!
//! Frames are `window_len` samples long, tapered by the analysis window,
//! zero-padded to `fft_size` and transformed. Only the one-sided spectrum
//! (`fft_size / 2 + 1` bins) is stored. Synthesis mirrors the spectrum,
//! inverts, keeps the first `window_len` samples, applies the synthesis
//! window and overlap-adds. The analysis/synthesis product must be
//! constant-overlap-add at the configured hop.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::invalid;
use crate::fft::Fft;
use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum WindowKind {
    /// Square-root periodic Hann on both analysis and synthesis.
    SqrtHann,
    Rectangular,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StftConfig {
    pub fft_size: usize,
    pub window_len: usize,
    pub hop: usize,
    pub sample_rate: f64,
    pub window: WindowKind,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_size: 256,
            window_len: 128,
            hop: 64,
            sample_rate: 16_000.0,
            window: WindowKind::SqrtHann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fft_size == 0 || !self.fft_size.is_power_of_two() {
            return invalid("stft.fft_size must be a power of two");
        }
        if self.window_len == 0 || self.window_len > self.fft_size {
            return invalid("stft.window_len must be in 1..=fft_size");
        }
        if self.hop == 0 || self.window_len % self.hop != 0 {
            return invalid("stft.hop must divide stft.window_len");
        }
        if !(self.sample_rate > 0.0) || !self.sample_rate.is_finite() {
            return invalid("stft.sample_rate must be positive");
        }
        let sums = self.overlap_sums();
        let mean = sums.iter().sum::<f64>() / sums.len() as f64;
        if mean <= 0.0 || sums.iter().any(|s| (s - mean).abs() > 1e-10 * mean) {
            return invalid("window pair is not constant-overlap-add at this hop");
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate / self.fft_size as f64
    }

    /// Number of full frames for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }

    /// Length of the signal produced by [`synthesize`] for `frames` frames.
    pub fn synthesis_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.window_len
        }
    }

    pub fn analysis_window(&self) -> Vec<f64> {
        self.window_samples()
    }

    pub fn synthesis_window(&self) -> Vec<f64> {
        self.window_samples()
    }

    fn window_samples(&self) -> Vec<f64> {
        let n = self.window_len;
        match self.window {
            WindowKind::Rectangular => vec![1.0; n],
            WindowKind::SqrtHann => (0..n)
                .map(|i| (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).sqrt())
                .collect(),
        }
    }

    /// Overlap-added product of analysis and synthesis windows over one hop.
    fn overlap_sums(&self) -> Vec<f64> {
        let wa = self.analysis_window();
        let ws = self.synthesis_window();
        (0..self.hop)
            .map(|r| {
                (r..self.window_len)
                    .step_by(self.hop)
                    .map(|i| wa[i] * ws[i])
                    .sum()
            })
            .collect()
    }

    /// The constant the overlapped window products sum to.
    fn cola_gain(&self) -> f64 {
        let sums = self.overlap_sums();
        sums.iter().sum::<f64>() / sums.len() as f64
    }
}

/// Complex STFT coefficients indexed by (channel, frame, bin).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTensor {
    channels: usize,
    frames: usize,
    bins: usize,
    data: Vec<C64>,
    config: StftConfig,
}

impl SpectralTensor {
    pub fn zeros(config: StftConfig, channels: usize, frames: usize) -> Self {
        let bins = config.bin_count();
        Self {
            channels,
            frames,
            bins,
            data: vec![C64::new(0.0, 0.0); channels * frames * bins],
            config,
        }
    }

    /// Builds a tensor from raw channel-major data; checks the shape.
    pub fn from_raw(
        config: StftConfig,
        channels: usize,
        frames: usize,
        data: Vec<C64>,
    ) -> Result<Self> {
        let t = Self {
            channels,
            frames,
            bins: config.bin_count(),
            data,
            config,
        };
        t.check_shape()?;
        Ok(t)
    }

    pub fn check_shape(&self) -> Result<()> {
        if self.bins != self.config.bin_count() {
            return Err(Error::DimensionMismatch {
                expected: self.config.bin_count(),
                found: self.bins,
            });
        }
        let expected = self.channels * self.frames * self.bins;
        if self.data.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: self.data.len(),
            });
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    #[inline]
    fn index(&self, channel: usize, frame: usize, bin: usize) -> usize {
        (channel * self.frames + frame) * self.bins + bin
    }

    #[inline]
    pub fn get(&self, channel: usize, frame: usize, bin: usize) -> C64 {
        self.data[self.index(channel, frame, bin)]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, frame: usize, bin: usize, value: C64) {
        let i = self.index(channel, frame, bin);
        self.data[i] = value;
    }

    /// One-sided spectrum of a single frame.
    pub fn frame(&self, channel: usize, frame: usize) -> &[C64] {
        let start = self.index(channel, frame, 0);
        &self.data[start..start + self.bins]
    }

    pub fn frame_mut(&mut self, channel: usize, frame: usize) -> &mut [C64] {
        let start = self.index(channel, frame, 0);
        let bins = self.bins;
        &mut self.data[start..start + bins]
    }

    /// The M-vector of all channels at one (frame, bin).
    pub fn snapshot(&self, frame: usize, bin: usize) -> Vec<C64> {
        (0..self.channels).map(|m| self.get(m, frame, bin)).collect()
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.data {
            *v *= factor;
        }
    }

    /// Elementwise sum of two tensors with identical shape.
    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self {
            data,
            config: self.config.clone(),
            ..*self
        })
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.channels != other.channels {
            return Err(Error::DimensionMismatch {
                expected: self.channels,
                found: other.channels,
            });
        }
        if self.frames != other.frames {
            return Err(Error::DimensionMismatch {
                expected: self.frames,
                found: other.frames,
            });
        }
        if self.bins != other.bins || self.config != other.config {
            return invalid("tensors use different STFT configurations");
        }
        Ok(())
    }

    /// Keeps only the listed channels, in the given order.
    pub fn select_channels(&self, channels: &[usize]) -> Result<Self> {
        let mut out = Self::zeros(self.config.clone(), channels.len(), self.frames);
        for (dst, &src) in channels.iter().enumerate() {
            if src >= self.channels {
                return invalid("channel index out of range");
            }
            for l in 0..self.frames {
                out.frame_mut(dst, l).copy_from_slice(self.frame(src, l));
            }
        }
        Ok(out)
    }

    /// Total energy `Σ|X|²` of one frame over all channels and bins.
    pub fn frame_energy(&self, frame: usize) -> f64 {
        (0..self.channels)
            .map(|m| self.frame(m, frame).iter().map(|v| v.norm_sqr()).sum::<f64>())
            .sum()
    }
}

/// Transforms equal-length channels into the STFT domain.
pub fn analyze<S: AsRef<[f64]>>(audio: &[S], cfg: &StftConfig) -> Result<SpectralTensor> {
    cfg.validate()?;
    if audio.is_empty() {
        return invalid("no channels");
    }
    let len = audio[0].as_ref().len();
    if audio.iter().any(|c| c.as_ref().len() != len) {
        return invalid("channels have different lengths");
    }
    if len < cfg.window_len {
        return invalid("signal shorter than one analysis window");
    }
    let frames = cfg.frame_count(len);
    let plan = Fft::new(cfg.fft_size)?;
    let window = cfg.analysis_window();
    let mut out = SpectralTensor::zeros(cfg.clone(), audio.len(), frames);
    let mut buf = vec![C64::new(0.0, 0.0); cfg.fft_size];
    for (m, channel) in audio.iter().enumerate() {
        let x = channel.as_ref();
        for l in 0..frames {
            let start = l * cfg.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = if i < cfg.window_len {
                    C64::new(x[start + i] * window[i], 0.0)
                } else {
                    C64::new(0.0, 0.0)
                };
            }
            plan.forward(&mut buf);
            out.frame_mut(m, l).copy_from_slice(&buf[..cfg.bin_count()]);
        }
    }
    Ok(out)
}

/// Inverts [`analyze`] by weighted overlap-add.
///
/// The output has `(frames - 1) * hop + window_len` samples per channel.
/// Samples within one window of either edge are not fully covered by
/// overlapping frames and do not reconstruct the input exactly.
pub fn synthesize(spec: &SpectralTensor) -> Result<Vec<Vec<f64>>> {
    spec.check_shape()?;
    let cfg = spec.config();
    cfg.validate()?;
    let n = cfg.fft_size;
    let plan = Fft::new(n)?;
    let window = cfg.synthesis_window();
    let norm = 1.0 / cfg.cola_gain();
    let len = cfg.synthesis_len(spec.frames());
    let mut buf = vec![C64::new(0.0, 0.0); n];
    let mut out = Vec::with_capacity(spec.channels());
    for m in 0..spec.channels() {
        let mut y = vec![0.0; len];
        for l in 0..spec.frames() {
            let half = spec.frame(m, l);
            buf[0] = C64::new(half[0].re, 0.0);
            buf[n / 2] = C64::new(half[n / 2].re, 0.0);
            for k in 1..n / 2 {
                buf[k] = half[k];
                buf[n - k] = half[k].conj();
            }
            plan.inverse(&mut buf);
            let start = l * cfg.hop;
            for i in 0..cfg.window_len {
                y[start + i] += buf[i].re * window[i] * norm;
            }
        }
        out.push(y);
    }
    Ok(out)
}
