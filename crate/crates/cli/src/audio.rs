//! WAV reading and writing: 16-bit integer and 32-bit float PCM.

use std::io::Cursor;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{CliError, Result};

fn read_error(path: &Path, key: &str, e: hound::Error) -> CliError {
    match e {
        hound::Error::IoError(io) => CliError::io(path, io),
        other => CliError::config(key, format!("{}: {other}", path.display())),
    }
}

/// Reads every channel of a WAV file as `f64` in `[-1, 1)`. The file's
/// sample rate must equal `sample_rate`; there is no resampling. `key`
/// names the config entry that referenced the file.
pub fn read_wav(path: &Path, sample_rate: f64, key: &str) -> Result<Vec<Vec<f64>>> {
    let reader = WavReader::open(path).map_err(|e| read_error(path, key, e))?;
    let spec = reader.spec();
    if f64::from(spec.sample_rate) != sample_rate {
        return Err(CliError::config(
            key,
            format!("{} is sampled at {} Hz, expected {sample_rate} Hz", path.display(), spec.sample_rate),
        ));
    }
    let channels = usize::from(spec.channels);
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>(),
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        (format, bits) => {
            return Err(CliError::config(
                key,
                format!("{}: unsupported sample format {format:?} with {bits} bits", path.display()),
            ))
        }
    }
    .map_err(|e| read_error(path, key, e))?;
    let frames = interleaved.len() / channels;
    Ok((0..channels)
        .map(|c| (0..frames).map(|i| interleaved[i * channels + c]).collect())
        .collect())
}

/// Encodes equal-length channels as a WAV file image, either 32-bit float
/// or 16-bit integer PCM (clipped to full scale).
pub fn encode_wav(channels: &[Vec<f64>], sample_rate: f64, float: bool) -> Vec<u8> {
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate: sample_rate.round() as u32,
        bits_per_sample: if float { 32 } else { 16 },
        sample_format: if float { SampleFormat::Float } else { SampleFormat::Int },
    };
    let len = channels.first().map_or(0, Vec::len);
    let mut buf = Cursor::new(Vec::new());
    {
        let mut w = WavWriter::new(&mut buf, spec).expect("in-memory WAV header");
        for i in 0..len {
            for c in channels {
                let r = if float {
                    w.write_sample(c[i] as f32)
                } else {
                    w.write_sample((c[i] * 32768.0).round().clamp(-32768.0, 32767.0) as i16)
                };
                r.expect("in-memory WAV sample");
            }
        }
        w.finalize().expect("in-memory WAV");
    }
    buf.into_inner()
}

/// Writes equal-length channels as 32-bit float PCM.
pub fn write_wav(path: &Path, channels: &[Vec<f64>], sample_rate: f64) -> Result<()> {
    std::fs::write(path, encode_wav(channels, sample_rate, true)).map_err(|e| CliError::io(path, e))
}
