//! Single-channel audio buffers and RIFF/WAVE input/output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

/// Sample rate used by every stage of the pipeline.
pub const SAMPLE_RATE: u32 = 16_000;

/// A mono signal with full-scale amplitude ±1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    /// Buffer at the pipeline rate.
    pub fn mono16k(samples: Vec<f64>) -> Self {
        Self::new(samples, SAMPLE_RATE)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean square over the whole buffer.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|x| x * x).sum::<f64>() / self.samples.len() as f64
    }

    pub fn rms(&self) -> f64 {
        self.power().sqrt()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn scale(&mut self, gain: f64) {
        self.samples.iter_mut().for_each(|x| *x *= gain);
    }

    pub(crate) fn require_rate(&self, expected: u32) -> Result<()> {
        if self.sample_rate != expected {
            return Err(Error::SampleRate {
                expected,
                actual: self.sample_rate,
            });
        }
        Ok(())
    }
}

/// Reads one channel of a 16 kHz WAV file.
///
/// Accepts 16-bit signed PCM (mapped to [-1, 1) by dividing by 32768) and
/// 32-bit IEEE float. Other sample rates are rejected; there is no resampling.
pub fn read_wav(path: impl AsRef<Path>, channel: usize) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::SampleRate {
            expected: SAMPLE_RATE,
            actual: spec.sample_rate,
        });
    }
    let channels = spec.channels as usize;
    if channel >= channels {
        return Err(Error::InvalidParameter(format!(
            "channel {channel} requested from a {channels}-channel file"
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wav_err)?,
        (fmt, bits) => {
            return Err(Error::WavFormat(format!(
                "{bits}-bit {fmt:?} (only 16-bit PCM and 32-bit float are supported)"
            )))
        }
    };
    let samples = interleaved
        .into_iter()
        .skip(channel)
        .step_by(channels)
        .collect();
    Ok(AudioBuffer::new(samples, spec.sample_rate))
}

/// Writes a mono 16-bit PCM file. Samples are clipped to the representable range.
pub fn write_wav_pcm16(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<()> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err)?;
    for &x in &audio.samples {
        let v = (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)?;
    Ok(())
}

/// Writes a mono 32-bit float file, preserving samples at single precision.
pub fn write_wav_f32(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<()> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err)?;
    for &x in &audio.samples {
        writer.write_sample(x as f32).map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)?;
    Ok(())
}
