//! Framing, power spectra and log-mel spectrograms at 100 frames per second.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::{AudioBuffer, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Short-time analysis parameters. Defaults give 25 ms frames every 10 ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameParams {
    pub frame_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for FrameParams {
    fn default() -> Self {
        Self {
            frame_len: 400,
            hop: 160,
            fft_size: 512,
            n_mels: 26,
            fmin: 64.0,
            fmax: 8000.0,
            log_floor: 1e-10,
        }
    }
}

impl FrameParams {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.frame_len == 0 || self.frame_len > self.fft_size {
            return bad(format!(
                "frame_len {} must be in 1..={}",
                self.frame_len, self.fft_size
            ));
        }
        if self.hop == 0 || self.hop > self.frame_len {
            return bad(format!("hop {} must be in 1..={}", self.hop, self.frame_len));
        }
        if self.n_mels == 0 {
            return bad("n_mels must be at least 1".into());
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= sample_rate as f64 / 2.0) {
            return bad(format!(
                "need 0 <= fmin < fmax <= {} (got {}, {})",
                sample_rate as f64 / 2.0,
                self.fmin,
                self.fmax
            ));
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive".into());
        }
        Ok(())
    }

    /// Frames produced for `len` samples, or `None` if shorter than one frame.
    pub fn frame_count(&self, len: usize) -> Option<usize> {
        (len >= self.frame_len).then(|| (len - self.frame_len) / self.hop + 1)
    }

    pub fn frame_rate(&self, sample_rate: u32) -> f64 {
        sample_rate as f64 / self.hop as f64
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }
}

/// T × n_mels matrix of natural-log mel energies.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelSpectrogram {
    pub values: Array2<f64>,
    pub frame_rate: f64,
}

impl LogMelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_mels(&self) -> usize {
        self.values.ncols()
    }
}

/// Splits the signal into overlapping frames; the trailing partial frame is dropped.
pub fn frame_signal<'a>(audio: &'a AudioBuffer, params: &FrameParams) -> Result<Vec<&'a [f64]>> {
    let n = params.frame_count(audio.len()).ok_or(Error::InputTooShort {
        len: audio.len(),
        needed: params.frame_len,
    })?;
    Ok((0..n)
        .map(|i| &audio.samples[i * params.hop..i * params.hop + params.frame_len])
        .collect())
}

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Center frequencies in Hz of the mel channels.
pub fn mel_center_frequencies(params: &FrameParams) -> Vec<f64> {
    mel_edges(params)[1..=params.n_mels].to_vec()
}

fn mel_edges(params: &FrameParams) -> Vec<f64> {
    let lo = hz_to_mel(params.fmin);
    let hi = hz_to_mel(params.fmax);
    let step = (hi - lo) / (params.n_mels + 1) as f64;
    (0..params.n_mels + 2)
        .map(|i| mel_to_hz(lo + step * i as f64))
        .collect()
}

/// Triangular mel filterbank, n_mels × (fft_size/2 + 1).
///
/// Each triangle has unit area in Hz (weights scaled by 2 / bandwidth).
pub fn mel_filterbank(params: &FrameParams, sample_rate: u32) -> Array2<f64> {
    let edges = mel_edges(params);
    let n_bins = params.n_bins();
    let bin_hz = sample_rate as f64 / params.fft_size as f64;
    let mut fb = Array2::zeros((params.n_mels, n_bins));
    for m in 0..params.n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let norm = 2.0 / (hi - lo);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f > lo && f <= center {
                (f - lo) / (center - lo)
            } else if f > center && f < hi {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
            fb[[m, k]] = w * norm;
        }
        // A filter narrower than the bin spacing would be empty; give it the nearest bin.
        if fb.row(m).sum() <= 0.0 {
            let k = ((center / bin_hz).round() as usize).min(n_bins - 1);
            fb[[m, k]] = norm;
        }
    }
    fb
}

struct Analyzer {
    params: FrameParams,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    scratch: Vec<Complex<f64>>,
}

impl Analyzer {
    fn new(params: &FrameParams) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(params.fft_size);
        let scratch = vec![Complex::default(); fft.get_inplace_scratch_len()];
        Self {
            params: *params,
            window: hann_periodic(params.frame_len),
            fft,
            buf: vec![Complex::default(); params.fft_size],
            scratch,
        }
    }

    fn power(&mut self, frame: &[f64], out: &mut [f64]) {
        for (dst, (x, w)) in self.buf.iter_mut().zip(frame.iter().zip(&self.window)) {
            *dst = Complex::new(x * w, 0.0);
        }
        self.buf[self.params.frame_len..].fill(Complex::default());
        self.fft.process_with_scratch(&mut self.buf, &mut self.scratch);
        for (o, c) in out.iter_mut().zip(&self.buf) {
            *o = c.norm_sqr();
        }
    }
}

/// Squared magnitude of the one-sided DFT of a Hann-windowed, zero-padded frame.
pub fn power_spectrum(frame: &[f64], params: &FrameParams) -> Result<Vec<f64>> {
    if frame.len() != params.frame_len {
        return Err(Error::DimensionMismatch {
            what: "frame length",
            expected: params.frame_len,
            actual: frame.len(),
        });
    }
    params.validate(SAMPLE_RATE)?;
    let mut out = vec![0.0; params.n_bins()];
    Analyzer::new(params).power(frame, &mut out);
    Ok(out)
}

pub fn log_mel_spectrogram(audio: &AudioBuffer, params: &FrameParams) -> Result<LogMelSpectrogram> {
    audio.require_rate(SAMPLE_RATE)?;
    params.validate(audio.sample_rate)?;
    let frames = frame_signal(audio, params)?;
    let fb = mel_filterbank(params, audio.sample_rate);
    let mut analyzer = Analyzer::new(params);
    let floor_ln = params.log_floor.ln();
    let mut spec = vec![0.0; params.n_bins()];
    let mut values = Array2::zeros((frames.len(), params.n_mels));
    for (t, frame) in frames.iter().enumerate() {
        analyzer.power(frame, &mut spec);
        for (m, row) in fb.outer_iter().enumerate() {
            let e: f64 = row.iter().zip(&spec).map(|(w, p)| w * p).sum();
            values[[t, m]] = if e > params.log_floor { e.ln() } else { floor_ln };
        }
    }
    Ok(LogMelSpectrogram {
        values,
        frame_rate: params.frame_rate(audio.sample_rate),
    })
}
