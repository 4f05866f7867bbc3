//! Synthetic stand-ins for ambient, babble and fan noise.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::speech::syllable_envelope;
use crate::audio::{AudioBuffer, SAMPLE_RATE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    Ambient,
    Babble,
    Fan,
    None,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::Ambient => "ambient",
            NoiseKind::Babble => "babble",
            NoiseKind::Fan => "fan",
            NoiseKind::None => "none",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ambient" => Ok(NoiseKind::Ambient),
            "babble" => Ok(NoiseKind::Babble),
            "fan" => Ok(NoiseKind::Fan),
            "none" => Ok(NoiseKind::None),
            other => Err(Error::UnknownNoiseKind(other.to_string())),
        }
    }
}

const BABBLE_TALKERS: usize = 4;
const FAN_CUTOFF_HZ: f64 = 500.0;
const WARMUP: usize = 4096;

/// Pink (1/f) noise from white noise through a cascade of first-order
/// pole/zero sections, one per octave with the zero half an octave above the
/// pole, which averages out to −3 dB/octave.
pub fn pink_noise(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let fs = SAMPLE_RATE as f64;
    let sections: Vec<(f64, f64)> = (0..10)
        .map(|i| {
            let fp = 10.0 * 2f64.powi(i);
            let fz = fp * std::f64::consts::SQRT_2;
            ((-2.0 * PI * fp / fs).exp(), (-2.0 * PI * fz / fs).exp())
        })
        .collect();
    let mut state = vec![(0.0f64, 0.0f64); sections.len()];
    let mut out = Vec::with_capacity(len);
    for i in 0..len + WARMUP {
        let mut x: f64 = StandardNormal.sample(rng);
        for ((pole, zero), (x_prev, y_prev)) in sections.iter().zip(state.iter_mut()) {
            let y = x - zero * *x_prev + pole * *y_prev;
            *x_prev = x;
            *y_prev = y;
            x = y;
        }
        if i >= WARMUP {
            out.push(x);
        }
    }
    out
}

/// Second-order Butterworth low-pass (bilinear transform).
fn lowpass(signal: &mut [f64], cutoff: f64) {
    let fs = SAMPLE_RATE as f64;
    let k = (PI * cutoff / fs).tan();
    let q = std::f64::consts::FRAC_1_SQRT_2;
    let norm = 1.0 / (1.0 + k / q + k * k);
    let b0 = k * k * norm;
    let b1 = 2.0 * b0;
    let b2 = b0;
    let a1 = 2.0 * (k * k - 1.0) * norm;
    let a2 = (1.0 - k / q + k * k) * norm;
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    for v in signal.iter_mut() {
        let x = *v;
        let y = b0 * x + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
        x2 = x1;
        x1 = x;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

fn unit_rms(mut samples: Vec<f64>) -> AudioBuffer {
    let rms = (samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64).sqrt();
    if rms > 0.0 {
        samples.iter_mut().for_each(|v| *v /= rms);
    }
    AudioBuffer::mono16k(samples)
}

/// Unit-RMS noise of the given kind, deterministic per seed.
pub fn gen_noise(kind: NoiseKind, duration_s: f64, seed: u64) -> Result<AudioBuffer> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "noise duration must be positive, got {duration_s}"
        )));
    }
    let len = ((duration_s * SAMPLE_RATE as f64).round() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = match kind {
        NoiseKind::Ambient => pink_noise(len, &mut rng),
        NoiseKind::Fan => {
            let mut x = pink_noise(len + WARMUP, &mut rng);
            lowpass(&mut x, FAN_CUTOFF_HZ);
            x.split_off(WARMUP)
        }
        NoiseKind::Babble => {
            let mut mix = vec![0.0; len];
            for _ in 0..BABBLE_TALKERS {
                let carrier = pink_noise(len, &mut rng);
                let env = syllable_envelope(len, &mut rng);
                for ((m, c), e) in mix.iter_mut().zip(&carrier).zip(&env) {
                    *m += c * e;
                }
            }
            mix
        }
        NoiseKind::None => {
            return Err(Error::InvalidParameter(
                "cannot generate noise of kind `none`".into(),
            ))
        }
    };
    Ok(unit_rms(samples))
}
