//! Speech-like test signals: syllable-rate bursts of formant-shaped harmonic
//! complexes and fricative noise separated by pauses.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::{AudioBuffer, SAMPLE_RATE};
use crate::error::{Error, Result};

const FS: f64 = SAMPLE_RATE as f64;

struct Segment {
    start: usize,
    len: usize,
}

/// Alternating syllables (120–300 ms) and pauses (30–250 ms, sometimes longer).
fn syllables(len: usize, rng: &mut impl Rng) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut t = (rng.random_range(0.0..0.15) * FS) as usize;
    while t < len {
        let dur = (rng.random_range(0.12..0.30) * FS) as usize;
        out.push(Segment {
            start: t,
            len: dur.min(len - t),
        });
        let pause = if rng.random_bool(0.15) {
            rng.random_range(0.30..0.60)
        } else {
            rng.random_range(0.03..0.25)
        };
        t += dur + (pause * FS) as usize;
    }
    out
}

/// 15 ms raised-cosine attack, 40 ms release.
fn burst_gain(i: usize, len: usize) -> f64 {
    let attack = (0.015 * FS) as usize;
    let release = (0.040 * FS) as usize;
    if i < attack {
        0.5 - 0.5 * (PI * i as f64 / attack as f64).cos()
    } else if i + release > len {
        let r = (len - i) as f64 / release as f64;
        0.5 - 0.5 * (PI * r).cos()
    } else {
        1.0
    }
}

/// Syllable-rate on/off envelope with peak 1.
pub fn syllable_envelope(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut env = vec![0.0; len];
    for seg in syllables(len, rng) {
        let level = rng.random_range(0.5..1.0);
        for i in 0..seg.len {
            env[seg.start + i] = level * burst_gain(i, seg.len);
        }
    }
    env
}

fn formant_gain(f: f64, formants: &[(f64, f64)]) -> f64 {
    formants
        .iter()
        .map(|(fc, bw)| 1.0 / (1.0 + ((f - fc) / bw).powi(2)))
        .sum::<f64>()
        * (200.0 / f.max(100.0)).sqrt()
}

/// A speech-like utterance scaled to RMS 0.1, deterministic per seed.
pub fn speech_like(duration_s: f64, seed: u64) -> Result<AudioBuffer> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "utterance duration must be positive, got {duration_s}"
        )));
    }
    let len = (duration_s * FS).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0f64; len];
    let f0_base: f64 = rng.random_range(90.0..230.0);
    for seg in syllables(len, &mut rng) {
        let level = rng.random_range(0.4..1.0);
        if rng.random_bool(0.8) {
            let formants = [
                (rng.random_range(300.0..900.0), 80.0),
                (rng.random_range(900.0..2500.0), 120.0),
                (rng.random_range(2300.0..3500.0), 180.0),
            ];
            let f0_start = f0_base * rng.random_range(0.85..1.15);
            let f0_end = f0_start * rng.random_range(0.8..1.2);
            let n_harm = (4000.0 / f0_start.max(f0_end)).floor() as usize;
            let amps: Vec<f64> = (1..=n_harm)
                .map(|h| formant_gain(h as f64 * f0_start, &formants))
                .collect();
            let mut phase = 0.0;
            for i in 0..seg.len {
                let f0 = f0_start + (f0_end - f0_start) * i as f64 / seg.len as f64;
                phase += 2.0 * PI * f0 / FS;
                let mut v = 0.0;
                for (h, a) in amps.iter().enumerate() {
                    v += a * ((h + 1) as f64 * phase).sin();
                }
                out[seg.start + i] += level * burst_gain(i, seg.len) * v;
            }
        } else {
            // Fricative: first-difference (high-tilted) noise.
            let mut prev = 0.0;
            for i in 0..seg.len {
                let n: f64 = StandardNormal.sample(&mut rng);
                out[seg.start + i] += 0.6 * level * burst_gain(i, seg.len) * (n - prev);
                prev = n;
            }
        }
    }
    let mut audio = AudioBuffer::mono16k(out);
    let rms = audio.rms();
    if rms > 0.0 {
        audio.scale(0.1 / rms);
    }
    Ok(audio)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_scaled() {
        let a = speech_like(2.0, 5).unwrap();
        assert_eq!(a.len(), 32_000);
        assert!((a.rms() - 0.1).abs() < 1e-12);
        assert_eq!(a, speech_like(2.0, 5).unwrap());
        assert_ne!(a, speech_like(2.0, 6).unwrap());
        assert!(speech_like(-1.0, 0).is_err());
    }

    #[test]
    fn has_pauses_and_bursts() {
        let a = speech_like(3.0, 1).unwrap();
        let block = 160;
        let energies: Vec<f64> = a
            .samples
            .chunks(block)
            .map(|c| c.iter().map(|v| v * v).sum::<f64>())
            .collect();
        let silent = energies.iter().filter(|e| **e < 1e-12).count();
        let loud = energies.iter().filter(|e| **e > 1e-2).count();
        assert!(silent >= 10, "{silent}");
        assert!(loud >= 50, "{loud}");
    }
}
