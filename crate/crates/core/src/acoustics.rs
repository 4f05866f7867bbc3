//! Non-blind room parameters from impulse responses, and a synthetic RIR
//! generator with prescribed T60 and DRR.

use std::f64::consts::LN_10;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{AudioBuffer, SAMPLE_RATE};
use crate::error::{Error, Result};

/// Stand-in for ±infinity in dB quantities.
pub const DB_SENTINEL: f64 = 400.0;

/// Direct-path half window used for DRR.
pub const DIRECT_HALF_WINDOW_MS: f64 = 8.0;

/// Position of the direct impulse in synthetic RIRs.
pub const SYNTH_DIRECT_MS: f64 = 16.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub taps: AudioBuffer,
    /// Index of the largest |tap|; the first one on ties.
    pub peak_index: usize,
}

impl Rir {
    pub fn new(taps: AudioBuffer) -> Result<Self> {
        taps.require_rate(SAMPLE_RATE)?;
        if taps.samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("impulse response"));
        }
        let mut peak_index = 0;
        let mut peak = 0.0;
        for (i, v) in taps.samples.iter().enumerate() {
            if v.abs() > peak {
                peak = v.abs();
                peak_index = i;
            }
        }
        if peak == 0.0 {
            return Err(Error::ZeroEnergy);
        }
        Ok(Self { taps, peak_index })
    }

    pub fn energy(&self) -> f64 {
        self.taps.samples.iter().map(|v| v * v).sum()
    }
}

/// Energy decay curve in dB, clamped below at −400 dB.
#[derive(Debug, Clone, PartialEq)]
pub struct EdcCurve {
    pub values: Vec<f64>,
    pub sample_rate: u32,
}

/// Backward-integrated energy relative to the total, in dB.
pub fn schroeder_edc(rir: &Rir) -> Result<EdcCurve> {
    let h = &rir.taps.samples;
    let mut tail = vec![0.0f64; h.len()];
    let mut acc = 0.0;
    for k in (0..h.len()).rev() {
        acc += h[k] * h[k];
        tail[k] = acc;
    }
    let total = acc;
    if !(total > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    let values = tail
        .iter()
        .enumerate()
        .map(|(k, e)| {
            if k == 0 {
                0.0
            } else if *e > 0.0 {
                (10.0 * (e / total).log10()).clamp(-DB_SENTINEL, 0.0)
            } else {
                -DB_SENTINEL
            }
        })
        .collect();
    Ok(EdcCurve {
        values,
        sample_rate: rir.taps.sample_rate,
    })
}

/// T60 from a straight-line fit of the EDC between `fit_lo` and `fit_hi` dB,
/// extrapolated to 60 dB of decay.
///
/// Samples where the curve is flat (zero-energy taps, e.g. the gap between a
/// direct impulse and its reverberant tail) carry no decay information and
/// are left out of the fit.
pub fn estimate_t60_from_edc(edc: &EdcCurve, fit_lo: f64, fit_hi: f64) -> Result<f64> {
    if !(fit_hi < fit_lo) {
        return Err(Error::InvalidParameter(format!(
            "fit range must satisfy fit_hi < fit_lo (got {fit_lo}, {fit_hi})"
        )));
    }
    let v = &edc.values;
    if !v.iter().any(|&x| x <= fit_hi) {
        return Err(Error::InsufficientDecay(fit_hi));
    }
    let fs = edc.sample_rate as f64;
    let (mut n, mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..v.len() {
        let next = v.get(k + 1).copied().unwrap_or(f64::NEG_INFINITY);
        if v[k] > fit_lo || v[k] < fit_hi || v[k] <= next {
            continue;
        }
        let t = k as f64 / fs;
        n += 1.0;
        st += t;
        sy += v[k];
        stt += t * t;
        sty += t * v[k];
    }
    let denom = n * stt - st * st;
    if n < 2.0 || denom <= 0.0 {
        return Err(Error::InsufficientDecay(fit_hi));
    }
    let slope = (n * sty - st * sy) / denom;
    if !(slope < 0.0) {
        return Err(Error::InsufficientDecay(fit_hi));
    }
    Ok(-60.0 / slope)
}

/// T60 with the default −5 … −25 dB fit range.
pub fn t60(rir: &Rir) -> Result<f64> {
    estimate_t60_from_edc(&schroeder_edc(rir)?, -5.0, -25.0)
}

/// Direct energy within ±`half_window_ms` of the peak over the remaining energy, in dB.
pub fn compute_drr(rir: &Rir, half_window_ms: f64) -> Result<f64> {
    let h = &rir.taps.samples;
    let half = (half_window_ms * rir.taps.sample_rate as f64 / 1000.0).round() as usize;
    let lo = rir.peak_index.saturating_sub(half);
    let hi = (rir.peak_index + half).min(h.len() - 1);
    let energy = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
    let direct = energy(&h[lo..=hi]);
    let reverb = energy(&h[..lo]) + energy(&h[hi + 1..]);
    if direct == 0.0 && reverb == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    if reverb == 0.0 {
        return Ok(DB_SENTINEL);
    }
    Ok((10.0 * (direct / reverb).log10()).clamp(-DB_SENTINEL, DB_SENTINEL))
}

/// Ground truth of an RIR: (T60 s, DRR dB).
pub fn ground_truth(rir: &Rir) -> Result<(f64, f64)> {
    Ok((t60(rir)?, compute_drr(rir, DIRECT_HALF_WINDOW_MS)?))
}

/// Unit direct impulse at 16 ms followed, after the direct window, by
/// exponentially decaying random-sign noise scaled to the requested DRR.
///
/// Every tail sample is ±envelope, so the energy decay is exactly exponential
/// and the fitted T60 does not scatter with the seed.
pub fn synth_rir(t60: f64, drr: f64, length_s: f64, seed: u64) -> Result<Rir> {
    if !(t60.is_finite() && drr.is_finite() && length_s.is_finite()) {
        return Err(Error::NonFinite("synthetic RIR parameter"));
    }
    if !(t60 > 0.0) || length_s < t60 {
        return Err(Error::InvalidParameter(format!(
            "need t60 > 0 and length >= t60 (got t60={t60}, length={length_s})"
        )));
    }
    let fs = SAMPLE_RATE as f64;
    let len = (length_s * fs).round() as usize;
    let direct = (SYNTH_DIRECT_MS * fs / 1000.0).round() as usize;
    let half = (DIRECT_HALF_WINDOW_MS * fs / 1000.0).round() as usize;
    let tail_start = direct + half + 1;
    if tail_start >= len {
        return Err(Error::Infeasible(format!(
            "{length_s} s leaves no room for a reverberant tail"
        )));
    }
    // Amplitude decays at half the energy rate: 60 dB of energy per t60.
    let decay = 3.0 * LN_10 / (fs * t60);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut h = vec![0.0f64; len];
    h[direct] = 1.0;
    for (k, v) in h.iter_mut().enumerate().skip(tail_start) {
        let n = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        *v = n * (-decay * (k - direct) as f64).exp();
    }
    let tail_energy: f64 = h[tail_start..].iter().map(|v| v * v).sum();
    if !(tail_energy > 0.0) {
        return Err(Error::Infeasible("reverberant tail has no energy".into()));
    }
    let ratio = 10f64.powf(drr / 10.0);
    let gain = (1.0 / (ratio * tail_energy)).sqrt();
    h[tail_start..].iter_mut().for_each(|v| *v *= gain);
    if h[tail_start..].iter().any(|v| v.abs() >= 1.0) {
        return Err(Error::Infeasible(format!(
            "tail for drr={drr} dB, t60={t60} s exceeds the direct impulse"
        )));
    }
    Rir::new(AudioBuffer::mono16k(h))
}
