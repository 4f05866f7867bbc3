//! Labeled noisy reverberant corpora: speech plus noise at a fixed SNR,
//! convolved with an impulse response.

mod noise;
mod speech;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

pub use noise::{gen_noise, pink_noise, NoiseKind};
pub use speech::{speech_like, syllable_envelope};

use crate::acoustics::{ground_truth, Rir};
use crate::audio::{write_wav_pcm16, AudioBuffer};
use crate::error::{Error, Result};
use crate::grid::{build_vocabulary, ClassGrid, ClassVocabulary};

/// Peak level of written corpus items.
const OUTPUT_PEAK: f64 = 0.9;

/// Full linear convolution, length N + L − 1.
pub fn convolve(signal: &AudioBuffer, rir: &Rir) -> Result<AudioBuffer> {
    signal.require_rate(rir.taps.sample_rate)?;
    let (x, h) = (&signal.samples, &rir.taps.samples);
    if x.is_empty() {
        return Err(Error::Empty("signal"));
    }
    let out_len = x.len() + h.len() - 1;
    if x.len().min(h.len()) <= 64 {
        let mut y = vec![0.0; out_len];
        for (i, xv) in x.iter().enumerate() {
            for (j, hv) in h.iter().enumerate() {
                y[i + j] += xv * hv;
            }
        }
        return Ok(AudioBuffer::new(y, signal.sample_rate));
    }
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let pad = |v: &[f64]| {
        let mut buf: Vec<Complex<f64>> = v.iter().map(|&s| Complex::new(s, 0.0)).collect();
        buf.resize(n, Complex::new(0.0, 0.0));
        buf
    };
    let mut a = pad(x);
    let mut b = pad(h);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    let y = a[..out_len].iter().map(|c| c.re / n as f64).collect();
    Ok(AudioBuffer::new(y, signal.sample_rate))
}

fn mean_square(v: &[f64]) -> f64 {
    v.iter().map(|s| s * s).sum::<f64>() / v.len() as f64
}

/// `signal` plus `noise` (truncated to the signal length) scaled so the
/// full-signal power ratio is `snr_db`.
pub fn mix_at_snr(signal: &AudioBuffer, noise: &AudioBuffer, snr_db: f64) -> Result<AudioBuffer> {
    signal.require_rate(noise.sample_rate)?;
    if !snr_db.is_finite() {
        return Err(Error::NonFinite("snr"));
    }
    if signal.is_empty() {
        return Err(Error::Empty("signal"));
    }
    if noise.len() < signal.len() {
        return Err(Error::InputTooShort {
            len: noise.len(),
            needed: signal.len(),
        });
    }
    let noise = &noise.samples[..signal.len()];
    let p_sig = mean_square(&signal.samples);
    let p_noise = mean_square(noise);
    if p_sig == 0.0 || p_noise == 0.0 {
        return Err(Error::ZeroEnergy);
    }
    let gain = (p_sig / p_noise / 10f64.powf(snr_db / 10.0)).sqrt();
    let mixed = signal
        .samples
        .iter()
        .zip(noise)
        .map(|(s, n)| s + gain * n)
        .collect();
    Ok(AudioBuffer::new(mixed, signal.sample_rate))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub noise: NoiseKind,
    /// +inf for clean items.
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub path: String,
    pub utterance: usize,
    pub rir_id: usize,
    pub condition: Condition,
    pub t60: f64,
    pub drr: f64,
    pub class_id: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub items: Vec<CorpusItem>,
    pub grid: ClassGrid,
    pub vocabulary: ClassVocabulary,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: CorpusManifest,
    pub audio: Vec<AudioBuffer>,
}

/// Cross product of noise kinds and SNRs in kind-major order. `none` yields
/// a single clean condition; no kinds at all means clean only.
pub fn conditions(kinds: &[NoiseKind], snrs: &[f64]) -> Vec<Condition> {
    let mut out = Vec::new();
    for &noise in kinds {
        if noise == NoiseKind::None {
            out.push(Condition {
                noise,
                snr_db: f64::INFINITY,
            });
        } else {
            out.extend(snrs.iter().map(|&snr_db| Condition { noise, snr_db }));
        }
    }
    if out.is_empty() {
        out.push(Condition {
            noise: NoiseKind::None,
            snr_db: f64::INFINITY,
        });
    }
    out
}

fn item_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Item `j` of max(U, K) uses utterance `j mod U`, RIR `j mod R` and
/// condition `(j div R) mod K`, so each RIR cycles through all conditions.
pub fn build_corpus(
    speech: &[AudioBuffer],
    rirs: &[Rir],
    kinds: &[NoiseKind],
    snrs: &[f64],
    grid: &ClassGrid,
    seed: u64,
) -> Result<Corpus> {
    if speech.is_empty() {
        return Err(Error::Empty("speech list"));
    }
    if rirs.is_empty() {
        return Err(Error::Empty("RIR list"));
    }
    if kinds.iter().any(|k| *k != NoiseKind::None) && snrs.is_empty() {
        return Err(Error::Empty("SNR list"));
    }
    let truths = rirs.iter().map(ground_truth).collect::<Result<Vec<_>>>()?;
    let vocabulary = build_vocabulary(grid, &truths)?;
    let conds = conditions(kinds, snrs);
    let n_items = speech.len().max(conds.len());
    let (r, k) = (rirs.len(), conds.len());

    let built: Vec<(CorpusItem, AudioBuffer)> = (0..n_items)
        .into_par_iter()
        .map(|j| {
            let utterance = j % speech.len();
            let rir_id = j % r;
            let condition = conds[(j / r) % k];
            let clean = &speech[utterance];
            let dry = match condition.noise {
                NoiseKind::None => clean.clone(),
                kind => {
                    let noise = gen_noise(kind, clean.duration_secs(), item_seed(seed, j))?;
                    mix_at_snr(clean, &noise, condition.snr_db)?
                }
            };
            let mut wet = convolve(&dry, &rirs[rir_id])?;
            let peak = wet.peak();
            if peak > 0.0 {
                wet.scale(OUTPUT_PEAK / peak);
            }
            let (t60, drr) = truths[rir_id];
            let cell = grid.cell_of(t60, drr)?;
            let class_id = vocabulary
                .class_of(cell)
                .expect("vocabulary covers every RIR");
            let item = CorpusItem {
                path: format!("item_{j:05}.wav"),
                utterance,
                rir_id,
                condition,
                t60,
                drr,
                class_id,
            };
            Ok((item, wet))
        })
        .collect::<Result<_>>()?;

    let (items, audio) = built.into_iter().unzip();
    Ok(Corpus {
        manifest: CorpusManifest {
            items,
            grid: *grid,
            vocabulary,
            seed,
        },
        audio,
    })
}

/// One line of `manifest.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: String,
    pub rir_id: usize,
    pub noise_kind: NoiseKind,
    pub snr_db: f64,
    pub t60_s: f64,
    pub drr_db: f64,
    pub class_id: usize,
}

impl From<&CorpusItem> for ManifestRow {
    fn from(item: &CorpusItem) -> Self {
        Self {
            path: item.path.clone(),
            rir_id: item.rir_id,
            noise_kind: item.condition.noise,
            snr_db: item.condition.snr_db,
            t60_s: item.t60,
            drr_db: item.drr,
            class_id: item.class_id,
        }
    }
}

pub fn write_manifest_csv(path: impl AsRef<Path>, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `manifest.csv`, resolving relative audio paths against its directory.
pub fn read_manifest_csv(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut rows = Vec::new();
    for row in csv::Reader::from_path(path)?.deserialize() {
        let mut row: ManifestRow = row?;
        let p = PathBuf::from(&row.path);
        if p.is_relative() {
            row.path = base.join(p).to_string_lossy().into_owned();
        }
        rows.push(row);
    }
    Ok(rows)
}

impl Corpus {
    /// Writes every item as 16-bit PCM plus `manifest.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.manifest
            .items
            .par_iter()
            .zip(&self.audio)
            .try_for_each(|(item, audio)| write_wav_pcm16(dir.join(&item.path), audio))?;
        let rows: Vec<ManifestRow> = self.manifest.items.iter().map(ManifestRow::from).collect();
        let csv_path = dir.join("manifest.csv");
        write_manifest_csv(&csv_path, &rows)?;
        Ok(csv_path)
    }
}
