//! Diagonal 2D Gabor filterbank over log-mel spectrograms.
//!
//! Every filter is a complex carrier `exp(i·ω_s·(a − a_c) + i·ω_t·(b − b_c))`
//! under a separable Hann envelope, where `a` runs over mel channels and `b`
//! over frames. Only the real part is used for feature extraction; it is made
//! zero-mean and scaled to unit Frobenius norm. A filter's response is sampled
//! on a subset of channels whose stride grows as the spectral modulation
//! frequency falls, so the default bank on 26 channels yields 600 features.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::LogMelSpectrogram;

/// Temporal modulation frequencies (Hz) of the default bank.
pub const TEMPORAL_MOD_HZ: [f64; 6] = [2.4, 3.9, 6.2, 9.9, 15.7, 25.0];
/// Spectral modulation magnitudes (cycles/channel); each is used with both signs.
pub const SPECTRAL_MOD_CPC: [f64; 4] = [0.03125, 0.0625, 0.125, 0.25];

/// Parameters of a single filter: radian frequencies and envelope lengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaborFilterSpec {
    /// Radians per frame.
    pub temporal_omega: f64,
    /// Radians per mel channel.
    pub spectral_omega: f64,
    /// Envelope length in frames.
    pub temporal_len: usize,
    /// Envelope length in channels.
    pub spectral_len: usize,
}

impl GaborFilterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.temporal_len == 0 || self.spectral_len == 0 {
            return Err(Error::InvalidParameter(
                "gabor envelope lengths must be at least 1".into(),
            ));
        }
        if !(self.temporal_omega.is_finite() && self.spectral_omega.is_finite()) {
            return Err(Error::NonFinite("gabor modulation frequency"));
        }
        Ok(())
    }

    /// Index of the envelope peak on each axis: (spectral, temporal).
    pub fn center(&self) -> (usize, usize) {
        (self.spectral_len.div_ceil(2), self.temporal_len.div_ceil(2))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaborFilter {
    pub spec: GaborFilterSpec,
    /// (spectral_len + 2) × (temporal_len + 2); real part is zero-mean with unit norm.
    pub coeffs: Array2<Complex64>,
    /// Mel channels at which the response is sampled, strictly increasing.
    pub representative_channels: Vec<usize>,
    /// Temporal modulation frequency in Hz.
    pub temporal_hz: f64,
    /// Signed spectral modulation frequency in cycles/channel.
    pub spectral_cpc: f64,
}

impl GaborFilter {
    pub fn real_part(&self) -> Array2<f64> {
        self.coeffs.mapv(|c| c.re)
    }
}

/// Periodic-style Hann taper `0.5 − 0.5·cos(2πn/(W+1))`, zero at 0 and W+1.
pub fn hann_taper(n: usize, width: usize) -> f64 {
    0.5 - 0.5 * (2.0 * PI * n as f64 / (width + 1) as f64).cos()
}

/// Separable product of two Hann tapers on the support [0, W_s+1] × [0, W_t+1].
pub fn hann_product_envelope(spectral_len: usize, temporal_len: usize) -> Array2<f64> {
    Array2::from_shape_fn((spectral_len + 2, temporal_len + 2), |(a, b)| {
        hann_taper(a, spectral_len) * hann_taper(b, temporal_len)
    })
}

/// Carrier times envelope, before any DC removal or normalization.
pub fn carrier_envelope(spec: &GaborFilterSpec) -> Array2<Complex64> {
    let env = hann_product_envelope(spec.spectral_len, spec.temporal_len);
    let (ac, bc) = spec.center();
    Array2::from_shape_fn(env.dim(), |(a, b)| {
        let phase = spec.spectral_omega * (a as f64 - ac as f64)
            + spec.temporal_omega * (b as f64 - bc as f64);
        Complex64::from_polar(env[[a, b]], phase)
    })
}

/// Builds one filter with no representative channels attached.
///
/// The real part has an envelope-shaped offset subtracted so its coefficients
/// sum to zero, then is scaled to unit Frobenius norm. The imaginary part gets
/// the same scale.
pub fn make_gabor_filter(spec: GaborFilterSpec) -> Result<GaborFilter> {
    spec.validate()?;
    let raw = carrier_envelope(&spec);
    let env = hann_product_envelope(spec.spectral_len, spec.temporal_len);
    let real_sum: f64 = raw.iter().map(|c| c.re).sum();
    let env_sum: f64 = env.sum();
    let offset = real_sum / env_sum;
    let mut real = Array2::from_shape_fn(raw.dim(), |ix| raw[ix].re - offset * env[ix]);
    let norm = real.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::InvalidParameter(
            "gabor filter has no energy left after DC removal".into(),
        ));
    }
    real.mapv_inplace(|v| v / norm);
    let coeffs = Array2::from_shape_fn(raw.dim(), |ix| Complex64::new(real[ix], raw[ix].im / norm));
    Ok(GaborFilter {
        spec,
        coeffs,
        representative_channels: Vec::new(),
        temporal_hz: spec.temporal_omega / (2.0 * PI),
        spectral_cpc: spec.spectral_omega / (2.0 * PI),
    })
}

/// Construction parameters of a diagonal filterbank. Persisted in model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterbankConfig {
    pub n_mels: usize,
    pub frame_rate: f64,
    pub temporal_hz: Vec<f64>,
    /// Magnitudes; each enters the bank with both signs.
    pub spectral_cpc: Vec<f64>,
    /// Carrier half-periods spanned by the envelope on each axis.
    pub half_periods: f64,
    pub max_temporal_len: usize,
    pub max_spectral_len: usize,
}

impl Default for FilterbankConfig {
    fn default() -> Self {
        Self::diagonal(26, 100.0)
    }
}

impl FilterbankConfig {
    pub fn diagonal(n_mels: usize, frame_rate: f64) -> Self {
        Self {
            n_mels,
            frame_rate,
            temporal_hz: TEMPORAL_MOD_HZ.to_vec(),
            spectral_cpc: SPECTRAL_MOD_CPC.to_vec(),
            half_periods: 3.5,
            max_temporal_len: 99,
            max_spectral_len: 25,
        }
    }
}

/// Envelope length covering `half_periods` half-cycles of a carrier at
/// `freq` cycles per sample, capped at `cap`.
fn window_len(half_periods: f64, freq: f64, cap: usize) -> usize {
    let w = (half_periods / (2.0 * freq)).round() as i64 - 1;
    (w.max(1) as usize).min(cap)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaborFilterbank {
    pub filters: Vec<GaborFilter>,
    pub n_mels: usize,
    pub feature_dim: usize,
    pub config: FilterbankConfig,
}

/// Diagonal bank: every temporal frequency paired with every signed spectral frequency.
pub fn build_diagonal_filterbank(n_mels: usize, frame_rate: f64) -> Result<GaborFilterbank> {
    GaborFilterbank::from_config(&FilterbankConfig::diagonal(n_mels, frame_rate))
}

impl GaborFilterbank {
    pub fn from_config(cfg: &FilterbankConfig) -> Result<Self> {
        if cfg.n_mels < 8 {
            return Err(Error::InvalidParameter(format!(
                "filterbank needs at least 8 mel channels, got {}",
                cfg.n_mels
            )));
        }
        if !(cfg.frame_rate > 0.0) {
            return Err(Error::InvalidParameter("frame rate must be positive".into()));
        }
        let mut signed: Vec<f64> = cfg.spectral_cpc.iter().map(|f| -f).collect();
        signed.extend(cfg.spectral_cpc.iter().copied());
        signed.sort_by(f64::total_cmp);

        let mut filters = Vec::with_capacity(cfg.temporal_hz.len() * signed.len());
        for &ft in &cfg.temporal_hz {
            let per_frame = ft / cfg.frame_rate;
            if !(per_frame > 0.0 && per_frame <= 0.5) {
                return Err(Error::InvalidParameter(format!(
                    "temporal modulation {ft} Hz outside (0, frame_rate/2]"
                )));
            }
            for &fs in &signed {
                if fs == 0.0 || fs.abs() > 0.5 {
                    return Err(Error::InvalidParameter(format!(
                        "spectral modulation {fs} must be nonzero and within ±0.5"
                    )));
                }
                let spec = GaborFilterSpec {
                    temporal_omega: 2.0 * PI * per_frame,
                    spectral_omega: 2.0 * PI * fs,
                    temporal_len: window_len(cfg.half_periods, per_frame, cfg.max_temporal_len),
                    spectral_len: window_len(cfg.half_periods, fs.abs(), cfg.max_spectral_len),
                };
                let mut filter = make_gabor_filter(spec)?;
                filter.temporal_hz = ft;
                filter.spectral_cpc = fs;
                let stride = ((1.0 / (4.0 * fs.abs())).round() as usize).max(1);
                filter.representative_channels = (0..cfg.n_mels).step_by(stride).collect();
                filters.push(filter);
            }
        }
        let feature_dim = filters.iter().map(|f| f.representative_channels.len()).sum();
        Ok(Self {
            filters,
            n_mels: cfg.n_mels,
            feature_dim,
            config: cfg.clone(),
        })
    }

    /// Writes one plain-text matrix per filter plus `manifest.txt`.
    pub fn export(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut manifest = String::from("index\tf_t_hz\tf_s_cpc\tW_l\tW_m\tchannels\n");
        for (i, f) in self.filters.iter().enumerate() {
            let mut text = String::new();
            for row in f.real_part().outer_iter() {
                let line: Vec<String> = row.iter().map(|v| format!("{v:.9e}")).collect();
                text.push_str(&line.join(" "));
                text.push('\n');
            }
            fs::write(dir.join(format!("filter_{i:02}.txt")), text)?;
            let channels: Vec<String> = f
                .representative_channels
                .iter()
                .map(usize::to_string)
                .collect();
            writeln!(
                manifest,
                "{i}\t{}\t{}\t{}\t{}\t{}",
                f.temporal_hz,
                f.spectral_cpc,
                f.spec.temporal_len,
                f.spec.spectral_len,
                channels.join(",")
            )
            .expect("write to String");
        }
        fs::write(dir.join("manifest.txt"), manifest)?;
        Ok(())
    }
}

/// T × feature_dim matrix of Gabor features, stored at single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f32>,
    pub frame_rate: f64,
}

impl FeatureMatrix {
    pub fn n_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }
}

/// Filters the spectrogram with every filter of the bank and samples the
/// responses at the representative channels.
///
/// The correlation is "same"-size and aligned to the envelope peak. Outside
/// the spectrogram the nearest edge value is repeated, so a constant input
/// yields exactly zero response.
pub fn extract_features(spec: &LogMelSpectrogram, bank: &GaborFilterbank) -> Result<FeatureMatrix> {
    let (n_frames, n_mels) = spec.values.dim();
    if n_mels != bank.n_mels {
        return Err(Error::DimensionMismatch {
            what: "mel channels",
            expected: bank.n_mels,
            actual: n_mels,
        });
    }
    let pad = bank
        .filters
        .iter()
        .map(|f| f.spec.temporal_len + 1)
        .max()
        .unwrap_or(0);
    // Channel-major copy with replicated edges along time.
    let width = n_frames + 2 * pad;
    let padded: Vec<Vec<f64>> = (0..n_mels)
        .map(|m| {
            (0..width)
                .map(|i| {
                    let t = (i as isize - pad as isize).clamp(0, n_frames as isize - 1) as usize;
                    spec.values[[t, m]]
                })
                .collect()
        })
        .collect();

    let mut out = Array2::<f32>::zeros((n_frames, bank.feature_dim));
    let mut acc = vec![0.0f64; n_frames];
    let mut col = 0;
    for filter in &bank.filters {
        let real = filter.real_part();
        let (ac, bc) = filter.spec.center();
        let taps: Vec<(usize, Vec<(usize, f64)>)> = real
            .outer_iter()
            .enumerate()
            .map(|(a, row)| {
                let nz: Vec<(usize, f64)> = row
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(b, v)| (b, *v))
                    .collect();
                (a, nz)
            })
            .filter(|(_, nz)| !nz.is_empty())
            .collect();
        for &m in &filter.representative_channels {
            acc.fill(0.0);
            for (a, row_taps) in &taps {
                let c = (m as isize + *a as isize - ac as isize).clamp(0, n_mels as isize - 1);
                let src = &padded[c as usize];
                for &(b, w) in row_taps {
                    let start = pad + b - bc;
                    for (dst, x) in acc.iter_mut().zip(&src[start..start + n_frames]) {
                        *dst += w * x;
                    }
                }
            }
            for (t, v) in acc.iter().enumerate() {
                out[[t, col]] = *v as f32;
            }
            col += 1;
        }
    }
    Ok(FeatureMatrix {
        values: out,
        frame_rate: spec.frame_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn spectrogram(values: Array2<f64>) -> LogMelSpectrogram {
        LogMelSpectrogram {
            values,
            frame_rate: 100.0,
        }
    }

    fn random_spec(seed: u64, t: usize, m: usize) -> Array2<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((t, m), |_| rng.random_range(-20.0..5.0))
    }

    #[test]
    fn envelope_edges_peak_and_symmetry() {
        for w in 1..12 {
            assert_eq!(hann_taper(0, w), 0.0);
            assert!(hann_taper(w + 1, w).abs() < 1e-15);
        }
        assert!((hann_taper(4, 7) - 1.0).abs() < 1e-15);
        let env = hann_product_envelope(3, 3);
        assert_eq!(env.dim(), (5, 5));
        for i in 0..5 {
            assert_eq!(env[[0, i]], 0.0);
            assert_eq!(env[[i, 0]], 0.0);
            assert!(env[[4, i]].abs() < 1e-15 && env[[i, 4]].abs() < 1e-15);
        }
        for a in 0..5 {
            for b in 0..5 {
                assert!((env[[a, b]] - env[[4 - a, b]]).abs() < 1e-15);
                assert!((env[[a, b]] - env[[a, 4 - b]]).abs() < 1e-15);
            }
        }
        assert!((env[[2, 2]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn carrier_has_zero_phase_at_center() {
        let spec = GaborFilterSpec {
            temporal_omega: 0.7,
            spectral_omega: -1.1,
            temporal_len: 9,
            spectral_len: 5,
        };
        let raw = carrier_envelope(&spec);
        let (ac, bc) = spec.center();
        let env = hann_product_envelope(5, 9);
        assert_eq!(raw[[ac, bc]].re, env[[ac, bc]]);
        assert_eq!(raw[[ac, bc]].im, 0.0);
        assert!((env[[ac, bc]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn filter_real_part_is_zero_sum_and_unit_norm() {
        let bank = build_diagonal_filterbank(26, 100.0).unwrap();
        for f in &bank.filters {
            let re = f.real_part();
            assert!(re.sum().abs() < 1e-9, "sum {}", re.sum());
            let norm: f64 = re.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
            assert_eq!(
                re.dim(),
                (f.spec.spectral_len + 2, f.spec.temporal_len + 2)
            );
        }
    }

    #[test]
    fn opposite_spectral_sign_mirrors_real_part() {
        let base = GaborFilterSpec {
            temporal_omega: 2.0 * PI * 0.062,
            spectral_omega: 2.0 * PI * 0.125,
            temporal_len: 27,
            spectral_len: 13,
        };
        let up = make_gabor_filter(base).unwrap().real_part();
        let down = make_gabor_filter(GaborFilterSpec {
            spectral_omega: -base.spectral_omega,
            ..base
        })
        .unwrap()
        .real_part();
        let rows = up.nrows();
        for a in 0..rows {
            for b in 0..up.ncols() {
                assert!((up[[a, b]] - down[[rows - 1 - a, b]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn default_bank_contract() {
        let bank = build_diagonal_filterbank(26, 100.0).unwrap();
        assert_eq!(bank.filters.len(), 48);
        assert_eq!(bank.feature_dim, 6 * 2 * (26 + 13 + 7 + 4));
        assert_eq!(bank.feature_dim, 600);
        let mut temporal: Vec<f64> = bank.filters.iter().map(|f| f.temporal_hz).collect();
        temporal.dedup();
        assert_eq!(temporal, TEMPORAL_MOD_HZ.to_vec());
        let strides: Vec<usize> = bank.filters[..8]
            .iter()
            .map(|f| f.representative_channels.get(1).copied().unwrap_or(0))
            .collect();
        assert_eq!(strides, vec![1, 2, 4, 8, 8, 4, 2, 1]);
        for f in &bank.filters {
            assert!(f.spectral_cpc != 0.0 && f.temporal_hz > 0.0);
            assert!(f.representative_channels.windows(2).all(|w| w[0] < w[1]));
            assert!(f.representative_channels.iter().all(|&c| c < 26));
        }
    }

    #[test]
    fn window_lengths_follow_half_period_rule() {
        let bank = build_diagonal_filterbank(26, 100.0).unwrap();
        let lens: Vec<(usize, usize)> = bank
            .filters
            .iter()
            .filter(|f| f.spectral_cpc > 0.0)
            .map(|f| (f.spec.temporal_len, f.spec.spectral_len))
            .collect();
        // 2.4 Hz at 100 fps: round(3.5 / 0.048) - 1 = 72; 0.25 cpc: round(7) - 1 = 6.
        assert_eq!(lens[0], (72, 25));
        assert_eq!(lens[3], (72, 6));
        assert_eq!(lens[2], (72, 13));
        assert_eq!(lens.last().copied(), Some((6, 6)));
    }

    #[test]
    fn construction_is_deterministic() {
        let a = build_diagonal_filterbank(26, 100.0).unwrap();
        let b = build_diagonal_filterbank(26, 100.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_spectrogram_gives_zero_features() {
        let bank = build_diagonal_filterbank(26, 100.0).unwrap();
        for c in [1e-10f64.ln(), 3.0, 0.0] {
            let feats =
                extract_features(&spectrogram(Array2::from_elem((50, 26), c)), &bank).unwrap();
            assert_eq!(feats.values.dim(), (50, 600));
            let max = feats.values.iter().fold(0.0f32, |m, v| m.max(v.abs()));
            assert!((max as f64) <= 1e-6 * c.abs().max(1.0), "c={c} max={max}");
        }
    }

    /// Direct "same" correlation over the full support, independent of the
    /// tap-skipping and padding layout used by `extract_features`.
    fn direct_response(s: &Array2<f64>, f: &GaborFilter, t: usize, m: usize) -> f64 {
        let re = f.real_part();
        let (ac, bc) = f.spec.center();
        let (nt, nm) = s.dim();
        let mut acc = 0.0;
        for a in 0..re.nrows() {
            for b in 0..re.ncols() {
                let mm = (m as isize + a as isize - ac as isize).clamp(0, nm as isize - 1);
                let tt = (t as isize + b as isize - bc as isize).clamp(0, nt as isize - 1);
                acc += re[[a, b]] * s[[tt as usize, mm as usize]];
            }
        }
        acc
    }

    #[test]
    fn impulse_reproduces_flipped_coefficients() {
        let cfg = FilterbankConfig {
            n_mels: 10,
            temporal_hz: vec![25.0],
            spectral_cpc: vec![0.25],
            ..FilterbankConfig::diagonal(10, 100.0)
        };
        let bank = GaborFilterbank::from_config(&cfg).unwrap();
        let mut s = Array2::zeros((10, 10));
        let (t0, m0) = (5, 4);
        s[[t0, m0]] = 1.0;
        let feats = extract_features(&spectrogram(s.clone()), &bank).unwrap();
        let mut col = 0;
        for f in &bank.filters {
            let re = f.real_part();
            let (ac, bc) = f.spec.center();
            for &m in &f.representative_channels {
                for t in 0..10 {
                    let got = feats.values[[t, col]] as f64;
                    assert!((got - direct_response(&s, f, t, m)).abs() < 1e-6);
                    // Impulse away from the edges reads back the coefficient at the mirrored offset.
                    let a = m0 as isize - m as isize + ac as isize;
                    let b = t0 as isize - t as isize + bc as isize;
                    let expected = if a >= 0
                        && b >= 0
                        && (a as usize) < re.nrows()
                        && (b as usize) < re.ncols()
                    {
                        re[[a as usize, b as usize]]
                    } else {
                        0.0
                    };
                    assert!((got - expected).abs() < 1e-6, "t={t} m={m}");
                }
                col += 1;
            }
        }
    }

    #[test]
    fn matches_direct_correlation_on_random_input() {
        let bank = build_diagonal_filterbank(26, 100.0).unwrap();
        let s = random_spec(3, 40, 26);
        let feats = extract_features(&spectrogram(s.clone()), &bank).unwrap();
        let mut col = 0;
        for f in &bank.filters {
            for &m in &f.representative_channels {
                for t in [0, 7, 20, 39] {
                    let d = direct_response(&s, f, t, m);
                    let got = feats.values[[t, col]] as f64;
                    assert!((got - d).abs() < 1e-5 * (1.0 + d.abs()), "{got} vs {d}");
                }
                col += 1;
            }
        }
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let bank = build_diagonal_filterbank(26, 100.0).unwrap();
        let r = extract_features(&spectrogram(Array2::zeros((5, 20))), &bank);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
        assert!(build_diagonal_filterbank(4, 100.0).is_err());
    }

    #[test]
    fn export_writes_matrices_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let bank = build_diagonal_filterbank(26, 100.0).unwrap();
        bank.export(dir.path()).unwrap();
        let manifest = fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        assert_eq!(manifest.lines().count(), 49);
        let first = fs::read_to_string(dir.path().join("filter_00.txt")).unwrap();
        let f = &bank.filters[0];
        assert_eq!(first.lines().count(), f.spec.spectral_len + 2);
        assert_eq!(
            first.lines().next().unwrap().split(' ').count(),
            f.spec.temporal_len + 2
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn features_are_linear(seed in 0u64..500, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let bank = build_diagonal_filterbank(26, 100.0).unwrap();
            let a = random_spec(seed, 30, 26);
            let b = random_spec(seed + 1, 30, 26);
            let combo = &a * alpha + &b * beta;
            let fa = extract_features(&spectrogram(a), &bank).unwrap();
            let fb = extract_features(&spectrogram(b), &bank).unwrap();
            let fc = extract_features(&spectrogram(combo), &bank).unwrap();
            let scale = fc.values.iter().fold(1.0f64, |m, v| m.max(v.abs() as f64));
            for ((x, y), z) in fa.values.iter().zip(fb.values.iter()).zip(fc.values.iter()) {
                let lin = alpha * *x as f64 + beta * *y as f64;
                prop_assert!((lin - *z as f64).abs() <= 1e-6 * scale);
            }
        }

        #[test]
        fn adding_a_constant_changes_nothing(seed in 0u64..500, c in -30.0f64..30.0) {
            let bank = build_diagonal_filterbank(26, 100.0).unwrap();
            let a = random_spec(seed, 25, 26);
            let shifted = &a + c;
            let fa = extract_features(&spectrogram(a), &bank).unwrap();
            let fs = extract_features(&spectrogram(shifted), &bank).unwrap();
            for (x, y) in fa.values.iter().zip(fs.values.iter()) {
                // f32 storage contributes a few ulps of the feature magnitude.
                let tol = 1e-6 * c.abs().max(1.0) + 4.0 * f32::EPSILON as f64 * (x.abs() as f64);
                prop_assert!(((x - y).abs() as f64) <= tol);
            }
        }
    }
}
