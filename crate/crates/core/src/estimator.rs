//! Utterance-level (T60, DRR) estimation from audio.

use std::time::{Duration, Instant};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::frontend::{log_mel_spectrogram, FrameParams};
use crate::gabor::{extract_features, GaborFilterbank};
use crate::grid::{ClassGrid, ClassVocabulary};
use crate::mlp::{argmax, MlpModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub t60_hat: f64,
    pub drr_hat: f64,
    pub class_id: usize,
    pub mean_posterior: Vec<f64>,
    pub n_frames: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub class_id: usize,
    pub t60_hat: f64,
    pub drr_hat: f64,
}

/// Wall-clock time spent in each pipeline stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub features: Duration,
    pub mlp: Duration,
}

/// Column means of a T × C posterior matrix.
pub fn temporal_average(posteriors: ArrayView2<f64>) -> Result<Vec<f64>> {
    if posteriors.nrows() == 0 {
        return Err(Error::Empty("posterior frames"));
    }
    let mean: Array1<f64> = posteriors.mean_axis(Axis(0)).expect("non-empty");
    Ok(mean.to_vec())
}

/// Winner-takes-all over the vocabulary; the lowest index wins ties.
pub fn decide(mean_posterior: &[f64], vocabulary: &ClassVocabulary, grid: &ClassGrid) -> Result<Decision> {
    if mean_posterior.is_empty() {
        return Err(Error::Empty("posterior vector"));
    }
    if mean_posterior.len() != vocabulary.len() {
        return Err(Error::DimensionMismatch {
            what: "posterior length vs vocabulary",
            expected: vocabulary.len(),
            actual: mean_posterior.len(),
        });
    }
    let class_id = argmax(mean_posterior);
    let cell = vocabulary.cell(class_id).expect("length checked");
    let (t60_hat, drr_hat) = grid.center_of(cell)?;
    Ok(Decision {
        class_id,
        t60_hat,
        drr_hat,
    })
}

/// Per-frame posteriors (T × C) together with the stage timings.
pub fn frame_posteriors(
    audio: &AudioBuffer,
    model: &MlpModel,
    bank: &GaborFilterbank,
    params: &FrameParams,
) -> Result<(Array2<f64>, StageTimes)> {
    if bank.feature_dim != model.network.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "filterbank features vs model input",
            expected: model.network.input_dim(),
            actual: bank.feature_dim,
        });
    }
    let start = Instant::now();
    let spec = log_mel_spectrogram(audio, params)?;
    let feats = extract_features(&spec, bank)?;
    let features = start.elapsed();
    let start = Instant::now();
    let post = model.network.posteriors(&feats)?;
    let mlp = start.elapsed();
    Ok((post, StageTimes { features, mlp }))
}

pub fn estimate_utterance(
    audio: &AudioBuffer,
    model: &MlpModel,
    bank: &GaborFilterbank,
    params: &FrameParams,
) -> Result<Estimate> {
    Ok(estimate_detailed(audio, model, bank, params)?.0)
}

/// Estimate plus per-frame posteriors and stage timings.
pub fn estimate_detailed(
    audio: &AudioBuffer,
    model: &MlpModel,
    bank: &GaborFilterbank,
    params: &FrameParams,
) -> Result<(Estimate, Array2<f64>, StageTimes)> {
    let (post, times) = frame_posteriors(audio, model, bank, params)?;
    let mean_posterior = temporal_average(post.view())?;
    let d = decide(&mean_posterior, &model.vocabulary, &model.grid)?;
    let est = Estimate {
        t60_hat: d.t60_hat,
        drr_hat: d.drr_hat,
        class_id: d.class_id,
        mean_posterior,
        n_frames: post.nrows(),
    };
    Ok((est, post, times))
}

/// A model bundled with the filterbank and frame parameters it was trained with.
#[derive(Debug, Clone)]
pub struct Estimator {
    pub model: MlpModel,
    pub bank: GaborFilterbank,
}

impl Estimator {
    pub fn new(model: MlpModel) -> Result<Self> {
        let bank = GaborFilterbank::from_config(&model.filterbank)?;
        if bank.n_mels != model.frame_params.n_mels {
            return Err(Error::DimensionMismatch {
                what: "filterbank channels vs frame parameters",
                expected: model.frame_params.n_mels,
                actual: bank.n_mels,
            });
        }
        Ok(Self { model, bank })
    }

    pub fn estimate(&self, audio: &AudioBuffer) -> Result<Estimate> {
        estimate_utterance(audio, &self.model, &self.bank, &self.model.frame_params)
    }

    pub fn estimate_detailed(&self, audio: &AudioBuffer) -> Result<(Estimate, Array2<f64>, StageTimes)> {
        estimate_detailed(audio, &self.model, &self.bank, &self.model.frame_params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::speech_like;
    use crate::gabor::FilterbankConfig;
    use crate::mlp::{FeatureNormalizer, Network};
    use ndarray::array;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab(n: usize) -> ClassVocabulary {
        ClassVocabulary::from((0..n).map(|i| (i % 8, i)).collect::<Vec<_>>())
    }

    #[test]
    fn averaging_examples() {
        let same = array![[0.25, 0.75], [0.25, 0.75], [0.25, 0.75]];
        assert_eq!(temporal_average(same.view()).unwrap(), vec![0.25, 0.75]);
        let onehots = array![[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(temporal_average(onehots.view()).unwrap(), vec![0.5, 0.0, 0.5]);
        assert!(temporal_average(Array2::<f64>::zeros((0, 3)).view()).is_err());
    }

    #[test]
    fn decision_examples() {
        let grid = ClassGrid::default();
        let v = vocab(10);
        let mut p = vec![0.0; 10];
        p[5] = 1.0;
        let d = decide(&p, &v, &grid).unwrap();
        assert_eq!(d.class_id, 5);
        assert_eq!((d.t60_hat, d.drr_hat), grid.center_of(v.cell(5).unwrap()).unwrap());

        let mut tie = vec![0.05; 10];
        tie[2] = 0.3;
        tie[7] = 0.3;
        assert_eq!(decide(&tie, &v, &grid).unwrap().class_id, 2);

        assert!(decide(&[], &v, &grid).is_err());
        assert!(decide(&[1.0], &v, &grid).is_err());
    }

    fn tiny_model(seed: u64) -> (MlpModel, GaborFilterbank) {
        let params = FrameParams::default();
        let cfg = FilterbankConfig::diagonal(params.n_mels, params.frame_rate(16_000));
        let bank = GaborFilterbank::from_config(&cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Network::init(bank.feature_dim, 8, 4, FeatureNormalizer::identity(600), &mut rng)
            .unwrap();
        let model = MlpModel::new(net, vocab(4), ClassGrid::default(), params, cfg, seed).unwrap();
        (model, bank)
    }

    #[test]
    fn estimate_is_deterministic_and_on_grid() {
        let (model, bank) = tiny_model(1);
        let audio = speech_like(1.0, 2).unwrap();
        let params = model.frame_params;
        let a = estimate_utterance(&audio, &model, &bank, &params).unwrap();
        let b = estimate_utterance(&audio, &model, &bank, &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_frames, 98);
        assert!((a.mean_posterior.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let cell = model.vocabulary.cell(a.class_id).unwrap();
        assert_eq!((a.t60_hat, a.drr_hat), model.grid.center_of(cell).unwrap());
    }

    #[test]
    fn errors_propagate() {
        let (model, bank) = tiny_model(1);
        let params = model.frame_params;
        let short = AudioBuffer::mono16k(vec![0.1; 399]);
        assert!(matches!(
            estimate_utterance(&short, &model, &bank, &params),
            Err(Error::InputTooShort { .. })
        ));
        let narrow = GaborFilterbank::from_config(&FilterbankConfig {
            spectral_cpc: vec![0.25],
            ..model.filterbank.clone()
        })
        .unwrap();
        let audio = speech_like(0.5, 0).unwrap();
        assert!(matches!(
            estimate_utterance(&audio, &model, &narrow, &params),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn self_concatenation_matches_away_from_edges() {
        let (model, bank) = tiny_model(3);
        let params = model.frame_params;
        // 1.6 s = 160 hops, so the second copy lands on the same frame grid.
        let x = speech_like(1.6, 4).unwrap();
        let mut xx = x.samples.clone();
        xx.extend_from_slice(&x.samples);
        let xx = AudioBuffer::mono16k(xx);
        let (px, _) = frame_posteriors(&x, &model, &bank, &params).unwrap();
        let (pxx, _) = frame_posteriors(&xx, &model, &bank, &params).unwrap();
        let t = px.nrows();
        let shift = x.len() / params.hop;
        // The widest temporal filter reaches 50 frames either side.
        let edge = 52;
        for f in edge..t - edge {
            for c in 0..px.ncols() {
                assert!((px[[f, c]] - pxx[[f, c]]).abs() < 1e-6);
                assert!((px[[f, c]] - pxx[[f + shift, c]]).abs() < 1e-6);
            }
        }
        // Whole-utterance means differ only through the edge frames.
        let mx = temporal_average(px.view()).unwrap();
        let mxx = temporal_average(pxx.view()).unwrap();
        let bound = 2.0 * edge as f64 / t as f64;
        for (a, b) in mx.iter().zip(&mxx) {
            assert!((a - b).abs() <= bound);
        }
    }

    fn posterior_matrix() -> impl Strategy<Value = Array2<f64>> {
        (1usize..20, 2usize..8).prop_flat_map(|(t, c)| {
            prop::collection::vec(0.001f64..1.0, t * c).prop_map(move |v| {
                let mut m = Array2::from_shape_vec((t, c), v).unwrap();
                for mut row in m.outer_iter_mut() {
                    let s = row.sum();
                    row /= s;
                }
                m
            })
        })
    }

    proptest! {
        #[test]
        fn decision_ignores_frame_order(m in posterior_matrix(), seed in any::<u64>()) {
            let grid = ClassGrid::default();
            let v = vocab(m.ncols());
            let mut order: Vec<usize> = (0..m.nrows()).collect();
            use rand::seq::SliceRandom;
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let shuffled = m.select(Axis(0), &order);
            let a = decide(&temporal_average(m.view()).unwrap(), &v, &grid).unwrap();
            let b = decide(&temporal_average(shuffled.view()).unwrap(), &v, &grid).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn scaling_keeps_the_winner(m in posterior_matrix(), k in 1e-3f64..1e3) {
            let grid = ClassGrid::default();
            let v = vocab(m.ncols());
            let mean = temporal_average(m.view()).unwrap();
            let scaled: Vec<f64> = mean.iter().map(|p| p * k).collect();
            prop_assert_eq!(
                decide(&mean, &v, &grid).unwrap().class_id,
                decide(&scaled, &v, &grid).unwrap().class_id
            );
        }

        #[test]
        fn dominant_class_wins(m in posterior_matrix(), pick in any::<prop::sample::Index>()) {
            let c = m.ncols();
            let winner = pick.index(c);
            let mut m = m;
            for mut row in m.outer_iter_mut() {
                let top = row.iter().cloned().fold(0.0, f64::max);
                row[winner] = top + 0.01;
            }
            let mean = temporal_average(m.view()).unwrap();
            prop_assert_eq!(decide(&mean, &vocab(c), &ClassGrid::default()).unwrap().class_id, winner);
        }
    }
}
