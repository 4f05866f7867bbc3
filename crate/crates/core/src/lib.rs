//! Blind joint estimation of reverberation time (T60) and direct-to-reverberant
//! ratio (DRR) from single-channel speech.
//!
//! Audio is turned into a log-mel spectrogram, filtered by a bank of 2D Gabor
//! filters into 600-dimensional frame features, classified frame by frame by
//! a one-hidden-layer MLP over a (T60, DRR) class grid, and averaged over the
//! utterance before a winner-takes-all decision.

pub mod acoustics;
pub mod audio;
pub mod corpus;
pub mod error;
pub mod estimator;
pub mod eval;
pub mod frontend;
pub mod gabor;
pub mod grid;
pub mod mlp;

pub use acoustics::{compute_drr, ground_truth, schroeder_edc, synth_rir, t60, EdcCurve, Rir};
pub use audio::{read_wav, write_wav_f32, write_wav_pcm16, AudioBuffer, SAMPLE_RATE};
pub use corpus::{build_corpus, convolve, gen_noise, mix_at_snr, speech_like, Corpus, NoiseKind};
pub use error::{Error, Result};
pub use estimator::{estimate_utterance, Estimate, Estimator};
pub use eval::{boxplot_stats, fps_to_rtf, measure_rtf, BoxStats, EvalRecord, RtfReport};
pub use frontend::{log_mel_spectrogram, FrameParams, LogMelSpectrogram};
pub use gabor::{
    build_diagonal_filterbank, extract_features, FeatureMatrix, FilterbankConfig, GaborFilterbank,
};
pub use grid::{build_vocabulary, Cell, ClassGrid, ClassVocabulary};
pub use mlp::{train, MlpModel, Network, TrainConfig};
