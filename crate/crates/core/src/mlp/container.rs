//! Deployable model file.
//!
//! Layout: `RVPM1\0`, a little-endian u32 manifest length, the UTF-8 JSON
//! manifest, then little-endian f32 blobs W1 (row-major), b1, W2 (row-major), b2.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{FeatureNormalizer, Network};
use crate::error::{Error, Result};
use crate::frontend::FrameParams;
use crate::gabor::FilterbankConfig;
use crate::grid::{Cell, ClassGrid, ClassVocabulary};

pub const MAGIC: &[u8; 6] = b"RVPM1\0";

/// A trained network together with everything needed to run it on audio.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub network: Network,
    pub vocabulary: ClassVocabulary,
    pub grid: ClassGrid,
    pub frame_params: FrameParams,
    pub filterbank: FilterbankConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub classes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub dims: Dims,
    pub grid: ClassGrid,
    pub vocabulary: Vec<Cell>,
    pub frame_params: FrameParams,
    pub filterbank: FilterbankConfig,
    pub normalizer: FeatureNormalizer,
    pub seed: u64,
}

impl MlpModel {
    pub fn new(
        network: Network,
        vocabulary: ClassVocabulary,
        grid: ClassGrid,
        frame_params: FrameParams,
        filterbank: FilterbankConfig,
        seed: u64,
    ) -> Result<Self> {
        if network.n_classes() != vocabulary.len() {
            return Err(Error::DimensionMismatch {
                what: "output classes vs vocabulary",
                expected: vocabulary.len(),
                actual: network.n_classes(),
            });
        }
        Ok(Self {
            network,
            vocabulary,
            grid,
            frame_params,
            filterbank,
            seed,
        })
    }

    pub fn manifest(&self) -> ModelManifest {
        ModelManifest {
            dims: Dims {
                input: self.network.input_dim(),
                hidden: self.network.hidden_dim(),
                classes: self.network.n_classes(),
            },
            grid: self.grid,
            vocabulary: self.vocabulary.cells().to_vec(),
            frame_params: self.frame_params,
            filterbank: self.filterbank.clone(),
            normalizer: self.network.normalizer.clone(),
            seed: self.seed,
        }
    }

    /// Serializes the model. Weights are written at single precision.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let json = serde_json::to_vec(&self.manifest())?;
        let len = u32::try_from(json.len())
            .map_err(|_| Error::ModelFormat("manifest larger than 4 GiB".into()))?;
        w.write_all(MAGIC)?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(&json)?;
        let net = &self.network;
        let blobs = net.w1.iter().chain(&net.b1).chain(&net.w2).chain(&net.b2);
        let mut buf = Vec::with_capacity(4 * (net.w1.len() + net.w2.len() + 64));
        for v in blobs {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::ModelFormat(msg.to_string());
        if bytes.len() < 10 || &bytes[..6] != MAGIC {
            return Err(bad("missing RVPM1 magic"));
        }
        let len = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
        let json_end = 10usize
            .checked_add(len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("manifest length exceeds file"))?;
        let manifest: ModelManifest = serde_json::from_slice(&bytes[10..json_end])?;
        let Dims {
            input,
            hidden,
            classes,
        } = manifest.dims;
        if manifest.normalizer.mean.len() != input || manifest.normalizer.inv_std.len() != input {
            return Err(bad("normalizer length does not match input dimension"));
        }
        if manifest.vocabulary.len() != classes {
            return Err(bad("vocabulary size does not match class count"));
        }
        let floats = hidden * input + hidden + classes * hidden + classes;
        let blob = &bytes[json_end..];
        if blob.len() != 4 * floats {
            return Err(Error::ModelFormat(format!(
                "expected {} weight bytes, found {}",
                4 * floats,
                blob.len()
            )));
        }
        let mut values = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64);
        let mut take = |n: usize| -> Vec<f64> { values.by_ref().take(n).collect() };
        let w1 = Array2::from_shape_vec((hidden, input), take(hidden * input))
            .map_err(|e| Error::ModelFormat(e.to_string()))?;
        let b1 = Array1::from(take(hidden));
        let w2 = Array2::from_shape_vec((classes, hidden), take(classes * hidden))
            .map_err(|e| Error::ModelFormat(e.to_string()))?;
        let b2 = Array1::from(take(classes));
        if w1.iter().chain(&b1).chain(&w2).chain(&b2).any(|v| !v.is_finite()) {
            return Err(bad("non-finite weight"));
        }
        let network = Network {
            w1,
            b1,
            w2,
            b2,
            normalizer: manifest.normalizer,
        };
        Self::new(
            network,
            ClassVocabulary::from(manifest.vocabulary),
            manifest.grid,
            manifest.frame_params,
            manifest.filterbank,
            manifest.seed,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64) -> MlpModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normalizer = FeatureNormalizer {
            mean: (0..12).map(|_| rng.random_range(-3.0..3.0)).collect(),
            inv_std: (0..12).map(|_| rng.random_range(0.1..10.0)).collect(),
        };
        let net = Network::init(12, 6, 3, normalizer, &mut rng).unwrap();
        MlpModel::new(
            net,
            ClassVocabulary::from(vec![(0, 1), (2, 5), (7, 20)]),
            ClassGrid::default(),
            FrameParams::default(),
            FilterbankConfig::default(),
            seed,
        )
        .unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = model(1).to_bytes().unwrap();
        assert_eq!(&bytes[..6], b"RVPM1\0");
        let len = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let manifest: serde_json::Value = serde_json::from_slice(&bytes[10..10 + len]).unwrap();
        assert_eq!(manifest["dims"]["hidden"], 6);
        assert_eq!(manifest["vocabulary"][2], serde_json::json!([7, 20]));
        assert_eq!(bytes.len() - 10 - len, 4 * (6 * 12 + 6 + 3 * 6 + 3));
        // First weight blob entry is W1[0][0].
        let w = f32::from_le_bytes(bytes[10 + len..14 + len].try_into().unwrap());
        assert_eq!(w as f64, model(1).network.w1[[0, 0]]);
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model(2);
        let back = MlpModel::from_bytes(&m.to_bytes().unwrap()).unwrap();
        assert_eq!(back, m);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x: Vec<f64> = (0..12).map(|_| rng.random_range(-5.0..5.0)).collect();
            assert_eq!(m.network.forward(&x).unwrap(), back.network.forward(&x).unwrap());
        }
    }

    #[test]
    fn rejects_corrupt_files() {
        let bytes = model(4).to_bytes().unwrap();
        assert!(MlpModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(MlpModel::from_bytes(&wrong).is_err());
        assert!(MlpModel::from_bytes(&bytes[..8]).is_err());
        let mut long = bytes;
        long.extend_from_slice(&[0, 0, 0, 0]);
        assert!(MlpModel::from_bytes(&long).is_err());
    }

    #[test]
    fn vocabulary_must_match_outputs() {
        let m = model(5);
        let r = MlpModel::new(
            m.network,
            ClassVocabulary::from(vec![(0, 0)]),
            m.grid,
            m.frame_params,
            m.filterbank,
            0,
        );
        assert!(r.is_err());
    }
}
