//! A trained model bundle: normalizer, MDAEs, feature layout and classifier.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::{predict, MlpNetwork};
use crate::datacube::{apply_normalizer, HsiCube, NormStats};
use crate::error::{HsiError, Result};
use crate::features::{assemble_batch, FeatureConfig};
use crate::mdae::{model_file_name, MdaeModel, ALL_CLASSES};

pub const PIPELINE_FILE: &str = "model.json";
pub const MLP_FILE: &str = "mlp.bin";
const PREDICT_BATCH: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PipelineMeta {
    network_id: u8,
    bands: usize,
    norm: NormStats,
    features: FeatureConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPipeline {
    pub network_id: u8,
    pub bands: usize,
    pub norm: NormStats,
    pub features: FeatureConfig,
    /// Classes `1..=N` then the all-class model; empty when unused.
    pub models: Vec<MdaeModel>,
    pub net: MlpNetwork,
}

impl TrainedPipeline {
    pub fn n_classes(&self) -> usize {
        self.features.n_classes
    }

    /// Classifies every pixel of an already normalized cube.
    pub fn classify_normalized(&self, cube: &HsiCube) -> Result<Vec<u16>> {
        if cube.bands() != self.bands {
            return Err(HsiError::LengthMismatch {
                expected: self.bands,
                got: cube.bands(),
            });
        }
        let n = cube.n_pixels();
        let mut out = Vec::with_capacity(n);
        for start in (0..n).step_by(PREDICT_BATCH) {
            let idx: Vec<usize> = (start..(start + PREDICT_BATCH).min(n)).collect();
            let feats = assemble_batch(&idx, cube, &self.models, &self.features)?;
            out.extend(predict(&self.net, &feats)?);
        }
        Ok(out)
    }

    /// Normalizes a raw cube with the stored statistics and classifies it.
    pub fn classify(&self, raw: &HsiCube) -> Result<Vec<u16>> {
        self.classify_normalized(&apply_normalizer(raw, self.norm))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let meta = PipelineMeta {
            network_id: self.network_id,
            bands: self.bands,
            norm: self.norm,
            features: self.features,
        };
        fs::write(dir.join(PIPELINE_FILE), serde_json::to_vec_pretty(&meta)?)?;
        for m in &self.models {
            m.save(dir)?;
        }
        self.net.save(&dir.join(MLP_FILE))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(PIPELINE_FILE);
        if !meta_path.is_file() {
            return Err(HsiError::MissingFile(meta_path));
        }
        let meta: PipelineMeta = serde_json::from_slice(&fs::read(&meta_path)?)?;
        let models = if meta.features.needs_models() {
            (1..=meta.features.n_classes as u16)
                .chain([ALL_CLASSES])
                .map(|c| MdaeModel::load(&dir.join(model_file_name(c))))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let net = MlpNetwork::load(&dir.join(MLP_FILE))?;
        Ok(Self {
            network_id: meta.network_id,
            bands: meta.bands,
            norm: meta.norm,
            features: meta.features,
            models,
            net,
        })
    }
}
