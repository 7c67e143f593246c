use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use super::model::Transformer;
use crate::error::{Error, Result};
use crate::numcore::{AdamConfig, Tensor};

pub const CHECKPOINT_FORMAT: &str = "veclm-checkpoint/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into params.bin.
    pub offset: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: usize,
    pub optimizer: AdamConfig,
    pub epoch_losses: Vec<f64>,
    /// (epoch, loss) pairs on the held-out split.
    pub validation_losses: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: String,
    pub config: ModelConfig,
    pub input_scale: f64,
    pub fine_tuned: bool,
    pub training: TrainingMeta,
    pub tensors: Vec<TensorEntry>,
    pub params_sha256: String,
}

/// A trained model. Parameters are held at binary32 precision so that a
/// saved and reloaded checkpoint is identical to the in-memory one.
#[derive(Clone, Debug)]
pub struct TransformerCheckpoint {
    pub manifest: CheckpointManifest,
    pub model: Transformer,
}

fn round_to_f32(model: &mut Transformer) {
    for p in model.params_mut().iter_mut() {
        p.value.data_mut().iter_mut().for_each(|x| *x = *x as f32 as f64);
    }
}

fn params_bytes(model: &Transformer) -> (Vec<u8>, Vec<TensorEntry>) {
    let mut bytes = Vec::with_capacity(model.params().num_values() * 4);
    let mut entries = Vec::with_capacity(model.params().len());
    for p in model.params().iter() {
        entries.push(TensorEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            offset: bytes.len(),
        });
        for &x in p.value.data() {
            bytes.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    (bytes, entries)
}

impl TransformerCheckpoint {
    pub fn new(mut model: Transformer, training: TrainingMeta) -> Self {
        round_to_f32(&mut model);
        let (bytes, tensors) = params_bytes(&model);
        let manifest = CheckpointManifest {
            format_version: CHECKPOINT_FORMAT.to_string(),
            config: model.config().clone(),
            input_scale: model.input_scale(),
            fine_tuned: model.is_fine_tuned(),
            training,
            tensors,
            params_sha256: hex::encode(Sha256::digest(&bytes)),
        };
        TransformerCheckpoint { manifest, model }
    }

    /// SHA-256 of params.bin.
    pub fn hash(&self) -> &str {
        &self.manifest.params_sha256
    }

    pub fn params_bytes(&self) -> Vec<u8> {
        params_bytes(&self.model).0
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let params = dir.join(PARAMS_FILE);
        std::fs::write(&params, self.params_bytes()).map_err(|e| Error::io(&params, e))?;
        let manifest = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&self.manifest)?;
        std::fs::write(&manifest, json + "\n").map_err(|e| Error::io(&manifest, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: CheckpointManifest =
            serde_json::from_str(&text).map_err(|e| Error::data(&manifest_path, e.line(), e.to_string()))?;
        if manifest.format_version != CHECKPOINT_FORMAT {
            return Err(Error::data(
                &manifest_path,
                1,
                format!("unsupported format {:?}", manifest.format_version),
            ));
        }
        let params_path = dir.join(PARAMS_FILE);
        let bytes = std::fs::read(&params_path).map_err(|e| Error::io(&params_path, e))?;
        let digest = hex::encode(Sha256::digest(&bytes));
        if digest != manifest.params_sha256 {
            return Err(Error::data(&params_path, 0, "params.bin does not match the manifest hash"));
        }

        let embed = if manifest.fine_tuned {
            let entry = manifest
                .tensors
                .iter()
                .find(|t| t.name == "embed")
                .ok_or_else(|| Error::data(&manifest_path, 0, "fine-tuned checkpoint without embed tensor"))?;
            Some(Tensor::zeros(&entry.shape))
        } else {
            None
        };
        let mut model = Transformer::new(manifest.config.clone(), 0, manifest.input_scale, embed)
            .map_err(|e| Error::data(&manifest_path, 0, e.to_string()))?;
        if model.params().len() != manifest.tensors.len() {
            return Err(Error::data(
                &manifest_path,
                0,
                format!("{} tensors listed, config implies {}", manifest.tensors.len(), model.params().len()),
            ));
        }
        for (p, entry) in model.params_mut().iter_mut().zip(&manifest.tensors) {
            if p.name != entry.name || p.value.shape() != entry.shape.as_slice() {
                return Err(Error::data(
                    &manifest_path,
                    0,
                    format!("tensor {} {:?} where {} {:?} expected", entry.name, entry.shape, p.name, p.value.shape()),
                ));
            }
            let n = p.value.len();
            let raw = bytes
                .get(entry.offset..entry.offset + 4 * n)
                .ok_or_else(|| Error::data(&params_path, 0, format!("tensor {} out of bounds", entry.name)))?;
            for (x, chunk) in p.value.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
                *x = f32::from_le_bytes(chunk.try_into().expect("4 bytes")) as f64;
            }
        }
        Ok(TransformerCheckpoint { manifest, model })
    }
}
