//! Datasets, vocabulary and on-disk formats.

pub mod captions;
pub mod checkpoint;
pub mod features;
pub mod split;
pub mod synthetic;
pub mod vocab;

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use captions::CaptionRecord;
pub use features::FeatureSet;
pub use split::DatasetSplit;
pub use vocab::Vocabulary;

pub const FEATURES_FILE: &str = "features.aoaf";
pub const CAPTIONS_FILE: &str = "captions.jsonl";
pub const SPLITS_FILE: &str = "splits.json";

/// Features and reference captions of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    /// `k×D_in` raw feature rows.
    pub features: Tensor,
    pub captions: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Vec<ImageRecord>,
    pub split: DatasetSplit,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(images: Vec<ImageRecord>, split: DatasetSplit) -> Result<Self> {
        let mut index = HashMap::with_capacity(images.len());
        for (i, img) in images.iter().enumerate() {
            if index.insert(img.image_id.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate image id {}", img.image_id)));
            }
        }
        let ids: Vec<String> = images.iter().map(|i| i.image_id.clone()).collect();
        split.validate(&ids)?;
        Ok(Dataset {
            images,
            split,
            index,
        })
    }

    /// Synthetic scenes with the default seeded 80/10/10 split.
    pub fn synthetic(seed: u64, n_images: usize, k: usize, dim: usize) -> Result<Self> {
        let images = synthetic::gen_synthetic(seed, n_images, k, dim)?;
        let ids: Vec<String> = images.iter().map(|i| i.image_id.clone()).collect();
        let split = DatasetSplit::default_for(&ids, seed);
        Dataset::new(images, split)
    }

    /// Same images with every image in the training split.
    pub fn all_train(images: Vec<ImageRecord>) -> Result<Self> {
        let split = DatasetSplit {
            train: images.iter().map(|i| i.image_id.clone()).collect(),
            ..DatasetSplit::default()
        };
        Dataset::new(images, split)
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageRecord> {
        self.index.get(image_id).map(|&i| &self.images[i])
    }

    pub fn records(&self, ids: &[String]) -> Result<Vec<&ImageRecord>> {
        ids.iter()
            .map(|id| self.get(id).ok_or_else(|| Error::Data(format!("unknown image id {id}"))))
            .collect()
    }

    pub fn feature_dim(&self) -> usize {
        self.images.first().map(|i| i.features.cols()).unwrap_or(0)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let feats: Vec<FeatureSet> = self
            .images
            .iter()
            .map(|i| FeatureSet {
                image_id: i.image_id.clone(),
                features: i.features.clone(),
            })
            .collect();
        features::write_features(&dir.join(FEATURES_FILE), &feats)?;
        let caps: Vec<CaptionRecord> = self
            .images
            .iter()
            .map(|i| CaptionRecord {
                image_id: i.image_id.clone(),
                captions: i.captions.clone(),
            })
            .collect();
        captions::write_captions(&dir.join(CAPTIONS_FILE), &caps)?;
        self.split.write(&dir.join(SPLITS_FILE))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let feats = features::read_features(&dir.join(FEATURES_FILE))?;
        let caps = captions::read_captions(&dir.join(CAPTIONS_FILE))?;
        let split = DatasetSplit::read(&dir.join(SPLITS_FILE))?;
        let mut by_id: HashMap<String, Vec<String>> =
            caps.into_iter().map(|c| (c.image_id, c.captions)).collect();
        let mut missing = Vec::new();
        let images = feats
            .into_iter()
            .map(|f| {
                let captions = by_id.remove(&f.image_id).unwrap_or_default();
                if captions.is_empty() {
                    missing.push(f.image_id.clone());
                }
                ImageRecord {
                    image_id: f.image_id,
                    features: f.features,
                    captions,
                }
            })
            .collect();
        if !missing.is_empty() {
            return Err(Error::Data(format!(
                "images without reference captions: {}",
                missing.join(", ")
            )));
        }
        Dataset::new(images, split)
    }
}
