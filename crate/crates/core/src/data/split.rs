use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatErrorKind, Result};

/// Disjoint train/val/test image-id lists.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl DatasetSplit {
    /// Seeded shuffle, then `train_frac` / `val_frac` / remainder.
    pub fn assign(ids: &[String], seed: u64, train_frac: f64, val_frac: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&train_frac)
            || !(0.0..=1.0).contains(&val_frac)
            || train_frac + val_frac > 1.0 + 1e-12
        {
            return Err(Error::Config(format!(
                "invalid split fractions {train_frac}/{val_frac}"
            )));
        }
        let mut order = ids.to_vec();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n = order.len();
        let n_train = (n as f64 * train_frac).round() as usize;
        let n_val = ((n as f64 * val_frac).round() as usize).min(n - n_train);
        let test = order.split_off(n_train + n_val);
        let val = order.split_off(n_train);
        Ok(DatasetSplit {
            train: order,
            val,
            test,
        })
    }

    /// 80/10/10.
    pub fn default_for(ids: &[String], seed: u64) -> Self {
        DatasetSplit::assign(ids, seed, 0.8, 0.1).expect("valid default fractions")
    }

    pub fn validate(&self, ids: &[String]) -> Result<()> {
        let mut seen = HashSet::new();
        for id in self.train.iter().chain(&self.val).chain(&self.test) {
            if !seen.insert(id.as_str()) {
                return Err(Error::Data(format!("image {id} appears in more than one split")));
            }
        }
        let all: HashSet<&str> = ids.iter().map(String::as_str).collect();
        if seen != all {
            return Err(Error::Data("splits do not cover the dataset exactly".into()));
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&[String]> {
        match name {
            "train" => Ok(&self.train),
            "val" => Ok(&self.val),
            "test" => Ok(&self.test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("split serialises") + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            kind: FormatErrorKind::Malformed,
            offset: e.line() as u64,
            detail: e.to_string(),
        })
    }
}
