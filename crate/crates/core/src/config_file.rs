//! Flat `key = value` run configuration, with `#` comments. Ablation
//! matrices add `[label]` sections on top of shared keys.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::train::TrainConfig;

/// Source of the synthetic dataset when no data directory is given.
#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub data_seed: u64,
    pub images: usize,
    pub objects: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            data_seed: 1,
            images: 100,
            objects: 8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

/// One `key = value` entry with its 1-based line number.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("").trim()
}

fn parse_entry(n: usize, line: &str) -> Result<Entry> {
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("line {n}: expected `key = value`, got {line:?}")))?;
    let (key, value) = (k.trim(), v.trim());
    if key.is_empty() {
        return Err(Error::Config(format!("line {n}: missing key")));
    }
    Ok(Entry {
        line: n,
        key: key.to_string(),
        value: value.to_string(),
    })
}

pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    text.lines()
        .enumerate()
        .filter_map(|(i, l)| {
            let l = strip_comment(l);
            (!l.is_empty()).then(|| parse_entry(i + 1, l))
        })
        .collect()
}

fn parse_value<T: FromStr>(e: &Entry) -> Result<T> {
    e.value.parse().map_err(|_| {
        Error::Config(format!("line {}: invalid value {:?} for {}", e.line, e.value, e.key))
    })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply(&parse_entries(text)?)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, entries: &[Entry]) -> Result<()> {
        entries.iter().try_for_each(|e| self.set(e))
    }

    pub fn set(&mut self, e: &Entry) -> Result<()> {
        let (m, t, d) = (&mut self.model, &mut self.train, &mut self.data);
        match e.key.as_str() {
            "feat_dim" => m.feat_dim = parse_value(e)?,
            "dim" => m.dim = parse_value(e)?,
            "embed_dim" => m.embed_dim = parse_value(e)?,
            "encoder" => m.encoder = e.value.parse().map_err(|err| line_err(e, err))?,
            "layers" => m.layers = parse_value(e)?,
            "enc_heads" => m.enc_heads = parse_value(e)?,
            "decoder" => m.decoder = e.value.parse().map_err(|err| line_err(e, err))?,
            "dec_heads" => m.dec_heads = parse_value(e)?,
            "ff_dim" => m.ff_dim = parse_value(e)?,
            "aoa_gate_layers" => m.aoa_gate_layers = parse_value(e)?,
            "dropout" => m.dropout = parse_value(e)?,
            "experimental" => m.experimental = parse_value(e)?,
            "init_seed" => m.init_seed = parse_value(e)?,
            "batch_size" => t.batch_size = parse_value(e)?,
            "xe_epochs" => t.xe_epochs = parse_value(e)?,
            "scst_epochs" => t.scst_epochs = parse_value(e)?,
            "lr_xe" => t.lr_xe = parse_value(e)?,
            "lr_anneal_xe" => t.lr_anneal_xe = parse_value(e)?,
            "lr_anneal_every" => t.lr_anneal_every = parse_value(e)?,
            "lr_scst" => t.lr_scst = parse_value(e)?,
            "lr_anneal_scst" => t.lr_anneal_scst = parse_value(e)?,
            "scst_patience" => t.scst_patience = parse_value(e)?,
            "ss_increment" => t.ss_increment = parse_value(e)?,
            "ss_every" => t.ss_every = parse_value(e)?,
            "ss_cap" => t.ss_cap = parse_value(e)?,
            "seed" => t.seed = parse_value(e)?,
            "max_len" => t.max_len = parse_value(e)?,
            "grad_clip" => t.grad_clip = parse_value(e)?,
            "captions_per_image" => t.captions_per_image = parse_value(e)?,
            "min_count" => t.min_count = parse_value(e)?,
            "eval_every" => t.eval_every = parse_value(e)?,
            "checkpoint_every" => t.checkpoint_every = parse_value(e)?,
            "threads" => t.threads = parse_value(e)?,
            "data_seed" => d.data_seed = parse_value(e)?,
            "images" => d.images = parse_value(e)?,
            "objects" => d.objects = parse_value(e)?,
            other => {
                return Err(Error::Config(format!("line {}: unknown key {other:?}", e.line)))
            }
        }
        Ok(())
    }

    /// Every key with its current value, in a stable order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let (m, t, d) = (&self.model, &self.train, &self.data);
        vec![
            ("feat_dim", m.feat_dim.to_string()),
            ("dim", m.dim.to_string()),
            ("embed_dim", m.embed_dim.to_string()),
            ("encoder", m.encoder.to_string()),
            ("layers", m.layers.to_string()),
            ("enc_heads", m.enc_heads.to_string()),
            ("decoder", m.decoder.to_string()),
            ("dec_heads", m.dec_heads.to_string()),
            ("ff_dim", m.ff_dim.to_string()),
            ("aoa_gate_layers", m.aoa_gate_layers.to_string()),
            ("dropout", m.dropout.to_string()),
            ("experimental", m.experimental.to_string()),
            ("init_seed", m.init_seed.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("xe_epochs", t.xe_epochs.to_string()),
            ("scst_epochs", t.scst_epochs.to_string()),
            ("lr_xe", t.lr_xe.to_string()),
            ("lr_anneal_xe", t.lr_anneal_xe.to_string()),
            ("lr_anneal_every", t.lr_anneal_every.to_string()),
            ("lr_scst", t.lr_scst.to_string()),
            ("lr_anneal_scst", t.lr_anneal_scst.to_string()),
            ("scst_patience", t.scst_patience.to_string()),
            ("ss_increment", t.ss_increment.to_string()),
            ("ss_every", t.ss_every.to_string()),
            ("ss_cap", t.ss_cap.to_string()),
            ("seed", t.seed.to_string()),
            ("max_len", t.max_len.to_string()),
            ("grad_clip", t.grad_clip.to_string()),
            ("captions_per_image", t.captions_per_image.to_string()),
            ("min_count", t.min_count.to_string()),
            ("eval_every", t.eval_every.to_string()),
            ("checkpoint_every", t.checkpoint_every.to_string()),
            ("threads", t.threads.to_string()),
            ("data_seed", d.data_seed.to_string()),
            ("images", d.images.to_string()),
            ("objects", d.objects.to_string()),
        ]
    }

    /// The full configuration in file syntax.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate_layout()?;
        self.train.validate()?;
        if self.data.images == 0 {
            return Err(Error::Config("images must be at least 1".into()));
        }
        Ok(())
    }
}

fn line_err(e: &Entry, err: Error) -> Error {
    Error::Config(format!("line {}: {err}", e.line))
}

/// Shared keys followed by labelled rows, each overriding the shared ones.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub shared: Vec<Entry>,
    pub rows: Vec<(String, Vec<Entry>)>,
}

impl Matrix {
    pub fn parse(text: &str) -> Result<Self> {
        let mut shared = Vec::new();
        let mut rows: Vec<(String, Vec<Entry>)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            if let Some(label) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let label = label.trim();
                if label.is_empty() || rows.iter().any(|(l, _)| l == label) {
                    return Err(Error::Config(format!("line {}: empty or repeated row label", i + 1)));
                }
                rows.push((label.to_string(), Vec::new()));
                continue;
            }
            let entry = parse_entry(i + 1, line)?;
            match rows.last_mut() {
                Some((_, entries)) => entries.push(entry),
                None => shared.push(entry),
            }
        }
        if rows.is_empty() {
            return Err(Error::Config("configuration matrix lists no rows".into()));
        }
        Ok(Matrix { shared, rows })
    }

    /// The configuration of every row: defaults, then shared keys, then the
    /// row's own keys.
    pub fn configs(&self) -> Result<Vec<(String, RunConfig)>> {
        let mut base = RunConfig::default();
        base.apply(&self.shared)?;
        self.rows
            .iter()
            .map(|(label, entries)| {
                let mut cfg = base.clone();
                cfg.apply(entries)?;
                Ok((label.clone(), cfg))
            })
            .collect()
    }
}
