//! Runs a list of model variants on shared data and tabulates the results.

use std::fmt::Write as _;

use serde::Serialize;

use crate::config_file::RunConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::Scores;
use crate::model::{ContextScheme, EncoderKind};
use crate::train::{run_training, Phase};

/// The ablation rows: encoder refiners, decoder context heads, and single
/// versus multi-head decoder attention. Multi-head rows use
/// `shared.model.dec_heads` heads.
pub fn ablation_rows(shared: &RunConfig) -> Vec<(String, RunConfig)> {
    use ContextScheme as D;
    use EncoderKind as E;
    let mh = shared.model.dec_heads;
    let rows: [(&str, E, D, usize); 10] = [
        ("Base", E::Base, D::Base, 1),
        ("+ Enc: Refine (w/o AoA)", E::RefineNoAoa, D::Base, 1),
        ("+ Enc: Refine (w/ AoA)", E::RefineAoa, D::Base, 1),
        ("+ Dec: LSTM", E::Base, D::Lstm, 1),
        ("+ Dec: AoA", E::Base, D::Aoa, 1),
        ("+ Dec: LSTM + AoA", E::Base, D::LstmAoa, 1),
        ("+ Dec: MH-Att", E::Base, D::Base, mh),
        ("+ Dec: MH-Att, LSTM", E::Base, D::Lstm, mh),
        ("+ Dec: MH-Att, AoA", E::Base, D::Aoa, mh),
        ("Full: AoANet", E::RefineAoa, D::Aoa, mh),
    ];
    rows.iter()
        .map(|&(label, enc, dec, heads)| {
            let mut cfg = shared.clone();
            cfg.model.encoder = enc;
            cfg.model.decoder = dec;
            cfg.model.dec_heads = heads;
            (label.to_string(), cfg)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationResult {
    pub label: String,
    pub encoder: String,
    pub decoder: String,
    pub dec_heads: usize,
    /// `ok`, or `refused: <reason>` for configurations that fail validation.
    pub status: String,
    pub params: Option<usize>,
    pub train_loss: Option<f64>,
    pub val: Option<Scores>,
}

/// Trains every row (cross-entropy only) on `data` and scores the final
/// model on the validation split. Rows whose configuration is invalid are
/// reported as refused rather than aborting the matrix.
pub fn run_matrix(rows: &[(String, RunConfig)], data: &Dataset) -> Result<Vec<AblationResult>> {
    rows.iter()
        .map(|(label, cfg)| {
            let mut result = AblationResult {
                label: label.clone(),
                encoder: cfg.model.encoder.to_string(),
                decoder: cfg.model.decoder.to_string(),
                dec_heads: cfg.model.dec_heads,
                status: "ok".into(),
                params: None,
                train_loss: None,
                val: None,
            };
            if let Err(Error::Config(reason)) = cfg.validate() {
                result.status = format!("refused: {reason}");
                return Ok(result);
            }
            let out = run_training(&cfg.train, &cfg.model, data, Phase::Xe, None, None)?;
            let last = out.log.last();
            result.params = Some(out.model.params.num_scalars());
            result.train_loss = last.map(|l| l.train_loss);
            result.val = last.and_then(|l| l.val);
            Ok(result)
        })
        .collect()
}

/// Fixed-width comparison table, one line per row.
pub fn render_table(results: &[AblationResult]) -> String {
    let width = results.iter().map(|r| r.label.len()).max().unwrap_or(5).max(5);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$}  {:>13}  {:>12}  {:>2}  {:>8}  {:>8}  {:>6}  {:>6}  {:>6}  {:>6}  status",
        "Model", "encoder", "decoder", "H", "params", "xe_loss", "B1", "B4", "R", "C"
    );
    for r in results {
        let num = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |v| format!("{v:.p$}"));
        let v = r.val;
        let _ = writeln!(
            s,
            "{:<width$}  {:>13}  {:>12}  {:>2}  {:>8}  {:>8}  {:>6}  {:>6}  {:>6}  {:>6}  {}",
            r.label,
            r.encoder,
            r.decoder,
            r.dec_heads,
            r.params.map_or("-".into(), |p| p.to_string()),
            num(r.train_loss, 4),
            num(v.map(|v| v.bleu1), 3),
            num(v.map(|v| v.bleu4), 3),
            num(v.map(|v| v.rouge_l), 3),
            num(v.map(|v| v.cider_d), 3),
            r.status
        );
    }
    s
}
