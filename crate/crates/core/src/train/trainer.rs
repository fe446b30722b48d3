use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::autograd::Tape;
use crate::data::checkpoint::save_checkpoint;
use crate::data::vocab::EOS;
use crate::data::{Dataset, ImageRecord, Vocabulary};
use crate::error::{Error, Result};
use crate::eval::evaluate_ids;
use crate::metrics::CiderReward;
use crate::model::{CaptionModel, ModelConfig};
use crate::params::Grads;

use super::loss::{scheduled_sampling_loss, scst_step, xe_loss};
use super::schedule::{ss_prob, xe_lr, Plateau};
use super::{stream_rng, AdamState, EpochLog, Phase, TrainConfig, STREAM_SCST, STREAM_XE};

pub const LOG_FILE: &str = "log.jsonl";

pub struct TrainOutcome {
    pub model: CaptionModel,
    pub vocab: Vocabulary,
    pub log: Vec<EpochLog>,
    pub checkpoints: Vec<PathBuf>,
}

struct Run<'a> {
    cfg: &'a TrainConfig,
    data: &'a Dataset,
    pool: rayon::ThreadPool,
    out: Option<&'a Path>,
    log_file: Option<BufWriter<File>>,
    log: Vec<EpochLog>,
    checkpoints: Vec<PathBuf>,
}

/// Trains on the dataset's train split and validates on its val split.
///
/// XE builds a fresh vocabulary and model unless `init` is given; SCST
/// requires `init`. Between phases the parameters are rounded to checkpoint
/// precision and the optimiser restarts, so `Full` equals `Xe` followed by
/// `Scst` resumed from the XE checkpoint. With `out`, writes `log.jsonl` and
/// `xe.json` / `scst.json` checkpoints there.
pub fn run_training(
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    data: &Dataset,
    phase: Phase,
    init: Option<(CaptionModel, Vocabulary)>,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.split.train.is_empty() {
        return Err(Error::Data("training split is empty".into()));
    }
    let (mut model, vocab) = match init {
        Some(pair) => pair,
        None if phase == Phase::Scst => {
            return Err(Error::Config("the scst phase needs an initial checkpoint".into()))
        }
        None => {
            let captions: Vec<&String> = data
                .records(&data.split.train)?
                .into_iter()
                .flat_map(|r| &r.captions)
                .collect();
            let vocab = Vocabulary::build(&captions, cfg.min_count)?;
            let mut mc = model_cfg.clone();
            mc.vocab_size = vocab.len();
            (CaptionModel::new(mc)?, vocab)
        }
    };
    if model.config.feat_dim != data.feature_dim() {
        return Err(Error::Config(format!(
            "feat_dim {} does not match dataset feature width {}",
            model.config.feat_dim,
            data.feature_dim()
        )));
    }
    if let Some(name) = model.params.first_non_finite() {
        return Err(Error::Numeric { param: name.to_string() });
    }
    if phase.runs_scst() && cfg.scst_epochs > 0 && data.split.val.is_empty() {
        return Err(Error::Config("scst learning-rate annealing needs a validation split".into()));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let log_file = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join(LOG_FILE);
            Some(BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?))
        }
        None => None,
    };
    let mut run = Run {
        cfg,
        data,
        pool,
        out,
        log_file,
        log: Vec::new(),
        checkpoints: Vec::new(),
    };

    if phase.runs_xe() {
        run.xe_phase(&mut model, &vocab)?;
        model.params.quantize_f32();
        run.checkpoint(&model, &vocab, "xe")?;
    }
    if phase.runs_scst() {
        run.scst_phase(&mut model, &vocab)?;
        model.params.quantize_f32();
        run.checkpoint(&model, &vocab, "scst")?;
    }
    Ok(TrainOutcome {
        model,
        vocab,
        log: run.log,
        checkpoints: run.checkpoints,
    })
}

impl Run<'_> {
    fn checkpoint(&mut self, model: &CaptionModel, vocab: &Vocabulary, stem: &str) -> Result<()> {
        if let Some(dir) = self.out {
            let path = dir.join(format!("{stem}.json"));
            save_checkpoint(&path, model, vocab)?;
            self.checkpoints.push(path);
        }
        Ok(())
    }

    fn record(&mut self, entry: EpochLog) -> Result<()> {
        if let (Some(f), Some(dir)) = (self.log_file.as_mut(), self.out) {
            let path = dir.join(LOG_FILE);
            let line = serde_json::to_string(&entry).expect("log entry serialises");
            writeln!(f, "{line}")
                .and_then(|_| f.flush())
                .map_err(|e| Error::io(&path, e))?;
        }
        self.log.push(entry);
        Ok(())
    }

    fn validate(&self, model: &CaptionModel, vocab: &Vocabulary) -> Result<Option<crate::metrics::Scores>> {
        self.pool.install(|| {
            evaluate_ids(model, vocab, self.data, &self.data.split.val, 1, self.cfg.max_len)
        })
    }

    /// Runs `f` for every index in `batch` on the pool and sums the
    /// gradients in batch order.
    fn batch<T: Send>(
        &self,
        model: &CaptionModel,
        batch: &[usize],
        f: impl Fn(usize) -> Result<(Grads, T)> + Sync,
    ) -> Result<(Grads, Vec<T>)> {
        let results = self
            .pool
            .install(|| batch.par_iter().map(|&i| f(i)).collect::<Result<Vec<_>>>())?;
        let mut total = Grads::zeros_like(&model.params);
        let mut stats = Vec::with_capacity(results.len());
        for (g, s) in results {
            total.add_assign(&g);
            stats.push(s);
        }
        total.scale(1.0 / batch.len() as f64);
        Ok((total, stats))
    }

    fn step(&self, model: &mut CaptionModel, adam: &mut AdamState, mut grads: Grads, lr: f64) -> Result<()> {
        if let Some(i) = grads.0.iter().position(|g| g.iter().any(|v| !v.is_finite())) {
            let id = model.params.ids().nth(i).expect("gradient index");
            return Err(Error::Numeric {
                param: model.params.name(id).to_string(),
            });
        }
        if self.cfg.grad_clip > 0.0 {
            grads.clip_norm(self.cfg.grad_clip);
        }
        adam.update(&mut model.params, &grads, lr);
        if let Some(name) = model.params.first_non_finite() {
            return Err(Error::Numeric { param: name.to_string() });
        }
        Ok(())
    }

    fn epoch_order(&self, stream: u64, epoch: usize, n: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream_rng(self.cfg.seed, stream, epoch as u64, u64::MAX));
        order
    }

    fn xe_phase(&mut self, model: &mut CaptionModel, vocab: &Vocabulary) -> Result<()> {
        let cfg = self.cfg;
        let records = self.data.records(&self.data.split.train)?;
        let mut examples: Vec<(&ImageRecord, Vec<usize>)> = Vec::new();
        for rec in records {
            let take = match cfg.captions_per_image {
                0 => rec.captions.len(),
                n => n.min(rec.captions.len()),
            };
            for c in &rec.captions[..take] {
                let mut target = vocab.encode(c);
                target.push(EOS);
                examples.push((rec, target));
            }
        }
        let mut adam = AdamState::new(&model.params);
        for epoch in 0..cfg.xe_epochs {
            let lr = xe_lr(cfg, epoch);
            let ss = ss_prob(cfg, epoch);
            let order = self.epoch_order(STREAM_XE, epoch, examples.len());
            let (mut loss_sum, mut tokens) = (0.0, 0usize);
            for batch in order.chunks(cfg.batch_size) {
                let current: &CaptionModel = model;
                let (grads, stats) = self.batch(current, batch, |i| {
                    let (rec, target) = &examples[i];
                    let tape = Tape::new();
                    let bound = current.params.bind(&tape, true);
                    let img = current.image_context(&tape, &bound, &rec.features)?;
                    let loss = if ss > 0.0 {
                        let mut rng = stream_rng(cfg.seed, STREAM_XE, epoch as u64, i as u64);
                        scheduled_sampling_loss(&bound, current, &img, target, ss, &mut rng)?
                    } else {
                        xe_loss(&bound, current, &img, target)?
                    };
                    loss.backward()?;
                    Ok((bound.grads(), (loss.item(), target.len())))
                })?;
                for (l, n) in stats {
                    loss_sum += l;
                    tokens += n;
                }
                self.step(model, &mut adam, grads, lr)?;
            }
            let last = epoch + 1 == cfg.xe_epochs;
            let val = if last || (epoch + 1) % cfg.eval_every == 0 {
                self.validate(model, vocab)?
            } else {
                None
            };
            self.record(EpochLog {
                epoch,
                phase: "xe".into(),
                lr,
                ss_prob: ss,
                train_loss: loss_sum / tokens.max(1) as f64,
                reward_sample: None,
                reward_greedy: None,
                val,
            })?;
            if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 && !last {
                let mut snap = model.clone();
                snap.params.quantize_f32();
                self.checkpoint(&snap, vocab, &format!("xe_epoch{epoch:04}"))?;
            }
        }
        Ok(())
    }

    fn scst_phase(&mut self, model: &mut CaptionModel, vocab: &Vocabulary) -> Result<()> {
        let cfg = self.cfg;
        let records = self.data.records(&self.data.split.train)?;
        let reward = CiderReward::new(records.iter().copied());
        let mut adam = AdamState::new(&model.params);
        let mut plateau = Plateau::new(cfg.lr_scst, cfg.lr_anneal_scst, cfg.scst_patience);
        for epoch in 0..cfg.scst_epochs {
            let lr = plateau.lr;
            let order = self.epoch_order(STREAM_SCST, epoch, records.len());
            let (mut loss_sum, mut rs_sum, mut rg_sum) = (0.0, 0.0, 0.0);
            for batch in order.chunks(cfg.batch_size) {
                let current: &CaptionModel = model;
                let (grads, stats) = self.batch(current, batch, |i| {
                    let rec = records[i];
                    let tape = Tape::new();
                    let bound = current.params.bind(&tape, true);
                    let img = current.image_context(&tape, &bound, &rec.features)?;
                    let mut rng = stream_rng(cfg.seed, STREAM_SCST, epoch as u64, i as u64);
                    let step = scst_step(&bound, current, &img, cfg.max_len, &mut rng, |toks| {
                        reward.score(&rec.image_id, &vocab.decode(toks))
                    })?;
                    step.loss.backward()?;
                    Ok((bound.grads(), (step.loss.item(), step.reward_sample, step.reward_greedy)))
                })?;
                for (l, rs, rg) in stats {
                    loss_sum += l;
                    rs_sum += rs;
                    rg_sum += rg;
                }
                self.step(model, &mut adam, grads, lr)?;
            }
            let val = self.validate(model, vocab)?;
            if let Some(v) = &val {
                plateau.observe(v.cider_d);
            }
            let n = records.len() as f64;
            self.record(EpochLog {
                epoch,
                phase: "scst".into(),
                lr,
                ss_prob: 0.0,
                train_loss: loss_sum / n,
                reward_sample: Some(rs_sum / n),
                reward_greedy: Some(rg_sum / n),
                val,
            })?;
            if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 && epoch + 1 != cfg.scst_epochs {
                let mut snap = model.clone();
                snap.params.quantize_f32();
                self.checkpoint(&snap, vocab, &format!("scst_epoch{epoch:04}"))?;
            }
        }
        Ok(())
    }
}
