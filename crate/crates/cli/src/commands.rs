//! One function per subcommand.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use aoa_core::ablation::{render_table, run_matrix};
use aoa_core::config_file::{Matrix, RunConfig};
use aoa_core::data::checkpoint::{blob_path, load_checkpoint};
use aoa_core::data::{Dataset, CAPTIONS_FILE, FEATURES_FILE, SPLITS_FILE};
use aoa_core::eval::evaluate_ids;
use aoa_core::gradcheck::suite::run_suite;
use aoa_core::model::decode::greedy_traced;
use aoa_core::train::{run_training, Phase, LOG_FILE};
use aoa_core::{Error, Result};

use crate::manifest::{combined_hash, hash_file, InputHash, RunManifest};
use crate::{CliError, SplitName, EXIT_NUMERIC};

type CliResult = std::result::Result<(), CliError>;

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> CliResult {
    writeln!(out, "{}", serde_json::to_string(value).expect("report serialises"))?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn gen_data(seed: u64, images: usize, k: usize, dim: usize, dir: &Path, out: &mut dyn Write) -> CliResult {
    let data = Dataset::synthetic(seed, images, k, dim)?;
    data.save(dir)?;
    #[derive(Serialize)]
    struct Report {
        images: usize,
        train: usize,
        val: usize,
        test: usize,
    }
    emit(
        out,
        &Report {
            images: data.images.len(),
            train: data.split.train.len(),
            val: data.split.val.len(),
            test: data.split.test.len(),
        },
    )
}

pub struct TrainArgs<'a> {
    pub config: &'a Path,
    pub phase: Phase,
    pub out: Option<&'a Path>,
    pub data: Option<&'a Path>,
    pub init: Option<&'a Path>,
    pub experimental: bool,
    pub threads: Option<usize>,
    pub print_config: bool,
}

fn dataset_files(dir: &Path) -> Result<Vec<InputHash>> {
    [FEATURES_FILE, CAPTIONS_FILE, SPLITS_FILE]
        .iter()
        .map(|f| hash_file(format!("data/{f}"), &dir.join(f)))
        .collect()
}

/// The dataset named on the command line, or the synthetic one described by
/// the configuration.
fn load_data(cfg: &RunConfig, dir: Option<&Path>) -> Result<Dataset> {
    match dir {
        Some(d) => Dataset::load(d),
        None => Dataset::synthetic(
            cfg.data.data_seed,
            cfg.data.images,
            cfg.data.objects,
            cfg.model.feat_dim,
        ),
    }
}

pub fn train(args: &TrainArgs<'_>, out: &mut dyn Write) -> CliResult {
    let mut cfg = RunConfig::parse(&read_text(args.config)?)?;
    if args.experimental {
        cfg.model.experimental = true;
    }
    if let Some(t) = args.threads {
        cfg.train.threads = t;
    }
    if args.print_config {
        write!(out, "{}", cfg.render())?;
        return Ok(());
    }
    cfg.validate()?;
    let dir = args.out.ok_or_else(|| Error::Config("--out is required".into()))?;

    let data = load_data(&cfg, args.data)?;
    let init = args.init.map(load_checkpoint).transpose()?;

    let mut inputs = vec![hash_file("config", args.config)?];
    if let Some(d) = args.data {
        inputs.extend(dataset_files(d)?);
    }
    if let Some(ckpt) = args.init {
        inputs.push(hash_file("init/checkpoint.json", ckpt)?);
        inputs.push(hash_file("init/checkpoint.bin", &blob_path(ckpt))?);
    }

    let outcome = run_training(&cfg.train, &cfg.model, &data, args.phase, init, Some(dir))?;

    let mut outputs = vec![LOG_FILE.to_string()];
    for c in &outcome.checkpoints {
        let rel = c.strip_prefix(dir).unwrap_or(c);
        outputs.push(rel.display().to_string());
        outputs.push(blob_path(rel).display().to_string());
    }
    let manifest = RunManifest {
        command: "train".into(),
        phase: args.phase.to_string(),
        config: cfg.render(),
        seed: cfg.train.seed,
        data_source: if args.data.is_some() { "files" } else { "synthetic" }.into(),
        input_hash: combined_hash(&inputs),
        inputs,
        outputs: outputs.clone(),
    };
    manifest.write(dir)?;

    #[derive(Serialize)]
    struct Report<'a> {
        phase: String,
        epochs: usize,
        params: usize,
        vocab: usize,
        outputs: &'a [String],
        last: Option<&'a aoa_core::train::EpochLog>,
    }
    emit(
        out,
        &Report {
            phase: args.phase.to_string(),
            epochs: outcome.log.len(),
            params: outcome.model.params.num_scalars(),
            vocab: outcome.vocab.len(),
            outputs: &outputs,
            last: outcome.log.last(),
        },
    )
}

fn set_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        // fails only if a global pool already exists, in which case it is kept
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

pub fn eval(
    ckpt: &Path,
    data: &Path,
    beam: usize,
    split: SplitName,
    max_len: usize,
    threads: Option<usize>,
    out: &mut dyn Write,
) -> CliResult {
    set_threads(threads);
    let (model, vocab) = load_checkpoint(ckpt)?;
    let data = Dataset::load(data)?;
    let ids = match split {
        SplitName::Train => &data.split.train,
        SplitName::Val => &data.split.val,
        SplitName::Test => &data.split.test,
    };
    let scores = evaluate_ids(&model, &vocab, &data, ids, beam, max_len)?
        .ok_or_else(|| Error::Data(format!("the {split:?} split is empty").to_lowercase()))?;
    emit(out, &scores)
}

pub fn caption(
    ckpt: &Path,
    data: &Path,
    image_id: &str,
    max_len: usize,
    trace: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult {
    let (model, vocab) = load_checkpoint(ckpt)?;
    let data = Dataset::load(data)?;
    let rec = data
        .get(image_id)
        .ok_or_else(|| Error::Data(format!("no image {image_id:?} in the dataset")))?;
    let (tokens, steps) = greedy_traced(&model, &rec.features, max_len)?;
    let words = vocab.decode(&tokens);
    let caption = words.join(" ");

    if let Some(path) = trace {
        #[derive(Serialize)]
        struct Trace<'a> {
            image_id: &'a str,
            caption: &'a str,
            words: Vec<String>,
            heads: usize,
            steps: &'a [aoa_core::model::decode::StepTrace],
        }
        let step_words = steps.iter().map(|s| vocab.token(s.token).to_string()).collect();
        let t = Trace {
            image_id,
            caption: &caption,
            words: step_words,
            heads: model.config.dec_heads,
            steps: &steps,
        };
        let mut text = serde_json::to_string_pretty(&t).expect("trace serialises");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }

    #[derive(Serialize)]
    struct Report<'a> {
        image_id: &'a str,
        caption: &'a str,
    }
    emit(out, &Report { image_id, caption: &caption })
}

pub fn ablate(
    matrix: &Path,
    data: Option<&Path>,
    results: Option<&Path>,
    threads: Option<usize>,
    out: &mut dyn Write,
) -> CliResult {
    let m = Matrix::parse(&read_text(matrix)?)?;
    let mut shared = RunConfig::default();
    shared.apply(&m.shared)?;
    let mut rows = m.configs()?;
    if let Some(t) = threads {
        rows.iter_mut().for_each(|(_, c)| c.train.threads = t);
    }
    let data = load_data(&shared, data)?;
    let table = run_matrix(&rows, &data)?;
    if let Some(path) = results {
        let mut text = String::new();
        for r in &table {
            text.push_str(&serde_json::to_string(r).expect("result serialises"));
            text.push('\n');
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    write!(out, "{}", render_table(&table))?;
    Ok(())
}

pub fn gradcheck(seed: u64, out: &mut dyn Write) -> CliResult {
    let results = run_suite(seed)?;
    for r in &results {
        emit(out, r)?;
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    #[derive(Serialize)]
    struct Summary<'a> {
        checks: usize,
        failed: &'a [&'a str],
        max_rel_err: f64,
    }
    let max = results.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    emit(
        out,
        &Summary {
            checks: results.len(),
            failed: &failed,
            max_rel_err: max,
        },
    )?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError {
            code: EXIT_NUMERIC,
            message: format!("gradient check failed: {}", failed.join(", ")),
        })
    }
}
