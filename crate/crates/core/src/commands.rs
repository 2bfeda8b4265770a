//! Command implementations behind the CLI: train, predict, eval and
//! gradcheck. The CLI binary is a thin argument parser over these.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::config::{SelectMetric, TrainConfig};
use crate::dataset::{
    instance_key, load_tsv, make_targets, merge_train_dev, Corpus, EpochBatches,
};
use crate::embeddings::{pool_all_from_store, EmbeddingStore};
use crate::encoder::{pool_all, EncoderConfig};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, per_group_spearman, spearman, EvalReport, SpearmanScope};
use crate::model::{grad_check, DualHeadModel, GradCheckReport, SampleTarget};
use crate::nn::{LrSchedule, OptimizerState};
use crate::ordinal::{encode_ordinal, LossWeights, OrdinalLabel};

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: EvalReport,
    /// 1-based epoch whose weights were kept; 0 means the initialized model
    /// (epochs=0).
    pub best_epoch: usize,
    pub checkpoint_path: PathBuf,
    pub log_path: PathBuf,
}

fn resolve_inputs(
    corpus: &Corpus,
    encoder: &EncoderConfig,
    store: Option<&EmbeddingStore>,
) -> Result<Vec<Vec<f64>>> {
    match store {
        Some(s) => pool_all_from_store(corpus.instances(), s, encoder.pooling),
        None => pool_all(corpus.instances(), encoder),
    }
}

/// Decoded predictions for every row, in corpus order.
fn predict_rows(model: &DualHeadModel, inputs: &[Vec<f64>]) -> Result<Vec<(usize, f64)>> {
    inputs.iter().map(|x| model.predict(x)).collect()
}

/// Accuracy over rows with a gold class and Spearman over rows with a gold
/// score. Rows missing a label are skipped per metric and counted once.
fn evaluate_rows(
    corpus: &Corpus,
    predictions: &[(usize, f64)],
    scope: SpearmanScope,
) -> Result<EvalReport> {
    let mut pred_classes = Vec::new();
    let mut gold_classes = Vec::new();
    let mut pred_scores = Vec::new();
    let mut gold_scores = Vec::new();
    let mut score_rows: Vec<(&str, f64, f64)> = Vec::new();
    let mut skipped_rows = 0usize;

    for (inst, &(pred_class, pred_score)) in corpus.instances().iter().zip(predictions) {
        if let Some(c) = inst.class_label {
            pred_classes.push(pred_class);
            gold_classes.push(c.index());
        }
        if let Some(s) = inst.plausibility_score {
            pred_scores.push(pred_score);
            gold_scores.push(s);
            score_rows.push((inst.id.as_str(), pred_score, s));
        }
        if inst.class_label.is_none() || inst.plausibility_score.is_none() {
            skipped_rows += 1;
        }
    }

    let acc = accuracy(&pred_classes, &gold_classes)?;
    let (rho, skipped_groups) = match scope {
        SpearmanScope::Global => (spearman(&pred_scores, &gold_scores)?, 0),
        SpearmanScope::PerInstance => {
            let mut groups: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
            for (id, p, g) in &score_rows {
                let (instance_id, _) = instance_key(id);
                let entry = groups.entry(instance_id).or_default();
                entry.0.push(*p);
                entry.1.push(*g);
            }
            let grouped: Vec<(Vec<f64>, Vec<f64>)> = groups.into_values().collect();
            per_group_spearman(&grouped)?
        }
    };

    Ok(EvalReport {
        accuracy: acc,
        spearman: rho,
        n: corpus.len(),
        n_accuracy: pred_classes.len(),
        n_spearman: pred_scores.len(),
        skipped_rows,
        skipped_groups,
        binning: None,
        pooling: None,
        spearman_scope: scope,
    })
}

fn metric_value(report: &EvalReport, select: SelectMetric) -> f64 {
    match select {
        SelectMetric::Spearman => report.spearman,
        SelectMetric::Accuracy => report.accuracy,
    }
}

/// Trains with seeded determinism, evaluating on dev after each epoch
/// (unless `merge_dev` folds dev into training). Writes the selected
/// checkpoint to `out` and a run log to `<out>.log`; both are byte-stable
/// across runs with the same seed, config and inputs.
pub fn cmd_train(
    cfg: &TrainConfig,
    train_path: &Path,
    dev_path: &Path,
    out: &Path,
    emb_path: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let weights = cfg.loss_weights()?;
    let train_corpus = load_tsv(train_path)?;
    let dev_corpus = load_tsv(dev_path)?;

    let corpus = if cfg.merge_dev {
        merge_train_dev(&train_corpus, &dev_corpus)?
    } else {
        train_corpus
    };

    let store = emb_path.map(EmbeddingStore::load).transpose()?;
    let mut encoder = cfg.encoder_config();
    if let Some(s) = &store {
        // The checkpoint records the geometry actually trained on.
        encoder.featurizer.dim = s.dim();
    }

    let targets = make_targets(&corpus, cfg.binning)?;
    if targets.items.is_empty() && cfg.epochs > 0 {
        return Err(Error::data(format!(
            "no rows with both gold labels in {}",
            train_path.display()
        )));
    }

    let inputs = resolve_inputs(&corpus, &encoder, store.as_ref())?;
    let dev_inputs = if cfg.merge_dev {
        Vec::new()
    } else {
        resolve_inputs(&dev_corpus, &encoder, store.as_ref())?
    };

    let input_dim = encoder.input_dim();
    let hidden_dim = cfg.hidden_dim();
    let mut model = DualHeadModel::init(input_dim, hidden_dim, cfg.seed);
    let mut opt = OptimizerState::new(&model.tensor_sizes(), cfg.weight_decay);

    let n_items = targets.items.len();
    let mut log = String::new();
    let _ = writeln!(log, "format=coral-cloze-train-1");
    let _ = writeln!(log, "config: {}", cfg.summary());
    if cfg.merge_dev {
        let _ = writeln!(
            log,
            "data: merged_rows={} train_items={} skipped_unlabeled={}",
            corpus.len(),
            n_items,
            targets.skipped
        );
    } else {
        let _ = writeln!(
            log,
            "data: train_rows={} train_items={} skipped_unlabeled={} dev_rows={}",
            corpus.len(),
            n_items,
            targets.skipped,
            dev_corpus.len()
        );
    }

    let steps_per_epoch = if n_items == 0 {
        0
    } else {
        EpochBatches::new(n_items, cfg.batch_size, cfg.seed)?.batches_per_epoch()
    };
    let total_steps = cfg.epochs * steps_per_epoch;
    let _ = writeln!(log, "schedule: total_steps={total_steps}");

    let eval_epoch = |model: &DualHeadModel| -> Result<EvalReport> {
        let mut report = if cfg.merge_dev {
            evaluate_rows(&corpus, &predict_rows(model, &inputs)?, SpearmanScope::Global)
        } else {
            evaluate_rows(
                &dev_corpus,
                &predict_rows(model, &dev_inputs)?,
                SpearmanScope::Global,
            )
        }?;
        report.binning = Some(cfg.binning);
        report.pooling = Some(cfg.pooling.as_str().to_string());
        Ok(report)
    };

    let mut best: Option<(usize, f64, DualHeadModel, EvalReport)> = None;
    if cfg.epochs == 0 {
        let report = eval_epoch(&model)?;
        best = Some((0, metric_value(&report, cfg.select), model.clone(), report));
    }

    let schedule = if total_steps > 0 {
        Some(LrSchedule::new(cfg.base_lr, total_steps)?)
    } else {
        None
    };
    let batches = EpochBatches::new(n_items, cfg.batch_size, cfg.seed)?;
    let mut step = 0usize;

    for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        let mut lr_first = 0.0;
        let mut lr_last = 0.0;
        for (b, batch) in batches.epoch(epoch - 1).into_iter().enumerate() {
            let lr = schedule
                .as_ref()
                .expect("schedule exists when epochs > 0")
                .at(step)?;
            if b == 0 {
                lr_first = lr;
            }
            lr_last = lr;

            let xs: Vec<&[f64]> = batch
                .iter()
                .map(|&i| inputs[targets.items[i].0].as_slice())
                .collect();
            let ts: Vec<&SampleTarget> = batch.iter().map(|&i| &targets.items[i].1).collect();
            let (loss, grads) = model.backward(&xs, &ts, &weights)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss {loss} at epoch {epoch} step {step}"
                )));
            }
            {
                let mut params = model.param_tensors_mut();
                let grad_refs = grads.tensors();
                let mut param_refs: Vec<&mut [f64]> =
                    params.iter_mut().map(|t| t.as_mut_slice()).collect();
                opt.step(&mut param_refs, &grad_refs, lr)?;
            }
            loss_sum += loss * batch.len() as f64;
            step += 1;
        }
        let mean_loss = loss_sum / n_items as f64;

        if cfg.merge_dev {
            let _ = writeln!(
                log,
                "epoch={epoch} mean_loss={mean_loss} lr_first={lr_first} lr_last={lr_last}"
            );
        } else {
            let report = eval_epoch(&model)?;
            let _ = writeln!(
                log,
                "epoch={epoch} mean_loss={mean_loss} lr_first={lr_first} lr_last={lr_last} \
                 dev_accuracy={:.6} dev_spearman={:.6}",
                report.accuracy, report.spearman
            );
            let value = metric_value(&report, cfg.select);
            let improved = match &best {
                None => true,
                Some((_, best_value, _, _)) => value > *best_value,
            };
            if improved {
                best = Some((epoch, value, model.clone(), report));
            }
        }
    }

    // With dev merged into training there is no held-out selection; keep the
    // final epoch and report training-set metrics.
    let (best_epoch, _, best_model, report) = match best {
        Some(b) => b,
        None => {
            let report = eval_epoch(&model)?;
            (cfg.epochs, metric_value(&report, cfg.select), model, report)
        }
    };

    if cfg.merge_dev {
        let _ = writeln!(
            log,
            "kept_epoch={best_epoch} (dev merged into training; no dev selection)"
        );
        let _ = writeln!(
            log,
            "train_accuracy={:.6} train_spearman={:.6}",
            report.accuracy, report.spearman
        );
    } else {
        let _ = writeln!(
            log,
            "best_epoch={best_epoch} select={} value={:.6}",
            cfg.select.as_str(),
            metric_value(&report, cfg.select)
        );
        let _ = writeln!(
            log,
            "best_dev_accuracy={:.6} best_dev_spearman={:.6}",
            report.accuracy, report.spearman
        );
    }

    let checkpoint = Checkpoint {
        model: best_model,
        encoder,
        binning: cfg.binning,
        seed: cfg.seed,
    };
    checkpoint.save(out)?;
    // Log only the file name: runs into different directories must still
    // produce identical logs.
    let _ = writeln!(
        log,
        "checkpoint={}",
        out.file_name().unwrap_or_default().to_string_lossy()
    );

    let log_path = PathBuf::from(format!("{}.log", out.display()));
    std::fs::write(&log_path, &log).map_err(|e| Error::io(&log_path, e))?;

    Ok(TrainOutcome {
        report,
        best_epoch,
        checkpoint_path: out.to_path_buf(),
        log_path,
    })
}

/// Summary of a prediction run.
#[derive(Debug, Clone)]
pub struct PredictSummary {
    pub n: usize,
    pub out_path: PathBuf,
}

pub const PREDICTIONS_HEADER: &str = "id\tpredicted_class\tpredicted_score";

/// Loads a checkpoint, scores every row of `data_path` and writes a TSV of
/// `id`, decoded class and continuous score (6 decimal digits).
pub fn cmd_predict(
    ckpt_path: &Path,
    data_path: &Path,
    out_path: &Path,
    emb_path: Option<&Path>,
) -> Result<PredictSummary> {
    let ckpt = Checkpoint::load(ckpt_path)?;
    let corpus = load_tsv(data_path)?;
    let store = emb_path.map(EmbeddingStore::load).transpose()?;
    if let Some(s) = &store {
        if s.dim() != ckpt.encoder.featurizer.dim {
            return Err(Error::Config(format!(
                "embedding dim {} does not match checkpoint featurizer dim {}",
                s.dim(),
                ckpt.encoder.featurizer.dim
            )));
        }
    }
    let inputs = resolve_inputs(&corpus, &ckpt.encoder, store.as_ref())?;

    let mut out = String::from(PREDICTIONS_HEADER);
    out.push('\n');
    for (inst, x) in corpus.instances().iter().zip(&inputs) {
        let (class, score) = ckpt.model.predict(x)?;
        let _ = writeln!(out, "{}\t{}\t{:.6}", inst.id, class, score);
    }
    std::fs::write(out_path, out).map_err(|e| Error::io(out_path, e))?;
    Ok(PredictSummary {
        n: corpus.len(),
        out_path: out_path.to_path_buf(),
    })
}

/// One parsed row of a predictions file.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub class: usize,
    pub score: f64,
}

/// Parses the predictions TSV written by [`cmd_predict`].
pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = raw.split('\n');
    let header = lines
        .next()
        .filter(|l| !l.is_empty())
        .ok_or_else(|| Error::data_at(path, 1, "header", "missing header row"))?;
    if header != PREDICTIONS_HEADER {
        return Err(Error::data_at(
            path,
            1,
            "header",
            format!("expected `{PREDICTIONS_HEADER}`, got `{header}`"),
        ));
    }
    let mut out = Vec::new();
    for (offset, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let line_no = offset + 2;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::data_at(
                path,
                line_no,
                "row",
                format!("expected 3 columns, got {}", cols.len()),
            ));
        }
        let class: usize = cols[1].parse().map_err(|_| {
            Error::data_at(path, line_no, "predicted_class", format!("bad class `{}`", cols[1]))
        })?;
        if class > 2 {
            return Err(Error::data_at(
                path,
                line_no,
                "predicted_class",
                format!("class {class} out of range 0..=2"),
            ));
        }
        let score: f64 = cols[2].parse().map_err(|_| {
            Error::data_at(path, line_no, "predicted_score", format!("bad score `{}`", cols[2]))
        })?;
        if !score.is_finite() || !(1.0..=5.0).contains(&score) {
            return Err(Error::data_at(
                path,
                line_no,
                "predicted_score",
                format!("score {score} outside [1, 5]"),
            ));
        }
        out.push(Prediction {
            id: cols[0].to_string(),
            class,
            score,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions {
    pub per_instance: bool,
}

/// Joins a predictions file with a gold data file on `id` and computes both
/// metrics. Rows are processed in sorted-id order, so shuffled files yield
/// identical reports.
pub fn cmd_eval(pred_path: &Path, gold_path: &Path, opts: EvalOptions) -> Result<EvalReport> {
    let predictions = load_predictions(pred_path)?;
    let gold = load_tsv(gold_path)?;

    let mut pred_by_id: BTreeMap<&str, &Prediction> = BTreeMap::new();
    for p in &predictions {
        if pred_by_id.insert(p.id.as_str(), p).is_some() {
            return Err(Error::data(format!(
                "duplicate id `{}` in {}",
                p.id,
                pred_path.display()
            )));
        }
    }
    let gold_by_id: BTreeMap<&str, &crate::dataset::ClozeInstance> = gold
        .instances()
        .iter()
        .map(|i| (i.id.as_str(), i))
        .collect();

    let missing_in_gold: Vec<&str> = pred_by_id
        .keys()
        .filter(|id| !gold_by_id.contains_key(**id))
        .copied()
        .collect();
    let missing_in_pred: Vec<&str> = gold_by_id
        .keys()
        .filter(|id| !pred_by_id.contains_key(**id))
        .copied()
        .collect();
    if !missing_in_gold.is_empty() || !missing_in_pred.is_empty() {
        let sample = |ids: &[&str]| -> String {
            let shown: Vec<&str> = ids.iter().take(5).copied().collect();
            let suffix = if ids.len() > 5 { ", ..." } else { "" };
            format!("{}{}", shown.join(", "), suffix)
        };
        let mut msg = String::from("prediction/gold ids do not align");
        if !missing_in_gold.is_empty() {
            let _ = write!(
                msg,
                "; {} predicted ids missing from gold (e.g. {})",
                missing_in_gold.len(),
                sample(&missing_in_gold)
            );
        }
        if !missing_in_pred.is_empty() {
            let _ = write!(
                msg,
                "; {} gold ids missing from predictions (e.g. {})",
                missing_in_pred.len(),
                sample(&missing_in_pred)
            );
        }
        return Err(Error::data(msg));
    }

    let mut pred_classes = Vec::new();
    let mut gold_classes = Vec::new();
    let mut pred_scores = Vec::new();
    let mut gold_scores = Vec::new();
    let mut score_rows: Vec<(&str, f64, f64)> = Vec::new();
    let mut skipped_rows = 0usize;
    for (id, inst) in &gold_by_id {
        let pred = pred_by_id[id];
        if let Some(c) = inst.class_label {
            pred_classes.push(pred.class);
            gold_classes.push(c.index());
        }
        if let Some(s) = inst.plausibility_score {
            pred_scores.push(pred.score);
            gold_scores.push(s);
            score_rows.push((id, pred.score, s));
        }
        if inst.class_label.is_none() || inst.plausibility_score.is_none() {
            skipped_rows += 1;
        }
    }

    let acc = accuracy(&pred_classes, &gold_classes)?;
    let scope = if opts.per_instance {
        SpearmanScope::PerInstance
    } else {
        SpearmanScope::Global
    };
    let (rho, skipped_groups) = match scope {
        SpearmanScope::Global => (spearman(&pred_scores, &gold_scores)?, 0),
        SpearmanScope::PerInstance => {
            let mut groups: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
            for (id, p, g) in &score_rows {
                let (instance_id, _) = instance_key(id);
                let entry = groups.entry(instance_id).or_default();
                entry.0.push(*p);
                entry.1.push(*g);
            }
            let grouped: Vec<(Vec<f64>, Vec<f64>)> = groups.into_values().collect();
            per_group_spearman(&grouped)?
        }
    };

    Ok(EvalReport {
        accuracy: acc,
        spearman: rho,
        n: gold_by_id.len(),
        n_accuracy: pred_classes.len(),
        n_spearman: pred_scores.len(),
        skipped_rows,
        skipped_groups,
        binning: None,
        pooling: None,
        spearman_scope: scope,
    })
}

/// Settings for the gradient-check command.
#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub seed: u64,
    pub h: f64,
    pub tol: f64,
    pub lambda_c: f64,
    pub lambda_r: f64,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub batch: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            h: 1e-5,
            tol: 1e-4,
            lambda_c: 0.5,
            lambda_r: 0.5,
            input_dim: 10,
            hidden_dim: 4,
            batch: 3,
        }
    }
}

/// Runs the finite-difference gradient check on a seeded miniature model
/// with a random batch.
pub fn cmd_gradcheck(cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    let weights = LossWeights::new(cfg.lambda_c, cfg.lambda_r)?;
    if cfg.batch == 0 || cfg.input_dim == 0 || cfg.hidden_dim == 0 {
        return Err(Error::Usage(
            "gradcheck needs batch, input_dim and hidden_dim >= 1".into(),
        ));
    }
    let model = DualHeadModel::init(cfg.input_dim, cfg.hidden_dim, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(0xBA7C4);
    let xs: Vec<Vec<f64>> = (0..cfg.batch)
        .map(|_| (0..cfg.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let targets: Vec<SampleTarget> = (0..cfg.batch)
        .map(|_| {
            let class = rng.gen_range(0..3);
            let reg = rng.gen_range(0..5);
            Ok(SampleTarget {
                class_bits: encode_ordinal(OrdinalLabel::new(class, 3)?),
                reg_bits: encode_ordinal(OrdinalLabel::new(reg, 5)?),
            })
        })
        .collect::<Result<_>>()?;
    let xs_ref: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
    let t_ref: Vec<&SampleTarget> = targets.iter().collect();
    grad_check(&model, &xs_ref, &t_ref, &weights, cfg.h, cfg.tol)
}
