//! Command-level runs: synth, train, crossval (plus the ablation grid),
//! eval, compare, and ROC export. Each writes its artifacts under the
//! config's output directory and returns the structured result.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    holdout_split, load_csv, save_csv, stratified_kfold, synthesize, BoundDataset, Dataset,
    FoldPlan, SynthSpec,
};
use crate::eval::{
    aggregate_folds, delong_test, evaluate, paired_t_test, roc_auc, ComparisonResult, EvalReport,
    FoldSummary,
};
use crate::model::LossMode;

use super::checkpoint::Checkpoint;
use super::config::{ExperimentConfig, ValidationMode};
use super::train::{predict, train_model, EpochLog};
use super::ExperimentError;

/// Load the configured data source (CSV file or synthetic spec).
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset, ExperimentError> {
    match &cfg.data {
        super::config::DataSource::Csv { path } => Ok(load_csv(path)?),
        super::config::DataSource::Synth { spec } => Ok(synthesize(spec)?),
    }
}

fn write_string(path: &Path, content: &str) -> Result<(), ExperimentError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, content)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    write_string(path, &json)
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "NA".into(),
    }
}

fn train_log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,total,classification,metric,train_acc,val_loss\n");
    for row in log {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.epoch,
            row.total,
            row.classification,
            row.metric,
            row.train_acc,
            fmt_opt(row.val_loss)
        );
    }
    out
}

#[derive(Debug, Clone)]
struct ScoreRow {
    split: String,
    subject_id: String,
    label: u8,
    score: f64,
}

fn scores_csv(rows: &[ScoreRow]) -> String {
    let mut out = String::from("split,subject_id,label,score\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.split, r.subject_id, r.label, r.score);
    }
    out
}

fn read_scores_csv(path: &Path) -> Result<Vec<ScoreRow>, ExperimentError> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(ExperimentError::Config(format!(
                "{}: line {} has {} fields, expected 4",
                path.display(),
                i + 1,
                parts.len()
            )));
        }
        rows.push(ScoreRow {
            split: parts[0].to_string(),
            subject_id: parts[1].to_string(),
            label: parts[2]
                .parse()
                .map_err(|_| ExperimentError::Config(format!("bad label in {}", path.display())))?,
            score: parts[3]
                .parse()
                .map_err(|_| ExperimentError::Config(format!("bad score in {}", path.display())))?,
        });
    }
    Ok(rows)
}

/// Dataset generation summary printed by the synth command.
#[derive(Debug, Clone, Serialize)]
pub struct SynthSummary {
    pub rows: usize,
    pub n_positive: usize,
    pub n_negative: usize,
    pub positive_label: String,
    pub negative_label: String,
    /// Held-out AUC of a nearest-centroid classifier, a quick read on how
    /// separable the generated classes are.
    pub centroid_auc: f64,
}

/// Nearest-centroid separability on even/odd halves.
fn centroid_separability(features: &[Vec<f64>], labels: &[u8]) -> f64 {
    let r = features.first().map_or(0, |f| f.len());
    let mut centroid = [vec![0.0; r], vec![0.0; r]];
    let mut count = [0usize; 2];
    for (i, (x, &y)) in features.iter().zip(labels).enumerate() {
        if i % 2 != 0 {
            continue;
        }
        for (acc, v) in centroid[y as usize].iter_mut().zip(x) {
            *acc += v;
        }
        count[y as usize] += 1;
    }
    for (c, n) in centroid.iter_mut().zip(count) {
        if n > 0 {
            for v in c.iter_mut() {
                *v /= n as f64;
            }
        }
    }
    let mut scores = Vec::new();
    let mut held_labels = Vec::new();
    for (i, (x, &y)) in features.iter().zip(labels).enumerate() {
        if i % 2 != 1 {
            continue;
        }
        let d = |c: &[f64]| x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        scores.push(d(&centroid[0]) - d(&centroid[1]));
        held_labels.push(y);
    }
    roc_auc(&scores, &held_labels).map(|(auc, _)| auc).unwrap_or(0.5)
}

/// Generate a synthetic feature CSV from a spec file.
pub fn run_synth(spec: &SynthSpec, out_csv: &Path) -> Result<SynthSummary, ExperimentError> {
    let dataset = synthesize(spec)?;
    if let Some(parent) = out_csv.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    save_csv(&dataset, out_csv)?;
    let pos = crate::data::DiagnosticLabel::parse(&spec.labels.0).expect("validated");
    let neg = crate::data::DiagnosticLabel::parse(&spec.labels.1).expect("validated");
    let bound = crate::data::TaskBinding::new(pos, neg)?.bind(&dataset)?;
    Ok(SynthSummary {
        rows: dataset.len(),
        n_positive: dataset.count_label(pos),
        n_negative: dataset.count_label(neg),
        positive_label: spec.labels.0.clone(),
        negative_label: spec.labels.1.clone(),
        centroid_auc: centroid_separability(&bound.features, &bound.labels),
    })
}

/// Result of a single `train` run.
#[derive(Debug, Clone, Serialize)]
pub struct TrainOutput {
    pub config_digest: String,
    pub method: String,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub checkpoint_path: PathBuf,
    /// Present in holdout mode only.
    pub test_report: Option<EvalReport>,
    pub mining_fallbacks: usize,
}

fn bind_data(cfg: &ExperimentConfig) -> Result<BoundDataset, ExperimentError> {
    let dataset = load_dataset(cfg)?;
    let bound = cfg.task.bind(&dataset)?;
    if bound.is_empty() {
        return Err(ExperimentError::Config(format!(
            "no samples for task {}",
            cfg.task.name()
        )));
    }
    Ok(bound)
}

/// Train one model. Holdout mode trains on the train split, picks the best
/// epoch by validation loss, and evaluates the test split; kfold mode trains
/// on all bound samples with the final epoch kept.
pub fn run_train(cfg: &ExperimentConfig) -> Result<TrainOutput, ExperimentError> {
    let bound = bind_data(cfg)?;
    let out_dir = &cfg.out_dir;
    fs::create_dir_all(out_dir)?;
    write_json(&out_dir.join("config.json"), cfg)?;

    let (outcome, test) = match &cfg.validation {
        ValidationMode::Holdout { fractions } => {
            let plan = holdout_split(&bound.labels, *fractions, cfg.train.seed)?;
            write_string(&out_dir.join("fold_plan.json"), &plan.to_json())?;
            let outcome = train_model(
                cfg,
                &bound,
                &plan.folds[0],
                Some(&plan.folds[1]),
                cfg.train.seed,
            )?;
            let test_idx = plan.folds[2].clone();
            (outcome, Some(test_idx))
        }
        ValidationMode::Kfold { .. } => {
            let all: Vec<usize> = (0..bound.len()).collect();
            let outcome = train_model(cfg, &bound, &all, None, cfg.train.seed)?;
            (outcome, None)
        }
    };

    write_string(&out_dir.join("train_log.csv"), &train_log_csv(&outcome.log))?;
    let checkpoint_path = out_dir.join("checkpoint.json");
    Checkpoint::from_model(
        cfg,
        &outcome.params,
        cfg.train.seed,
        Some(outcome.feature_stats.clone()),
    )
    .save(&checkpoint_path)?;

    let test_report = match test {
        None => None,
        Some(test_idx) => {
            let test = bound.subset(&test_idx);
            let x = outcome.feature_stats.transform(&test.features);
            let scores = predict(&outcome.params, &cfg.model, &x)?;
            let report = evaluate(&scores, &test.labels, cfg.eval_threshold)?;
            let rows: Vec<ScoreRow> = test
                .subject_ids
                .iter()
                .zip(&test.labels)
                .zip(&scores)
                .map(|((id, &label), &score)| ScoreRow {
                    split: "test".into(),
                    subject_id: id.clone(),
                    label,
                    score,
                })
                .collect();
            write_string(&out_dir.join("scores.csv"), &scores_csv(&rows))?;
            write_json(&out_dir.join("report.json"), &report)?;
            Some(report)
        }
    };

    Ok(TrainOutput {
        config_digest: cfg.digest(),
        method: cfg.method_name(),
        epochs_run: outcome.log.len(),
        best_epoch: outcome.best_epoch,
        checkpoint_path,
        test_report,
        mining_fallbacks: outcome.mining_fallbacks,
    })
}

/// Cross-validation summary, the JSON artifact reruns must reproduce byte
/// for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossvalOutput {
    pub config_digest: String,
    pub task: String,
    pub method: String,
    pub fold_plan: FoldPlan,
    pub folds: Vec<EvalReport>,
    /// Mean and std of each metric across folds.
    pub summary: FoldSummary,
    /// Metrics over the pooled predictions of all folds.
    pub pooled: EvalReport,
    pub mining_fallbacks: usize,
}

/// Run stratified k-fold cross-validation. Fold `i` trains with seed
/// `seed + i` on the other folds and is evaluated on fold `i`.
pub fn run_crossval(cfg: &ExperimentConfig) -> Result<CrossvalOutput, ExperimentError> {
    let k = match cfg.validation {
        ValidationMode::Kfold { k } => k,
        ValidationMode::Holdout { .. } => {
            return Err(ExperimentError::Config(
                "crossval requires a kfold validation strategy".into(),
            ))
        }
    };
    let bound = bind_data(cfg)?;
    let out_dir = &cfg.out_dir;
    fs::create_dir_all(out_dir)?;
    write_json(&out_dir.join("config.json"), cfg)?;

    let plan = stratified_kfold(&bound.labels, k, cfg.train.seed)?;
    write_string(&out_dir.join("fold_plan.json"), &plan.to_json())?;

    let mut fold_reports = Vec::with_capacity(k);
    let mut score_rows = Vec::new();
    let mut pooled_scores = Vec::new();
    let mut pooled_labels = Vec::new();
    let mut mining_fallbacks = 0;
    for fold in 0..k {
        let (train_idx, test_idx) = plan.kfold_split(fold);
        let seed = cfg.train.seed + fold as u64;
        let outcome = train_model(cfg, &bound, &train_idx, None, seed)?;
        mining_fallbacks += outcome.mining_fallbacks;
        write_string(
            &out_dir.join(format!("train_log_fold{fold}.csv")),
            &train_log_csv(&outcome.log),
        )?;

        let test = bound.subset(&test_idx);
        let x = outcome.feature_stats.transform(&test.features);
        let scores = predict(&outcome.params, &cfg.model, &x)?;
        let report = evaluate(&scores, &test.labels, cfg.eval_threshold)?;
        for ((id, &label), &score) in test.subject_ids.iter().zip(&test.labels).zip(&scores) {
            score_rows.push(ScoreRow {
                split: format!("fold{fold}"),
                subject_id: id.clone(),
                label,
                score,
            });
        }
        pooled_scores.extend_from_slice(&scores);
        pooled_labels.extend_from_slice(&test.labels);
        fold_reports.push(report);
    }

    write_string(&out_dir.join("scores.csv"), &scores_csv(&score_rows))?;
    let output = CrossvalOutput {
        config_digest: cfg.digest(),
        task: cfg.task.name(),
        method: cfg.method_name(),
        fold_plan: plan,
        summary: aggregate_folds(&fold_reports),
        folds: fold_reports,
        pooled: evaluate(&pooled_scores, &pooled_labels, cfg.eval_threshold)?,
        mining_fallbacks,
    };
    write_json(&out_dir.join("summary.json"), &output)?;
    Ok(output)
}

/// One row of the ablation table, in the reporting schema of the study:
/// fold-mean metrics plus the paired-t p-value against the Baseline row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub method: String,
    pub acc: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub sen: Option<f64>,
    pub spe: Option<f64>,
    pub auc: Option<f64>,
    pub f1: Option<f64>,
    pub p_vs_baseline: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationTable {
    pub config_digest: String,
    pub task: String,
    pub rows: Vec<AblationRow>,
}

/// The six ablation variants in table order.
pub const ABLATION_GRID: [(&str, bool, LossMode); 6] = [
    ("baseline", false, LossMode::None),
    ("baseline_bp", true, LossMode::None),
    ("tri_loss", false, LossMode::Triplet),
    ("tri_loss_bp", true, LossMode::Triplet),
    ("con_loss", false, LossMode::Contrastive),
    ("con_loss_bp", true, LossMode::Contrastive),
];

fn ablation_csv(table: &AblationTable) -> String {
    let mut out = String::from("method,acc,ppv,npv,sen,spe,auc,f1,p\n");
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.method,
            fmt_opt(r.acc),
            fmt_opt(r.ppv),
            fmt_opt(r.npv),
            fmt_opt(r.sen),
            fmt_opt(r.spe),
            fmt_opt(r.auc),
            fmt_opt(r.f1),
            fmt_opt(r.p_vs_baseline)
        );
    }
    out
}

/// Run the full six-variant ablation grid (Baseline, +BP, Tri, Tri+BP, Con,
/// Con+BP) as six cross-validation runs over identical folds, and assemble
/// the comparison table with paired-t p-values against the Baseline.
pub fn run_ablation(cfg: &ExperimentConfig) -> Result<AblationTable, ExperimentError> {
    let out_dir = cfg.out_dir.clone();
    fs::create_dir_all(&out_dir)?;
    write_json(&out_dir.join("config.json"), cfg)?;

    let mut outputs = Vec::new();
    for (name, use_bilinear, loss_mode) in ABLATION_GRID {
        let mut variant = cfg.clone();
        variant.model.use_bilinear = use_bilinear;
        variant.model.loss_mode = loss_mode;
        variant.out_dir = out_dir.join(name);
        outputs.push(run_crossval(&variant)?);
    }

    let baseline_aucs: Vec<f64> = outputs[0].folds.iter().map(|r| r.auc).collect();
    let mut rows = Vec::new();
    for (i, out) in outputs.iter().enumerate() {
        let aucs: Vec<f64> = out.folds.iter().map(|r| r.auc).collect();
        let p = if i == 0 {
            None
        } else {
            Some(paired_t_test(&aucs, &baseline_aucs)?.p_value)
        };
        let s = &out.summary;
        let mean = |m: &Option<crate::eval::MetricSummary>| m.as_ref().map(|v| v.mean);
        rows.push(AblationRow {
            method: out.method.clone(),
            acc: mean(&s.acc),
            ppv: mean(&s.ppv),
            npv: mean(&s.npv),
            sen: mean(&s.sen),
            spe: mean(&s.spe),
            auc: mean(&s.auc),
            f1: mean(&s.f1),
            p_vs_baseline: p,
        });
    }
    let table = AblationTable {
        config_digest: cfg.digest(),
        task: cfg.task.name(),
        rows,
    };
    write_json(&out_dir.join("ablation.json"), &table)?;
    write_string(&out_dir.join("ablation.csv"), &ablation_csv(&table))?;
    Ok(table)
}

/// Score a checkpoint against a feature CSV: the checkpoint's task binding
/// and stored normalization are applied, and the report written next to the
/// scores when an output directory is given.
pub fn run_eval(
    checkpoint_path: &Path,
    data_csv: &Path,
    out_dir: Option<&Path>,
) -> Result<EvalReport, ExperimentError> {
    let ck = Checkpoint::load(checkpoint_path)?;
    let params = ck.restore()?;
    let stats = ck.feature_stats.as_ref().ok_or_else(|| {
        ExperimentError::Config("checkpoint carries no feature statistics".into())
    })?;
    let dataset = load_csv(data_csv)?;
    let bound = ck.config.task.bind(&dataset)?;
    if bound.is_empty() {
        return Err(ExperimentError::Config(format!(
            "no samples for task {}",
            ck.config.task.name()
        )));
    }
    let x = stats.transform(&bound.features);
    let scores = predict(&params, &ck.config.model, &x)?;
    let report = evaluate(&scores, &bound.labels, ck.config.eval_threshold)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let rows: Vec<ScoreRow> = bound
            .subject_ids
            .iter()
            .zip(&bound.labels)
            .zip(&scores)
            .map(|((id, &label), &score)| ScoreRow {
                split: "test".into(),
                subject_id: id.clone(),
                label,
                score,
            })
            .collect();
        write_string(&dir.join("scores.csv"), &scores_csv(&rows))?;
        write_json(&dir.join("report.json"), &report)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareMode {
    PairedT,
    Delong,
}

/// Compare two finished runs.
///
/// `PairedT` needs two crossval runs over identical folds and compares their
/// per-fold AUCs; `Delong` needs two runs with scores over the identical
/// test set. Anything else is an incompatible comparison.
pub fn run_compare(
    run_a: &Path,
    run_b: &Path,
    mode: CompareMode,
) -> Result<ComparisonResult, ExperimentError> {
    match mode {
        CompareMode::PairedT => {
            let load = |dir: &Path| -> Result<CrossvalOutput, ExperimentError> {
                let path = dir.join("summary.json");
                if !path.exists() {
                    return Err(ExperimentError::Incompatible(format!(
                        "{} is not a crossval run (no summary.json); the paired t-test needs fold-wise AUCs",
                        dir.display()
                    )));
                }
                let text = fs::read_to_string(path)?;
                Ok(serde_json::from_str(&text)?)
            };
            let a = load(run_a)?;
            let b = load(run_b)?;
            if a.fold_plan != b.fold_plan {
                return Err(ExperimentError::Incompatible(
                    "runs use different fold plans; paired t-test needs identical folds".into(),
                ));
            }
            let aucs_a: Vec<f64> = a.folds.iter().map(|r| r.auc).collect();
            let aucs_b: Vec<f64> = b.folds.iter().map(|r| r.auc).collect();
            Ok(paired_t_test(&aucs_a, &aucs_b)?)
        }
        CompareMode::Delong => {
            let load = |dir: &Path| -> Result<Vec<ScoreRow>, ExperimentError> {
                let rows = read_scores_csv(&dir.join("scores.csv"))?;
                let test: Vec<ScoreRow> =
                    rows.into_iter().filter(|r| r.split == "test").collect();
                if test.is_empty() {
                    return Err(ExperimentError::Incompatible(format!(
                        "{} has no held-out test scores; the DeLong test needs a shared test set",
                        dir.display()
                    )));
                }
                Ok(test)
            };
            let a = load(run_a)?;
            let b = load(run_b)?;
            let same_subjects = a.len() == b.len()
                && a.iter()
                    .zip(&b)
                    .all(|(x, y)| x.subject_id == y.subject_id && x.label == y.label);
            if !same_subjects {
                return Err(ExperimentError::Incompatible(
                    "runs score different test sets; the DeLong test needs the same samples".into(),
                ));
            }
            let scores_a: Vec<f64> = a.iter().map(|r| r.score).collect();
            let scores_b: Vec<f64> = b.iter().map(|r| r.score).collect();
            let labels: Vec<u8> = a.iter().map(|r| r.label).collect();
            Ok(delong_test(&scores_a, &scores_b, &labels)?)
        }
    }
}

/// Export the ROC polyline of a run's exported scores as
/// `fpr,tpr,threshold` rows. Uses the held-out test scores when present,
/// otherwise the pooled cross-validation scores. Returns (points, auc).
pub fn run_roc(run_dir: &Path, out_csv: &Path) -> Result<(usize, f64), ExperimentError> {
    let rows = read_scores_csv(&run_dir.join("scores.csv"))?;
    let test: Vec<&ScoreRow> = rows.iter().filter(|r| r.split == "test").collect();
    let used: Vec<&ScoreRow> = if test.is_empty() {
        rows.iter().collect()
    } else {
        test
    };
    let scores: Vec<f64> = used.iter().map(|r| r.score).collect();
    let labels: Vec<u8> = used.iter().map(|r| r.label).collect();
    let (auc, points) = roc_auc(&scores, &labels)?;
    let mut out = String::from("fpr,tpr,threshold\n");
    for p in &points {
        let _ = writeln!(out, "{},{},{}", p.fpr, p.tpr, p.threshold);
    }
    write_string(out_csv, &out)?;
    Ok((points.len(), auc))
}
