//! The training loop: stratified batches, per-batch mining, joint loss,
//! SGD updates, per-epoch logging, and best-epoch selection on a validation
//! split when one exists.
//!
//! All randomness flows from one seeded generator consumed in a fixed order
//! (init, then per-epoch batching and mining), so a seed pins the entire run.

use crate::data::{BoundDataset, FeatureStats};
use crate::losses::{joint_loss, LossOptions, MetricBatch, PairBatch, TripletBatch};
use crate::mining::{make_pairs, make_triplets, make_triplets_semi_hard, stratified_batches};
use crate::model::{forward, BmnetConfig, LossMode, ModelParams};
use crate::optim::{OptimError, Sgd, SgdConfig};
use crate::tensor::{GradNode, Mode, Rng, Tensor};

use super::config::ExperimentConfig;
use super::ExperimentError;

/// One row of the training log.
#[derive(Debug, Clone)]
pub struct EpochLog {
    pub epoch: usize,
    pub total: f64,
    pub classification: f64,
    pub metric: f64,
    pub train_acc: f64,
    pub val_loss: Option<f64>,
}

/// A finished training run on one split.
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
    /// Epoch whose parameters were kept (lowest validation loss); `None`
    /// without a validation split, where the final epoch is used.
    pub best_epoch: Option<usize>,
    pub feature_stats: FeatureStats,
    /// Batches where metric-loss mining was impossible (for instance a short
    /// tail batch with one class); they fall back to cross-entropy only.
    pub mining_fallbacks: usize,
}

/// Stack feature rows into a `[N×1×R]` input leaf.
fn input_tensor(features: &[Vec<f64>]) -> GradNode {
    let n = features.len();
    let r = features.first().map_or(0, |f| f.len());
    let mut data = Vec::with_capacity(n * r);
    for row in features {
        data.extend_from_slice(row);
    }
    GradNode::leaf(Tensor::new(vec![n, 1, r], data).expect("consistent feature rows"))
}

/// Eval-mode class-1 probabilities for raw (already normalized) features.
pub fn predict(
    params: &ModelParams,
    cfg: &BmnetConfig,
    features: &[Vec<f64>],
) -> Result<Vec<f64>, ExperimentError> {
    Ok(predict_full(params, cfg, features)?.0)
}

/// Eval-mode probabilities plus embedding rows.
pub fn predict_full(
    params: &ModelParams,
    cfg: &BmnetConfig,
    features: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<Vec<f64>>), ExperimentError> {
    let x = input_tensor(features);
    let out = forward(&x, params, cfg, Mode::Eval)?;
    let probs = out.logits.sigmoid().value().data().to_vec();
    let emb = out.embeddings.value();
    let e = emb.shape()[1];
    let rows = emb.data().chunks(e).map(|c| c.to_vec()).collect();
    Ok((probs, rows))
}

fn accuracy(probs: &[f64], labels: &[u8], threshold: f64) -> f64 {
    let correct = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p >= threshold) == (y == 1))
        .count();
    correct as f64 / labels.len() as f64
}

/// Train one model on `train_idx` of the bound dataset. Features are
/// z-scored with statistics fitted on the training rows only; the same
/// transform applies to the validation split and must be applied to any
/// later test data.
pub fn train_model(
    cfg: &ExperimentConfig,
    data: &BoundDataset,
    train_idx: &[usize],
    val_idx: Option<&[usize]>,
    seed: u64,
) -> Result<TrainOutcome, ExperimentError> {
    let model_cfg = &cfg.model;
    model_cfg.validate()?;
    if model_cfg.loss_mode != LossMode::None && cfg.train.batch_size < 4 {
        return Err(ExperimentError::Config(format!(
            "batch_size must be at least 4 with a metric loss, got {}",
            cfg.train.batch_size
        )));
    }
    if train_idx.is_empty() {
        return Err(ExperimentError::Config("empty training split".into()));
    }

    let train = data.subset(train_idx);
    let feature_stats = FeatureStats::fit(&train.features)?;
    let x_train = feature_stats.transform(&train.features);
    let y_train = train.labels.clone();
    let val = val_idx.map(|idx| {
        let v = data.subset(idx);
        (feature_stats.transform(&v.features), v.labels)
    });

    let mut rng = Rng::from_seed(seed);
    let params = ModelParams::init(model_cfg, &mut rng)?;
    let mut sgd = Sgd::new(
        SgdConfig {
            lr: cfg.train.lr,
            momentum: cfg.train.momentum,
            weight_decay: cfg.train.weight_decay,
        },
        &params,
    )
    .map_err(|e| ExperimentError::Config(e.to_string()))?;
    let loss_opts = LossOptions {
        reduction: model_cfg.metric_reduction,
        contrastive_literal_labels: model_cfg.contrastive_literal_labels,
        contrastive_squared_distance: model_cfg.contrastive_squared_distance,
    };

    let mut log = Vec::with_capacity(cfg.train.epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut mining_fallbacks = 0usize;

    for epoch in 0..cfg.train.epochs {
        let plan = stratified_batches(&y_train, cfg.train.batch_size, &mut rng)?;
        let mut sum_total = 0.0;
        let mut sum_ce = 0.0;
        let mut sum_metric = 0.0;
        let mut n_seen = 0usize;

        for batch in &plan.batches {
            let feats: Vec<Vec<f64>> = batch.iter().map(|&i| x_train[i].clone()).collect();
            let labels: Vec<u8> = batch.iter().map(|&i| y_train[i]).collect();
            let x = input_tensor(&feats);
            let out = forward(&x, &params, model_cfg, Mode::Train)?;

            let (mode, metric_batch) = match model_cfg.loss_mode {
                LossMode::None => (LossMode::None, MetricBatch::None),
                LossMode::Contrastive => match make_pairs(&labels, &mut rng) {
                    Ok(pairs) => {
                        let mut pb = PairBatch::default();
                        for (i, j, same) in pairs {
                            pb.pairs.push((
                                out.embeddings.row(i)?,
                                out.embeddings.row(j)?,
                                same,
                            ));
                        }
                        (LossMode::Contrastive, MetricBatch::Pairs(pb))
                    }
                    Err(_) => {
                        mining_fallbacks += 1;
                        (LossMode::None, MetricBatch::None)
                    }
                },
                LossMode::Triplet => {
                    let mined = if model_cfg.semi_hard_mining {
                        make_triplets_semi_hard(
                            &labels,
                            &out.embeddings.value(),
                            model_cfg.margin,
                            &mut rng,
                        )
                    } else {
                        make_triplets(&labels, &mut rng)
                    };
                    match mined {
                        Ok(triples) => {
                            let mut tb = TripletBatch::default();
                            for (a, p, n) in triples {
                                tb.triples.push((
                                    out.embeddings.row(a)?,
                                    out.embeddings.row(p)?,
                                    out.embeddings.row(n)?,
                                ));
                            }
                            (LossMode::Triplet, MetricBatch::Triplets(tb))
                        }
                        Err(_) => {
                            mining_fallbacks += 1;
                            (LossMode::None, MetricBatch::None)
                        }
                    }
                }
            };

            let loss = joint_loss(
                &out.logits,
                &labels,
                &metric_batch,
                mode,
                model_cfg.lambda,
                model_cfg.margin,
                &loss_opts,
            )?;
            let total = loss.total.item();
            if !total.is_finite() {
                return Err(ExperimentError::Divergence { epoch });
            }
            loss.total.backward()?;
            sgd.step(&params).map_err(|e| match e {
                OptimError::Divergence(_) => ExperimentError::Divergence { epoch },
                OptimError::Config(msg) => ExperimentError::Config(msg),
            })?;

            sum_total += total * batch.len() as f64;
            sum_ce += loss.classification * batch.len() as f64;
            sum_metric += loss.metric * batch.len() as f64;
            n_seen += batch.len();
        }

        let train_probs = predict(&params, model_cfg, &x_train)?;
        let train_acc = accuracy(&train_probs, &y_train, cfg.eval_threshold);
        let val_loss = match &val {
            None => None,
            Some((xv, yv)) => {
                let x = input_tensor(xv);
                let out = forward(&x, &params, model_cfg, Mode::Eval)?;
                // model selection uses the classification loss only
                Some(crate::losses::cross_entropy(&out.logits, yv)?.item())
            }
        };
        if let Some(v) = val_loss {
            let better = best.as_ref().map_or(true, |(b, _, _)| v < *b);
            if better {
                best = Some((v, epoch, params.deep_clone()));
            }
        }
        log.push(EpochLog {
            epoch,
            total: sum_total / n_seen as f64,
            classification: sum_ce / n_seen as f64,
            metric: sum_metric / n_seen as f64,
            train_acc,
            val_loss,
        });
    }

    let (params, best_epoch) = match best {
        Some((_, epoch, snapshot)) => (snapshot, Some(epoch)),
        None => (params, None),
    };
    Ok(TrainOutcome {
        params,
        log,
        best_epoch,
        feature_stats,
        mining_fallbacks,
    })
}
