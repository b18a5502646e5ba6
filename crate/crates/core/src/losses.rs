//! Classification and metric-learning objectives.
//!
//! Cross-entropy drives the classifier; the contrastive and triplet losses
//! shape the embedding space so same-class samples cluster and different
//! classes separate by at least the margin. The joint objective is
//! `total = lambda * metric + classification`.
//!
//! Conventions: the contrastive hinge compares the margin against the plain
//! Euclidean distance (the standard form — the same-class term pulls pairs
//! together, the hinge pushes different-class pairs apart); the triplet loss
//! uses squared Euclidean distances on both sides of its hinge. Both can be
//! switched through [`BmnetConfig`](crate::model::BmnetConfig).

use thiserror::Error;

use crate::model::{LossMode, Reduction};
use crate::tensor::{GradNode, TensorError};

/// Floor added under the squared distance before the square root so the
/// gradient stays finite for coincident embeddings.
const DIST_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("margin must be nonnegative, got {0}")]
    NegativeMargin(f64),
    #[error("loss_mode is {mode:?} but the batch carries {got}")]
    ModeMismatch { mode: LossMode, got: &'static str },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// A batch of embedding pairs with their same-class flags.
#[derive(Debug, Default)]
pub struct PairBatch {
    pub pairs: Vec<(GradNode, GradNode, bool)>,
}

/// A batch of (anchor, positive, negative) embedding triples.
#[derive(Debug, Default)]
pub struct TripletBatch {
    pub triples: Vec<(GradNode, GradNode, GradNode)>,
}

/// Metric-loss input assembled by the mining step.
#[derive(Debug)]
pub enum MetricBatch {
    None,
    Pairs(PairBatch),
    Triplets(TripletBatch),
}

/// Joint objective value. `total` participates in the graph; the two
/// component readings are plain numbers for logging.
#[derive(Debug)]
pub struct LossValue {
    pub total: GradNode,
    pub classification: f64,
    pub metric: f64,
}

/// Options threaded from the model config into the metric losses.
#[derive(Debug, Clone, Copy)]
pub struct LossOptions {
    pub reduction: Reduction,
    pub contrastive_literal_labels: bool,
    pub contrastive_squared_distance: bool,
}

impl Default for LossOptions {
    fn default() -> Self {
        Self {
            reduction: Reduction::Mean,
            contrastive_literal_labels: false,
            contrastive_squared_distance: false,
        }
    }
}

/// Mean binary cross-entropy over raw logits, computed in the numerically
/// stable form. The gradient w.r.t. logit `i` is `(sigmoid(z_i) - y_i) / N`.
pub fn cross_entropy(logits: &GradNode, labels: &[u8]) -> Result<GradNode, LossError> {
    if labels.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    Ok(GradNode::bce_with_logits(logits, labels)?)
}

/// Squared Euclidean distance between two embedding vectors, as a scalar node.
fn squared_distance(a: &GradNode, b: &GradNode) -> Result<GradNode, TensorError> {
    let d = a.sub(b)?;
    d.mul_elementwise(&d).map(|sq| sq.sum())
}

fn reduce(terms: Vec<GradNode>, reduction: Reduction) -> Result<GradNode, LossError> {
    let n = terms.len();
    let mut it = terms.into_iter();
    let mut acc = it.next().ok_or(LossError::EmptyBatch)?;
    for t in it {
        acc = acc.add(&t)?;
    }
    Ok(match reduction {
        Reduction::Sum => acc,
        Reduction::Mean => acc.scalar_mul(1.0 / n as f64),
    })
}

/// Contrastive loss over a pair batch:
/// same-class pairs contribute `D²`, different-class pairs `max(0, m − D)²`
/// with `D` the Euclidean embedding distance.
pub fn contrastive_loss(
    pairs: &PairBatch,
    margin: f64,
    opts: &LossOptions,
) -> Result<GradNode, LossError> {
    if margin < 0.0 {
        return Err(LossError::NegativeMargin(margin));
    }
    if pairs.pairs.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let mut terms = Vec::with_capacity(pairs.pairs.len());
    for (a, b, same) in &pairs.pairs {
        // the literal-label switch swaps which role each pair plays
        let pull_together = *same != opts.contrastive_literal_labels;
        let d2 = squared_distance(a, b)?;
        let term = if pull_together {
            d2
        } else {
            let dist = if opts.contrastive_squared_distance {
                d2
            } else {
                d2.add_scalar(DIST_FLOOR).sqrt()
            };
            let hinge = dist.scalar_mul(-1.0).add_scalar(margin).relu();
            hinge.mul_elementwise(&hinge)?
        };
        terms.push(term);
    }
    reduce(terms, opts.reduction)
}

/// Triplet loss: `max(0, m + D²(a,p) − D²(a,n))` per triple.
pub fn triplet_loss(
    triples: &TripletBatch,
    margin: f64,
    opts: &LossOptions,
) -> Result<GradNode, LossError> {
    if margin < 0.0 {
        return Err(LossError::NegativeMargin(margin));
    }
    if triples.triples.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    let mut terms = Vec::with_capacity(triples.triples.len());
    for (anchor, pos, neg) in &triples.triples {
        let d_ap = squared_distance(anchor, pos)?;
        let d_an = squared_distance(anchor, neg)?;
        terms.push(d_ap.sub(&d_an)?.add_scalar(margin).relu());
    }
    reduce(terms, opts.reduction)
}

/// Assemble `total = lambda * metric + classification` as one graph node.
/// With `loss_mode = none` (or `lambda = 0`) the total is exactly the
/// classification loss.
pub fn joint_loss(
    logits: &GradNode,
    labels: &[u8],
    metric: &MetricBatch,
    mode: LossMode,
    lambda: f64,
    margin: f64,
    opts: &LossOptions,
) -> Result<LossValue, LossError> {
    let ce = cross_entropy(logits, labels)?;
    let metric_node = match (mode, metric) {
        (LossMode::None, MetricBatch::None) => None,
        (LossMode::Contrastive, MetricBatch::Pairs(p)) => {
            Some(contrastive_loss(p, margin, opts)?)
        }
        (LossMode::Triplet, MetricBatch::Triplets(t)) => Some(triplet_loss(t, margin, opts)?),
        (m, batch) => {
            let got = match batch {
                MetricBatch::None => "no metric batch",
                MetricBatch::Pairs(_) => "pairs",
                MetricBatch::Triplets(_) => "triplets",
            };
            return Err(LossError::ModeMismatch { mode: m, got });
        }
    };
    let classification = ce.item();
    match metric_node {
        None => Ok(LossValue {
            total: ce,
            classification,
            metric: 0.0,
        }),
        Some(m) => {
            let metric = m.item();
            let total = m.scalar_mul(lambda).add(&ce)?;
            Ok(LossValue {
                total,
                classification,
                metric,
            })
        }
    }
}
