//! Class-balanced mini-batch planning and within-batch pair/triplet
//! construction for the metric losses.
//!
//! Batches are stratified so every batch's class ratio stays within one
//! sample of the global ratio; pairs and triplets are drawn uniformly within
//! a batch and never cross batch boundaries. A semi-hard variant prefers
//! negatives that currently violate the triplet margin.

use thiserror::Error;

use crate::tensor::{Rng, Tensor};

#[derive(Debug, Error)]
pub enum MiningError {
    #[error("training set contains a single class; two classes are required")]
    SingleClass,
    #[error("batch has no {0}-class partner to draw")]
    NoPartner(&'static str),
    #[error("no sample in the batch can anchor a triplet")]
    NoAnchor,
    #[error("{0}")]
    Config(String),
}

/// Epoch plan: an ordered list of index batches that partition the training
/// set.
#[derive(Debug, Clone)]
pub struct BatchPlan {
    pub batches: Vec<Vec<usize>>,
}

impl BatchPlan {
    pub fn total_indices(&self) -> usize {
        self.batches.iter().map(|b| b.len()).sum()
    }
}

/// Largest-remainder allocation of `total` items across buckets with the
/// given quotas. Ties break by bucket order.
fn largest_remainder(quotas: &[f64], total: usize) -> Vec<usize> {
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        alloc[i] += 1;
    }
    alloc
}

/// Plan one epoch of stratified batches. Both classes are shuffled
/// independently, per-batch class counts are allocated by largest remainder
/// so each batch's ratio is within one sample of the global ratio, and a
/// final short batch is kept rather than dropped.
pub fn stratified_batches(
    labels: &[u8],
    batch_size: usize,
    rng: &mut Rng,
) -> Result<BatchPlan, MiningError> {
    if batch_size == 0 {
        return Err(MiningError::Config("batch_size must be positive".into()));
    }
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(MiningError::SingleClass);
    }
    rng.shuffle(&mut pos);
    rng.shuffle(&mut neg);

    let n = labels.len();
    let n_batches = n.div_ceil(batch_size);
    let sizes: Vec<usize> = (0..n_batches)
        .map(|i| batch_size.min(n - i * batch_size))
        .collect();
    let minority_total = pos.len().min(neg.len());
    let minority_is_pos = pos.len() <= neg.len();
    let quotas: Vec<f64> = sizes
        .iter()
        .map(|&s| s as f64 * minority_total as f64 / n as f64)
        .collect();
    let minority_counts = largest_remainder(&quotas, minority_total);

    let (mut minority, mut majority) = if minority_is_pos { (pos, neg) } else { (neg, pos) };
    let mut batches = Vec::with_capacity(n_batches);
    for (i, &size) in sizes.iter().enumerate() {
        let take_min = minority_counts[i].min(minority.len());
        let mut batch: Vec<usize> = minority.drain(..take_min).collect();
        let take_maj = (size - take_min).min(majority.len());
        batch.extend(majority.drain(..take_maj));
        rng.shuffle(&mut batch);
        batches.push(batch);
    }
    debug_assert!(minority.is_empty() && majority.is_empty());
    Ok(BatchPlan { batches })
}

/// Random same-class and cross-class matchings within one batch.
///
/// Each class is shuffled and paired off internally (positive pairs); the two
/// classes are then shuffled and zipped (negative pairs), so every sample
/// appears at most once per pass and no duplicate pair is emitted. Returns
/// `(i, j, same_class)` index triples local to the batch.
pub fn make_pairs(
    batch_labels: &[u8],
    rng: &mut Rng,
) -> Result<Vec<(usize, usize, bool)>, MiningError> {
    let mut pos: Vec<usize> = (0..batch_labels.len())
        .filter(|&i| batch_labels[i] == 1)
        .collect();
    let mut neg: Vec<usize> = (0..batch_labels.len())
        .filter(|&i| batch_labels[i] == 0)
        .collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(MiningError::NoPartner("other"));
    }
    let mut pairs = Vec::new();
    for class in [&mut pos, &mut neg] {
        rng.shuffle(class);
        for chunk in class.chunks_exact(2) {
            pairs.push((chunk[0], chunk[1], true));
        }
    }
    rng.shuffle(&mut pos);
    rng.shuffle(&mut neg);
    for (&a, &b) in pos.iter().zip(neg.iter()) {
        pairs.push((a, b, false));
    }
    for (a, b, same) in &pairs {
        debug_assert_eq!(*same, batch_labels[*a] == batch_labels[*b]);
    }
    Ok(pairs)
}

/// One triplet per eligible anchor: every sample whose class has another
/// member anchors exactly once, with a uniformly drawn same-class positive
/// and cross-class negative.
pub fn make_triplets(
    batch_labels: &[u8],
    rng: &mut Rng,
) -> Result<Vec<(usize, usize, usize)>, MiningError> {
    make_triplets_inner(batch_labels, None, 0.0, rng)
}

/// Semi-hard variant: among the cross-class candidates, prefer negatives
/// closer than `D²(a,p) + margin` (those still violating the margin); fall
/// back to a uniform draw when none exists. `embeddings` holds the current
/// `[n×E]` embedding values for the batch.
pub fn make_triplets_semi_hard(
    batch_labels: &[u8],
    embeddings: &Tensor,
    margin: f64,
    rng: &mut Rng,
) -> Result<Vec<(usize, usize, usize)>, MiningError> {
    make_triplets_inner(batch_labels, Some(embeddings), margin, rng)
}

fn make_triplets_inner(
    batch_labels: &[u8],
    embeddings: Option<&Tensor>,
    margin: f64,
    rng: &mut Rng,
) -> Result<Vec<(usize, usize, usize)>, MiningError> {
    let n = batch_labels.len();
    if let Some(e) = embeddings {
        assert_eq!(e.shape()[0], n, "embedding rows must match batch size");
    }
    let class_count = |c: u8| batch_labels.iter().filter(|&&l| l == c).count();
    let counts = [class_count(0), class_count(1)];

    let d2 = |e: &Tensor, i: usize, j: usize| -> f64 {
        let w = e.shape()[1];
        let (a, b) = (&e.data()[i * w..(i + 1) * w], &e.data()[j * w..(j + 1) * w]);
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };

    let mut triplets = Vec::new();
    for anchor in 0..n {
        let cls = batch_labels[anchor];
        if counts[cls as usize] < 2 || counts[1 - cls as usize] == 0 {
            continue;
        }
        let positives: Vec<usize> = (0..n)
            .filter(|&i| i != anchor && batch_labels[i] == cls)
            .collect();
        let negatives: Vec<usize> = (0..n).filter(|&i| batch_labels[i] != cls).collect();
        let pos = positives[rng.index(positives.len())];
        let neg = match embeddings {
            None => negatives[rng.index(negatives.len())],
            Some(e) => {
                let d_ap = d2(e, anchor, pos);
                let semi_hard: Vec<usize> = negatives
                    .iter()
                    .copied()
                    .filter(|&j| d2(e, anchor, j) < d_ap + margin)
                    .collect();
                if semi_hard.is_empty() {
                    negatives[rng.index(negatives.len())]
                } else {
                    semi_hard[rng.index(semi_hard.len())]
                }
            }
        };
        debug_assert_eq!(batch_labels[anchor], batch_labels[pos]);
        debug_assert_ne!(batch_labels[anchor], batch_labels[neg]);
        triplets.push((anchor, pos, neg));
    }
    if triplets.is_empty() {
        return Err(MiningError::NoAnchor);
    }
    Ok(triplets)
}
