//! Dataset handling: ROI feature tables on disk, task binding, per-feature
//! standardization, deterministic stratified splits, and a synthetic
//! stand-in generator.
//!
//! The on-disk format is a UTF-8 CSV with header
//! `subject_id,label,f000,...,f{R-1}`; labels are the four diagnostic groups.
//! Feature values are written with Rust's shortest round-trip float
//! formatting, so a save/load cycle reproduces them bit for bit.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Rng;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// The four diagnostic groups a raw dataset may carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiagnosticLabel {
    NC,
    EMCI,
    LMCI,
    AD,
}

impl DiagnosticLabel {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "NC" => Some(Self::NC),
            "EMCI" => Some(Self::EMCI),
            "LMCI" => Some(Self::LMCI),
            "AD" => Some(Self::AD),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::NC => "NC",
            Self::EMCI => "EMCI",
            Self::LMCI => "LMCI",
            Self::AD => "AD",
        }
    }
}

impl fmt::Display for DiagnosticLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One subject: id, diagnostic group, and the per-region feature vector.
#[derive(Debug, Clone)]
pub struct RoiSample {
    pub subject_id: String,
    pub label: DiagnosticLabel,
    pub features: Vec<f64>,
}

/// A loaded feature table with uniform feature dimension.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub feature_dim: usize,
    pub samples: Vec<RoiSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn count_label(&self, label: DiagnosticLabel) -> usize {
        self.samples.iter().filter(|s| s.label == label).count()
    }
}

/// Binary task definition: which diagnostic group maps to 1 and which to 0.
/// Samples from the other two groups are excluded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskBinding {
    pub positive: DiagnosticLabel,
    pub negative: DiagnosticLabel,
}

impl TaskBinding {
    pub fn new(positive: DiagnosticLabel, negative: DiagnosticLabel) -> Result<Self, DataError> {
        if positive == negative {
            return Err(DataError::Config(
                "positive and negative classes must differ".into(),
            ));
        }
        Ok(Self { positive, negative })
    }

    pub fn name(&self) -> String {
        format!("{}_vs_{}", self.positive, self.negative)
    }

    /// Keep only samples from the two bound groups, with binary labels.
    pub fn bind(&self, data: &Dataset) -> Result<BoundDataset, DataError> {
        if self.positive == self.negative {
            return Err(DataError::Config(
                "positive and negative classes must differ".into(),
            ));
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        let mut subject_ids = Vec::new();
        for s in &data.samples {
            let y = if s.label == self.positive {
                1u8
            } else if s.label == self.negative {
                0u8
            } else {
                continue;
            };
            features.push(s.features.clone());
            labels.push(y);
            subject_ids.push(s.subject_id.clone());
        }
        Ok(BoundDataset {
            feature_dim: data.feature_dim,
            features,
            labels,
            subject_ids,
        })
    }
}

/// Task-bound binary dataset ready for training.
#[derive(Debug, Clone)]
pub struct BoundDataset {
    pub feature_dim: usize,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub subject_ids: Vec<String>,
}

impl BoundDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> BoundDataset {
        BoundDataset {
            feature_dim: self.feature_dim,
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            subject_ids: indices.iter().map(|&i| self.subject_ids[i].clone()).collect(),
        }
    }
}

fn feature_header(r: usize) -> String {
    let mut h = String::from("subject_id,label");
    for i in 0..r {
        h.push_str(&format!(",f{i:03}"));
    }
    h
}

/// Parse a feature CSV. The feature dimension is inferred from the header;
/// ragged rows, non-finite values, and unknown labels are reported with their
/// line number.
pub fn load_csv(path: &Path) -> Result<Dataset, DataError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(DataError::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "subject_id" || cols[1] != "label" {
        return Err(DataError::Parse {
            line: 1,
            msg: format!("header must start with subject_id,label,f000,...; got `{header}`"),
        });
    }
    let r = cols.len() - 2;
    for (i, c) in cols[2..].iter().enumerate() {
        let expect = format!("f{i:03}");
        if *c != expect {
            return Err(DataError::Parse {
                line: 1,
                msg: format!("feature column {} named `{c}`, expected `{expect}`", i + 2),
            });
        }
    }

    let mut samples = Vec::new();
    for (idx, row) in lines {
        let line = idx + 1;
        if row.is_empty() {
            continue;
        }
        let fields: Vec<&str> = row.split(',').collect();
        if fields.len() != r + 2 {
            return Err(DataError::Parse {
                line,
                msg: format!("expected {} fields, found {}", r + 2, fields.len()),
            });
        }
        let label = DiagnosticLabel::parse(fields[1]).ok_or_else(|| DataError::Parse {
            line,
            msg: format!("unknown label `{}`", fields[1]),
        })?;
        let mut features = Vec::with_capacity(r);
        for (j, f) in fields[2..].iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| DataError::Parse {
                line,
                msg: format!("feature f{j:03} is not a number: `{f}`"),
            })?;
            if !v.is_finite() {
                return Err(DataError::Parse {
                    line,
                    msg: format!("feature f{j:03} is not finite: `{f}`"),
                });
            }
            features.push(v);
        }
        samples.push(RoiSample {
            subject_id: fields[0].to_string(),
            label,
            features,
        });
    }
    Ok(Dataset {
        feature_dim: r,
        samples,
    })
}

/// Write a dataset in the same CSV contract `load_csv` reads.
pub fn save_csv(data: &Dataset, path: &Path) -> Result<(), DataError> {
    let mut out = String::with_capacity(data.len() * data.feature_dim * 8);
    out.push_str(&feature_header(data.feature_dim));
    out.push('\n');
    for s in &data.samples {
        debug_assert_eq!(s.features.len(), data.feature_dim);
        out.push_str(&s.subject_id);
        out.push(',');
        out.push_str(s.label.as_str());
        for v in &s.features {
            out.push(',');
            out.push_str(&format!("{v}"));
        }
        out.push('\n');
    }
    let mut file = fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Per-feature standardization statistics, fitted on the training split only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const STD_FLOOR: f64 = 1e-8;

impl FeatureStats {
    /// Fit mean and standard deviation per feature. Constant features get the
    /// floor so the transform maps them to zero rather than dividing by zero.
    pub fn fit(features: &[Vec<f64>]) -> Result<Self, DataError> {
        let n = features.len();
        if n == 0 {
            return Err(DataError::Config("cannot fit statistics on an empty split".into()));
        }
        let r = features[0].len();
        let mut mean = vec![0.0; r];
        for row in features {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut std = vec![0.0; r];
        for row in features {
            for ((s, v), m) in std.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut std {
            *s = (*s / n as f64).sqrt().max(STD_FLOOR);
        }
        Ok(Self { mean, std })
    }

    pub fn transform(&self, features: &[Vec<f64>]) -> Vec<Vec<f64>> {
        features
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&self.mean)
                    .zip(&self.std)
                    .map(|((v, m), s)| (v - m) / s)
                    .collect()
            })
            .collect()
    }
}

/// Validation split strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FoldMode {
    Kfold { k: usize },
    Holdout { fractions: [f64; 3] },
}

/// Deterministic assignment of sample indices to folds (kfold) or to the
/// train/val/test triple (holdout). Serializes to JSON for exact replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    #[serde(flatten)]
    pub mode: FoldMode,
    pub seed: u64,
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fold plan serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, DataError> {
        serde_json::from_str(s).map_err(|e| DataError::Config(format!("bad fold plan: {e}")))
    }

    /// Train/test index pair for kfold fold `i` (test = fold i).
    pub fn kfold_split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let test = self.folds[fold].clone();
        let train = self
            .folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        (train, test)
    }
}

/// Stratified k-fold partition: within each class, shuffled indices are dealt
/// round-robin, so per-fold class counts differ by at most one sample.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Result<FoldPlan, DataError> {
    if k < 2 {
        return Err(DataError::Config(format!("k must be at least 2, got {k}")));
    }
    let mut rng = Rng::from_seed(seed);
    let mut folds = vec![Vec::new(); k];
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(DataError::Config(format!(
                "class {class} has {} samples, fewer than k={k}",
                idx.len()
            )));
        }
        rng.shuffle(&mut idx);
        for (j, i) in idx.into_iter().enumerate() {
            folds[j % k].push(i);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(FoldPlan {
        mode: FoldMode::Kfold { k },
        seed,
        folds,
    })
}

/// Stratified holdout split into train/val/test by largest-remainder rounding
/// per class. Fractions must sum to one.
pub fn holdout_split(labels: &[u8], fractions: [f64; 3], seed: u64) -> Result<FoldPlan, DataError> {
    if fractions.iter().any(|&f| f <= 0.0) {
        return Err(DataError::Config("all fractions must be positive".into()));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(DataError::Config(format!(
            "fractions must sum to 1, got {total}"
        )));
    }
    let mut rng = Rng::from_seed(seed);
    let mut sets = vec![Vec::new(); 3];
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let n = idx.len();
        rng.shuffle(&mut idx);
        let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
        let counts = largest_remainder(&quotas, n);
        if counts.iter().any(|&c| c == 0) {
            return Err(DataError::Config(format!(
                "class {class} with {n} samples leaves an empty split at fractions {fractions:?}"
            )));
        }
        let mut offset = 0;
        for (set, &c) in sets.iter_mut().zip(&counts) {
            set.extend_from_slice(&idx[offset..offset + c]);
            offset += c;
        }
    }
    for set in &mut sets {
        set.sort_unstable();
    }
    Ok(FoldPlan {
        mode: FoldMode::Holdout { fractions },
        seed,
        folds: sets,
    })
}

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

fn default_block_size() -> usize {
    10
}
fn default_synth_labels() -> (String, String) {
    ("EMCI".into(), "LMCI".into())
}

/// Specification of a synthetic two-class dataset.
///
/// Both classes share the covariance `(1-rho)·I + rho·J` within contiguous
/// region blocks of `block_size` (marginal variance 1, so `shift` is in
/// per-feature standard deviations). The positive class mean is shifted by
/// `shift` on the first `shift_regions` regions. A `hard_fraction` of each
/// class is drawn at the midpoint of the two class means, keeping its true
/// class label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub regions: usize,
    pub n_per_class: (usize, usize),
    pub shift: f64,
    pub shift_regions: usize,
    pub rho: f64,
    #[serde(default = "default_block_size")]
    pub block_size: usize,
    #[serde(default)]
    pub hard_fraction: f64,
    pub seed: u64,
    /// Diagnostic names written to the CSV: (positive, negative).
    #[serde(default = "default_synth_labels")]
    pub labels: (String, String),
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.regions == 0 {
            return Err(DataError::Config("regions must be positive".into()));
        }
        if self.shift_regions > self.regions {
            return Err(DataError::Config(format!(
                "shift_regions {} exceeds regions {}",
                self.shift_regions, self.regions
            )));
        }
        if !(0.0..=1.0).contains(&self.hard_fraction) {
            return Err(DataError::Config(format!(
                "hard_fraction must lie in [0,1], got {}",
                self.hard_fraction
            )));
        }
        if self.block_size == 0 {
            return Err(DataError::Config("block_size must be positive".into()));
        }
        for name in [&self.labels.0, &self.labels.1] {
            if DiagnosticLabel::parse(name).is_none() {
                return Err(DataError::Config(format!("unknown synth label `{name}`")));
            }
        }
        if self.labels.0 == self.labels.1 {
            return Err(DataError::Config("synth labels must differ".into()));
        }
        Ok(())
    }

    /// Block covariance matrix for a block of `g` regions.
    fn block_cov(&self, g: usize) -> Vec<f64> {
        let mut cov = vec![self.rho; g * g];
        for i in 0..g {
            cov[i * g + i] = 1.0;
        }
        cov
    }
}

/// Lower-triangular Cholesky factor of a symmetric PSD matrix, or an error
/// when the matrix is not positive semidefinite.
fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>, DataError> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s < -1e-10 {
                    return Err(DataError::Config(
                        "covariance is not positive semidefinite".into(),
                    ));
                }
                l[i * n + i] = s.max(0.0).sqrt();
            } else {
                let d = l[j * n + j];
                if d > 1e-12 {
                    l[i * n + j] = s / d;
                } else if s.abs() <= 1e-10 {
                    // zero pivot: PSD only if the whole column vanishes
                    l[i * n + j] = 0.0;
                } else {
                    return Err(DataError::Config(
                        "covariance is not positive semidefinite".into(),
                    ));
                }
            }
        }
    }
    Ok(l)
}

/// Generate a synthetic dataset from class-conditional Gaussians with shared
/// block covariance. Deterministic under the spec's seed.
pub fn synthesize(spec: &SynthSpec) -> Result<Dataset, DataError> {
    spec.validate()?;
    let r = spec.regions;
    let mut blocks = Vec::new();
    let mut start = 0;
    while start < r {
        let g = spec.block_size.min(r - start);
        blocks.push((start, g, cholesky(&spec.block_cov(g), g)?));
        start += g;
    }

    let mu_pos: Vec<f64> = (0..r)
        .map(|i| if i < spec.shift_regions { spec.shift } else { 0.0 })
        .collect();
    let mu_neg = vec![0.0; r];
    let mu_mid: Vec<f64> = mu_pos.iter().map(|v| v / 2.0).collect();

    let mut rng = Rng::from_seed(spec.seed);
    let mut samples = Vec::new();
    let mut serial = 0usize;
    let classes = [
        (spec.n_per_class.0, &mu_pos, spec.labels.0.as_str()),
        (spec.n_per_class.1, &mu_neg, spec.labels.1.as_str()),
    ];
    for (n, mu, label_name) in classes {
        let n_hard = (spec.hard_fraction * n as f64).round() as usize;
        let label = DiagnosticLabel::parse(label_name).expect("validated");
        for i in 0..n {
            let mean = if i < n_hard { &mu_mid } else { mu };
            let z: Vec<f64> = (0..r).map(|_| rng.normal()).collect();
            let mut x = vec![0.0; r];
            for (start, g, l) in &blocks {
                for row in 0..*g {
                    let mut acc = 0.0;
                    for col in 0..=row {
                        acc += l[row * g + col] * z[start + col];
                    }
                    x[start + row] = acc;
                }
            }
            for (xv, m) in x.iter_mut().zip(mean) {
                *xv += m;
            }
            samples.push(RoiSample {
                subject_id: format!("syn{serial:04}"),
                label,
                features: x,
            });
            serial += 1;
        }
    }
    Ok(Dataset {
        feature_dim: r,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write_file(dir: &Path, name: &str, content: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, content).unwrap();
        p
    }

    #[test]
    fn load_well_formed_csv() {
        let dir = tempdir().unwrap();
        let p = write_file(
            dir.path(),
            "d.csv",
            "subject_id,label,f000,f001,f002\ns1,EMCI,0.1,-2.5,3\ns2,LMCI,1,2,3.5\n",
        );
        let d = load_csv(&p).unwrap();
        assert_eq!(d.feature_dim, 3);
        assert_eq!(d.len(), 2);
        assert_eq!(d.samples[0].label, DiagnosticLabel::EMCI);
        assert_eq!(d.samples[1].features, vec![1.0, 2.0, 3.5]);
    }

    #[test]
    fn ragged_row_reports_line_number() {
        let dir = tempdir().unwrap();
        let p = write_file(
            dir.path(),
            "d.csv",
            "subject_id,label,f000,f001\ns1,EMCI,0.1,0.2\ns2,LMCI,0.3\n",
        );
        let err = load_csv(&p).unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn unknown_label_and_nonfinite_rejected() {
        let dir = tempdir().unwrap();
        let p = write_file(
            dir.path(),
            "d.csv",
            "subject_id,label,f000\ns1,MCI,0.1\n",
        );
        let err = load_csv(&p).unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 2, .. }), "{err}");

        let p = write_file(
            dir.path(),
            "e.csv",
            "subject_id,label,f000\ns1,AD,NaN\n",
        );
        assert!(load_csv(&p).is_err());
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let spec = SynthSpec {
            regions: 7,
            n_per_class: (5, 4),
            shift: 1.3,
            shift_regions: 3,
            rho: 0.4,
            block_size: 3,
            hard_fraction: 0.2,
            seed: 77,
            labels: ("NC".into(), "AD".into()),
        };
        let d = synthesize(&spec).unwrap();
        let dir = tempdir().unwrap();
        let p = dir.path().join("round.csv");
        save_csv(&d, &p).unwrap();
        let d2 = load_csv(&p).unwrap();
        assert_eq!(d.len(), d2.len());
        for (a, b) in d.samples.iter().zip(&d2.samples) {
            assert_eq!(a.subject_id, b.subject_id);
            assert_eq!(a.label, b.label);
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.features), bits(&b.features));
        }
    }

    #[test]
    fn binding_excludes_other_groups() {
        let mk = |label, id: &str| RoiSample {
            subject_id: id.into(),
            label,
            features: vec![0.0],
        };
        let d = Dataset {
            feature_dim: 1,
            samples: vec![
                mk(DiagnosticLabel::EMCI, "a"),
                mk(DiagnosticLabel::NC, "b"),
                mk(DiagnosticLabel::LMCI, "c"),
                mk(DiagnosticLabel::AD, "d"),
            ],
        };
        let bound = TaskBinding::new(DiagnosticLabel::EMCI, DiagnosticLabel::LMCI)
            .unwrap()
            .bind(&d)
            .unwrap();
        assert_eq!(bound.labels, vec![1, 0]);
        assert_eq!(bound.subject_ids, vec!["a", "c"]);
    }

    #[test]
    fn zscore_constant_feature_maps_to_zero() {
        let features = vec![vec![3.0, 1.0], vec![3.0, 2.0], vec![3.0, 3.0]];
        let stats = FeatureStats::fit(&features).unwrap();
        let t = stats.transform(&features);
        for row in &t {
            assert_eq!(row[0], 0.0);
        }
    }

    #[test]
    fn zscore_train_split_is_standardized() {
        let mut rng = Rng::from_seed(30);
        let features: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..5).map(|_| rng.uniform(-3.0, 9.0)).collect())
            .collect();
        let stats = FeatureStats::fit(&features).unwrap();
        let t = stats.transform(&features);
        for j in 0..5 {
            let col: Vec<f64> = t.iter().map(|r| r[j]).collect();
            let m = col.iter().sum::<f64>() / col.len() as f64;
            let sd = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / col.len() as f64).sqrt();
            assert!(m.abs() < 1e-10);
            assert!((sd - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn zscore_other_splits_use_train_stats() {
        let train = vec![vec![0.0], vec![2.0]]; // mean 1, std 1
        let val = vec![vec![11.0]];
        let stats = FeatureStats::fit(&train).unwrap();
        let t = stats.transform(&val);
        assert!((t[0][0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn zscore_stats_ignore_test_rows() {
        let train = vec![vec![1.0, 2.0], vec![3.0, 4.0]];
        let mut test = vec![vec![100.0, -50.0]];
        let before = FeatureStats::fit(&train).unwrap();
        test[0][0] = -999.0; // mutate test rows
        let after = FeatureStats::fit(&train).unwrap();
        assert_eq!(before.mean, after.mean);
        assert_eq!(before.std, after.std);
    }

    fn labels(a: usize, b: usize) -> Vec<u8> {
        let mut v = vec![1u8; a];
        v.extend(vec![0u8; b]);
        v
    }

    #[test]
    fn kfold_balanced_case() {
        let l = labels(10, 10);
        let plan = stratified_kfold(&l, 5, 0).unwrap();
        for fold in &plan.folds {
            assert_eq!(fold.len(), 4);
            let pos = fold.iter().filter(|&&i| l[i] == 1).count();
            assert_eq!(pos, 2);
        }
    }

    #[test]
    fn kfold_imbalanced_minority_counts() {
        // 147 = 5·29 + 2: minority per fold in {29, 30}
        let l = labels(290, 147);
        let plan = stratified_kfold(&l, 5, 1).unwrap();
        for fold in &plan.folds {
            let minority = fold.iter().filter(|&&i| l[i] == 0).count();
            assert!((29..=30).contains(&minority), "{minority}");
        }
    }

    #[test]
    fn kfold_deterministic_and_partitioning() {
        let l = labels(31, 17);
        let a = stratified_kfold(&l, 5, 9).unwrap();
        let b = stratified_kfold(&l, 5, 9).unwrap();
        assert_eq!(a, b);
        let mut seen: Vec<usize> = a.folds.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..48).collect::<Vec<_>>());
    }

    #[test]
    fn kfold_small_class_rejected() {
        let l = labels(3, 40);
        assert!(stratified_kfold(&l, 5, 0).is_err());
    }

    #[test]
    fn holdout_exact_fractions() {
        let l = labels(100, 100);
        let plan = holdout_split(&l, [0.8, 0.1, 0.1], 3).unwrap();
        let count = |set: &[usize], class: u8| set.iter().filter(|&&i| l[i] == class).count();
        assert_eq!(count(&plan.folds[0], 1), 80);
        assert_eq!(count(&plan.folds[1], 1), 10);
        assert_eq!(count(&plan.folds[2], 1), 10);
        assert_eq!(count(&plan.folds[0], 0), 80);
    }

    #[test]
    fn holdout_imbalanced_minority_test_count() {
        // 147 LMCI: test share 14.7 -> largest remainder puts 14 or 15 there
        let l = labels(290, 147);
        let plan = holdout_split(&l, [0.8, 0.1, 0.1], 4).unwrap();
        let minority_test = plan.folds[2].iter().filter(|&&i| l[i] == 0).count();
        assert!(
            (14..=15).contains(&minority_test),
            "test LMCI {minority_test}"
        );
        // disjoint and exhaustive
        let mut seen: Vec<usize> = plan.folds.iter().flatten().copied().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..437).collect::<Vec<_>>());
    }

    #[test]
    fn holdout_determinism_and_bad_fractions() {
        let l = labels(40, 30);
        assert_eq!(
            holdout_split(&l, [0.8, 0.1, 0.1], 5).unwrap(),
            holdout_split(&l, [0.8, 0.1, 0.1], 5).unwrap()
        );
        assert!(holdout_split(&l, [0.7, 0.2, 0.2], 5).is_err());
        // a split that would leave an empty set for the minority
        let tiny = labels(40, 2);
        assert!(holdout_split(&tiny, [0.8, 0.1, 0.1], 5).is_err());
    }

    #[test]
    fn fold_plan_json_round_trip() {
        let l = labels(12, 8);
        let plan = stratified_kfold(&l, 4, 11).unwrap();
        let json = plan.to_json();
        assert!(json.contains("\"mode\": \"kfold\""));
        let back = FoldPlan::from_json(&json).unwrap();
        assert_eq!(plan, back);
    }

    #[test]
    fn synthesize_is_deterministic() {
        let spec = SynthSpec {
            regions: 12,
            n_per_class: (8, 6),
            shift: 2.0,
            shift_regions: 4,
            rho: 0.5,
            block_size: 4,
            hard_fraction: 0.25,
            seed: 5,
            labels: ("EMCI".into(), "LMCI".into()),
        };
        let a = synthesize(&spec).unwrap();
        let b = synthesize(&spec).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            let bits = |v: &[f64]| v.iter().map(|w| w.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&x.features), bits(&y.features));
        }
        assert_eq!(a.count_label(DiagnosticLabel::EMCI), 8);
        assert_eq!(a.count_label(DiagnosticLabel::LMCI), 6);
    }

    #[test]
    fn synthesize_rejects_non_psd() {
        let spec = SynthSpec {
            regions: 10,
            n_per_class: (2, 2),
            shift: 0.0,
            shift_regions: 0,
            rho: -0.5, // invalid for block size 10: rho >= -1/9 required
            block_size: 10,
            hard_fraction: 0.0,
            seed: 0,
            labels: ("NC".into(), "AD".into()),
        };
        assert!(synthesize(&spec).is_err());
    }

    /// Nearest-centroid linear classifier, the brute-force oracle for
    /// separability checks. Centroids are fitted on even indices and scored
    /// on odd indices so the AUC measures generalization, not memorization.
    fn centroid_auc(data: &BoundDataset) -> f64 {
        let r = data.feature_dim;
        let mut c = [vec![0.0; r], vec![0.0; r]];
        let mut n = [0usize; 2];
        for (i, (x, &y)) in data.features.iter().zip(&data.labels).enumerate() {
            if i % 2 != 0 {
                continue;
            }
            for (acc, v) in c[y as usize].iter_mut().zip(x) {
                *acc += v;
            }
            n[y as usize] += 1;
        }
        for (cls, count) in c.iter_mut().zip(n) {
            for v in cls.iter_mut() {
                *v /= count as f64;
            }
        }
        let score = |x: &[f64]| -> f64 {
            let d = |c: &[f64]| x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            d(&c[0]) - d(&c[1])
        };
        let held_out: Vec<usize> = (0..data.len()).filter(|i| i % 2 == 1).collect();
        let scores: Vec<f64> = held_out.iter().map(|&i| score(&data.features[i])).collect();
        // Mann-Whitney over all held-out pos/neg pairs
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (si, &i) in held_out.iter().enumerate() {
            if data.labels[i] != 1 {
                continue;
            }
            for (sj, &j) in held_out.iter().enumerate() {
                if data.labels[j] != 0 {
                    continue;
                }
                pairs += 1.0;
                if scores[si] > scores[sj] {
                    wins += 1.0;
                } else if scores[si] == scores[sj] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn synthesize_null_case_is_chance_level() {
        let spec = SynthSpec {
            regions: 20,
            n_per_class: (300, 300),
            shift: 0.0,
            shift_regions: 0,
            rho: 0.3,
            block_size: 5,
            hard_fraction: 0.0,
            seed: 13,
            labels: ("EMCI".into(), "LMCI".into()),
        };
        let d = synthesize(&spec).unwrap();
        let bound = TaskBinding::new(DiagnosticLabel::EMCI, DiagnosticLabel::LMCI)
            .unwrap()
            .bind(&d)
            .unwrap();
        let auc = centroid_auc(&bound);
        assert!((auc - 0.5).abs() < 0.08, "null AUC {auc}");
    }

    #[test]
    fn synthesize_separable_case_is_linearly_separable() {
        let spec = SynthSpec {
            regions: 90,
            n_per_class: (200, 100),
            shift: 3.0,
            shift_regions: 10,
            rho: 0.0,
            block_size: 10,
            hard_fraction: 0.0,
            seed: 21,
            labels: ("EMCI".into(), "LMCI".into()),
        };
        let d = synthesize(&spec).unwrap();
        let bound = TaskBinding::new(DiagnosticLabel::EMCI, DiagnosticLabel::LMCI)
            .unwrap()
            .bind(&d)
            .unwrap();
        let auc = centroid_auc(&bound);
        assert!(auc > 0.99, "separable AUC {auc}");
    }

    #[test]
    fn synthesize_matches_spec_distribution() {
        // sample moments converge to the spec values at n = 10 000
        let spec = SynthSpec {
            regions: 12,
            n_per_class: (10_000, 1),
            shift: 1.5,
            shift_regions: 5,
            rho: 0.5,
            block_size: 4,
            hard_fraction: 0.0,
            seed: 8,
            labels: ("EMCI".into(), "LMCI".into()),
        };
        let d = synthesize(&spec).unwrap();
        let xs: Vec<&Vec<f64>> = d
            .samples
            .iter()
            .filter(|s| s.label == DiagnosticLabel::EMCI)
            .map(|s| &s.features)
            .collect();
        let n = xs.len() as f64;
        let r = spec.regions;
        let mut mean = vec![0.0; r];
        for x in &xs {
            for (m, v) in mean.iter_mut().zip(x.iter()) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        // mean within 3.5 standard errors (sigma = 1)
        for (i, m) in mean.iter().enumerate() {
            let mu = if i < 5 { 1.5 } else { 0.0 };
            assert!((m - mu).abs() < 3.5 / n.sqrt(), "mean[{i}] = {m}");
        }
        // covariance entries within 3.5 standard errors
        for i in 0..r {
            for j in 0..r {
                let mut c = 0.0;
                for x in &xs {
                    c += (x[i] - mean[i]) * (x[j] - mean[j]);
                }
                c /= n - 1.0;
                let same_block = i / 4 == j / 4;
                let sigma = if i == j {
                    1.0
                } else if same_block {
                    0.5
                } else {
                    0.0
                };
                let se = ((1.0 + sigma * sigma) / n).sqrt();
                assert!(
                    (c - sigma).abs() < 3.5 * se,
                    "cov[{i},{j}] = {c}, want {sigma}"
                );
            }
        }
    }
}
