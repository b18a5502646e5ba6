//! The BMNet architecture: two 1-D convolution blocks over the ROI axis, an
//! optional factorized bilinear pooling stage, and a three-layer fully
//! connected head that emits both a classification logit and the embedding
//! consumed by the metric losses.
//!
//! The input is treated as a single-channel 1-D signal of length `R` (one
//! value per region). With `use_bilinear = false` the middle stage is a plain
//! flatten and the network is the Baseline variant; toggling the flag changes
//! nothing else about the interface.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{BnStats, GradNode, Mode, Rng, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("input has {got} regions, model expects {expected}")]
    InputRegions { got: usize, expected: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Which auxiliary metric loss accompanies cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    None,
    Contrastive,
    Triplet,
}

/// How per-pair / per-triplet terms are reduced over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Mean,
    Sum,
}

fn default_bn_eps() -> f64 {
    1e-5
}
fn default_bn_momentum() -> f64 {
    0.1
}
fn default_reduction() -> Reduction {
    Reduction::Mean
}

/// Architecture and loss hyperparameters.
///
/// `lambda` weighs the metric loss in the joint objective (default 0.05) and
/// `margin` is the hinge margin of both metric losses (default 1.0). The
/// batch-norm constants and the metric-loss convention switches are exposed
/// with conventional defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BmnetConfig {
    pub input_regions: usize,
    pub conv_channels: (usize, usize),
    pub kernel_size: usize,
    pub use_bilinear: bool,
    pub bilinear_rank: usize,
    pub pool_window: usize,
    pub embed_dim: usize,
    pub loss_mode: LossMode,
    pub lambda: f64,
    pub margin: f64,
    #[serde(default = "default_bn_eps")]
    pub bn_eps: f64,
    #[serde(default = "default_bn_momentum")]
    pub bn_momentum: f64,
    /// Mean (default) keeps lambda's scale independent of batch size; Sum
    /// reduces pair/triplet terms by plain summation instead.
    #[serde(default = "default_reduction")]
    pub metric_reduction: Reduction,
    /// Swap which class of pair is pulled together, following the printed
    /// sign convention of the contrastive loss rather than the standard one.
    #[serde(default)]
    pub contrastive_literal_labels: bool,
    /// Use squared Euclidean distance inside the contrastive hinge instead of
    /// plain Euclidean distance.
    #[serde(default)]
    pub contrastive_squared_distance: bool,
    /// Prefer semi-hard negatives when assembling triplets.
    #[serde(default)]
    pub semi_hard_mining: bool,
}

impl Default for BmnetConfig {
    fn default() -> Self {
        Self {
            input_regions: 90,
            conv_channels: (16, 32),
            kernel_size: 3,
            use_bilinear: true,
            bilinear_rank: 64,
            pool_window: 2,
            embed_dim: 32,
            loss_mode: LossMode::None,
            lambda: 0.05,
            margin: 1.0,
            bn_eps: default_bn_eps(),
            bn_momentum: default_bn_momentum(),
            metric_reduction: default_reduction(),
            contrastive_literal_labels: false,
            contrastive_squared_distance: false,
            semi_hard_mining: false,
        }
    }
}

impl BmnetConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |msg: String| Err(ModelError::Config(msg));
        if self.input_regions == 0 {
            return err("input_regions must be positive".into());
        }
        if self.conv_channels.0 == 0 || self.conv_channels.1 == 0 {
            return err("conv_channels must be positive".into());
        }
        if self.kernel_size % 2 == 0 || self.kernel_size == 0 {
            return err(format!("kernel_size must be odd, got {}", self.kernel_size));
        }
        if self.bilinear_rank == 0 {
            return err("bilinear_rank must be at least 1".into());
        }
        if self.embed_dim == 0 {
            return err("embed_dim must be positive".into());
        }
        if self.lambda < 0.0 {
            return err(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        if self.margin < 0.0 {
            return err(format!("margin must be nonnegative, got {}", self.margin));
        }
        let pool_limit = if self.use_bilinear {
            self.bilinear_rank
        } else {
            self.conv_feature_len()
        };
        if self.pool_window == 0 || self.pool_window > pool_limit {
            return err(format!(
                "pool_window {} out of range 1..={}",
                self.pool_window, pool_limit
            ));
        }
        Ok(())
    }

    /// Flattened feature length after the two conv blocks.
    pub fn conv_feature_len(&self) -> usize {
        self.conv_channels.1 * self.input_regions
    }

    /// Width of the vector entering the fully connected head.
    pub fn head_input_dim(&self) -> usize {
        if self.use_bilinear {
            self.bilinear_rank / self.pool_window
        } else {
            self.conv_feature_len()
        }
    }

    /// Total trainable parameter count, a pure function of the config.
    pub fn param_count(&self) -> usize {
        let (c1, c2) = self.conv_channels;
        let k = self.kernel_size;
        let e = self.embed_dim;
        let conv1 = c1 * k + c1 + 2 * c1;
        let conv2 = c2 * c1 * k + c2 + 2 * c2;
        let f = self.conv_feature_len();
        let bilinear = if self.use_bilinear {
            2 * (f * self.bilinear_rank + self.bilinear_rank)
        } else {
            0
        };
        let h = self.head_input_dim();
        let fc1 = h * e + e;
        let fc2 = e * e + e;
        let fc_out = e + 1;
        conv1 + conv2 + bilinear + fc1 + fc2 + fc_out
    }
}

/// One convolution block: kernel, bias, batch-norm affine pair, and the
/// running statistics the norm layer maintains.
#[derive(Debug)]
pub struct ConvBlockParams {
    pub w: GradNode,
    pub b: GradNode,
    pub gamma: GradNode,
    pub beta: GradNode,
    pub stats: BnStats,
}

#[derive(Debug)]
pub struct LinearParams {
    pub w: GradNode,
    pub b: GradNode,
}

impl LinearParams {
    fn init(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Self {
        let s = (1.0 / fan_in as f64).sqrt();
        Self {
            w: GradNode::leaf(rng.uniform_tensor(&[fan_in, fan_out], -s, s)),
            b: GradNode::leaf(Tensor::zeros(&[fan_out])),
        }
    }

    fn apply(&self, x: &GradNode) -> Result<GradNode, TensorError> {
        x.matmul(&self.w)?.add_bias(&self.b)
    }
}

/// All trainable state of one model instance. Weight draws happen in a fixed
/// order so the same seed always produces bit-identical parameters.
#[derive(Debug)]
pub struct ModelParams {
    pub conv1: ConvBlockParams,
    pub conv2: ConvBlockParams,
    /// The two bilinear projections, present iff `use_bilinear`.
    pub bilinear: Option<(LinearParams, LinearParams)>,
    pub fc1: LinearParams,
    pub fc2: LinearParams,
    pub fc_out: LinearParams,
}

fn init_conv_block(rng: &mut Rng, c_in: usize, c_out: usize, k: usize) -> ConvBlockParams {
    let s = (1.0 / (c_in * k) as f64).sqrt();
    ConvBlockParams {
        w: GradNode::leaf(rng.uniform_tensor(&[c_out, c_in, k], -s, s)),
        b: GradNode::leaf(Tensor::zeros(&[c_out])),
        gamma: GradNode::leaf(Tensor::ones(&[c_out])),
        beta: GradNode::leaf(Tensor::zeros(&[c_out])),
        stats: BnStats::new(c_out),
    }
}

impl ModelParams {
    /// Fresh parameters: weights uniform in `(-s, s)` with `s = sqrt(1/fan_in)`,
    /// biases zero, batch-norm gamma one and beta zero.
    pub fn init(cfg: &BmnetConfig, rng: &mut Rng) -> Result<Self, ModelError> {
        cfg.validate()?;
        let (c1, c2) = cfg.conv_channels;
        let conv1 = init_conv_block(rng, 1, c1, cfg.kernel_size);
        let conv2 = init_conv_block(rng, c1, c2, cfg.kernel_size);
        let f = cfg.conv_feature_len();
        let bilinear = if cfg.use_bilinear {
            let f1 = LinearParams::init(rng, f, cfg.bilinear_rank);
            let f2 = LinearParams::init(rng, f, cfg.bilinear_rank);
            Some((f1, f2))
        } else {
            None
        };
        let fc1 = LinearParams::init(rng, cfg.head_input_dim(), cfg.embed_dim);
        let fc2 = LinearParams::init(rng, cfg.embed_dim, cfg.embed_dim);
        let fc_out = LinearParams::init(rng, cfg.embed_dim, 1);
        Ok(Self {
            conv1,
            conv2,
            bilinear,
            fc1,
            fc2,
            fc_out,
        })
    }

    /// Stable, named iteration order over all trainable leaves. The boolean
    /// marks parameters subject to weight decay (batch-norm affine pairs are
    /// exempt).
    pub fn trainable(&self) -> Vec<(String, GradNode, bool)> {
        let mut out = vec![
            ("conv1.w".into(), self.conv1.w.clone(), true),
            ("conv1.b".into(), self.conv1.b.clone(), true),
            ("conv1.gamma".into(), self.conv1.gamma.clone(), false),
            ("conv1.beta".into(), self.conv1.beta.clone(), false),
            ("conv2.w".into(), self.conv2.w.clone(), true),
            ("conv2.b".into(), self.conv2.b.clone(), true),
            ("conv2.gamma".into(), self.conv2.gamma.clone(), false),
            ("conv2.beta".into(), self.conv2.beta.clone(), false),
        ];
        if let Some((f1, f2)) = &self.bilinear {
            out.push(("bp.f1.w".into(), f1.w.clone(), true));
            out.push(("bp.f1.b".into(), f1.b.clone(), true));
            out.push(("bp.f2.w".into(), f2.w.clone(), true));
            out.push(("bp.f2.b".into(), f2.b.clone(), true));
        }
        out.push(("fc1.w".into(), self.fc1.w.clone(), true));
        out.push(("fc1.b".into(), self.fc1.b.clone(), true));
        out.push(("fc2.w".into(), self.fc2.w.clone(), true));
        out.push(("fc2.b".into(), self.fc2.b.clone(), true));
        out.push(("fc_out.w".into(), self.fc_out.w.clone(), true));
        out.push(("fc_out.b".into(), self.fc_out.b.clone(), true));
        out
    }

    pub fn param_count(&self) -> usize {
        self.trainable().iter().map(|(_, p, _)| p.value().numel()).sum()
    }

    pub fn zero_grads(&self) {
        for (_, p, _) in self.trainable() {
            p.zero_grad();
        }
    }

    /// Independent copy of all values and running stats, detached from any
    /// graph. Used for best-epoch snapshots.
    pub fn deep_clone(&self) -> Self {
        let clone_block = |b: &ConvBlockParams| ConvBlockParams {
            w: GradNode::leaf(b.w.value()),
            b: GradNode::leaf(b.b.value()),
            gamma: GradNode::leaf(b.gamma.value()),
            beta: GradNode::leaf(b.beta.value()),
            stats: b.stats.clone(),
        };
        let clone_linear = |l: &LinearParams| LinearParams {
            w: GradNode::leaf(l.w.value()),
            b: GradNode::leaf(l.b.value()),
        };
        Self {
            conv1: clone_block(&self.conv1),
            conv2: clone_block(&self.conv2),
            bilinear: self
                .bilinear
                .as_ref()
                .map(|(f1, f2)| (clone_linear(f1), clone_linear(f2))),
            fc1: clone_linear(&self.fc1),
            fc2: clone_linear(&self.fc2),
            fc_out: clone_linear(&self.fc_out),
        }
    }
}

/// Batched network output: one logit and one embedding row per sample.
/// The embedding is the pre-logit hidden representation (`relu(fc2)`), the
/// vector every metric loss operates on.
#[derive(Debug)]
pub struct ForwardOutput {
    /// Shape `[N]`.
    pub logits: GradNode,
    /// Shape `[N×E]`.
    pub embeddings: GradNode,
}

/// `relu(batchnorm(conv1d(x)))`, exactly in that order.
pub fn conv_block(
    x: &GradNode,
    params: &ConvBlockParams,
    mode: Mode,
    eps: f64,
    momentum: f64,
) -> Result<GradNode, ModelError> {
    let y = GradNode::conv1d(x, &params.w, &params.b)?;
    let y = GradNode::batchnorm(&y, &params.gamma, &params.beta, mode, &params.stats, eps, momentum)?;
    Ok(y.relu())
}

/// Factorized bilinear pooling: the Hadamard product of two learned
/// projections of the flattened conv features, followed by mean pooling to
/// shrink the rank-`d` interaction vector.
pub fn bilinear_pool(
    y: &GradNode,
    f1: &LinearParams,
    f2: &LinearParams,
    pool_window: usize,
) -> Result<GradNode, ModelError> {
    let a = f1.apply(y)?;
    let b = f2.apply(y)?;
    let prod = a.mul_elementwise(&b)?;
    Ok(prod.mean_pool1d(pool_window)?)
}

/// Full forward pass over a `[N×1×R]` batch.
pub fn forward(
    x: &GradNode,
    params: &ModelParams,
    cfg: &BmnetConfig,
    mode: Mode,
) -> Result<ForwardOutput, ModelError> {
    let shape = x.shape();
    if shape.len() != 3 || shape[1] != 1 {
        return Err(ModelError::Config(format!(
            "input must be [N×1×R], got {shape:?}"
        )));
    }
    if shape[2] != cfg.input_regions {
        return Err(ModelError::InputRegions {
            got: shape[2],
            expected: cfg.input_regions,
        });
    }
    let n = shape[0];
    let h = conv_block(x, &params.conv1, mode, cfg.bn_eps, cfg.bn_momentum)?;
    let h = conv_block(&h, &params.conv2, mode, cfg.bn_eps, cfg.bn_momentum)?;
    let flat = h.flatten()?;
    let mid = match (&params.bilinear, cfg.use_bilinear) {
        (Some((f1, f2)), true) => bilinear_pool(&flat, f1, f2, cfg.pool_window)?,
        (None, false) => flat,
        _ => {
            return Err(ModelError::Config(
                "params and config disagree on use_bilinear".into(),
            ))
        }
    };
    let h = params.fc1.apply(&mid)?.relu();
    let embeddings = params.fc2.apply(&h)?.relu();
    let logits = params.fc_out.apply(&embeddings)?.reshape(vec![n])?;
    Ok(ForwardOutput { logits, embeddings })
}
