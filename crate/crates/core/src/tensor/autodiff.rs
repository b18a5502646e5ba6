//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`GradNode`] is a shared handle to one node of a dynamically built
//! computation graph. Every operation records, at construction time, the
//! local rule that propagates the output gradient back into its parents.
//! [`GradNode::backward`] then walks the graph once in reverse topological
//! order, accumulating gradients additively so a value used on several paths
//! receives the sum of all path contributions.
//!
//! The graph is rebuilt on every forward pass and dropped afterwards; only
//! leaf nodes (parameters, inputs) outlive it. Graphs are single-threaded by
//! construction: handles are `Rc`-based and deliberately not `Send`.

use std::cell::RefCell;
use std::collections::HashSet;
use std::rc::Rc;

use super::{Mode, Tensor, TensorError};

type BackwardFn = Box<dyn Fn(&Tensor)>;

struct Node {
    value: Tensor,
    grad: Tensor,
    parents: Vec<GradNode>,
    backward: Option<BackwardFn>,
}

/// Shared handle to a node in the computation graph. Cloning the handle does
/// not copy the node; both handles refer to the same value and gradient.
#[derive(Clone)]
pub struct GradNode {
    inner: Rc<RefCell<Node>>,
}

impl std::fmt::Debug for GradNode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let n = self.inner.borrow();
        f.debug_struct("GradNode")
            .field("shape", &n.value.shape())
            .field("leaf", &n.backward.is_none())
            .finish()
    }
}

/// Running batch-normalization statistics, one entry per channel. Updated in
/// place by train-mode forward passes; read-only in eval mode.
#[derive(Debug, Clone)]
pub struct BnStats {
    pub mean: RefCell<Vec<f64>>,
    pub var: RefCell<Vec<f64>>,
}

impl BnStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: RefCell::new(vec![0.0; channels]),
            var: RefCell::new(vec![1.0; channels]),
        }
    }
}

impl GradNode {
    fn from_node(value: Tensor, parents: Vec<GradNode>, backward: Option<BackwardFn>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            inner: Rc::new(RefCell::new(Node {
                value,
                grad,
                parents,
                backward,
            })),
        }
    }

    /// A leaf node: an input or a trainable parameter.
    pub fn leaf(value: Tensor) -> Self {
        Self::from_node(value, vec![], None)
    }

    pub fn scalar(v: f64) -> Self {
        Self::leaf(Tensor::scalar(v))
    }

    pub fn value(&self) -> Tensor {
        self.inner.borrow().value.clone()
    }

    pub fn grad(&self) -> Tensor {
        self.inner.borrow().grad.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().value.shape().to_vec()
    }

    /// Scalar value of a scalar node.
    pub fn item(&self) -> f64 {
        self.inner.borrow().value.item()
    }

    pub fn is_leaf(&self) -> bool {
        self.inner.borrow().backward.is_none()
    }

    /// In-place update of a leaf's value; used by the optimizer and by
    /// finite-difference probes.
    pub fn update_value(&self, f: impl FnOnce(&mut Tensor)) {
        f(&mut self.inner.borrow_mut().value);
    }

    pub fn zero_grad(&self) {
        let mut n = self.inner.borrow_mut();
        n.grad = Tensor::zeros(n.value.shape());
    }

    fn accumulate(&self, delta: &[f64]) {
        let mut n = self.inner.borrow_mut();
        debug_assert_eq!(n.grad.numel(), delta.len());
        for (g, d) in n.grad.data_mut().iter_mut().zip(delta) {
            *g += d;
        }
    }

    fn ptr(&self) -> *const () {
        Rc::as_ptr(&self.inner) as *const ()
    }

    // ── elementwise and reduction primitives ───────────────────────────

    pub fn add(&self, other: &GradNode) -> Result<GradNode, TensorError> {
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(a.shape().to_vec(), data)?;
        let (pa, pb) = (self.clone(), other.clone());
        let backward = Box::new(move |g: &Tensor| {
            pa.accumulate(g.data());
            pb.accumulate(g.data());
        });
        Ok(GradNode::from_node(
            value,
            vec![self.clone(), other.clone()],
            Some(backward),
        ))
    }

    pub fn sub(&self, other: &GradNode) -> Result<GradNode, TensorError> {
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "sub",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
        let value = Tensor::new(a.shape().to_vec(), data)?;
        let (pa, pb) = (self.clone(), other.clone());
        let backward = Box::new(move |g: &Tensor| {
            pa.accumulate(g.data());
            let neg: Vec<f64> = g.data().iter().map(|v| -v).collect();
            pb.accumulate(&neg);
        });
        Ok(GradNode::from_node(
            value,
            vec![self.clone(), other.clone()],
            Some(backward),
        ))
    }

    pub fn mul_elementwise(&self, other: &GradNode) -> Result<GradNode, TensorError> {
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "mul_elementwise",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(a.shape().to_vec(), data)?;
        let (pa, pb) = (self.clone(), other.clone());
        let (av, bv) = (a, b);
        let backward = Box::new(move |g: &Tensor| {
            let da: Vec<f64> = g.data().iter().zip(bv.data()).map(|(g, y)| g * y).collect();
            let db: Vec<f64> = g.data().iter().zip(av.data()).map(|(g, x)| g * x).collect();
            pa.accumulate(&da);
            pb.accumulate(&db);
        });
        Ok(GradNode::from_node(
            value,
            vec![self.clone(), other.clone()],
            Some(backward),
        ))
    }

    pub fn scalar_mul(&self, c: f64) -> GradNode {
        let a = self.value();
        let data = a.data().iter().map(|x| c * x).collect();
        let value = Tensor::new(a.shape().to_vec(), data).expect("same shape");
        let pa = self.clone();
        let backward = Box::new(move |g: &Tensor| {
            let d: Vec<f64> = g.data().iter().map(|v| c * v).collect();
            pa.accumulate(&d);
        });
        GradNode::from_node(value, vec![self.clone()], Some(backward))
    }

    pub fn add_scalar(&self, c: f64) -> GradNode {
        let a = self.value();
        let data = a.data().iter().map(|x| x + c).collect();
        let value = Tensor::new(a.shape().to_vec(), data).expect("same shape");
        let pa = self.clone();
        let backward = Box::new(move |g: &Tensor| pa.accumulate(g.data()));
        GradNode::from_node(value, vec![self.clone()], Some(backward))
    }

    pub fn relu(&self) -> GradNode {
        let a = self.value();
        let data = a.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let value = Tensor::new(a.shape().to_vec(), data).expect("same shape");
        let pa = self.clone();
        let backward = Box::new(move |g: &Tensor| {
            let d: Vec<f64> = g
                .data()
                .iter()
                .zip(a.data())
                .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                .collect();
            pa.accumulate(&d);
        });
        GradNode::from_node(value, vec![self.clone()], Some(backward))
    }

    pub fn sigmoid(&self) -> GradNode {
        let a = self.value();
        let data: Vec<f64> = a.data().iter().map(|&x| stable_sigmoid(x)).collect();
        let value = Tensor::new(a.shape().to_vec(), data.clone()).expect("same shape");
        let pa = self.clone();
        let backward = Box::new(move |g: &Tensor| {
            let d: Vec<f64> = g
                .data()
                .iter()
                .zip(&data)
                .map(|(g, &s)| g * s * (1.0 - s))
                .collect();
            pa.accumulate(&d);
        });
        GradNode::from_node(value, vec![self.clone()], Some(backward))
    }

    /// Elementwise square root. Inputs must be strictly positive for the
    /// gradient to stay finite; distance helpers add a small floor first.
    pub fn sqrt(&self) -> GradNode {
        let a = self.value();
        let out: Vec<f64> = a.data().iter().map(|&x| x.sqrt()).collect();
        let value = Tensor::new(a.shape().to_vec(), out.clone()).expect("same shape");
        let pa = self.clone();
        let backward = Box::new(move |g: &Tensor| {
            let d: Vec<f64> = g
                .data()
                .iter()
                .zip(&out)
                .map(|(g, &s)| g / (2.0 * s))
                .collect();
            pa.accumulate(&d);
        });
        GradNode::from_node(value, vec![self.clone()], Some(backward))
    }

    /// Full reduction to a rank-0 scalar.
    pub fn sum(&self) -> GradNode {
        let a = self.value();
        let total: f64 = a.data().iter().sum();
        let pa = self.clone();
        let n = a.numel();
        let backward = Box::new(move |g: &Tensor| {
            let d = vec![g.item(); n];
            pa.accumulate(&d);
        });
        GradNode::from_node(Tensor::scalar(total), vec![self.clone()], Some(backward))
    }

    // ── shape ops ───────────────────────────────────────────────────────

    pub fn reshape(&self, shape: Vec<usize>) -> Result<GradNode, TensorError> {
        let value = self.value().reshaped(shape)?;
        let pa = self.clone();
        let backward = Box::new(move |g: &Tensor| pa.accumulate(g.data()));
        Ok(GradNode::from_node(value, vec![self.clone()], Some(backward)))
    }

    /// Collapse every axis after the first: `[N×C×L] -> [N×C·L]`.
    pub fn flatten(&self) -> Result<GradNode, TensorError> {
        let shape = self.shape();
        if shape.len() < 2 {
            return Err(TensorError::BadRank {
                op: "flatten",
                expected: 2,
                shape,
            });
        }
        let rest: usize = shape[1..].iter().product();
        self.reshape(vec![shape[0], rest])
    }

    /// Gather rows of a `[N×F]` matrix; gradient scatter-adds back, so a row
    /// selected twice accumulates both contributions.
    pub fn select_rows(&self, indices: &[usize]) -> Result<GradNode, TensorError> {
        let a = self.value();
        if a.rank() != 2 {
            return Err(TensorError::BadRank {
                op: "select_rows",
                expected: 2,
                shape: a.shape().to_vec(),
            });
        }
        let (n, f) = (a.shape()[0], a.shape()[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(TensorError::Config(format!(
                "select_rows: index {bad} out of range for {n} rows"
            )));
        }
        let mut data = Vec::with_capacity(indices.len() * f);
        for &i in indices {
            data.extend_from_slice(&a.data()[i * f..(i + 1) * f]);
        }
        let value = Tensor::new(vec![indices.len(), f], data)?;
        let pa = self.clone();
        let idx = indices.to_vec();
        let backward = Box::new(move |g: &Tensor| {
            let mut d = vec![0.0; n * f];
            for (r, &i) in idx.iter().enumerate() {
                for j in 0..f {
                    d[i * f + j] += g.data()[r * f + j];
                }
            }
            pa.accumulate(&d);
        });
        Ok(GradNode::from_node(value, vec![self.clone()], Some(backward)))
    }

    /// Single row of a `[N×F]` matrix as a rank-1 vector.
    pub fn row(&self, index: usize) -> Result<GradNode, TensorError> {
        let f = *self.shape().last().unwrap_or(&0);
        self.select_rows(&[index])?.reshape(vec![f])
    }

    // ── linear algebra ──────────────────────────────────────────────────

    /// Matrix product `[m×k]·[k×n] -> [m×n]`.
    pub fn matmul(&self, other: &GradNode) -> Result<GradNode, TensorError> {
        let (a, b) = (self.value(), other.value());
        if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let av = a.data()[i * k + p];
                if av == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[i * n + j] += av * b.data()[p * n + j];
                }
            }
        }
        let value = Tensor::new(vec![m, n], out)?;
        let (pa, pb) = (self.clone(), other.clone());
        let (av, bv) = (a, b);
        let backward = Box::new(move |g: &Tensor| {
            // a.grad += g · bᵀ
            let mut da = vec![0.0; m * k];
            for i in 0..m {
                for p in 0..k {
                    let mut s = 0.0;
                    for j in 0..n {
                        s += g.data()[i * n + j] * bv.data()[p * n + j];
                    }
                    da[i * k + p] = s;
                }
            }
            // b.grad += aᵀ · g
            let mut db = vec![0.0; k * n];
            for p in 0..k {
                for i in 0..m {
                    let avip = av.data()[i * k + p];
                    if avip == 0.0 {
                        continue;
                    }
                    for j in 0..n {
                        db[p * n + j] += avip * g.data()[i * n + j];
                    }
                }
            }
            pa.accumulate(&da);
            pb.accumulate(&db);
        });
        Ok(GradNode::from_node(
            value,
            vec![self.clone(), other.clone()],
            Some(backward),
        ))
    }

    /// Row-broadcast bias: `[N×F] + [F]`.
    pub fn add_bias(&self, bias: &GradNode) -> Result<GradNode, TensorError> {
        let (a, b) = (self.value(), bias.value());
        if a.rank() != 2 || b.rank() != 1 || a.shape()[1] != b.shape()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let (n, f) = (a.shape()[0], a.shape()[1]);
        let mut data = a.data().to_vec();
        for i in 0..n {
            for j in 0..f {
                data[i * f + j] += b.data()[j];
            }
        }
        let value = Tensor::new(vec![n, f], data)?;
        let (pa, pb) = (self.clone(), bias.clone());
        let backward = Box::new(move |g: &Tensor| {
            pa.accumulate(g.data());
            let mut db = vec![0.0; f];
            for i in 0..n {
                for j in 0..f {
                    db[j] += g.data()[i * f + j];
                }
            }
            pb.accumulate(&db);
        });
        Ok(GradNode::from_node(
            value,
            vec![self.clone(), bias.clone()],
            Some(backward),
        ))
    }

    // ── signal ops ──────────────────────────────────────────────────────

    /// 1-D cross-correlation with odd kernel and same-length zero padding.
    ///
    /// `x` is `[N×C_in×L]` (or `[C_in×L]` for a single sample), `w` is
    /// `[C_out×C_in×K]` with `K` odd, `b` is `[C_out]`. Output length equals
    /// input length.
    pub fn conv1d(x: &GradNode, w: &GradNode, b: &GradNode) -> Result<GradNode, TensorError> {
        let xv = x.value();
        let wv = w.value();
        let bv = b.value();
        let squeeze = match xv.rank() {
            2 => true,
            3 => false,
            _ => {
                return Err(TensorError::BadRank {
                    op: "conv1d",
                    expected: 3,
                    shape: xv.shape().to_vec(),
                })
            }
        };
        let (n, c_in, l) = if squeeze {
            (1, xv.shape()[0], xv.shape()[1])
        } else {
            (xv.shape()[0], xv.shape()[1], xv.shape()[2])
        };
        if wv.rank() != 3 || wv.shape()[1] != c_in {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d",
                lhs: xv.shape().to_vec(),
                rhs: wv.shape().to_vec(),
            });
        }
        let (c_out, k) = (wv.shape()[0], wv.shape()[2]);
        if k % 2 == 0 {
            return Err(TensorError::Config(format!(
                "conv1d kernel size must be odd, got {k}"
            )));
        }
        if bv.shape() != [c_out] {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d",
                lhs: wv.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let pad = (k - 1) / 2;
        let mut out = vec![0.0; n * c_out * l];
        for s in 0..n {
            for co in 0..c_out {
                for t in 0..l {
                    let mut acc = bv.data()[co];
                    for ci in 0..c_in {
                        for kk in 0..k {
                            let j = t + kk;
                            if j < pad || j - pad >= l {
                                continue;
                            }
                            acc += xv.data()[(s * c_in + ci) * l + (j - pad)]
                                * wv.data()[(co * c_in + ci) * k + kk];
                        }
                    }
                    out[(s * c_out + co) * l + t] = acc;
                }
            }
        }
        let out_shape = if squeeze {
            vec![c_out, l]
        } else {
            vec![n, c_out, l]
        };
        let value = Tensor::new(out_shape, out)?;
        let (px, pw, pb) = (x.clone(), w.clone(), b.clone());
        let backward = Box::new(move |g: &Tensor| {
            let gd = g.data();
            let mut dx = vec![0.0; n * c_in * l];
            let mut dw = vec![0.0; c_out * c_in * k];
            let mut db = vec![0.0; c_out];
            for s in 0..n {
                for co in 0..c_out {
                    for t in 0..l {
                        let gv = gd[(s * c_out + co) * l + t];
                        if gv == 0.0 {
                            continue;
                        }
                        db[co] += gv;
                        for ci in 0..c_in {
                            for kk in 0..k {
                                let j = t + kk;
                                if j < pad || j - pad >= l {
                                    continue;
                                }
                                let xi = (s * c_in + ci) * l + (j - pad);
                                let wi = (co * c_in + ci) * k + kk;
                                dx[xi] += gv * wv.data()[wi];
                                dw[wi] += gv * xv.data()[xi];
                            }
                        }
                    }
                }
            }
            px.accumulate(&dx);
            pw.accumulate(&dw);
            pb.accumulate(&db);
        });
        Ok(GradNode::from_node(
            value,
            vec![x.clone(), w.clone(), b.clone()],
            Some(backward),
        ))
    }

    /// Batch normalization over `[N×C×L]`, normalizing each channel across
    /// the N·L batch positions.
    ///
    /// Train mode uses batch statistics and folds them into `stats` with the
    /// given momentum (running variance uses the unbiased estimate); eval
    /// mode reads `stats` and is a pure function of its inputs.
    pub fn batchnorm(
        x: &GradNode,
        gamma: &GradNode,
        beta: &GradNode,
        mode: Mode,
        stats: &BnStats,
        eps: f64,
        momentum: f64,
    ) -> Result<GradNode, TensorError> {
        let xv = x.value();
        if xv.rank() != 3 {
            return Err(TensorError::BadRank {
                op: "batchnorm",
                expected: 3,
                shape: xv.shape().to_vec(),
            });
        }
        let (n, c, l) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        let gv = gamma.value();
        let bv = beta.value();
        if gv.shape() != [c] || bv.shape() != [c] {
            return Err(TensorError::ShapeMismatch {
                op: "batchnorm",
                lhs: xv.shape().to_vec(),
                rhs: gv.shape().to_vec(),
            });
        }
        let m = n * l;
        if mode == Mode::Train && m < 2 {
            return Err(TensorError::DegenerateBatch(m));
        }

        let (mean, var): (Vec<f64>, Vec<f64>) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let mut s = 0.0;
                    for i in 0..n {
                        for t in 0..l {
                            s += xv.data()[(i * c + ch) * l + t];
                        }
                    }
                    let mu = s / m as f64;
                    let mut sv = 0.0;
                    for i in 0..n {
                        for t in 0..l {
                            let d = xv.data()[(i * c + ch) * l + t] - mu;
                            sv += d * d;
                        }
                    }
                    mean[ch] = mu;
                    var[ch] = sv / m as f64;
                }
                // fold into running stats
                {
                    let mut rm = stats.mean.borrow_mut();
                    let mut rv = stats.var.borrow_mut();
                    let unbias = m as f64 / (m as f64 - 1.0);
                    for ch in 0..c {
                        rm[ch] = (1.0 - momentum) * rm[ch] + momentum * mean[ch];
                        rv[ch] = (1.0 - momentum) * rv[ch] + momentum * var[ch] * unbias;
                    }
                }
                (mean, var)
            }
            Mode::Eval => (stats.mean.borrow().clone(), stats.var.borrow().clone()),
        };

        let mut xhat = vec![0.0; n * c * l];
        let mut out = vec![0.0; n * c * l];
        for ch in 0..c {
            let inv_std = 1.0 / (var[ch] + eps).sqrt();
            for i in 0..n {
                for t in 0..l {
                    let idx = (i * c + ch) * l + t;
                    let h = (xv.data()[idx] - mean[ch]) * inv_std;
                    xhat[idx] = h;
                    out[idx] = gv.data()[ch] * h + bv.data()[ch];
                }
            }
        }
        let value = Tensor::new(vec![n, c, l], out)?;
        let (px, pg, pb) = (x.clone(), gamma.clone(), beta.clone());
        let backward = Box::new(move |g: &Tensor| {
            let gd = g.data();
            let mut dx = vec![0.0; n * c * l];
            let mut dgamma = vec![0.0; c];
            let mut dbeta = vec![0.0; c];
            for ch in 0..c {
                let inv_std = 1.0 / (var[ch] + eps).sqrt();
                let mut sum_g = 0.0;
                let mut sum_gh = 0.0;
                for i in 0..n {
                    for t in 0..l {
                        let idx = (i * c + ch) * l + t;
                        sum_g += gd[idx];
                        sum_gh += gd[idx] * xhat[idx];
                    }
                }
                dbeta[ch] = sum_g;
                dgamma[ch] = sum_gh;
                match mode {
                    Mode::Train => {
                        let mf = m as f64;
                        for i in 0..n {
                            for t in 0..l {
                                let idx = (i * c + ch) * l + t;
                                dx[idx] = gv.data()[ch] * inv_std / mf
                                    * (mf * gd[idx] - sum_g - xhat[idx] * sum_gh);
                            }
                        }
                    }
                    Mode::Eval => {
                        // running stats are constants
                        for i in 0..n {
                            for t in 0..l {
                                let idx = (i * c + ch) * l + t;
                                dx[idx] = gv.data()[ch] * inv_std * gd[idx];
                            }
                        }
                    }
                }
            }
            px.accumulate(&dx);
            pg.accumulate(&dgamma);
            pb.accumulate(&dbeta);
        });
        Ok(GradNode::from_node(
            value,
            vec![x.clone(), gamma.clone(), beta.clone()],
            Some(backward),
        ))
    }

    /// Mean pooling along the last axis with window == stride. A remainder
    /// tail shorter than the window is dropped, so the output length is
    /// `floor(L / window)`.
    pub fn mean_pool1d(&self, window: usize) -> Result<GradNode, TensorError> {
        let a = self.value();
        let shape = a.shape().to_vec();
        let l = *shape.last().ok_or(TensorError::BadRank {
            op: "mean_pool1d",
            expected: 1,
            shape: shape.clone(),
        })?;
        if window == 0 || window > l {
            return Err(TensorError::Config(format!(
                "mean_pool1d window {window} invalid for axis length {l}"
            )));
        }
        let out_l = l / window;
        let lead: usize = shape[..shape.len() - 1].iter().product();
        let mut out = vec![0.0; lead * out_l];
        for r in 0..lead {
            for t in 0..out_l {
                let mut s = 0.0;
                for j in 0..window {
                    s += a.data()[r * l + t * window + j];
                }
                out[r * out_l + t] = s / window as f64;
            }
        }
        let mut out_shape = shape.clone();
        *out_shape.last_mut().unwrap() = out_l;
        let value = Tensor::new(out_shape, out)?;
        let pa = self.clone();
        let backward = Box::new(move |g: &Tensor| {
            let mut d = vec![0.0; lead * l];
            for r in 0..lead {
                for t in 0..out_l {
                    let gv = g.data()[r * out_l + t] / window as f64;
                    for j in 0..window {
                        d[r * l + t * window + j] = gv;
                    }
                }
            }
            pa.accumulate(&d);
        });
        Ok(GradNode::from_node(value, vec![self.clone()], Some(backward)))
    }

    /// Mean binary cross-entropy over logits `[N]`, evaluated in the
    /// log-sum-exp-stable form so large logits cannot overflow. The gradient
    /// with respect to logit `i` is `(sigmoid(z_i) - y_i) / N`.
    pub fn bce_with_logits(logits: &GradNode, labels: &[u8]) -> Result<GradNode, TensorError> {
        let z = logits.value();
        if z.rank() != 1 || z.numel() != labels.len() {
            return Err(TensorError::ShapeMismatch {
                op: "bce_with_logits",
                lhs: z.shape().to_vec(),
                rhs: vec![labels.len()],
            });
        }
        if labels.is_empty() {
            return Err(TensorError::Config("bce_with_logits: empty batch".into()));
        }
        let n = labels.len() as f64;
        let mut total = 0.0;
        for (&zi, &yi) in z.data().iter().zip(labels) {
            let y = yi as f64;
            // max(z,0) - z*y + ln(1 + exp(-|z|))
            total += zi.max(0.0) - zi * y + (-zi.abs()).exp().ln_1p();
        }
        let value = Tensor::scalar(total / n);
        let pz = logits.clone();
        let y: Vec<f64> = labels.iter().map(|&v| v as f64).collect();
        let zd = z.data().to_vec();
        let backward = Box::new(move |g: &Tensor| {
            let gv = g.item();
            let d: Vec<f64> = zd
                .iter()
                .zip(&y)
                .map(|(&zi, &yi)| gv * (stable_sigmoid(zi) - yi) / n)
                .collect();
            pz.accumulate(&d);
        });
        Ok(GradNode::from_node(value, vec![logits.clone()], Some(backward)))
    }

    // ── backward driver ─────────────────────────────────────────────────

    /// Propagate `d(self)/d(node)` into every reachable node's `grad`.
    ///
    /// The root must be scalar. Each node's rule fires exactly once, in
    /// reverse topological order; gradients add across multiple uses.
    pub fn backward(&self) -> Result<(), TensorError> {
        {
            let root = self.inner.borrow();
            if !root.value.is_scalar() {
                return Err(TensorError::NonScalarRoot(root.value.shape().to_vec()));
            }
        }
        // Iterative postorder DFS; `visited` keys on node identity.
        enum Frame {
            Enter(GradNode),
            Exit(GradNode),
        }
        let mut topo: Vec<GradNode> = Vec::new();
        let mut visited: HashSet<*const ()> = HashSet::new();
        let mut stack = vec![Frame::Enter(self.clone())];
        while let Some(frame) = stack.pop() {
            match frame {
                Frame::Enter(node) => {
                    if !visited.insert(node.ptr()) {
                        continue;
                    }
                    stack.push(Frame::Exit(node.clone()));
                    for parent in node.inner.borrow().parents.iter() {
                        if !visited.contains(&parent.ptr()) {
                            stack.push(Frame::Enter(parent.clone()));
                        }
                    }
                }
                Frame::Exit(node) => topo.push(node),
            }
        }

        self.inner.borrow_mut().grad = Tensor::ones(&self.shape());
        for node in topo.iter().rev() {
            let grad = node.inner.borrow().grad.clone();
            let borrow = node.inner.borrow();
            if let Some(rule) = &borrow.backward {
                rule(&grad);
            }
        }
        Ok(())
    }
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
