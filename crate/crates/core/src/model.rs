//! Densely connected spectral graph CNN.
//!
//! Layer `t` computes
//!
//! ```text
//! H_t = relu(P (drop(Xin_t) theta1) + Q (drop(X) theta2) + b)
//! ```
//!
//! where `Xin_t = [X, H_0, .., H_{t-1}]` and `P`, `Q` are the feedback and
//! feedforward polynomials of a designed filter. `P` is applied after the
//! kernel product since both are linear, which keeps every operator
//! application `n x h` wide. The head is an affine map from
//! `[X, H_0, .., H_{T-1}]` to class scores followed by a row softmax.
//!
//! The kernel penalty lives in the loss, not in the pre-activation.

use std::fs;
use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::design::{design_coefficients, DesiredResponse, FilterCoefficients, DEFAULT_GRID_MAX, DEFAULT_GRID_SIZE};
use crate::engine::PolynomialOperator;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::laplacian::{
    augmented_laplacian, chebyshev_rescaled_laplacian, scaled_normalized_laplacian, LambdaMaxMode, LaplacianOperator,
};
use crate::seed::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterKind {
    /// Feedback-looped filter: kernels `theta1` (P path) and `theta2` (Q path).
    FeedbackLooped,
    /// Order-`k` Chebyshev filter with one kernel per polynomial `T_j`.
    Chebyshev { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layer_widths: Vec<usize>,
    pub p: usize,
    pub q: usize,
    pub gamma: f64,
    pub eta: f64,
    pub l2_coeff: f64,
    pub dropout: f64,
    pub activation: Activation,
    pub filter: FilterKind,
    /// Concatenate all preceding feature maps; otherwise each layer sees
    /// only its predecessor.
    pub dense: bool,
    /// Filter on `L~ = L^ - lambda_max / 2`; otherwise on `L^`.
    pub scaled_normalization: bool,
    /// Binary high-pass design target; otherwise `h(lambda) = lambda`.
    pub cut_off: bool,
    pub unit_norm: bool,
    pub seed: u64,
}

impl ModelConfig {
    /// Five dense layers `[8, 16, 32, 64, 128]`, dropout 0.9, L2 9e-2,
    /// `(p, q) = (5, 3)`, `gamma = 0.9`, cut-off 0.5.
    pub fn dfnet() -> Self {
        ModelConfig {
            layer_widths: vec![8, 16, 32, 64, 128],
            p: 5,
            q: 3,
            gamma: 0.9,
            eta: 0.5,
            l2_coeff: 9e-2,
            dropout: 0.9,
            activation: Activation::Relu,
            filter: FilterKind::FeedbackLooped,
            dense: true,
            scaled_normalization: true,
            cut_off: true,
            unit_norm: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.is_empty() || self.layer_widths.contains(&0) {
            return Err(Error::invalid("layer widths must be non-empty and positive"));
        }
        if !(self.l2_coeff >= 0.0 && self.l2_coeff.is_finite()) {
            return Err(Error::invalid(format!("l2 coefficient must be >= 0, got {}", self.l2_coeff)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        match self.filter {
            FilterKind::FeedbackLooped => {
                if self.p == 0 {
                    return Err(Error::invalid("p must be at least 1"));
                }
                if !(self.gamma > 0.0 && self.gamma < 1.0) {
                    return Err(Error::invalid(format!("gamma must lie in (0, 1), got {}", self.gamma)));
                }
                if !(0.0..=1.0).contains(&self.eta) {
                    return Err(Error::invalid(format!("eta must lie in [0, 1], got {}", self.eta)));
                }
            }
            FilterKind::Chebyshev { k } => {
                if k == 0 {
                    return Err(Error::invalid("Chebyshev order must be at least 1"));
                }
            }
        }
        Ok(())
    }

    /// Feature-map sources of layer `t`'s input block, as indices into
    /// `[X, H_0, H_1, ..]`, and how many leading block columns the P path
    /// skips.
    fn layer_sources(&self, t: usize, f: usize) -> (Vec<usize>, usize) {
        if self.dense || t == 0 {
            return ((0..=t).collect(), 0);
        }
        match self.filter {
            // The Q path always reads X, so it stays in the block.
            FilterKind::FeedbackLooped => (vec![0, t], f),
            FilterKind::Chebyshev { .. } => (vec![t], 0),
        }
    }

    fn head_sources(&self) -> Vec<usize> {
        let t = self.layer_widths.len();
        if self.dense {
            (0..=t).collect()
        } else {
            vec![t]
        }
    }

    fn source_width(&self, s: usize, f: usize) -> usize {
        if s == 0 {
            f
        } else {
            self.layer_widths[s - 1]
        }
    }

    /// Width of the P-path input of layer `t`.
    pub fn layer_input_width(&self, t: usize, f: usize) -> usize {
        let (sources, skip) = self.layer_sources(t, f);
        sources.iter().map(|&s| self.source_width(s, f)).sum::<usize>() - skip
    }

    pub fn head_input_width(&self, f: usize) -> usize {
        self.head_sources().iter().map(|&s| self.source_width(s, f)).sum()
    }
}

/// Graph operators consumed by the layers.
#[derive(Debug, Clone)]
pub struct FilterBank {
    op: LaplacianOperator,
    kind: BankKind,
}

#[derive(Debug, Clone)]
enum BankKind {
    Feedback { coefficients: FilterCoefficients },
    Chebyshev { k: usize },
}

impl FilterBank {
    pub fn feedback(op: LaplacianOperator, coefficients: FilterCoefficients) -> Self {
        FilterBank {
            op,
            kind: BankKind::Feedback { coefficients },
        }
    }

    /// `op` must be the Chebyshev-rescaled Laplacian.
    pub fn chebyshev(op: LaplacianOperator, k: usize) -> Self {
        FilterBank {
            op,
            kind: BankKind::Chebyshev { k },
        }
    }

    /// Builds the operator and, for feedback-looped filters, designs the
    /// coefficients, as `config` prescribes.
    pub fn for_graph(graph: &Graph, config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        match config.filter {
            FilterKind::FeedbackLooped => {
                let op = if config.scaled_normalization {
                    scaled_normalized_laplacian(graph, LambdaMaxMode::Exact)
                } else {
                    augmented_laplacian(graph, LambdaMaxMode::Exact)
                };
                let resp = if config.cut_off {
                    DesiredResponse::high_pass(config.eta, DEFAULT_GRID_SIZE, DEFAULT_GRID_MAX)?
                } else {
                    DesiredResponse::unbinarized(config.eta, DEFAULT_GRID_SIZE, DEFAULT_GRID_MAX)?
                };
                let c = design_coefficients(&resp, config.p, config.q, config.gamma)?;
                Ok(Self::feedback(op, c))
            }
            FilterKind::Chebyshev { k } => Ok(Self::chebyshev(chebyshev_rescaled_laplacian(graph, 2.0)?, k)),
        }
    }

    pub fn operator(&self) -> &LaplacianOperator {
        &self.op
    }

    pub fn coefficients(&self) -> Option<&FilterCoefficients> {
        match &self.kind {
            BankKind::Feedback { coefficients } => Some(coefficients),
            BankKind::Chebyshev { .. } => None,
        }
    }

    fn check(&self, config: &ModelConfig) -> Result<()> {
        let ok = match (&self.kind, config.filter) {
            (BankKind::Feedback { .. }, FilterKind::FeedbackLooped) => true,
            (BankKind::Chebyshev { k }, FilterKind::Chebyshev { k: k2 }) => *k == k2,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("filter bank does not match the model's filter kind"))
        }
    }

    /// `P y` for the feedback bank.
    pub fn apply_p(&self, y: ArrayView2<f64>) -> Result<Array2<f64>> {
        match &self.kind {
            BankKind::Feedback { coefficients } => PolynomialOperator::feedback(&self.op, coefficients).apply(y),
            BankKind::Chebyshev { .. } => Err(Error::invalid("Chebyshev bank has no P operator")),
        }
    }

    /// `Q y` for the feedback bank.
    pub fn apply_q(&self, y: ArrayView2<f64>) -> Result<Array2<f64>> {
        match &self.kind {
            BankKind::Feedback { coefficients } => PolynomialOperator::feedforward(&self.op, coefficients).apply(y),
            BankKind::Chebyshev { .. } => Err(Error::invalid("Chebyshev bank has no Q operator")),
        }
    }

    /// `T_j(L) y`.
    pub fn apply_chebyshev_term(&self, j: usize, y: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut prev = y.to_owned();
        if j == 0 {
            return Ok(prev);
        }
        let mut cur = self.op.apply_block(y)?;
        for _ in 1..j {
            let mut next = self.op.apply_block(cur.view())? * 2.0;
            next -= &prev;
            prev = cur;
            cur = next;
        }
        Ok(cur)
    }
}

/// Kernels and bias of one layer. Feedback layers hold `[theta1, theta2]`;
/// Chebyshev layers hold one kernel per `T_j`; the head holds one kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub kernels: Vec<Array2<f64>>,
    pub bias: Array1<f64>,
}

impl LayerParams {
    pub fn theta1(&self) -> &Array2<f64> {
        &self.kernels[0]
    }

    pub fn theta2(&self) -> Option<&Array2<f64>> {
        self.kernels.get(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<LayerParams>,
    pub head: LayerParams,
}

/// Gradients share the parameter layout.
pub type Gradients = ModelParams;

impl ModelParams {
    pub fn zeros(config: &ModelConfig, f: usize, classes: usize) -> Self {
        let mut layers = Vec::new();
        for (t, &h) in config.layer_widths.iter().enumerate() {
            let c = config.layer_input_width(t, f);
            let kernels = match config.filter {
                FilterKind::FeedbackLooped => vec![Array2::zeros((c, h)), Array2::zeros((f, h))],
                FilterKind::Chebyshev { k } => (0..k).map(|_| Array2::zeros((c, h))).collect(),
            };
            layers.push(LayerParams {
                kernels,
                bias: Array1::zeros(h),
            });
        }
        let head = LayerParams {
            kernels: vec![Array2::zeros((config.head_input_width(f), classes))],
            bias: Array1::zeros(classes),
        };
        ModelParams { layers, head }
    }

    pub fn all(&self) -> impl Iterator<Item = &LayerParams> {
        self.layers.iter().chain(std::iter::once(&self.head))
    }

    pub fn all_mut(&mut self) -> impl Iterator<Item = &mut LayerParams> {
        self.layers.iter_mut().chain(std::iter::once(&mut self.head))
    }

    /// Tensors in declaration order: per layer its kernels then bias, then
    /// the head.
    pub fn tensors(&self) -> Vec<ArrayView2<'_, f64>> {
        let mut out = Vec::new();
        for l in self.all() {
            out.extend(l.kernels.iter().map(|k| k.view()));
            out.push(l.bias.view().insert_axis(Axis(0)));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<ndarray::ArrayViewMut2<'_, f64>> {
        let mut out = Vec::new();
        for l in self.all_mut() {
            out.extend(l.kernels.iter_mut().map(|k| k.view_mut()));
            out.push(l.bias.view_mut().insert_axis(Axis(0)));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `sum |theta|_F^2` over every kernel (biases excluded).
    pub fn kernel_sq_norm(&self) -> f64 {
        self.all()
            .flat_map(|l| l.kernels.iter())
            .map(|k| k.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }
}

/// Xavier normal kernels, `N(0, 2 / (fan_in + fan_out))`, and zero biases.
pub fn init_params(config: &ModelConfig, f: usize, classes: usize, seed: u64) -> ModelParams {
    let mut params = ModelParams::zeros(config, f, classes);
    let mut rng = rng_for(seed, "init");
    for layer in params.all_mut() {
        for k in &mut layer.kernels {
            let (fan_in, fan_out) = k.dim();
            let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            k.mapv_inplace(|_| normal.sample(&mut rng));
        }
    }
    params
}

fn project_unit_ball(mut v: ndarray::ArrayViewMut1<f64>) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1.0 {
        v.mapv_inplace(|x| x / norm);
    }
}

/// Rescales every kernel column with norm above 1 to unit norm; each bias
/// is treated as one vector under the same rule.
pub fn apply_unit_norm_constraint(params: &mut ModelParams) {
    for layer in params.all_mut() {
        for k in &mut layer.kernels {
            for col in k.columns_mut() {
                project_unit_ball(col);
            }
        }
        project_unit_ball(layer.bias.view_mut());
    }
}

pub enum Mode<'r> {
    Eval,
    Train(&'r mut ChaCha8Rng),
}

/// Inverted-dropout keep mask over an input block.
#[derive(Debug, Clone)]
pub struct DropoutMask {
    pub keep: Array2<bool>,
    pub scale: f64,
}

#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub pre_activation: Array2<f64>,
    pub mask: Option<DropoutMask>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
    /// Layer outputs `H_0 .. H_{T-1}`.
    pub outputs: Vec<Array2<f64>>,
    pub head_mask: Option<DropoutMask>,
    pub logits: Array2<f64>,
    pub probabilities: Array2<f64>,
}

fn gather(sources: &[usize], x: ArrayView2<f64>, outputs: &[Array2<f64>]) -> Array2<f64> {
    let views: Vec<ArrayView2<f64>> = sources
        .iter()
        .map(|&s| if s == 0 { x } else { outputs[s - 1].view() })
        .collect();
    concatenate(Axis(1), &views).expect("row counts agree")
}

fn draw_mask(dim: (usize, usize), rate: f64, rng: &mut ChaCha8Rng) -> DropoutMask {
    let keep_p = 1.0 - rate;
    DropoutMask {
        keep: Array2::from_shape_simple_fn(dim, || rng.random::<f64>() < keep_p),
        scale: 1.0 / keep_p,
    }
}

fn apply_mask(mut block: Array2<f64>, mask: Option<&DropoutMask>) -> Array2<f64> {
    if let Some(m) = mask {
        Zip::from(&mut block).and(&m.keep).for_each(|v, &k| *v = if k { *v * m.scale } else { 0.0 });
    }
    block
}

fn add_bias(a: &mut Array2<f64>, b: &Array1<f64>) {
    *a += &b.view().insert_axis(Axis(0));
}

fn check_finite(a: &Array2<f64>, layer: usize) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteActivation { layer })
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

fn validate_shapes(config: &ModelConfig, params: &ModelParams, f: usize) -> Result<()> {
    if params.layers.len() != config.layer_widths.len() {
        return Err(Error::DimensionMismatch {
            expected: config.layer_widths.len(),
            got: params.layers.len(),
        });
    }
    let classes = params.head.bias.len();
    let expected = ModelParams::zeros(config, f, classes);
    for (a, b) in expected.tensors().iter().zip(params.tensors().iter()) {
        if a.dim() != b.dim() {
            return Err(Error::invalid(format!(
                "parameter shape {:?} does not match the configuration's {:?}",
                b.dim(),
                a.dim()
            )));
        }
    }
    Ok(())
}

/// Runs the network. Layer index `T` in errors refers to the head.
pub fn forward(
    config: &ModelConfig,
    params: &ModelParams,
    bank: &FilterBank,
    x: ArrayView2<f64>,
    mut mode: Mode<'_>,
) -> Result<ForwardTrace> {
    let (n, f) = x.dim();
    if n != bank.operator().n() {
        return Err(Error::DimensionMismatch {
            expected: bank.operator().n(),
            got: n,
        });
    }
    bank.check(config)?;
    validate_shapes(config, params, f)?;
    let mut outputs: Vec<Array2<f64>> = Vec::with_capacity(params.layers.len());
    let mut layers = Vec::with_capacity(params.layers.len());
    let masked = |dim, mode: &mut Mode<'_>| match mode {
        Mode::Train(rng) if config.dropout > 0.0 => Some(draw_mask(dim, config.dropout, rng)),
        _ => None,
    };
    for (t, lp) in params.layers.iter().enumerate() {
        let (sources, skip) = config.layer_sources(t, f);
        let block = gather(&sources, x, &outputs);
        let mask = masked(block.dim(), &mut mode);
        let d = apply_mask(block, mask.as_ref());
        let p_in = d.slice(s![.., skip..]);
        let mut pre = match config.filter {
            FilterKind::FeedbackLooped => {
                let mut a = bank.apply_p(p_in.dot(&lp.kernels[0]).view())?;
                a += &bank.apply_q(d.slice(s![.., ..f]).dot(&lp.kernels[1]).view())?;
                a
            }
            FilterKind::Chebyshev { .. } => {
                let mut a = Array2::zeros((n, lp.bias.len()));
                for (j, k) in lp.kernels.iter().enumerate() {
                    a += &bank.apply_chebyshev_term(j, p_in.dot(k).view())?;
                }
                a
            }
        };
        add_bias(&mut pre, &lp.bias);
        check_finite(&pre, t)?;
        let h = match config.activation {
            Activation::Relu => pre.mapv(|v| v.max(0.0)),
            Activation::Identity => pre.clone(),
        };
        outputs.push(h);
        layers.push(LayerTrace {
            pre_activation: pre,
            mask,
        });
    }
    let block = gather(&config.head_sources(), x, &outputs);
    let head_mask = masked(block.dim(), &mut mode);
    let d = apply_mask(block, head_mask.as_ref());
    let mut logits = d.dot(&params.head.kernels[0]);
    add_bias(&mut logits, &params.head.bias);
    check_finite(&logits, params.layers.len())?;
    let probabilities = softmax_rows(&logits);
    Ok(ForwardTrace {
        layers,
        outputs,
        head_mask,
        logits,
        probabilities,
    })
}

fn mask_count(labels: &[i64], mask: &[bool], n: usize, classes: usize) -> Result<usize> {
    if labels.len() != n || mask.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len().min(mask.len()),
        });
    }
    let mut count = 0;
    for i in 0..n {
        if mask[i] {
            if labels[i] < 0 || labels[i] as usize >= classes {
                return Err(Error::invalid(format!("vertex {i} is masked in but has label {}", labels[i])));
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::invalid("loss mask selects no labeled vertex"));
    }
    Ok(count)
}

/// Mean masked cross-entropy of the softmax probabilities.
pub fn cross_entropy(probabilities: &Array2<f64>, labels: &[i64], mask: &[bool]) -> Result<f64> {
    let (n, classes) = probabilities.dim();
    let count = mask_count(labels, mask, n, classes)?;
    let mut total = 0.0;
    for i in (0..n).filter(|&i| mask[i]) {
        total -= probabilities[[i, labels[i] as usize]].max(f64::MIN_POSITIVE).ln();
    }
    Ok(total / count as f64)
}

/// Cross-entropy plus `l2_coeff * sum |theta|_F^2`.
pub fn loss(trace: &ForwardTrace, labels: &[i64], mask: &[bool], params: &ModelParams, l2_coeff: f64) -> Result<f64> {
    Ok(cross_entropy(&trace.probabilities, labels, mask)? + l2_coeff * params.kernel_sq_norm())
}

/// Fraction of masked vertices whose arg-max class is correct.
pub fn accuracy(probabilities: &Array2<f64>, labels: &[i64], mask: &[bool]) -> f64 {
    let mut hit = 0usize;
    let mut total = 0usize;
    for (i, row) in probabilities.rows().into_iter().enumerate() {
        if !mask[i] {
            continue;
        }
        total += 1;
        let best = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(c, _)| c as i64);
        hit += usize::from(best == Some(labels[i]));
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}

/// Sends `d_block * mask` (restricted to the H sources) into `d_outputs`.
/// `d_p` is the gradient w.r.t. the block columns starting at `skip`.
#[allow(clippy::too_many_arguments)]
fn scatter_block_grad(
    d_p_from_kernel: impl Fn(std::ops::Range<usize>) -> Array2<f64>,
    sources: &[usize],
    skip: usize,
    mask: Option<&DropoutMask>,
    config: &ModelConfig,
    f: usize,
    d_outputs: &mut [Array2<f64>],
) {
    let mut offset = 0;
    for &src in sources {
        let w = config.source_width(src, f);
        if src > 0 {
            let rows = (offset - skip)..(offset - skip + w);
            let mut g = d_p_from_kernel(rows);
            if let Some(m) = mask {
                Zip::from(&mut g)
                    .and(m.keep.slice(s![.., offset..offset + w]))
                    .for_each(|v, &k| *v = if k { *v * m.scale } else { 0.0 });
            }
            d_outputs[src - 1] += &g;
        }
        offset += w;
    }
}

/// Exact gradients of [`loss`] for the forward pass recorded in `trace`.
pub fn backward(
    config: &ModelConfig,
    params: &ModelParams,
    bank: &FilterBank,
    x: ArrayView2<f64>,
    trace: &ForwardTrace,
    labels: &[i64],
    mask: &[bool],
) -> Result<Gradients> {
    let (n, f) = x.dim();
    let classes = params.head.bias.len();
    if trace.probabilities.dim() != (n, classes) || trace.layers.len() != params.layers.len() {
        return Err(Error::invalid("trace does not belong to these parameters and inputs"));
    }
    let count = mask_count(labels, mask, n, classes)? as f64;
    let l2 = config.l2_coeff;
    let mut grads = ModelParams::zeros(config, f, classes);

    let mut d_logits = Array2::zeros((n, classes));
    for i in (0..n).filter(|&i| mask[i]) {
        let mut row = d_logits.row_mut(i);
        row.assign(&trace.probabilities.row(i));
        row[labels[i] as usize] -= 1.0;
        row.mapv_inplace(|v| v / count);
    }

    let mut d_outputs: Vec<Array2<f64>> = trace.outputs.iter().map(|h| Array2::zeros(h.dim())).collect();

    let head_sources = config.head_sources();
    let d = apply_mask(gather(&head_sources, x, &trace.outputs), trace.head_mask.as_ref());
    let w = &params.head.kernels[0];
    grads.head.kernels[0] = d.t().dot(&d_logits) + &(w * (2.0 * l2));
    grads.head.bias = d_logits.sum_axis(Axis(0));
    scatter_block_grad(
        |rows| d_logits.dot(&w.slice(s![rows, ..]).t()),
        &head_sources,
        0,
        trace.head_mask.as_ref(),
        config,
        f,
        &mut d_outputs,
    );

    for t in (0..params.layers.len()).rev() {
        let lp = &params.layers[t];
        let lt = &trace.layers[t];
        let mut d_pre = std::mem::take(&mut d_outputs[t]);
        if config.activation == Activation::Relu {
            Zip::from(&mut d_pre)
                .and(&lt.pre_activation)
                .for_each(|g, &z| if z <= 0.0 { *g = 0.0 });
        }
        let g = &mut grads.layers[t];
        g.bias = d_pre.sum_axis(Axis(0));
        let (sources, skip) = config.layer_sources(t, f);
        let d = apply_mask(gather(&sources, x, &trace.outputs), lt.mask.as_ref());
        let p_in = d.slice(s![.., skip..]);
        // Every filter operator is a polynomial in a symmetric matrix, so it
        // is its own adjoint.
        let d_z: Vec<Array2<f64>> = match config.filter {
            FilterKind::FeedbackLooped => {
                let dz1 = bank.apply_p(d_pre.view())?;
                let dz2 = bank.apply_q(d_pre.view())?;
                g.kernels[0] = p_in.t().dot(&dz1) + &(&lp.kernels[0] * (2.0 * l2));
                g.kernels[1] = d.slice(s![.., ..f]).t().dot(&dz2) + &(&lp.kernels[1] * (2.0 * l2));
                vec![dz1]
            }
            FilterKind::Chebyshev { k } => {
                let mut out = Vec::with_capacity(k);
                for j in 0..k {
                    let dz = bank.apply_chebyshev_term(j, d_pre.view())?;
                    g.kernels[j] = p_in.t().dot(&dz) + &(&lp.kernels[j] * (2.0 * l2));
                    out.push(dz);
                }
                out
            }
        };
        if t == 0 {
            continue;
        }
        let (before, _) = d_outputs.split_at_mut(t);
        scatter_block_grad(
            |rows| {
                let mut acc = Array2::zeros((n, rows.len()));
                for (dz, k) in d_z.iter().zip(lp.kernels.iter()) {
                    acc += &dz.dot(&k.slice(s![rows.clone(), ..]).t());
                }
                acc
            },
            &sources,
            skip,
            lt.mask.as_ref(),
            config,
            f,
            before,
        );
    }
    Ok(grads)
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DFCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned binary checkpoint: magic, `u32` version, `u32` length plus the
/// JSON-encoded config, `u32` tensor count, then per tensor `u32` rank,
/// `u32` dims and little-endian `f64` values.
pub fn checkpoint_to_bytes(config: &ModelConfig, params: &ModelParams) -> Result<Vec<u8>> {
    let echo = serde_json::to_vec(config).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(echo.len() as u32).to_le_bytes());
    out.extend_from_slice(&echo);
    let tensors = params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&2u32.to_le_bytes());
        out.extend_from_slice(&(t.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.ncols() as u32).to_le_bytes());
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, len: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(ModelConfig, ModelParams)> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a DFCK checkpoint".into()));
    }
    let version = cur.u32()?;
    if version != CHECKPOINT_VERSION as usize {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let len = cur.u32()?;
    let config: ModelConfig =
        serde_json::from_slice(cur.take(len)?).map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
    let count = cur.u32()?;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let rank = cur.u32()?;
        if rank != 2 {
            return Err(Error::Format(format!("tensor rank {rank}, expected 2")));
        }
        let (r, c) = (cur.u32()?, cur.u32()?);
        let data = cur
            .take(r * c * 8)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        tensors.push(Array2::from_shape_vec((r, c), data).expect("length checked"));
    }
    if cur.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    // Recover f and the class count from the first kernel and the head bias.
    let f = match (config.filter, tensors.get(1)) {
        (FilterKind::FeedbackLooped, Some(theta2)) => theta2.nrows(),
        _ => tensors.first().map_or(0, |t| t.nrows()),
    };
    let classes = tensors.last().map_or(0, |t| t.ncols());
    let mut params = ModelParams::zeros(&config, f, classes);
    let mut slots = params.tensors_mut();
    if slots.len() != tensors.len() {
        return Err(Error::Format(format!(
            "checkpoint has {} tensors, configuration needs {}",
            tensors.len(),
            slots.len()
        )));
    }
    for (slot, t) in slots.iter_mut().zip(tensors.iter()) {
        if slot.dim() != t.dim() {
            return Err(Error::Format(format!(
                "tensor shape {:?} does not match configuration shape {:?}",
                t.dim(),
                slot.dim()
            )));
        }
        slot.assign(t);
    }
    drop(slots);
    Ok((config, params))
}

pub fn save_checkpoint(path: &Path, config: &ModelConfig, params: &ModelParams) -> Result<()> {
    fs::write(path, checkpoint_to_bytes(config, params)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ModelParams)> {
    checkpoint_from_bytes(&crate::error::read_input(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use rand::SeedableRng;

    fn c4() -> Graph {
        Graph::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)]).unwrap()
    }

    fn small_config() -> ModelConfig {
        ModelConfig {
            layer_widths: vec![4, 3],
            p: 2,
            q: 1,
            gamma: 0.5,
            dropout: 0.0,
            l2_coeff: 0.0,
            ..ModelConfig::dfnet()
        }
    }

    #[test]
    fn zero_network_is_uniform() {
        let cfg = small_config();
        let g = c4();
        let bank = FilterBank::for_graph(&g, &cfg).unwrap();
        let x = Array2::from_shape_fn((4, 2), |(i, j)| (i + j) as f64);
        let params = ModelParams::zeros(&cfg, 2, 3);
        let tr = forward(&cfg, &params, &bank, x.view(), Mode::Eval).unwrap();
        assert!(tr.probabilities.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn dense_widths() {
        let cfg = ModelConfig::dfnet();
        assert_eq!(cfg.layer_input_width(0, 10), 10);
        assert_eq!(cfg.layer_input_width(3, 10), 10 + 8 + 16 + 32);
        assert_eq!(cfg.head_input_width(10), 10 + 8 + 16 + 32 + 64 + 128);
        let plain = ModelConfig { dense: false, ..cfg };
        assert_eq!(plain.layer_input_width(3, 10), 32);
        assert_eq!(plain.head_input_width(10), 128);
    }

    #[test]
    fn unit_norm_examples() {
        let cfg = ModelConfig {
            layer_widths: vec![1],
            ..small_config()
        };
        let mut p = ModelParams::zeros(&cfg, 2, 2);
        p.layers[0].kernels[1] = ndarray::arr2(&[[3.0], [4.0]]);
        p.layers[0].kernels[0] = ndarray::arr2(&[[0.1], [0.2]]);
        apply_unit_norm_constraint(&mut p);
        assert_eq!(p.layers[0].kernels[1], ndarray::arr2(&[[0.6], [0.8]]));
        assert_eq!(p.layers[0].kernels[0], ndarray::arr2(&[[0.1], [0.2]]));
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = small_config();
        let params = init_params(&cfg, 5, 3, 9);
        let bytes = checkpoint_to_bytes(&cfg, &params).unwrap();
        let (c2, p2) = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(c2, cfg);
        assert_eq!(p2, params);
        assert!(checkpoint_from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn dropout_masks_are_scaled() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = draw_mask((100, 100), 0.9, &mut rng);
        let kept = m.keep.iter().filter(|k| **k).count() as f64 / 1e4;
        assert!((kept - 0.1).abs() < 0.02);
        assert!((m.scale - 10.0).abs() < 1e-12);
    }
}
