//! Multinomial logistic regression on embedding rows.
//!
//! Training is full-batch gradient descent on standardized features, so the
//! classifier adds no randomness of its own. The objective is
//!
//! ```text
//! mean_i CE(softmax(W x_i + b), y_i) + l2_strength / (2 n) * ||W||²
//! ```
//!
//! which has the same minimizer as a per-sample loss sum with inverse
//! regularization `C = 1 / l2_strength`. The fitted model is folded back
//! into raw feature space, so `predict_proba` takes unstandardized rows.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::{parse_floats, parse_header, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::funcsim::{error_rate, LabelVector, OutputMatrix};
use crate::graph::{mask_indices, SplitSpec};
use crate::numeric::fmt_f64;

/// Weights (`C x D`, row-major) and biases of a softmax classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    classes: usize,
    dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LogRegModel {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self { classes, dim, weights: vec![0.0; classes * dim], bias: vec![0.0; classes] }
    }

    pub fn new(classes: usize, dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != classes * dim || bias.len() != classes {
            return Err(Error::ShapeMismatch(format!(
                "model parameters do not match {classes} classes x {dim} dims"
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite model parameter".into()));
        }
        Ok(Self { classes, dim, weights, bias })
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weight_row(&self, c: usize) -> &[f64] {
        &self.weights[c * self.dim..(c + 1) * self.dim]
    }

    /// Multiplies every weight and bias by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            classes: self.classes,
            dim: self.dim,
            weights: self.weights.iter().map(|w| w * factor).collect(),
            bias: self.bias.iter().map(|b| b * factor).collect(),
        }
    }

    fn probabilities_into(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let row = self.weight_row(c);
            *o = self.bias[c] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        softmax_in_place(out);
    }
}

fn softmax_in_place(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        total += *s;
    }
    for s in scores.iter_mut() {
        *s /= total;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Inverse of the usual `C` regularization weight.
    pub l2_strength: f64,
    /// Upper bound on the step size; the step is also capped by the inverse
    /// smoothness bound of the objective.
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Stop once the gradient norm falls below this.
    pub tolerance: f64,
    /// Unused by the deterministic solver (zero initialization); kept so run
    /// configurations are self-describing.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { l2_strength: 1.0, learning_rate: 1.0, max_epochs: 1000, tolerance: 1e-6, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2_strength >= 0.0 && self.l2_strength.is_finite()) {
            return Err(Error::InvalidArgument(format!("l2 strength must be >= 0, got {}", self.l2_strength)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be > 0, got {}", self.learning_rate)));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidArgument("max_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Regularized cross-entropy over a fixed design matrix.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    features: &'a [f64],
    labels: &'a [usize],
    dim: usize,
    classes: usize,
    l2_strength: f64,
}

impl<'a> Objective<'a> {
    /// `features` is row-major `n x dim`; `labels` has `n` entries `< classes`.
    pub fn new(features: &'a [f64], labels: &'a [usize], dim: usize, classes: usize, l2_strength: f64) -> Result<Self> {
        if features.len() != labels.len() * dim {
            return Err(Error::ShapeMismatch(format!(
                "{} feature values for {} rows of dim {dim}",
                features.len(),
                labels.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::InvalidData("empty training set".into()));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::InvalidData(format!("label {bad} >= class count {classes}")));
        }
        Ok(Self { features, labels, dim, classes, l2_strength })
    }

    fn n(&self) -> usize {
        self.labels.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    fn penalty(&self, model: &LogRegModel) -> f64 {
        let sq: f64 = model.weights.iter().map(|w| w * w).sum();
        0.5 * self.l2_strength / self.n() as f64 * sq
    }

    pub fn loss(&self, model: &LogRegModel) -> f64 {
        let mut probs = vec![0.0; self.classes];
        let mut ce = 0.0;
        for i in 0..self.n() {
            model.probabilities_into(self.row(i), &mut probs);
            ce -= probs[self.labels[i]].max(f64::MIN_POSITIVE).ln();
        }
        ce / self.n() as f64 + self.penalty(model)
    }

    /// Loss and its gradient, the latter shaped like the model.
    pub fn loss_and_gradient(&self, model: &LogRegModel) -> (f64, LogRegModel) {
        let n = self.n() as f64;
        let mut grad = LogRegModel::zeros(self.classes, self.dim);
        let mut probs = vec![0.0; self.classes];
        let mut ce = 0.0;
        for i in 0..self.n() {
            let x = self.row(i);
            model.probabilities_into(x, &mut probs);
            let y = self.labels[i];
            ce -= probs[y].max(f64::MIN_POSITIVE).ln();
            for c in 0..self.classes {
                let residual = probs[c] - if c == y { 1.0 } else { 0.0 };
                grad.bias[c] += residual;
                let g = &mut grad.weights[c * self.dim..(c + 1) * self.dim];
                for (gj, xj) in g.iter_mut().zip(x) {
                    *gj += residual * xj;
                }
            }
        }
        let reg = self.l2_strength / n;
        for (g, w) in grad.weights.iter_mut().zip(&model.weights) {
            *g = *g / n + reg * w;
        }
        for g in &mut grad.bias {
            *g /= n;
        }
        (ce / n + self.penalty(model), grad)
    }

    /// Upper bound on the Lipschitz constant of the gradient: the softmax
    /// Hessian block is bounded by 1/2, the design term by the mean squared
    /// row norm (bias column included).
    pub fn smoothness_bound(&self) -> f64 {
        let mean_sq: f64 = (0..self.n())
            .map(|i| 1.0 + self.row(i).iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            / self.n() as f64;
        0.5 * mean_sq + self.l2_strength / self.n() as f64
    }
}

/// Per-dimension mean and scale estimated on the training rows.
#[derive(Debug, Clone, PartialEq)]
struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(z: &EmbeddingMatrix, rows: &[usize]) -> Self {
        let d = z.dim();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for &i in rows {
            for (m, v) in mean.iter_mut().zip(z.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for &i in rows {
            for ((s, v), m) in var.iter_mut().zip(z.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 { sd } else { 1.0 }
            })
            .collect();
        Self { mean, scale }
    }

    fn transform(&self, z: &EmbeddingMatrix, rows: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(rows.len() * z.dim());
        for &i in rows {
            out.extend(z.row(i).iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s));
        }
        out
    }

    /// Rewrites a model fitted on standardized rows to act on raw rows.
    fn fold(&self, model: LogRegModel) -> LogRegModel {
        let mut folded = model.clone();
        for c in 0..model.classes {
            let mut shift = 0.0;
            for j in 0..model.dim {
                let w = model.weights[c * model.dim + j] / self.scale[j];
                folded.weights[c * model.dim + j] = w;
                shift += w * self.mean[j];
            }
            folded.bias[c] = model.bias[c] - shift;
        }
        folded
    }
}

fn labels_on(labels: &[Option<usize>], rows: &[usize], what: &str) -> Result<Vec<usize>> {
    rows.iter()
        .map(|&i| {
            labels
                .get(i)
                .copied()
                .flatten()
                .ok_or_else(|| Error::InvalidData(format!("{what} node {i} has no label")))
        })
        .collect()
}

/// Trains on the nodes of `split.train`.
pub fn train_logreg(
    z: &EmbeddingMatrix,
    labels: &[Option<usize>],
    num_classes: usize,
    split: &SplitSpec,
    config: &TrainConfig,
) -> Result<LogRegModel> {
    train_logreg_traced(z, labels, num_classes, split, config).map(|(m, _)| m)
}

/// Like [`train_logreg`], also returning the objective value before each
/// epoch's update (first entry: the zero model).
pub fn train_logreg_traced(
    z: &EmbeddingMatrix,
    labels: &[Option<usize>],
    num_classes: usize,
    split: &SplitSpec,
    config: &TrainConfig,
) -> Result<(LogRegModel, Vec<f64>)> {
    config.validate()?;
    if split.num_nodes() != z.num_nodes() || labels.len() != z.num_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "split covers {} nodes, labels {}, embedding {}",
            split.num_nodes(),
            labels.len(),
            z.num_nodes()
        )));
    }
    let rows = split.train_indices();
    if rows.is_empty() {
        return Err(Error::InvalidData("training mask is empty".into()));
    }
    let y = labels_on(labels, &rows, "training")?;
    if y.iter().all(|&c| c == y[0]) {
        return Err(Error::InvalidData(format!("training set contains only class {}", y[0])));
    }
    let standardizer = Standardizer::fit(z, &rows);
    let x = standardizer.transform(z, &rows);
    let objective = Objective::new(&x, &y, z.dim(), num_classes, config.l2_strength)?;
    let step = config.learning_rate.min(1.0 / objective.smoothness_bound());

    let mut model = LogRegModel::zeros(num_classes, z.dim());
    let mut trace = Vec::new();
    for _ in 0..config.max_epochs {
        let (loss, grad) = objective.loss_and_gradient(&model);
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite training loss at epoch {}", trace.len())));
        }
        trace.push(loss);
        let grad_norm = grad.weights.iter().chain(&grad.bias).map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm < config.tolerance {
            break;
        }
        for (w, g) in model.weights.iter_mut().zip(&grad.weights) {
            *w -= step * g;
        }
        for (b, g) in model.bias.iter_mut().zip(&grad.bias) {
            *b -= step * g;
        }
    }
    let folded = standardizer.fold(model);
    if folded.weights.iter().chain(&folded.bias).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite model parameters after training".into()));
    }
    Ok((folded, trace))
}

/// Softmax outputs for the masked nodes, in ascending node order.
pub fn predict_proba(model: &LogRegModel, z: &EmbeddingMatrix, mask: &[bool]) -> Result<OutputMatrix> {
    if model.dim != z.dim() {
        return Err(Error::ShapeMismatch(format!("model expects dim {}, embedding has {}", model.dim, z.dim())));
    }
    if mask.len() != z.num_nodes() {
        return Err(Error::ShapeMismatch(format!("mask length {} vs {} nodes", mask.len(), z.num_nodes())));
    }
    let rows = mask_indices(mask);
    let mut values = vec![0.0; rows.len() * model.classes];
    for (slot, &i) in values.chunks_mut(model.classes.max(1)).zip(&rows) {
        model.probabilities_into(z.row(i), slot);
    }
    OutputMatrix::new(rows.len(), model.classes, values)
}

pub fn accuracy(o: &OutputMatrix, labels: &LabelVector) -> Result<f64> {
    Ok(1.0 - error_rate(o, labels)?)
}

/// Labels of the masked nodes in ascending node order.
pub fn mask_labels(labels: &[Option<usize>], mask: &[bool]) -> Result<LabelVector> {
    labels_on(labels, &mask_indices(mask), "evaluated").map(LabelVector::new)
}

#[derive(Debug, Clone, PartialEq)]
pub struct L2Selection {
    pub l2_strength: f64,
    /// Validation accuracy per grid point, in grid order.
    pub val_accuracy: Vec<f64>,
}

/// Picks the grid value with the best validation accuracy; ties go to the
/// stronger regularization.
pub fn select_l2(
    z: &EmbeddingMatrix,
    labels: &[Option<usize>],
    num_classes: usize,
    split: &SplitSpec,
    grid: &[f64],
    base: &TrainConfig,
) -> Result<L2Selection> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty regularization grid".into()));
    }
    if !split.val.iter().any(|&b| b) {
        return Err(Error::InvalidData("validation mask is empty".into()));
    }
    let val_labels = mask_labels(labels, &split.val)?;
    let mut val_accuracy = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, f64)> = None;
    for &l2 in grid {
        let config = TrainConfig { l2_strength: l2, ..base.clone() };
        let model = train_logreg(z, labels, num_classes, split, &config)?;
        let acc = accuracy(&predict_proba(&model, z, &split.val)?, &val_labels)?;
        val_accuracy.push(acc);
        best = match best {
            Some((b_acc, b_l2)) if b_acc > acc || (b_acc == acc && b_l2 >= l2) => Some((b_acc, b_l2)),
            _ => Some((acc, l2)),
        };
    }
    Ok(L2Selection { l2_strength: best.map(|b| b.1).unwrap_or(grid[0]), val_accuracy })
}

/// The inverse-regularization grid `C = 10^i, -8 <= i <= 5`, as l2 strengths.
pub fn default_l2_grid() -> Vec<f64> {
    (-8..=5).map(|i| 1.0 / 10f64.powi(i)).collect()
}

const MODEL_MAGIC: &str = "LRM1";

/// Writes `LRM1 <C> <D>`, then `C` weight rows and one bias row.
pub fn write_model(model: &LogRegModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = format!("{MODEL_MAGIC} {} {}\n", model.classes, model.dim);
    let line = |vals: &[f64]| vals.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(" ");
    for c in 0..model.classes {
        let _ = writeln!(text, "{}", line(model.weight_row(c)));
    }
    let _ = writeln!(text, "{}", line(&model.bias));
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<LogRegModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (classes, dim) = parse_header(path, lines.next(), MODEL_MAGIC)?;
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let mut vals = Vec::new();
        parse_floats(path, idx + 1, line.split_whitespace(), &mut vals)?;
        let expected = if rows.len() < classes { dim } else { classes };
        if vals.len() != expected || rows.len() > classes {
            return Err(Error::parse(path, idx + 1, "unexpected row shape"));
        }
        rows.push(vals);
    }
    if rows.len() != classes + 1 {
        return Err(Error::parse(path, 1, format!("expected {} rows after header, got {}", classes + 1, rows.len())));
    }
    let bias = rows.pop().unwrap_or_default();
    LogRegModel::new(classes, dim, rows.concat(), bias)
}
