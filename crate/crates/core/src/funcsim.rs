//! Functional similarity between downstream prediction outputs.
//!
//! Hard predictions are row-wise argmax with ties going to the lowest class
//! index. Jensen-Shannon divergence uses the natural logarithm.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::embed::{parse_floats, parse_header};
use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, fmt_f64};

const ROW_SUM_TOLERANCE: f64 = 1e-6;

/// Probability floor applied before evaluating KL terms.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// `n x C` matrix of class-probability rows.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputMatrix {
    n: usize,
    classes: usize,
    values: Vec<f64>,
}

impl OutputMatrix {
    /// Validates that entries are in `[0, 1]` and every row sums to 1 within 1e-6.
    pub fn new(n: usize, classes: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * classes {
            return Err(Error::ShapeMismatch(format!("{} values for a {n}x{classes} output", values.len())));
        }
        if classes == 0 && n > 0 {
            return Err(Error::InvalidData("output matrix needs at least one class".into()));
        }
        for i in 0..n {
            let row = &values[i * classes..(i + 1) * classes];
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidData(format!("row {i}: probability {v} outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidData(format!("row {i} sums to {sum}, not 1")));
            }
        }
        Ok(Self { n, classes, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let classes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), classes, rows.concat())
    }

    pub fn num_instances(&self) -> usize {
        self.n
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.classes)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.classes..(i + 1) * self.classes]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Ground-truth classes of the evaluated instances.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector(Vec<usize>);

impl LabelVector {
    pub fn new(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    fn check_against(&self, o: &OutputMatrix) -> Result<()> {
        if self.len() != o.num_instances() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} output rows",
                self.len(),
                o.num_instances()
            )));
        }
        if let Some(bad) = self.0.iter().find(|&&c| c >= o.num_classes()) {
            return Err(Error::InvalidData(format!("label {bad} >= class count {}", o.num_classes())));
        }
        Ok(())
    }
}

impl From<Vec<usize>> for LabelVector {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

pub fn hard_predictions(o: &OutputMatrix) -> Vec<usize> {
    (0..o.num_instances()).map(|i| argmax(o.row(i))).collect()
}

fn check_same_shape(a: &OutputMatrix, b: &OutputMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!("outputs have shapes {:?} and {:?}", a.shape(), b.shape())));
    }
    if a.num_instances() == 0 {
        return Err(Error::InvalidData("outputs have no instances".into()));
    }
    Ok(())
}

/// Fraction of instances whose hard predictions differ.
pub fn disagreement(o: &OutputMatrix, o2: &OutputMatrix) -> Result<f64> {
    check_same_shape(o, o2)?;
    let differ = hard_predictions(o)
        .iter()
        .zip(hard_predictions(o2))
        .filter(|(a, b)| **a != *b)
        .count();
    Ok(differ as f64 / o.num_instances() as f64)
}

pub fn error_rate(o: &OutputMatrix, labels: &LabelVector) -> Result<f64> {
    labels.check_against(o)?;
    if labels.is_empty() {
        return Err(Error::InvalidData("no labeled instances".into()));
    }
    let wrong = hard_predictions(o).iter().zip(labels.as_slice()).filter(|(p, y)| p != y).count();
    Ok(wrong as f64 / labels.len() as f64)
}

/// Disagreement rescaled between the smallest and largest values the two
/// error rates allow: `(d - |e1 - e2|) / (min(e1 + e2, 1) - |e1 - e2|)`.
pub fn minmax_normalized_disagreement(o: &OutputMatrix, o2: &OutputMatrix, labels: &LabelVector) -> Result<f64> {
    let d = disagreement(o, o2)?;
    let (e1, e2) = (error_rate(o, labels)?, error_rate(o2, labels)?);
    let d_min = (e1 - e2).abs();
    let d_max = (e1 + e2).min(1.0);
    if d_max - d_min <= 0.0 {
        return Err(Error::UndefinedNormalization { measure: "norm_disagreement", value: d_min });
    }
    Ok((d - d_min) / (d_max - d_min))
}

/// Fraction of instances on which every output in the group predicts the
/// same class.
pub fn stable_core(outputs: &[&OutputMatrix]) -> Result<f64> {
    if outputs.len() < 2 {
        return Err(Error::InvalidArgument(format!("stable core needs at least 2 outputs, got {}", outputs.len())));
    }
    for o in &outputs[1..] {
        check_same_shape(outputs[0], o)?;
    }
    let preds: Vec<Vec<usize>> = outputs.iter().map(|o| hard_predictions(o)).collect();
    let n = outputs[0].num_instances();
    let stable = (0..n).filter(|&i| preds.iter().all(|p| p[i] == preds[0][i])).count();
    Ok(stable as f64 / n as f64)
}

fn floored(row: &[f64]) -> Vec<f64> {
    let clamped: Vec<f64> = row.iter().map(|v| v.clamp(PROBABILITY_FLOOR, 1.0)).collect();
    let total: f64 = clamped.iter().sum();
    clamped.into_iter().map(|v| v / total).collect()
}

fn kl(p: &[f64], m: &[f64]) -> f64 {
    p.iter().zip(m).map(|(&pi, &mi)| if pi == 0.0 { 0.0 } else { pi * (pi / mi).ln() }).sum()
}

/// Mean per-instance Jensen-Shannon divergence, in nats (at most ln 2).
pub fn mean_jsd(o: &OutputMatrix, o2: &OutputMatrix) -> Result<f64> {
    check_same_shape(o, o2)?;
    let per_row = (0..o.num_instances()).map(|i| {
        let (p, q) = (floored(o.row(i)), floored(o2.row(i)));
        let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
        0.5 * (kl(&p, &m) + kl(&q, &m))
    });
    Ok(compensated_sum(per_row) / o.num_instances() as f64)
}

/// Converts a divergence in nats to another logarithm base.
pub fn nats_to_base(value: f64, base: f64) -> f64 {
    value / base.ln()
}

const OUTPUT_MAGIC: &str = "OUT1";

/// Writes `OUT1 <n> <C>` and one row of `C` probabilities per instance.
pub fn write_output(o: &OutputMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = format!("{OUTPUT_MAGIC} {} {}\n", o.n, o.classes);
    for i in 0..o.n {
        let row: Vec<String> = o.row(i).iter().map(|&v| fmt_f64(v)).collect();
        let _ = writeln!(text, "{}", row.join(" "));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_output(path: impl AsRef<Path>) -> Result<OutputMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (n, c) = parse_header(path, lines.next(), OUTPUT_MAGIC)?;
    let mut values = Vec::with_capacity(n * c);
    let mut rows = 0;
    for (idx, line) in lines {
        let before = values.len();
        parse_floats(path, idx + 1, line.split_whitespace(), &mut values)?;
        if values.len() - before != c {
            return Err(Error::parse(path, idx + 1, format!("expected {c} values, got {}", values.len() - before)));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::parse(path, 1, format!("header declares {n} rows, file has {rows}")));
    }
    OutputMatrix::new(n, c, values)
}

/// Reads evaluated-instance labels: `i c` lines with `i` running 0..n in order.
pub fn read_instance_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let parsed = match tokens.as_slice() {
            [i, c] => i.parse::<usize>().ok().zip(c.parse::<usize>().ok()),
            _ => None,
        };
        let (i, c) = parsed.ok_or_else(|| Error::parse(path, idx + 1, format!("expected `instance class`, got {line:?}")))?;
        if i != labels.len() {
            return Err(Error::parse(path, idx + 1, format!("expected instance {}, got {i}", labels.len())));
        }
        labels.push(c);
    }
    Ok(LabelVector(labels))
}

pub fn write_instance_labels(labels: &LabelVector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for (i, c) in labels.as_slice().iter().enumerate() {
        let _ = writeln!(text, "{i} {c}");
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
