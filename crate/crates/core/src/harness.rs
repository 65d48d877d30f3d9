//! Multi-seed dimension sweeps.
//!
//! For every dimension in the grid the sweep produces `R` embeddings (seeds
//! `base_seed + run`), fits one classifier per embedding, then evaluates the
//! selected measures over all `R(R-1)/2` unordered run pairs plus the stable
//! core of the whole group.
//!
//! Work is split into two parallel phases per dimension (runs, then pairs).
//! Results are collected in index order and reduced sequentially, so the
//! report does not depend on the number of workers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{self, default_l2_grid, TrainConfig};
use crate::embed::{self, EmbeddingMatrix, Node2vecConfig};
use crate::error::{Error, Result};
use crate::funcsim::{self, LabelVector, OutputMatrix};
use crate::graph::{self, Graph, SbmConfig, SplitSpec};
use crate::measure::{Measure, MeasureKind};
use crate::numeric::{fmt_f64, CompensatedSum};
use crate::repsim::{self, NeighborIndex, DEFAULT_K};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sbm: Option<SbmConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_nodes: Option<usize>,
}

impl DatasetSpec {
    pub fn has_graph(&self) -> bool {
        self.sbm.is_some() || self.edges.is_some()
    }

    pub fn load(&self) -> Result<Graph> {
        match (&self.sbm, &self.edges) {
            (Some(sbm), None) => graph::generate_sbm(sbm),
            (None, Some(edges)) => {
                let g = graph::load_edge_list(edges, self.num_nodes)?;
                match &self.labels {
                    Some(labels) => graph::load_labels(labels, g),
                    None => Ok(g),
                }
            }
            _ => Err(Error::InvalidArgument(format!(
                "dataset {:?}: give exactly one of `sbm` or `edges`",
                self.name
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MethodSpec {
    #[serde(alias = "node2vec_lite")]
    Node2vec,
    Spectral,
    /// Precomputed `<name>_d<dim>_s<run>.emb` (and `.out`) files.
    External {
        dir: PathBuf,
        name: String,
        /// Labels of the evaluated instances, in `.out` row order.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        labels: Option<PathBuf>,
    },
}

impl MethodSpec {
    pub fn label(&self) -> &str {
        match self {
            MethodSpec::Node2vec => "node2vec",
            MethodSpec::Spectral => "spectral",
            MethodSpec::External { name, .. } => name,
        }
    }
}

/// How the classifier's regularization strength is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tuning {
    /// Select on run 0's validation split separately at every dimension.
    #[default]
    PerDim,
    /// Select once at the grid dimension nearest to the anchor, reuse everywhere.
    Anchor(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub fractions: (f64, f64, f64),
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { fractions: (0.7, 0.1, 0.2), seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidArgument(format!("unknown report format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub format: ReportFormat,
}

fn default_runs() -> usize {
    30
}

fn default_k() -> usize {
    DEFAULT_K
}

fn all_measures() -> Vec<Measure> {
    Measure::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub dataset: DatasetSpec,
    pub method: MethodSpec,
    /// Walk and SGNS settings; `dim` and `seed` are overridden per run.
    #[serde(default)]
    pub node2vec: Node2vecConfig,
    pub dims: Vec<usize>,
    #[serde(default = "default_runs")]
    pub runs_per_dim: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "all_measures")]
    pub measures: Vec<Measure>,
    #[serde(default = "default_k")]
    pub knn_k: usize,
    #[serde(default = "default_l2_grid")]
    pub l2_grid: Vec<f64>,
    #[serde(default)]
    pub tuning: Tuning,
    #[serde(default)]
    pub classifier: TrainConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Fill `elapsed_seconds`; off by default because timings make reports
    /// differ between otherwise identical runs.
    #[serde(default)]
    pub record_timing: bool,
    /// Write embeddings here between phases instead of keeping all runs of a
    /// dimension in memory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spill_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

impl SweepConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: SweepConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Parses and validates a config file. Relative paths inside it are
    /// resolved against the file's directory.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: SweepConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        config.dataset.edges.as_mut().map(resolve);
        config.dataset.labels.as_mut().map(resolve);
        if let MethodSpec::External { dir, labels, .. } = &mut config.method {
            resolve(dir);
            labels.as_mut().map(resolve);
        }
        config.spill_dir.as_mut().map(resolve);
        if let Some(out) = config.output.as_mut() {
            resolve(&mut out.path);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        if self.dims.is_empty() || self.dims.contains(&0) {
            return fail("dims must be nonempty and positive".into());
        }
        if self.dims.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!("dims must be strictly increasing, got {:?}", self.dims));
        }
        if self.runs_per_dim < 2 {
            return fail(format!("runs_per_dim must be at least 2, got {}", self.runs_per_dim));
        }
        if self.measures.is_empty() {
            return fail("no measures selected".into());
        }
        if self.knn_k == 0 {
            return fail("knn_k must be at least 1".into());
        }
        if self.workers == Some(0) {
            return fail("workers must be at least 1".into());
        }
        let external = matches!(self.method, MethodSpec::External { .. });
        if !external && !self.dataset.has_graph() {
            return fail(format!("dataset {:?} needs `sbm` or `edges`", self.dataset.name));
        }
        if self.dataset.sbm.is_some() && self.dataset.edges.is_some() {
            return fail("dataset: give only one of `sbm` or `edges`".into());
        }
        if let Some(sbm) = &self.dataset.sbm {
            sbm.validate()?;
        }
        if !external && self.needs_outputs() {
            if self.l2_grid.is_empty() {
                return fail("l2_grid must not be empty".into());
            }
            if self.l2_grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return fail("l2_grid values must be finite and nonnegative".into());
            }
            self.classifier.validate()?;
        }
        if matches!(self.method, MethodSpec::Node2vec) {
            Node2vecConfig { dim: self.dims[0], ..self.node2vec.clone() }.validate()?;
        }
        let (ft, fv, fe) = self.split.fractions;
        if [ft, fv, fe].iter().any(|f| !(f.is_finite() && *f >= 0.0)) || ft + fv + fe > 1.0 + 1e-9 {
            return fail(format!("split fractions invalid: {:?}", self.split.fractions));
        }
        Ok(())
    }

    fn selected(&self) -> Vec<Measure> {
        Measure::ALL.into_iter().filter(|m| self.measures.contains(m)).collect()
    }

    fn needs_outputs(&self) -> bool {
        self.measures.iter().any(|m| m.kind() != MeasureKind::Representational)
    }

    fn needs_neighbors(&self) -> bool {
        self.measures.iter().any(|m| matches!(m, Measure::KnnJaccard | Measure::SecondCos))
    }

    fn anchor_dim(&self) -> Option<usize> {
        match self.tuning {
            Tuning::PerDim => None,
            Tuning::Anchor(anchor) => self
                .dims
                .iter()
                .copied()
                .min_by_key(|&d| (d.abs_diff(anchor), d)),
        }
    }
}

/// Marks attached to report rows at the best-accuracy dimension and at
/// dimensions within 0.01 accuracy of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimumFlag {
    #[default]
    None,
    NearOptimal,
    /// Best dimension; implies near-optimal.
    Optimal,
}

impl OptimumFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimumFlag::None => "",
            OptimumFlag::NearOptimal => "near_optimal",
            OptimumFlag::Optimal => "optimal",
        }
    }

    pub fn is_near_optimal(self) -> bool {
        self != OptimumFlag::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub dataset: String,
    pub method: String,
    pub dim: usize,
    pub measure: Measure,
    /// `None` on error rows.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// Pairs for pairwise measures, runs for accuracy, 1 for stable core.
    pub n: usize,
    #[serde(default)]
    pub optimal_flag: OptimumFlag,
    pub elapsed_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StabilityReport {
    pub rows: Vec<ReportRow>,
}

impl StabilityReport {
    pub fn find(&self, dim: usize, measure: Measure) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.dim == dim && r.measure == measure)
    }
}

/// Arithmetic mean and population standard deviation, both compensated.
pub fn pairwise_aggregate(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("cannot aggregate an empty list".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().copied().collect::<CompensatedSum>().value() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).collect::<CompensatedSum>().value() / n;
    Ok((mean, var.sqrt()))
}

/// Flags, per (dataset, method), the dimension with the highest mean
/// accuracy (ties: smallest dimension) and every dimension within 0.01 of it.
pub fn mark_optimum(mut report: StabilityReport) -> Result<StabilityReport> {
    let mut best: BTreeMap<(String, String), Vec<(usize, f64)>> = BTreeMap::new();
    for row in &report.rows {
        if let (Measure::Accuracy, Some(mean)) = (row.measure, row.mean) {
            best.entry((row.dataset.clone(), row.method.clone())).or_default().push((row.dim, mean));
        }
    }
    if best.is_empty() {
        return Err(Error::InvalidData("report has no accuracy rows".into()));
    }
    let mut flags: BTreeMap<(String, String, usize), OptimumFlag> = BTreeMap::new();
    for ((dataset, method), mut accs) in best {
        accs.sort_by(|a, b| a.0.cmp(&b.0));
        let (opt_dim, opt_acc) = accs
            .iter()
            .copied()
            .fold(None::<(usize, f64)>, |acc, (d, a)| match acc {
                Some((_, best)) if best >= a => acc,
                _ => Some((d, a)),
            })
            .expect("nonempty");
        for (dim, acc) in accs {
            let flag = if dim == opt_dim {
                OptimumFlag::Optimal
            } else if acc >= opt_acc - 0.01 {
                OptimumFlag::NearOptimal
            } else {
                OptimumFlag::None
            };
            flags.insert((dataset.clone(), method.clone(), dim), flag);
        }
    }
    for row in &mut report.rows {
        let key = (row.dataset.clone(), row.method.clone(), row.dim);
        row.optimal_flag = flags.get(&key).copied().unwrap_or_default();
    }
    Ok(report)
}

pub const CSV_HEADER: &str = "dataset,method,dim,measure,mean,std,n,optimal_flag,elapsed_seconds";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn report_to_csv(report: &StabilityReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            csv_field(&r.dataset),
            csv_field(&r.method),
            r.dim,
            r.measure,
            opt(r.mean),
            opt(r.std),
            r.n,
            r.optimal_flag.as_str(),
            fmt_f64(r.elapsed_seconds)
        );
    }
    out
}

pub fn render_report(report: &StabilityReport, format: ReportFormat) -> Result<String> {
    Ok(match format {
        ReportFormat::Csv => report_to_csv(report),
        ReportFormat::Json => serde_json::to_string_pretty(report)? + "\n",
    })
}

pub fn emit_report(report: &StabilityReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_report(report, format)?).map_err(|e| Error::io(path, e))
}

pub fn read_report_json(path: impl AsRef<Path>) -> Result<StabilityReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// An embedding kept in memory or spilled to disk.
#[derive(Debug, Clone)]
enum Stored {
    Memory(Arc<EmbeddingMatrix>),
    Disk(PathBuf),
}

impl Stored {
    fn load(&self) -> Result<Arc<EmbeddingMatrix>> {
        match self {
            Stored::Memory(m) => Ok(Arc::clone(m)),
            Stored::Disk(p) => embed::read_embedding(p).map(Arc::new),
        }
    }
}

struct RunArtifacts {
    embedding: Stored,
    neighbors: Option<NeighborIndex>,
    output: Option<Result<OutputMatrix>>,
    accuracy: Option<Result<f64>>,
}

/// `<dir>/<name>_d<dim>_s<run>.<ext>` for external methods.
pub fn external_file(method: &MethodSpec, dim: usize, run: usize, ext: &str) -> Option<PathBuf> {
    match method {
        MethodSpec::External { dir, name, .. } => Some(dir.join(format!("{name}_d{dim}_s{run}.{ext}"))),
        _ => None,
    }
}

/// Dataset-level state shared by every dimension.
struct Context<'a> {
    config: &'a SweepConfig,
    graph: Option<Graph>,
    split: Option<SplitSpec>,
    eval_labels: Option<LabelVector>,
}

impl Context<'_> {
    fn graph(&self) -> Result<&Graph> {
        self.graph.as_ref().ok_or_else(|| Error::InvalidData("sweep needs a graph for this method".into()))
    }

    fn labels(&self) -> Result<(&[Option<usize>], usize, &SplitSpec)> {
        let g = self.graph()?;
        let labels = g.labels().ok_or_else(|| Error::InvalidData("dataset has no labels".into()))?;
        let split = self.split.as_ref().ok_or_else(|| Error::InvalidData("no split".into()))?;
        Ok((labels, g.num_classes().unwrap_or(0), split))
    }

    fn seed(&self, run: usize) -> u64 {
        self.config.base_seed.wrapping_add(run as u64)
    }

    fn external_path(&self, dim: usize, run: usize, ext: &str) -> Option<PathBuf> {
        external_file(&self.config.method, dim, run, ext)
    }

    fn embed(&self, dim: usize, run: usize) -> Result<EmbeddingMatrix> {
        match &self.config.method {
            MethodSpec::Node2vec => {
                let cfg = Node2vecConfig { dim, seed: self.seed(run), ..self.config.node2vec.clone() };
                embed::node2vec_lite(self.graph()?, &cfg)
            }
            MethodSpec::Spectral => embed::spectral_embed(self.graph()?, dim),
            MethodSpec::External { .. } => {
                let path = self.external_path(dim, run, "emb").expect("external");
                let m = embed::read_embedding(&path)?;
                if m.dim() != dim {
                    return Err(Error::InvalidData(format!("{}: dim {} but expected {dim}", path.display(), m.dim())));
                }
                Ok(m)
            }
        }
    }

    fn select_l2(&self, z: &EmbeddingMatrix) -> Result<f64> {
        let (labels, classes, split) = self.labels()?;
        let sel = classify::select_l2(z, labels, classes, split, &self.config.l2_grid, &self.config.classifier)?;
        log::info!("selected l2 strength {} (val accuracies {:?})", sel.l2_strength, sel.val_accuracy);
        Ok(sel.l2_strength)
    }

    fn classify(&self, z: &EmbeddingMatrix, l2: f64) -> Result<(OutputMatrix, f64)> {
        let (labels, classes, split) = self.labels()?;
        let cfg = TrainConfig { l2_strength: l2, ..self.config.classifier.clone() };
        let model = classify::train_logreg(z, labels, classes, split, &cfg)?;
        let out = classify::predict_proba(&model, z, &split.test)?;
        let acc = classify::accuracy(&out, self.eval_labels.as_ref().expect("labels"))?;
        Ok((out, acc))
    }

    fn external_output(&self, dim: usize, run: usize) -> Result<(OutputMatrix, Option<f64>)> {
        let path = self.external_path(dim, run, "out").expect("external");
        let out = funcsim::read_output(path)?;
        let acc = match &self.eval_labels {
            Some(labels) => Some(classify::accuracy(&out, labels)?),
            None => None,
        };
        Ok((out, acc))
    }
}

fn pairs(r: usize) -> Vec<(usize, usize)> {
    (0..r).flat_map(|i| ((i + 1)..r).map(move |j| (i, j))).collect()
}

fn pair_measure(
    measure: Measure,
    a: &RunArtifacts,
    b: &RunArtifacts,
    matrices: Option<&(Arc<EmbeddingMatrix>, Arc<EmbeddingMatrix>)>,
    labels: Option<&LabelVector>,
) -> Result<f64> {
    let embeddings = || matrices.map(|(x, y)| (x.as_ref(), y.as_ref())).expect("embeddings loaded");
    let outputs = || -> Result<(&OutputMatrix, &OutputMatrix)> {
        match (&a.output, &b.output) {
            (Some(Ok(x)), Some(Ok(y))) => Ok((x, y)),
            (Some(Err(e)), _) | (_, Some(Err(e))) => Err(Error::Numeric(format!("classifier failed: {e}"))),
            _ => Err(Error::InvalidData("no outputs available".into())),
        }
    };
    let neighbors = || (a.neighbors.as_ref().expect("index"), b.neighbors.as_ref().expect("index"));
    match measure {
        Measure::AlignedCos => {
            let (za, zb) = embeddings();
            repsim::aligned_cosine_similarity(za, zb)
        }
        Measure::DistCorr => {
            let (za, zb) = embeddings();
            repsim::distance_correlation(za, zb)
        }
        Measure::KnnJaccard => {
            let (x, y) = neighbors();
            repsim::knn_jaccard_from_indices(x, y)
        }
        Measure::SecondCos => {
            let (x, y) = neighbors();
            let (za, zb) = embeddings();
            repsim::second_order_cosine_with_indices(za, zb, x, y)
        }
        Measure::Disagreement => outputs().and_then(|(x, y)| funcsim::disagreement(x, y)),
        Measure::Jsd => outputs().and_then(|(x, y)| funcsim::mean_jsd(x, y)),
        Measure::NormDisagreement => {
            let labels = labels.ok_or_else(|| Error::InvalidData("norm_disagreement needs labels".into()))?;
            outputs().and_then(|(x, y)| funcsim::minmax_normalized_disagreement(x, y, labels))
        }
        Measure::StableCore | Measure::Accuracy => unreachable!("not a pairwise measure"),
    }
}

/// Runs the whole sweep with a worker pool of `config.workers` threads
/// (default: available parallelism).
pub fn run_sweep(config: &SweepConfig) -> Result<StabilityReport> {
    config.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = config.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    pool.install(|| run_sweep_in_pool(config))
}

fn run_sweep_in_pool(config: &SweepConfig) -> Result<StabilityReport> {
    let external = matches!(config.method, MethodSpec::External { .. });
    let graph = if config.dataset.has_graph() { Some(config.dataset.load()?) } else { None };
    let split = match &graph {
        Some(g) if g.labels().is_some() && config.needs_outputs() => {
            Some(graph::split_nodes(g, config.split.fractions, config.split.seed)?)
        }
        _ => None,
    };
    let eval_labels = match (&config.method, &graph, &split) {
        (MethodSpec::External { labels: Some(path), .. }, _, _) => Some(funcsim::read_instance_labels(path)?),
        (_, Some(g), Some(s)) => Some(classify::mask_labels(g.labels().expect("labels"), &s.test)?),
        _ => None,
    };
    if !external && config.needs_outputs() && eval_labels.is_none() {
        return Err(Error::InvalidData(format!(
            "dataset {:?} has no labels but functional measures were requested",
            config.dataset.name
        )));
    }
    if external {
        for &dim in &config.dims {
            for run in 0..config.runs_per_dim {
                let mut exts = vec!["emb"];
                if config.needs_outputs() {
                    exts.push("out");
                }
                for ext in exts {
                    let path = external_file(&config.method, dim, run, ext).expect("external");
                    if !path.is_file() {
                        return Err(Error::InvalidData(format!("missing external file {}", path.display())));
                    }
                }
            }
        }
    }
    if let Some(dir) = &config.spill_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let ctx = Context { config, graph, split, eval_labels };

    let fixed_l2 = match config.anchor_dim() {
        Some(anchor) if !external && config.needs_outputs() => {
            log::info!("tuning l2 at anchor dim {anchor}");
            Some(ctx.embed(anchor, 0).and_then(|z| ctx.select_l2(&z)))
        }
        _ => None,
    };

    let mut report = StabilityReport::default();
    for &dim in &config.dims {
        report.rows.extend(sweep_dim(&ctx, dim, fixed_l2.as_ref()));
    }
    if config.measures.contains(&Measure::Accuracy) && report.rows.iter().any(|r| r.measure == Measure::Accuracy && r.mean.is_some()) {
        report = mark_optimum(report)?;
    }
    Ok(report)
}

fn error_row(ctx: &Context<'_>, dim: usize, measure: Measure, err: &Error) -> ReportRow {
    log::warn!("{} {} d={dim} {measure}: {err}", ctx.config.dataset.name, ctx.config.method.label());
    ReportRow {
        dataset: ctx.config.dataset.name.clone(),
        method: ctx.config.method.label().to_string(),
        dim,
        measure,
        mean: None,
        std: None,
        n: 0,
        optimal_flag: OptimumFlag::None,
        elapsed_seconds: 0.0,
        error: Some(err.to_string()),
    }
}

fn sweep_dim(ctx: &Context<'_>, dim: usize, fixed_l2: Option<&Result<f64>>) -> Vec<ReportRow> {
    let config = ctx.config;
    let measures = config.selected();
    let r = config.runs_per_dim;
    let external = matches!(config.method, MethodSpec::External { .. });
    let timing = config.record_timing;

    // Phase 1a: embeddings.
    let started = Instant::now();
    let embedded: Result<Vec<(Stored, Option<NeighborIndex>)>> = (0..r)
        .into_par_iter()
        .map(|run| {
            let z = ctx.embed(dim, run)?;
            let neighbors = if config.needs_neighbors() { Some(repsim::knn_index(&z, config.knn_k)?) } else { None };
            let stored = match &config.spill_dir {
                Some(dir) => {
                    let path = dir.join(format!("{}_d{dim}_s{run}.emb", config.method.label()));
                    embed::write_embedding(&z, &path)?;
                    Stored::Disk(path)
                }
                None => Stored::Memory(Arc::new(z)),
            };
            Ok((stored, neighbors))
        })
        .collect();
    let embedded = match embedded {
        Ok(e) => e,
        Err(e) => return measures.iter().map(|&m| error_row(ctx, dim, m, &e)).collect(),
    };
    let embed_seconds = started.elapsed().as_secs_f64();

    // Phase 1b: classifiers.
    let started = Instant::now();
    let l2 = if config.needs_outputs() && !external {
        match fixed_l2 {
            Some(Ok(v)) => Some(Ok(*v)),
            Some(Err(e)) => Some(Err(Error::Numeric(format!("l2 selection failed: {e}")))),
            None => Some(embedded[0].0.load().and_then(|z| ctx.select_l2(&z))),
        }
    } else {
        None
    };
    let runs: Vec<RunArtifacts> = embedded
        .into_par_iter()
        .enumerate()
        .map(|(run, (embedding, neighbors))| {
            let (output, accuracy) = if !config.needs_outputs() {
                (None, None)
            } else if external {
                match ctx.external_output(dim, run) {
                    Ok((o, acc)) => (
                        Some(Ok(o)),
                        Some(acc.ok_or_else(|| Error::InvalidData("accuracy needs instance labels".into()))),
                    ),
                    Err(e) => (Some(Err(Error::InvalidData(e.to_string()))), Some(Err(e))),
                }
            } else {
                let fitted = match l2.as_ref().expect("l2") {
                    Ok(l2) => embedding.load().and_then(|z| ctx.classify(&z, *l2)),
                    Err(e) => Err(Error::Numeric(e.to_string())),
                };
                match fitted {
                    Ok((o, acc)) => (Some(Ok(o)), Some(Ok(acc))),
                    Err(e) => (Some(Err(Error::Numeric(e.to_string()))), Some(Err(e))),
                }
            };
            RunArtifacts { embedding, neighbors, output, accuracy }
        })
        .collect();
    let classify_seconds = started.elapsed().as_secs_f64();

    // Phase 2: pairwise measures.
    let pairwise: Vec<Measure> = measures.iter().copied().filter(|m| m.is_pairwise()).collect();
    let needs_matrices = pairwise.iter().any(|m| m.kind() == MeasureKind::Representational);
    let per_pair: Vec<Vec<(Result<f64>, f64)>> = pairs(r)
        .into_par_iter()
        .map(|(i, j)| {
            // Functional-only sweeps never touch the embeddings.
            let loaded = if needs_matrices {
                runs[i].embedding.load().and_then(|a| Ok(Some((a, runs[j].embedding.load()?))))
            } else {
                Ok(None)
            };
            pairwise
                .iter()
                .map(|&m| {
                    let t = Instant::now();
                    let value = match &loaded {
                        Ok(pair) => pair_measure(m, &runs[i], &runs[j], pair.as_ref(), ctx.eval_labels.as_ref()),
                        Err(e) => Err(Error::InvalidData(e.to_string())),
                    };
                    (value, t.elapsed().as_secs_f64())
                })
                .collect()
        })
        .collect();

    let row = |measure: Measure, values: &[f64], n: usize, secs: f64| -> ReportRow {
        let (mean, std) = pairwise_aggregate(values).expect("nonempty");
        let row = ReportRow {
            dataset: config.dataset.name.clone(),
            method: config.method.label().to_string(),
            dim,
            measure,
            mean: Some(mean),
            std: Some(std),
            n,
            optimal_flag: OptimumFlag::None,
            elapsed_seconds: if timing { secs } else { 0.0 },
            error: None,
        };
        log::info!("{} {} d={dim} {measure}: mean={mean:.6} std={std:.6} n={n}", row.dataset, row.method);
        row
    };

    let mut rows = Vec::new();
    for &measure in &measures {
        match measure.kind() {
            MeasureKind::Representational | MeasureKind::Functional => {
                let slot = pairwise.iter().position(|&m| m == measure).expect("pairwise");
                let mut values = Vec::with_capacity(per_pair.len());
                let mut secs = if measure.kind() == MeasureKind::Representational { embed_seconds } else { classify_seconds };
                let mut failure = None;
                for cell in &per_pair {
                    let (value, t) = &cell[slot];
                    secs += t;
                    match value {
                        Ok(v) => values.push(*v),
                        // Pairs with a perfect model have no defined normalization; leave them out.
                        Err(Error::UndefinedNormalization { .. }) => {}
                        Err(e) => {
                            failure = Some(Error::Numeric(e.to_string()));
                            break;
                        }
                    }
                }
                if let Some(e) = failure {
                    rows.push(error_row(ctx, dim, measure, &e));
                } else if values.is_empty() {
                    let e = Error::UndefinedNormalization { measure: "norm_disagreement", value: 0.0 };
                    rows.push(error_row(ctx, dim, measure, &e));
                } else {
                    let n = values.len();
                    rows.push(row(measure, &values, n, secs));
                }
            }
            MeasureKind::Group => {
                let t = Instant::now();
                let outputs: Result<Vec<&OutputMatrix>> = runs
                    .iter()
                    .map(|a| match &a.output {
                        Some(Ok(o)) => Ok(o),
                        Some(Err(e)) => Err(Error::Numeric(e.to_string())),
                        None => Err(Error::InvalidData("no outputs".into())),
                    })
                    .collect();
                match outputs.and_then(|o| funcsim::stable_core(&o)) {
                    Ok(v) => rows.push(row(measure, &[v], 1, classify_seconds + t.elapsed().as_secs_f64())),
                    Err(e) => rows.push(error_row(ctx, dim, measure, &e)),
                }
            }
            MeasureKind::PerRun => {
                let accs: Result<Vec<f64>> = runs
                    .iter()
                    .map(|a| match &a.accuracy {
                        Some(Ok(v)) => Ok(*v),
                        Some(Err(e)) => Err(Error::Numeric(e.to_string())),
                        None => Err(Error::InvalidData("no accuracy".into())),
                    })
                    .collect();
                match accs {
                    Ok(v) => rows.push(row(measure, &v, v.len(), classify_seconds)),
                    Err(e) => rows.push(error_row(ctx, dim, measure, &e)),
                }
            }
        }
    }
    rows
}
