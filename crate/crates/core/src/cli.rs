//! Command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::classify::{self, TrainConfig};
use crate::embed::{self, Node2vecConfig};
use crate::error::{Error, Result};
use crate::funcsim::{self, OutputMatrix};
use crate::graph::{self, Graph, SbmConfig};
use crate::harness::{self, ReportFormat, SweepConfig};
use crate::measure::{Measure, MeasureKind};
use crate::repsim::{self, DEFAULT_K};

#[derive(Debug, Parser)]
#[command(name = "embstab", version, about = "Stability of node embeddings across dimensions")]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "EMBSTAB_WORKERS")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a stochastic block model graph with block labels.
    Gen(GenArgs),
    /// Train or compute an embedding and write an EMB1 file.
    Embed(EmbedArgs),
    /// Fit a logistic-regression classifier and write an OUT1 file.
    Classify(ClassifyArgs),
    /// Compare two embedding files with a representational measure.
    Repsim(RepsimArgs),
    /// Compare output files with a functional measure.
    Funcsim(FuncsimArgs),
    /// Run a dimension sweep described by a JSON config.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Comma-separated block sizes, e.g. `150,150`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sbm: Vec<usize>,
    #[arg(long)]
    pub p_in: f64,
    #[arg(long)]
    pub p_out: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Edge list output path.
    #[arg(long)]
    pub edges: PathBuf,
    /// Label file output path.
    #[arg(long)]
    pub labels: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EmbedMethod {
    #[value(alias = "node2vec_lite")]
    Node2vec,
    Spectral,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[arg(long, value_enum)]
    pub method: EmbedMethod,
    /// Input edge list.
    #[arg(long)]
    pub edges: PathBuf,
    /// Node count override (default: max index + 1).
    #[arg(long)]
    pub num_nodes: Option<usize>,
    #[arg(long)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output EMB1 path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub walks_per_node: usize,
    #[arg(long, default_value_t = 80)]
    pub walk_length: usize,
    #[arg(long, default_value_t = 10)]
    pub context_size: usize,
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    #[arg(long, default_value_t = 1.0)]
    pub q: f64,
    #[arg(long, default_value_t = 5)]
    pub negative_samples: usize,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.025)]
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskChoice {
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Input EMB1 file.
    #[arg(long)]
    pub emb: PathBuf,
    /// Node label file (`node class` lines).
    #[arg(long)]
    pub labels: PathBuf,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.7, 0.1, 0.2])]
    pub split: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    /// Fixed l2 strength; when absent it is selected on the validation split.
    #[arg(long)]
    pub l2: Option<f64>,
    /// Candidate l2 strengths (default: 1/C for C = 10^-8 .. 10^5).
    #[arg(long, value_delimiter = ',')]
    pub l2_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1000)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Which nodes to write predictions for.
    #[arg(long, value_enum, default_value = "test")]
    pub mask: MaskChoice,
    /// Output OUT1 path.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the labels of the evaluated instances here.
    #[arg(long)]
    pub eval_labels: Option<PathBuf>,
    /// Also write the fitted LRM1 model here.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RepsimArgs {
    /// aligned_cos, dist_corr, knn_jaccard or second_cos.
    #[arg(long)]
    pub measure: Measure,
    /// Neighborhood size for knn_jaccard and second_cos.
    #[arg(long, default_value_t = DEFAULT_K)]
    pub k: usize,
    pub a: PathBuf,
    pub b: PathBuf,
}

#[derive(Debug, Args)]
pub struct FuncsimArgs {
    /// disagreement, norm_disagreement, jsd, stable_core or accuracy.
    #[arg(long)]
    pub measure: Measure,
    /// Instance labels (`instance class` lines) for norm_disagreement and accuracy.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Report jsd in this logarithm base instead of nats.
    #[arg(long)]
    pub log_base: Option<f64>,
    /// OUT1 files: two for pairwise measures, one for accuracy, two or more for stable_core.
    #[arg(required = true)]
    pub outputs: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Report path; overrides the config's `output.path`. Without either, the report goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// writing results to `stdout` and diagnostics to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 { write!(stdout, "{rendered}") } else { write!(stderr, "{rendered}") };
            return code;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Error::InvalidArgument("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    let workers = cli.workers;
    let text = pool.install(|| match cli.command {
        Command::Gen(a) => gen(a).map(|_| String::new()),
        Command::Embed(a) => embed_cmd(a).map(|_| String::new()),
        Command::Classify(a) => classify_cmd(a).map(|_| String::new()),
        Command::Repsim(a) => repsim_cmd(a),
        Command::Funcsim(a) => funcsim_cmd(a),
        Command::Sweep(a) => sweep_cmd(a, workers),
    })?;
    stdout.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn gen(a: GenArgs) -> Result<()> {
    let g = graph::generate_sbm(&SbmConfig { block_sizes: a.sbm, p_in: a.p_in, p_out: a.p_out, seed: a.seed })?;
    graph::save_edge_list(&g, &a.edges)?;
    graph::save_labels(&g, &a.labels)?;
    log::info!("wrote {} nodes, {} edges", g.num_nodes(), g.num_edges());
    Ok(())
}

fn embed_cmd(a: EmbedArgs) -> Result<()> {
    let g = graph::load_edge_list(&a.edges, a.num_nodes)?;
    let z = match a.method {
        EmbedMethod::Spectral => embed::spectral_embed(&g, a.dim)?,
        EmbedMethod::Node2vec => {
            let cfg = Node2vecConfig {
                dim: a.dim,
                walks_per_node: a.walks_per_node,
                walk_length: a.walk_length,
                context_size: a.context_size,
                p: a.p,
                q: a.q,
                negative_samples: a.negative_samples,
                epochs: a.epochs,
                learning_rate: a.learning_rate,
                seed: a.seed,
            };
            embed::node2vec_lite(&g, &cfg)?
        }
    };
    embed::write_embedding(&z, &a.out)
}

fn classify_cmd(a: ClassifyArgs) -> Result<()> {
    let z = embed::read_embedding(&a.emb)?;
    let g = graph::load_labels(&a.labels, Graph::empty(z.num_nodes()))?;
    let labels = g.labels().expect("labels loaded");
    let classes = g.num_classes().unwrap_or(0);
    let split = graph::split_nodes(&g, (a.split[0], a.split[1], a.split[2]), a.split_seed)?;
    let base = TrainConfig { learning_rate: a.learning_rate, max_epochs: a.max_epochs, seed: a.seed, ..TrainConfig::default() };
    let l2 = match a.l2 {
        Some(v) => v,
        None => {
            let grid = a.l2_grid.clone().unwrap_or_else(classify::default_l2_grid);
            classify::select_l2(&z, labels, classes, &split, &grid, &base)?.l2_strength
        }
    };
    let model = classify::train_logreg(&z, labels, classes, &split, &TrainConfig { l2_strength: l2, ..base })?;
    let mask = match a.mask {
        MaskChoice::Train => &split.train,
        MaskChoice::Val => &split.val,
        MaskChoice::Test => &split.test,
    };
    let out = classify::predict_proba(&model, &z, mask)?;
    funcsim::write_output(&out, &a.out)?;
    if let Some(path) = &a.eval_labels {
        funcsim::write_instance_labels(&classify::mask_labels(labels, mask)?, path)?;
    }
    if let Some(path) = &a.model {
        classify::write_model(&model, path)?;
    }
    Ok(())
}

fn tag(measure: Measure) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numeric(msg) => Error::Numeric(format!("{measure}: {msg}")),
        other => other,
    }
}

fn repsim_cmd(a: RepsimArgs) -> Result<String> {
    if a.measure.kind() != MeasureKind::Representational {
        return Err(Error::InvalidArgument(format!("{} is not a representational measure", a.measure)));
    }
    let z = embed::read_embedding(&a.a)?;
    let z2 = embed::read_embedding(&a.b)?;
    let value = match a.measure {
        Measure::AlignedCos => repsim::aligned_cosine_similarity(&z, &z2),
        Measure::DistCorr => repsim::distance_correlation(&z, &z2),
        Measure::KnnJaccard => repsim::knn_jaccard(&z, &z2, a.k),
        Measure::SecondCos => repsim::second_order_cosine(&z, &z2, a.k),
        _ => unreachable!(),
    }
    .map_err(tag(a.measure))?;
    Ok(format!("{value:?}\n"))
}

fn funcsim_cmd(a: FuncsimArgs) -> Result<String> {
    if a.measure.kind() == MeasureKind::Representational {
        return Err(Error::InvalidArgument(format!("{} is not a functional measure", a.measure)));
    }
    let outputs: Vec<OutputMatrix> = a.outputs.iter().map(funcsim::read_output).collect::<Result<_>>()?;
    let labels = a.labels.as_ref().map(funcsim::read_instance_labels).transpose()?;
    let need_labels = || labels.as_ref().ok_or_else(|| Error::InvalidArgument(format!("{} requires --labels", a.measure)));
    let pair = || match outputs.as_slice() {
        [x, y] => Ok((x, y)),
        _ => Err(Error::InvalidArgument(format!("{} takes exactly two output files", a.measure))),
    };
    let value = match a.measure {
        Measure::Disagreement => pair().and_then(|(x, y)| funcsim::disagreement(x, y)),
        Measure::NormDisagreement => {
            let labels = need_labels()?;
            pair().and_then(|(x, y)| funcsim::minmax_normalized_disagreement(x, y, labels))
        }
        Measure::Jsd => pair().and_then(|(x, y)| funcsim::mean_jsd(x, y)).map(|v| match a.log_base {
            Some(base) => funcsim::nats_to_base(v, base),
            None => v,
        }),
        Measure::StableCore => funcsim::stable_core(&outputs.iter().collect::<Vec<_>>()),
        Measure::Accuracy => match outputs.as_slice() {
            [o] => classify::accuracy(o, need_labels()?),
            _ => Err(Error::InvalidArgument("accuracy takes exactly one output file".into())),
        },
        _ => unreachable!(),
    }
    .map_err(tag(a.measure))?;
    Ok(format!("{value:?}\n"))
}

fn sweep_cmd(a: SweepArgs, workers: Option<usize>) -> Result<String> {
    let mut config = SweepConfig::from_json_file(&a.config)?;
    if workers.is_some() {
        config.workers = workers;
    }
    let format = a
        .format
        .map(ReportFormat::from)
        .or(config.output.as_ref().map(|o| o.format))
        .unwrap_or_default();
    let path = a.out.clone().or_else(|| config.output.as_ref().map(|o| o.path.clone()));
    let report = harness::run_sweep(&config)?;
    match path {
        Some(path) => harness::emit_report(&report, format, path).map(|_| String::new()),
        None => harness::render_report(&report, format),
    }
}
