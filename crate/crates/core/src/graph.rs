//! Undirected graphs: edge-list and label ingestion, stochastic block model
//! generation, and stratified train/validation/test splits.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// An undirected, unweighted graph with optional node labels.
///
/// Edges are stored canonically as `(u, v)` with `u < v`, sorted and
/// without duplicates. Isolated nodes are allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    labels: Option<Vec<Option<usize>>>,
    num_classes: Option<usize>,
}

impl Graph {
    /// Builds a graph from arbitrary pairs, symmetrizing, dropping self-loops
    /// and collapsing duplicates.
    pub fn from_edges<I>(num_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::InvalidData(format!(
                    "edge ({u}, {v}) out of range for {num_nodes} nodes"
                )));
            }
            if u != v {
                set.insert((u.min(v), u.max(v)));
            }
        }
        Ok(Self { num_nodes, edges: set.into_iter().collect(), labels: None, num_classes: None })
    }

    pub fn empty(num_nodes: usize) -> Self {
        Self { num_nodes, edges: Vec::new(), labels: None, num_classes: None }
    }

    /// Attaches a full labeling. Every label must be `< num_classes`.
    pub fn with_labels(mut self, labels: Vec<Option<usize>>, num_classes: usize) -> Result<Self> {
        if labels.len() != self.num_nodes {
            return Err(Error::InvalidData(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.num_nodes
            )));
        }
        if let Some(bad) = labels.iter().flatten().find(|&&c| c >= num_classes) {
            return Err(Error::InvalidData(format!("label {bad} >= class count {num_classes}")));
        }
        self.labels = Some(labels);
        self.num_classes = Some(num_classes);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn labels(&self) -> Option<&[Option<usize>]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.num_classes
    }

    /// Sorted neighbor lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }
}

/// Counts reported while reading an edge list.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeListStats {
    pub lines: usize,
    pub self_loops: usize,
    pub duplicates: usize,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Yields `(line_number, [a, b])` for every data line of a two-column file.
fn two_column_lines<'a>(
    path: &Path,
    text: &'a str,
) -> impl Iterator<Item = Result<(usize, i64, i64)>> + 'a {
    let path = path.to_path_buf();
    text.lines().enumerate().filter_map(move |(idx, raw)| {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            return None;
        }
        let lineno = idx + 1;
        let mut tokens = line.split_whitespace();
        let parsed = match (tokens.next(), tokens.next(), tokens.next()) {
            (Some(a), Some(b), None) => match (a.parse::<i64>(), b.parse::<i64>()) {
                (Ok(a), Ok(b)) => Ok((lineno, a, b)),
                _ => Err(Error::parse(&path, lineno, format!("expected two integers, got {line:?}"))),
            },
            _ => Err(Error::parse(&path, lineno, format!("expected two tokens, got {line:?}"))),
        };
        Some(parsed)
    })
}

/// Reads a whitespace-separated edge list. Directed inputs are symmetrized.
///
/// With `num_nodes = None` the node count is `max index + 1`.
pub fn load_edge_list(path: impl AsRef<Path>, num_nodes: Option<usize>) -> Result<Graph> {
    load_edge_list_with_stats(path, num_nodes).map(|(g, _)| g)
}

pub fn load_edge_list_with_stats(
    path: impl AsRef<Path>,
    num_nodes: Option<usize>,
) -> Result<(Graph, EdgeListStats)> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let mut stats = EdgeListStats::default();
    let mut raw = Vec::new();
    let mut max_index = None::<usize>;
    for item in two_column_lines(path, &text) {
        let (lineno, a, b) = item?;
        if a < 0 || b < 0 {
            return Err(Error::parse(path, lineno, "negative node index"));
        }
        let (u, v) = (a as usize, b as usize);
        if let Some(n) = num_nodes {
            if u >= n || v >= n {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("node index {} >= declared node count {n}", u.max(v)),
                ));
            }
        }
        stats.lines += 1;
        if u == v {
            stats.self_loops += 1;
            continue;
        }
        max_index = Some(max_index.map_or(u.max(v), |m| m.max(u).max(v)));
        raw.push((u, v));
    }
    let n = num_nodes.unwrap_or_else(|| max_index.map_or(0, |m| m + 1));
    let kept = raw.len();
    let graph = Graph::from_edges(n, raw)?;
    stats.duplicates = kept - graph.num_edges();
    if stats.self_loops > 0 {
        log::warn!("{}: dropped {} self-loop(s)", path.display(), stats.self_loops);
    }
    Ok((graph, stats))
}

/// Writes the canonical edge list, one `u v` pair per line.
pub fn save_edge_list(graph: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(graph.num_edges() * 12);
    for &(u, v) in graph.edges() {
        let _ = writeln!(out, "{u} {v}");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Annotates `graph` with labels from a `node class` file.
///
/// Nodes absent from the file stay unlabeled; the class count is
/// `max class + 1`.
pub fn load_labels(path: impl AsRef<Path>, graph: Graph) -> Result<Graph> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let n = graph.num_nodes();
    let mut labels = vec![None; n];
    let mut max_class = None::<usize>;
    for item in two_column_lines(path, &text) {
        let (lineno, node, class) = item?;
        if node < 0 || node as usize >= n {
            return Err(Error::parse(path, lineno, format!("node index {node} out of range 0..{n}")));
        }
        if class < 0 {
            return Err(Error::parse(path, lineno, format!("negative class {class}")));
        }
        let slot = &mut labels[node as usize];
        if slot.is_some() {
            return Err(Error::parse(path, lineno, format!("duplicate label for node {node}")));
        }
        *slot = Some(class as usize);
        max_class = Some(max_class.map_or(class as usize, |m| m.max(class as usize)));
    }
    let num_classes = max_class.map_or(0, |m| m + 1);
    graph.with_labels(labels, num_classes)
}

pub fn save_labels(graph: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let labels = graph
        .labels()
        .ok_or_else(|| Error::InvalidArgument("graph has no labels".into()))?;
    let mut out = String::new();
    for (node, label) in labels.iter().enumerate() {
        if let Some(c) = label {
            let _ = writeln!(out, "{node} {c}");
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Planted-partition stochastic block model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmConfig {
    pub block_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub seed: u64,
}

impl SbmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_sizes.is_empty() || self.block_sizes.contains(&0) {
            return Err(Error::InvalidArgument("block sizes must be nonempty and positive".into()));
        }
        let ordered = 0.0 <= self.p_out && self.p_out <= self.p_in && self.p_in <= 1.0;
        if !ordered {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= p_out <= p_in <= 1, got p_in={} p_out={}",
                self.p_in, self.p_out
            )));
        }
        Ok(())
    }
}

/// Samples an SBM graph. Nodes are numbered block by block and labeled with
/// their block index.
pub fn generate_sbm(config: &SbmConfig) -> Result<Graph> {
    config.validate()?;
    let blocks: Vec<usize> = config
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| std::iter::repeat(b).take(size))
        .collect();
    let n = blocks.len();
    let mut rng = rng::stream(config.seed, Stream::Sbm);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if blocks[u] == blocks[v] { config.p_in } else { config.p_out };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let labels = blocks.into_iter().map(Some).collect();
    Graph::from_edges(n, edges)?.with_labels(labels, config.block_sizes.len())
}

/// Disjoint node masks for training, validation and testing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl SplitSpec {
    pub fn num_nodes(&self) -> usize {
        self.train.len()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        mask_indices(&self.train)
    }

    pub fn val_indices(&self) -> Vec<usize> {
        mask_indices(&self.val)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        mask_indices(&self.test)
    }
}

pub fn mask_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
}

/// Stratified random split of the labeled nodes.
///
/// Per class, nodes are shuffled and cut at the rounded cumulative
/// fractions, so each part is within one node of its target size. A class
/// with any members always receives at least one training node when the
/// training fraction is positive.
pub fn split_nodes(graph: &Graph, fractions: (f64, f64, f64), seed: u64) -> Result<SplitSpec> {
    let (ft, fv, fe) = fractions;
    if [ft, fv, fe].iter().any(|f| !f.is_finite() || *f < 0.0) || ft + fv + fe > 1.0 + 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be nonnegative and sum to at most 1, got ({ft}, {fv}, {fe})"
        )));
    }
    let labels = graph
        .labels()
        .ok_or_else(|| Error::InvalidArgument("split requires a labeled graph".into()))?;
    let num_classes = graph.num_classes().unwrap_or(0);
    let n = graph.num_nodes();
    let mut split = SplitSpec { train: vec![false; n], val: vec![false; n], test: vec![false; n] };
    let mut rng = rng::stream(seed, Stream::Split);
    for class in 0..num_classes {
        let mut members: Vec<usize> =
            (0..n).filter(|&i| labels[i] == Some(class)).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let size = members.len();
        let cut = |f: f64| ((f * size as f64).round() as usize).min(size);
        let mut b1 = cut(ft);
        if ft > 0.0 && b1 == 0 {
            b1 = 1;
        }
        let b2 = cut(ft + fv).max(b1);
        let b3 = cut(ft + fv + fe).max(b2);
        for (pos, &node) in members.iter().enumerate() {
            if pos < b1 {
                split.train[node] = true;
            } else if pos < b2 {
                split.val[node] = true;
            } else if pos < b3 {
                split.test[node] = true;
            }
        }
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn temp_file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn dedup_and_self_loop() {
        let f = temp_file("0 1\n1 0\n1 1\n");
        let (g, stats) = load_edge_list_with_stats(f.path(), None).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
        assert_eq!(stats.self_loops, 1);
        assert_eq!(stats.duplicates, 1);
        assert_eq!(g.num_nodes(), 2);
    }

    #[test]
    fn empty_file_with_declared_nodes() {
        let f = temp_file("");
        let g = load_edge_list(f.path(), Some(5)).unwrap();
        assert_eq!(g.num_nodes(), 5);
        assert_eq!(g.num_edges(), 0);
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let f = temp_file("# header\n\n0 2\n  # indented comment\n2 3\n");
        let g = load_edge_list(f.path(), None).unwrap();
        assert_eq!(g.edges(), &[(0, 2), (2, 3)]);
        assert_eq!(g.num_nodes(), 4);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = temp_file("0 1\n# c\n1 x\n");
        match load_edge_list(f.path(), None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let f = temp_file("0 1 2\n");
        assert!(matches!(load_edge_list(f.path(), None), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn index_beyond_declared_count() {
        let f = temp_file("0 1\n1 7\n");
        assert!(matches!(load_edge_list(f.path(), Some(5)), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn symmetric_directed_file_halves() {
        // Both directions of every edge present, as in citation dumps.
        let mut text = String::new();
        let pairs = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)];
        for (u, v) in pairs {
            text.push_str(&format!("{u} {v}\n{v} {u}\n"));
        }
        let g = load_edge_list(temp_file(&text).path(), None).unwrap();
        assert_eq!(g.num_edges(), pairs.len());
    }

    #[test]
    fn labels_load() {
        let g = Graph::empty(3);
        let g = load_labels(temp_file("0 0\n1 0\n2 0\n").path(), g).unwrap();
        assert_eq!(g.num_classes(), Some(1));
        let g = Graph::empty(3);
        let g = load_labels(temp_file("0 6\n1 2\n").path(), g).unwrap();
        assert_eq!(g.num_classes(), Some(7));
        assert_eq!(g.labels().unwrap(), &[Some(6), Some(2), None]);
    }

    #[test]
    fn labels_errors() {
        let dup = temp_file("0 0\n1 1\n0 1\n");
        assert!(matches!(load_labels(dup.path(), Graph::empty(3)), Err(Error::Parse { line: 3, .. })));
        let neg = temp_file("0 -1\n");
        assert!(load_labels(neg.path(), Graph::empty(3)).is_err());
        let range = temp_file("3 0\n");
        assert!(load_labels(range.path(), Graph::empty(3)).is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = Graph::from_edges(6, [(5, 0), (1, 2), (2, 1), (3, 4)]).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        save_edge_list(&g, f.path()).unwrap();
        assert_eq!(load_edge_list(f.path(), Some(6)).unwrap(), g);
    }

    #[test]
    fn sbm_forced_cases() {
        let cfg = SbmConfig { block_sizes: vec![10, 10], p_in: 0.0, p_out: 0.0, seed: 3 };
        assert_eq!(generate_sbm(&cfg).unwrap().num_edges(), 0);
        let cfg = SbmConfig { block_sizes: vec![4], p_in: 1.0, p_out: 1.0, seed: 3 };
        let g = generate_sbm(&cfg).unwrap();
        assert_eq!(g.num_edges(), 6);
        assert_eq!(g.num_classes(), Some(1));
    }

    #[test]
    fn sbm_edge_count_near_binomial_mean() {
        let cfg = SbmConfig { block_sizes: vec![150, 150], p_in: 0.1, p_out: 0.01, seed: 7 };
        let g = generate_sbm(&cfg).unwrap();
        // Sum of independent Bernoullis: mean and variance by block pair type.
        let intra_pairs: f64 = 2.0 * (150.0 * 149.0 / 2.0);
        let inter_pairs: f64 = 150.0 * 150.0;
        let mean = intra_pairs * 0.1 + inter_pairs * 0.01;
        let var = intra_pairs * 0.1 * 0.9 + inter_pairs * 0.01 * 0.99;
        assert!((mean - 2460.0).abs() < 1.0);
        let observed = g.num_edges() as f64;
        assert!((observed - mean).abs() < 4.0 * var.sqrt(), "{observed} vs {mean}");
    }

    #[test]
    fn sbm_rejects_bad_config() {
        let cfg = SbmConfig { block_sizes: vec![3], p_in: 0.1, p_out: 0.2, seed: 0 };
        assert!(generate_sbm(&cfg).is_err());
        let cfg = SbmConfig { block_sizes: vec![], p_in: 0.1, p_out: 0.0, seed: 0 };
        assert!(generate_sbm(&cfg).is_err());
    }

    #[test]
    fn sbm_deterministic() {
        let cfg = SbmConfig { block_sizes: vec![30, 20], p_in: 0.3, p_out: 0.05, seed: 11 };
        assert_eq!(generate_sbm(&cfg).unwrap(), generate_sbm(&cfg).unwrap());
        let other = SbmConfig { seed: 12, ..cfg.clone() };
        assert_ne!(generate_sbm(&cfg).unwrap(), generate_sbm(&other).unwrap());
    }

    fn balanced(n: usize) -> Graph {
        let labels = (0..n).map(|i| Some(i % 2)).collect();
        Graph::empty(n).with_labels(labels, 2).unwrap()
    }

    #[test]
    fn split_sizes() {
        let s = split_nodes(&balanced(100), (0.7, 0.1, 0.2), 1).unwrap();
        let count = |m: &[bool]| m.iter().filter(|&&b| b).count();
        assert_eq!((count(&s.train), count(&s.val), count(&s.test)), (70, 10, 20));
        for i in 0..100 {
            assert!(u8::from(s.train[i]) + u8::from(s.val[i]) + u8::from(s.test[i]) <= 1);
        }
    }

    #[test]
    fn split_all_train_and_determinism() {
        let g = balanced(17);
        let s = split_nodes(&g, (1.0, 0.0, 0.0), 4).unwrap();
        assert!(s.train.iter().all(|&b| b));
        assert_eq!(split_nodes(&g, (0.7, 0.1, 0.2), 9).unwrap(), split_nodes(&g, (0.7, 0.1, 0.2), 9).unwrap());
    }

    #[test]
    fn split_tiny_class_keeps_train_node() {
        let labels = vec![Some(0), Some(0), Some(0), Some(0), Some(1)];
        let g = Graph::empty(5).with_labels(labels, 2).unwrap();
        let s = split_nodes(&g, (0.2, 0.4, 0.4), 0).unwrap();
        assert!(s.train[4]);
    }

    #[test]
    fn split_skips_unlabeled() {
        let labels = vec![Some(0), None, Some(1), None];
        let g = Graph::empty(4).with_labels(labels, 2).unwrap();
        let s = split_nodes(&g, (1.0, 0.0, 0.0), 0).unwrap();
        assert_eq!(s.train, vec![true, false, true, false]);
    }

    #[test]
    fn split_rejects_oversubscription() {
        assert!(split_nodes(&balanced(10), (0.7, 0.2, 0.2), 0).is_err());
    }
}
