//! node2vec-style embedder: second-order biased random walks fed into
//! skip-gram with negative sampling.
//!
//! Training is strictly sequential so that the seed alone determines the
//! output. Randomness is split into independent streams for walk sampling,
//! per-epoch walk order, initialization and negative sampling.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Node2vecConfig {
    pub dim: usize,
    pub walks_per_node: usize,
    pub walk_length: usize,
    /// Window radius on each side of the center node.
    pub context_size: usize,
    /// Return parameter.
    pub p: f64,
    /// In-out parameter.
    pub q: f64,
    pub negative_samples: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for Node2vecConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            walks_per_node: 10,
            walk_length: 80,
            context_size: 10,
            p: 1.0,
            q: 1.0,
            negative_samples: 5,
            epochs: 1,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

impl Node2vecConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        if self.dim == 0 {
            return fail("dim must be positive".into());
        }
        if self.context_size >= self.walk_length {
            return fail(format!(
                "context size {} must be smaller than walk length {}",
                self.context_size, self.walk_length
            ));
        }
        if !(self.p > 0.0 && self.q > 0.0) {
            return fail(format!("p and q must be positive, got p={} q={}", self.p, self.q));
        }
        if self.negative_samples == 0 || self.walks_per_node == 0 || self.epochs == 0 {
            return fail("negative_samples, walks_per_node and epochs must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        Ok(())
    }
}

const MIN_LR_FRACTION: f64 = 1e-4;

pub fn node2vec_lite(graph: &Graph, config: &Node2vecConfig) -> Result<EmbeddingMatrix> {
    config.validate()?;
    if graph.num_edges() == 0 {
        return Err(Error::InvalidData("node2vec needs a graph with at least one edge".into()));
    }
    let adj = graph.adjacency();
    let walks = sample_walks(&adj, config);
    let n = graph.num_nodes();
    let dim = config.dim;

    let mut init_rng = rng::stream(config.seed, Stream::EmbeddingInit);
    let half_width = 0.5 / dim as f64;
    let mut input: Vec<f64> = (0..n * dim).map(|_| init_rng.gen_range(-half_width..half_width)).collect();
    let mut output = vec![0.0; n * dim];

    // Noise distribution: degree^(3/4). Isolated nodes have zero weight.
    let weights: Vec<f64> = graph.degrees().iter().map(|&d| (d as f64).powf(0.75)).collect();
    let noise = WeightedIndex::new(&weights)
        .map_err(|e| Error::Numeric(format!("negative-sampling table: {e}")))?;
    let mut neg_rng = rng::stream(config.seed, Stream::NegativeSampling);
    let mut order_rng = rng::stream(config.seed, Stream::WalkOrder);

    let total_positions = (walks.iter().map(Vec::len).sum::<usize>() * config.epochs) as f64;
    let mut processed = 0usize;
    let mut order: Vec<usize> = (0..walks.len()).collect();
    let mut grad = vec![0.0; dim];

    for _ in 0..config.epochs {
        order.shuffle(&mut order_rng);
        for &w in &order {
            let walk = &walks[w];
            for (pos, &center) in walk.iter().enumerate() {
                let progress = processed as f64 / total_positions;
                let lr = config.learning_rate * (1.0 - progress).max(MIN_LR_FRACTION);
                processed += 1;
                let lo = pos.saturating_sub(config.context_size);
                let hi = (pos + config.context_size + 1).min(walk.len());
                for ctx_pos in lo..hi {
                    if ctx_pos == pos {
                        continue;
                    }
                    let context = walk[ctx_pos];
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let center_row = center * dim..(center + 1) * dim;
                    sgns_step(&input[center_row.clone()], &mut output, context, 1.0, lr, &mut grad);
                    for _ in 0..config.negative_samples {
                        let negative = noise.sample(&mut neg_rng);
                        if negative == context {
                            continue;
                        }
                        sgns_step(&input[center_row.clone()], &mut output, negative, 0.0, lr, &mut grad);
                    }
                    for (x, g) in input[center_row].iter_mut().zip(&grad) {
                        *x += g;
                    }
                }
            }
        }
    }
    if input.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("node2vec training diverged".into()));
    }
    EmbeddingMatrix::new(n, dim, input)
}

/// One logistic update against output row `target`; accumulates the input
/// gradient into `grad` and updates the output row in place.
fn sgns_step(center: &[f64], output: &mut [f64], target: usize, label: f64, lr: f64, grad: &mut [f64]) {
    let dim = center.len();
    let out = &mut output[target * dim..(target + 1) * dim];
    let score: f64 = center.iter().zip(out.iter()).map(|(a, b)| a * b).sum();
    let g = (label - sigmoid(score)) * lr;
    for ((acc, o), c) in grad.iter_mut().zip(out.iter_mut()).zip(center) {
        *acc += g * *o;
        *o += g * c;
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Walks of `walk_length` nodes from every non-isolated node, repeated
/// `walks_per_node` times. Transition weights from `cur` (having arrived from
/// `prev`) are `1/p` back to `prev`, `1` to common neighbors of `prev`, and
/// `1/q` otherwise.
fn sample_walks(adj: &[Vec<usize>], config: &Node2vecConfig) -> Vec<Vec<usize>> {
    let mut rng = rng::stream(config.seed, Stream::Walks);
    let starts: Vec<usize> = (0..adj.len()).filter(|&v| !adj[v].is_empty()).collect();
    let unbiased = config.p == 1.0 && config.q == 1.0;
    let mut walks = Vec::with_capacity(starts.len() * config.walks_per_node);
    let mut weights = Vec::new();
    for _ in 0..config.walks_per_node {
        for &start in &starts {
            let mut walk = Vec::with_capacity(config.walk_length);
            walk.push(start);
            while walk.len() < config.walk_length {
                let cur = *walk.last().unwrap();
                let neighbors = &adj[cur];
                let next = if walk.len() == 1 || unbiased {
                    neighbors[rng.gen_range(0..neighbors.len())]
                } else {
                    let prev = walk[walk.len() - 2];
                    weights.clear();
                    weights.extend(neighbors.iter().map(|&x| {
                        if x == prev {
                            1.0 / config.p
                        } else if adj[prev].binary_search(&x).is_ok() {
                            1.0
                        } else {
                            1.0 / config.q
                        }
                    }));
                    neighbors[sample_weighted(&weights, &mut rng)]
                };
                walk.push(next);
            }
            walks.push(walk);
        }
    }
    walks
}

fn sample_weighted<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut target = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if target < *w {
            return i;
        }
        target -= w;
    }
    weights.len() - 1
}
