//! Monte-Carlo tree search over learned-model rollouts, plus a brute-force
//! enumeration planner used as a testing oracle. The search only ever calls
//! the model's inference entry points, never an environment.

use rand::Rng;
use rand_distr::{Dirichlet, Distribution};

use crate::model::Inference;
use crate::nn::softmax;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct MctsConfig {
    pub num_simulations: usize,
    pub discount: f64,
    pub c1: f64,
    pub c2: f64,
    pub dirichlet_alpha: f64,
    pub exploration_fraction: f64,
}

impl MctsConfig {
    pub fn new(num_simulations: usize, discount: f64) -> Self {
        MctsConfig {
            num_simulations,
            discount,
            c1: 1.25,
            c2: 19652.0,
            dirichlet_alpha: 0.25,
            exploration_fraction: 0.25,
        }
    }
}

/// Per-action edge statistics of one node.
#[derive(Debug, Clone)]
pub struct Edge {
    pub prior: f64,
    pub visit_count: u32,
    pub q: f64,
    pub reward: f64,
    pub child: Option<usize>,
}

/// Arena node: a latent state plus one edge per action.
#[derive(Debug, Clone)]
pub struct Node {
    pub latent: Vec<f64>,
    pub edges: Vec<Edge>,
}

impl Node {
    /// Builds an expanded node from a latent and its policy logits; child
    /// edges start with N = 0, Q = 0 and softmax priors.
    pub fn expanded(latent: Vec<f64>, policy_logits: &[f64]) -> Result<Node> {
        let priors = softmax(policy_logits, 1.0)?;
        let edges = priors
            .into_iter()
            .map(|prior| Edge {
                prior,
                visit_count: 0,
                q: 0.0,
                reward: 0.0,
                child: None,
            })
            .collect();
        Ok(Node { latent, edges })
    }

    pub fn visit_counts(&self) -> Vec<u32> {
        self.edges.iter().map(|e| e.visit_count).collect()
    }
}

/// Running min/max over all Q values observed in the current tree.
#[derive(Debug, Clone)]
pub struct MinMaxStats {
    pub min: f64,
    pub max: f64,
}

impl MinMaxStats {
    pub fn new() -> Self {
        MinMaxStats {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    pub fn update(&mut self, q: f64) {
        self.min = self.min.min(q);
        self.max = self.max.max(q);
    }

    /// Min-max normalization; the degenerate interval (max <= min, e.g. the
    /// first simulation) returns q unchanged.
    pub fn normalize(&self, q: f64) -> f64 {
        if self.max > self.min {
            (q - self.min) / (self.max - self.min)
        } else {
            q
        }
    }
}

impl Default for MinMaxStats {
    fn default() -> Self {
        Self::new()
    }
}

/// Root outcome of one search: visit-count policy, induced value, raw
/// counts and greedy action.
#[derive(Debug, Clone)]
pub struct SearchResult {
    pub policy: Vec<f64>,
    pub value: f64,
    pub visit_counts: Vec<u32>,
    pub action: usize,
}

/// One Q update during backup, recorded when tracing is enabled.
#[derive(Debug, Clone, Copy)]
pub struct BackupEvent {
    pub node: usize,
    pub action: usize,
    pub g: f64,
}

/// pUCT score of every edge of a node. The exploitation term for a
/// visited edge is its one-step return estimate `r + gamma * Q`,
/// normalized by the tree-wide min-max bounds; unvisited edges use 0.
pub fn puct_scores(
    node: &Node,
    minmax: &MinMaxStats,
    c1: f64,
    c2: f64,
    discount: f64,
) -> Vec<f64> {
    let sum_n: f64 = node.edges.iter().map(|e| e.visit_count as f64).sum();
    let explore = c1 + ((sum_n + c2 + 1.0) / c2).ln();
    node.edges
        .iter()
        .map(|edge| {
            let q_bar = if edge.visit_count > 0 {
                minmax.normalize(edge.reward + discount * edge.q)
            } else {
                0.0
            };
            q_bar + edge.prior * sum_n.sqrt() / (1.0 + edge.visit_count as f64) * explore
        })
        .collect()
}

/// pUCT argmax over a node's edges. Ties break toward the lowest action
/// index.
pub fn select_child(node: &Node, minmax: &MinMaxStats, c1: f64, c2: f64, discount: f64) -> usize {
    assert!(!node.edges.is_empty(), "select_child on unexpanded node");
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (a, score) in puct_scores(node, minmax, c1, c2, discount)
        .into_iter()
        .enumerate()
    {
        if score > best_score {
            best_score = score;
            best = a;
        }
    }
    best
}

/// Propagates the leaf value up the path, updating each edge's Q as a
/// running mean of its bootstrapped returns and incrementing N.
pub fn backup(
    nodes: &mut [Node],
    path: &[(usize, usize)],
    leaf_value: f64,
    discount: f64,
    minmax: &mut MinMaxStats,
    mut trace: Option<&mut Vec<BackupEvent>>,
) {
    assert!(!path.is_empty(), "backup on empty path");
    let mut g = leaf_value;
    for &(node, action) in path.iter().rev() {
        let edge = &mut nodes[node].edges[action];
        let n = edge.visit_count as f64;
        edge.q = (n * edge.q + g) / (n + 1.0);
        edge.visit_count += 1;
        // normalization bounds track the same quantity selection uses
        minmax.update(edge.reward + discount * edge.q);
        if let Some(events) = trace.as_deref_mut() {
            events.push(BackupEvent { node, action, g });
        }
        g = edge.reward + discount * g;
    }
}

/// Visit-count policy with a temperature; T = 0 is a pure argmax.
pub fn root_policy(visit_counts: &[u32], temperature: f64) -> Vec<f64> {
    let total: u32 = visit_counts.iter().sum();
    assert!(total >= 1, "root_policy on an unsearched root");
    if temperature == 0.0 {
        let best = argmax_u32(visit_counts);
        let mut p = vec![0.0; visit_counts.len()];
        p[best] = 1.0;
        return p;
    }
    let max_n = *visit_counts.iter().max().unwrap() as f64;
    let weights: Vec<f64> = visit_counts
        .iter()
        .map(|&n| (n as f64 / max_n).powf(1.0 / temperature))
        .collect();
    let sum: f64 = weights.iter().sum();
    weights.iter().map(|w| w / sum).collect()
}

fn argmax_u32(counts: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Mixes Dirichlet noise into the root priors:
/// `P <- (1 - f) * P + f * eta`, `eta ~ Dirichlet(alpha)`.
pub fn add_root_noise<R: Rng>(node: &mut Node, alpha: f64, fraction: f64, rng: &mut R) {
    if fraction == 0.0 || node.edges.len() < 2 {
        return;
    }
    let dirichlet =
        Dirichlet::new_with_size(alpha, node.edges.len()).expect("valid dirichlet parameters");
    let noise = dirichlet.sample(rng);
    for (edge, eta) in node.edges.iter_mut().zip(noise) {
        edge.prior = (1.0 - fraction) * edge.prior + fraction * eta;
    }
}

/// Runs the full search and returns only the root statistics.
pub fn run_mcts<M: Inference, R: Rng>(
    model: &M,
    root_observation: &[f64],
    config: &MctsConfig,
    add_noise: bool,
    rng: &mut R,
) -> Result<SearchResult> {
    let (result, _, _) = run_mcts_traced(model, root_observation, config, add_noise, rng)?;
    Ok(result)
}

/// Like [`run_mcts`] but also returns the finished tree arena and every
/// backup event, for invariant checks.
pub fn run_mcts_traced<M: Inference, R: Rng>(
    model: &M,
    root_observation: &[f64],
    config: &MctsConfig,
    add_noise: bool,
    rng: &mut R,
) -> Result<(SearchResult, Vec<Node>, Vec<BackupEvent>)> {
    assert!(config.num_simulations >= 1, "num_simulations must be >= 1");
    let root_out = model.initial_inference(root_observation)?;
    let mut nodes = vec![Node::expanded(root_out.latent, &root_out.policy_logits)?];
    if add_noise {
        add_root_noise(
            &mut nodes[0],
            config.dirichlet_alpha,
            config.exploration_fraction,
            rng,
        );
    }
    let mut minmax = MinMaxStats::new();
    let mut events = Vec::new();

    for _ in 0..config.num_simulations {
        let mut node_idx = 0;
        let mut path = Vec::new();
        let leaf_value = loop {
            let action = select_child(
                &nodes[node_idx],
                &minmax,
                config.c1,
                config.c2,
                config.discount,
            );
            path.push((node_idx, action));
            match nodes[node_idx].edges[action].child {
                Some(child) => node_idx = child,
                None => {
                    let out =
                        model.recurrent_inference(&nodes[node_idx].latent, action)?;
                    let child_idx = nodes.len();
                    nodes.push(Node::expanded(out.latent, &out.policy_logits)?);
                    let edge = &mut nodes[node_idx].edges[action];
                    edge.child = Some(child_idx);
                    edge.reward = out.reward;
                    break out.value;
                }
            }
        };
        backup(
            &mut nodes,
            &path,
            leaf_value,
            config.discount,
            &mut minmax,
            Some(&mut events),
        );
    }

    let visit_counts = nodes[0].visit_counts();
    let policy = root_policy(&visit_counts, 1.0);
    let value = policy
        .iter()
        .zip(nodes[0].edges.iter())
        .map(|(p, e)| p * e.q)
        .sum();
    let action = argmax_u32(&visit_counts);
    let result = SearchResult {
        policy,
        value,
        visit_counts,
        action,
    };
    Ok((result, nodes, events))
}

const EXHAUSTIVE_BUDGET: u64 = 1_000_000;

/// Brute-force planner: evaluates the discounted return estimate of every
/// action sequence of the given depth and returns the first action of the
/// best one together with its estimate. Ties break toward the
/// lexicographically first sequence.
pub fn exhaustive_plan<M: Inference>(
    model: &M,
    root_observation: &[f64],
    depth: usize,
    discount: f64,
) -> Result<(usize, f64)> {
    let root = model.initial_inference(root_observation)?;
    if depth == 0 {
        return Ok((0, root.value));
    }
    let actions = model.action_count() as u64;
    let mut budget: u64 = 1;
    for _ in 0..depth {
        budget = budget.saturating_mul(actions);
        if budget > EXHAUSTIVE_BUDGET {
            return Err(Error::InvalidArgument(format!(
                "exhaustive enumeration of {actions}^{depth} sequences exceeds budget"
            )));
        }
    }
    let mut best_action = 0;
    let mut best_return = f64::NEG_INFINITY;
    for a in 0..model.action_count() {
        let out = model.recurrent_inference(&root.latent, a)?;
        let ret = out.reward + discount * best_tail(model, &out, depth - 1, discount)?;
        if ret > best_return {
            best_return = ret;
            best_action = a;
        }
    }
    Ok((best_action, best_return))
}

/// Best discounted return achievable from `out.latent` over `remaining`
/// further actions, bootstrapping with the value head at the horizon.
fn best_tail<M: Inference>(
    model: &M,
    out: &crate::model::ModelOutput,
    remaining: usize,
    discount: f64,
) -> Result<f64> {
    if remaining == 0 {
        return Ok(out.value);
    }
    let mut best = f64::NEG_INFINITY;
    for a in 0..model.action_count() {
        let next = model.recurrent_inference(&out.latent, a)?;
        let ret = next.reward + discount * best_tail(model, &next, remaining - 1, discount)?;
        if ret > best {
            best = ret;
        }
    }
    Ok(best)
}
