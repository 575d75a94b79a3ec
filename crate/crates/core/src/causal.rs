//! Causal structure from single-node interventions.
//!
//! Nodes are labeled `A`, `B`, ... by index. Perturbing a node switches on
//! exactly its descendants, so a DAG is admissible for an observation set
//! when its reachability relation reproduces every observed effect vector.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, ParseError, Result};

/// Largest `n` the admissible-set enumerator accepts unless told otherwise.
pub const DEFAULT_NODE_LIMIT: usize = 6;

/// Labels are single upper-case letters.
pub const MAX_NODES: usize = 26;

/// Edge probability used when sampling a latent graph.
pub const DEFAULT_EDGE_PROB: f64 = 0.5;

pub fn label(index: usize) -> char {
    debug_assert!(index < MAX_NODES);
    char::from(b'A' + index as u8)
}

pub fn label_index(c: char) -> Option<usize> {
    c.is_ascii_uppercase().then(|| (c as u8 - b'A') as usize)
}

/// A labeled directed acyclic graph on `n` nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Dag {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Dag {
    /// Builds a DAG, rejecting out-of-range nodes, self-loops and cycles.
    /// Repeated edges collapse.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n > MAX_NODES {
            return Err(Error::InvalidParameters(format!(
                "at most {MAX_NODES} nodes are supported, got {n}"
            )));
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            for index in [u, v] {
                if index >= n {
                    return Err(Error::NodeOutOfRange { index, n });
                }
            }
            if u == v {
                return Err(Error::SelfLoop(label(u).to_string()));
            }
            set.insert((u, v));
        }
        let dag = Self { n, edges: set };
        if dag.has_cycle() {
            return Err(Error::Cyclic);
        }
        Ok(dag)
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            edges: BTreeSet::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u, v))
    }

    fn successor_masks(&self) -> Vec<u32> {
        let mut succ = vec![0u32; self.n];
        for &(u, v) in &self.edges {
            succ[u] |= 1 << v;
        }
        succ
    }

    fn has_cycle(&self) -> bool {
        // Kahn's algorithm: a cycle leaves nodes with positive in-degree.
        let mut indegree = vec![0usize; self.n];
        for &(_, v) in &self.edges {
            indegree[v] += 1;
        }
        let succ = self.successor_masks();
        let mut stack: Vec<usize> = (0..self.n).filter(|&v| indegree[v] == 0).collect();
        let mut visited = 0;
        while let Some(u) = stack.pop() {
            visited += 1;
            for v in bits(succ[u]) {
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    stack.push(v);
                }
            }
        }
        visited != self.n
    }

    /// Hypothesis text in the emission schema, e.g. `EDGES: A>B, B>C`.
    pub fn to_text(&self) -> String {
        if self.edges.is_empty() {
            return "EDGES: none".to_string();
        }
        let items: Vec<String> = self
            .edges
            .iter()
            .map(|&(u, v)| format!("{}>{}", label(u), label(v)))
            .collect();
        format!("EDGES: {}", items.join(", "))
    }
}

fn bits(mut mask: u32) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if mask == 0 {
            None
        } else {
            let b = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            Some(b)
        }
    })
}

/// Nodes reachable from `start` through at least one edge.
fn reach(succ: &[u32], start: usize) -> u32 {
    let mut seen = 0u32;
    let mut frontier = succ[start];
    while frontier & !seen != 0 {
        let fresh = frontier & !seen;
        seen |= fresh;
        frontier = 0;
        for b in bits(fresh) {
            frontier |= succ[b];
        }
    }
    seen
}

fn check_node(dag: &Dag, node: usize) -> Result<()> {
    if node >= dag.n {
        return Err(Error::NodeOutOfRange {
            index: node,
            n: dag.n,
        });
    }
    Ok(())
}

/// Transitive descendants of `node`, excluding `node` itself.
pub fn descendants(dag: &Dag, node: usize) -> Result<BTreeSet<usize>> {
    check_node(dag, node)?;
    Ok(bits(reach(&dag.successor_masks(), node)).collect())
}

/// Effect vector of perturbing `node`: 1 exactly at its descendants.
pub fn forward_effect(dag: &Dag, node: usize) -> Result<Vec<bool>> {
    check_node(dag, node)?;
    let mask = reach(&dag.successor_masks(), node);
    Ok((0..dag.n).map(|j| mask & (1 << j) != 0).collect())
}

/// One single-node intervention and the resulting binary effect vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InterventionObservation {
    source: usize,
    effect: Vec<bool>,
}

impl InterventionObservation {
    pub fn new(source: usize, effect: Vec<bool>) -> Result<Self> {
        let n = effect.len();
        if source >= n {
            return Err(Error::NodeOutOfRange { index: source, n });
        }
        if n > MAX_NODES {
            return Err(Error::InvalidObservation(format!(
                "effect vector longer than {MAX_NODES}"
            )));
        }
        if effect[source] {
            return Err(Error::InvalidObservation(format!(
                "intervened node {} cannot be its own effect",
                label(source)
            )));
        }
        Ok(Self { source, effect })
    }

    /// Observation from the list of affected nodes.
    pub fn from_targets(n: usize, source: usize, targets: &[usize]) -> Result<Self> {
        let mut effect = vec![false; n];
        for &t in targets {
            if t >= n {
                return Err(Error::NodeOutOfRange { index: t, n });
            }
            effect[t] = true;
        }
        Self::new(source, effect)
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn effect(&self) -> &[bool] {
        &self.effect
    }

    fn target_mask(&self) -> u32 {
        self.effect
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .fold(0, |m, (j, _)| m | (1 << j))
    }
}

fn check_dimensions(n: usize, obs: &[InterventionObservation]) -> Result<()> {
    for o in obs {
        if o.effect.len() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("effect vectors of length {n}"),
                actual: format!("length {}", o.effect.len()),
            });
        }
    }
    Ok(())
}

/// True iff the DAG reproduces every observed effect vector.
pub fn validate_dag(dag: &Dag, obs: &[InterventionObservation]) -> Result<bool> {
    check_dimensions(dag.n, obs)?;
    let succ = dag.successor_masks();
    Ok(obs
        .iter()
        .all(|o| reach(&succ, o.source) == o.target_mask()))
}

/// Canonical form of an edge list: sorted, deduplicated `U>V` items joined
/// by `;`. The empty graph maps to the empty string.
pub fn canon_edges(edges: impl IntoIterator<Item = (usize, usize)>) -> String {
    let sorted: BTreeSet<(usize, usize)> = edges.into_iter().collect();
    let items: Vec<String> = sorted
        .into_iter()
        .map(|(u, v)| format!("{}>{}", label(u), label(v)))
        .collect();
    items.join(";")
}

pub fn canon_dag(dag: &Dag) -> String {
    canon_edges(dag.edges())
}

/// Parses an `EDGES:` line into raw labeled edges. Structural checks
/// (range, self-loops, cycles) are left to [`Dag::new`].
///
/// Items are separated by `,` or `;`; whitespace is ignored; `none` spells
/// the empty list.
pub fn parse_edges(text: &str) -> std::result::Result<Vec<(usize, usize)>, ParseError> {
    let trimmed = text.trim_start();
    let offset = text.len() - trimmed.len();
    let body = trimmed
        .strip_prefix("EDGES:")
        .ok_or_else(|| ParseError::new(offset + 1, "expected `EDGES:` header"))?;
    let body_start = offset + "EDGES:".len();
    parse_edge_body(body, body_start)
}

/// Parses a canonical edge string such as `A>B;B>C` (empty = no edges).
pub fn parse_canonical(text: &str) -> std::result::Result<Vec<(usize, usize)>, ParseError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    parse_edge_body(text, 0)
}

fn parse_edge_body(
    body: &str,
    body_start: usize,
) -> std::result::Result<Vec<(usize, usize)>, ParseError> {
    if body.trim().eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    if body.trim().is_empty() {
        return Err(ParseError::new(
            body_start + 1,
            "empty edge list (use `none`)",
        ));
    }
    let mut edges = Vec::new();
    let mut item_start = body_start;
    for item in body.split([',', ';']) {
        let position = item_start + 1 + (item.len() - item.trim_start().len());
        let compact: Vec<char> = item.chars().filter(|c| !c.is_whitespace()).collect();
        match compact.as_slice() {
            [a, '>', b] => match (label_index(*a), label_index(*b)) {
                (Some(u), Some(v)) => edges.push((u, v)),
                _ => {
                    return Err(ParseError::new(
                        position,
                        format!("bad node label in `{}`", item.trim()),
                    ))
                }
            },
            [] => return Err(ParseError::new(position, "empty edge item")),
            _ => {
                return Err(ParseError::new(
                    position,
                    format!("expected `U>V`, found `{}`", item.trim()),
                ))
            }
        }
        item_start += item.len() + 1;
    }
    Ok(edges)
}

/// Every DAG on `n` labeled nodes consistent with `obs`, sorted by
/// canonical form. Uses [`DEFAULT_NODE_LIMIT`].
pub fn enumerate_admissible_dags(obs: &[InterventionObservation], n: usize) -> Result<Vec<Dag>> {
    enumerate_admissible_dags_with_limit(obs, n, DEFAULT_NODE_LIMIT)
}

pub fn enumerate_admissible_dags_with_limit(
    obs: &[InterventionObservation],
    n: usize,
    node_limit: usize,
) -> Result<Vec<Dag>> {
    if n > node_limit.min(MAX_NODES) {
        return Err(Error::LimitExceeded(format!(
            "{n} nodes exceeds the enumeration limit of {node_limit}"
        )));
    }
    check_dimensions(n, obs)?;

    // Observed descendant sets, one per distinct source.
    let mut targets: BTreeMap<usize, u32> = BTreeMap::new();
    for o in obs {
        let mask = o.target_mask();
        if let Some(&prev) = targets.get(&o.source) {
            if prev != mask {
                return Ok(Vec::new());
            }
        }
        targets.insert(o.source, mask);
    }

    // An edge u->v with u in {s} ∪ D(s) makes v a descendant of s, so v must
    // lie in D(s).
    let full = if n == 0 { 0 } else { u32::MAX >> (32 - n) };
    let mut allowed: Vec<u32> = (0..n).map(|u| full & !(1 << u)).collect();
    for (&s, &d) in &targets {
        for u in bits(d | (1 << s)) {
            allowed[u] &= d;
        }
    }

    // The last hop into j ∈ D(s) comes from s or from another member of
    // D(s); if no other member may point at j, s->j is required.
    let mut forced = vec![0u32; n];
    for (&s, &d) in &targets {
        for j in bits(d) {
            let via_other = bits(d & !(1 << j)).any(|k| allowed[k] & (1 << j) != 0);
            if !via_other {
                if allowed[s] & (1 << j) == 0 {
                    return Ok(Vec::new());
                }
                forced[s] |= 1 << j;
            }
        }
    }
    if Dag::new(n, (0..n).flat_map(|u| bits(forced[u]).map(move |v| (u, v)))).is_err() {
        return Ok(Vec::new());
    }

    let candidates: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| bits(allowed[u] & !forced[u]).map(move |v| (u, v)))
        .collect();
    let mut suffix = vec![vec![0u32; n]; candidates.len() + 1];
    for i in (0..candidates.len()).rev() {
        suffix[i] = suffix[i + 1].clone();
        let (u, v) = candidates[i];
        suffix[i][u] |= 1 << v;
    }

    let mut search = Search {
        candidates,
        suffix,
        targets: targets.into_iter().collect(),
        found: Vec::new(),
    };
    let mut succ = forced;
    if search.coverage_possible(&succ, 0) {
        search.dfs(0, &mut succ);
    }

    let mut dags: Vec<(String, Dag)> = search
        .found
        .into_iter()
        .map(|succ| {
            let dag = Dag {
                n,
                edges: (0..n)
                    .flat_map(|u| bits(succ[u]).map(move |v| (u, v)))
                    .collect(),
            };
            (canon_dag(&dag), dag)
        })
        .collect();
    dags.sort_by(|a, b| a.0.cmp(&b.0));
    dags.dedup_by(|a, b| a.0 == b.0);
    Ok(dags.into_iter().map(|(_, d)| d).collect())
}

struct Search {
    candidates: Vec<(usize, usize)>,
    suffix: Vec<Vec<u32>>,
    targets: Vec<(usize, u32)>,
    found: Vec<Vec<u32>>,
}

impl Search {
    fn dfs(&mut self, i: usize, succ: &mut Vec<u32>) {
        if i == self.candidates.len() {
            if self.targets.iter().all(|&(s, d)| reach(succ, s) == d) {
                self.found.push(succ.clone());
            }
            return;
        }
        let (u, v) = self.candidates[i];
        if reach(succ, v) & (1 << u) == 0 {
            succ[u] |= 1 << v;
            self.dfs(i + 1, succ);
            succ[u] &= !(1 << v);
        }
        if self.coverage_possible(succ, i + 1) {
            self.dfs(i + 1, succ);
        }
    }

    /// Whether the decided edges plus every still-undecided candidate can
    /// reach all observed descendants.
    fn coverage_possible(&self, succ: &[u32], from: usize) -> bool {
        let optimistic: Vec<u32> = succ
            .iter()
            .zip(&self.suffix[from])
            .map(|(a, b)| a | b)
            .collect();
        self.targets
            .iter()
            .all(|&(s, d)| reach(&optimistic, s) & d == d)
    }
}

/// A causal task instance: observations plus the enumerated admissible set.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalInstance {
    pub n: usize,
    pub observations: Vec<InterventionObservation>,
    /// Generator ground truth, when known.
    pub latent: Option<Dag>,
    /// Admissible DAGs, sorted by canonical form.
    pub admissible: Vec<Dag>,
}

impl CausalInstance {
    /// Builds an instance from observations, enumerating the admissible set.
    pub fn from_observations(
        n: usize,
        observations: Vec<InterventionObservation>,
        latent: Option<Dag>,
    ) -> Result<Self> {
        let admissible = enumerate_admissible_dags(&observations, n)?;
        Ok(Self {
            n,
            observations,
            latent,
            admissible,
        })
    }
}

/// Samples a latent DAG and `m` distinct intervention sources from `seed`.
///
/// The latent graph orders nodes by a random permutation and includes each
/// forward pair with probability [`DEFAULT_EDGE_PROB`]. Sources are drawn
/// uniformly without replacement and listed in index order.
pub fn generate_causal_instance(n: usize, m: usize, seed: u64) -> Result<CausalInstance> {
    if n == 0 || m == 0 || m > n {
        return Err(Error::InvalidParameters(format!(
            "need 1 <= m <= n, got n={n}, m={m}"
        )));
    }
    if n > DEFAULT_NODE_LIMIT {
        return Err(Error::LimitExceeded(format!(
            "{n} nodes exceeds the enumeration limit of {DEFAULT_NODE_LIMIT}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(DEFAULT_EDGE_PROB) {
                edges.push((order[a], order[b]));
            }
        }
    }
    let latent = Dag::new(n, edges)?;
    let mut sources = rand::seq::index::sample(&mut rng, n, m).into_vec();
    sources.sort_unstable();
    let observations = sources
        .into_iter()
        .map(|s| InterventionObservation::new(s, forward_effect(&latent, s)?))
        .collect::<Result<Vec<_>>>()?;
    CausalInstance::from_observations(n, observations, Some(latent))
}
