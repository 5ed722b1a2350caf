//! Perfect-matching counts hidden in the average rank of a paving matroid.
//!
//! For a graph with `m` edges and an even number `2k` of vertices, the paving matroid
//! built by [`paving_from_graph`] has rank `min(|S|, 2k)` on every subset of its `2m`
//! elements except the unions of pairs indexed by a perfect matching, which lose exactly
//! one. Summing ranks over all subsets therefore gives
//!
//! ```text
//! #matchings = Σ_s C(2m, s)·min(s, 2k) − Σ_S r(S)
//! ```
//!
//! and the rank sum is `2^{2m}` times the lottery value of the rank function at the
//! all-halves point. Everything here is computed in exact integer arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::itemset::ItemSet;
use crate::matroid::MatroidSpec;

/// Largest ground set enumerated by [`avg_rank_exact`] and [`rank_sum`].
pub const RANK_SUM_LIMIT: usize = 16;
/// Largest graph accepted by [`paving_from_graph`].
pub const PAVING_EDGE_LIMIT: usize = 16;
/// Largest graph accepted by [`count_matchings_direct`].
pub const DIRECT_EDGE_LIMIT: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    pub num_vertices: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new(num_vertices: usize, edges: Vec<(usize, usize)>) -> Self {
        Graph {
            num_vertices,
            edges,
        }
    }

    /// Rejects self-loops and out-of-range vertices.
    pub fn validate(&self) -> Result<()> {
        for (i, &(u, v)) in self.edges.iter().enumerate() {
            if u >= self.num_vertices || v >= self.num_vertices {
                return Err(Error::validation(
                    "graph.edges",
                    format!("edge {i} = ({u}, {v}) references a vertex outside 0..{}", self.num_vertices),
                ));
            }
            if u == v {
                return Err(Error::validation(
                    "graph.edges",
                    format!("edge {i} is a self-loop on vertex {u}"),
                ));
            }
        }
        Ok(())
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }
}

/// Whether the edges in `edge_set` cover every vertex exactly once.
pub fn is_perfect_matching(graph: &Graph, edge_set: ItemSet) -> bool {
    if 2 * edge_set.len() != graph.num_vertices {
        return false;
    }
    let mut covered = vec![false; graph.num_vertices];
    for e in edge_set.iter() {
        let Some(&(u, v)) = graph.edges.get(e) else {
            return false;
        };
        if u == v || covered[u] || covered[v] {
            return false;
        }
        covered[u] = true;
        covered[v] = true;
    }
    true
}

/// The paving matroid whose designated family is the set of perfect matchings of `g`.
pub fn paving_from_graph(g: &Graph) -> Result<MatroidSpec> {
    if !g.num_vertices.is_multiple_of(2) {
        return Err(Error::Domain(format!(
            "paving construction needs an even vertex count, got {}",
            g.num_vertices
        )));
    }
    if g.num_edges() > PAVING_EDGE_LIMIT {
        return Err(Error::budget(
            "paving construction (edges)",
            g.num_edges() as u128,
            PAVING_EDGE_LIMIT as u128,
        ));
    }
    let spec = MatroidSpec::paving(g.clone());
    spec.validate().map_err(|e| Error::Domain(e.to_string()))?;
    Ok(spec)
}

/// `Σ_{S ⊆ E} r(S)` by enumeration.
pub fn rank_sum(spec: &MatroidSpec) -> Result<u64> {
    let n = spec.ground_size();
    if n > RANK_SUM_LIMIT {
        return Err(Error::budget(
            "rank sum enumeration (ground size)",
            n as u128,
            RANK_SUM_LIMIT as u128,
        ));
    }
    Ok(ItemSet::all_subsets(n)
        .map(|s| spec.rank_unchecked(s) as u64)
        .sum())
}

/// Expected rank of a uniformly random subset, `2^{-|E|} Σ_S r(S)`.
pub fn avg_rank_exact(spec: &MatroidSpec) -> Result<f64> {
    let total = rank_sum(spec)?;
    // Both the sum (< 2^53) and the power of two are exact in f64.
    Ok(total as f64 / (1u64 << spec.ground_size()) as f64)
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Rank sum of the paving matroid with an empty designated family, i.e. of the
/// uniform matroid of rank `2k` on `2m` elements.
fn baseline_rank_sum(num_pairs: usize, k: usize) -> u64 {
    let ground = 2 * num_pairs as u64;
    (0..=ground)
        .map(|s| binomial(ground, s) * s.min(2 * k as u64))
        .sum()
}

/// Counts perfect matchings of `g` from the average rank of its paving matroid.
pub fn count_matchings_via_rank(g: &Graph) -> Result<u64> {
    let spec = paving_from_graph(g)?;
    let avg = avg_rank_exact(&spec)?;
    let scaled = avg * (1u64 << spec.ground_size()) as f64;
    if scaled.fract() != 0.0 {
        return Err(Error::Internal(format!(
            "scaled average rank {scaled} is not an integer"
        )));
    }
    let baseline = baseline_rank_sum(g.num_edges(), g.num_vertices / 2);
    let observed = scaled as u64;
    baseline.checked_sub(observed).ok_or_else(|| {
        Error::Internal(format!(
            "rank sum {observed} exceeds the uniform baseline {baseline}"
        ))
    })
}

/// Counts perfect matchings by enumerating every `|V|/2`-edge subset.
pub fn count_matchings_direct(g: &Graph) -> Result<u64> {
    g.validate()?;
    if g.num_edges() > DIRECT_EDGE_LIMIT {
        return Err(Error::budget(
            "direct matching enumeration (edges)",
            g.num_edges() as u128,
            DIRECT_EDGE_LIMIT as u128,
        ));
    }
    if !g.num_vertices.is_multiple_of(2) {
        return Ok(0);
    }
    let k = g.num_vertices / 2;
    if k > g.num_edges() {
        return Ok(0);
    }
    let mut count = 0u64;
    let mut chosen = Vec::with_capacity(k);
    let mut covered = vec![false; g.num_vertices];
    extend_matching(g, 0, k, &mut chosen, &mut covered, &mut count);
    Ok(count)
}

fn extend_matching(
    g: &Graph,
    next: usize,
    k: usize,
    chosen: &mut Vec<usize>,
    covered: &mut [bool],
    count: &mut u64,
) {
    if chosen.len() == k {
        *count += 1;
        return;
    }
    if g.num_edges() - next < k - chosen.len() {
        return;
    }
    for e in next..g.num_edges() {
        let (u, v) = g.edges[e];
        if covered[u] || covered[v] {
            continue;
        }
        covered[u] = true;
        covered[v] = true;
        chosen.push(e);
        extend_matching(g, e + 1, k, chosen, covered, count);
        chosen.pop();
        covered[u] = false;
        covered[v] = false;
    }
}
