//! Matroid rank oracles.
//!
//! Five variants are supported: uniform, partition, graphic, the paving "pairs"
//! construction driven by a graph's perfect matchings, and an explicit independent-set
//! family (used for tests). Subsets are [`ItemSet`] bit patterns, so ground sets are
//! limited to 64 elements.

use crate::error::{Error, Result};
use crate::hardness::{is_perfect_matching, Graph};
use crate::itemset::{ItemSet, MAX_GROUND};

/// Largest ground set accepted by [`check_matroid_axioms`].
pub const AXIOM_CHECK_LIMIT: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub enum MatroidSpec {
    Uniform {
        ground_size: usize,
        k: usize,
    },
    Partition {
        blocks: Vec<Vec<usize>>,
        capacities: Vec<usize>,
    },
    /// One ground element per edge.
    Graphic {
        num_vertices: usize,
        edges: Vec<(usize, usize)>,
    },
    /// Ground set of `2 * graph.edges.len()` elements; elements `2e` and `2e + 1`
    /// form the pair of edge `e`. The rank is `2k` with `k = num_vertices / 2`, except
    /// that a union of `k` pairs whose edges form a perfect matching has rank `2k - 1`.
    Paving {
        graph: Graph,
    },
    /// Independent sets listed explicitly.
    Explicit {
        ground_size: usize,
        independent_sets: Vec<ItemSet>,
    },
}

impl MatroidSpec {
    pub fn uniform(ground_size: usize, k: usize) -> Self {
        MatroidSpec::Uniform { ground_size, k }
    }

    pub fn partition(blocks: Vec<Vec<usize>>, capacities: Vec<usize>) -> Self {
        MatroidSpec::Partition { blocks, capacities }
    }

    pub fn graphic(num_vertices: usize, edges: Vec<(usize, usize)>) -> Self {
        MatroidSpec::Graphic {
            num_vertices,
            edges,
        }
    }

    pub fn paving(graph: Graph) -> Self {
        MatroidSpec::Paving { graph }
    }

    pub fn explicit(ground_size: usize, mut independent_sets: Vec<ItemSet>) -> Self {
        independent_sets.sort_unstable();
        independent_sets.dedup();
        MatroidSpec::Explicit {
            ground_size,
            independent_sets,
        }
    }

    pub fn ground_size(&self) -> usize {
        match self {
            MatroidSpec::Uniform { ground_size, .. } => *ground_size,
            MatroidSpec::Partition { blocks, .. } => blocks.iter().map(Vec::len).sum(),
            MatroidSpec::Graphic { edges, .. } => edges.len(),
            MatroidSpec::Paving { graph } => 2 * graph.edges.len(),
            MatroidSpec::Explicit { ground_size, .. } => *ground_size,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            MatroidSpec::Uniform { .. } => "uniform",
            MatroidSpec::Partition { .. } => "partition",
            MatroidSpec::Graphic { .. } => "graphic",
            MatroidSpec::Paving { .. } => "paving",
            MatroidSpec::Explicit { .. } => "explicit",
        }
    }

    /// Checks the structural invariants of the variant. The matroid axioms of an
    /// explicit family are not checked here; see [`check_matroid_axioms`].
    pub fn validate(&self) -> Result<()> {
        let n = self.ground_size();
        if n > MAX_GROUND {
            return Err(Error::validation(
                "ground_size",
                format!("{n} elements exceed the limit of {MAX_GROUND}"),
            ));
        }
        match self {
            MatroidSpec::Uniform { ground_size, k } => {
                if k > ground_size {
                    return Err(Error::validation(
                        "k",
                        format!("k = {k} exceeds ground size {ground_size}"),
                    ));
                }
            }
            MatroidSpec::Partition { blocks, capacities } => {
                if blocks.len() != capacities.len() {
                    return Err(Error::validation(
                        "capacities",
                        format!("{} capacities for {} blocks", capacities.len(), blocks.len()),
                    ));
                }
                let mut seen = ItemSet::EMPTY;
                for (b, block) in blocks.iter().enumerate() {
                    for &e in block {
                        if e >= n {
                            return Err(Error::validation(
                                "blocks",
                                format!("element {e} in block {b} is outside the ground set of size {n}"),
                            ));
                        }
                        if seen.contains(e) {
                            return Err(Error::validation(
                                "blocks",
                                format!("element {e} appears in more than one block"),
                            ));
                        }
                        seen = seen.with(e);
                    }
                    if capacities[b] > block.len() {
                        return Err(Error::validation(
                            "capacities",
                            format!(
                                "capacity {} of block {b} exceeds its size {}",
                                capacities[b],
                                block.len()
                            ),
                        ));
                    }
                }
            }
            MatroidSpec::Graphic {
                num_vertices,
                edges,
            } => {
                for &(u, v) in edges {
                    if u >= *num_vertices || v >= *num_vertices {
                        return Err(Error::validation(
                            "edges",
                            format!("edge ({u}, {v}) references a vertex outside 0..{num_vertices}"),
                        ));
                    }
                }
            }
            MatroidSpec::Paving { graph } => {
                graph.validate()?;
                if graph.num_vertices == 0 || graph.num_vertices % 2 != 0 {
                    return Err(Error::validation(
                        "graph.num_vertices",
                        format!(
                            "paving construction needs a positive even vertex count, got {}",
                            graph.num_vertices
                        ),
                    ));
                }
            }
            MatroidSpec::Explicit {
                ground_size,
                independent_sets,
            } => {
                for s in independent_sets {
                    if !s.within(*ground_size) {
                        return Err(Error::validation(
                            "independent_sets",
                            format!("{s:?} is not a subset of the ground set of size {ground_size}"),
                        ));
                    }
                }
                if !independent_sets.contains(&ItemSet::EMPTY) {
                    return Err(Error::validation(
                        "independent_sets",
                        "family does not contain the empty set",
                    ));
                }
                if let Some((set, e)) = downward_closure_violation(independent_sets) {
                    return Err(Error::validation(
                        "independent_sets",
                        format!("family is not downward closed: {set:?} minus {e} is missing"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The rank of `subset`, or a domain error if it leaves the ground set.
    pub fn rank(&self, subset: ItemSet) -> Result<usize> {
        let n = self.ground_size();
        if !subset.within(n) {
            return Err(Error::Domain(format!(
                "subset {subset:?} is not contained in the ground set of size {n}"
            )));
        }
        Ok(self.rank_unchecked(subset))
    }

    /// The rank of `subset`, assumed to lie inside the ground set.
    pub fn rank_unchecked(&self, subset: ItemSet) -> usize {
        match self {
            MatroidSpec::Uniform { k, .. } => subset.len().min(*k),
            MatroidSpec::Partition { blocks, capacities } => blocks
                .iter()
                .zip(capacities)
                .map(|(block, &cap)| block.iter().filter(|&&e| subset.contains(e)).count().min(cap))
                .sum(),
            MatroidSpec::Graphic {
                num_vertices,
                edges,
            } => graphic_rank(*num_vertices, edges, subset),
            MatroidSpec::Paving { graph } => paving_rank(graph, subset),
            MatroidSpec::Explicit {
                independent_sets, ..
            } => independent_sets
                .iter()
                .filter(|i| i.is_subset_of(subset))
                .map(|i| i.len())
                .max()
                .unwrap_or(0),
        }
    }
}

fn graphic_rank(num_vertices: usize, edges: &[(usize, usize)], subset: ItemSet) -> usize {
    let mut parent: Vec<usize> = (0..num_vertices).collect();
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    // Each edge that joins two components adds one to the rank.
    let mut rank = 0;
    for e in subset.iter() {
        let (u, v) = edges[e];
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        if ru != rv {
            parent[ru] = rv;
            rank += 1;
        }
    }
    rank
}

fn paving_rank(graph: &Graph, subset: ItemSet) -> usize {
    let k = graph.num_vertices / 2;
    let size = subset.len();
    if size != 2 * k {
        return size.min(2 * k);
    }
    // Union of pairs: for every edge, both or neither of its elements.
    let bits = subset.bits();
    let even = bits & 0x5555_5555_5555_5555;
    let odd = (bits >> 1) & 0x5555_5555_5555_5555;
    if even != odd {
        return size;
    }
    let mut matched_edges = ItemSet::EMPTY;
    for e in 0..graph.edges.len() {
        if subset.contains(2 * e) {
            matched_edges = matched_edges.with(e);
        }
    }
    if is_perfect_matching(graph, matched_edges) {
        size - 1
    } else {
        size
    }
}

fn downward_closure_violation(family: &[ItemSet]) -> Option<(ItemSet, usize)> {
    let members: std::collections::HashSet<ItemSet> = family.iter().copied().collect();
    for &s in family {
        for e in s.iter() {
            if !members.contains(&s.without(e)) {
                return Some((s, e));
            }
        }
    }
    None
}

/// A violated matroid property found by [`check_matroid_axioms`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AxiomViolation {
    /// Explicit family without the empty set.
    MissingEmptySet,
    /// Explicit family containing `set` but not `set - {element}`.
    NotDownwardClosed { set: ItemSet, element: usize },
    EmptyRankNonzero { rank: usize },
    /// `r(set + element) < r(set)`.
    Monotonicity { set: ItemSet, element: usize },
    /// `r(set + element) > r(set) + 1`.
    UnitIncrement { set: ItemSet, element: usize },
    /// `r(set + a) + r(set + b) < r(set + a + b) + r(set)`.
    Submodularity { set: ItemSet, a: usize, b: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AxiomReport {
    pub kind: &'static str,
    pub ground_size: usize,
    pub violation: Option<AxiomViolation>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.violation.is_none()
    }
}

/// Exhaustively checks the rank axioms of `spec`: `r(∅) = 0`, monotonicity, unit
/// increments and (local) submodularity over every set and element pair. For explicit
/// families, downward closure and the presence of `∅` are checked first.
///
/// The local form `r(S+a) + r(S+b) ≥ r(S+a+b) + r(S)` over all `S, a, b` is equivalent
/// to submodularity over all pairs of subsets.
pub fn check_matroid_axioms(spec: &MatroidSpec) -> Result<AxiomReport> {
    let n = spec.ground_size();
    if n > AXIOM_CHECK_LIMIT {
        return Err(Error::budget(
            "matroid axiom check (ground size)",
            n as u128,
            AXIOM_CHECK_LIMIT as u128,
        ));
    }
    let report = |violation| AxiomReport {
        kind: spec.kind(),
        ground_size: n,
        violation,
    };

    if let MatroidSpec::Explicit {
        independent_sets, ..
    } = spec
    {
        if !independent_sets.contains(&ItemSet::EMPTY) {
            return Ok(report(Some(AxiomViolation::MissingEmptySet)));
        }
        if let Some((set, element)) = downward_closure_violation(independent_sets) {
            return Ok(report(Some(AxiomViolation::NotDownwardClosed { set, element })));
        }
    }

    let ranks: Vec<usize> = ItemSet::all_subsets(n).map(|s| spec.rank_unchecked(s)).collect();
    if ranks[0] != 0 {
        return Ok(report(Some(AxiomViolation::EmptyRankNonzero { rank: ranks[0] })));
    }
    for s in ItemSet::all_subsets(n) {
        let r = ranks[s.bits() as usize];
        for a in (0..n).filter(|&a| !s.contains(a)) {
            let ra = ranks[s.with(a).bits() as usize];
            if ra < r {
                return Ok(report(Some(AxiomViolation::Monotonicity { set: s, element: a })));
            }
            if ra > r + 1 {
                return Ok(report(Some(AxiomViolation::UnitIncrement { set: s, element: a })));
            }
            for b in (a + 1..n).filter(|&b| !s.contains(b)) {
                let rb = ranks[s.with(b).bits() as usize];
                let rab = ranks[s.with(a).with(b).bits() as usize];
                if ra + rb < rab + r {
                    return Ok(report(Some(AxiomViolation::Submodularity { set: s, a, b })));
                }
            }
        }
    }
    Ok(report(None))
}
