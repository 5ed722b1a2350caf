//! Seeded generators of small matroids, WMRS valuations and auction instances.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::extension::FractionalPoint;
use crate::hardness::Graph;
use crate::itemset::ItemSet;
use crate::matroid::MatroidSpec;
use crate::seed::{self, Rng};
use crate::valuation::{AuctionInstance, Component, WmrsValuation};

pub fn uniform(rng: &mut Rng, ground: usize) -> MatroidSpec {
    MatroidSpec::uniform(ground, rng.random_range(0..=ground))
}

pub fn partition(rng: &mut Rng, ground: usize) -> MatroidSpec {
    let num_blocks = rng.random_range(1..=ground.max(1));
    let mut blocks = vec![Vec::new(); num_blocks];
    let mut items: Vec<usize> = (0..ground).collect();
    items.shuffle(rng);
    for (k, e) in items.into_iter().enumerate() {
        // The first pass keeps every block nonempty.
        let b = if k < num_blocks { k } else { rng.random_range(0..num_blocks) };
        blocks[b].push(e);
    }
    for b in &mut blocks {
        b.sort_unstable();
    }
    let capacities = blocks.iter().map(|b| rng.random_range(0..=b.len())).collect();
    MatroidSpec::partition(blocks, capacities)
}

/// A random multigraph with one edge per ground element; loops are allowed.
pub fn graphic(rng: &mut Rng, ground: usize) -> MatroidSpec {
    let num_vertices = rng.random_range(2..=4usize);
    let edges = (0..ground)
        .map(|_| (rng.random_range(0..num_vertices), rng.random_range(0..num_vertices)))
        .collect();
    MatroidSpec::graphic(num_vertices, edges)
}

/// A loop-free random graph on an even number of vertices.
pub fn graph(rng: &mut Rng, num_edges: usize) -> Graph {
    let num_vertices = 2 * rng.random_range(1..=3usize);
    let edges = (0..num_edges)
        .map(|_| {
            let u = rng.random_range(0..num_vertices);
            let mut v = rng.random_range(0..num_vertices - 1);
            if v >= u {
                v += 1;
            }
            (u.min(v), u.max(v))
        })
        .collect();
    Graph::new(num_vertices, edges)
}

/// Paving matroid of a random graph; `ground` must be even.
pub fn paving(rng: &mut Rng, ground: usize) -> MatroidSpec {
    debug_assert!(ground.is_multiple_of(2));
    MatroidSpec::paving(graph(rng, ground / 2))
}

/// The independent sets of a random uniform or partition matroid, listed explicitly.
pub fn explicit(rng: &mut Rng, ground: usize) -> MatroidSpec {
    let base = if rng.random::<bool>() {
        uniform(rng, ground)
    } else {
        partition(rng, ground)
    };
    let sets = ItemSet::all_subsets(ground)
        .filter(|&s| base.rank_unchecked(s) == s.len())
        .collect();
    MatroidSpec::explicit(ground, sets)
}

/// A random matroid of any variant on `ground` elements (paving only for even sizes).
pub fn matroid(rng: &mut Rng, ground: usize) -> MatroidSpec {
    let variants = if ground.is_multiple_of(2) && ground > 0 { 5 } else { 4 };
    match rng.random_range(0..variants) {
        0 => uniform(rng, ground),
        1 => partition(rng, ground),
        2 => graphic(rng, ground),
        3 => explicit(rng, ground),
        _ => paving(rng, ground),
    }
}

/// One to three components with weights drawn from `[0.1, 2]`.
pub fn valuation(rng: &mut Rng, num_items: usize) -> WmrsValuation {
    let count = rng.random_range(1..=3);
    let components = (0..count)
        .map(|_| Component {
            weight: rng.random_range(0.1..=2.0),
            matroid: matroid(rng, num_items),
        })
        .collect();
    WmrsValuation::new(num_items, components).expect("generated components are valid")
}

pub fn instance(rng: &mut Rng, num_bidders: usize, num_items: usize) -> AuctionInstance {
    let valuations = (0..num_bidders).map(|_| valuation(rng, num_items)).collect();
    AuctionInstance::new(num_items, valuations).expect("generated instance is valid")
}

/// Instance `index` of a seeded family with `n, m` drawn from `1..=max_bidders` and
/// `1..=max_items`.
pub fn instance_family(master: u64, index: u64, max_bidders: usize, max_items: usize) -> AuctionInstance {
    let mut rng = seed::rng(seed::derive(master, "instance", index));
    let n = rng.random_range(1..=max_bidders);
    let m = rng.random_range(1..=max_items);
    instance(&mut rng, n, m)
}

/// A random point of the allocation polytope: each column is a uniformly drawn point of
/// the simplex `{x ≥ 0, Σ_i x_ij ≤ 1}` (one slack coordinate).
pub fn point(rng: &mut Rng, num_bidders: usize, num_items: usize) -> FractionalPoint {
    let mut x = FractionalPoint::zeros(num_bidders, num_items);
    for j in 0..num_items {
        let w: Vec<f64> = (0..=num_bidders).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
        let total: f64 = w.iter().sum();
        for (i, wi) in w.iter().take(num_bidders).enumerate() {
            x.set(i, j, wi / total);
        }
    }
    x
}
