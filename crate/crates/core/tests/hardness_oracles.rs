use tie_auction::generate;
use tie_auction::hardness::{
    avg_rank_exact, count_matchings_direct, count_matchings_via_rank, paving_from_graph, rank_sum, Graph,
};
use tie_auction::matroid::MatroidSpec;
use tie_auction::seed;

#[test]
fn counts_agree_on_random_even_graphs() {
    let mut rng = seed::rng(99);
    for edges in 1..=8 {
        for _ in 0..4 {
            let g = generate::graph(&mut rng, edges);
            assert_eq!(count_matchings_via_rank(&g).unwrap(), count_matchings_direct(&g).unwrap(), "{g:?}");
        }
    }
}

#[test]
fn average_rank_drops_by_matching_count() {
    let g = Graph::new(4, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
    let m2 = 2 * g.num_edges();
    let k2 = g.num_vertices;
    let baseline: f64 = (0..=m2)
        .map(|s| binomial(m2, s) * s.min(k2) as f64)
        .sum::<f64>()
        / 2f64.powi(m2 as i32);
    let paving = paving_from_graph(&g).unwrap();
    let drop = baseline - avg_rank_exact(&paving).unwrap();
    assert!((drop - 3.0 / 2f64.powi(m2 as i32)).abs() < 1e-15);
}

#[test]
fn rank_sums_of_uniform_matroids() {
    assert_eq!(rank_sum(&MatroidSpec::uniform(2, 2)).unwrap(), 4);
    assert_eq!(avg_rank_exact(&MatroidSpec::uniform(2, 1)).unwrap(), 0.75);
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
