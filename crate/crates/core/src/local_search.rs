//! Local search over the allocation polytope and Poisson rounding.
//!
//! Starting from `x = 0`, each iteration takes a gradient estimate `g` of `F^exp` at `x`,
//! finds the vertex `y` of the polytope maximizing `y · g`, and stops once
//! `(y - x) · g ≤ ε M / 2`. Otherwise it moves to `x + δ (y - x)` with
//! `δ = ε / (8 m² n²)`. The returned point is rounded to an allocation by giving item `j`
//! to bidder `i` with probability `1 - e^{-x_ij}`, independently across items.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::{FractionalPoint, GradientEstimate, GradientMode, InstanceOracle};
use crate::itemset::ItemSet;
use crate::seed;
use crate::valuation::AuctionInstance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSearchConfig {
    pub epsilon: f64,
    pub gradient_mode: GradientMode,
    /// Total failure probability of the sampled gradients over the whole run.
    pub eta: f64,
    pub rng_seed: u64,
    pub iteration_cap_override: Option<u64>,
}

impl LocalSearchConfig {
    pub fn exact(epsilon: f64) -> Self {
        LocalSearchConfig {
            epsilon,
            gradient_mode: GradientMode::Exact,
            eta: 0.01,
            rng_seed: 0,
            iteration_cap_override: None,
        }
    }

    pub fn sampled(epsilon: f64, eta: f64, rng_seed: u64) -> Self {
        LocalSearchConfig {
            epsilon,
            gradient_mode: GradientMode::Sampled,
            eta,
            rng_seed,
            iteration_cap_override: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::Domain(format!(
                "epsilon must lie in (0, 1), got {}",
                self.epsilon
            )));
        }
        if self.gradient_mode == GradientMode::Sampled && !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Domain(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        Ok(())
    }

    /// `δ = ε / (8 m² n²)`.
    pub fn step_size(&self, num_bidders: usize, num_items: usize) -> f64 {
        let (n, m) = (num_bidders as f64, num_items as f64);
        self.epsilon / (8.0 * m * m * n * n)
    }

    /// `⌈64 m³ n² / ε²⌉`.
    pub fn default_iteration_cap(&self, num_bidders: usize, num_items: usize) -> u64 {
        let (n, m) = (num_bidders as f64, num_items as f64);
        (64.0 * m.powi(3) * n * n / (self.epsilon * self.epsilon)).ceil() as u64
    }

    pub fn iteration_cap(&self, num_bidders: usize, num_items: usize) -> u64 {
        self.iteration_cap_override
            .unwrap_or_else(|| self.default_iteration_cap(num_bidders, num_items))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// `F^exp` at the point where the gradient was taken (exact mode only).
    pub fexp: Option<f64>,
    /// `(y - x) · g` for the chosen direction.
    pub improvement: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    CapReached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    /// Accepted steps.
    pub iterations: u64,
    pub step_size: f64,
    pub iteration_cap: u64,
    pub singleton_max: f64,
    /// Stopping threshold `ε M / 2`.
    pub threshold: f64,
    /// `F^exp` at the returned point (exact mode only).
    pub final_fexp: Option<f64>,
    pub final_point: FractionalPoint,
}

/// `M = max_{i,j} v_i({j})`.
pub fn singleton_max(instance: &AuctionInstance) -> f64 {
    instance
        .valuations()
        .iter()
        .flat_map(|v| v.singleton_values())
        .fold(0.0, f64::max)
}

/// The vertex of the polytope maximizing `y · g`: each item goes to the lowest-index
/// bidder with the largest positive coordinate, or to nobody if no coordinate is
/// positive. The polytope is a product of per-item simplices, so this is exact.
pub fn best_direction(g: &GradientEstimate) -> FractionalPoint {
    let mut y = FractionalPoint::zeros(g.num_bidders, g.num_items);
    for j in 0..g.num_items {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..g.num_bidders {
            let v = g.get(i, j);
            if v > 0.0 && best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        if let Some((i, _)) = best {
            y.set(i, j, 1.0);
        }
    }
    y
}

/// Runs the local search from `x = 0` and returns the final point with its trace.
///
/// In sampled mode every iteration estimates all coordinates within `δ M` with
/// confidence `1 - η / cap`, so the whole run succeeds with probability at least
/// `1 - η`.
pub fn local_search(
    instance: &AuctionInstance,
    config: &LocalSearchConfig,
) -> Result<(FractionalPoint, SearchTrace)> {
    config.validate()?;
    let oracle = InstanceOracle::new(instance);
    local_search_with_oracle(&oracle, singleton_max(instance), config)
}

pub(crate) fn local_search_with_oracle(
    oracle: &InstanceOracle,
    singleton_max: f64,
    config: &LocalSearchConfig,
) -> Result<(FractionalPoint, SearchTrace)> {
    let (n, m) = (oracle.num_bidders(), oracle.num_items());
    let delta = config.step_size(n, m);
    let cap = config.iteration_cap(n, m);
    let threshold = 0.5 * config.epsilon * singleton_max;
    let exact = config.gradient_mode == GradientMode::Exact;

    let mut x = FractionalPoint::zeros(n, m);
    let mut trace = SearchTrace {
        records: Vec::new(),
        termination: Termination::Converged,
        iterations: 0,
        step_size: delta,
        iteration_cap: cap,
        singleton_max,
        threshold,
        final_fexp: None,
        final_point: x.clone(),
    };
    if singleton_max <= 0.0 {
        if exact {
            trace.final_fexp = Some(0.0);
        }
        return Ok((x, trace));
    }

    let eta_per_iteration = config.eta / cap as f64;
    loop {
        let (fexp, g) = if exact {
            let (f, g) = oracle.fexp_and_grad(&x)?;
            (Some(f), g)
        } else {
            let iter_seed = seed::derive(config.rng_seed, "local-search", trace.iterations);
            let g = oracle.sampled_grad(&x, delta, singleton_max, eta_per_iteration, iter_seed)?;
            (None, g)
        };
        let y = best_direction(&g);
        let improvement = y.dot(&g.g) - x.dot(&g.g);
        let accepted = improvement > threshold && trace.iterations < cap;
        trace.records.push(IterationRecord {
            fexp,
            improvement,
            accepted,
        });
        if !accepted {
            trace.termination = if improvement > threshold {
                Termination::CapReached
            } else {
                Termination::Converged
            };
            trace.final_fexp = fexp;
            break;
        }
        for (xv, yv) in x.as_mut_slice().iter_mut().zip(y.as_slice()) {
            *xv += delta * (yv - *xv);
        }
        trace.iterations += 1;
    }
    trace.final_point = x.clone();
    Ok((x, trace))
}

/// Each item goes to at most one bidder; `None` means unallocated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub owner: Vec<Option<usize>>,
}

impl Allocation {
    pub fn empty(num_items: usize) -> Self {
        Allocation {
            owner: vec![None; num_items],
        }
    }

    /// All items to one bidder.
    pub fn ground_set_to(bidder: usize, num_items: usize) -> Self {
        Allocation {
            owner: vec![Some(bidder); num_items],
        }
    }

    pub fn bundle(&self, bidder: usize) -> ItemSet {
        ItemSet::from_elements(
            self.owner
                .iter()
                .enumerate()
                .filter(|(_, o)| **o == Some(bidder))
                .map(|(j, _)| j),
        )
    }

    pub fn bundles(&self, num_bidders: usize) -> Vec<ItemSet> {
        let mut out = vec![ItemSet::EMPTY; num_bidders];
        for (j, o) in self.owner.iter().enumerate() {
            if let Some(i) = *o {
                out[i] = out[i].with(j);
            }
        }
        out
    }

    /// Unallocates every item whose owner fails `keep`.
    pub fn restricted(&self, keep: impl Fn(usize) -> bool) -> Self {
        Allocation {
            owner: self.owner.iter().map(|o| o.filter(|&i| keep(i))).collect(),
        }
    }
}

/// Per-item cumulative probabilities `Σ_{i' ≤ i} (1 - e^{-x_i'j})` for repeated rounding.
#[derive(Debug, Clone)]
pub struct PoissonRounder {
    num_bidders: usize,
    num_items: usize,
    cumulative: Vec<f64>,
}

impl PoissonRounder {
    pub fn new(x: &FractionalPoint) -> Result<Self> {
        x.check_feasible()?;
        let (n, m) = (x.num_bidders(), x.num_items());
        let q = x.exp_map();
        let mut cumulative = vec![0.0; n * m];
        for j in 0..m {
            let mut acc = 0.0;
            for i in 0..n {
                acc += q.get(i, j);
                cumulative[j * n + i] = acc;
            }
        }
        Ok(PoissonRounder {
            num_bidders: n,
            num_items: m,
            cumulative,
        })
    }

    pub fn num_bidders(&self) -> usize {
        self.num_bidders
    }

    #[inline]
    fn owner_of(&self, j: usize, u: f64) -> Option<usize> {
        let col = &self.cumulative[j * self.num_bidders..(j + 1) * self.num_bidders];
        col.iter().position(|&c| u < c)
    }

    pub fn sample(&self, rng: &mut seed::Rng) -> Allocation {
        Allocation {
            owner: (0..self.num_items)
                .map(|j| self.owner_of(j, rng.random::<f64>()))
                .collect(),
        }
    }

    /// Draws an allocation directly as per-bidder bundles.
    pub fn sample_bundles(&self, rng: &mut seed::Rng, bundles: &mut [ItemSet]) {
        bundles.fill(ItemSet::EMPTY);
        for j in 0..self.num_items {
            if let Some(i) = self.owner_of(j, rng.random::<f64>()) {
                bundles[i] = bundles[i].with(j);
            }
        }
    }
}

/// Rounds `x` to an allocation: item `j` goes to bidder `i` with probability
/// `1 - e^{-x_ij}`, and stays unallocated with the remaining probability.
pub fn poisson_round(x: &FractionalPoint, rng_seed: u64) -> Result<Allocation> {
    let rounder = PoissonRounder::new(x)?;
    Ok(rounder.sample(&mut seed::rng(rng_seed)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extension::exact_fexp;
    use crate::matroid::MatroidSpec;
    use crate::valuation::WmrsValuation;

    fn single(weight: f64, m: MatroidSpec) -> WmrsValuation {
        WmrsValuation::single(weight, m).unwrap()
    }

    #[test]
    fn derived_constants() {
        let c = LocalSearchConfig::exact(0.1);
        assert_eq!(c.step_size(2, 3), 0.1 / (8.0 * 9.0 * 4.0));
        assert_eq!(c.default_iteration_cap(2, 3), 691_200);
        assert!(LocalSearchConfig::exact(1.0).validate().is_err());
        assert!(LocalSearchConfig::sampled(0.1, 0.0, 1).validate().is_err());
    }

    #[test]
    fn singleton_max_examples() {
        let zero = AuctionInstance::new(3, vec![WmrsValuation::zero(3)]).unwrap();
        assert_eq!(singleton_max(&zero), 0.0);
        let one = AuctionInstance::new(3, vec![single(5.0, MatroidSpec::uniform(3, 2))]).unwrap();
        assert_eq!(singleton_max(&one), 5.0);
        let mixed = AuctionInstance::new(
            2,
            vec![
                single(1.0, MatroidSpec::partition(vec![vec![0], vec![1]], vec![0, 1])),
                single(3.0, MatroidSpec::partition(vec![vec![0], vec![1]], vec![1, 0])),
            ],
        )
        .unwrap();
        // Singletons: (0, 1) for bidder 0, (3, 0) for bidder 1.
        assert_eq!(singleton_max(&mixed), 3.0);
    }

    #[test]
    fn best_direction_examples() {
        let g = GradientEstimate::from_rows(&[vec![0.9, -0.2], vec![0.5, 0.1]], GradientMode::Exact);
        assert_eq!(best_direction(&g).rows(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let g = GradientEstimate::from_rows(&[vec![-1.0], vec![-0.1]], GradientMode::Exact);
        assert_eq!(best_direction(&g).rows(), vec![vec![0.0], vec![0.0]]);
        let g = GradientEstimate::from_rows(&[vec![0.4], vec![0.4]], GradientMode::Exact);
        assert_eq!(best_direction(&g).rows(), vec![vec![1.0], vec![0.0]]);
    }

    #[test]
    fn zero_valuations_stop_immediately() {
        let inst = AuctionInstance::new(2, vec![WmrsValuation::zero(2); 2]).unwrap();
        let (x, trace) = local_search(&inst, &LocalSearchConfig::exact(0.1)).unwrap();
        assert_eq!(x, FractionalPoint::zeros(2, 2));
        assert_eq!(trace.iterations, 0);
        assert_eq!(trace.termination, Termination::Converged);
    }

    #[test]
    fn single_item_reaches_closed_form_optimum() {
        let inst = AuctionInstance::new(1, vec![single(1.0, MatroidSpec::uniform(1, 1))]).unwrap();
        let (x, trace) = local_search(&inst, &LocalSearchConfig::exact(0.1)).unwrap();
        let f = exact_fexp(&inst, &x).unwrap();
        assert!(f >= 0.9 * (1.0 - (-1.0f64).exp()), "{f}");
        assert_eq!(trace.termination, Termination::Converged);
        assert_eq!(trace.final_fexp, Some(f));
        let values: Vec<f64> = trace.records.iter().filter_map(|r| r.fexp).collect();
        assert!(values.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn sampled_mode_converges_on_a_tiny_instance() {
        let inst = AuctionInstance::new(1, vec![single(1.0, MatroidSpec::uniform(1, 1))]).unwrap();
        let cfg = LocalSearchConfig::sampled(0.5, 0.01, 3);
        let (x, trace) = local_search(&inst, &cfg).unwrap();
        assert_eq!(trace.termination, Termination::Converged);
        assert!(trace.records.iter().all(|r| r.fexp.is_none()));
        let f = exact_fexp(&inst, &x).unwrap();
        assert!(f >= 0.5 * (1.0 - (-1.0f64).exp()));
    }

    #[test]
    fn iteration_cap_override_is_honoured() {
        let inst = AuctionInstance::new(1, vec![single(1.0, MatroidSpec::uniform(1, 1))]).unwrap();
        let mut cfg = LocalSearchConfig::exact(0.1);
        cfg.iteration_cap_override = Some(5);
        let (_, trace) = local_search(&inst, &cfg).unwrap();
        assert_eq!(trace.iterations, 5);
        assert_eq!(trace.termination, Termination::CapReached);
    }

    #[test]
    fn rounding_examples() {
        let x = FractionalPoint::zeros(2, 3);
        for s in 0..20 {
            assert_eq!(poisson_round(&x, s).unwrap(), Allocation::empty(3));
        }
        assert!(poisson_round(&FractionalPoint::matrix(&[vec![0.7], vec![0.7]]).unwrap(), 0).is_err());
    }

    #[test]
    fn allocation_helpers() {
        let a = Allocation {
            owner: vec![Some(1), None, Some(0), Some(1)],
        };
        assert_eq!(a.bundle(1), ItemSet::from_elements([0, 3]));
        assert_eq!(a.bundles(3), vec![ItemSet::singleton(2), ItemSet::from_elements([0, 3]), ItemSet::EMPTY]);
        assert_eq!(a.restricted(|i| i == 0).owner, vec![None, None, Some(0), None]);
    }
}
