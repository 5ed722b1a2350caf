//! The VCG-like mechanism built on top of the local search allocation rule.
//!
//! Given reported valuations, the mechanism
//!
//! 1. solves the full instance and every instance with one bidder removed,
//! 2. estimates each bidder's expected value `O_i` under the full solution, the total
//!    `O = Σ O_i`, and the welfare `O'_{-i}` of each bidder-removed solution,
//! 3. classifies bidder `i` as *relevant* when `V_i > Σ_{j≠i} V_j / n⁷` and *active* when
//!    it is relevant and `(1 - 1/n)(O - O'_{-i}) + V_i/(2n²) > O'_{-i}/n⁴`,
//! 4. with probability `1 - 1/n` draws an allocation from the full solution, delivers
//!    only the active bidders' bundles and charges active `i` the price
//!    `O'_{-i} - Σ_{j≠i} O_j`,
//! 5. otherwise picks a bidder uniformly: an active bidder receives the ground set for
//!    `O'_{-i}/n²`, an inactive one receives it for free with probability 1/2.
//!
//! Every random stream is derived from one master seed, see [`crate::seed`].

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extension::{FractionalPoint, GradientMode, InstanceOracle};
use crate::itemset::ItemSet;
use crate::local_search::{
    local_search_with_oracle, singleton_max, Allocation, LocalSearchConfig, PoissonRounder,
    Termination,
};
use crate::seed::{self, sample_moments_vec};
use crate::valuation::{check_enumeration, lottery_value_from_table, AuctionInstance, WmrsValuation};

/// Upper limit on the default number of roundings per welfare estimate.
pub const WELFARE_SAMPLE_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismConfig {
    /// Accuracy of the underlying local search.
    pub epsilon: f64,
    pub gradient_mode: GradientMode,
    pub eta: f64,
    /// Roundings per welfare estimate; `None` selects [`default_welfare_samples`].
    pub welfare_sample_count: Option<u64>,
    pub rng_seed: u64,
}

impl MechanismConfig {
    pub fn new(epsilon: f64, rng_seed: u64) -> Self {
        MechanismConfig {
            epsilon,
            gradient_mode: GradientMode::Exact,
            eta: 0.01,
            welfare_sample_count: None,
            rng_seed,
        }
    }

    pub fn with_welfare_samples(mut self, samples: u64) -> Self {
        self.welfare_sample_count = Some(samples);
        self
    }

    pub fn with_seed(&self, rng_seed: u64) -> Self {
        MechanismConfig {
            rng_seed,
            ..self.clone()
        }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        MechanismConfig {
            epsilon,
            ..self.clone()
        }
    }

    fn search_config(&self, solve_index: u64) -> LocalSearchConfig {
        LocalSearchConfig {
            epsilon: self.epsilon,
            gradient_mode: self.gradient_mode,
            eta: self.eta,
            rng_seed: seed::derive(self.rng_seed, "solve", solve_index),
            iteration_cap_override: None,
        }
    }

    pub fn welfare_samples(&self, num_bidders: usize, num_items: usize) -> u64 {
        self.welfare_sample_count
            .unwrap_or_else(|| default_welfare_samples(num_bidders, num_items))
    }

    fn validate(&self) -> Result<()> {
        self.search_config(0).validate()?;
        if self.welfare_sample_count == Some(0) {
            return Err(Error::Domain("welfare_sample_count must be at least 1".into()));
        }
        Ok(())
    }
}

/// `⌈(100 m n²)² · ln(2n / 0.01) / 2⌉`, capped at [`WELFARE_SAMPLE_CAP`].
pub fn default_welfare_samples(num_bidders: usize, num_items: usize) -> u64 {
    let (n, m) = (num_bidders as f64, num_items as f64);
    let scale = 100.0 * m * n * n;
    let raw = (scale * scale * (2.0 * n / 0.01).ln() / 2.0).ceil();
    if raw >= WELFARE_SAMPLE_CAP as f64 {
        WELFARE_SAMPLE_CAP
    } else {
        raw as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BidderStats {
    /// Reported value of the ground set.
    pub ground_value: f64,
    /// Estimate of the bidder's expected value under the full solution.
    pub o_i: f64,
    pub o_i_stderr: f64,
    /// Estimated welfare of the solution without this bidder.
    pub o_prime_minus_i: f64,
    pub o_prime_stderr: f64,
    pub relevant: bool,
    pub active: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Branch {
    Vcg,
    Lottery { bidder: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismOutcome {
    pub branch: Branch,
    pub allocation: Allocation,
    pub payments: Vec<f64>,
    pub stats: Vec<BidderStats>,
    /// `O = Σ_i O_i`.
    pub o_total: f64,
    pub welfare_samples: u64,
    pub welfare_samples_capped: bool,
    pub seed: u64,
}

/// `V_i > Σ_{j≠i} V_j / n⁷`.
pub fn is_relevant(ground_values: &[f64], bidder: usize) -> bool {
    let n = ground_values.len() as f64;
    let others: f64 = ground_values
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != bidder)
        .map(|(_, v)| v)
        .sum();
    ground_values[bidder] > others / n.powi(7)
}

/// `(1 - 1/n)(O - O'_{-i}) + V_i/(2n²) > O'_{-i}/n⁴`, evaluated for a relevant bidder.
pub fn activity_condition(num_bidders: usize, o_total: f64, o_prime: f64, ground_value: f64) -> bool {
    let n = num_bidders as f64;
    (1.0 - 1.0 / n) * (o_total - o_prime) + ground_value / (2.0 * n * n) > o_prime / n.powi(4)
}

#[derive(Debug, Clone)]
struct Solve {
    point: FractionalPoint,
    rounder: PoissonRounder,
    oracle: InstanceOracle,
    iterations: u64,
    termination: Termination,
}

fn solve(instance: &AuctionInstance, config: &LocalSearchConfig) -> Result<Solve> {
    let oracle = InstanceOracle::new(instance);
    let (point, trace) = local_search_with_oracle(&oracle, singleton_max(instance), config)?;
    Ok(Solve {
        rounder: PoissonRounder::new(&point)?,
        point,
        oracle,
        iterations: trace.iterations,
        termination: trace.termination,
    })
}

/// A summary of one local search solve inside the mechanism.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    /// `None` for the full instance, otherwise the removed bidder.
    pub removed_bidder: Option<usize>,
    pub iterations: u64,
    pub termination: Termination,
}

/// The mechanism with every local search already solved, ready to be run with
/// different seeds for the estimation and branch randomness.
///
/// In exact-gradient mode the solves do not depend on the seed, so one prepared
/// mechanism reproduces [`run_mechanism`] for every seed.
#[derive(Debug, Clone)]
pub struct PreparedMechanism {
    instance: AuctionInstance,
    config: MechanismConfig,
    full: Solve,
    without: Vec<Option<Solve>>,
    ground_values: Vec<f64>,
}

impl PreparedMechanism {
    /// Solves the full instance and all `n` bidder-removed instances.
    pub fn new(instance: &AuctionInstance, config: &MechanismConfig) -> Result<Self> {
        let n = instance.num_bidders();
        Self::with_removed(instance, config, &(0..n).collect::<Vec<_>>())
    }

    /// Solves the full instance and only the listed bidder-removed instances.
    pub fn with_removed(
        instance: &AuctionInstance,
        config: &MechanismConfig,
        removed: &[usize],
    ) -> Result<Self> {
        let n = instance.num_bidders();
        if n < 2 {
            return Err(Error::Unsupported(
                "the mechanism needs at least two bidders; a single bidder is served by giving it every item for free".into(),
            ));
        }
        config.validate()?;
        let jobs: Vec<Option<usize>> = std::iter::once(None)
            .chain(removed.iter().map(|&i| Some(i)))
            .collect();
        let solves: Vec<Solve> = jobs
            .par_iter()
            .map(|job| match job {
                None => solve(instance, &config.search_config(0)),
                Some(i) => {
                    let sub = instance.without_bidder(*i).expect("n >= 2");
                    solve(&sub, &config.search_config(1 + *i as u64))
                }
            })
            .collect::<Result<_>>()?;
        let mut solves = solves.into_iter();
        let full = solves.next().expect("full solve");
        let mut without = vec![None; n];
        for (&i, s) in removed.iter().zip(solves) {
            without[i] = Some(s);
        }
        Ok(PreparedMechanism {
            ground_values: instance.valuations().iter().map(WmrsValuation::ground_value).collect(),
            instance: instance.clone(),
            config: config.clone(),
            full,
            without,
        })
    }

    pub fn instance(&self) -> &AuctionInstance {
        &self.instance
    }

    pub fn config(&self) -> &MechanismConfig {
        &self.config
    }

    /// The fractional solution of the full instance.
    pub fn full_point(&self) -> &FractionalPoint {
        &self.full.point
    }

    pub fn solves(&self) -> Vec<SolveSummary> {
        std::iter::once((None, &self.full))
            .chain(
                self.without
                    .iter()
                    .enumerate()
                    .filter_map(|(i, s)| s.as_ref().map(|s| (Some(i), s))),
            )
            .map(|(removed_bidder, s)| SolveSummary {
                removed_bidder,
                iterations: s.iterations,
                termination: s.termination,
            })
            .collect()
    }

    fn welfare_samples(&self) -> u64 {
        self.config
            .welfare_samples(self.instance.num_bidders(), self.instance.num_items())
    }

    /// `(O_i, stderr)` for every bidder from independent roundings of the full solution.
    fn estimate_values(&self, master: u64) -> Vec<(f64, f64)> {
        let n = self.instance.num_bidders();
        let moments = sample_moments_vec(
            seed::derive(master, "welfare", 0),
            "full",
            self.welfare_samples(),
            n,
            |rng, bundles: &mut Vec<ItemSet>, out| {
                bundles.resize(n, ItemSet::EMPTY);
                self.full.rounder.sample_bundles(rng, bundles);
                for (i, o) in out.iter_mut().enumerate() {
                    *o = self.full.oracle.value(i, bundles[i]);
                }
            },
        );
        moments.iter().map(|m| (m.mean, m.stderr())).collect()
    }

    /// `(O'_{-i}, stderr)` from roundings of the bidder-removed solution.
    fn estimate_without(&self, master: u64, bidder: usize) -> Result<(f64, f64)> {
        let s = self.without[bidder].as_ref().ok_or_else(|| {
            Error::Internal(format!("no solve prepared without bidder {bidder}"))
        })?;
        let n = s.oracle.num_bidders();
        let moments = sample_moments_vec(
            seed::derive(master, "welfare", 1 + bidder as u64),
            "without",
            self.welfare_samples(),
            1,
            |rng, bundles: &mut Vec<ItemSet>, out| {
                bundles.resize(n, ItemSet::EMPTY);
                s.rounder.sample_bundles(rng, bundles);
                out[0] = (0..n).map(|i| s.oracle.value(i, bundles[i])).sum();
            },
        );
        Ok((moments[0].mean, moments[0].stderr()))
    }

    /// Step 2 and 3 estimates for every bidder.
    pub fn estimate_stats(&self, master: u64) -> Result<(Vec<BidderStats>, f64)> {
        let n = self.instance.num_bidders();
        let values = self.estimate_values(master);
        let o_total: f64 = values.iter().map(|v| v.0).sum();
        let stats = (0..n)
            .map(|i| self.stats_for(i, &values, o_total, self.estimate_without(master, i)?))
            .collect::<Result<Vec<_>>>()?;
        Ok((stats, o_total))
    }

    /// Estimates needed for bidder `bidder` alone: all `O_j` and its own `O'_{-i}`.
    pub fn estimate_bidder(&self, master: u64, bidder: usize) -> Result<(BidderStats, f64)> {
        let values = self.estimate_values(master);
        let o_total: f64 = values.iter().map(|v| v.0).sum();
        let without = self.estimate_without(master, bidder)?;
        Ok((self.stats_for(bidder, &values, o_total, without)?, o_total))
    }

    fn stats_for(
        &self,
        i: usize,
        values: &[(f64, f64)],
        o_total: f64,
        (o_prime, o_prime_stderr): (f64, f64),
    ) -> Result<BidderStats> {
        let relevant = is_relevant(&self.ground_values, i);
        let active = relevant
            && activity_condition(self.instance.num_bidders(), o_total, o_prime, self.ground_values[i]);
        Ok(BidderStats {
            ground_value: self.ground_values[i],
            o_i: values[i].0,
            o_i_stderr: values[i].1,
            o_prime_minus_i: o_prime,
            o_prime_stderr,
            relevant,
            active,
        })
    }

    /// One run of the mechanism whose estimation and branch randomness derive from
    /// `master`.
    pub fn run(&self, master: u64) -> Result<MechanismOutcome> {
        let (stats, o_total) = self.estimate_stats(master)?;
        let n = self.instance.num_bidders();
        let m = self.instance.num_items();
        let nf = n as f64;

        let mut branch_rng = seed::rng(seed::derive(master, "branch", 0));
        let (branch, allocation, payments) = if branch_rng.random::<f64>() < 1.0 - 1.0 / nf {
            let mut alloc_rng = seed::rng(seed::derive(master, "allocation", 0));
            let allocation = self
                .full
                .rounder
                .sample(&mut alloc_rng)
                .restricted(|i| stats[i].active);
            let payments = stats
                .iter()
                .map(|s| if s.active { vcg_price(s, o_total) } else { 0.0 })
                .collect();
            (Branch::Vcg, allocation, payments)
        } else {
            let chosen = branch_rng.random_range(0..n);
            let mut payments = vec![0.0; n];
            let allocation = if stats[chosen].active {
                payments[chosen] = stats[chosen].o_prime_minus_i / (nf * nf);
                Allocation::ground_set_to(chosen, m)
            } else if branch_rng.random::<bool>() {
                Allocation::ground_set_to(chosen, m)
            } else {
                Allocation::empty(m)
            };
            (Branch::Lottery { bidder: chosen }, allocation, payments)
        };

        let welfare_samples = self.welfare_samples();
        Ok(MechanismOutcome {
            branch,
            allocation,
            payments,
            stats,
            o_total,
            welfare_samples,
            welfare_samples_capped: self.config.welfare_sample_count.is_none()
                && welfare_samples == WELFARE_SAMPLE_CAP,
            seed: master,
        })
    }

    /// Expected utility of `bidder` with true valuation `truth`, conditioned on the
    /// estimates drawn from `master` and averaged exactly over the branch, the bidder
    /// draw, the free-lottery coin and the allocation.
    pub fn conditional_utility(&self, master: u64, bidder: usize, truth: &WmrsValuation) -> Result<f64> {
        check_enumeration(self.instance.num_items())?;
        let (stats, o_total) = self.estimate_bidder(master, bidder)?;
        let nf = self.instance.num_bidders() as f64;
        let true_ground = truth.ground_value();
        let (vcg, lottery) = if stats.active {
            let y = self.full.point.exp_map();
            let expected_value = lottery_value_from_table(&truth.value_table()?, y.row(bidder));
            (
                expected_value - vcg_price(&stats, o_total),
                true_ground - stats.o_prime_minus_i / (nf * nf),
            )
        } else {
            (0.0, 0.5 * true_ground)
        };
        Ok((1.0 - 1.0 / nf) * vcg + lottery / (nf * nf))
    }
}

/// `p_i = O'_{-i} - Σ_{j≠i} O_j`.
fn vcg_price(stats: &BidderStats, o_total: f64) -> f64 {
    stats.o_prime_minus_i - (o_total - stats.o_i)
}

/// Step 2 and 3: per-bidder estimates and `O` for the reported instance.
pub fn estimate_stats(instance: &AuctionInstance, config: &MechanismConfig) -> Result<(Vec<BidderStats>, f64)> {
    PreparedMechanism::new(instance, config)?.estimate_stats(config.rng_seed)
}

/// One full run of the mechanism on reported valuations.
pub fn run_mechanism(instance: &AuctionInstance, config: &MechanismConfig) -> Result<MechanismOutcome> {
    PreparedMechanism::new(instance, config)?.run(config.rng_seed)
}

/// How [`utility_of_report`] averages over the mechanism's randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityEstimator {
    /// Each trial runs the whole mechanism and records the realized utility.
    Simulated,
    /// Each trial draws the estimates and takes the exact expectation over everything
    /// else (requires at most 20 items).
    Conditional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub mean: f64,
    pub stderr: f64,
    pub trials: u64,
    /// Per-trial utilities in trial order.
    pub samples: Vec<f64>,
}

impl UtilityReport {
    fn from_samples(samples: Vec<f64>) -> Self {
        let mut m = seed::Moments::default();
        samples.iter().for_each(|&u| m.push(u));
        UtilityReport {
            mean: m.mean,
            stderr: m.stderr(),
            trials: m.count,
            samples,
        }
    }
}

/// Seed of trial `t` under master seed `master`.
pub fn trial_seed(master: u64, t: u64) -> u64 {
    seed::derive(master, "trial", t)
}

/// Expected utility `E[v*_i(S_i) - p_i]` of `bidder` when it reports `reported` and
/// everyone else reports `instance_true` truthfully, averaged over `trials` runs with
/// seeds [`trial_seed`]`(config.rng_seed, t)`.
pub fn utility_of_report(
    instance_true: &AuctionInstance,
    bidder: usize,
    reported: &WmrsValuation,
    config: &MechanismConfig,
    trials: u64,
    estimator: UtilityEstimator,
) -> Result<UtilityReport> {
    if trials == 0 {
        return Err(Error::Domain("trials must be at least 1".into()));
    }
    if bidder >= instance_true.num_bidders() {
        return Err(Error::Domain(format!("no bidder {bidder}")));
    }
    let truth = instance_true.valuation(bidder).clone();
    let reported_instance = instance_true.with_valuation(bidder, reported.clone())?;
    let prepare = |cfg: &MechanismConfig| -> Result<PreparedMechanism> {
        match estimator {
            UtilityEstimator::Simulated => PreparedMechanism::new(&reported_instance, cfg),
            UtilityEstimator::Conditional => {
                PreparedMechanism::with_removed(&reported_instance, cfg, &[bidder])
            }
        }
    };
    let one_trial = |prepared: &PreparedMechanism, master: u64| -> Result<f64> {
        match estimator {
            UtilityEstimator::Simulated => {
                let outcome = prepared.run(master)?;
                let bundle = outcome.allocation.bundle(bidder);
                Ok(truth.value_unchecked(bundle) - outcome.payments[bidder])
            }
            UtilityEstimator::Conditional => prepared.conditional_utility(master, bidder, &truth),
        }
    };

    let samples = if config.gradient_mode == GradientMode::Exact {
        let prepared = prepare(config)?;
        (0..trials)
            .map(|t| one_trial(&prepared, trial_seed(config.rng_seed, t)))
            .collect::<Result<Vec<_>>>()?
    } else {
        (0..trials)
            .map(|t| {
                let master = trial_seed(config.rng_seed, t);
                one_trial(&prepare(&config.with_seed(master))?, master)
            })
            .collect::<Result<Vec<_>>>()?
    };
    Ok(UtilityReport::from_samples(samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matroid::MatroidSpec;

    fn symmetric() -> AuctionInstance {
        let v = WmrsValuation::single(1.0, MatroidSpec::uniform(2, 1)).unwrap();
        AuctionInstance::new(2, vec![v.clone(), v]).unwrap()
    }

    #[test]
    fn relevance_threshold_arithmetic() {
        assert!(is_relevant(&[1.0, 1.0], 0));
        assert!(!is_relevant(&[0.0, 1.0], 0));
        // Boundary equality is not relevant: 1/128 vs 1/2^7.
        assert!(!is_relevant(&[1.0 / 128.0, 1.0], 0));
        assert!(is_relevant(&[1.0 / 127.0, 1.0], 0));
    }

    #[test]
    fn activity_boundary_is_inactive() {
        // n = 2: 0.5 (O - O') + V/8 > O'/16. With O = O' = 16 and V = 8: 1 > 1 fails.
        assert!(!activity_condition(2, 16.0, 16.0, 8.0));
        assert!(activity_condition(2, 16.0, 16.0, 8.000_001));
    }

    #[test]
    fn single_bidder_is_unsupported() {
        let v = WmrsValuation::single(1.0, MatroidSpec::uniform(2, 1)).unwrap();
        let inst = AuctionInstance::new(2, vec![v]).unwrap();
        assert!(matches!(
            run_mechanism(&inst, &MechanismConfig::new(0.1, 0)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn default_welfare_sample_count() {
        // n = 2, m = 1: (400)^2 * ln(400) / 2 = 479_317.2...
        assert_eq!(default_welfare_samples(2, 1), 479_318);
        assert_eq!(default_welfare_samples(3, 3), WELFARE_SAMPLE_CAP);
    }

    #[test]
    fn zero_valued_bidder_is_inactive_and_unpaid() {
        let v = WmrsValuation::single(1.0, MatroidSpec::uniform(2, 1)).unwrap();
        let inst = AuctionInstance::new(2, vec![v, WmrsValuation::zero(2)]).unwrap();
        let cfg = MechanismConfig::new(0.1, 5).with_welfare_samples(500);
        let prepared = PreparedMechanism::new(&inst, &cfg).unwrap();
        for s in 0..50 {
            let out = prepared.run(s).unwrap();
            assert!(!out.stats[1].relevant && !out.stats[1].active);
            assert_eq!(out.payments[1], 0.0);
            if out.branch == Branch::Vcg {
                assert!(out.allocation.bundle(1).is_empty());
            }
        }
    }

    #[test]
    fn symmetric_bidders_are_relevant_and_pay_vcg_prices() {
        let cfg = MechanismConfig::new(0.1, 11).with_welfare_samples(20_000);
        let prepared = PreparedMechanism::new(&symmetric(), &cfg).unwrap();
        for s in 0..20 {
            let out = prepared.run(s).unwrap();
            assert!(out.stats.iter().all(|st| st.relevant));
            for (i, st) in out.stats.iter().enumerate() {
                if out.branch == Branch::Vcg && st.active {
                    let others = out.o_total - st.o_i;
                    assert_eq!(out.payments[i] + others, st.o_prime_minus_i);
                }
                if let Branch::Lottery { bidder } = out.branch {
                    if bidder == i && st.active {
                        assert_eq!(out.payments[i], st.o_prime_minus_i / 4.0);
                    }
                }
                if !st.active {
                    assert_eq!(out.payments[i], 0.0);
                }
            }
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = MechanismConfig::new(0.1, 3).with_welfare_samples(5_000);
        assert_eq!(
            run_mechanism(&symmetric(), &cfg).unwrap(),
            run_mechanism(&symmetric(), &cfg).unwrap()
        );
    }

    #[test]
    fn zero_report_gets_the_free_lottery_utility() {
        let inst = symmetric();
        let cfg = MechanismConfig::new(0.1, 1).with_welfare_samples(200);
        let truth_v = inst.valuation(0).ground_value();
        let expected = truth_v / 8.0;
        let conditional = utility_of_report(
            &inst,
            0,
            &WmrsValuation::zero(2),
            &cfg,
            4,
            UtilityEstimator::Conditional,
        )
        .unwrap();
        assert!(conditional.samples.iter().all(|&u| u == expected));
        let simulated = utility_of_report(
            &inst,
            0,
            &WmrsValuation::zero(2),
            &cfg,
            20_000,
            UtilityEstimator::Simulated,
        )
        .unwrap();
        assert!(
            (simulated.mean - expected).abs() <= 4.0 * simulated.stderr,
            "{} vs {expected} (se {})",
            simulated.mean,
            simulated.stderr
        );
    }
}
