//! Weighted matroid rank sum valuations and auction instances.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::itemset::{ItemSet, MAX_GROUND};
use crate::matroid::MatroidSpec;
use crate::seed::{self, Moments};

/// Largest item count for which subsets are enumerated exhaustively.
pub const ENUMERATION_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub matroid: MatroidSpec,
}

/// `v(S) = Σ_l weight_l · rank_l(S)` over matroids sharing one ground set of items.
#[derive(Debug, Clone, PartialEq)]
pub struct WmrsValuation {
    num_items: usize,
    components: Vec<Component>,
}

impl WmrsValuation {
    pub fn new(num_items: usize, components: Vec<Component>) -> Result<Self> {
        if num_items > MAX_GROUND {
            return Err(Error::validation(
                "num_items",
                format!("{num_items} items exceed the limit of {MAX_GROUND}"),
            ));
        }
        for (l, c) in components.iter().enumerate() {
            if !c.weight.is_finite() || c.weight < 0.0 {
                return Err(Error::validation(
                    format!("components[{l}].weight"),
                    format!("weight must be a finite nonnegative number, got {}", c.weight),
                ));
            }
            c.matroid.validate().map_err(|e| match e {
                Error::Validation { field, reason } => Error::Validation {
                    field: format!("components[{l}].matroid.{field}"),
                    reason,
                },
                other => other,
            })?;
            if c.matroid.ground_size() != num_items {
                return Err(Error::validation(
                    format!("components[{l}].matroid"),
                    format!(
                        "ground size {} does not match num_items {num_items}",
                        c.matroid.ground_size()
                    ),
                ));
            }
        }
        Ok(WmrsValuation {
            num_items,
            components,
        })
    }

    /// The valuation that is identically zero.
    pub fn zero(num_items: usize) -> Self {
        WmrsValuation {
            num_items,
            components: Vec::new(),
        }
    }

    /// Convenience constructor for a single weighted matroid.
    pub fn single(weight: f64, matroid: MatroidSpec) -> Result<Self> {
        Self::new(matroid.ground_size(), vec![Component { weight, matroid }])
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Every weight multiplied by `factor` (which must be nonnegative).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.num_items,
            self.components
                .iter()
                .map(|c| Component {
                    weight: c.weight * factor,
                    matroid: c.matroid.clone(),
                })
                .collect(),
        )
    }

    pub fn value(&self, subset: ItemSet) -> Result<f64> {
        if !subset.within(self.num_items) {
            return Err(Error::Domain(format!(
                "subset {subset:?} is not contained in the {} items",
                self.num_items
            )));
        }
        Ok(self.value_unchecked(subset))
    }

    pub fn value_unchecked(&self, subset: ItemSet) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * c.matroid.rank_unchecked(subset) as f64)
            .sum()
    }

    /// Value of the full item set.
    pub fn ground_value(&self) -> f64 {
        self.value_unchecked(ItemSet::full(self.num_items))
    }

    /// `v({j})` for every item.
    pub fn singleton_values(&self) -> Vec<f64> {
        (0..self.num_items)
            .map(|j| self.value_unchecked(ItemSet::singleton(j)))
            .collect()
    }

    /// Values of all `2^m` subsets, indexed by bit pattern.
    pub fn value_table(&self) -> Result<Vec<f64>> {
        check_enumeration(self.num_items)?;
        Ok(ItemSet::all_subsets(self.num_items)
            .map(|s| self.value_unchecked(s))
            .collect())
    }
}

pub(crate) fn check_enumeration(num_items: usize) -> Result<()> {
    if num_items > ENUMERATION_LIMIT {
        return Err(Error::budget(
            "subset enumeration (items)",
            num_items as u128,
            ENUMERATION_LIMIT as u128,
        ));
    }
    Ok(())
}

/// Probability of every subset under independent inclusion with marginals `probs`,
/// indexed by bit pattern.
pub fn subset_probabilities(probs: &[f64]) -> Vec<f64> {
    let mut table = vec![0.0; 1 << probs.len()];
    table[0] = 1.0;
    for (j, &p) in probs.iter().enumerate() {
        let half = 1usize << j;
        for s in 0..half {
            let base = table[s];
            table[s] = base * (1.0 - p);
            table[s | half] = base * p;
        }
    }
    table
}

fn check_probs(probs: &[f64], num_items: usize) -> Result<()> {
    if probs.len() != num_items {
        return Err(Error::Domain(format!(
            "{} probabilities for {num_items} items",
            probs.len()
        )));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

/// `E[v(R)]` where each item `j` is in `R` independently with probability `probs[j]`,
/// by summing over all subsets.
pub fn exact_lottery_value(v: &WmrsValuation, probs: &[f64]) -> Result<f64> {
    check_enumeration(v.num_items())?;
    check_probs(probs, v.num_items())?;
    let table = v.value_table()?;
    Ok(lottery_value_from_table(&table, probs))
}

pub(crate) fn lottery_value_from_table(table: &[f64], probs: &[f64]) -> f64 {
    subset_probabilities(probs)
        .iter()
        .zip(table)
        .map(|(p, v)| p * v)
        .sum()
}

/// A Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: u64,
}

impl From<Moments> for Estimate {
    fn from(m: Moments) -> Self {
        Estimate {
            estimate: m.mean,
            stderr: m.stderr(),
            samples: m.count,
        }
    }
}

pub(crate) fn sample_subset(rng: &mut seed::Rng, probs: &[f64]) -> ItemSet {
    let mut bits = 0u64;
    for (j, &p) in probs.iter().enumerate() {
        if rng.random::<f64>() < p {
            bits |= 1 << j;
        }
    }
    ItemSet(bits)
}

/// Monte-Carlo estimate of [`exact_lottery_value`] from `num_samples` independent
/// roundings.
pub fn sampled_lottery_value(
    v: &WmrsValuation,
    probs: &[f64],
    num_samples: u64,
    rng_seed: u64,
) -> Result<Estimate> {
    if num_samples == 0 {
        return Err(Error::Domain("num_samples must be at least 1".into()));
    }
    check_probs(probs, v.num_items())?;
    let moments = seed::sample_moments(rng_seed, "lottery", num_samples, |rng| {
        v.value_unchecked(sample_subset(rng, probs))
    });
    Ok(moments.into())
}

/// `n` bidders with WMRS valuations over a common set of `m` items.
#[derive(Debug, Clone, PartialEq)]
pub struct AuctionInstance {
    num_items: usize,
    valuations: Vec<WmrsValuation>,
}

impl AuctionInstance {
    pub fn new(num_items: usize, valuations: Vec<WmrsValuation>) -> Result<Self> {
        if valuations.is_empty() {
            return Err(Error::validation("bidders", "at least one bidder is required"));
        }
        if num_items == 0 {
            return Err(Error::validation("num_items", "at least one item is required"));
        }
        if num_items > MAX_GROUND {
            return Err(Error::validation(
                "num_items",
                format!("{num_items} items exceed the limit of {MAX_GROUND}"),
            ));
        }
        for (i, v) in valuations.iter().enumerate() {
            if v.num_items() != num_items {
                return Err(Error::validation(
                    format!("bidders[{i}]"),
                    format!("valuation over {} items, instance has {num_items}", v.num_items()),
                ));
            }
        }
        Ok(AuctionInstance {
            num_items,
            valuations,
        })
    }

    pub fn num_bidders(&self) -> usize {
        self.valuations.len()
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn valuations(&self) -> &[WmrsValuation] {
        &self.valuations
    }

    pub fn valuation(&self, bidder: usize) -> &WmrsValuation {
        &self.valuations[bidder]
    }

    /// The same instance with bidder `bidder`'s valuation replaced.
    pub fn with_valuation(&self, bidder: usize, v: WmrsValuation) -> Result<Self> {
        let mut valuations = self.valuations.clone();
        valuations[bidder] = v;
        Self::new(self.num_items, valuations)
    }

    /// The instance without bidder `bidder`, over the same items. Remaining bidders keep
    /// their relative order; `None` when `bidder` is the only one.
    pub fn without_bidder(&self, bidder: usize) -> Option<Self> {
        if self.valuations.len() < 2 {
            return None;
        }
        let valuations = self
            .valuations
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != bidder)
            .map(|(_, v)| v.clone())
            .collect();
        Some(AuctionInstance {
            num_items: self.num_items,
            valuations,
        })
    }

    /// `Σ_i v_i(S_i)` for the bundles of an allocation.
    pub fn welfare_of_bundles(&self, bundles: &[ItemSet]) -> f64 {
        self.valuations
            .iter()
            .zip(bundles)
            .map(|(v, &s)| v.value_unchecked(s))
            .sum()
    }
}
