//! The multilinear extension of the aggregate valuation and its exponential surrogate.
//!
//! For an allocation matrix `y ∈ [0,1]^{n×m}`, `F(y)` is the expected welfare when
//! bidder `i` receives item `j` independently with probability `y_ij`. Because the
//! aggregate valuation is a sum of per-bidder valuations over disjoint rows of
//! coordinates, `F(y) = Σ_i F_i(y_i)` with `F_i` bidder `i`'s own lottery value. The
//! surrogate is `F^exp(x) = F(1 - e^{-x})`, whose partial derivatives are
//! `e^{-x_ij} · ∂F_i/∂y_ij`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::itemset::ItemSet;
use crate::seed;
use crate::valuation::{
    check_enumeration, lottery_value_from_table, sample_subset, subset_probabilities,
    AuctionInstance, WmrsValuation,
};

/// Slack allowed on the per-item column constraint `Σ_i x_ij ≤ 1`.
pub const COLUMN_SLACK: f64 = 1e-12;

/// Item counts up to this size get a precomputed value table for sampling.
const TABLE_LIMIT: usize = 16;

/// An `n × m` matrix stored row-major; row `i` belongs to bidder `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionalPoint {
    num_bidders: usize,
    num_items: usize,
    x: Vec<f64>,
}

impl FractionalPoint {
    pub fn zeros(num_bidders: usize, num_items: usize) -> Self {
        FractionalPoint {
            num_bidders,
            num_items,
            x: vec![0.0; num_bidders * num_items],
        }
    }

    /// Builds a point from rows, checking `[0,1]` entries and column sums.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = Self::matrix(rows)?;
        p.check_feasible()?;
        Ok(p)
    }

    /// Builds an arbitrary `[0,1]` matrix without the column-sum constraint.
    pub fn matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let num_bidders = rows.len();
        let num_items = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != num_items) {
            return Err(Error::Domain("rows have unequal lengths".into()));
        }
        let x: Vec<f64> = rows.iter().flatten().copied().collect();
        if let Some(v) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("entry {v} outside [0, 1]")));
        }
        Ok(FractionalPoint {
            num_bidders,
            num_items,
            x,
        })
    }

    pub fn num_bidders(&self) -> usize {
        self.num_bidders
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.num_items + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.x[i * self.num_items + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.num_items..(i + 1) * self.num_items]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.num_bidders).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.x
    }

    pub fn column_sum(&self, j: usize) -> f64 {
        (0..self.num_bidders).map(|i| self.get(i, j)).sum()
    }

    /// Membership in the allocation polytope.
    pub fn check_feasible(&self) -> Result<()> {
        if let Some(v) = self.x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("entry {v} outside [0, 1]")));
        }
        for j in 0..self.num_items {
            let s = self.column_sum(j);
            if s > 1.0 + COLUMN_SLACK {
                return Err(Error::Domain(format!("item {j} has total mass {s} > 1")));
            }
        }
        Ok(())
    }

    /// `y_ij = 1 - e^{-x_ij}`.
    pub fn exp_map(&self) -> FractionalPoint {
        FractionalPoint {
            num_bidders: self.num_bidders,
            num_items: self.num_items,
            x: self.x.iter().map(|&v| -(-v).exp_m1()).collect(),
        }
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.x.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    fn check_shape(&self, instance: &AuctionInstance) -> Result<()> {
        if self.num_bidders != instance.num_bidders() || self.num_items != instance.num_items() {
            return Err(Error::Domain(format!(
                "point is {}x{}, instance is {}x{}",
                self.num_bidders,
                self.num_items,
                instance.num_bidders(),
                instance.num_items()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientMode {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub num_bidders: usize,
    pub num_items: usize,
    /// Row-major `n × m` coordinates.
    pub g: Vec<f64>,
    pub mode: GradientMode,
    /// Additive per-coordinate error bound; 0 for exact gradients.
    pub claimed_error: f64,
    /// Marginal samples per coordinate (sampled mode only).
    pub samples_per_coordinate: u64,
}

impl GradientEstimate {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.g[i * self.num_items + j]
    }

    pub fn from_rows(rows: &[Vec<f64>], mode: GradientMode) -> Self {
        GradientEstimate {
            num_bidders: rows.len(),
            num_items: rows.first().map_or(0, Vec::len),
            g: rows.iter().flatten().copied().collect(),
            mode,
            claimed_error: 0.0,
            samples_per_coordinate: 0,
        }
    }

    pub fn max_abs_deviation(&self, other: &GradientEstimate) -> f64 {
        self.g
            .iter()
            .zip(&other.g)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Per-bidder value lookups: a table of all subsets for small item counts,
/// otherwise direct evaluation.
#[derive(Debug, Clone)]
enum BidderValues {
    Table(Vec<f64>),
    Direct(WmrsValuation),
}

impl BidderValues {
    fn new(v: &WmrsValuation) -> Self {
        match v.num_items() <= TABLE_LIMIT {
            true => BidderValues::Table(v.value_table().expect("within enumeration limit")),
            false => BidderValues::Direct(v.clone()),
        }
    }

    #[inline]
    fn value(&self, s: ItemSet) -> f64 {
        match self {
            BidderValues::Table(t) => t[s.bits() as usize],
            BidderValues::Direct(v) => v.value_unchecked(s),
        }
    }
}

/// Value oracle for a whole instance; caches per-bidder subset tables when small.
#[derive(Debug, Clone)]
pub struct InstanceOracle {
    num_items: usize,
    bidders: Vec<BidderValues>,
}

impl InstanceOracle {
    pub fn new(instance: &AuctionInstance) -> Self {
        InstanceOracle {
            num_items: instance.num_items(),
            bidders: instance.valuations().iter().map(BidderValues::new).collect(),
        }
    }

    pub fn num_bidders(&self) -> usize {
        self.bidders.len()
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    #[inline]
    pub fn value(&self, bidder: usize, s: ItemSet) -> f64 {
        self.bidders[bidder].value(s)
    }

    fn require_exact(&self) -> Result<()> {
        check_enumeration(self.num_items)
    }

    fn table(&self, bidder: usize) -> std::borrow::Cow<'_, [f64]> {
        match &self.bidders[bidder] {
            BidderValues::Table(t) => std::borrow::Cow::Borrowed(t),
            BidderValues::Direct(v) => std::borrow::Cow::Owned(
                ItemSet::all_subsets(self.num_items)
                    .map(|s| v.value_unchecked(s))
                    .collect(),
            ),
        }
    }

    /// Bidder `i`'s lottery value at row marginals `y`.
    pub fn row_value(&self, bidder: usize, y: &[f64]) -> Result<f64> {
        self.require_exact()?;
        Ok(lottery_value_from_table(&self.table(bidder), y))
    }

    /// `F(y)` by exhaustive enumeration.
    pub fn f(&self, y: &FractionalPoint) -> Result<f64> {
        self.require_exact()?;
        Ok((0..self.bidders.len())
            .map(|i| lottery_value_from_table(&self.table(i), y.row(i)))
            .sum())
    }

    /// `F^exp(x)` by exhaustive enumeration.
    pub fn fexp(&self, x: &FractionalPoint) -> Result<f64> {
        self.f(&x.exp_map())
    }

    /// `F^exp(x)` and its exact gradient.
    pub fn fexp_and_grad(&self, x: &FractionalPoint) -> Result<(f64, GradientEstimate)> {
        self.require_exact()?;
        let m = self.num_items;
        let y = x.exp_map();
        let mut total = 0.0;
        let mut g = vec![0.0; self.bidders.len() * m];
        for i in 0..self.bidders.len() {
            let table = self.table(i);
            let probs = subset_probabilities(y.row(i));
            total += probs.iter().zip(table.iter()).map(|(p, v)| p * v).sum::<f64>();
            for j in 0..m {
                let bit = 1usize << j;
                // P_{-j}(S) = p(S) + p(S + j) for S not containing j.
                let mut partial = 0.0;
                for s in (0..probs.len()).filter(|s| s & bit == 0) {
                    partial += (probs[s] + probs[s | bit]) * (table[s | bit] - table[s]);
                }
                g[i * m + j] = (-x.get(i, j)).exp() * partial;
            }
        }
        Ok((
            total,
            GradientEstimate {
                num_bidders: self.bidders.len(),
                num_items: m,
                g,
                mode: GradientMode::Exact,
                claimed_error: 0.0,
                samples_per_coordinate: 0,
            },
        ))
    }

    /// Monte-Carlo gradient of `F^exp` at `x`; see [`sampled_grad_fexp`].
    pub fn sampled_grad(
        &self,
        x: &FractionalPoint,
        target_delta: f64,
        singleton_max: f64,
        eta: f64,
        rng_seed: u64,
    ) -> Result<GradientEstimate> {
        if target_delta.is_nan() || target_delta <= 0.0 {
            return Err(Error::Domain(format!("target_delta must be positive, got {target_delta}")));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::Domain(format!("confidence eta must lie in (0, 1), got {eta}")));
        }
        let (n, m) = (self.bidders.len(), self.num_items);
        let samples = hoeffding_samples(n * m, target_delta, eta);
        let y = x.exp_map();
        let mut g = vec![0.0; n * m];
        for i in 0..n {
            let row = y.row(i);
            for j in 0..m {
                let coord_seed = seed::derive(rng_seed, "gradient", (i * m + j) as u64);
                let moments = seed::sample_moments(coord_seed, "marginal", samples, |rng| {
                    let r = sample_subset(rng, row);
                    self.value(i, r.with(j)) - self.value(i, r.without(j))
                });
                g[i * m + j] = (-x.get(i, j)).exp() * moments.mean;
            }
        }
        Ok(GradientEstimate {
            num_bidders: n,
            num_items: m,
            g,
            mode: GradientMode::Sampled,
            claimed_error: target_delta * singleton_max,
            samples_per_coordinate: samples,
        })
    }
}

/// Samples per coordinate so that, by Hoeffding's inequality on `[0, M]`-bounded samples
/// and a union bound over `coordinates`, every coordinate mean is within
/// `target_delta · M` of its expectation with probability at least `1 - eta`:
/// `N = ⌈ln(2·coordinates/eta) / (2·target_delta²)⌉`.
pub fn hoeffding_samples(coordinates: usize, target_delta: f64, eta: f64) -> u64 {
    let n = (2.0 * coordinates.max(1) as f64 / eta).ln() / (2.0 * target_delta * target_delta);
    n.ceil().max(1.0) as u64
}

/// `F(y) = Σ_i E[v_i(R_i)]`, each item in `R_i` independently with probability `y_ij`.
pub fn exact_f(instance: &AuctionInstance, y: &FractionalPoint) -> Result<f64> {
    check_enumeration(instance.num_items())?;
    y.check_shape(instance)?;
    InstanceOracle::new(instance).f(y)
}

/// `F^exp(x) = F(1 - e^{-x})`.
pub fn exact_fexp(instance: &AuctionInstance, x: &FractionalPoint) -> Result<f64> {
    check_enumeration(instance.num_items())?;
    x.check_shape(instance)?;
    InstanceOracle::new(instance).fexp(x)
}

/// Exact gradient of `F^exp` at `x`.
pub fn exact_grad_fexp(instance: &AuctionInstance, x: &FractionalPoint) -> Result<GradientEstimate> {
    check_enumeration(instance.num_items())?;
    x.check_shape(instance)?;
    Ok(InstanceOracle::new(instance).fexp_and_grad(x)?.1)
}

/// Sampled gradient of `F^exp`: each coordinate averages
/// [`hoeffding_samples`]`(nm, target_delta, eta)` marginal values
/// `v_i(R + j) - v_i(R - j)` with `R` drawn from row `i` of `1 - e^{-x}`, scaled by
/// `e^{-x_ij}`. All coordinates are within `target_delta · singleton_max` of the exact
/// gradient with probability at least `1 - eta`.
pub fn sampled_grad_fexp(
    instance: &AuctionInstance,
    x: &FractionalPoint,
    target_delta: f64,
    singleton_max: f64,
    eta: f64,
    rng_seed: u64,
) -> Result<GradientEstimate> {
    x.check_shape(instance)?;
    InstanceOracle::new(instance).sampled_grad(x, target_delta, singleton_max, eta, rng_seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matroid::MatroidSpec;

    fn single(weight: f64, m: MatroidSpec) -> WmrsValuation {
        WmrsValuation::single(weight, m).unwrap()
    }

    #[test]
    fn f_examples() {
        let inst = AuctionInstance::new(2, vec![single(1.0, MatroidSpec::uniform(2, 1))]).unwrap();
        let ones = FractionalPoint::matrix(&[vec![1.0, 1.0]]).unwrap();
        assert_eq!(exact_f(&inst, &ones).unwrap(), 1.0);
        assert_eq!(exact_f(&inst, &FractionalPoint::zeros(1, 2)).unwrap(), 0.0);

        let u = single(1.0, MatroidSpec::uniform(1, 1));
        let inst = AuctionInstance::new(1, vec![u.clone(), u]).unwrap();
        let y = FractionalPoint::matrix(&[vec![0.5], vec![0.5]]).unwrap();
        assert!((exact_f(&inst, &y).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fexp_examples() {
        let inst = AuctionInstance::new(1, vec![single(1.0, MatroidSpec::uniform(1, 1))]).unwrap();
        let x = FractionalPoint::from_rows(&[vec![1.0]]).unwrap();
        assert!((exact_fexp(&inst, &x).unwrap() - 0.632_120_558_828_557_7).abs() < 1e-12);
        assert_eq!(exact_fexp(&inst, &FractionalPoint::zeros(1, 1)).unwrap(), 0.0);

        let inst = AuctionInstance::new(2, vec![single(1.0, MatroidSpec::uniform(2, 1))]).unwrap();
        let x = FractionalPoint::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let q = 1.0 - (-1.0f64).exp();
        assert!((exact_fexp(&inst, &x).unwrap() - (2.0 * q - q * q)).abs() < 1e-12);
        assert!((exact_fexp(&inst, &x).unwrap() - 0.864_664_716_763_387_3).abs() < 1e-12);
    }

    #[test]
    fn gradient_examples() {
        let inst = AuctionInstance::new(1, vec![single(1.0, MatroidSpec::uniform(1, 1))]).unwrap();
        let g = exact_grad_fexp(&inst, &FractionalPoint::zeros(1, 1)).unwrap();
        assert_eq!(g.g, vec![1.0]);

        // Item 1 is a loop in the partition matroid (capacity 0 block): no marginal value.
        let v = single(2.0, MatroidSpec::partition(vec![vec![0], vec![1]], vec![1, 0]));
        let inst = AuctionInstance::new(2, vec![v]).unwrap();
        let x = FractionalPoint::from_rows(&[vec![0.3, 0.6]]).unwrap();
        let g = exact_grad_fexp(&inst, &x).unwrap();
        assert_eq!(g.get(0, 1), 0.0);
        assert!((g.get(0, 0) - 2.0 * (-0.3f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn modular_rows_sample_without_error() {
        // A free matroid makes every marginal deterministic.
        let v = single(1.5, MatroidSpec::uniform(3, 3));
        let inst = AuctionInstance::new(3, vec![v.clone(), v]).unwrap();
        let x = FractionalPoint::from_rows(&[vec![0.2, 0.5, 0.1], vec![0.3, 0.4, 0.9]]).unwrap();
        let exact = exact_grad_fexp(&inst, &x).unwrap();
        for seed in 0..3 {
            let sampled = sampled_grad_fexp(&inst, &x, 0.2, 1.5, 0.1, seed).unwrap();
            assert!(exact.max_abs_deviation(&sampled) < 1e-15);
        }
    }

    #[test]
    fn large_coordinates_are_damped() {
        let v = single(1.0, MatroidSpec::uniform(2, 1));
        let inst = AuctionInstance::new(2, vec![v]).unwrap();
        let mut big = FractionalPoint::zeros(1, 2);
        big.set(0, 0, 10.0);
        let g = sampled_grad_fexp(&inst, &big, 0.1, 1.0, 0.1, 4).unwrap();
        assert!(g.get(0, 0) <= (-10.0f64).exp() * 1.0 + 1e-12);
    }

    #[test]
    fn sample_count_formula() {
        // ln(2*4/0.01) / (2 * 0.05^2) = 6.684... / 0.005
        assert_eq!(hoeffding_samples(4, 0.05, 0.01), 1337);
    }

    #[test]
    fn feasibility_checks() {
        assert!(FractionalPoint::from_rows(&[vec![0.6], vec![0.5]]).is_err());
        assert!(FractionalPoint::from_rows(&[vec![0.5], vec![0.5]]).is_ok());
        assert!(FractionalPoint::matrix(&[vec![1.2]]).is_err());
        let inst = AuctionInstance::new(1, vec![single(1.0, MatroidSpec::uniform(1, 1))]).unwrap();
        assert!(exact_fexp(&inst, &FractionalPoint::zeros(2, 1)).is_err());
    }

    #[test]
    fn sampled_gradient_rejects_bad_parameters() {
        let inst = AuctionInstance::new(1, vec![single(1.0, MatroidSpec::uniform(1, 1))]).unwrap();
        let x = FractionalPoint::zeros(1, 1);
        assert!(sampled_grad_fexp(&inst, &x, 0.0, 1.0, 0.1, 0).is_err());
        assert!(sampled_grad_fexp(&inst, &x, 0.1, 1.0, 1.0, 0).is_err());
    }
}
