//! Approximately maximal-in-distributional-range allocation and an approximately
//! truthful-in-expectation mechanism for combinatorial auctions whose bidders hold
//! weighted matroid rank sum (WMRS) valuations.
//!
//! The crate is organised bottom-up:
//!
//! * [`matroid`]: rank oracles (uniform, partition, graphic, paving, explicit).
//! * [`valuation`]: WMRS value oracles, auction instances and single-bidder lottery values.
//! * [`extension`]: the multilinear extension `F`, the surrogate `F^exp(x) = F(1 - e^-x)`
//!   and its gradient, exact and sampled.
//! * [`local_search`]: the conditional-gradient local search over the allocation polytope
//!   and Poisson rounding to integral allocations.
//! * [`mechanism`]: the relevance/activity filtered VCG-like mechanism with its ground-set
//!   lottery.
//! * [`reference`]: brute-force and certified oracles used by tests and experiments.
//! * [`hardness`]: paving matroids that encode perfect-matching counts in their average rank.

pub mod error;
pub mod extension;
pub mod generate;
pub mod hardness;
pub mod itemset;
pub mod local_search;
pub mod matroid;
pub mod mechanism;
pub mod reference;
pub mod seed;
pub mod valuation;

pub use error::{Error, Result};
pub use itemset::ItemSet;
