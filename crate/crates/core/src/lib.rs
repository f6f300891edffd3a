//! Subgroup discovery over discrete tabular data: sampled beam search,
//! weighted ranking, an exhaustive reference search and a subgroup map.
//!
//! Scoring types are generic over the float type; the aliases below fix it
//! to `f64`, which is what the service and command line use.

pub mod bitset;
pub mod dataset;
pub mod discovery;
pub mod error;
pub mod index;
pub mod map;
pub mod oracle;
pub mod ranking;
pub mod rules;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};

pub type Spec = ranking::RankingSpec<f64>;
pub type Config = discovery::DiscoveryConfig<f64>;
pub type Subgroup = discovery::SubgroupResult<f64>;
pub type Metrics = ranking::SplitMetrics<f64>;
pub type Scores = ranking::ScoreVector<f64>;
