//! Design and analysis of two-sided rating protocols for the service
//! exchange dilemma: a population of anonymous users alternates between
//! requesting services (clients) and providing them (servers), and a binary
//! rating scheme with noisy reports is used to sustain cooperation.
//!
//! The crate is organized as:
//! - [`model`]: protocol primitives (parameters, ratings, strategies, stage games)
//! - [`analysis`]: stationary rating distributions, utilities, social welfare
//! - [`incentives`]: sustainability conditions and deviation-gain oracles
//! - [`design`]: optimal protocol design (constraint solving, alternating
//!   optimization, grid oracle, strategy selection)
//! - [`sim`]: agent-based Monte Carlo simulator for empirical validation

pub mod analysis;
pub mod design;
pub mod incentives;
pub mod model;
pub mod sim;
pub mod util;

pub use analysis::{
    mixing_coefficients, one_period_utility, social_welfare, stationary_distribution,
    transition_kernel, utility_gap, MixingCoefficients, StationaryDist,
};
pub use design::{alternate_optimize, grid_oracle, select_protocol, DesignResult};
pub use incentives::{
    deviation_gain_direct, existence_threshold, is_sustainable, DeviationSpec,
    SustainabilityReport,
};
pub use model::{DesignParams, IntrinsicParams, Protocol, Rating, RecommendedStrategy};
pub use sim::{estimate_deviation_gain, run_population, SimConfig, SimTrace};
