//! Benchmarking classifiers on several quality metrics at once through
//! generalized stochastic dominance (GSD).
//!
//! A [`PerformanceTable`] holds every classifier's evaluation on every
//! dataset as a point of `[0,1]^n`, with cardinal metrics first. From it:
//! - [`gsd`] computes the `d` statistic by linear programming and derives
//!   empirical relations and fronts;
//! - [`permtest`] and [`robust`] test front membership and its stability
//!   under contaminated datasets;
//! - [`baselines`] provides first-order dominance and Friedman/Nemenyi fronts;
//! - [`synth`] simulates populations with known fronts and brute-force oracles;
//! - [`io`] reads configs and CSVs and encodes reports.

pub mod baselines;
pub mod error;
pub mod gsd;
pub mod io;
pub mod lp;
pub mod permtest;
pub mod prefsys;
pub mod robust;
pub mod synth;
pub mod table;

pub use error::{Error, Result};
pub use gsd::{
    d_statistic, egsd_front, empirical_gsd_relation, epsilon_schedule, pareto_front, DMatrix, DominanceGraph,
    FrontResult, GsdOptions, PointScope, StatisticResult,
};
pub use permtest::{
    dynamic_gsd_test, pairwise_test, static_gsd_test, DynamicTestResult, PairwiseTestResult, ResamplingPlan,
    StaticTestResult,
};
pub use prefsys::{build_constraints, granularity, ConstraintSet};
pub use table::{EvaluationPoint, MetricSpec, PerformanceTable, Scale, ScaleSpec, TestConfig, Violation};
