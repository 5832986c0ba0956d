//! Benchmark harness: synthetic data, k-fold encoder comparisons and the
//! sample-size scaling study.

pub mod harness;
pub mod scaling;
pub mod synthetic;

pub use harness::{
    run_benchmark, run_benchmark_observed, BenchmarkConfig, BenchmarkReport, EncoderChoice,
    LearnerChoice,
};
pub use scaling::{run_scaling, ScalingConfig, ScalingCurves};
pub use synthetic::{bayes_auc, Cardinality, SyntheticSpec};
