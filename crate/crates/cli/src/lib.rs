//! Experiment harness around the renderer: multi-run experiments with
//! trimmed-relMSE reporting, reference generation with content hashes,
//! convergence logging at power-of-two sample counts, and learned-density
//! dumps at each scene's probe points. Every artifact except the timing log
//! is a deterministic function of the configuration.

pub mod experiment;
pub mod metrics;

pub use experiment::{
    make_reference, run_experiment, CacheAblation, ConvergencePoint, ExperimentConfig,
    GuideResolution, Mode, MetricReport, ReferenceSource,
};
pub use metrics::{relmse, MetricError};
