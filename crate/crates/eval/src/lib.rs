//! Evaluation: displacement, collision and entropy metrics, attention
//! upsampling, and counterfactual scene edits.

pub mod baseline;
pub mod bootstrap;
pub mod counterfactual;
pub mod error;
pub mod metrics;
pub mod mutation;
pub mod region;
pub mod report;
pub mod upsample;

pub use baseline::constant_velocity;
pub use bootstrap::{paired_bootstrap, BootstrapInterval};
pub use counterfactual::{counterfactual, Counterfactual};
pub use error::{EvalError, Result};
pub use metrics::{ade, attention_entropy, collision_rate, fde, max_step_error};
pub use mutation::Mutation;
pub use region::{attention_mass_in_region, region_mask, Region, DILATION_CELLS};
pub use report::{
    attention_histogram, evaluate, evaluate_baseline, example_metrics, write_histogram_csv, write_metrics_csv,
    Evaluation, ExampleMetrics, MetricsRow,
};
pub use upsample::upsample_pyramid;
