//! Synthetic top-down driving scenes: generation, rendering, a scripted
//! expert, and dataset files.

pub mod dataset;
pub mod error;
pub mod example;
pub mod expert;
pub mod geometry;
pub mod grid;
pub mod raster;
pub mod scenario;
pub mod scene;

pub use dataset::{read_dataset, read_header, write_dataset, DatasetHeader};
pub use error::{Result, SceneError};
pub use example::{build_example, Example, Waypoint, OCCUPANCY_FACTOR};
pub use expert::expert_policy;
pub use geometry::{OrientedBox, Polyline, Pose, RigidTransform, Vec2};
pub use grid::{AgentFrame, GridConfig};
pub use raster::{rasterize, RasterStack, CHANNEL_NAMES, DENSE_SUBSET};
pub use scenario::{generate_scenario, ScenarioGenerator, ScenarioKind, ScenarioRegistry};
pub use scene::{VectorScene, DT, HORIZON, PAST_STEPS};
