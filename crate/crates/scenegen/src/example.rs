//! Training examples: the rendered stack plus agent-frame targets.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SceneError};
use crate::geometry::Pose;
use crate::grid::{AgentFrame, GridConfig};
use crate::raster::{rasterize, RasterStack};
use crate::scenario::ScenarioKind;
use crate::scene::{VectorScene, HORIZON, PAST_STEPS};

/// Cells per side of the occupancy grids are `resolution / OCCUPANCY_FACTOR`.
pub const OCCUPANCY_FACTOR: usize = 4;

/// Agent-frame pose: `x` right, `y` ahead (m), `heading` relative to the
/// agent's current heading (rad, counter-clockwise).
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Waypoint {
    pub fn from_world(frame: &AgentFrame, p: Pose) -> Self {
        let q = frame.point(p.position);
        Self {
            x: q.x,
            y: q.y,
            heading: frame.relative_heading(p.heading),
        }
    }

    /// Continuous `(col, row)` pixel coordinates.
    pub fn pixel(&self, grid: &GridConfig) -> (f64, f64) {
        grid.to_pixel(crate::geometry::Vec2::new(self.x, self.y))
    }

    pub fn from_pixel(grid: &GridConfig, col: f64, row: f64, heading: f64) -> Self {
        let p = grid.to_meters(col, row);
        Self {
            x: p.x,
            y: p.y,
            heading,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub raster: RasterStack,
    /// Expert waypoints at `DT .. HORIZON * DT` seconds.
    pub waypoints: Vec<Waypoint>,
    /// Agent poses `PAST_STEPS * DT .. DT` seconds ago, oldest first.
    pub agent_past: Vec<Waypoint>,
    /// Per future step, the fraction of each coarse cell covered by objects.
    pub occupancy: Vec<Vec<f32>>,
}

impl Example {
    pub fn grid(&self) -> &GridConfig {
        &self.raster.grid
    }

    pub fn occupancy_side(&self) -> usize {
        self.raster.grid.resolution / OCCUPANCY_FACTOR
    }

    pub fn waypoint_pixels(&self) -> Vec<(f64, f64)> {
        self.waypoints.iter().map(|w| w.pixel(&self.raster.grid)).collect()
    }
}

/// Future object coverage at each step on the coarse grid.
pub fn future_occupancy(scene: &VectorScene, grid: &GridConfig) -> Result<Vec<Vec<f32>>> {
    let frame = AgentFrame::new(scene.agent_pose);
    let side = grid.coarsened(OCCUPANCY_FACTOR)?.resolution;
    (0..HORIZON)
        .map(|k| {
            let mut occ = vec![0.0f64; side * side];
            for o in &scene.objects {
                let cov = grid.box_coverage(&frame.oriented_box(&o.future[k]), OCCUPANCY_FACTOR)?;
                for (a, b) in occ.iter_mut().zip(cov) {
                    *a = (*a + b).min(1.0);
                }
            }
            Ok(occ.into_iter().map(|v| v as f32).collect())
        })
        .collect()
}

pub fn build_example(scene: &VectorScene, grid: &GridConfig) -> Result<Example> {
    if scene.expert_future.len() != HORIZON {
        return Err(SceneError::InvalidArgument(format!(
            "scene has {} expert waypoints, expected {HORIZON}",
            scene.expert_future.len()
        )));
    }
    let frame = AgentFrame::new(scene.agent_pose);
    Ok(Example {
        kind: scene.kind,
        seed: scene.seed,
        raster: rasterize(scene, grid),
        waypoints: scene
            .expert_future
            .iter()
            .map(|&p| Waypoint::from_world(&frame, p))
            .collect(),
        agent_past: scene
            .agent_past
            .iter()
            .take(PAST_STEPS)
            .map(|&p| Waypoint::from_world(&frame, p))
            .collect(),
        occupancy: future_occupancy(scene, grid)?,
    })
}
