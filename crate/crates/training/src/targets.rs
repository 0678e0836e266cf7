//! Supervision derived from an [`Example`] on the model's cell grid.

use abn_model::ModelConfig;
use abn_numerics::Tensor;
use abn_scenegen::scene::{AGENT_LENGTH, AGENT_WIDTH};
use abn_scenegen::{Example, OrientedBox, Vec2};

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Targets {
    /// `(x, y, heading)` per future step in the agent frame.
    pub waypoints: Vec<[f64; 3]>,
    /// Fraction of each cell covered by the expert's box, per step.
    pub boxes: Vec<Tensor>,
    /// Object coverage per step.
    pub occupancy: Vec<Tensor>,
}

impl Targets {
    pub fn from_example(example: &Example, config: &ModelConfig) -> Result<Self> {
        let grid = example.grid();
        if grid.resolution != config.resolution {
            return invalid(format!(
                "example is rendered at {} px, model expects {}",
                grid.resolution, config.resolution
            ));
        }
        if example.waypoints.len() != config.horizon {
            return invalid(format!(
                "example has {} waypoints, model predicts {}",
                example.waypoints.len(),
                config.horizon
            ));
        }
        let n = config.cells_per_side();
        let factor = config.downsample();
        let boxes = example
            .waypoints
            .iter()
            .map(|w| {
                let b = OrientedBox::new(
                    Vec2::new(w.x, w.y),
                    std::f64::consts::FRAC_PI_2 + w.heading,
                    AGENT_LENGTH,
                    AGENT_WIDTH,
                );
                Ok(Tensor::new(vec![n, n], grid.box_coverage(&b, factor)?)?)
            })
            .collect::<Result<Vec<_>>>()?;
        if example.occupancy_side() != n {
            return invalid(format!(
                "occupancy grids are {0}x{0}, model cells are {n}x{n}",
                example.occupancy_side()
            ));
        }
        let occupancy = example
            .occupancy
            .iter()
            .map(|o| Ok(Tensor::new(vec![n, n], o.iter().map(|&v| v as f64).collect())?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            waypoints: example.waypoints.iter().map(|w| [w.x, w.y, w.heading]).collect(),
            boxes,
            occupancy,
        })
    }

    pub fn horizon(&self) -> usize {
        self.waypoints.len()
    }
}
