//! Paired rollouts on a scene and its mutated copy.

use abn_model::{Model, Rollout};
use abn_numerics::Tensor;
use abn_scenegen::{rasterize, GridConfig, VectorScene};

use crate::error::Result;
use crate::metrics::ade;
use crate::mutation::Mutation;
use crate::region::{attention_mass_in_region, Region, DILATION_CELLS};
use crate::upsample::upsample_pyramid;

pub struct Counterfactual {
    pub base: Rollout,
    pub mutated: Rollout,
    /// Attention maps at raster resolution.
    pub base_alpha: Option<Tensor>,
    pub mutated_alpha: Option<Tensor>,
    /// `mutated - base` at raster resolution.
    pub delta_alpha: Option<Tensor>,
    /// Footprints of the mutated entities in the original scene.
    pub regions: Vec<Region>,
    pub dilation_m: f64,
    pub mass_before: Option<f64>,
    pub mass_after: Option<f64>,
    /// ADE between the two predicted trajectories.
    pub trajectory_delta: f64,
}

impl Counterfactual {
    pub fn mass_delta(&self) -> Option<f64> {
        Some(self.mass_after? - self.mass_before?)
    }

    /// Fractional drop of attention mass in the mutated region.
    pub fn mass_reduction(&self) -> Option<f64> {
        let before = self.mass_before?;
        (before > 0.0).then(|| (before - self.mass_after.unwrap_or(0.0)) / before)
    }
}

fn positions(r: &Rollout) -> Vec<[f64; 2]> {
    r.waypoints.iter().map(|w| [w[0], w[1]]).collect()
}

pub fn counterfactual(model: &Model, scene: &VectorScene, mutation: &Mutation, grid: &GridConfig) -> Result<Counterfactual> {
    let mutated_scene = mutation.apply(scene)?;
    let base = model.rollout(&rasterize(scene, grid))?;
    let mutated = model.rollout(&rasterize(&mutated_scene, grid))?;
    let up = |a: &Option<Tensor>| a.as_ref().map(|a| upsample_pyramid(a, grid.resolution)).transpose();
    let base_alpha = up(&base.alpha)?;
    let mutated_alpha = up(&mutated.alpha)?;
    let delta_alpha = match (&base_alpha, &mutated_alpha) {
        (Some(b), Some(m)) => Some(Tensor::new(
            b.shape().to_vec(),
            m.data().iter().zip(b.data()).map(|(x, y)| x - y).collect(),
        )?),
        _ => None,
    };
    let regions = mutation.regions(scene);
    let dilation_m = DILATION_CELLS * model.config().cell_size_m();
    let mass = |a: &Option<Tensor>| a.as_ref().map(|a| attention_mass_in_region(a, grid, &regions, dilation_m));
    Ok(Counterfactual {
        trajectory_delta: ade(&positions(&base), &positions(&mutated))?,
        mass_before: mass(&base_alpha),
        mass_after: mass(&mutated_alpha),
        base,
        mutated,
        base_alpha,
        mutated_alpha,
        delta_alpha,
        regions,
        dilation_m,
    })
}
