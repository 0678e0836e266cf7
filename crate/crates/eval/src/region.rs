//! Attention mass inside dilated scene entities.

use abn_numerics::Tensor;
use abn_scenegen::{GridConfig, OrientedBox, Polyline, Vec2};

/// Agent-frame shape of a scene entity.
#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    Box(OrientedBox),
    Line(Polyline),
}

impl Region {
    /// Distance (m) from `p` to the region; zero inside.
    pub fn distance(&self, p: Vec2) -> f64 {
        match self {
            Region::Box(b) => b.distance(p),
            Region::Line(l) => l.distance(p),
        }
    }
}

/// Dilation in feature cells used by the counterfactual statistics.
pub const DILATION_CELLS: f64 = 3.0;

/// Pixels of `grid` whose centers lie within `dilation_m` of any region.
pub fn region_mask(grid: &GridConfig, regions: &[Region], dilation_m: f64) -> Vec<bool> {
    let n = grid.resolution;
    (0..n * n)
        .map(|i| {
            let p = grid.pixel_center(i / n, i % n);
            regions.iter().any(|r| r.distance(p) <= dilation_m)
        })
        .collect()
}

/// Sum of `alpha` (already at `grid` resolution) over the dilated regions.
pub fn attention_mass_in_region(alpha: &Tensor, grid: &GridConfig, regions: &[Region], dilation_m: f64) -> f64 {
    region_mask(grid, regions, dilation_m)
        .iter()
        .zip(alpha.data())
        .filter(|(m, _)| **m)
        .map(|(_, a)| a)
        .sum()
}
