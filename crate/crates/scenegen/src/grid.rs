use serde::{Deserialize, Serialize};

use crate::error::{Result, SceneError};
use crate::geometry::{wrap_angle, OrientedBox, Pose, Vec2};

/// Square top-down grid centered on the agent.
///
/// Agent-frame coordinates have `x` to the agent's right and `y` straight
/// ahead, in meters. The agent's current position maps to pixel
/// `(0.5 * W, 0.75 * H)` with the agent facing up (decreasing rows).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub field_of_view_m: f64,
    pub resolution: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            field_of_view_m: 16.0,
            resolution: 64,
        }
    }
}

pub const ANCHOR_COL_FRACTION: f64 = 0.5;
pub const ANCHOR_ROW_FRACTION: f64 = 0.75;

impl GridConfig {
    pub fn new(field_of_view_m: f64, resolution: usize) -> Result<Self> {
        if !(field_of_view_m > 0.0) || resolution == 0 {
            return Err(SceneError::InvalidArgument(format!(
                "grid needs a positive field of view and resolution, got {field_of_view_m} m / {resolution} px"
            )));
        }
        Ok(Self {
            field_of_view_m,
            resolution,
        })
    }

    pub fn meters_per_pixel(&self) -> f64 {
        self.field_of_view_m / self.resolution as f64
    }

    pub fn cells(&self) -> usize {
        self.resolution * self.resolution
    }

    pub fn anchor_col(&self) -> f64 {
        ANCHOR_COL_FRACTION * self.resolution as f64
    }

    pub fn anchor_row(&self) -> f64 {
        ANCHOR_ROW_FRACTION * self.resolution as f64
    }

    /// Continuous `(col, row)` pixel coordinates of an agent-frame point;
    /// pixel `(r, c)` spans `[c, c + 1) x [r, r + 1)`.
    pub fn to_pixel(&self, p: Vec2) -> (f64, f64) {
        let m = self.meters_per_pixel();
        (self.anchor_col() + p.x / m, self.anchor_row() - p.y / m)
    }

    pub fn to_meters(&self, col: f64, row: f64) -> Vec2 {
        let m = self.meters_per_pixel();
        Vec2::new((col - self.anchor_col()) * m, (self.anchor_row() - row) * m)
    }

    pub fn pixel_center(&self, row: usize, col: usize) -> Vec2 {
        self.to_meters(col as f64 + 0.5, row as f64 + 0.5)
    }

    /// Grid of the same extent with `factor` times fewer cells per side.
    pub fn coarsened(&self, factor: usize) -> Result<GridConfig> {
        if factor == 0 || self.resolution % factor != 0 {
            return Err(SceneError::InvalidArgument(format!(
                "resolution {} is not divisible by {factor}",
                self.resolution
            )));
        }
        GridConfig::new(self.field_of_view_m, self.resolution / factor)
    }

    /// Fraction of fine pixel centers covered by `bx` in each cell of the
    /// grid coarsened by `factor` (row-major, `resolution / factor` per side).
    pub fn box_coverage(&self, bx: &OrientedBox, factor: usize) -> Result<Vec<f64>> {
        let coarse = self.resolution / factor.max(1);
        let fine = self.rasterize_box(bx);
        let mut out = vec![0.0; coarse * coarse];
        let w = 1.0 / (factor * factor) as f64;
        for r in 0..coarse * factor {
            for c in 0..coarse * factor {
                if fine[r * self.resolution + c] {
                    out[(r / factor) * coarse + c / factor] += w;
                }
            }
        }
        self.coarsened(factor)?;
        Ok(out)
    }

    /// Pixels whose centers fall inside the agent-frame box.
    pub fn rasterize_box(&self, bx: &OrientedBox) -> Vec<bool> {
        let mut out = vec![false; self.cells()];
        let reach = 0.5 * bx.length.hypot(bx.width);
        let Some((r0, r1, c0, c1)) = self.pixel_window(bx.center, reach) else {
            return out;
        };
        for r in r0..r1 {
            for c in c0..c1 {
                if bx.contains(self.pixel_center(r, c)) {
                    out[r * self.resolution + c] = true;
                }
            }
        }
        out
    }

    /// Pixel rows/cols whose centers may lie within `reach` meters of `center`.
    pub(crate) fn pixel_window(&self, center: Vec2, reach: f64) -> Option<(usize, usize, usize, usize)> {
        let (cc, rr) = self.to_pixel(center);
        let rp = reach / self.meters_per_pixel() + 1.0;
        let n = self.resolution as f64;
        let clip = |v: f64| v.clamp(0.0, n) as usize;
        let (r0, r1) = (clip((rr - rp).floor()), clip((rr + rp).ceil()));
        let (c0, c1) = (clip((cc - rp).floor()), clip((cc + rp).ceil()));
        (r0 < r1 && c0 < c1).then_some((r0, r1, c0, c1))
    }
}

/// Agent-centered frame derived from the agent's world pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentFrame {
    pub origin: Pose,
}

impl AgentFrame {
    pub fn new(origin: Pose) -> Self {
        Self { origin }
    }

    pub fn point(&self, p: Vec2) -> Vec2 {
        let d = p.sub(self.origin.position);
        let fwd = Vec2::from_angle(self.origin.heading);
        let right = Vec2::new(fwd.y, -fwd.x);
        Vec2::new(d.dot(right), d.dot(fwd))
    }

    /// Yaw relative to the agent's heading (0 = straight ahead).
    pub fn relative_heading(&self, world_heading: f64) -> f64 {
        wrap_angle(world_heading - self.origin.heading)
    }

    /// Box in agent-frame coordinates (its heading measured from the +x axis).
    pub fn oriented_box(&self, b: &OrientedBox) -> OrientedBox {
        OrientedBox {
            center: self.point(b.center),
            heading: wrap_angle(std::f64::consts::FRAC_PI_2 + b.heading - self.origin.heading),
            ..*b
        }
    }
}
