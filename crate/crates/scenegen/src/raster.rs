//! Agent-centered top-down rendering of a [`VectorScene`].

use serde::{Deserialize, Serialize};

use crate::error::{Result, SceneError};
use crate::geometry::{segment_distance, OrientedBox, Polyline, Vec2};
use crate::grid::{AgentFrame, GridConfig};
use crate::scene::{VectorScene, PAST_STEPS};

pub const CHANNEL_NAMES: [&str; 17] = [
    "roadmap_lanes",
    "roadmap_stop_signs",
    "roadmap_crosswalks",
    "speed_limit",
    "past_agent_poses",
    "current_agent_box",
    "route",
    "traffic_lights_t-4",
    "traffic_lights_t-3",
    "traffic_lights_t-2",
    "traffic_lights_t-1",
    "traffic_lights_t0",
    "dynamic_objects_t-4",
    "dynamic_objects_t-3",
    "dynamic_objects_t-2",
    "dynamic_objects_t-1",
    "dynamic_objects_t0",
];

/// Channels fed to the dense scene-context encoder.
pub const DENSE_SUBSET: [&str; 5] = [
    "roadmap_lanes",
    "speed_limit",
    "past_agent_poses",
    "current_agent_box",
    "route",
];

pub const LIGHT_CHANNELS: std::ops::Range<usize> = 7..12;
pub const OBJECT_CHANNELS: std::ops::Range<usize> = 12..17;

/// Speed (m/s) rendered at full intensity on the speed-limit channel.
pub const SPEED_NORMALIZER: f64 = 10.0;
const LANE_RADIUS: f64 = 0.15;
const EDGE_LEVEL: f32 = 0.5;
const MARK_RADIUS: f64 = 0.3;

/// Named single-channel grids, each `resolution x resolution`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RasterStack {
    pub grid: GridConfig,
    pub names: Vec<String>,
    pub channels: Vec<Vec<f32>>,
    pub dense_subset: Vec<String>,
}

impl RasterStack {
    pub fn zeros(grid: GridConfig) -> Self {
        Self {
            grid,
            names: CHANNEL_NAMES.iter().map(|s| s.to_string()).collect(),
            channels: vec![vec![0.0; grid.cells()]; CHANNEL_NAMES.len()],
            dense_subset: DENSE_SUBSET.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| SceneError::InvalidArgument(format!("no channel named {name:?}")))
    }

    pub fn channel(&self, name: &str) -> Result<&[f32]> {
        Ok(&self.channels[self.index(name)?])
    }

    pub fn dense_indices(&self) -> Result<Vec<usize>> {
        self.dense_subset.iter().map(|n| self.index(n)).collect()
    }

    /// Interleaves the selected channels into an `H x W x C` buffer.
    pub fn hwc(&self, indices: &[usize]) -> Vec<f64> {
        let cells = self.grid.cells();
        let c = indices.len();
        let mut out = vec![0.0; cells * c];
        for (j, &ch) in indices.iter().enumerate() {
            for (i, &v) in self.channels[ch].iter().enumerate() {
                out[i * c + j] = v as f64;
            }
        }
        out
    }

    pub fn all_indices(&self) -> Vec<usize> {
        (0..self.channels.len()).collect()
    }
}

struct Canvas<'a> {
    grid: &'a GridConfig,
    data: &'a mut [f32],
}

impl Canvas<'_> {
    fn put(&mut self, r: usize, c: usize, v: f32) {
        let px = &mut self.data[r * self.grid.resolution + c];
        *px = px.max(v);
    }

    fn fill_box(&mut self, b: &OrientedBox, v: f32) {
        let mask = self.grid.rasterize_box(b);
        for (px, inside) in self.data.iter_mut().zip(mask) {
            if inside {
                *px = px.max(v);
            }
        }
    }

    fn disc(&mut self, center: Vec2, radius: f64, v: f32) {
        self.segment(center, center, radius, v);
    }

    fn segment(&mut self, a: Vec2, b: Vec2, radius: f64, v: f32) {
        let mid = a.add(b).scale(0.5);
        let reach = 0.5 * b.sub(a).norm() + radius;
        let Some((r0, r1, c0, c1)) = self.grid.pixel_window(mid, reach) else {
            return;
        };
        for r in r0..r1 {
            for c in c0..c1 {
                if segment_distance(self.grid.pixel_center(r, c), a, b) <= radius {
                    self.put(r, c, v);
                }
            }
        }
    }

    fn polyline(&mut self, line: &Polyline, radius: f64, v: f32) {
        match line.points.len() {
            0 => {}
            1 => self.disc(line.points[0], radius, v),
            _ => {
                for w in line.points.windows(2) {
                    self.segment(w[0], w[1], radius, v);
                }
            }
        }
    }
}

/// Renders `scene` around the agent's current pose.
pub fn rasterize(scene: &VectorScene, grid: &GridConfig) -> RasterStack {
    let frame = AgentFrame::new(scene.agent_pose);
    let line = |p: &Polyline| p.map(|v| frame.point(v));
    let mut stack = RasterStack::zeros(*grid);
    let mut draw = |ch: usize, f: &mut dyn FnMut(&mut Canvas)| {
        f(&mut Canvas {
            grid,
            data: &mut stack.channels[ch],
        })
    };

    draw(0, &mut |cv| {
        for edge in &scene.road_edges {
            cv.polyline(&line(edge), LANE_RADIUS, EDGE_LEVEL);
        }
        for lane in &scene.lanes {
            cv.polyline(&line(&lane.centerline), LANE_RADIUS, 1.0);
        }
    });
    draw(1, &mut |cv| {
        for s in &scene.stop_signs {
            cv.fill_box(&frame.oriented_box(&s.line), 1.0);
        }
    });
    draw(2, &mut |cv| {
        for c in &scene.crosswalks {
            cv.fill_box(&frame.oriented_box(&c.area), 1.0);
        }
    });
    draw(3, &mut |cv| {
        for lane in &scene.lanes {
            let v = (lane.speed_limit / SPEED_NORMALIZER).clamp(0.0, 1.0) as f32;
            cv.polyline(&line(&lane.centerline), MARK_RADIUS, v);
        }
    });
    draw(4, &mut |cv| {
        for p in &scene.agent_past {
            // A stationary history adds nothing beyond the current box.
            if p.position.sub(scene.agent_pose.position).norm() > 1e-9 {
                cv.disc(frame.point(p.position), MARK_RADIUS, 1.0);
            }
        }
    });
    draw(5, &mut |cv| cv.fill_box(&frame.oriented_box(&scene.agent_box), 1.0));
    draw(6, &mut |cv| cv.polyline(&line(&scene.route), MARK_RADIUS, 1.0));
    for t in 0..PAST_STEPS {
        draw(LIGHT_CHANNELS.start + t, &mut |cv| {
            for light in &scene.traffic_lights {
                cv.polyline(&line(&light.painted_segment), MARK_RADIUS, light.states[t].gray_level());
            }
        });
        draw(OBJECT_CHANNELS.start + t, &mut |cv| {
            for o in &scene.objects {
                cv.fill_box(&frame.oriented_box(&o.past[t]), 1.0);
            }
        });
    }
    stack
}
