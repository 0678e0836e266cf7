use serde::{Deserialize, Serialize};

use crate::error::{Result, SceneError};
use crate::geometry::{OrientedBox, Polyline, Pose, RigidTransform};
use crate::scenario::ScenarioKind;

/// Number of past frames for lights, objects and agent history.
pub const PAST_STEPS: usize = 5;
/// Number of future waypoints.
pub const HORIZON: usize = 10;
/// Seconds between consecutive trajectory points.
pub const DT: f64 = 0.2;
pub const AGENT_LENGTH: f64 = 4.0;
pub const AGENT_WIDTH: f64 = 1.8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: u32,
    pub centerline: Polyline,
    /// Meters per second.
    pub speed_limit: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LightState {
    Red,
    Yellow,
    Green,
    Unknown,
}

impl LightState {
    /// Gray level on the traffic-light channels: red brightest, green darkest.
    pub fn gray_level(self) -> f32 {
        match self {
            LightState::Red => 1.0,
            LightState::Yellow => 0.6,
            LightState::Green => 0.2,
            LightState::Unknown => 0.0,
        }
    }

    pub fn requires_stop(self) -> bool {
        matches!(self, LightState::Red | LightState::Yellow)
    }
}

impl std::str::FromStr for LightState {
    type Err = SceneError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "red" => Ok(Self::Red),
            "yellow" => Ok(Self::Yellow),
            "green" => Ok(Self::Green),
            "unknown" => Ok(Self::Unknown),
            _ => Err(SceneError::InvalidArgument(format!("unknown light state {s:?}"))),
        }
    }
}

/// Stop line across a lane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopSign {
    pub id: u32,
    pub lane: u32,
    pub line: OrientedBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Crosswalk {
    pub id: u32,
    pub area: OrientedBox,
}

/// Signal controlling one lane; its state is painted on `painted_segment`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficLight {
    pub id: u32,
    pub lane: u32,
    pub stop_line: OrientedBox,
    pub painted_segment: Polyline,
    /// Oldest first; the last entry is the current state.
    pub states: [LightState; PAST_STEPS],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectKind {
    Vehicle,
    Pedestrian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicObject {
    pub id: u32,
    pub kind: ObjectKind,
    /// Oldest first; the last entry is the current box.
    pub past: [OrientedBox; PAST_STEPS],
    /// Boxes at `DT, 2 DT, ... HORIZON * DT` seconds ahead.
    pub future: Vec<OrientedBox>,
}

impl DynamicObject {
    pub fn current(&self) -> &OrientedBox {
        &self.past[PAST_STEPS - 1]
    }
}

/// Symbolic driving scene in world coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorScene {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub lanes: Vec<Lane>,
    pub road_edges: Vec<Polyline>,
    pub stop_signs: Vec<StopSign>,
    pub crosswalks: Vec<Crosswalk>,
    pub traffic_lights: Vec<TrafficLight>,
    pub objects: Vec<DynamicObject>,
    pub route: Polyline,
    /// Agent poses `PAST_STEPS * DT ... DT` seconds ago, oldest first.
    pub agent_past: [Pose; PAST_STEPS],
    pub agent_pose: Pose,
    pub agent_speed: f64,
    pub agent_box: OrientedBox,
    pub expert_future: Vec<Pose>,
}

impl VectorScene {
    pub fn lane(&self, id: u32) -> Option<&Lane> {
        self.lanes.iter().find(|l| l.id == id)
    }

    /// Applies the same rigid motion to every entity.
    pub fn transformed(&self, t: &RigidTransform) -> VectorScene {
        let line = |p: &Polyline| p.map(|v| t.apply(v));
        VectorScene {
            kind: self.kind,
            seed: self.seed,
            lanes: self
                .lanes
                .iter()
                .map(|l| Lane {
                    centerline: line(&l.centerline),
                    ..l.clone()
                })
                .collect(),
            road_edges: self.road_edges.iter().map(line).collect(),
            stop_signs: self
                .stop_signs
                .iter()
                .map(|s| StopSign {
                    line: t.apply_box(s.line),
                    ..s.clone()
                })
                .collect(),
            crosswalks: self
                .crosswalks
                .iter()
                .map(|c| Crosswalk {
                    id: c.id,
                    area: t.apply_box(c.area),
                })
                .collect(),
            traffic_lights: self
                .traffic_lights
                .iter()
                .map(|l| TrafficLight {
                    stop_line: t.apply_box(l.stop_line),
                    painted_segment: line(&l.painted_segment),
                    ..l.clone()
                })
                .collect(),
            objects: self
                .objects
                .iter()
                .map(|o| DynamicObject {
                    id: o.id,
                    kind: o.kind,
                    past: o.past.map(|b| t.apply_box(b)),
                    future: o.future.iter().map(|b| t.apply_box(*b)).collect(),
                })
                .collect(),
            route: line(&self.route),
            agent_past: self.agent_past.map(|p| t.apply_pose(p)),
            agent_pose: t.apply_pose(self.agent_pose),
            agent_speed: self.agent_speed,
            agent_box: t.apply_box(self.agent_box),
            expert_future: self.expert_future.iter().map(|p| t.apply_pose(*p)).collect(),
        }
    }

    /// Structural invariants every generated or mutated scene satisfies.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(SceneError::ScenarioGeneration(m));
        if self.expert_future.len() != HORIZON {
            return fail(format!("expert future has {} points", self.expert_future.len()));
        }
        for o in &self.objects {
            if o.future.len() != HORIZON {
                return fail(format!("object {} has {} future boxes", o.id, o.future.len()));
            }
        }
        if self.route.points.len() < 2 {
            return fail("scene has no route".into());
        }
        for l in &self.traffic_lights {
            if self.lane(l.lane).is_none() {
                return fail(format!("light {} references missing lane {}", l.id, l.lane));
            }
        }
        for s in &self.stop_signs {
            if self.lane(s.lane).is_none() {
                return fail(format!("stop sign {} references missing lane {}", s.id, s.lane));
            }
        }
        // Expert stays on the route centerline, which is the drivable lane.
        for (k, p) in self.expert_future.iter().enumerate() {
            if self.route.distance(p.position) > 1e-6 {
                return fail(format!("expert waypoint {k} leaves the route"));
            }
        }
        Ok(())
    }
}
