//! Procedural scene generators, one per scenario kind, behind a named registry.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SceneError};
use crate::expert::expert_policy;
use crate::geometry::{OrientedBox, Polyline, Pose, RigidTransform, Vec2};
use crate::scene::{
    Crosswalk, DynamicObject, Lane, LightState, ObjectKind, StopSign, TrafficLight, VectorScene,
    AGENT_LENGTH, AGENT_WIDTH, DT, HORIZON, PAST_STEPS,
};

/// Lane width and spacing between the ego and opposing lane centers (m).
pub const LANE_WIDTH: f64 = 3.5;
/// Lane length kept behind the agent (m).
const BEHIND: f64 = 8.0;
/// Route length ahead of the agent (m).
const AHEAD: f64 = 30.0;
const STEP: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Straight,
    CurvedRoad,
    StopSign,
    LeadVehicleBrake,
    PinchPoint,
    CrosswalkPedestrian,
    TrafficLight,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 7] = [
        ScenarioKind::Straight,
        ScenarioKind::CurvedRoad,
        ScenarioKind::StopSign,
        ScenarioKind::LeadVehicleBrake,
        ScenarioKind::PinchPoint,
        ScenarioKind::CrosswalkPedestrian,
        ScenarioKind::TrafficLight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Straight => "straight",
            ScenarioKind::CurvedRoad => "curved_road",
            ScenarioKind::StopSign => "stop_sign",
            ScenarioKind::LeadVehicleBrake => "lead_vehicle_brake",
            ScenarioKind::PinchPoint => "pinch_point",
            ScenarioKind::CrosswalkPedestrian => "crosswalk_pedestrian",
            ScenarioKind::TrafficLight => "traffic_light",
        }
    }

    /// Stable numeric code used by the dataset format.
    pub fn code(self) -> u32 {
        Self::ALL.iter().position(|&k| k == self).unwrap() as u32
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = SceneError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| SceneError::InvalidArgument(format!("unknown scenario kind {s:?}")))
    }
}

/// Two-lane road laid out in the agent frame: the agent sits at the origin
/// facing +y on the ego lane, the opposing lane is to its left.
#[derive(Clone, Debug)]
pub struct Road {
    pub ego: Polyline,
    pub speed_limit: f64,
    /// Lateral offset of the right road edge from the ego centerline (m).
    pub right_edge: f64,
}

impl Road {
    /// Road whose heading turns at `curvature` rad/m from the agent onwards.
    pub fn new(curvature: f64, speed_limit: f64) -> Self {
        let n = ((BEHIND + AHEAD) / STEP).round() as usize;
        let mut pts = Vec::with_capacity(n + 1);
        let mut p = Vec2::new(0.0, -BEHIND);
        pts.push(p);
        for i in 0..n {
            let mid = i as f64 * STEP + STEP / 2.0;
            let heading = FRAC_PI_2 + curvature * (mid - BEHIND).max(0.0);
            p = p.add(Vec2::from_angle(heading).scale(STEP));
            pts.push(p);
        }
        Self {
            ego: Polyline::new(pts),
            speed_limit,
            right_edge: LANE_WIDTH / 2.0,
        }
    }

    /// Pose at route arclength `s` (0 = agent) shifted `lateral` meters left.
    pub fn pose(&self, s: f64, lateral: f64) -> Pose {
        let base = self.ego.sample(BEHIND + s);
        let normal = Vec2::from_angle(base.heading).perp();
        Pose {
            position: base.position.add(normal.scale(lateral)),
            heading: base.heading,
        }
    }

    fn offset_line(&self, lateral: f64, reversed: bool) -> Polyline {
        let n = self.ego.points.len();
        let mut pts: Vec<Vec2> = (0..n)
            .map(|i| self.pose(i as f64 * STEP - BEHIND, lateral).position)
            .collect();
        if reversed {
            pts.reverse();
        }
        Polyline::new(pts)
    }

    /// Box across the ego lane at route arclength `s`.
    pub fn line_across(&self, s: f64, depth: f64, span: f64, lateral: f64) -> OrientedBox {
        OrientedBox::at_pose(self.pose(s, lateral), depth, span)
    }

    /// Object following `s_of_t` (route arclength over time) at fixed lateral
    /// offset; `reverse` flips its heading for oncoming traffic.
    #[allow(clippy::too_many_arguments)]
    pub fn moving_object(
        &self,
        id: u32,
        kind: ObjectKind,
        length: f64,
        width: f64,
        reverse: bool,
        place: impl Fn(f64) -> (f64, f64),
    ) -> DynamicObject {
        let at = |t: f64| {
            let (s, lat) = place(t);
            let p = self.pose(s, lat);
            let heading = if reverse { p.heading + PI } else { p.heading };
            OrientedBox::new(p.position, heading, length, width)
        };
        let past = std::array::from_fn(|i| at(-((PAST_STEPS - 1 - i) as f64) * DT));
        let future = (1..=HORIZON).map(|k| at(k as f64 * DT)).collect();
        DynamicObject {
            id,
            kind,
            past,
            future,
        }
    }

    /// Assembles a scene with the agent cruising at the speed limit.
    pub fn scene(&self, kind: ScenarioKind, seed: u64) -> VectorScene {
        let v = self.speed_limit;
        let agent_pose = self.pose(0.0, 0.0);
        let route_start = (BEHIND / STEP).round() as usize;
        VectorScene {
            kind,
            seed,
            lanes: vec![
                Lane {
                    id: 0,
                    centerline: self.ego.clone(),
                    speed_limit: v,
                },
                Lane {
                    id: 1,
                    centerline: self.offset_line(LANE_WIDTH, true),
                    speed_limit: v,
                },
            ],
            road_edges: vec![
                self.offset_line(-self.right_edge, false),
                self.offset_line(1.5 * LANE_WIDTH, false),
            ],
            stop_signs: vec![],
            crosswalks: vec![],
            traffic_lights: vec![],
            objects: vec![],
            route: Polyline::new(self.ego.points[route_start..].to_vec()),
            agent_past: std::array::from_fn(|i| {
                self.pose(-((PAST_STEPS - i) as f64) * DT * v, 0.0)
            }),
            agent_pose,
            agent_speed: v,
            agent_box: OrientedBox::at_pose(agent_pose, AGENT_LENGTH, AGENT_WIDTH),
            expert_future: vec![],
        }
    }
}

/// One scenario family. Implementations lay the scene out in the agent frame;
/// [`generate_with`] adds the expert and a random world placement.
pub trait ScenarioGenerator: Send + Sync {
    fn kind(&self) -> ScenarioKind;
    fn layout(&self, rng: &mut ChaCha8Rng, seed: u64) -> Result<VectorScene>;
}

fn speed_limit(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(3.5..5.5)
}

fn maybe_oncoming(rng: &mut ChaCha8Rng, road: &Road, scene: &mut VectorScene, p: f64) {
    if rng.random_bool(p) {
        let s0 = rng.random_range(6.0..20.0);
        let u = rng.random_range(3.0..6.0);
        let id = scene.objects.len() as u32;
        scene.objects.push(road.moving_object(
            id,
            ObjectKind::Vehicle,
            AGENT_LENGTH,
            AGENT_WIDTH,
            true,
            move |t| (s0 - u * t, LANE_WIDTH),
        ));
    }
}

pub struct Straight;

impl ScenarioGenerator for Straight {
    fn kind(&self) -> ScenarioKind {
        ScenarioKind::Straight
    }

    fn layout(&self, rng: &mut ChaCha8Rng, seed: u64) -> Result<VectorScene> {
        let road = Road::new(0.0, speed_limit(rng));
        Ok(road.scene(self.kind(), seed))
    }
}

pub struct CurvedRoad;

impl ScenarioGenerator for CurvedRoad {
    fn kind(&self) -> ScenarioKind {
        ScenarioKind::CurvedRoad
    }

    fn layout(&self, rng: &mut ChaCha8Rng, seed: u64) -> Result<VectorScene> {
        let magnitude = rng.random_range(0.03..0.08);
        let curvature = if rng.random_bool(0.5) { magnitude } else { -magnitude };
        let road = Road::new(curvature, speed_limit(rng));
        let mut scene = road.scene(self.kind(), seed);
        maybe_oncoming(rng, &road, &mut scene, 0.5);
        Ok(scene)
    }
}

pub struct StopSignScenario;

impl ScenarioGenerator for StopSignScenario {
    fn kind(&self) -> ScenarioKind {
        ScenarioKind::StopSign
    }

    fn layout(&self, rng: &mut ChaCha8Rng, seed: u64) -> Result<VectorScene> {
        let road = Road::new(rng.random_range(-0.03..0.03), speed_limit(rng));
        let mut scene = road.scene(self.kind(), seed);
        let s = rng.random_range(6.0..11.0);
        scene.stop_signs.push(StopSign {
            id: 0,
            lane: 0,
            line: road.line_across(s, 0.4, LANE_WIDTH, 0.0),
        });
        maybe_oncoming(rng, &road, &mut scene, 0.3);
        Ok(scene)
    }
}

pub struct LeadVehicleBrake;

impl ScenarioGenerator for LeadVehicleBrake {
    fn kind(&self) -> ScenarioKind {
        ScenarioKind::LeadVehicleBrake
    }

    fn layout(&self, rng: &mut ChaCha8Rng, seed: u64) -> Result<VectorScene> {
        let road = Road::new(rng.random_range(-0.02..0.02), speed_limit(rng));
        let mut scene = road.scene(self.kind(), seed);
        let center = rng.random_range(7.0..10.5) + AGENT_LENGTH / 2.0;
        let u = rng.random_range(0.5..2.0);
        let decel = 3.0;
        let t_stop = u / decel;
        scene.objects.push(road.moving_object(
            0,
            ObjectKind::Vehicle,
            AGENT_LENGTH,
            AGENT_WIDTH,
            false,
            move |t| {
                let s = if t <= 0.0 {
                    center + u * t
                } else {
                    let tt = t.min(t_stop);
                    center + u * tt - 0.5 * decel * tt * tt
                };
                (s, 0.0)
            },
        ));
        maybe_oncoming(rng, &road, &mut scene, 0.3);
        Ok(scene)
    }
}

pub struct PinchPoint;

impl ScenarioGenerator for PinchPoint {
    fn kind(&self) -> ScenarioKind {
        ScenarioKind::PinchPoint
    }

    fn layout(&self, rng: &mut ChaCha8Rng, seed: u64) -> Result<VectorScene> {
        let mut road = Road::new(0.0, speed_limit(rng));
        road.right_edge = LANE_WIDTH / 2.0 + 2.5;
        let mut scene = road.scene(self.kind(), seed);
        let count = rng.random_range(1..=3);
        let mut s = rng.random_range(4.0..9.0);
        for id in 0..count {
            let inner = rng.random_range(1.2..1.5);
            let lateral = -(inner + AGENT_WIDTH / 2.0);
            let at = s;
            scene.objects.push(road.moving_object(
                id,
                ObjectKind::Vehicle,
                AGENT_LENGTH,
                AGENT_WIDTH,
                false,
                move |_| (at, lateral),
            ));
            s += AGENT_LENGTH + rng.random_range(1.0..3.0);
        }
        Ok(scene)
    }
}

pub struct CrosswalkPedestrian;

impl ScenarioGenerator for CrosswalkPedestrian {
    fn kind(&self) -> ScenarioKind {
        ScenarioKind::CrosswalkPedestrian
    }

    fn layout(&self, rng: &mut ChaCha8Rng, seed: u64) -> Result<VectorScene> {
        let road = Road::new(0.0, speed_limit(rng));
        let mut scene = road.scene(self.kind(), seed);
        let near = rng.random_range(7.0..10.0);
        let depth = 3.0;
        scene.crosswalks.push(Crosswalk {
            id: 0,
            area: road.line_across(near + depth / 2.0, depth, 2.0 * LANE_WIDTH + 0.5, LANE_WIDTH / 2.0),
        });
        let lateral_now = rng.random_range(-3.0..1.5);
        let direction = if lateral_now < 0.0 { 1.0 } else { -1.0 };
        let w = rng.random_range(1.0..1.5);
        let s = near + depth / 2.0;
        let mut ped = road.moving_object(0, ObjectKind::Pedestrian, 0.6, 0.6, false, move |t| {
            (s, lateral_now + direction * w * t)
        });
        // Pedestrians face their walking direction.
        let facing = direction * FRAC_PI_2;
        for b in ped.past.iter_mut().chain(ped.future.iter_mut()) {
            b.heading += facing;
        }
        scene.objects.push(ped);
        maybe_oncoming(rng, &road, &mut scene, 0.3);
        Ok(scene)
    }
}

pub struct TrafficLightScenario;

impl ScenarioGenerator for TrafficLightScenario {
    fn kind(&self) -> ScenarioKind {
        ScenarioKind::TrafficLight
    }

    fn layout(&self, rng: &mut ChaCha8Rng, seed: u64) -> Result<VectorScene> {
        use LightState::*;
        let road = Road::new(rng.random_range(-0.02..0.02), speed_limit(rng));
        let mut scene = road.scene(self.kind(), seed);
        let s = rng.random_range(6.0..11.0);
        let r: f64 = rng.random();
        let states = if r < 0.4 {
            if rng.random_bool(0.5) {
                [Red; PAST_STEPS]
            } else {
                [Yellow, Yellow, Red, Red, Red]
            }
        } else if r < 0.6 {
            [Green, Green, Green, Yellow, Yellow]
        } else {
            [Green; PAST_STEPS]
        };
        scene.traffic_lights.push(TrafficLight {
            id: 0,
            lane: 0,
            stop_line: road.line_across(s, 0.4, LANE_WIDTH, 0.0),
            painted_segment: road.ego.slice(BEHIND + s - 8.0, BEHIND + s, STEP),
            states,
        });
        maybe_oncoming(rng, &road, &mut scene, 0.3);
        Ok(scene)
    }
}

/// Generators registered by scenario name.
pub struct ScenarioRegistry {
    generators: Vec<Box<dyn ScenarioGenerator>>,
}

impl Default for ScenarioRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl ScenarioRegistry {
    pub fn empty() -> Self {
        Self { generators: vec![] }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(Straight));
        r.register(Box::new(CurvedRoad));
        r.register(Box::new(StopSignScenario));
        r.register(Box::new(LeadVehicleBrake));
        r.register(Box::new(PinchPoint));
        r.register(Box::new(CrosswalkPedestrian));
        r.register(Box::new(TrafficLightScenario));
        r
    }

    /// Adds a generator, replacing any earlier one for the same kind.
    pub fn register(&mut self, generator: Box<dyn ScenarioGenerator>) {
        self.generators.retain(|g| g.kind() != generator.kind());
        self.generators.push(generator);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.generators.iter().map(|g| g.kind().name()).collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn ScenarioGenerator> {
        self.generators
            .iter()
            .find(|g| g.kind().name() == name)
            .map(|g| g.as_ref())
            .ok_or_else(|| SceneError::InvalidArgument(format!("unknown scenario kind {name:?}")))
    }
}

/// Lays out the scene, adds the expert future, and places it in the world.
pub fn generate_with(generator: &dyn ScenarioGenerator, seed: u64) -> Result<VectorScene> {
    let salt = 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(generator.kind().code() as u64 + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    let mut scene = generator.layout(&mut rng, seed)?;
    scene.expert_future = expert_policy(&scene)?;
    let world = RigidTransform {
        rotation: rng.random_range(-PI..PI),
        translation: Vec2::new(rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0)),
    };
    let scene = scene.transformed(&world);
    scene.validate()?;
    Ok(scene)
}

pub fn generate_scenario(kind: ScenarioKind, seed: u64) -> Result<VectorScene> {
    let registry = ScenarioRegistry::builtin();
    generate_with(registry.get(kind.name())?, seed)
}

/// Like [`generate_scenario`] but selects the kind by name.
pub fn generate_named(name: &str, seed: u64) -> Result<VectorScene> {
    generate_scenario(name.parse()?, seed)
}
