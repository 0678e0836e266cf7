//! Scripted expert: follows the route centerline at the lane speed limit and
//! brakes for stop lines, red or yellow lights, and obstacles in its path.

use crate::error::{Result, SceneError};
use crate::geometry::{OrientedBox, Polyline, Pose};
use crate::scene::{ObjectKind, VectorScene, AGENT_LENGTH, AGENT_WIDTH, DT, HORIZON};

/// Comfortable deceleration (m/s^2); also used as the acceleration limit.
pub const COMFORT_DECEL: f64 = 2.0;
/// Gap kept in front of stop lines and obstacles (m).
pub const STOP_MARGIN: f64 = 1.0;
/// Objects whose inner edge is closer than this to the route (m) narrow the
/// drivable gap and slow the expert down.
pub const PINCH_CLEARANCE: f64 = AGENT_WIDTH / 2.0 + 1.0;
/// Speed fraction of the limit used while squeezing past a pinch point.
pub const PINCH_SPEED_FRACTION: f64 = 0.5;

/// Constraints along the route, in agent-center arclength.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpeedConstraints {
    pub speed_limit: f64,
    /// Arclengths where the agent center must come to a stop.
    pub stop_points: Vec<f64>,
    /// `(start arclength, max speed)` zones that persist to the end of the route.
    pub slow_zones: Vec<(f64, f64)>,
}

/// Arclength interval a box occupies along the route and its closest lateral edge.
fn route_extent(route: &Polyline, b: &OrientedBox) -> (f64, f64, f64) {
    let mut s_min = f64::INFINITY;
    let mut s_max = f64::NEG_INFINITY;
    let mut lat_min = f64::INFINITY;
    let mut lat_max = f64::NEG_INFINITY;
    for c in b.corners() {
        let (s, lat) = route.project(c);
        s_min = s_min.min(s);
        s_max = s_max.max(s);
        lat_min = lat_min.min(lat);
        lat_max = lat_max.max(lat);
    }
    let edge = if lat_min <= 0.0 && lat_max >= 0.0 {
        0.0
    } else {
        lat_min.abs().min(lat_max.abs())
    };
    (s_min, s_max, edge)
}

/// Derives the expert's constraints from the symbolic scene.
pub fn constraints(scene: &VectorScene) -> Result<SpeedConstraints> {
    let ego = scene
        .lanes
        .first()
        .ok_or_else(|| SceneError::ScenarioGeneration("scene has no lanes".into()))?;
    let route = &scene.route;
    let half = AGENT_LENGTH / 2.0;
    let mut c = SpeedConstraints {
        speed_limit: ego.speed_limit,
        ..Default::default()
    };
    let ahead = |s: f64| s > half - 1e-9;
    for sign in &scene.stop_signs {
        let (s0, _, edge) = route_extent(route, &sign.line);
        if edge == 0.0 && ahead(s0) {
            c.stop_points.push(s0 - STOP_MARGIN - half);
        }
    }
    for light in &scene.traffic_lights {
        if !light.states[light.states.len() - 1].requires_stop() {
            continue;
        }
        let (s0, _, edge) = route_extent(route, &light.stop_line);
        if edge == 0.0 && ahead(s0) {
            c.stop_points.push(s0 - STOP_MARGIN - half);
        }
    }
    let corridor = AGENT_WIDTH / 2.0 + 0.2;
    for obj in &scene.objects {
        let boxes = std::iter::once(obj.current()).chain(obj.future.iter());
        for b in boxes {
            let (s0, _, edge) = route_extent(route, b);
            if !ahead(s0 + 1e-9) {
                continue;
            }
            if edge < corridor {
                // Pedestrians on a crosswalk hold the agent before the crosswalk.
                let mut stop = s0;
                if obj.kind == ObjectKind::Pedestrian {
                    for cw in &scene.crosswalks {
                        if cw.area.contains(b.center) {
                            stop = stop.min(route_extent(route, &cw.area).0);
                        }
                    }
                }
                c.stop_points.push(stop - STOP_MARGIN - half);
            } else if edge < PINCH_CLEARANCE {
                c.slow_zones.push((s0 - half, PINCH_SPEED_FRACTION * ego.speed_limit));
            }
        }
    }
    Ok(c)
}

/// Integrates the expert's longitudinal motion from `(0, speed)`.
/// Returns `(arclength, speed)` for each of the `HORIZON` future steps.
pub fn speed_profile(c: &SpeedConstraints, speed: f64) -> Vec<(f64, f64)> {
    let a = COMFORT_DECEL;
    let (mut s, mut v) = (0.0f64, speed);
    let mut committed = false;
    let mut out = Vec::with_capacity(HORIZON);
    for _ in 0..HORIZON {
        let next_stop = c
            .stop_points
            .iter()
            .copied()
            .filter(|&p| p >= s - 1e-9)
            .fold(f64::INFINITY, f64::min);
        let stop_decel = if next_stop.is_finite() {
            let g = next_stop - s;
            if g <= 1e-9 {
                f64::INFINITY
            } else {
                v * v / (2.0 * g)
            }
        } else {
            0.0
        };
        let mut zone_decel = 0.0f64;
        let mut cap = c.speed_limit;
        for &(zs, zv) in &c.slow_zones {
            if s >= zs {
                cap = cap.min(zv);
                if v > zv {
                    zone_decel = zone_decel.max((v - zv) / DT);
                }
            } else {
                cap = cap.min((zv * zv + 2.0 * a * (zs - s)).sqrt());
                if v > zv {
                    zone_decel = zone_decel.max((v * v - zv * zv) / (2.0 * (zs - s)));
                }
            }
        }
        let (v_new, mut ds);
        if stop_decel >= a || (committed && stop_decel > 0.0) {
            committed = true;
            let b = stop_decel.max(zone_decel);
            if !b.is_finite() || b * DT >= v {
                v_new = 0.0;
                ds = if b.is_finite() && b > 0.0 { v * v / (2.0 * b) } else { 0.0 };
            } else {
                v_new = v - b * DT;
                ds = 0.5 * (v + v_new) * DT;
            }
        } else if zone_decel >= a {
            v_new = (v - zone_decel * DT).max(0.0);
            ds = 0.5 * (v + v_new) * DT;
        } else {
            v_new = (v + a * DT).min(cap).max(v.min(cap));
            ds = 0.5 * (v + v_new) * DT;
        }
        if next_stop.is_finite() {
            ds = ds.min((next_stop - s).max(0.0));
        }
        s += ds;
        v = v_new;
        out.push((s, v));
    }
    out
}

/// Expert waypoints (world poses on the route) for `scene`.
pub fn expert_policy(scene: &VectorScene) -> Result<Vec<Pose>> {
    if scene.route.points.len() < 2 {
        return Err(SceneError::ScenarioGeneration("scene has no route".into()));
    }
    let c = constraints(scene)?;
    let needed = c.speed_limit.max(scene.agent_speed) * HORIZON as f64 * DT + AGENT_LENGTH;
    if scene.route.length() < needed {
        return Err(SceneError::ScenarioGeneration(format!(
            "route of {:.1} m is shorter than the {needed:.1} m horizon",
            scene.route.length()
        )));
    }
    Ok(speed_profile(&c, scene.agent_speed)
        .into_iter()
        .map(|(s, _)| scene.route.sample(s))
        .collect())
}
