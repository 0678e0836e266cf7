//! Constant-velocity extrapolation from the last observed step.

use abn_scenegen::{Example, DT};

/// Agent-frame positions at `DT .. K * DT` assuming the velocity between
/// the last past pose and the current one persists.
pub fn constant_velocity(example: &Example) -> Vec<[f64; 2]> {
    let last = example.agent_past.last().map_or([0.0, 0.0], |w| [w.x, w.y]);
    let v = [-last[0] / DT, -last[1] / DT];
    (1..=example.waypoints.len())
        .map(|k| [v[0] * k as f64 * DT, v[1] * k as f64 * DT])
        .collect()
}
