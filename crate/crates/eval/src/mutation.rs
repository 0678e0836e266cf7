//! Minimal scene edits for counterfactual runs.

use std::fmt;
use std::str::FromStr;

use abn_scenegen::expert::expert_policy;
use abn_scenegen::scene::LightState;
use abn_scenegen::{AgentFrame, VectorScene};

use crate::error::{invalid, EvalError, Result};
use crate::region::Region;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mutation {
    Identity,
    RemoveObjects,
    RemoveObjectById(u32),
    /// Sets every history entry of one light (or all lights) to `state`.
    SetLightState { id: Option<u32>, state: LightState },
    /// Removes one stop sign (or all of them).
    RemoveSign { id: Option<u32> },
}

impl Mutation {
    /// The edited scene with the expert re-planned on it.
    pub fn apply(&self, scene: &VectorScene) -> Result<VectorScene> {
        let mut out = scene.clone();
        match *self {
            Mutation::Identity => return Ok(out),
            Mutation::RemoveObjects => {
                if out.objects.is_empty() {
                    return invalid("remove_objects: scene has no dynamic objects");
                }
                out.objects.clear();
            }
            Mutation::RemoveObjectById(id) => {
                let before = out.objects.len();
                out.objects.retain(|o| o.id != id);
                if out.objects.len() == before {
                    return invalid(format!("remove_object_by_id: no object {id}"));
                }
            }
            Mutation::SetLightState { id, state } => {
                let mut hit = false;
                for l in out.traffic_lights.iter_mut().filter(|l| id.is_none_or(|i| i == l.id)) {
                    l.states = [state; abn_scenegen::PAST_STEPS];
                    hit = true;
                }
                if !hit {
                    return invalid(format!("set_light_state: no matching light ({id:?})"));
                }
            }
            Mutation::RemoveSign { id } => {
                let before = out.stop_signs.len();
                out.stop_signs.retain(|s| id.is_some_and(|i| i != s.id));
                if out.stop_signs.len() == before {
                    return invalid(format!("remove_sign: no matching stop sign ({id:?})"));
                }
            }
        }
        out.expert_future = expert_policy(&out)?;
        out.validate()?;
        Ok(out)
    }

    /// Agent-frame footprints of the entities this mutation touches in `scene`.
    pub fn regions(&self, scene: &VectorScene) -> Vec<Region> {
        let frame = AgentFrame::new(scene.agent_pose);
        match *self {
            Mutation::Identity => Vec::new(),
            Mutation::RemoveObjects => scene
                .objects
                .iter()
                .map(|o| Region::Box(frame.oriented_box(o.current())))
                .collect(),
            Mutation::RemoveObjectById(id) => scene
                .objects
                .iter()
                .filter(|o| o.id == id)
                .map(|o| Region::Box(frame.oriented_box(o.current())))
                .collect(),
            Mutation::SetLightState { id, .. } => scene
                .traffic_lights
                .iter()
                .filter(|l| id.is_none_or(|i| i == l.id))
                .map(|l| Region::Line(l.painted_segment.map(|p| frame.point(p))))
                .collect(),
            Mutation::RemoveSign { id } => scene
                .stop_signs
                .iter()
                .filter(|s| id.is_none_or(|i| i == s.id))
                .map(|s| Region::Box(frame.oriented_box(&s.line)))
                .collect(),
        }
    }
}

fn light_name(s: LightState) -> &'static str {
    match s {
        LightState::Red => "red",
        LightState::Yellow => "yellow",
        LightState::Green => "green",
        LightState::Unknown => "unknown",
    }
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mutation::Identity => write!(f, "identity"),
            Mutation::RemoveObjects => write!(f, "remove_objects"),
            Mutation::RemoveObjectById(id) => write!(f, "remove_object_by_id={id}"),
            Mutation::SetLightState { id: None, state } => write!(f, "set_light_state={}", light_name(*state)),
            Mutation::SetLightState { id: Some(i), state } => {
                write!(f, "set_light_state={i}:{}", light_name(*state))
            }
            Mutation::RemoveSign { id: None } => write!(f, "remove_sign"),
            Mutation::RemoveSign { id: Some(i) } => write!(f, "remove_sign={i}"),
        }
    }
}

/// Parses `identity`, `remove_objects`, `remove_object_by_id=ID`,
/// `set_light_state=[ID:]STATE`, or `remove_sign[=ID]`.
impl FromStr for Mutation {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = match s.split_once('=') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let id = |a: &str| {
            a.parse::<u32>()
                .map_err(|_| EvalError::InvalidArgument(format!("bad entity id {a:?}")))
        };
        match (kind, arg) {
            ("identity", None) => Ok(Mutation::Identity),
            ("remove_objects", None) => Ok(Mutation::RemoveObjects),
            ("remove_object_by_id", Some(a)) => Ok(Mutation::RemoveObjectById(id(a)?)),
            ("set_light_state", Some(a)) => {
                let (light, state) = match a.split_once(':') {
                    Some((i, st)) => (Some(id(i)?), st),
                    None => (None, a),
                };
                Ok(Mutation::SetLightState {
                    id: light,
                    state: state.parse()?,
                })
            }
            ("remove_sign", None) => Ok(Mutation::RemoveSign { id: None }),
            ("remove_sign", Some(a)) => Ok(Mutation::RemoveSign { id: Some(id(a)?) }),
            _ => invalid(format!("unknown mutation {s:?}")),
        }
    }
}
