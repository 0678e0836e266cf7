//! Imitation losses on a recorded forward pass.

use abn_model::{ForwardOutput, Model, ModelInput, ForwardOptions};
use abn_numerics::{Graph, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::targets::Targets;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub position: f64,
    pub heading: f64,
    pub box_heatmap: f64,
    pub occupancy: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            position: 1.0,
            heading: 0.5,
            box_heatmap: 1.0,
            occupancy: 0.5,
        }
    }
}

/// Component losses; `total` is the weighted sum under [`LossWeights`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Mean squared waypoint error (m^2).
    pub position: f64,
    /// Mean of `1 - cos` of the heading error.
    pub heading: f64,
    /// Mean per-cell binary cross-entropy of the box heatmaps.
    pub box_heatmap: f64,
    /// Same for the object occupancy head; zero without the object branch.
    pub occupancy: f64,
    pub total: f64,
}

impl LossReport {
    pub(crate) fn accumulate(&mut self, other: &LossReport, w: f64) {
        self.position += w * other.position;
        self.heading += w * other.heading;
        self.box_heatmap += w * other.box_heatmap;
        self.occupancy += w * other.occupancy;
        self.total += w * other.total;
    }

    pub fn is_finite(&self) -> bool {
        [self.position, self.heading, self.box_heatmap, self.occupancy, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Graph nodes for each term, so the caller can read values or differentiate.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub position: Var,
    pub heading: Var,
    pub box_heatmap: Var,
    pub occupancy: Option<Var>,
    pub total: Var,
}

impl LossTerms {
    pub fn report(&self, g: &Graph) -> LossReport {
        let v = |x: Var| g.value(x).data()[0];
        LossReport {
            position: v(self.position),
            heading: v(self.heading),
            box_heatmap: v(self.box_heatmap),
            occupancy: self.occupancy.map_or(0.0, v),
            total: v(self.total),
        }
    }
}

pub fn imitation_loss(g: &mut Graph, out: &ForwardOutput, targets: &Targets, w: &LossWeights) -> Result<LossTerms> {
    let k = out.steps.len();
    if k != targets.horizon() || k != targets.boxes.len() {
        return invalid(format!("rollout has {k} steps, targets have {}", targets.horizon()));
    }
    if k == 0 {
        return invalid("empty rollout");
    }
    let inv_k = 1.0 / k as f64;
    let mut pos_terms = Vec::with_capacity(k);
    let mut head_terms = Vec::with_capacity(k);
    let mut box_terms = Vec::with_capacity(k);
    for (s, (wp, bx)) in out.steps.iter().zip(targets.waypoints.iter().zip(&targets.boxes)) {
        let gt = g.constant(Tensor::new(vec![2], vec![wp[0], wp[1]])?)?;
        let d = g.sub(s.position, gt)?;
        let d2 = g.square(d)?;
        pos_terms.push(g.sum_all(d2)?);

        let gt = g.constant(Tensor::new(vec![1, 1], vec![wp[2]])?)?;
        let dh = g.sub(s.heading, gt)?;
        let c = g.cos(dh)?;
        let one_minus = g.scale(c, -1.0)?;
        let one_minus = g.add_scalar(one_minus, 1.0)?;
        head_terms.push(g.sum_all(one_minus)?);

        let bce = g.bce_with_logits(s.box_logits, bx)?;
        box_terms.push(g.mean_all(bce)?);
    }
    let position = mean_of(g, &pos_terms, inv_k)?;
    let heading = mean_of(g, &head_terms, inv_k)?;
    let box_heatmap = mean_of(g, &box_terms, inv_k)?;

    let occupancy = match &out.object {
        Some(o) => {
            let logits = g.value(o.occupancy_logits).shape().to_vec();
            let (n, m) = (logits[0], logits[1]);
            if logits[2] != targets.occupancy.len() {
                return invalid(format!(
                    "occupancy head predicts {} steps, targets have {}",
                    logits[2],
                    targets.occupancy.len()
                ));
            }
            // targets are step-major; the head is channels-last
            let kk = targets.occupancy.len();
            let mut data = vec![0.0; n * m * kk];
            for (step, t) in targets.occupancy.iter().enumerate() {
                if t.len() != n * m {
                    return invalid("occupancy target does not match the cell grid");
                }
                for (cell, &v) in t.data().iter().enumerate() {
                    data[cell * kk + step] = v;
                }
            }
            let bce = g.bce_with_logits(o.occupancy_logits, &Tensor::new(vec![n, m, kk], data)?)?;
            Some(g.mean_all(bce)?)
        }
        None => None,
    };

    let mut total = g.scale(position, w.position)?;
    for (term, weight) in [(heading, w.heading), (box_heatmap, w.box_heatmap)] {
        let t = g.scale(term, weight)?;
        total = g.add(total, t)?;
    }
    if let Some(o) = occupancy {
        let t = g.scale(o, w.occupancy)?;
        total = g.add(total, t)?;
    }
    Ok(LossTerms {
        position,
        heading,
        box_heatmap,
        occupancy,
        total,
    })
}

fn mean_of(g: &mut Graph, terms: &[Var], inv: f64) -> Result<Var> {
    let mut acc = terms[0];
    for &t in &terms[1..] {
        acc = g.add(acc, t)?;
    }
    Ok(g.scale(acc, inv)?)
}

/// Loss of the current weights on one example, without gradients.
pub fn evaluate_loss(model: &Model, input: &ModelInput, targets: &Targets, w: &LossWeights) -> Result<LossReport> {
    let mut g = Graph::new();
    let p = model.params().bind(&mut g)?;
    let out = model.forward(&mut g, &p, input, ForwardOptions::default())?;
    Ok(imitation_loss(&mut g, &out, targets, w)?.report(&g))
}
