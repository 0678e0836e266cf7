//! Trajectory and attention metrics.

use abn_numerics::Tensor;

use crate::error::{invalid, Result};

fn check_len(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> Result<()> {
    if pred.len() != gt.len() || pred.is_empty() {
        return invalid(format!("{} predicted vs {} ground-truth waypoints", pred.len(), gt.len()));
    }
    Ok(())
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Mean Euclidean distance over the waypoints.
pub fn ade(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> Result<f64> {
    check_len(pred, gt)?;
    Ok(pred.iter().zip(gt).map(|(&p, &g)| dist(p, g)).sum::<f64>() / pred.len() as f64)
}

/// Distance at the last waypoint.
pub fn fde(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> Result<f64> {
    check_len(pred, gt)?;
    Ok(dist(pred[pred.len() - 1], gt[gt.len() - 1]))
}

pub fn max_step_error(pred: &[[f64; 2]], gt: &[[f64; 2]]) -> Result<f64> {
    check_len(pred, gt)?;
    Ok(pred.iter().zip(gt).map(|(&p, &g)| dist(p, g)).fold(0.0, f64::max))
}

/// Mean over steps of the summed product of the predicted box heatmap and
/// the ground-truth object occupancy at the same step.
pub fn collision_rate(boxes: &[Tensor], occupancy: &[Tensor]) -> Result<f64> {
    if boxes.len() != occupancy.len() || boxes.is_empty() {
        return invalid(format!("{} heatmaps vs {} occupancy grids", boxes.len(), occupancy.len()));
    }
    let mut total = 0.0;
    for (b, o) in boxes.iter().zip(occupancy) {
        if b.shape() != o.shape() {
            return invalid(format!("heatmap {:?} vs occupancy {:?}", b.shape(), o.shape()));
        }
        total += b.data().iter().zip(o.data()).map(|(x, y)| x * y).sum::<f64>();
    }
    Ok(total / boxes.len() as f64)
}

/// Natural-log entropy of a normalized attention map.
pub fn attention_entropy(alpha: &Tensor) -> Result<f64> {
    let sum = alpha.sum();
    if (sum - 1.0).abs() > 1e-4 || alpha.data().iter().any(|&a| a < 0.0) {
        return invalid(format!("attention map sums to {sum}, expected 1"));
    }
    Ok(-alpha
        .data()
        .iter()
        .filter(|&&a| a > 0.0)
        .map(|&a| a * a.ln())
        .sum::<f64>())
}
