//! Per-variant metric rows and CSV output.

use std::path::Path;

use abn_model::{Model, Rollout};
use abn_numerics::Tensor;
use abn_scenegen::Example;
use serde::{Deserialize, Serialize};

use crate::baseline::constant_velocity;
use crate::error::{invalid, Result};
use crate::metrics::{ade, attention_entropy, collision_rate, fde};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleMetrics {
    pub ade: f64,
    pub fde: f64,
    pub collision: Option<f64>,
    pub entropy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub variant: String,
    pub ade: f64,
    pub fde: f64,
    pub collision: Option<f64>,
    pub entropy: Option<f64>,
    pub count: usize,
}

pub struct Evaluation {
    pub per_example: Vec<ExampleMetrics>,
    pub row: MetricsRow,
}

impl Evaluation {
    pub fn ades(&self) -> Vec<f64> {
        self.per_example.iter().map(|m| m.ade).collect()
    }

    pub fn entropies(&self) -> Option<Vec<f64>> {
        self.per_example.iter().map(|m| m.entropy).collect()
    }
}

fn gt_positions(example: &Example) -> Vec<[f64; 2]> {
    example.waypoints.iter().map(|w| [w.x, w.y]).collect()
}

pub fn example_metrics(rollout: &Rollout, example: &Example) -> Result<ExampleMetrics> {
    let pred: Vec<[f64; 2]> = rollout.waypoints.iter().map(|w| [w[0], w[1]]).collect();
    let gt = gt_positions(example);
    let side = example.occupancy_side();
    let occupancy = example
        .occupancy
        .iter()
        .map(|o| Tensor::new(vec![side, side], o.iter().map(|&v| v as f64).collect()))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(ExampleMetrics {
        ade: ade(&pred, &gt)?,
        fde: fde(&pred, &gt)?,
        collision: Some(collision_rate(&rollout.box_heatmaps, &occupancy)?),
        entropy: rollout.alpha.as_ref().map(attention_entropy).transpose()?,
    })
}

fn aggregate(variant: &str, per: &[ExampleMetrics]) -> Result<MetricsRow> {
    if per.is_empty() {
        return invalid("no examples to evaluate");
    }
    let n = per.len() as f64;
    let mean = |f: &dyn Fn(&ExampleMetrics) -> Option<f64>| -> Option<f64> {
        per.iter().map(f).sum::<Option<f64>>().map(|s| s / n)
    };
    Ok(MetricsRow {
        variant: variant.to_string(),
        ade: mean(&|m| Some(m.ade)).unwrap_or(0.0),
        fde: mean(&|m| Some(m.fde)).unwrap_or(0.0),
        collision: mean(&|m| m.collision),
        entropy: mean(&|m| m.entropy),
        count: per.len(),
    })
}

/// Rolls `model` out on every example, in order.
pub fn evaluate(model: &Model, examples: &[Example], variant: &str) -> Result<Evaluation> {
    let per_example = examples
        .iter()
        .map(|e| example_metrics(&model.rollout(&e.raster)?, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation {
        row: aggregate(variant, &per_example)?,
        per_example,
    })
}

/// The constant-velocity baseline as a metrics row (no heatmaps or attention).
pub fn evaluate_baseline(examples: &[Example]) -> Result<Evaluation> {
    let per_example = examples
        .iter()
        .map(|e| {
            let pred = constant_velocity(e);
            let gt = gt_positions(e);
            Ok(ExampleMetrics {
                ade: ade(&pred, &gt)?,
                fde: fde(&pred, &gt)?,
                collision: None,
                entropy: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation {
        row: aggregate("constant-velocity", &per_example)?,
        per_example,
    })
}

pub fn write_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variant", "ade", "fde", "collision", "entropy", "count"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
    for r in rows {
        w.write_record([
            r.variant.clone(),
            format!("{}", r.ade),
            format!("{}", r.fde),
            opt(r.collision),
            opt(r.entropy),
            r.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Bin edges for attention histograms, as multiples of the uniform weight.
pub const HISTOGRAM_EDGES: [f64; 11] = [0.0, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, f64::INFINITY];

/// Counts attention weights per bin, pooled over `maps`.
pub fn attention_histogram(maps: &[Tensor]) -> Vec<usize> {
    let mut counts = vec![0; HISTOGRAM_EDGES.len() - 1];
    for m in maps {
        let uniform = 1.0 / m.len() as f64;
        for &a in m.data() {
            let rel = a / uniform;
            let bin = HISTOGRAM_EDGES[1..].iter().position(|&e| rel < e).unwrap_or(counts.len() - 1);
            counts[bin] += 1;
        }
    }
    counts
}

/// One row per `(variant, bin)`; bounds are relative to the uniform weight.
pub fn write_histogram_csv(histograms: &[(String, Vec<usize>)], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["variant", "bin_lo", "bin_hi", "count"])?;
    for (variant, counts) in histograms {
        for (i, c) in counts.iter().enumerate() {
            w.write_record([
                variant.clone(),
                HISTOGRAM_EDGES[i].to_string(),
                HISTOGRAM_EDGES[i + 1].to_string(),
                c.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
