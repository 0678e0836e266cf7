//! The training loop.

use std::path::{Path, PathBuf};

use abn_model::{save_checkpoint, ModelError, ForwardOptions, Lineage, Model, ModelConfig, ModelInput, VariantConfig};
use abn_numerics::{AdamConfig, AdamState, Graph, NumericsError, Tensor};
use abn_scenegen::{read_dataset, Example};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result, TrainError};
use crate::loss::{imitation_loss, LossReport, LossWeights};
use crate::targets::Targets;

/// Keeps the shuffle stream apart from the initialization stream.
const SHUFFLE_SALT: u64 = 0x5eed_5a1f;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dataset: PathBuf,
    pub variant: VariantConfig,
    pub model: ModelConfig,
    pub steps: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    /// Learning-rate multiplier applied after every step.
    pub decay: f64,
    pub seed: u64,
    /// Seed the dataset was generated with, if known; copied into checkpoints.
    pub data_seed: Option<u64>,
    /// Save a checkpoint every this many steps; 0 saves only the final one.
    pub checkpoint_every: usize,
    /// Where checkpoints and `metrics.csv` go; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
    pub weights: LossWeights,
}

impl TrainConfig {
    pub fn new(dataset: impl Into<PathBuf>, variant: VariantConfig) -> Self {
        Self {
            dataset: dataset.into(),
            variant,
            model: ModelConfig::desk(),
            steps: 3000,
            batch_size: 8,
            base_lr: 2e-3,
            decay: 0.9993,
            seed: 0,
            data_seed: None,
            checkpoint_every: 0,
            out_dir: None,
            weights: LossWeights::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return invalid("batch size must be at least 1");
        }
        if !(self.base_lr > 0.0) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return invalid("learning rate must be positive and decay in (0, 1]");
        }
        self.variant.validate()?;
        self.model.validate()?;
        Ok(())
    }

    pub fn lineage(&self, steps: u64) -> Lineage {
        Lineage {
            init_seed: self.seed,
            train_seed: Some(self.seed),
            data_seed: self.data_seed,
            steps,
        }
    }
}

/// One row of the metric log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub lr: f64,
    pub position: f64,
    pub heading: f64,
    pub box_heatmap: f64,
    pub occupancy: f64,
    pub total: f64,
}

impl LogRow {
    fn new(step: usize, lr: f64, r: &LossReport) -> Self {
        Self {
            step,
            lr,
            position: r.position,
            heading: r.heading,
            box_heatmap: r.box_heatmap,
            occupancy: r.occupancy,
            total: r.total,
        }
    }

    pub fn report(&self) -> LossReport {
        LossReport {
            position: self.position,
            heading: self.heading,
            box_heatmap: self.box_heatmap,
            occupancy: self.occupancy,
            total: self.total,
        }
    }
}

pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<LogRow>,
    /// Periodic checkpoints followed by the final one.
    pub checkpoints: Vec<PathBuf>,
}

/// Epoch-wise permutations from a seeded stream, independent of timing.
pub struct Shuffler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    next: usize,
}

impl Shuffler {
    pub fn new(len: usize, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed ^ SHUFFLE_SALT),
            order: (0..len).collect(),
            next: len,
        }
    }

    pub fn batch(&mut self, size: usize) -> Vec<usize> {
        (0..size)
            .map(|_| {
                if self.next == self.order.len() {
                    self.order.shuffle(&mut self.rng);
                    self.next = 0;
                }
                self.next += 1;
                self.order[self.next - 1]
            })
            .collect()
    }
}

/// Mean loss and gradient over `batch`, one graph per example.
pub fn batch_gradients(
    model: &Model,
    batch: &[(&Example, &Targets)],
    weights: &LossWeights,
) -> Result<(LossReport, Vec<Option<Tensor>>)> {
    let mut report = LossReport::default();
    let mut grads: Vec<Option<Tensor>> = vec![None; model.params().len()];
    let w = 1.0 / batch.len() as f64;
    for (example, targets) in batch {
        let input = ModelInput::from_raster(&example.raster, model.config())?;
        let mut g = Graph::new();
        let p = model.params().bind(&mut g)?;
        let out = model.forward(&mut g, &p, &input, ForwardOptions::default())?;
        let terms = imitation_loss(&mut g, &out, targets, weights)?;
        report.accumulate(&terms.report(&g), w);
        let per = p.collect(&g.backward(terms.total)?);
        for (acc, gr) in grads.iter_mut().zip(per) {
            let Some(gr) = gr else { continue };
            match acc {
                Some(a) => {
                    for (x, y) in a.data_mut().iter_mut().zip(gr.data()) {
                        *x += w * y;
                    }
                }
                None => *acc = Some(gr.map(|y| w * y)),
            }
        }
    }
    Ok((report, grads))
}

/// Reads the dataset named in `config` and trains a freshly initialized model.
pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let examples = read_dataset(&config.dataset)?;
    train_on(&examples, config)
}

pub fn train_on(examples: &[Example], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let model = Model::new(config.model.clone(), config.variant, config.seed)?;
    train_from(model, examples, config)
}

/// Continues from `model`; the shuffle stream still starts from `config.seed`.
pub fn train_from(mut model: Model, examples: &[Example], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if examples.is_empty() && config.steps > 0 {
        return invalid("cannot train on an empty dataset");
    }
    let targets = examples
        .iter()
        .map(|e| Targets::from_example(e, model.config()))
        .collect::<Result<Vec<_>>>()?;
    let mut adam = AdamState::new(
        AdamConfig {
            learning_rate: config.base_lr,
            decay: config.decay,
            ..AdamConfig::default()
        },
        model.params(),
    )?;
    let mut shuffler = Shuffler::new(examples.len(), config.seed);
    let mut log = Vec::with_capacity(config.steps);
    let mut checkpoints = Vec::new();
    if let Some(dir) = &config.out_dir {
        std::fs::create_dir_all(dir)?;
    }

    for step in 0..config.steps {
        let batch: Vec<_> = shuffler
            .batch(config.batch_size)
            .into_iter()
            .map(|i| (&examples[i], &targets[i]))
            .collect();
        let (report, grads) = batch_gradients(&model, &batch, &config.weights).map_err(|e| match non_finite(&e) {
            Some(what) => TrainError::Divergence { step, what },
            None => e,
        })?;
        if !report.is_finite() {
            return Err(TrainError::Divergence {
                step,
                what: format!("non-finite loss {report:?}"),
            });
        }
        let bad = grads
            .iter()
            .zip(model.params().iter())
            .find(|(g, _)| g.as_ref().is_some_and(|g| g.data().iter().any(|v| !v.is_finite())));
        if let Some((_, (name, _))) = bad {
            return Err(TrainError::Divergence {
                step,
                what: format!("non-finite gradient for {name}"),
            });
        }
        log.push(LogRow::new(step, adam.learning_rate(), &report));
        adam.step(model.params_mut(), &grads)?;
        let done = step + 1;
        if let Some(dir) = &config.out_dir {
            if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done < config.steps {
                let path = dir.join(format!("step_{done:06}.ckpt"));
                save_checkpoint(&model, &config.lineage(done as u64), &path)?;
                checkpoints.push(path);
            }
        }
    }

    if let Some(dir) = &config.out_dir {
        let path = dir.join("final.ckpt");
        save_checkpoint(&model, &config.lineage(config.steps as u64), &path)?;
        checkpoints.push(path);
        write_log(&log, &dir.join("metrics.csv"))?;
    }
    Ok(TrainOutcome {
        model,
        log,
        checkpoints,
    })
}

fn non_finite(e: &TrainError) -> Option<String> {
    match e {
        TrainError::Numerics(NumericsError::NonFinite(what))
        | TrainError::Model(ModelError::Numerics(NumericsError::NonFinite(what))) => {
            Some(format!("non-finite value produced by {what}"))
        }
        _ => None,
    }
}

pub fn write_log(log: &[LogRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if log.is_empty() {
        w.write_record(["step", "lr", "position", "heading", "box_heatmap", "occupancy", "total"])?;
    }
    for row in log {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
