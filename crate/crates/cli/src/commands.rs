//! Subcommands of the `abn` binary, callable as a library.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use abn_eval::{
    attention_histogram, counterfactual, evaluate, evaluate_baseline, upsample_pyramid, write_histogram_csv,
    write_metrics_csv, Evaluation, MetricsRow, Mutation,
};
use abn_model::{load_checkpoint, Model, ModelConfig, ModelError, VariantConfig, VARIANT_NAMES};
use abn_scenegen::{build_example, generate_scenario, read_dataset, write_dataset, GridConfig, ScenarioKind};
use abn_training::{train_from, TrainConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CliError, Result};
use crate::image::{alpha_to_gray, overlay, signed_to_gray, write_pgm, write_ppm};
use crate::manifest;

/// Default parent directory for outputs when no path is given.
pub const OUTPUT_ROOT_ENV: &str = "ABN_OUTPUT_ROOT";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

#[derive(Parser, Debug)]
#[command(name = "abn", version, about = "Attentional-bottleneck driving experiments on synthetic scenes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Command {
    /// Render a dataset of synthetic scenes.
    Generate(GenerateArgs),
    /// Train one variant on a dataset.
    Train(TrainArgs),
    /// Train and evaluate a grid of variants on the same data.
    Ablate(AblateArgs),
    /// Export attention heatmaps and overlays for a dataset.
    Explain(ExplainArgs),
    /// Compare rollouts on a scene and a mutated copy.
    Counterfactual(CounterfactualArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateArgs {
    /// Relative weights such as `stop_sign=2,straight=1`; all kinds equally by default.
    #[arg(long)]
    pub kind_mix: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset file; defaults to `$ABN_OUTPUT_ROOT/dataset-<seed>.abds`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSize {
    Desk,
    Tiny,
}

impl ModelSize {
    pub fn config(self) -> ModelConfig {
        match self {
            ModelSize::Desk => ModelConfig::desk(),
            ModelSize::Tiny => ModelConfig::tiny(),
        }
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainFlags {
    #[arg(long, value_enum, default_value_t = ModelSize::Desk)]
    pub model: ModelSize,
    #[arg(long, default_value_t = 3000)]
    pub steps: usize,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 2e-3)]
    pub lr: f64,
    /// Per-step learning-rate multiplier.
    #[arg(long, default_value_t = 0.9993)]
    pub decay: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint cadence in steps; 0 keeps only the final checkpoint.
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: usize,
}

impl TrainFlags {
    fn config(&self, dataset: &Path, variant: VariantConfig, out_dir: &Path) -> TrainConfig {
        let mut c = TrainConfig::new(dataset, variant);
        c.model = self.model.config();
        c.steps = self.steps;
        c.batch_size = self.batch_size;
        c.base_lr = self.lr;
        c.decay = self.decay;
        c.seed = self.seed;
        c.checkpoint_every = self.checkpoint_every;
        c.out_dir = Some(out_dir.to_path_buf());
        c
    }
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Variant name (`A`, `B`, `bottleneck`, ...) or flags such as
    /// `attention=bottleneck,atrous=on,pe=on`.
    #[arg(long, default_value = "bottleneck")]
    pub variant: String,
    #[command(flatten)]
    pub train: TrainFlags,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblateArgs {
    /// Comma-separated variants; the full grid by default.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub train_set: PathBuf,
    #[arg(long)]
    pub test_set: PathBuf,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Load `<out-dir>/<variant>/final.ckpt` instead of training when present.
    #[arg(long)]
    pub reuse: bool,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Only the first N examples.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Scenario kind of the scene, e.g. `stop_sign`.
    #[arg(long)]
    pub kind: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `identity`, `remove_objects`, `remove_object_by_id=ID`,
    /// `set_light_state=[ID:]STATE` or `remove_sign[=ID]`.
    #[arg(long)]
    pub mutation: String,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded location.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Train(_) => "train",
            Command::Ablate(_) => "ablate",
            Command::Explain(_) => "explain",
            Command::Counterfactual(_) => "counterfactual",
            Command::Replay(_) => "replay",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Generate(a) => Some(a.seed),
            Command::Train(a) => Some(a.train.seed),
            Command::Ablate(a) => Some(a.train.seed),
            Command::Counterfactual(a) => Some(a.seed),
            Command::Explain(_) | Command::Replay(_) => None,
        }
    }

    /// Fills unset output locations from the output root.
    pub fn resolved(mut self) -> Self {
        let root = output_root();
        match &mut self {
            Command::Generate(a) => {
                a.out.get_or_insert_with(|| root.join(format!("dataset-{}.abds", a.seed)));
            }
            Command::Train(a) => {
                a.out_dir.get_or_insert_with(|| root.join(format!("train-{}-{}", a.variant, a.train.seed)));
            }
            Command::Ablate(a) => {
                a.out_dir.get_or_insert_with(|| root.join(format!("ablate-{}", a.train.seed)));
            }
            Command::Explain(a) => {
                a.out_dir.get_or_insert_with(|| root.join("explain"));
            }
            Command::Counterfactual(a) => {
                a.out_dir.get_or_insert_with(|| root.join(format!("counterfactual-{}-{}", a.kind, a.seed)));
            }
            Command::Replay(_) => {}
        }
        self
    }

    fn with_output(mut self, out: PathBuf) -> Self {
        match &mut self {
            Command::Generate(a) => a.out = Some(out),
            Command::Train(a) => a.out_dir = Some(out),
            Command::Ablate(a) => a.out_dir = Some(out),
            Command::Explain(a) => a.out_dir = Some(out),
            Command::Counterfactual(a) => a.out_dir = Some(out),
            Command::Replay(_) => {}
        }
        self
    }

    /// Where the manifest goes: inside the output directory, or next to a
    /// dataset file.
    pub fn manifest_path(&self) -> Option<PathBuf> {
        match self {
            Command::Generate(a) => a.out.as_ref().map(|p| p.with_extension("manifest.txt")),
            Command::Train(a) => a.out_dir.as_ref().map(|d| d.join("manifest.txt")),
            Command::Ablate(a) => a.out_dir.as_ref().map(|d| d.join("manifest.txt")),
            Command::Explain(a) => a.out_dir.as_ref().map(|d| d.join("manifest.txt")),
            Command::Counterfactual(a) => a.out_dir.as_ref().map(|d| d.join("manifest.txt")),
            Command::Replay(_) => None,
        }
    }
}

/// What a command produced, for printing and for callers.
pub enum Outcome {
    Generated(GenerateReport),
    Trained(abn_training::TrainOutcome),
    Ablated(AblationOutcome),
    Explained(Vec<PathBuf>),
    Counterfactual(CounterfactualReport),
}

/// Resolves outputs, writes the manifest, then runs the command.
pub fn run(command: Command, argv: &[String]) -> Result<Outcome> {
    if let Command::Replay(r) = &command {
        let recorded = manifest::read(&r.manifest)?;
        let recorded = match &r.out {
            Some(out) => recorded.with_output(out.clone()),
            None => recorded,
        };
        return run(recorded, argv);
    }
    let command = command.resolved();
    if let Some(path) = command.manifest_path() {
        manifest::write(&path, &command, argv)?;
    }
    match command {
        Command::Generate(a) => generate(&a).map(Outcome::Generated),
        Command::Train(a) => train(&a).map(Outcome::Trained),
        Command::Ablate(a) => ablate(&a).map(Outcome::Ablated),
        Command::Explain(a) => explain(&a).map(Outcome::Explained),
        Command::Counterfactual(a) => counterfactual_cmd(&a).map(Outcome::Counterfactual),
        Command::Replay(_) => unreachable!("handled above"),
    }
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| CliError::InvalidArgument(format!("missing {what}")))
}

pub fn parse_kind_mix(spec: Option<&str>) -> Result<Vec<(ScenarioKind, f64)>> {
    let Some(spec) = spec else {
        return Ok(ScenarioKind::ALL.iter().map(|&k| (k, 1.0)).collect());
    };
    let mut mix = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let Some((kind, w)) = part.split_once('=') else {
            return invalid(format!("expected kind=weight, got {part:?}"));
        };
        let kind: ScenarioKind = kind.parse()?;
        let w: f64 = w
            .parse()
            .map_err(|_| CliError::InvalidArgument(format!("bad weight {w:?}")))?;
        if !(w >= 0.0 && w.is_finite()) {
            return invalid(format!("weight for {kind} must be a finite non-negative number"));
        }
        if mix.iter().any(|(k, _)| *k == kind) {
            return invalid(format!("{kind} listed twice"));
        }
        mix.push((kind, w));
    }
    if mix.iter().map(|(_, w)| w).sum::<f64>() <= 0.0 {
        return invalid("kind mix has no positive weight");
    }
    Ok(mix)
}

pub struct GenerateReport {
    pub path: PathBuf,
    pub counts: BTreeMap<String, usize>,
}

pub fn generate(a: &GenerateArgs) -> Result<GenerateReport> {
    let path = required(&a.out, "--out")?.to_path_buf();
    let mix = parse_kind_mix(a.kind_mix.as_deref())?;
    let total: f64 = mix.iter().map(|(_, w)| w).sum();
    let grid = GridConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut counts = BTreeMap::new();
    let mut examples = Vec::with_capacity(a.count);
    for _ in 0..a.count {
        let mut u = rng.random_range(0.0..total);
        let kind = mix
            .iter()
            .find(|(_, w)| {
                let hit = u < *w;
                u -= w;
                hit
            })
            .or_else(|| mix.iter().rev().find(|(_, w)| *w > 0.0))
            .map(|(k, _)| *k)
            .expect("mix has a positive weight");
        let scene_seed: u64 = rng.random();
        examples.push(build_example(&generate_scenario(kind, scene_seed)?, &grid)?);
        *counts.entry(kind.name().to_string()).or_insert(0) += 1;
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_dataset(&examples, &path)?;
    Ok(GenerateReport { path, counts })
}

pub fn train(a: &TrainArgs) -> Result<abn_training::TrainOutcome> {
    let out = required(&a.out_dir, "--out-dir")?;
    let variant = VariantConfig::parse(&a.variant)?;
    let config = a.train.config(&a.dataset, variant, out);
    let data = load_dataset(&a.dataset)?;
    Ok(abn_training::train_on(&data, &config)?)
}

fn load_dataset(path: &Path) -> Result<Vec<abn_scenegen::Example>> {
    read_dataset(path).map_err(|e| match CliError::from(e) {
        CliError::Io(m) => CliError::Io(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub struct VariantResult {
    pub name: String,
    pub model: Model,
    pub evaluation: Evaluation,
    pub train_seconds: f64,
    pub trained: bool,
}

pub struct AblationOutcome {
    pub variants: Vec<VariantResult>,
    pub baseline: Evaluation,
    pub rows: Vec<MetricsRow>,
    pub metrics_csv: PathBuf,
}

pub fn parse_grid(grid: Option<&str>) -> Result<Vec<String>> {
    let names: Vec<String> = match grid {
        Some(g) => g.split(';').flat_map(split_grid).collect(),
        None => VARIANT_NAMES.iter().map(|s| s.to_string()).collect(),
    };
    if names.is_empty() {
        return invalid("the grid needs at least one variant");
    }
    for n in &names {
        VariantConfig::parse(n)?;
    }
    Ok(names)
}

/// Splits on commas except inside flag lists (`attention=...,atrous=on`).
fn split_grid(s: &str) -> Vec<String> {
    if s.contains('=') {
        vec![s.trim().to_string()]
    } else {
        s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(String::from).collect()
    }
}

fn dir_name(variant: &str) -> String {
    variant.replace(['=', ','], "_")
}

pub fn ablate(a: &AblateArgs) -> Result<AblationOutcome> {
    let out = required(&a.out_dir, "--out-dir")?;
    let names = parse_grid(a.grid.as_deref())?;
    let train_set = load_dataset(&a.train_set)?;
    let test_set = load_dataset(&a.test_set)?;
    if test_set.is_empty() {
        return invalid("the test set is empty");
    }
    std::fs::create_dir_all(out)?;
    let mut variants = Vec::new();
    for name in names {
        let variant = VariantConfig::parse(&name)?;
        let dir = out.join(dir_name(&name));
        let ckpt = dir.join("final.ckpt");
        let start = Instant::now();
        let (model, trained) = if a.reuse && ckpt.exists() {
            let (m, _) = load_checkpoint(&ckpt)?;
            if m.variant() != variant {
                return Err(ModelError::UnsupportedVariant(format!("{} holds {}, expected {variant}", ckpt.display(), m.variant())).into());
            }
            (m, false)
        } else {
            let config = a.train.config(&a.train_set, variant, &dir);
            let init = Model::new(config.model.clone(), variant, config.seed)?;
            (train_from(init, &train_set, &config)?.model, true)
        };
        let train_seconds = start.elapsed().as_secs_f64();
        let evaluation = evaluate(&model, &test_set, &name)?;
        eprintln!(
            "{name}: ade {:.4} fde {:.4} ({train_seconds:.0}s)",
            evaluation.row.ade, evaluation.row.fde
        );
        variants.push(VariantResult {
            name,
            model,
            evaluation,
            train_seconds,
            trained,
        });
    }
    let baseline = evaluate_baseline(&test_set)?;
    let rows: Vec<MetricsRow> = variants.iter().map(|v| v.evaluation.row.clone()).collect();
    let metrics_csv = out.join("metrics.csv");
    write_metrics_csv(&rows, &metrics_csv)?;
    write_metrics_csv(std::slice::from_ref(&baseline.row), &out.join("baseline.csv"))?;
    let mut histograms = Vec::new();
    for v in variants.iter().filter(|v| v.model.variant().has_attention()) {
        let maps = test_set
            .iter()
            .map(|e| Ok(v.model.rollout(&e.raster)?.alpha.expect("variant has attention")))
            .collect::<Result<Vec<_>>>()?;
        histograms.push((v.name.clone(), attention_histogram(&maps)));
    }
    write_histogram_csv(&histograms, &out.join("attention_histogram.csv"))?;
    write_per_example(&variants, &out.join("per_example.csv"))?;
    Ok(AblationOutcome {
        variants,
        baseline,
        rows,
        metrics_csv,
    })
}

fn write_per_example(variants: &[VariantResult], path: &Path) -> Result<()> {
    let mut text = String::from("variant,example,ade,fde,collision,entropy\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for v in variants {
        for (i, m) in v.evaluation.per_example.iter().enumerate() {
            text.push_str(&format!("{},{i},{},{},{},{}\n", v.name, m.ade, m.fde, opt(m.collision), opt(m.entropy)));
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn attention_model(path: &Path) -> Result<Model> {
    let (model, _) = load_checkpoint(path)?;
    if !model.variant().has_attention() {
        return Err(CliError::UnsupportedVariant(format!(
            "{} has no attention map ({})",
            path.display(),
            model.variant()
        )));
    }
    Ok(model)
}

pub fn explain(a: &ExplainArgs) -> Result<Vec<PathBuf>> {
    let out = required(&a.out_dir, "--out-dir")?;
    let model = attention_model(&a.checkpoint)?;
    let data = load_dataset(&a.dataset)?;
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for (i, ex) in data.iter().enumerate().take(a.limit.unwrap_or(usize::MAX)) {
        let n = ex.grid().resolution;
        let alpha = model.rollout(&ex.raster)?.alpha.expect("attention variant");
        let up = upsample_pyramid(&alpha, n)?;
        let heat = out.join(format!("alpha_{i:04}.pgm"));
        write_pgm(&heat, n, n, &alpha_to_gray(&up))?;
        let over = out.join(format!("overlay_{i:04}.ppm"));
        write_ppm(&over, n, n, &overlay(&ex.raster, &up))?;
        written.push(heat);
        written.push(over);
    }
    Ok(written)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CounterfactualReport {
    pub mutation: String,
    pub mass_before: f64,
    pub mass_after: f64,
    pub mass_delta: f64,
    pub trajectory_ade: f64,
}

impl CounterfactualReport {
    pub fn line(&self) -> String {
        format!(
            "mutation={} mass_before={:.6} mass_after={:.6} mass_delta={:.6} trajectory_ade={:.6}",
            self.mutation, self.mass_before, self.mass_after, self.mass_delta, self.trajectory_ade
        )
    }
}

pub fn counterfactual_cmd(a: &CounterfactualArgs) -> Result<CounterfactualReport> {
    let out = required(&a.out_dir, "--out-dir")?;
    let model = attention_model(&a.checkpoint)?;
    let mutation: Mutation = a.mutation.parse()?;
    let kind: ScenarioKind = a.kind.parse()?;
    let scene = generate_scenario(kind, a.seed)?;
    let grid = GridConfig::new(model.config().field_of_view_m, model.config().resolution)?;
    let cf = counterfactual(&model, &scene, &mutation, &grid)?;
    let n = grid.resolution;
    std::fs::create_dir_all(out)?;
    let base_alpha = cf.base_alpha.as_ref().expect("attention variant");
    let mutated_alpha = cf.mutated_alpha.as_ref().expect("attention variant");
    let mutated_scene = mutation.apply(&scene)?;
    write_ppm(&out.join("base_overlay.ppm"), n, n, &overlay(&abn_scenegen::rasterize(&scene, &grid), base_alpha))?;
    write_ppm(
        &out.join("mutated_overlay.ppm"),
        n,
        n,
        &overlay(&abn_scenegen::rasterize(&mutated_scene, &grid), mutated_alpha),
    )?;
    write_pgm(
        &out.join("delta_alpha.pgm"),
        n,
        n,
        &signed_to_gray(cf.delta_alpha.as_ref().expect("attention variant")),
    )?;
    let report = CounterfactualReport {
        mutation: mutation.to_string(),
        mass_before: cf.mass_before.unwrap_or(0.0),
        mass_after: cf.mass_after.unwrap_or(0.0),
        mass_delta: cf.mass_delta().unwrap_or(0.0),
        trajectory_ade: cf.trajectory_delta,
    };
    std::fs::write(out.join("report.txt"), report.line() + "\n")?;
    Ok(report)
}
