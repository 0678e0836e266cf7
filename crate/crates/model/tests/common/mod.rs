#![allow(dead_code)]

use abn_model::{ModelConfig, ModelInput};
use abn_numerics::Tensor;
use abn_scenegen::{build_example, generate_scenario, Example, GridConfig, ScenarioKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn example(kind: ScenarioKind, seed: u64) -> Example {
    build_example(&generate_scenario(kind, seed).unwrap(), &GridConfig::default()).unwrap()
}

/// 16 px grid with 4x4 feature cells and narrow layers.
pub fn micro_config() -> ModelConfig {
    ModelConfig {
        resolution: 16,
        field_of_view_m: 16.0,
        input_channels: (0..6).collect(),
        dense_channels: vec![0, 1],
        object_channels: vec![4, 5],
        stage_widths: vec![3, 4],
        tail_layers: 1,
        feature_dim: 4,
        attention_hidden: 5,
        bottleneck_hidden: 5,
        bottleneck_dim: 3,
        positional_dim: 4,
        pooling: abn_model::Pooling::Mean,
        decoder_hidden: 4,
        heading_hidden: 3,
        horizon: 3,
        norm_eps: 1e-5,
    }
}

pub fn random_input(rng: &mut ChaCha8Rng, c: &ModelConfig) -> ModelInput {
    let n = c.resolution;
    let all = random(rng, &[n, n, c.input_channels.len()], 0.0, 1.0);
    let pick = |idx: &[usize]| {
        let k = c.input_channels.len();
        let mut data = Vec::with_capacity(n * n * idx.len());
        for cell in 0..n * n {
            for &i in idx {
                data.push(all.data()[cell * k + i]);
            }
        }
        Tensor::new(vec![n, n, idx.len()], data).unwrap()
    };
    let side = c.cells_per_side();
    ModelInput {
        dense: pick(&c.dense_channels),
        objects: pick(&c.object_channels),
        initial_box: random(rng, &[side, side], 0.0, 1.0),
        all,
    }
}
