//! Times forward and backward passes of each named variant on one scene.

use std::time::Instant;

use abn_model::{ForwardOptions, Model, ModelConfig, VariantConfig, VARIANT_NAMES};
use abn_numerics::Graph;
use abn_scenegen::{build_example, generate_scenario, GridConfig, ScenarioKind};

fn main() {
    let scene = generate_scenario(ScenarioKind::LeadVehicleBrake, 1).unwrap();
    let ex = build_example(&scene, &GridConfig::default()).unwrap();
    for name in VARIANT_NAMES {
        let model = Model::new(ModelConfig::desk(), VariantConfig::named(name).unwrap(), 7).unwrap();
        let input = model.input(&ex.raster).unwrap();
        let reps = 10;
        let t = Instant::now();
        for _ in 0..reps {
            let mut g = Graph::new();
            let p = model.params().bind(&mut g).unwrap();
            let out = model.forward(&mut g, &p, &input, ForwardOptions::default()).unwrap();
            let mut acc = Vec::new();
            for s in &out.steps {
                acc.push(g.sum_all(s.position).unwrap());
            }
            let loss = g.concat(&acc).unwrap();
            let loss = g.sum_all(loss).unwrap();
            g.backward(loss).unwrap();
        }
        println!(
            "{name:>20}: {:>7} params, {:.1} ms per forward+backward",
            model.params().scalar_count(),
            t.elapsed().as_secs_f64() * 1000.0 / reps as f64
        );
    }
}
