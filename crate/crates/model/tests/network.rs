mod common;

use abn_model::*;
use abn_numerics::{Graph, Tensor};
use abn_scenegen::{rasterize, GridConfig, ScenarioKind, VectorScene};
use common::*;
use proptest::prelude::*;

fn tiny(name: &str, seed: u64) -> Model {
    Model::new(ModelConfig::tiny(), VariantConfig::named(name).unwrap(), seed).unwrap()
}

#[test]
fn every_named_variant_rolls_out_a_full_horizon() {
    let ex = example(ScenarioKind::StopSign, 3);
    for name in VARIANT_NAMES {
        let r = tiny(name, 1).rollout(&ex.raster).unwrap();
        assert_eq!(r.waypoints.len(), 10, "{name}");
        assert!(r.waypoints.iter().flatten().all(|v| v.is_finite()));
        assert_eq!(r.box_heatmaps[0].shape(), [16, 16]);
    }
}

#[test]
fn encoder_calls_and_optional_outputs_follow_the_variant() {
    let ex = example(ScenarioKind::Straight, 1);
    let expect = [
        ("A", 1, false, false),
        ("B", 1, true, false),
        ("bottleneck", 2, true, true),
        ("bottleneck+objects", 3, true, true),
    ];
    for (name, calls, alpha, z) in expect {
        let r = tiny(name, 2).rollout(&ex.raster).unwrap();
        assert_eq!(r.encoder_calls, calls, "{name}");
        assert_eq!(r.alpha.is_some(), alpha, "{name}");
        assert_eq!(r.z.is_some(), z, "{name}");
        assert_eq!(r.occupancy.is_some(), name.ends_with("objects"));
    }
}

#[test]
fn alpha_is_a_distribution_over_feature_cells() {
    let ex = example(ScenarioKind::PinchPoint, 4);
    for name in &VARIANT_NAMES[1..] {
        let a = tiny(name, 5).rollout(&ex.raster).unwrap().alpha.unwrap();
        assert_eq!(a.shape(), [16, 16]);
        assert!((a.sum() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn rollouts_are_bit_identical_across_runs_and_clones() {
    let ex = example(ScenarioKind::CrosswalkPedestrian, 7);
    let m = tiny("bottleneck", 9);
    let a = m.rollout(&ex.raster).unwrap();
    let b = m.rollout(&ex.raster).unwrap();
    let c = m.clone().rollout(&ex.raster).unwrap();
    let d = tiny("bottleneck", 9).rollout(&ex.raster).unwrap();
    for other in [&b, &c, &d] {
        assert_eq!(a.waypoints, other.waypoints);
        assert_eq!(a.alpha, other.alpha);
    }
    assert_ne!(a.waypoints, tiny("bottleneck", 10).rollout(&ex.raster).unwrap().waypoints);
}

#[test]
fn object_branch_doubles_attention_depth() {
    let in_depth = |name: &str| {
        let m = tiny(name, 1);
        let id = m.params().id("attn.rate1.conv").unwrap();
        m.params().get(id).shape()[2]
    };
    assert_eq!(in_depth("bottleneck+objects"), 16);
    assert_eq!(in_depth("bottleneck"), 8);
}

#[test]
fn object_branch_sees_objects_and_nothing_else_on_empty_scenes() {
    let m = tiny("bottleneck+objects", 3);
    let with = example(ScenarioKind::LeadVehicleBrake, 2);
    let mut scene: VectorScene = abn_scenegen::generate_scenario(ScenarioKind::LeadVehicleBrake, 2).unwrap();
    scene.objects.clear();
    let without = rasterize(&scene, &GridConfig::default());
    let z_with = m.rollout(&with.raster).unwrap().z.unwrap();
    let z_without = m.rollout(&without).unwrap().z.unwrap();
    assert!(z_with.data().iter().zip(z_without.data()).any(|(a, b)| (a - b).abs() > 1e-9));

    // without objects the branch reads an all-zero raster on both scenes
    let empty = example(ScenarioKind::Straight, 5);
    let mut z = Vec::new();
    for _ in 0..2 {
        z.push(m.rollout(&empty.raster).unwrap().z.unwrap());
    }
    assert_eq!(z[0], z[1]);
    let input = m.input(&empty.raster).unwrap();
    assert!(input.objects.data().iter().all(|&v| v == 0.0));
}

#[test]
fn decoder_only_reads_the_tiled_z_through_the_context() {
    let ex = example(ScenarioKind::TrafficLight, 11);
    let m = tiny("bottleneck", 4);
    let a = m.rollout_with(&ex.raster, ForwardOptions { zero_z: true }).unwrap();
    let b = m.rollout(&ex.raster).unwrap();
    assert_ne!(a.waypoints, b.waypoints);
    assert_eq!(a.z, b.z, "zero_z only replaces what the decoder sees");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// With z zeroed, nothing outside the dense subset reaches the decoder.
    #[test]
    fn zeroed_z_isolates_non_dense_channels(seed in any::<u64>(), noise_seed in any::<u64>()) {
        let c = ModelConfig::tiny();
        let m = Model::new(c.clone(), VariantConfig::full(), seed % 1000).unwrap();
        let ex = example(ScenarioKind::ALL[(seed % 7) as usize], seed % 50);
        let base = m.input(&ex.raster).unwrap();
        let mut noisy = base.clone();
        let k = c.input_channels.len();
        let mut r = rng(noise_seed);
        let noise = random(&mut r, &[64, 64, k], 0.0, 1.0);
        for (cell, chunk) in noisy.all.data_mut().chunks_mut(k).enumerate() {
            for ch in 0..k {
                if !c.dense_channels.contains(&ch) {
                    chunk[ch] = noise.data()[cell * k + ch];
                }
            }
        }
        noisy.objects = random(&mut r, &[64, 64, c.object_channels.len()], 0.0, 1.0);
        let opts = ForwardOptions { zero_z: true };
        let a = m.rollout_input(&base, opts).unwrap();
        let b = m.rollout_input(&noisy, opts).unwrap();
        prop_assert_eq!(a.waypoints, b.waypoints);
        prop_assert_eq!(a.box_heatmaps, b.box_heatmaps);
    }
}

#[test]
fn every_parameter_receives_gradient() {
    let ex = example(ScenarioKind::LeadVehicleBrake, 6);
    for name in VARIANT_NAMES {
        let m = tiny(name, 8);
        let input = m.input(&ex.raster).unwrap();
        let mut g = Graph::new();
        let p = m.params().bind(&mut g).unwrap();
        let out = m.forward(&mut g, &p, &input, ForwardOptions::default()).unwrap();
        let mut terms = Vec::new();
        for s in &out.steps {
            terms.push(g.sum_all(s.position).unwrap());
            terms.push(g.sum_all(s.heading).unwrap());
            terms.push(g.sum_all(s.box_logits).unwrap());
        }
        if let Some(o) = &out.object {
            terms.push(g.sum_all(o.occupancy_logits).unwrap());
        }
        let mut loss = terms[0];
        for t in &terms[1..] {
            loss = g.add(loss, *t).unwrap();
        }
        let grads = p.collect(&g.backward(loss).unwrap());
        for ((pname, _), gr) in m.params().iter().zip(grads) {
            let gr = gr.unwrap_or_else(|| panic!("{name}: {pname} has no gradient"));
            assert!(gr.data().iter().any(|&v| v != 0.0), "{name}: {pname} gradient is zero");
        }
    }
}

#[test]
fn mismatched_input_is_rejected() {
    let m = tiny("A", 1);
    let grid = GridConfig { resolution: 32, ..GridConfig::default() };
    let raster = abn_scenegen::RasterStack::zeros(grid);
    assert!(matches!(m.rollout(&raster), Err(ModelError::InvalidArgument(_))));
    let mut bad = ModelConfig::tiny();
    bad.feature_dim = 7;
    assert!(Model::new(bad, VariantConfig::full(), 0).is_err());
}

#[test]
fn unsupported_variant_is_rejected() {
    let v = VariantConfig { attention: AttentionMode::Vanilla, atrous: false, positional_encoding: true, object_branch: false };
    assert!(matches!(Model::new(ModelConfig::tiny(), v, 0), Err(ModelError::UnsupportedVariant(_))));
}

#[test]
fn initial_box_is_the_pooled_agent_box() {
    let ex = example(ScenarioKind::Straight, 2);
    let input = tiny("A", 0).input(&ex.raster).unwrap();
    // 1.8 m x 4 m box on 1 m cells: mass equals area in square meters
    let area: f64 = input.initial_box.sum();
    let px: f64 = ex.raster.channel("current_agent_box").unwrap().iter().map(|&v| v as f64).sum();
    assert!((area - px / 16.0).abs() < 1e-9);
    let _ = Tensor::zeros(&[1]);
}
