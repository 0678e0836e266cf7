use abn_model::{load_checkpoint, ModelConfig, VariantConfig, VARIANT_NAMES};
use abn_scenegen::{build_example, generate_scenario, write_dataset, Example, GridConfig, ScenarioKind};
use abn_training::*;

fn examples(kinds: &[ScenarioKind], n: usize, offset: u64) -> Vec<Example> {
    (0..n)
        .map(|i| {
            let scene = generate_scenario(kinds[i % kinds.len()], offset + i as u64).unwrap();
            build_example(&scene, &GridConfig::default()).unwrap()
        })
        .collect()
}

fn config(variant: &str, steps: usize) -> TrainConfig {
    let mut c = TrainConfig::new("", VariantConfig::named(variant).unwrap());
    c.model = ModelConfig::tiny();
    c.steps = steps;
    c.batch_size = 4;
    c.seed = 11;
    c
}

#[test]
fn zero_steps_returns_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let data = examples(&ScenarioKind::ALL, 3, 0);
    let mut c = config("bottleneck", 0);
    c.out_dir = Some(dir.path().to_path_buf());
    let out = train_on(&data, &c).unwrap();
    let init = abn_model::Model::new(c.model.clone(), c.variant, c.seed).unwrap();
    assert!(out.model.params().iter().eq(init.params().iter()));
    assert!(out.log.is_empty());
    let (loaded, header) = load_checkpoint(&out.checkpoints[0]).unwrap();
    assert!(loaded.params().iter().eq(init.params().iter()));
    assert_eq!(header.lineage.steps, 0);
    let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert_eq!(csv.trim(), "step,lr,position,heading,box_heatmap,occupancy,total");
}

#[test]
fn same_config_twice_gives_identical_checkpoints() {
    let data = examples(&ScenarioKind::ALL, 10, 0);
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&data, &dir.path().join("d.abds")).unwrap();
    let run = |name: &str| {
        let mut c = config("bottleneck+objects", 6);
        c.dataset = dir.path().join("d.abds");
        c.checkpoint_every = 4;
        c.out_dir = Some(dir.path().join(name));
        train(&c).unwrap()
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a.checkpoints.len(), 2);
    assert!(a.checkpoints[0].ends_with("step_000004.ckpt"));
    for (x, y) in a.checkpoints.iter().zip(&b.checkpoints) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    assert_eq!(a.log, b.log);
    let csv = std::fs::read_to_string(dir.path().join("a/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(a.log.iter().all(|r| r.occupancy > 0.0));
    let (_, header) = load_checkpoint(&a.checkpoints[1]).unwrap();
    assert_eq!((header.lineage.init_seed, header.lineage.steps), (11, 6));
}

#[test]
fn nan_input_reports_the_divergent_step() {
    let mut data = examples(&[ScenarioKind::Straight], 4, 0);
    data[2].raster.channels[0][100] = f32::NAN;
    let mut c = config("A", 8);
    c.batch_size = 1;
    let order = Shuffler::new(4, c.seed).batch(4);
    let expected = order.iter().position(|&i| i == 2).unwrap();
    match train_on(&data, &c) {
        Err(TrainError::Divergence { step, .. }) => assert_eq!(step, expected),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("training on NaN input succeeded"),
    }
}

#[test]
fn shuffler_visits_every_example_once_per_epoch() {
    let mut s = Shuffler::new(7, 3);
    for _ in 0..3 {
        let mut epoch = s.batch(7);
        epoch.sort();
        assert_eq!(epoch, (0..7).collect::<Vec<_>>());
    }
    assert_eq!(Shuffler::new(7, 3).batch(20), Shuffler::new(7, 3).batch(20));
    assert_ne!(Shuffler::new(7, 3).batch(7), Shuffler::new(7, 4).batch(7));
}

#[test]
fn invalid_configs_are_rejected() {
    let data = examples(&[ScenarioKind::Straight], 2, 0);
    let mut c = config("A", 1);
    c.batch_size = 0;
    assert!(matches!(train_on(&data, &c), Err(TrainError::InvalidArgument(_))));
    assert!(matches!(train_on(&[], &config("A", 1)), Err(TrainError::InvalidArgument(_))));
    let mut c = config("A", 1);
    c.dataset = "/nonexistent/data.abds".into();
    assert!(train(&c).is_err());
}

#[test]
fn every_parameter_gets_gradient_over_an_epoch() {
    let data = examples(&ScenarioKind::ALL, 14, 40);
    for name in VARIANT_NAMES {
        let c = config(name, 0);
        let model = abn_model::Model::new(c.model.clone(), c.variant, 2).unwrap();
        let targets: Vec<_> = data.iter().map(|e| Targets::from_example(e, model.config()).unwrap()).collect();
        let batch: Vec<_> = data.iter().zip(&targets).collect();
        let (report, grads) = batch_gradients(&model, &batch, &LossWeights::default()).unwrap();
        assert!(report.is_finite());
        for ((pname, _), g) in model.params().iter().zip(grads) {
            let g = g.unwrap_or_else(|| panic!("{name}: no gradient for {pname}"));
            assert!(g.data().iter().any(|&v| v != 0.0), "{name}: zero gradient for {pname}");
        }
    }
}

#[test]
fn loss_falls_on_straight_and_stop_scenes() {
    let data = examples(&[ScenarioKind::Straight, ScenarioKind::StopSign], 2000, 0);
    let mut c = config("bottleneck", 500);
    c.batch_size = 2;
    let out = train_on(&data, &c).unwrap();
    let first = out.log[0].total;
    let tail: f64 = out.log[450..].iter().map(|r| r.total).sum::<f64>() / 50.0;
    assert!(out.log[499].total < first, "{} vs {first}", out.log[499].total);
    assert!(tail < 0.5 * first, "{tail} vs {first}");
}
