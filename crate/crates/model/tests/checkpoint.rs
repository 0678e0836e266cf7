mod common;

use abn_model::*;
use abn_scenegen::ScenarioKind;
use common::example;

fn lineage() -> Lineage {
    Lineage { init_seed: 4, train_seed: Some(5), data_seed: Some(6), steps: 12 }
}

#[test]
fn round_trip_preserves_parameters_and_rollouts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let ex = example(ScenarioKind::StopSign, 1);
    for name in VARIANT_NAMES {
        let m = Model::new(ModelConfig::tiny(), VariantConfig::named(name).unwrap(), 4).unwrap();
        save_checkpoint(&m, &lineage(), &path).unwrap();
        let (back, header) = load_checkpoint(&path).unwrap();
        assert_eq!(header.lineage, lineage());
        assert_eq!(header.dtype, "f64");
        assert_eq!(header.variant, m.variant());
        assert_eq!(read_checkpoint_header(&path).unwrap(), header);
        assert!(m.params().iter().zip(back.params().iter()).all(|(a, b)| a == b));
        assert_eq!(m.rollout(&ex.raster).unwrap().waypoints, back.rollout(&ex.raster).unwrap().waypoints);
    }
}

#[test]
fn corrupted_payload_fails_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let m = Model::new(ModelConfig::tiny(), VariantConfig::full(), 1).unwrap();
    save_checkpoint(&m, &lineage(), &path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    let n = bytes.len();
    bytes[n - 100] ^= 0x40;
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(ModelError::Checksum(_))));
    std::fs::write(&path, &bytes[..n / 2]).unwrap();
    assert!(load_checkpoint(&path).is_err());
    std::fs::write(&path, b"not a checkpoint").unwrap();
    assert!(matches!(load_checkpoint(&path), Err(ModelError::Checkpoint(_))));
}

#[test]
fn store_that_does_not_match_the_variant_is_rejected() {
    let a = Model::new(ModelConfig::tiny(), VariantConfig::named("A").unwrap(), 1).unwrap();
    let r = Model::from_store(ModelConfig::tiny(), VariantConfig::full(), a.into_params());
    assert!(matches!(r, Err(ModelError::Checkpoint(_))));
}
