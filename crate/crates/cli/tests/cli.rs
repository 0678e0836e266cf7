use std::path::{Path, PathBuf};
use std::process::Command;

use abn_cli::commands::{ablate, AblateArgs, ModelSize, TrainFlags};
use abn_cli::image::{alpha_to_gray, read_pgm};
use abn_model::{read_checkpoint_header, VariantConfig};
use abn_eval::upsample_pyramid;
use abn_numerics::Tensor;
use abn_scenegen::scene::LightState;
use abn_scenegen::{build_example, generate_scenario, read_dataset, write_dataset, GridConfig, ScenarioKind};

fn abn(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_abn"))
        .args(args)
        .output()
        .expect("binary runs");
    let text = String::from_utf8_lossy(&out.stdout).to_string() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().unwrap_or(-1), text)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tiny_checkpoint(dir: &Path, variant: &str) -> PathBuf {
    let data = dir.join("d.abds");
    if !data.exists() {
        let (code, out) = abn(&["generate", "--count", "6", "--seed", "1", "--out", p(&data)]);
        assert_eq!(code, 0, "{out}");
    }
    let run = dir.join(format!("run-{variant}"));
    let (code, out) = abn(&[
        "train", "--dataset", p(&data), "--variant", variant, "--model", "tiny", "--steps", "3",
        "--batch-size", "2", "--out-dir", p(&run),
    ]);
    assert_eq!(code, 0, "{out}");
    run.join("final.ckpt")
}

#[test]
fn generate_is_bit_identical_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.abds"), dir.path().join("b.abds"));
    for path in [&a, &b] {
        let (code, out) = abn(&["generate", "--count", "12", "--seed", "9", "--out", p(path)]);
        assert_eq!(code, 0, "{out}");
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(dir.path().join("a.manifest.txt").exists());
}

#[test]
fn zero_count_writes_an_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.abds");
    let (code, out) = abn(&["generate", "--count", "0", "--out", p(&path)]);
    assert_eq!(code, 0, "{out}");
    assert!(read_dataset(&path).unwrap().is_empty());
}

#[test]
fn forced_mix_yields_one_kind() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("stops.abds");
    let (code, out) = abn(&["generate", "--count", "100", "--kind-mix", "stop_sign=1.0", "--out", p(&path)]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("stop_sign: 100"), "{out}");
    assert!(read_dataset(&path).unwrap().iter().all(|e| e.kind == ScenarioKind::StopSign));
}

#[test]
fn bad_arguments_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.abds");
    assert_eq!(abn(&["generate", "--kind-mix", "nonsense=1", "--out", p(&out)]).0, 2);
    assert_eq!(abn(&["generate", "--kind-mix", "stop_sign=0", "--out", p(&out)]).0, 2);
    assert_eq!(abn(&["generate", "--count", "-3"]).0, 2);
}

#[test]
fn missing_dataset_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = abn(&["train", "--dataset", "/nonexistent/data.abds", "--out-dir", p(dir.path())]);
    assert_eq!(code, 3, "{out}");
}

#[test]
fn non_finite_input_is_a_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let grid = GridConfig::default();
    let mut ex = build_example(&generate_scenario(ScenarioKind::Straight, 0).unwrap(), &grid).unwrap();
    ex.raster.channels[0][100] = f32::NAN;
    let data = dir.path().join("nan.abds");
    write_dataset(&[ex], &data).unwrap();
    let (code, out) = abn(&[
        "train", "--dataset", p(&data), "--model", "tiny", "--steps", "2", "--batch-size", "1", "--out-dir",
        p(&dir.path().join("run")),
    ]);
    assert_eq!(code, 4, "{out}");
    assert!(out.contains("step 0"), "{out}");
}

#[test]
fn explain_rejects_the_attention_free_variant() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_checkpoint(dir.path(), "A");
    let (code, out) = abn(&[
        "explain", "--checkpoint", p(&ckpt), "--dataset", p(&dir.path().join("d.abds")), "--out-dir",
        p(&dir.path().join("e")),
    ]);
    assert_eq!(code, 5, "{out}");
}

#[test]
fn explain_writes_raster_sized_images() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_checkpoint(dir.path(), "B");
    let out_dir = dir.path().join("e");
    let (code, out) = abn(&[
        "explain", "--checkpoint", p(&ckpt), "--dataset", p(&dir.path().join("d.abds")), "--limit", "2",
        "--out-dir", p(&out_dir),
    ]);
    assert_eq!(code, 0, "{out}");
    let (w, h, px) = read_pgm(&out_dir.join("alpha_0001.pgm")).unwrap();
    assert_eq!((w, h), (64, 64));
    assert_eq!(px.iter().max(), Some(&255));
    assert!(out_dir.join("overlay_0001.ppm").exists());
    assert!(!out_dir.join("alpha_0002.pgm").exists());
}

#[test]
fn one_hot_attention_peaks_inside_its_pixel_block() {
    for (r, c) in [(0, 0), (5, 11), (15, 3)] {
        let mut alpha = Tensor::zeros(&[16, 16]);
        alpha.data_mut()[r * 16 + c] = 1.0;
        let gray = alpha_to_gray(&upsample_pyramid(&alpha, 64).unwrap());
        let peak = gray.iter().position(|&g| g == 255).unwrap();
        assert_eq!((peak / 64 / 4, peak % 64 / 4), (r, c));
    }
}

#[test]
fn identity_counterfactual_reports_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_checkpoint(dir.path(), "bottleneck");
    let out_dir = dir.path().join("cf");
    let (code, out) = abn(&[
        "counterfactual", "--checkpoint", p(&ckpt), "--kind", "stop_sign", "--seed", "4", "--mutation", "identity",
        "--out-dir", p(&out_dir),
    ]);
    assert_eq!(code, 0, "{out}");
    let report = std::fs::read_to_string(out_dir.join("report.txt")).unwrap();
    assert!(report.contains("mass_delta=0.000000"), "{report}");
    assert!(report.contains("trajectory_ade=0.000000"), "{report}");
    let (_, _, px) = read_pgm(&out_dir.join("delta_alpha.pgm")).unwrap();
    assert!(px.iter().all(|&g| g == 128));
}

#[test]
fn inapplicable_mutation_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_checkpoint(dir.path(), "bottleneck");
    let (code, out) = abn(&[
        "counterfactual", "--checkpoint", p(&ckpt), "--kind", "straight", "--mutation", "remove_objects",
        "--out-dir", p(&dir.path().join("cf")),
    ]);
    assert_eq!(code, 2, "{out}");
    let (code, _) = abn(&[
        "counterfactual", "--checkpoint", p(&ckpt), "--kind", "straight", "--mutation", "teleport",
        "--out-dir", p(&dir.path().join("cf")),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn replay_reproduces_a_training_run() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_checkpoint(dir.path(), "bottleneck-pe");
    let manifest = ckpt.parent().unwrap().join("manifest.txt");
    let text = std::fs::read_to_string(&manifest).unwrap();
    assert!(text.contains("command: train") && text.contains("seed: 0"), "{text}");
    let again = dir.path().join("again");
    let (code, out) = abn(&["replay", p(&manifest), "--out", p(&again)]);
    assert_eq!(code, 0, "{out}");
    assert_eq!(std::fs::read(&ckpt).unwrap(), std::fs::read(again.join("final.ckpt")).unwrap());
}

#[test]
fn output_root_defaults_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_abn"))
        .args(["generate", "--count", "2", "--seed", "5"])
        .env("ABN_OUTPUT_ROOT", dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    assert!(dir.path().join("dataset-5.abds").exists());
    assert!(dir.path().join("dataset-5.manifest.txt").exists());
}

#[test]
fn variant_flags_select_the_documented_wiring() {
    let dir = tempfile::tempdir().unwrap();
    for (flags, named) in [("attention=none", "A"), ("attention=bottleneck,atrous=on,pe=on", "bottleneck")] {
        let ckpt = tiny_checkpoint(dir.path(), flags);
        let header = read_checkpoint_header(&ckpt).unwrap();
        assert_eq!(header.variant, VariantConfig::named(named).unwrap());
    }
}

fn tiny_ablation(dir: &Path, grid: &str) -> Vec<abn_eval::MetricsRow> {
    let data = dir.join("d.abds");
    let (code, out) = abn(&["generate", "--count", "5", "--seed", "2", "--out", p(&data)]);
    assert_eq!(code, 0, "{out}");
    let outcome = ablate(&AblateArgs {
        grid: Some(grid.into()),
        train_set: data.clone(),
        test_set: data,
        train: TrainFlags {
            model: ModelSize::Tiny,
            steps: 2,
            batch_size: 2,
            lr: 1e-3,
            decay: 1.0,
            seed: 0,
            checkpoint_every: 0,
        },
        reuse: false,
        out_dir: Some(dir.join("ablate")),
    })
    .unwrap();
    let csv = std::fs::read_to_string(&outcome.metrics_csv).unwrap();
    assert_eq!(csv.lines().count(), 1 + outcome.rows.len());
    outcome.rows
}

#[test]
fn ablating_model_a_alone_leaves_entropy_empty() {
    let dir = tempfile::tempdir().unwrap();
    let rows = tiny_ablation(dir.path(), "A");
    assert_eq!(rows.len(), 1);
    assert!(rows[0].entropy.is_none());
    let csv = std::fs::read_to_string(dir.path().join("ablate/metrics.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with(",,5"), "{csv}");
}

#[test]
fn attention_variants_report_entropy() {
    let dir = tempfile::tempdir().unwrap();
    let rows = tiny_ablation(dir.path(), "B,bottleneck");
    let names: Vec<&str> = rows.iter().map(|r| r.variant.as_str()).collect();
    assert_eq!(names, ["B", "bottleneck"]);
    assert!(rows.iter().all(|r| r.entropy.is_some_and(|e| e > 0.0)));
}

#[test]
fn red_to_red_light_mutation_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_checkpoint(dir.path(), "bottleneck");
    let seed = (0..200u64)
        .find(|&s| {
            let scene = generate_scenario(ScenarioKind::TrafficLight, s).unwrap();
            scene.traffic_lights.iter().all(|l| l.states.iter().all(|&st| st == LightState::Red))
        })
        .expect("a steady red light among the first 200 seeds");
    let out_dir = dir.path().join("cf");
    let (code, out) = abn(&[
        "counterfactual", "--checkpoint", p(&ckpt), "--kind", "traffic_light", "--seed", &seed.to_string(),
        "--mutation", "set_light_state=red", "--out-dir", p(&out_dir),
    ]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("mass_delta=0.000000") && out.contains("trajectory_ade=0.000000"), "{out}");
}
