//! Every differentiable op against central finite differences.

use abn_numerics::gradcheck::check_gradients;
use abn_numerics::{Graph, Result, SplatAffine, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Reduces `y` to a scalar through a fixed random projection.
fn project(g: &mut Graph, y: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37);
    let w = random(&mut rng, g.shape(y));
    let w = g.constant(w)?;
    let p = g.mul(y, w)?;
    g.sum_all(p)
}

type Case = (&'static str, Vec<Vec<usize>>, fn(&mut Graph, &[Var], u64) -> Result<Var>);

fn cases() -> Vec<Case> {
    vec![
        ("add", vec![vec![3, 4], vec![3, 4]], |g, v, _| g.add(v[0], v[1])),
        ("sub", vec![vec![5], vec![5]], |g, v, _| g.sub(v[0], v[1])),
        ("mul", vec![vec![2, 3], vec![2, 3]], |g, v, _| g.mul(v[0], v[1])),
        ("scale", vec![vec![4]], |g, v, _| g.scale(v[0], -1.7)),
        ("add_scalar", vec![vec![4]], |g, v, _| g.add_scalar(v[0], 0.3)),
        ("relu", vec![vec![6, 2]], |g, v, _| g.relu(v[0])),
        ("sigmoid", vec![vec![6]], |g, v, _| g.sigmoid(v[0])),
        ("cos", vec![vec![6]], |g, v, _| g.cos(v[0])),
        ("maximum", vec![vec![8], vec![8]], |g, v, _| g.maximum(v[0], v[1])),
        ("matmul", vec![vec![3, 4], vec![4, 2]], |g, v, _| g.matmul(v[0], v[1])),
        ("add_bias", vec![vec![2, 3, 4], vec![4]], |g, v, _| g.add_bias(v[0], v[1])),
        ("conv2d_d1", vec![vec![5, 5, 2], vec![3, 3, 2, 3]], |g, v, _| g.conv2d(v[0], v[1], 1, 1)),
        ("conv2d_d2", vec![vec![6, 5, 2], vec![3, 3, 2, 2]], |g, v, _| g.conv2d(v[0], v[1], 2, 1)),
        ("conv2d_d4", vec![vec![9, 9, 1], vec![3, 3, 1, 2]], |g, v, _| g.conv2d(v[0], v[1], 4, 1)),
        ("conv2d_s2", vec![vec![6, 6, 2], vec![3, 3, 2, 2]], |g, v, _| g.conv2d(v[0], v[1], 1, 2)),
        ("conv2d_1x1", vec![vec![4, 3, 3], vec![1, 1, 3, 2]], |g, v, _| g.conv2d(v[0], v[1], 1, 1)),
        ("softmax", vec![vec![4, 4]], |g, v, _| g.softmax(v[0])),
        ("scale_cells", vec![vec![3, 3], vec![3, 3, 4]], |g, v, _| g.scale_cells(v[0], v[1])),
        ("concat", vec![vec![2, 2, 3], vec![2, 2, 1]], |g, v, _| g.concat(&[v[0], v[1]])),
        ("broadcast_cells", vec![vec![3]], |g, v, _| g.broadcast_cells(v[0], 2, 3)),
        ("mean_cells", vec![vec![3, 2, 4]], |g, v, _| g.mean_cells(v[0])),
        ("sum_cells", vec![vec![3, 2, 4]], |g, v, _| g.sum_cells(v[0])),
        ("channel_norm", vec![vec![3, 3, 2], vec![2], vec![2]], |g, v, _| {
            g.channel_norm(v[0], v[1], v[2], 1e-5)
        }),
        ("avg_pool2", vec![vec![4, 6, 2]], |g, v, _| g.avg_pool2(v[0])),
        ("reshape", vec![vec![2, 6]], |g, v, _| g.reshape(v[0], &[3, 4])),
        ("bce_with_logits", vec![vec![3, 3]], |g, v, seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = Tensor::new(vec![3, 3], (0..9).map(|_| rng.random_range(0.0..1.0)).collect())?;
            g.bce_with_logits(v[0], &t)
        }),
        ("bilinear_splat", vec![vec![2]], |g, v, _| {
            // keep the point strictly inside one cell quad by shifting it
            let p = g.add_scalar(v[0], 2.3)?;
            g.bilinear_splat(
                p,
                SplatAffine { height: 5, width: 6, col_scale: 1.1, col_offset: 0.4, row_scale: -0.9, row_offset: 4.2 },
            )
        }),
    ]
}

#[test]
fn every_op_passes_finite_difference_checks() {
    let mut configs = 0;
    let mut worst = 0.0f64;
    for (name, shapes, op) in cases() {
        for trial in 0..5u64 {
            let seed = trial * 131 + name.len() as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inputs: Vec<Tensor> = shapes.iter().map(|s| random(&mut rng, s)).collect();
            let report = check_gradients(
                |g, v| {
                    let y = op(g, v, seed)?;
                    project(g, y, seed)
                },
                &inputs,
                H,
                None,
            )
            .unwrap();
            assert!(
                report.max_relative_error <= TOL,
                "{name} trial {trial}: {:?}",
                report
            );
            worst = worst.max(report.max_relative_error);
            configs += 1;
        }
    }
    assert!(configs >= 100, "only {configs} configurations");
    eprintln!("{configs} configurations, worst relative error {worst:.2e}");
}

#[test]
fn composed_attention_block_gradients() {
    // conv -> norm -> relu -> 1x1 logits -> softmax -> weighting -> mean pool
    for trial in 0..4u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + trial);
        let inputs = vec![
            random(&mut rng, &[6, 6, 3]),
            random(&mut rng, &[3, 3, 3, 4]),
            random(&mut rng, &[4]),
            random(&mut rng, &[4]),
            random(&mut rng, &[1, 1, 4, 1]),
        ];
        let report = check_gradients(
            |g, v| {
                let h = g.conv2d(v[0], v[1], 2, 1)?;
                let h = g.channel_norm(h, v[2], v[3], 1e-5)?;
                let h = g.relu(h)?;
                let l = g.conv2d(h, v[4], 1, 1)?;
                let l = g.reshape(l, &[6, 6])?;
                let a = g.softmax(l)?;
                let att = g.scale_cells(a, h)?;
                let z = g.mean_cells(att)?;
                project(g, z, trial)
            },
            &inputs,
            H,
            None,
        )
        .unwrap();
        assert!(report.max_relative_error <= TOL, "{report:?}");
    }
}
