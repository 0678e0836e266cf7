use abn_eval::*;
use abn_numerics::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn points(r: &mut ChaCha8Rng, k: usize) -> Vec<[f64; 2]> {
    (0..k).map(|_| [r.random_range(-10.0..10.0), r.random_range(-10.0..10.0)]).collect()
}

fn grid(r: &mut ChaCha8Rng, n: usize) -> Tensor {
    Tensor::new(vec![n, n], (0..n * n).map(|_| r.random_range(0.0..1.0)).collect()).unwrap()
}

#[test]
fn displacement_trivia() {
    let gt: Vec<[f64; 2]> = (0..10).map(|k| [0.0, k as f64]).collect();
    assert_eq!(ade(&gt, &gt).unwrap(), 0.0);
    assert_eq!(fde(&gt, &gt).unwrap(), 0.0);
    let shifted: Vec<[f64; 2]> = gt.iter().map(|p| [p[0] + 1.0, p[1]]).collect();
    assert!((ade(&shifted, &gt).unwrap() - 1.0).abs() < 1e-15);
    let mut last = gt.clone();
    last[9] = [3.0, 13.0];
    assert_eq!(fde(&last, &gt).unwrap(), 5.0);
    assert!(matches!(ade(&gt[..9], &gt), Err(EvalError::InvalidArgument(_))));
    assert!(fde(&[], &[]).is_err());
}

#[test]
fn collision_trivia() {
    let mut a = Tensor::zeros(&[4, 4]);
    let mut b = Tensor::zeros(&[4, 4]);
    a.data_mut()[0] = 1.0;
    b.data_mut()[5] = 1.0;
    assert_eq!(collision_rate(&[a.clone(), a.clone()], &[b.clone(), b]).unwrap(), 0.0);
    assert_eq!(collision_rate(&[a.clone(), a.clone()], &[a.clone(), a.clone()]).unwrap(), 1.0);
    assert!(collision_rate(&[a.clone()], &[Tensor::zeros(&[2, 2])]).is_err());
    assert!(collision_rate(&[a.clone()], &[]).is_err());
}

#[test]
fn entropy_trivia() {
    let uniform = Tensor::full(&[16, 16], 1.0 / 256.0);
    assert!((attention_entropy(&uniform).unwrap() - 256f64.ln()).abs() < 1e-9);
    let mut one_hot = Tensor::zeros(&[16, 16]);
    one_hot.data_mut()[17] = 1.0;
    assert_eq!(attention_entropy(&one_hot).unwrap(), 0.0);
    let a = Tensor::new(vec![3], vec![0.5, 0.25, 0.25]).unwrap();
    assert!((attention_entropy(&a).unwrap() - 1.5 * 2f64.ln()).abs() < 1e-15);
    assert!(attention_entropy(&Tensor::full(&[2, 2], 0.3)).is_err());
}

proptest! {
    #[test]
    fn metrics_match_loop_oracles(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let (p, g) = (points(&mut r, 10), points(&mut r, 10));
        let mut sum = 0.0;
        let mut worst: f64 = 0.0;
        for k in 0..10 {
            let d = ((p[k][0] - g[k][0]).powi(2) + (p[k][1] - g[k][1]).powi(2)).sqrt();
            sum += d;
            worst = worst.max(d);
        }
        let a = ade(&p, &g).unwrap();
        let f = fde(&p, &g).unwrap();
        prop_assert!((a - sum / 10.0).abs() <= 1e-12);
        prop_assert!((f - ((p[9][0] - g[9][0]).powi(2) + (p[9][1] - g[9][1]).powi(2)).sqrt()).abs() <= 1e-12);
        prop_assert!(a <= max_step_error(&p, &g).unwrap() + 1e-12 && f <= worst + 1e-12 && f >= 0.0);

        let b: Vec<Tensor> = (0..10).map(|_| grid(&mut r, 5)).collect();
        let o: Vec<Tensor> = (0..10).map(|_| grid(&mut r, 5)).collect();
        let mut c = 0.0;
        for k in 0..10 {
            for i in 0..5 {
                for j in 0..5 {
                    c += b[k].at(&[i, j]) * o[k].at(&[i, j]);
                }
            }
        }
        prop_assert!((collision_rate(&b, &o).unwrap() - c / 10.0).abs() <= 1e-12);
    }

    #[test]
    fn entropy_is_bounded(seed in any::<u64>(), sharp in 0.1f64..30.0) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let logits: Vec<f64> = (0..256).map(|_| sharp * r.random_range(-1.0..1.0)).collect();
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = e.iter().sum();
        let alpha = Tensor::new(vec![16, 16], e.iter().map(|v| v / z).collect()).unwrap();
        let s = attention_entropy(&alpha).unwrap();
        let oracle: f64 = -alpha.data().iter().filter(|&&a| a > 0.0).map(|a| a * a.ln()).sum::<f64>();
        prop_assert!((s - oracle).abs() <= 1e-12);
        prop_assert!(s >= 0.0 && s <= 256f64.ln() + 1e-12);
    }
}

#[test]
fn bootstrap_interval_brackets_the_mean() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let a: Vec<f64> = (0..200).map(|_| r.random_range(0.0..1.0)).collect();
    let b: Vec<f64> = a.iter().map(|x| x + 0.3 + r.random_range(-0.05..0.05)).collect();
    let ci = paired_bootstrap(&a, &b, 2000, 0.95, 1).unwrap();
    assert!(ci.lo <= ci.mean && ci.mean <= ci.hi);
    assert!(ci.excludes_zero() && ci.hi < 0.0);
    assert_eq!(ci, paired_bootstrap(&a, &b, 2000, 0.95, 1).unwrap());
    let same = paired_bootstrap(&a, &a, 500, 0.95, 1).unwrap();
    assert!(!same.excludes_zero());
    assert!(paired_bootstrap(&a, &b[1..], 10, 0.95, 1).is_err());
}

#[test]
fn histogram_counts_every_weight() {
    let mut m = Tensor::zeros(&[4, 4]);
    m.data_mut()[3] = 1.0;
    let h = attention_histogram(&[m, Tensor::full(&[4, 4], 1.0 / 16.0)]);
    assert_eq!(h.iter().sum::<usize>(), 32);
    assert_eq!(h[0], 15);
    assert_eq!(h[4], 16, "uniform weights land in [1, 2)");
    assert_eq!(h[7], 1, "16x uniform lands in [10, 20)");
}

#[test]
fn metrics_csv_has_a_header_and_blank_missing_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let rows = vec![MetricsRow { variant: "A".into(), ade: 1.5, fde: 2.0, collision: Some(0.1), entropy: None, count: 3 }];
    write_metrics_csv(&rows, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, "variant,ade,fde,collision,entropy,count\nA,1.5,2,0.1,,3\n");
}
