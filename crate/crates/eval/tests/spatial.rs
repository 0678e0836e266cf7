use abn_eval::*;
use abn_numerics::Tensor;
use abn_scenegen::{GridConfig, OrientedBox, Polyline, Vec2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn argmax(t: &Tensor) -> usize {
    t.data().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0
}

#[test]
fn constant_map_stays_constant() {
    let up = upsample_pyramid(&Tensor::full(&[16, 16], 1.0 / 256.0), 64).unwrap();
    assert_eq!(up.shape(), [64, 64]);
    assert!(up.data().iter().all(|&v| (v - 1.0 / 4096.0).abs() < 1e-15));
}

#[test]
fn one_hot_expands_to_a_blob_on_its_footprint() {
    let mut a = Tensor::zeros(&[16, 16]);
    a.data_mut()[5 * 16 + 9] = 1.0;
    let up = upsample_pyramid(&a, 64).unwrap();
    let i = argmax(&up);
    let (r, c) = (i / 64, i % 64);
    assert!((20..24).contains(&r) && (36..40).contains(&c), "argmax at {r},{c}");
    // values fall off monotonically along the row through the peak
    let row: Vec<f64> = (0..64).map(|cc| up.at(&[r, cc])).collect();
    for w in row[c..].windows(2) {
        assert!(w[1] <= w[0]);
    }
    for w in row[..=c].windows(2) {
        assert!(w[1] >= w[0]);
    }
}

#[test]
fn non_integer_factor_is_rejected() {
    assert!(matches!(upsample_pyramid(&Tensor::zeros(&[16, 16]), 60), Err(EvalError::InvalidArgument(_))));
    assert!(upsample_pyramid(&Tensor::zeros(&[16]), 64).is_err());
    assert_eq!(upsample_pyramid(&Tensor::full(&[50, 50], 1.0 / 2500.0), 400).unwrap().shape(), [400, 400]);
    assert_eq!(upsample_pyramid(&Tensor::full(&[4, 4], 1.0 / 16.0), 12).unwrap().shape(), [12, 12]);
}

proptest! {
    #[test]
    fn upsampling_preserves_mass(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..256).map(|_| r.random_range(0.0..1.0f64).powi(4)).collect();
        let z: f64 = raw.iter().sum();
        let a = Tensor::new(vec![16, 16], raw.iter().map(|v| v / z).collect()).unwrap();
        let up = upsample_pyramid(&a, 64).unwrap();
        prop_assert!((up.sum() - 1.0).abs() <= 1e-6);
        prop_assert!(up.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn unimodal_argmax_stays_in_its_footprint(r0 in 0usize..16, c0 in 0usize..16, width in 0.5f64..3.0) {
        let a: Vec<f64> = (0..256)
            .map(|i| {
                let (r, c) = ((i / 16) as f64, (i % 16) as f64);
                (-((r - r0 as f64).powi(2) + (c - c0 as f64).powi(2)) / (2.0 * width * width)).exp()
            })
            .collect();
        let z: f64 = a.iter().sum();
        let a = Tensor::new(vec![16, 16], a.iter().map(|v| v / z).collect()).unwrap();
        let i = argmax(&upsample_pyramid(&a, 64).unwrap());
        prop_assert_eq!((i / 64 / 4, i % 64 / 4), (r0, c0));
    }
}

#[test]
fn region_mass_trivia() {
    let grid = GridConfig::default();
    let alpha = Tensor::full(&[64, 64], 1.0 / 4096.0);
    let everything = Region::Box(OrientedBox::new(Vec2::new(0.0, 4.0), 0.0, 40.0, 40.0));
    assert!((attention_mass_in_region(&alpha, &grid, &[everything], 0.0) - 1.0).abs() < 1e-12);
    let mut corner = Tensor::zeros(&[64, 64]);
    corner.data_mut()[0] = 1.0;
    let ahead = Region::Box(OrientedBox::new(Vec2::new(0.0, 5.0), 0.0, 2.0, 2.0));
    assert_eq!(attention_mass_in_region(&corner, &grid, &[ahead], 3.0), 0.0);
}

proptest! {
    #[test]
    fn region_mass_matches_loop_oracle(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let grid = GridConfig::default();
        let alpha = Tensor::new(vec![64, 64], (0..4096).map(|_| r.random_range(0.0..1.0)).collect()).unwrap();
        let b = OrientedBox::new(
            Vec2::new(r.random_range(-6.0..6.0), r.random_range(-2.0..10.0)),
            r.random_range(-3.0..3.0),
            r.random_range(0.2..6.0),
            r.random_range(0.2..3.0),
        );
        let line = Polyline::new(vec![Vec2::new(-3.0, 2.0), Vec2::new(1.0, 6.0)]);
        let dilation = r.random_range(0.0..3.0);
        let mut want = 0.0;
        for row in 0..64 {
            for col in 0..64 {
                // pixel centers in meters, x right and y ahead of the anchor
                let x = (col as f64 + 0.5 - 32.0) * 0.25;
                let y = (48.0 - row as f64 - 0.5) * 0.25;
                let p = Vec2::new(x, y);
                let local = p.sub(b.center);
                let (ax, ay) = (b.heading.cos(), b.heading.sin());
                let (u, v) = (local.x * ax + local.y * ay, -local.x * ay + local.y * ax);
                let dx = (u.abs() - b.length / 2.0).max(0.0);
                let dy = (v.abs() - b.width / 2.0).max(0.0);
                if dx.hypot(dy) <= dilation || line.distance(p) <= dilation {
                    want += alpha.at(&[row, col]);
                }
            }
        }
        let got = attention_mass_in_region(&alpha, &grid, &[Region::Box(b), Region::Line(line.clone())], dilation);
        prop_assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
    }
}
