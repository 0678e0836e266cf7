mod common;

use abn_model::*;
use abn_numerics::gradcheck::check_gradients;
use abn_numerics::{Bound, Graph, Tensor, Var};
use common::*;

/// Finite-difference check of the composed forward pass for each variant
/// on a 16 px input, through parameters only.
#[test]
fn composed_model_gradients_match_finite_differences() {
    let config = micro_config();
    let mut r = rng(31);
    let input = random_input(&mut r, &config);
    for name in VARIANT_NAMES {
        let model = Model::new(config.clone(), VariantConfig::named(name).unwrap(), 17).unwrap();
        // zero-initialized biases would leave pre-activations exactly on the ReLU kink
        let params: Vec<Tensor> = model
            .params()
            .iter()
            .map(|(_, t)| {
                let noise = random(&mut r, t.shape(), -0.3, 0.3);
                Tensor::new(t.shape().to_vec(), t.data().iter().zip(noise.data()).map(|(a, b)| a + b).collect()).unwrap()
            })
            .collect();
        let weights: Vec<Tensor> = (0..config.horizon)
            .map(|_| random(&mut r, &[4, 4], -1.0, 1.0))
            .collect();
        let loss = |g: &mut Graph, vars: &[Var]| {
            let p = Bound::new(vars.to_vec());
            let out = model.forward(g, &p, &input, ForwardOptions::default()).map_err(|e| match e {
                ModelError::Numerics(n) => n,
                other => panic!("{other}"),
            })?;
            let mut total = g.constant(Tensor::scalar(0.0))?;
            for (k, s) in out.steps.iter().enumerate() {
                let pos = g.square(s.position)?;
                let w = g.constant(weights[k].clone())?;
                let b = g.mul(s.box_heatmap, w)?;
                for t in [pos, s.heading, b] {
                    let t = g.sum_all(t)?;
                    total = g.add(total, t)?;
                }
            }
            if let Some(o) = &out.object {
                let t = g.sum_all(o.occupancy_logits)?;
                total = g.add(total, t)?;
            }
            Ok(total)
        };
        let report = check_gradients(loss, &params, 1e-5, Some(6)).unwrap();
        assert!(report.checked > 60, "{name}");
        assert!(report.max_relative_error < 1e-4, "{name}: {report:?}");
    }
}
