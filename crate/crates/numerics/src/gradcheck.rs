//! Central finite-difference gradient checking.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    /// `(input, element, analytic, numeric)` of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
    /// Probes skipped because a kink lay within `h` (see
    /// [`check_piecewise_gradients`]).
    pub kinks: usize,
}

/// Relative error with a small floor so that vanishing gradients compare
/// on an absolute scale.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Compares `backward` against central differences of `f` with step `h`.
///
/// `f` builds a scalar loss from leaves holding `inputs`. When `max_per_input`
/// is set, only that many evenly spaced elements of each input are probed.
pub fn check_gradients<F>(
    f: F,
    inputs: &[Tensor],
    h: f64,
    max_per_input: Option<usize>,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    check_piecewise_gradients(f, inputs, h, max_per_input, None)
}

/// [`check_gradients`] for piecewise-smooth losses (ReLU, max, bilinear
/// splatting). A probe whose one-sided slopes `(f(x+h) - f(x)) / h` and
/// `(f(x) - f(x-h)) / h` differ by more than `kink_tol` relative to their
/// magnitude straddles a kink, where the central difference is no reference;
/// such probes are counted in `kinks` instead of compared.
pub fn check_piecewise_gradients<F>(
    f: F,
    inputs: &[Tensor],
    h: f64,
    max_per_input: Option<usize>,
    kink_tol: Option<f64>,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars = inputs
        .iter()
        .map(|t| g.leaf(t.clone(), true))
        .collect::<Result<Vec<_>>>()?;
    let loss = f(&mut g, &vars)?;
    let grads = g.backward(loss)?;
    let center = g.value(loss).item()?;

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars = perturbed
            .iter()
            .map(|t| g.leaf(t.clone(), false))
            .collect::<Result<Vec<_>>>()?;
        let loss = f(&mut g, &vars)?;
        g.value(loss).item()
    };

    let mut report = GradCheckReport {
        checked: 0,
        max_relative_error: 0.0,
        worst: None,
        kinks: 0,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let n = input.len();
        let stride = match max_per_input {
            Some(m) if m > 0 && n > m => n / m,
            _ => 1,
        };
        let analytic = grads.get(vars[i]);
        for j in (0..n).step_by(stride) {
            let orig = input.data()[j];
            work[i].data_mut()[j] = orig + h;
            let up = eval(&work)?;
            work[i].data_mut()[j] = orig - h;
            let down = eval(&work)?;
            work[i].data_mut()[j] = orig;
            if let Some(tol) = kink_tol {
                let (right, left) = ((up - center) / h, (center - down) / h);
                if (right - left).abs() > tol * right.abs().max(left.abs()).max(1.0) {
                    report.kinks += 1;
                    continue;
                }
            }
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.map_or(0.0, |t| t.data()[j]);
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(err);
                report.worst = Some((i, j, a, numeric));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    const H: f64 = 1e-5;

    fn relu_sum(g: &mut Graph, v: &[Var]) -> Result<Var> {
        let r = g.relu(v[0])?;
        g.sum_all(r)
    }

    #[test]
    fn probe_straddling_a_kink_is_skipped_not_compared() {
        let x = [Tensor::from_vec(vec![0.3 * H, 1.0])];
        let plain = check_gradients(relu_sum, &x, H, None).unwrap();
        assert!(plain.max_relative_error > 0.1);
        let piecewise = check_piecewise_gradients(relu_sum, &x, H, None, Some(1e-3)).unwrap();
        assert_eq!((piecewise.kinks, piecewise.checked), (1, 1));
        assert!(piecewise.max_relative_error < 1e-8);
    }

    #[test]
    fn missing_gradient_still_fails_with_kink_detection() {
        let x = [Tensor::from_vec(vec![0.7, -1.2])];
        let report = check_piecewise_gradients(
            |g, v| {
                let d = g.detach(v[0])?;
                let s = g.square(d)?;
                g.sum_all(s)
            },
            &x,
            H,
            None,
            Some(1e-3),
        )
        .unwrap();
        assert_eq!(report.kinks, 0);
        assert!(report.max_relative_error > 0.5);
    }
}
