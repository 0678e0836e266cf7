use crate::error::{invalid, Result};
use crate::graph::{Graph, Var};
use crate::init::Initializer;
use crate::params::{Bound, ParamId, ParamStore};
use crate::tensor::Tensor;

/// Stack of affine layers with ReLU between them and a linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<(ParamId, ParamId)>,
    widths: Vec<usize>,
}

impl Mlp {
    /// Registers `{prefix}.{i}.w` / `{prefix}.{i}.b` for each layer.
    pub fn declare(
        store: &mut ParamStore,
        prefix: &str,
        widths: &[usize],
        init: &mut Initializer,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return invalid("an MLP needs at least an input and an output width");
        }
        let mut layers = Vec::new();
        for (i, pair) in widths.windows(2).enumerate() {
            let w = store.insert(format!("{prefix}.{i}.w"), init.dense(pair[0], pair[1]))?;
            let b = store.insert(format!("{prefix}.{i}.b"), Tensor::zeros(&[pair[1]]))?;
            layers.push((w, b));
        }
        Ok(Self {
            layers,
            widths: widths.to_vec(),
        })
    }

    /// Re-attaches to parameters already in `store`, validating the widths.
    pub fn attach(store: &ParamStore, prefix: &str, widths: &[usize]) -> Result<Self> {
        let mut layers = Vec::new();
        for (i, pair) in widths.windows(2).enumerate() {
            let w = store.expect(&format!("{prefix}.{i}.w"), &[pair[0], pair[1]])?;
            let b = store.expect(&format!("{prefix}.{i}.b"), &[pair[1]])?;
            layers.push((w, b));
        }
        Ok(Self {
            layers,
            widths: widths.to_vec(),
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// Applies the MLP row-wise to an `[n, din]` matrix.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            h = g.matmul(h, p.var(w))?;
            h = g.add_bias(h, p.var(b))?;
            if i + 1 < self.layers.len() {
                h = g.relu(h)?;
            }
        }
        Ok(h)
    }
}

/// Evaluates `mlp` on a single input vector.
pub fn mlp(store: &ParamStore, mlp: &Mlp, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != mlp.widths[0] {
        return invalid(format!(
            "MLP expects input width {}, got {}",
            mlp.widths[0],
            x.len()
        ));
    }
    let mut g = Graph::new();
    let p = store.bind(&mut g)?;
    let xv = g.constant(Tensor::new(vec![1, x.len()], x.to_vec())?)?;
    let y = mlp.forward(&mut g, &p, xv)?;
    Ok(g.value(y).data().to_vec())
}
