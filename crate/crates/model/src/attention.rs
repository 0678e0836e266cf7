//! Soft spatial attention over a feature map.

use abn_numerics::{Bound, Graph, Initializer, Mlp, ParamId, ParamStore, Tensor, Var};

use crate::error::{invalid, Result};

/// Output of an attention mechanism on an `[h, w, d]` map.
#[derive(Clone, Copy, Debug)]
pub struct Attended {
    /// `[h, w]` weights summing to one.
    pub alpha: Var,
    /// `a_i = alpha_i * f_i`, same shape as the input.
    pub features: Var,
}

pub trait AttentionMechanism: Send + Sync {
    fn name(&self) -> &'static str;
    /// Attention logits `[h, w]` for the feature map.
    fn logits(&self, g: &mut Graph, p: &Bound, features: Var) -> Result<Var>;

    fn attend(&self, g: &mut Graph, p: &Bound, features: Var) -> Result<Attended> {
        let logits = self.logits(g, p, features)?;
        let alpha = g.softmax(logits)?;
        let attended = g.scale_cells(alpha, features)?;
        Ok(Attended {
            alpha,
            features: attended,
        })
    }
}

fn hw(g: &Graph, x: Var) -> Result<(usize, usize, usize)> {
    match *g.shape(x) {
        [h, w, d] => Ok((h, w, d)),
        ref s => invalid(format!("attention expects an [h, w, d] map, got {s:?}")),
    }
}

/// Per-cell scoring `alpha = softmax(f_MLP(f_i))`.
pub struct VanillaAttention {
    mlp: Mlp,
}

impl VanillaAttention {
    pub fn widths(depth: usize, hidden: usize) -> [usize; 3] {
        [depth, hidden, 1]
    }
}

impl AttentionMechanism for VanillaAttention {
    fn name(&self) -> &'static str {
        "vanilla"
    }

    fn logits(&self, g: &mut Graph, p: &Bound, features: Var) -> Result<Var> {
        let (h, w, d) = hw(g, features)?;
        let rows = g.reshape(features, &[h * w, d])?;
        let scores = self.mlp.forward(g, p, rows)?;
        Ok(g.reshape(scores, &[h, w])?)
    }
}

/// Dilation rates of the parallel atrous branches (`1` is the 1x1 branch).
pub const ATROUS_RATES: [usize; 3] = [1, 2, 4];

struct Branch {
    kernel: ParamId,
    gamma: ParamId,
    beta: ParamId,
    dilation: usize,
}

/// Parallel 1x1, rate-2 and rate-4 3x3 convolutions, each normalized per
/// channel over space and rectified, concatenated and scored by a 1x1 conv.
pub struct AtrousAttention {
    branches: Vec<Branch>,
    head: ParamId,
    eps: f64,
}

impl AttentionMechanism for AtrousAttention {
    fn name(&self) -> &'static str {
        "atrous"
    }

    fn logits(&self, g: &mut Graph, p: &Bound, features: Var) -> Result<Var> {
        let (h, w, _) = hw(g, features)?;
        let mut outs = Vec::with_capacity(self.branches.len());
        for b in &self.branches {
            let y = g.conv2d(features, p.var(b.kernel), b.dilation, 1)?;
            let y = g.channel_norm(y, p.var(b.gamma), p.var(b.beta), self.eps)?;
            outs.push(g.relu(y)?);
        }
        let cat = g.concat(&outs)?;
        let logits = g.conv2d(cat, p.var(self.head), 1, 1)?;
        Ok(g.reshape(logits, &[h, w])?)
    }
}

/// Builds (or re-attaches) a mechanism's parameters under `prefix`.
pub type AttentionFactory = fn(
    store: &mut ParamStore,
    prefix: &str,
    depth: usize,
    hidden: usize,
    eps: f64,
    init: Option<&mut Initializer>,
) -> Result<Box<dyn AttentionMechanism>>;

fn vanilla_factory(
    store: &mut ParamStore,
    prefix: &str,
    depth: usize,
    hidden: usize,
    _eps: f64,
    init: Option<&mut Initializer>,
) -> Result<Box<dyn AttentionMechanism>> {
    let widths = VanillaAttention::widths(depth, hidden);
    let name = format!("{prefix}.f_mlp");
    let mlp = match init {
        Some(i) => Mlp::declare(store, &name, &widths, i)?,
        None => Mlp::attach(store, &name, &widths)?,
    };
    Ok(Box::new(VanillaAttention { mlp }))
}

fn atrous_factory(
    store: &mut ParamStore,
    prefix: &str,
    depth: usize,
    _hidden: usize,
    eps: f64,
    mut init: Option<&mut Initializer>,
) -> Result<Box<dyn AttentionMechanism>> {
    let mut tensor = |name: String, make: &mut dyn FnMut(&mut Initializer) -> Tensor, shape: &[usize]| {
        Ok::<_, crate::error::ModelError>(match init.as_deref_mut() {
            Some(i) => store.insert(name, make(i))?,
            None => store.expect(&name, shape)?,
        })
    };
    let mut branches = Vec::new();
    for rate in ATROUS_RATES {
        let k = if rate == 1 { 1 } else { 3 };
        branches.push(Branch {
            kernel: tensor(
                format!("{prefix}.rate{rate}.conv"),
                &mut |i| i.conv_kernel(k, k, depth, depth),
                &[k, k, depth, depth],
            )?,
            gamma: tensor(format!("{prefix}.rate{rate}.gamma"), &mut |_| Tensor::full(&[depth], 1.0), &[depth])?,
            beta: tensor(format!("{prefix}.rate{rate}.beta"), &mut |_| Tensor::zeros(&[depth]), &[depth])?,
            dilation: rate,
        });
    }
    let cat = depth * ATROUS_RATES.len();
    let head = tensor(format!("{prefix}.head"), &mut |i| i.conv_kernel(1, 1, cat, 1), &[1, 1, cat, 1])?;
    Ok(Box::new(AtrousAttention { branches, head, eps }))
}

/// Attention mechanisms selectable by name.
pub struct AttentionRegistry {
    entries: Vec<(&'static str, AttentionFactory)>,
}

impl Default for AttentionRegistry {
    fn default() -> Self {
        let mut r = Self { entries: vec![] };
        r.register("vanilla", vanilla_factory);
        r.register("atrous", atrous_factory);
        r
    }
}

impl AttentionRegistry {
    pub fn register(&mut self, name: &'static str, factory: AttentionFactory) {
        self.entries.retain(|(n, _)| *n != name);
        self.entries.push((name, factory));
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|(n, _)| *n).collect()
    }

    pub fn get(&self, name: &str) -> Result<AttentionFactory> {
        self.entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, f)| *f)
            .ok_or_else(|| crate::error::ModelError::InvalidArgument(format!("unknown attention mechanism {name:?}")))
    }
}
