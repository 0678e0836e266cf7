//! FeatureNet: a strided convolutional encoder with skip connections.

use abn_numerics::{Bound, Graph, Initializer, ParamId, ParamStore, Tensor, Var};

use crate::error::{invalid, Result};

#[derive(Clone, Debug)]
struct Stage {
    conv: ParamId,
    bias: ParamId,
    skip: ParamId,
}

/// Each stage computes `relu(conv3x3_s2(x) + b + conv1x1(avgpool2(x)))`; the
/// tail is a stack of `relu(conv3x3(x) + b)` layers at the final resolution.
#[derive(Clone, Debug)]
pub struct FeatureNet {
    in_channels: usize,
    stages: Vec<Stage>,
    tail: Vec<(ParamId, ParamId)>,
    depth: usize,
}

impl FeatureNet {
    pub fn declare(
        store: &mut ParamStore,
        prefix: &str,
        in_channels: usize,
        stage_widths: &[usize],
        tail_layers: usize,
        init: &mut Initializer,
    ) -> Result<Self> {
        Self::build(store, prefix, in_channels, stage_widths, tail_layers, Some(init))
    }

    pub fn attach(
        store: &mut ParamStore,
        prefix: &str,
        in_channels: usize,
        stage_widths: &[usize],
        tail_layers: usize,
    ) -> Result<Self> {
        Self::build(store, prefix, in_channels, stage_widths, tail_layers, None)
    }

    fn build(
        store: &mut ParamStore,
        prefix: &str,
        in_channels: usize,
        stage_widths: &[usize],
        tail_layers: usize,
        mut init: Option<&mut Initializer>,
    ) -> Result<Self> {
        let Some(&depth) = stage_widths.last() else {
            return invalid("FeatureNet needs at least one stage");
        };
        let mut param = |name: String, shape: [usize; 4], zero: bool| -> Result<ParamId> {
            Ok(match init.as_deref_mut() {
                Some(i) => {
                    let t = if zero {
                        Tensor::zeros(&shape[3..])
                    } else {
                        i.conv_kernel(shape[0], shape[1], shape[2], shape[3])
                    };
                    store.insert(name, t)?
                }
                None if zero => store.expect(&name, &shape[3..])?,
                None => store.expect(&name, &shape)?,
            })
        };
        let mut stages = Vec::new();
        let mut cin = in_channels;
        for (s, &w) in stage_widths.iter().enumerate() {
            stages.push(Stage {
                conv: param(format!("{prefix}.stage{s}.conv"), [3, 3, cin, w], false)?,
                bias: param(format!("{prefix}.stage{s}.bias"), [0, 0, 0, w], true)?,
                skip: param(format!("{prefix}.stage{s}.skip"), [1, 1, cin, w], false)?,
            });
            cin = w;
        }
        let tail = (0..tail_layers)
            .map(|t| {
                Ok((
                    param(format!("{prefix}.tail{t}.conv"), [3, 3, depth, depth], false)?,
                    param(format!("{prefix}.tail{t}.bias"), [0, 0, 0, depth], true)?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            in_channels,
            stages,
            tail,
            depth,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    /// `[H, W, C] -> [H / 2^s, W / 2^s, d]`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let shape = g.shape(x);
        if shape.len() != 3 || shape[2] != self.in_channels {
            return invalid(format!(
                "FeatureNet expects [h, w, {}] input, got {:?}",
                self.in_channels, shape
            ));
        }
        let mut h = x;
        for st in &self.stages {
            let main = g.conv2d(h, p.var(st.conv), 1, 2)?;
            let main = g.add_bias(main, p.var(st.bias))?;
            let pooled = g.avg_pool2(h)?;
            let skip = g.conv2d(pooled, p.var(st.skip), 1, 1)?;
            let sum = g.add(main, skip)?;
            h = g.relu(sum)?;
        }
        for &(conv, bias) in &self.tail {
            let y = g.conv2d(h, p.var(conv), 1, 1)?;
            let y = g.add_bias(y, p.var(bias))?;
            h = g.relu(y)?;
        }
        Ok(h)
    }
}
