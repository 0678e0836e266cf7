//! Full network assembly for every ablation variant.

use abn_numerics::{Bound, Graph, Initializer, Mlp, ParamId, ParamStore, Tensor, Var};
use abn_scenegen::RasterStack;

use crate::attention::{AttentionMechanism, AttentionRegistry};
use crate::bottleneck::bottleneck_encode;
use crate::config::{AttentionMode, ModelConfig, VariantConfig};
use crate::decoder::{AgentRnn, CellFrame, StepOutput};
use crate::error::{invalid, ModelError, Result};
use crate::features::FeatureNet;
use crate::positional::positional_basis;

/// Network inputs derived from one raster stack.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput {
    /// `[H, W, |I|]` all input channels.
    pub all: Tensor,
    /// `[H, W, |S|]` dense scene context.
    pub dense: Tensor,
    /// `[H, W, |O|]` dynamic-object channels.
    pub objects: Tensor,
    /// `[h, w]` current agent box coverage at feature-map resolution.
    pub initial_box: Tensor,
}

impl ModelInput {
    pub fn from_raster(raster: &RasterStack, config: &ModelConfig) -> Result<Self> {
        let n = config.resolution;
        if raster.grid.resolution != n {
            return invalid(format!(
                "raster is {0}x{0}, model expects {n}x{n}",
                raster.grid.resolution
            ));
        }
        let check = |idx: &[usize]| -> Result<()> {
            match idx.iter().find(|&&i| i >= raster.channels.len()) {
                Some(i) => invalid(format!("raster has no channel {i}")),
                None => Ok(()),
            }
        };
        check(&config.input_channels)?;
        check(&config.dense_channels)?;
        check(&config.object_channels)?;
        let stack = |idx: &[usize]| Tensor::new(vec![n, n, idx.len()], raster.hwc(idx));
        let box_channel = raster.index("current_agent_box")?;
        let f = config.downsample();
        let side = n / f;
        let mut initial = vec![0.0; side * side];
        for (i, &v) in raster.channels[box_channel].iter().enumerate() {
            let (r, c) = (i / n, i % n);
            initial[(r / f) * side + c / f] += v as f64 / (f * f) as f64;
        }
        Ok(Self {
            all: stack(&config.input_channels)?,
            dense: stack(&config.dense_channels)?,
            objects: stack(&config.object_channels)?,
            initial_box: Tensor::new(vec![side, side], initial)?,
        })
    }
}

/// Dedicated encoder and atrous attention over the dynamic-object channels.
pub struct ObjectBranch {
    encoder: FeatureNet,
    attention: Box<dyn AttentionMechanism>,
    occupancy_head: ParamId,
    occupancy_bias: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct ObjectOutput {
    /// `[h, w]` object attention.
    pub alpha: Var,
    /// `[h, w, d]` attended object features.
    pub attended: Var,
    /// `[h, w, K]` future occupancy logits.
    pub occupancy_logits: Var,
}

impl ObjectBranch {
    pub fn forward(&self, g: &mut Graph, p: &Bound, objects: Var) -> Result<ObjectOutput> {
        let f = self.encoder.forward(g, p, objects)?;
        let att = self.attention.attend(g, p, f)?;
        let occ = g.conv2d(att.features, p.var(self.occupancy_head), 1, 1)?;
        let occ = g.add_bias(occ, p.var(self.occupancy_bias))?;
        Ok(ObjectOutput {
            alpha: att.alpha,
            attended: att.features,
            occupancy_logits: occ,
        })
    }
}

/// Switches for a forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ForwardOptions {
    /// Replace the bottleneck vector with zeros before decoding.
    pub zero_z: bool,
}

/// Graph handles of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub steps: Vec<StepOutput>,
    pub alpha: Option<Var>,
    pub z: Option<Var>,
    pub object: Option<ObjectOutput>,
    /// Number of FeatureNet evaluations performed.
    pub encoder_calls: usize,
}

/// Evaluated forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    /// Agent-frame `(x, y, heading)` for each step.
    pub waypoints: Vec<[f64; 3]>,
    pub box_heatmaps: Vec<Tensor>,
    pub memory: Vec<Tensor>,
    pub alpha: Option<Tensor>,
    pub z: Option<Tensor>,
    pub object_alpha: Option<Tensor>,
    /// `[h, w, K]` occupancy probabilities.
    pub occupancy: Option<Tensor>,
    pub encoder_calls: usize,
}

impl Rollout {
    /// Waypoints in continuous input-raster pixel coordinates `(col, row)`.
    pub fn waypoint_pixels(&self, grid: &abn_scenegen::GridConfig) -> Vec<(f64, f64)> {
        self.waypoints
            .iter()
            .map(|w| grid.to_pixel(abn_scenegen::Vec2::new(w[0], w[1])))
            .collect()
    }
}

/// A variant's parameters and structure.
pub struct Model {
    config: ModelConfig,
    variant: VariantConfig,
    store: ParamStore,
    encoder: FeatureNet,
    dense_encoder: Option<FeatureNet>,
    attention: Option<Box<dyn AttentionMechanism>>,
    g_mlp: Option<Mlp>,
    objects: Option<ObjectBranch>,
    decoder: AgentRnn,
    basis: Option<Tensor>,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model")
            .field("variant", &self.variant)
            .field("parameters", &self.store.scalar_count())
            .finish()
    }
}

impl Clone for Model {
    fn clone(&self) -> Self {
        Model::from_store(self.config.clone(), self.variant, self.store.clone())
            .expect("a built model re-attaches to its own parameters")
    }
}

impl Model {
    /// Fresh Glorot-initialized weights.
    pub fn new(config: ModelConfig, variant: VariantConfig, seed: u64) -> Result<Self> {
        let mut init = Initializer::new(seed);
        Self::build(config, variant, ParamStore::new(), Some(&mut init))
    }

    /// Wraps existing parameters, validating every shape against the variant.
    pub fn from_store(config: ModelConfig, variant: VariantConfig, store: ParamStore) -> Result<Self> {
        let expected = store.len();
        let used = Self::new(config.clone(), variant, 0)?.store.len();
        let m = Self::build(config, variant, store, None).map_err(|e| match e {
            ModelError::Numerics(n) => ModelError::Checkpoint(format!("parameters do not fit variant {variant}: {n}")),
            other => other,
        })?;
        if used != expected {
            return Err(ModelError::Checkpoint(format!(
                "parameter set has {expected} tensors, variant {variant} uses {used}"
            )));
        }
        Ok(m)
    }

    fn build(
        config: ModelConfig,
        variant: VariantConfig,
        mut store: ParamStore,
        mut init: Option<&mut Initializer>,
    ) -> Result<Self> {
        config.validate()?;
        variant.validate()?;
        let d = config.feature_dim;
        let n = config.cells_per_side();
        let registry = AttentionRegistry::default();
        let encoder = feature_net(&mut store, "enc_i", config.input_channels.len(), &config, init.as_deref_mut())?;
        let dense_encoder = match variant.attention {
            AttentionMode::Bottleneck => Some(feature_net(
                &mut store,
                "enc_s",
                config.dense_channels.len(),
                &config,
                init.as_deref_mut(),
            )?),
            _ => None,
        };
        let objects = if variant.object_branch {
            let encoder = feature_net(&mut store, "enc_o", config.object_channels.len(), &config, init.as_deref_mut())?;
            let attention =
                registry.get("atrous")?(&mut store, "obj_attn", d, config.attention_hidden, config.norm_eps, init.as_deref_mut())?;
            let (head, bias) = match init.as_deref_mut() {
                Some(i) => (
                    store.insert("obj_occ.head", i.conv_kernel(1, 1, d, config.horizon))?,
                    store.insert("obj_occ.bias", Tensor::zeros(&[config.horizon]))?,
                ),
                None => (
                    store.expect("obj_occ.head", &[1, 1, d, config.horizon])?,
                    store.expect("obj_occ.bias", &[config.horizon])?,
                ),
            };
            Some(ObjectBranch {
                encoder,
                attention,
                occupancy_head: head,
                occupancy_bias: bias,
            })
        } else {
            None
        };
        let attended_dim = if variant.object_branch { 2 * d } else { d };
        let attention = if variant.has_attention() {
            let name = if variant.atrous { "atrous" } else { "vanilla" };
            Some(registry.get(name)?(
                &mut store,
                "attn",
                attended_dim,
                config.attention_hidden,
                config.norm_eps,
                init.as_deref_mut(),
            )?)
        } else {
            None
        };
        let (g_mlp, basis) = if variant.attention == AttentionMode::Bottleneck {
            let pe = if variant.positional_encoding { config.positional_dim } else { 0 };
            let widths = [attended_dim + pe, config.bottleneck_hidden, config.bottleneck_dim];
            let mlp = match init.as_deref_mut() {
                Some(i) => Mlp::declare(&mut store, "g_mlp", &widths, i)?,
                None => Mlp::attach(&store, "g_mlp", &widths)?,
            };
            let basis = if variant.positional_encoding {
                Some(positional_basis(n, n, config.positional_dim)?)
            } else {
                None
            };
            (Some(mlp), basis)
        } else {
            (None, None)
        };
        let context_channels = match variant.attention {
            AttentionMode::Bottleneck => d + config.bottleneck_dim,
            _ => d,
        };
        let frame = CellFrame {
            side: n,
            cell_size_m: config.cell_size_m(),
        };
        let decoder = AgentRnn::build(
            &mut store,
            "rnn",
            context_channels,
            config.decoder_hidden,
            config.heading_hidden,
            config.horizon,
            frame,
            init,
        )?;
        Ok(Self {
            config,
            variant,
            store,
            encoder,
            dense_encoder,
            attention,
            g_mlp,
            objects,
            decoder,
            basis,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> VariantConfig {
        self.variant
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn into_params(self) -> ParamStore {
        self.store
    }

    pub fn decoder(&self) -> &AgentRnn {
        &self.decoder
    }

    pub fn attention(&self) -> Option<&dyn AttentionMechanism> {
        self.attention.as_deref()
    }

    pub fn bottleneck_mlp(&self) -> Option<&Mlp> {
        self.g_mlp.as_ref()
    }

    pub fn encoder(&self) -> &FeatureNet {
        &self.encoder
    }

    pub fn positional(&self) -> Option<&Tensor> {
        self.basis.as_ref()
    }

    pub fn input(&self, raster: &RasterStack) -> Result<ModelInput> {
        ModelInput::from_raster(raster, &self.config)
    }

    /// Records the forward pass on `g` with parameters bound as `p`.
    pub fn forward(&self, g: &mut Graph, p: &Bound, input: &ModelInput, opts: ForwardOptions) -> Result<ForwardOutput> {
        let all = g.constant(input.all.clone())?;
        let f_i = self.encoder.forward(g, p, all)?;
        let mut encoder_calls = 1;
        let object = match &self.objects {
            Some(branch) => {
                let o = g.constant(input.objects.clone())?;
                encoder_calls += 1;
                Some(branch.forward(g, p, o)?)
            }
            None => None,
        };
        let f_i = match &object {
            Some(o) => g.concat(&[f_i, o.attended])?,
            None => f_i,
        };
        let attended = match &self.attention {
            Some(a) => Some(a.attend(g, p, f_i)?),
            None => None,
        };
        let mut z = None;
        let context = match self.variant.attention {
            AttentionMode::None => f_i,
            AttentionMode::Vanilla => attended.expect("vanilla variant has attention").features,
            AttentionMode::Bottleneck => {
                let a = attended.expect("bottleneck variant has attention").features;
                let v = match &self.basis {
                    Some(b) => Some(g.constant(b.clone())?),
                    None => None,
                };
                let g_mlp = self.g_mlp.as_ref().expect("bottleneck variant has g_MLP");
                let zv = bottleneck_encode(g, p, g_mlp, a, v, self.config.pooling)?;
                z = Some(zv);
                let zd = if opts.zero_z {
                    g.constant(Tensor::zeros(&[self.config.bottleneck_dim]))?
                } else {
                    zv
                };
                let dense = g.constant(input.dense.clone())?;
                let f_s = self
                    .dense_encoder
                    .as_ref()
                    .expect("bottleneck variant has a dense encoder")
                    .forward(g, p, dense)?;
                encoder_calls += 1;
                let n = self.config.cells_per_side();
                let tiled = g.broadcast_cells(zd, n, n)?;
                g.concat(&[f_s, tiled])?
            }
        };
        let b0 = g.constant(input.initial_box.clone())?;
        let steps = self.decoder.unroll(g, p, context, b0)?;
        Ok(ForwardOutput {
            steps,
            alpha: attended.map(|a| a.alpha),
            z,
            object,
            encoder_calls,
        })
    }

    pub fn rollout_input(&self, input: &ModelInput, opts: ForwardOptions) -> Result<Rollout> {
        let mut g = Graph::new();
        let p = self.store.bind(&mut g)?;
        let out = self.forward(&mut g, &p, input, opts)?;
        let val = |v: Var| g.value(v).clone();
        Ok(Rollout {
            waypoints: out
                .steps
                .iter()
                .map(|s| {
                    let pos = g.value(s.position).data();
                    [pos[0], pos[1], g.value(s.heading).data()[0]]
                })
                .collect(),
            box_heatmaps: out.steps.iter().map(|s| val(s.box_heatmap)).collect(),
            memory: out.steps.iter().map(|s| val(s.memory)).collect(),
            alpha: out.alpha.map(val),
            z: out.z.map(val),
            object_alpha: out.object.map(|o| val(o.alpha)),
            occupancy: out
                .object
                .map(|o| g.value(o.occupancy_logits).map(|x| 1.0 / (1.0 + (-x).exp()))),
            encoder_calls: out.encoder_calls,
        })
    }

    pub fn rollout(&self, raster: &RasterStack) -> Result<Rollout> {
        self.rollout_input(&self.input(raster)?, ForwardOptions::default())
    }

    pub fn rollout_with(&self, raster: &RasterStack, opts: ForwardOptions) -> Result<Rollout> {
        self.rollout_input(&self.input(raster)?, opts)
    }
}

fn feature_net(
    store: &mut ParamStore,
    prefix: &str,
    channels: usize,
    config: &ModelConfig,
    init: Option<&mut Initializer>,
) -> Result<FeatureNet> {
    match init {
        Some(i) => FeatureNet::declare(store, prefix, channels, &config.stage_widths, config.tail_layers, i),
        None => FeatureNet::attach(store, prefix, channels, &config.stage_widths, config.tail_layers),
    }
}
