//! Recurrent waypoint decoder (AgentRNN).
//!
//! Each step reads the context features, the memory of past predicted points
//! `M`, the previous box heatmap `B` and a constant plane `k / N`, and emits
//! position logits, box logits and a heading. The waypoint is the soft-argmax
//! of the position logits in agent-frame meters.

use abn_numerics::{Bound, Graph, Initializer, Mlp, ParamId, ParamStore, SplatAffine, Tensor, Var};

use crate::error::{invalid, ModelError, Result};

/// Channels of the per-step state input: memory, previous box, step plane.
pub const STATE_CHANNELS: usize = 3;

/// Agent-frame meters <-> feature-map cells, with the agent anchored at
/// `(0.5 w, 0.75 h)` like the input raster.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellFrame {
    pub side: usize,
    pub cell_size_m: f64,
}

impl CellFrame {
    pub fn anchor_col(&self) -> f64 {
        0.5 * self.side as f64
    }

    pub fn anchor_row(&self) -> f64 {
        0.75 * self.side as f64
    }

    /// Agent-frame center of cell `(row, col)`.
    pub fn center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            (col as f64 + 0.5 - self.anchor_col()) * self.cell_size_m,
            (self.anchor_row() - row as f64 - 0.5) * self.cell_size_m,
        )
    }

    pub fn splat_affine(&self) -> SplatAffine {
        SplatAffine {
            height: self.side,
            width: self.side,
            col_scale: 1.0 / self.cell_size_m,
            col_offset: self.anchor_col(),
            row_scale: -1.0 / self.cell_size_m,
            row_offset: self.anchor_row(),
        }
    }

    fn coordinate_planes(&self) -> (Tensor, Tensor) {
        let n = self.side;
        let mut xs = Vec::with_capacity(n * n);
        let mut ys = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                let (x, y) = self.center(r, c);
                xs.push(x);
                ys.push(y);
            }
        }
        (
            Tensor::new(vec![n, n], xs).expect("square plane"),
            Tensor::new(vec![n, n], ys).expect("square plane"),
        )
    }
}

/// Vars produced by one decoder step.
#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    /// `[2]`: agent-frame `(x, y)` in meters.
    pub position: Var,
    /// `[1, 1]`: heading relative to the current agent heading (rad).
    pub heading: Var,
    /// `[h, w]` box logits and their sigmoid.
    pub box_logits: Var,
    pub box_heatmap: Var,
    /// `[h, w]` memory after adding this step's point.
    pub memory: Var,
}

#[derive(Clone, Debug)]
pub struct AgentRnn {
    context_conv: ParamId,
    context_bias: ParamId,
    state_conv: ParamId,
    mid_conv: ParamId,
    mid_bias: ParamId,
    position_head: ParamId,
    position_bias: ParamId,
    box_head: ParamId,
    box_bias: ParamId,
    heading: Mlp,
    context_channels: usize,
    hidden: usize,
    horizon: usize,
    frame: CellFrame,
}

impl AgentRnn {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        store: &mut ParamStore,
        prefix: &str,
        context_channels: usize,
        hidden: usize,
        heading_hidden: usize,
        horizon: usize,
        frame: CellFrame,
        mut init: Option<&mut Initializer>,
    ) -> Result<Self> {
        let mut kernel = |name: &str, k: usize, cin: usize, cout: usize| -> Result<ParamId> {
            let name = format!("{prefix}.{name}");
            Ok(match init.as_deref_mut() {
                Some(i) => store.insert(name, i.conv_kernel(k, k, cin, cout))?,
                None => store.expect(&name, &[k, k, cin, cout])?,
            })
        };
        let context_conv = kernel("context_conv", 3, context_channels, hidden)?;
        let state_conv = kernel("state_conv", 3, STATE_CHANNELS, hidden)?;
        let mid_conv = kernel("mid_conv", 1, hidden, hidden)?;
        let position_head = kernel("position_head", 1, hidden, 1)?;
        let box_head = kernel("box_head", 1, hidden, 1)?;
        let mut bias = |name: &str, n: usize| -> Result<ParamId> {
            let name = format!("{prefix}.{name}");
            Ok(if init.is_some() {
                store.insert(name, Tensor::zeros(&[n]))?
            } else {
                store.expect(&name, &[n])?
            })
        };
        let context_bias = bias("context_bias", hidden)?;
        let mid_bias = bias("mid_bias", hidden)?;
        let position_bias = bias("position_bias", 1)?;
        let box_bias = bias("box_bias", 1)?;
        let widths = [hidden, heading_hidden, 1];
        let name = format!("{prefix}.heading");
        let heading = match init {
            Some(i) => Mlp::declare(store, &name, &widths, i)?,
            None => Mlp::attach(store, &name, &widths)?,
        };
        Ok(Self {
            context_conv,
            context_bias,
            state_conv,
            mid_conv,
            mid_bias,
            position_head,
            position_bias,
            box_head,
            box_bias,
            heading,
            context_channels,
            hidden,
            horizon,
            frame,
        })
    }

    pub fn frame(&self) -> CellFrame {
        self.frame
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Step-invariant part of the first layer: `conv3x3(context) + b`.
    pub fn context(&self, g: &mut Graph, p: &Bound, context: Var) -> Result<Var> {
        let s = g.shape(context);
        let n = self.frame.side;
        if s != [n, n, self.context_channels] {
            return invalid(format!(
                "decoder context must be [{n}, {n}, {}], got {s:?}",
                self.context_channels
            ));
        }
        let y = g.conv2d(context, p.var(self.context_conv), 1, 1)?;
        Ok(g.add_bias(y, p.var(self.context_bias))?)
    }

    /// Step `k` (1-based) given the precomputed context term.
    pub fn step(
        &self,
        g: &mut Graph,
        p: &Bound,
        context_term: Var,
        k: usize,
        memory: Var,
        prev_box: Var,
    ) -> Result<StepOutput> {
        if k == 0 || k > self.horizon {
            return invalid(format!("decoder step {k} outside 1..={}", self.horizon));
        }
        let n = self.frame.side;
        let plane = g.constant(Tensor::full(&[n, n, 1], k as f64 / self.horizon as f64))?;
        let m = g.reshape(memory, &[n, n, 1])?;
        let b = g.reshape(prev_box, &[n, n, 1])?;
        let state = g.concat(&[m, b, plane])?;
        let s = g.conv2d(state, p.var(self.state_conv), 1, 1)?;
        let h = g.add(context_term, s)?;
        let h = g.relu(h)?;
        let h = g.conv2d(h, p.var(self.mid_conv), 1, 1)?;
        let h = g.add_bias(h, p.var(self.mid_bias))?;
        let h = g.relu(h)?;

        let pos = g.conv2d(h, p.var(self.position_head), 1, 1)?;
        let pos = g.add_bias(pos, p.var(self.position_bias))?;
        let pos = g.reshape(pos, &[n, n])?;
        let prob = g.softmax(pos)?;
        let (xs, ys) = self.frame.coordinate_planes();
        let (xs, ys) = (g.constant(xs)?, g.constant(ys)?);
        let wx = g.mul(prob, xs)?;
        let wy = g.mul(prob, ys)?;
        let x = g.sum_all(wx)?;
        let y = g.sum_all(wy)?;
        let position = g.concat(&[x, y])?;

        let bl = g.conv2d(h, p.var(self.box_head), 1, 1)?;
        let bl = g.add_bias(bl, p.var(self.box_bias))?;
        let box_logits = g.reshape(bl, &[n, n])?;
        let box_heatmap = g.sigmoid(box_logits)?;

        let pooled = g.mean_cells(h)?;
        let pooled = g.reshape(pooled, &[1, self.hidden])?;
        let heading = self.heading.forward(g, p, pooled)?;

        let splat = g.bilinear_splat(position, self.frame.splat_affine())?;
        let memory = g.maximum(memory, splat)?;
        Ok(StepOutput {
            position,
            heading,
            box_logits,
            box_heatmap,
            memory,
        })
    }

    /// Runs all `N` steps from `M_0 = 0` and the given initial box heatmap.
    pub fn unroll(&self, g: &mut Graph, p: &Bound, context: Var, initial_box: Var) -> Result<Vec<StepOutput>> {
        let n = self.frame.side;
        if g.shape(initial_box) != [n, n] {
            return Err(ModelError::InvalidArgument(format!(
                "initial box heatmap must be [{n}, {n}], got {:?}",
                g.shape(initial_box)
            )));
        }
        let term = self.context(g, p, context)?;
        let mut memory = g.constant(Tensor::zeros(&[n, n]))?;
        let mut prev = initial_box;
        let mut out = Vec::with_capacity(self.horizon);
        for k in 1..=self.horizon {
            let s = self.step(g, p, term, k, memory, prev)?;
            memory = s.memory;
            prev = s.box_heatmap;
            out.push(s);
        }
        Ok(out)
    }
}
