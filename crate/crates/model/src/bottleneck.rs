//! Compression of attended features into the bottleneck vector `z`.

use abn_numerics::{Bound, Graph, Mlp, ParamStore, Tensor, Var};

use crate::config::Pooling;
use crate::error::{invalid, Result};

/// `z = pool_i g_MLP([a_i; v_i])` over the cells of `attended` (`[h, w, d_a]`);
/// `positions` (`[h, w, d_pe]`) is omitted when `None`.
pub fn bottleneck_encode(
    g: &mut Graph,
    p: &Bound,
    g_mlp: &Mlp,
    attended: Var,
    positions: Option<Var>,
    pooling: Pooling,
) -> Result<Var> {
    let &[h, w, _] = g.shape(attended) else {
        return invalid(format!("attended features must be [h, w, d], got {:?}", g.shape(attended)));
    };
    let joined = match positions {
        Some(v) => {
            if g.shape(v)[..2] != [h, w] {
                return invalid(format!(
                    "positional basis {:?} is not aligned with features [{h}, {w}]",
                    g.shape(v)
                ));
            }
            g.concat(&[attended, v])?
        }
        None => attended,
    };
    let din = g.shape(joined)[2];
    if din != g_mlp.widths()[0] {
        return invalid(format!("g_MLP expects {} inputs per cell, got {din}", g_mlp.widths()[0]));
    }
    let rows = g.reshape(joined, &[h * w, din])?;
    let out = g_mlp.forward(g, p, rows)?;
    let dz = g.shape(out)[1];
    let cells = g.reshape(out, &[h, w, dz])?;
    Ok(match pooling {
        Pooling::Mean => g.mean_cells(cells)?,
        Pooling::Sum => g.sum_cells(cells)?,
    })
}

/// Value-level [`bottleneck_encode`].
pub fn encode_values(
    store: &ParamStore,
    g_mlp: &Mlp,
    attended: &Tensor,
    positions: Option<&Tensor>,
    pooling: Pooling,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let p = store.bind(&mut g)?;
    let a = g.constant(attended.clone())?;
    let v = positions.map(|t| g.constant(t.clone())).transpose()?;
    let z = bottleneck_encode(&mut g, &p, g_mlp, a, v, pooling)?;
    Ok(g.value(z).clone())
}
