//! Graph layers over the macro adjacency matrix.

use std::sync::Arc;

use crate::tensor::{Matrix, TensorError, Var, MASK_VALUE};

/// Negative slope of the attention-logit rectifier.
pub const ATTENTION_SLOPE: f64 = 0.2;

pub struct GatHead<'t> {
    /// `d_in x d_out`
    pub w: Var<'t>,
    /// `d_out x 1`
    pub a_src: Var<'t>,
    /// `d_out x 1`
    pub a_dst: Var<'t>,
}

pub struct GatParams<'t> {
    pub heads: Vec<GatHead<'t>>,
    /// `1 x (heads * d_out)`
    pub bias: Var<'t>,
}

pub struct GcnParams<'t> {
    pub w: Var<'t>,
    pub bias: Var<'t>,
}

fn mismatch(what: &str, got: (usize, usize), want: (usize, usize)) -> TensorError {
    TensorError::ShapeMismatch(format!("{what}: got {}x{}, expected {}x{}", got.0, got.1, want.0, want.1))
}

fn check(what: &str, got: (usize, usize), want: (usize, usize)) -> Result<(), TensorError> {
    if got == want {
        Ok(())
    } else {
        Err(mismatch(what, got, want))
    }
}

/// Attention neighbourhoods: `H > 0` plus self-loops, row-major.
pub fn edge_mask(adjacency: &Matrix) -> Arc<Vec<bool>> {
    let n = adjacency.rows;
    Arc::new(
        (0..n * n)
            .map(|k| k / n == k % n || adjacency.data[k] > 0.0)
            .collect(),
    )
}

/// `D^{-1/2} (H + I) D^{-1/2}` with `D` the row sums of `H + I`.
pub fn gcn_propagation(adjacency: &Matrix) -> Matrix {
    let n = adjacency.rows;
    let mut a = adjacency.clone();
    for i in 0..n {
        a.set(i, i, a.get(i, i) + 1.0);
    }
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / a.row(i).iter().sum::<f64>().sqrt()).collect();
    for i in 0..n {
        for j in 0..n {
            a.set(i, j, a.get(i, j) * inv_sqrt[i] * inv_sqrt[j]);
        }
    }
    a
}

/// Multi-head graph attention followed by ELU; heads are concatenated.
///
/// Per head: `Z = X W`, `e_ij = LeakyReLU(a_src . z_i + a_dst . z_j)`,
/// `alpha = softmax_j(e_ij)` over the neighbourhood of `i`, output `alpha Z`.
pub fn gat_layer<'t>(x: Var<'t>, adjacency: &Matrix, p: &GatParams<'t>) -> Result<Var<'t>, TensorError> {
    let (n, d_in) = x.shape();
    check("adjacency", adjacency.shape(), (n, n))?;
    let first = p.heads.first().ok_or_else(|| TensorError::ShapeMismatch("no attention heads".into()))?;
    let d_out = first.w.shape().1;
    for h in &p.heads {
        check("head weight", h.w.shape(), (d_in, d_out))?;
        check("a_src", h.a_src.shape(), (d_out, 1))?;
        check("a_dst", h.a_dst.shape(), (d_out, 1))?;
    }
    check("bias", p.bias.shape(), (1, d_out * p.heads.len()))?;

    let mask = edge_mask(adjacency);
    let outs: Vec<Var<'t>> = p
        .heads
        .iter()
        .map(|h| {
            let z = x.matmul(h.w);
            let src = z.matmul(h.a_src);
            let dst = z.matmul(h.a_dst);
            let alpha = src
                .outer_add(dst)
                .leaky_relu(ATTENTION_SLOPE)
                .mask_fill(mask.clone(), MASK_VALUE)
                .softmax_rows();
            alpha.matmul(z)
        })
        .collect();
    let cat = if outs.len() == 1 { outs[0] } else { Var::concat_cols(&outs) };
    Ok(cat.add_row(p.bias).elu())
}

/// Degree-normalized propagation `ELU(A_hat X W + b)`.
pub fn gcn_layer<'t>(x: Var<'t>, adjacency: &Matrix, p: &GcnParams<'t>) -> Result<Var<'t>, TensorError> {
    let (n, d_in) = x.shape();
    check("adjacency", adjacency.shape(), (n, n))?;
    let d_out = p.w.shape().1;
    check("weight", p.w.shape(), (d_in, d_out))?;
    check("bias", p.bias.shape(), (1, d_out))?;
    let a_hat = x.tape().constant(gcn_propagation(adjacency));
    Ok(a_hat.matmul(x.matmul(p.w)).add_row(p.bias).elu())
}
