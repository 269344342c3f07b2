//! Multi-head self-attention built from tape primitives.

use super::{NodeId, Tape};
use crate::error::Error;
use crate::scalar::Scalar;
use crate::Result;

/// Projection weights for one attention layer, already registered on a tape.
#[derive(Clone, Copy, Debug)]
pub struct AttentionWeights {
    pub wq: NodeId,
    pub bq: NodeId,
    pub wk: NodeId,
    pub bk: NodeId,
    pub wv: NodeId,
    pub bv: NodeId,
    pub wo: NodeId,
    pub bo: NodeId,
}

/// Attention output plus the per-head attention matrices (softmax rows).
pub struct AttentionNodes {
    pub out: NodeId,
    pub attn: Vec<NodeId>,
}

/// Standard scaled dot-product self-attention over `x: [T×d_model]`, full
/// bidirectional (no mask), heads concatenated and output-projected.
pub fn multi_head_self_attention<T: Scalar>(
    tape: &mut Tape<T>,
    x: NodeId,
    weights: &AttentionWeights,
    n_heads: usize,
) -> Result<AttentionNodes> {
    let (_, d_model) = tape.value(x).dims2();
    if n_heads == 0 || d_model % n_heads != 0 {
        return Err(Error::config(format!(
            "d_model {d_model} not divisible by n_heads {n_heads}"
        )));
    }
    let d_head = d_model / n_heads;
    let scale = T::from_f64(1.0 / (d_head as f64).sqrt());

    let q = tape.matmul(x, weights.wq)?;
    let q = tape.add_row(q, weights.bq)?;
    let k = tape.matmul(x, weights.wk)?;
    let k = tape.add_row(k, weights.bk)?;
    let v = tape.matmul(x, weights.wv)?;
    let v = tape.add_row(v, weights.bv)?;

    let mut heads = Vec::with_capacity(n_heads);
    let mut attn = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let qh = tape.slice_cols(q, h * d_head, d_head)?;
        let kh = tape.slice_cols(k, h * d_head, d_head)?;
        let vh = tape.slice_cols(v, h * d_head, d_head)?;
        let kt = tape.transpose(kh);
        let scores = tape.matmul(qh, kt)?;
        let scores = tape.scale(scores, scale);
        let weights_h = tape.softmax_rows(scores);
        attn.push(weights_h);
        heads.push(tape.matmul(weights_h, vh)?);
    }
    let concat = tape.concat_cols(&heads)?;
    let out = tape.matmul(concat, weights.wo)?;
    let out = tape.add_row(out, weights.bo)?;
    Ok(AttentionNodes { out, attn })
}
