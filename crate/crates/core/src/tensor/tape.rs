//! Operation tape for reverse-mode differentiation.
//!
//! A [`Tape`] records every primitive application in topological order
//! (inputs always precede consumers). [`Tape::backward`] consumes the tape
//! and performs a single reverse sweep, accumulating parameter gradients
//! into the supplied [`ParamSet`]. Taking `self` by value makes a record
//! single-use: replaying a stale tape is a compile error, not a runtime
//! surprise.
//!
//! Reductions (means, variances, softmax normalizers) accumulate in f64
//! regardless of the element type.

use super::{matmul_nn, matmul_nt, matmul_tn, ParamSet, Tensor};
use crate::error::Error;
use crate::scalar::Scalar;
use crate::Result;

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op<T> {
    Const,
    Param { slot: usize },
    Matmul { a: NodeId, b: NodeId },
    Transpose { a: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    AddRow { a: NodeId, bias: NodeId },
    Scale { a: NodeId, c: T },
    Relu { a: NodeId },
    Sigmoid { a: NodeId },
    Softplus { a: NodeId },
    SoftmaxRows { a: NodeId },
    LayerNorm { a: NodeId, gain: NodeId, bias: NodeId, eps: f64 },
    MeanPoolRows { a: NodeId, group: usize },
    RepeatRows { a: NodeId, times: usize },
    SliceCols { a: NodeId, start: usize, len: usize },
    ConcatCols { inputs: Vec<NodeId> },
    Reshape { a: NodeId },
    Pick { a: NodeId, index: usize },
    SumAll { a: NodeId },
    MseLoss { pred: NodeId, target: Tensor<T> },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Recorded computation; one forward pass, one backward sweep.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Value of a 1-element node as f64.
    pub fn scalar_value(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.data()[0].as_f64()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// Records an input that needs no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Const)
    }

    /// Records a leaf bound to `params[slot]`; backward accumulates into
    /// that parameter's gradient.
    pub fn param(&mut self, params: &ParamSet<T>, slot: usize) -> NodeId {
        self.push(params.get(slot).value.clone(), Op::Param { slot })
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.value(a).dims2();
        let (kb, n) = self.value(b).dims2();
        if k != kb {
            return Err(Error::shape(
                "matmul",
                format!("inner dimensions disagree: [{m}x{k}] x [{kb}x{n}]"),
            ));
        }
        let out = matmul_nn(self.value(a), self.value(b));
        Ok(self.push(out, Op::Matmul { a, b }))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.value(a).dims2();
        let src = self.value(a);
        let mut out = Tensor::zeros(vec![c, r]);
        for i in 0..r {
            for j in 0..c {
                out.data_mut()[j * r + i] = src.get(i, j);
            }
        }
        self.push(out, Op::Transpose { a })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(
                "add",
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        Ok(self.push(out, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(
                "sub",
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x - y)
            .collect();
        let out = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(out, Op::Sub { a, b }))
    }

    /// Adds a length-`c` bias to every row of an `[r×c]` matrix.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (_, c) = self.value(a).dims2();
        if self.value(bias).numel() != c {
            return Err(Error::shape(
                "add_row",
                format!("bias length {} vs {} columns", self.value(bias).numel(), c),
            ));
        }
        let mut out = self.value(a).clone();
        let b = self.value(bias).data().to_vec();
        for row in out.data_mut().chunks_mut(c) {
            for (x, &bv) in row.iter_mut().zip(&b) {
                *x += bv;
            }
        }
        Ok(self.push(out, Op::AddRow { a, bias }))
    }

    pub fn scale(&mut self, a: NodeId, c: T) -> NodeId {
        let data = self.value(a).data().iter().map(|&x| x * c).collect();
        let out = Tensor::new(self.value(a).shape().to_vec(), data).expect("same shape");
        self.push(out, Op::Scale { a, c })
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let data = self
            .value(a)
            .data()
            .iter()
            .map(|&x| if x > T::zero() { x } else { T::zero() })
            .collect();
        let out = Tensor::new(self.value(a).shape().to_vec(), data).expect("same shape");
        self.push(out, Op::Relu { a })
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let data = self.value(a).data().iter().map(|&x| sigmoid(x)).collect();
        let out = Tensor::new(self.value(a).shape().to_vec(), data).expect("same shape");
        self.push(out, Op::Sigmoid { a })
    }

    /// ln(1 + e^x), computed stably.
    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let data = self.value(a).data().iter().map(|&x| softplus(x)).collect();
        let out = Tensor::new(self.value(a).shape().to_vec(), data).expect("same shape");
        self.push(out, Op::Softplus { a })
    }

    /// Row-wise softmax with max-shift; rows sum to 1.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.value(a).dims2();
        let mut out = Tensor::zeros(vec![r, c]);
        for i in 0..r {
            let row = self.value(a).row(i);
            let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
            let mut denom = 0.0f64;
            let orow = &mut out.data_mut()[i * c..(i + 1) * c];
            for (o, &x) in orow.iter_mut().zip(row) {
                let e = (x - max).exp();
                denom += e.as_f64();
                *o = e;
            }
            let inv = T::from_f64(1.0 / denom);
            for o in orow.iter_mut() {
                *o = *o * inv;
            }
        }
        self.push(out, Op::SoftmaxRows { a })
    }

    /// Per-row standardization over the last dimension, then affine.
    pub fn layer_norm(&mut self, a: NodeId, gain: NodeId, bias: NodeId, eps: f64) -> Result<NodeId> {
        let (r, c) = self.value(a).dims2();
        if self.value(gain).numel() != c || self.value(bias).numel() != c {
            return Err(Error::shape(
                "layer_norm",
                format!(
                    "gain/bias lengths {}/{} vs {} columns",
                    self.value(gain).numel(),
                    self.value(bias).numel(),
                    c
                ),
            ));
        }
        if eps < 0.0 {
            return Err(Error::config(format!("layer_norm eps must be >= 0, got {eps}")));
        }
        let g = self.value(gain).data().to_vec();
        let b = self.value(bias).data().to_vec();
        let mut out = Tensor::zeros(vec![r, c]);
        for i in 0..r {
            let row = self.value(a).row(i);
            let (mean, inv_sigma) = row_moments(row, eps);
            let orow = &mut out.data_mut()[i * c..(i + 1) * c];
            for j in 0..c {
                let xhat = (row[j] - mean) * inv_sigma;
                orow[j] = xhat * g[j] + b[j];
            }
        }
        Ok(self.push(out, Op::LayerNorm { a, gain, bias, eps }))
    }

    /// Means over consecutive blocks of `group` rows:
    /// `[(g·group)×c] -> [g×c]`.
    pub fn mean_pool_rows(&mut self, a: NodeId, group: usize) -> Result<NodeId> {
        let (r, c) = self.value(a).dims2();
        if group == 0 || r % group != 0 {
            return Err(Error::shape(
                "mean_pool_rows",
                format!("{r} rows not divisible into groups of {group}"),
            ));
        }
        let groups = r / group;
        let mut out = Tensor::zeros(vec![groups, c]);
        for gidx in 0..groups {
            for j in 0..c {
                let mut acc = 0.0f64;
                for i in 0..group {
                    acc += self.value(a).get(gidx * group + i, j).as_f64();
                }
                out.data_mut()[gidx * c + j] = T::from_f64(acc / group as f64);
            }
        }
        Ok(self.push(out, Op::MeanPoolRows { a, group }))
    }

    /// Vertical tiling: stacks `times` copies of the input rows.
    pub fn repeat_rows(&mut self, a: NodeId, times: usize) -> NodeId {
        let (r, c) = self.value(a).dims2();
        let src = self.value(a).data().to_vec();
        let mut data = Vec::with_capacity(r * c * times);
        for _ in 0..times {
            data.extend_from_slice(&src);
        }
        let out = Tensor::new(vec![r * times, c], data).expect("tile shape");
        self.push(out, Op::RepeatRows { a, times })
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (r, c) = self.value(a).dims2();
        if start + len > c {
            return Err(Error::shape(
                "slice_cols",
                format!("slice {start}..{} exceeds {c} columns", start + len),
            ));
        }
        let mut out = Tensor::zeros(vec![r, len]);
        for i in 0..r {
            let row = &self.value(a).row(i)[start..start + len];
            out.data_mut()[i * len..(i + 1) * len].copy_from_slice(row);
        }
        Ok(self.push(out, Op::SliceCols { a, start, len }))
    }

    pub fn concat_cols(&mut self, inputs: &[NodeId]) -> Result<NodeId> {
        if inputs.is_empty() {
            return Err(Error::shape("concat_cols", "no inputs".to_string()));
        }
        let r = self.value(inputs[0]).rows();
        let mut total = 0;
        for &id in inputs {
            if self.value(id).rows() != r {
                return Err(Error::shape(
                    "concat_cols",
                    format!("row counts differ: {} vs {}", self.value(id).rows(), r),
                ));
            }
            total += self.value(id).cols();
        }
        let mut out = Tensor::zeros(vec![r, total]);
        for i in 0..r {
            let mut offset = 0;
            for &id in inputs {
                let c = self.value(id).cols();
                out.data_mut()[i * total + offset..i * total + offset + c]
                    .copy_from_slice(self.value(id).row(i));
                offset += c;
            }
        }
        Ok(self.push(out, Op::ConcatCols { inputs: inputs.to_vec() }))
    }

    pub fn reshape(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let out = self.value(a).reshaped(shape)?;
        Ok(self.push(out, Op::Reshape { a }))
    }

    /// Extracts a single element (by flat index) as a scalar node.
    pub fn pick(&mut self, a: NodeId, index: usize) -> Result<NodeId> {
        if index >= self.value(a).numel() {
            return Err(Error::shape(
                "pick",
                format!("index {index} out of {} elements", self.value(a).numel()),
            ));
        }
        let v = self.value(a).data()[index];
        Ok(self.push(Tensor::scalar(v), Op::Pick { a, index }))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let acc: f64 = self.value(a).data().iter().map(|v| v.as_f64()).sum();
        self.push(Tensor::scalar(T::from_f64(acc)), Op::SumAll { a })
    }

    /// Mean squared error against a constant target; scalar output.
    pub fn mse_loss(&mut self, pred: NodeId, target: Tensor<T>) -> Result<NodeId> {
        if self.value(pred).shape() != target.shape() {
            return Err(Error::shape(
                "mse_loss",
                format!("{:?} vs {:?}", self.value(pred).shape(), target.shape()),
            ));
        }
        let n = target.numel() as f64;
        let acc: f64 = self
            .value(pred)
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| {
                let d = (p - t).as_f64();
                d * d
            })
            .sum();
        let out = Tensor::scalar(T::from_f64(acc / n));
        Ok(self.push(out, Op::MseLoss { pred, target }))
    }

    /// Errors if the node holds any non-finite value; `context` names the
    /// layer for diagnostics.
    pub fn check_finite(&self, id: NodeId, context: &str) -> Result<()> {
        if self.value(id).all_finite() {
            Ok(())
        } else {
            Err(Error::non_finite(context.to_string()))
        }
    }

    /// Reverse sweep from a scalar loss. Consumes the tape (records are
    /// single-use) and accumulates parameter gradients into `params`.
    pub fn backward(self, loss: NodeId, params: &mut ParamSet<T>) -> Result<()> {
        if self.nodes[loss.0].value.numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.nodes[loss.0].value.shape()),
            ));
        }
        if !self.nodes[loss.0].value.all_finite() {
            return Err(Error::non_finite("loss".to_string()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Const => {}
                Op::Param { slot } => {
                    if !g.all_finite() {
                        return Err(Error::non_finite(format!(
                            "gradient of parameter `{}`",
                            params.get(*slot).name
                        )));
                    }
                    params.get_mut(*slot).grad.add_assign(&g);
                }
                Op::Matmul { a, b } => {
                    let da = matmul_nt(&g, &self.nodes[b.0].value);
                    let db = matmul_tn(&self.nodes[a.0].value, &g);
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *b, db);
                }
                Op::Transpose { a } => {
                    let (r, c) = g.dims2();
                    let mut da = Tensor::zeros(vec![c, r]);
                    for i in 0..r {
                        for j in 0..c {
                            da.data_mut()[j * r + i] = g.get(i, j);
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub { a, b } => {
                    let neg = map_tensor(&g, |x| -x);
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *b, neg);
                }
                Op::AddRow { a, bias } => {
                    let c = g.cols();
                    let mut db = Tensor::zeros(self.nodes[bias.0].value.shape().to_vec());
                    for row in g.data().chunks(c) {
                        for (acc, &x) in db.data_mut().iter_mut().zip(row) {
                            *acc += x;
                        }
                    }
                    accumulate(&mut grads, *a, g);
                    accumulate(&mut grads, *bias, db);
                }
                Op::Scale { a, c } => {
                    let cc = *c;
                    accumulate(&mut grads, *a, map_tensor(&g, |x| x * cc));
                }
                Op::Relu { a } => {
                    let da = zip_tensor(&g, &self.nodes[a.0].value, |gx, x| {
                        if x > T::zero() {
                            gx
                        } else {
                            T::zero()
                        }
                    });
                    accumulate(&mut grads, *a, da);
                }
                Op::Sigmoid { a } => {
                    let da = zip_tensor(&g, &node.value, |gx, y| gx * y * (T::one() - y));
                    accumulate(&mut grads, *a, da);
                }
                Op::Softplus { a } => {
                    let da = zip_tensor(&g, &self.nodes[a.0].value, |gx, x| gx * sigmoid(x));
                    accumulate(&mut grads, *a, da);
                }
                Op::SoftmaxRows { a } => {
                    let (r, c) = node.value.dims2();
                    let mut da = Tensor::zeros(vec![r, c]);
                    for i in 0..r {
                        let y = node.value.row(i);
                        let grow = g.row(i);
                        let dot: f64 = y
                            .iter()
                            .zip(grow)
                            .map(|(&yv, &gv)| (yv * gv).as_f64())
                            .sum();
                        let dot = T::from_f64(dot);
                        let drow = &mut da.data_mut()[i * c..(i + 1) * c];
                        for j in 0..c {
                            drow[j] = y[j] * (grow[j] - dot);
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::LayerNorm { a, gain, bias, eps } => {
                    let x = &self.nodes[a.0].value;
                    let (r, c) = x.dims2();
                    let gv = self.nodes[gain.0].value.data().to_vec();
                    let mut da = Tensor::zeros(vec![r, c]);
                    let mut dgain = Tensor::zeros(self.nodes[gain.0].value.shape().to_vec());
                    let mut dbias = Tensor::zeros(self.nodes[bias.0].value.shape().to_vec());
                    for i in 0..r {
                        let row = x.row(i);
                        let (mean, inv_sigma) = row_moments(row, *eps);
                        let grow = g.row(i);
                        // h = g .* gain; need mean(h) and mean(h .* xhat)
                        let mut mh = 0.0f64;
                        let mut mhx = 0.0f64;
                        let mut xhat = vec![T::zero(); c];
                        for j in 0..c {
                            let xh = (row[j] - mean) * inv_sigma;
                            xhat[j] = xh;
                            let h = (grow[j] * gv[j]).as_f64();
                            mh += h;
                            mhx += h * xh.as_f64();
                        }
                        mh /= c as f64;
                        mhx /= c as f64;
                        let mh = T::from_f64(mh);
                        let mhx = T::from_f64(mhx);
                        let drow = &mut da.data_mut()[i * c..(i + 1) * c];
                        for j in 0..c {
                            let h = grow[j] * gv[j];
                            drow[j] = (h - mh - xhat[j] * mhx) * inv_sigma;
                            dgain.data_mut()[j] += grow[j] * xhat[j];
                            dbias.data_mut()[j] += grow[j];
                        }
                    }
                    accumulate(&mut grads, *a, da);
                    accumulate(&mut grads, *gain, dgain);
                    accumulate(&mut grads, *bias, dbias);
                }
                Op::MeanPoolRows { a, group } => {
                    let (r_in, c) = self.nodes[a.0].value.dims2();
                    let inv = T::from_f64(1.0 / *group as f64);
                    let mut da = Tensor::zeros(vec![r_in, c]);
                    for gidx in 0..g.rows() {
                        let grow = g.row(gidx);
                        for i in 0..*group {
                            let drow = &mut da.data_mut()
                                [(gidx * group + i) * c..(gidx * group + i + 1) * c];
                            for (d, &gv) in drow.iter_mut().zip(grow) {
                                *d += gv * inv;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::RepeatRows { a, times } => {
                    let (r, c) = self.nodes[a.0].value.dims2();
                    let mut da = Tensor::zeros(vec![r, c]);
                    for t in 0..*times {
                        for i in 0..r {
                            let grow = g.row(t * r + i);
                            let drow = &mut da.data_mut()[i * c..(i + 1) * c];
                            for (d, &gv) in drow.iter_mut().zip(grow) {
                                *d += gv;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::SliceCols { a, start, len } => {
                    let (r, c) = self.nodes[a.0].value.dims2();
                    let mut da = Tensor::zeros(vec![r, c]);
                    for i in 0..r {
                        let grow = g.row(i);
                        let drow = &mut da.data_mut()[i * c + start..i * c + start + len];
                        drow.copy_from_slice(grow);
                    }
                    accumulate(&mut grads, *a, da);
                }
                Op::ConcatCols { inputs } => {
                    let mut offset = 0;
                    for &inp in inputs {
                        let (r, c) = self.nodes[inp.0].value.dims2();
                        let mut da = Tensor::zeros(vec![r, c]);
                        let total = g.cols();
                        for i in 0..r {
                            da.data_mut()[i * c..(i + 1) * c]
                                .copy_from_slice(&g.data()[i * total + offset..i * total + offset + c]);
                        }
                        offset += c;
                        accumulate(&mut grads, inp, da);
                    }
                }
                Op::Reshape { a } => {
                    let da = g
                        .reshaped(self.nodes[a.0].value.shape().to_vec())
                        .expect("reshape preserves element count");
                    accumulate(&mut grads, *a, da);
                }
                Op::Pick { a, index } => {
                    let mut da = Tensor::zeros(self.nodes[a.0].value.shape().to_vec());
                    da.data_mut()[*index] = g.data()[0];
                    accumulate(&mut grads, *a, da);
                }
                Op::SumAll { a } => {
                    let gv = g.data()[0];
                    let da = map_tensor(&self.nodes[a.0].value, |_| gv);
                    accumulate(&mut grads, *a, da);
                }
                Op::MseLoss { pred, target } => {
                    let n = T::from_f64(target.numel() as f64);
                    let two = T::from_f64(2.0);
                    let gv = g.data()[0];
                    let da = zip_tensor(&self.nodes[pred.0].value, target, |p, t| {
                        gv * two * (p - t) / n
                    });
                    accumulate(&mut grads, *pred, da);
                }
            }
        }
        Ok(())
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], id: NodeId, delta: Tensor<T>) {
    match &mut grads[id.0] {
        Some(existing) => existing.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

fn map_tensor<T: Scalar>(t: &Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|&x| f(x)).collect()).expect("same shape")
}

fn zip_tensor<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    debug_assert_eq!(a.numel(), b.numel());
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
    .expect("same shape")
}

/// Row mean and 1/sqrt(var + eps), both accumulated in f64.
fn row_moments<T: Scalar>(row: &[T], eps: f64) -> (T, T) {
    let n = row.len() as f64;
    let mean: f64 = row.iter().map(|v| v.as_f64()).sum::<f64>() / n;
    let var: f64 = row
        .iter()
        .map(|v| {
            let d = v.as_f64() - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    (T::from_f64(mean), T::from_f64(1.0 / (var + eps).sqrt()))
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Xoshiro256pp;

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::<f64>::new();
        let eye = tape.constant(Tensor::from_fn(vec![3, 3], |i| {
            if i / 3 == i % 3 {
                1.0
            } else {
                0.0
            }
        }));
        let a_t = Tensor::new(vec![3, 2], vec![1.0, -2.0, 0.5, 3.0, 7.0, -1.0]).unwrap();
        let a = tape.constant(a_t.clone());
        let out = tape.matmul(eye, a).unwrap();
        assert_eq!(tape.value(out), &a_t);
    }

    #[test]
    fn matmul_hand_arithmetic() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = tape.constant(Tensor::new(vec![2, 1], vec![0.0, 1.0]).unwrap());
        let out = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(out).data(), &[2.0, 4.0]);
    }

    #[test]
    fn matmul_rejects_mismatched_inner_dims() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(vec![2, 3]));
        let b = tape.constant(Tensor::zeros(vec![4, 2]));
        assert!(tape.matmul(a, b).is_err());
    }

    #[test]
    fn matmul_grad_of_sum_is_ones_times_b_transpose() {
        let mut rng = Xoshiro256pp::from_seed(55);
        let mut params = ParamSet::new();
        let a_val = Tensor::from_fn(vec![5, 7], |_| rng.next_f64() * 4.0 - 2.0);
        let b_val = Tensor::from_fn(vec![7, 3], |_| rng.next_f64() * 4.0 - 2.0);
        params.add("a", a_val.clone()).unwrap();
        let mut tape = Tape::new();
        let a = tape.param(&params, 0);
        let b = tape.constant(b_val.clone());
        let prod = tape.matmul(a, b).unwrap();
        let loss = tape.sum_all(prod);
        tape.backward(loss, &mut params).unwrap();
        // d sum(A·B) / dA = ones(5,3) · Bᵀ, i.e. entry (i,l) = sum_j B[l,j]
        for i in 0..5 {
            for l in 0..7 {
                let expect: f64 = (0..3).map(|j| b_val.get(l, j)).sum();
                let got = params.get(0).grad.get(i, l);
                assert!((got - expect).abs() < 1e-10, "({i},{l}): {got} vs {expect}");
            }
        }
    }

    #[test]
    fn layer_norm_two_point_row() {
        // Row [1, 3]: mean 2, population std 1, so the normalized row is
        // [-1, 1] with unit gain, zero bias, eps = 0.
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::new(vec![1, 2], vec![1.0, 3.0]).unwrap());
        let gain = tape.constant(Tensor::new(vec![2], vec![1.0, 1.0]).unwrap());
        let bias = tape.constant(Tensor::new(vec![2], vec![0.0, 0.0]).unwrap());
        let out = tape.layer_norm(x, gain, bias, 0.0).unwrap();
        assert!((tape.value(out).data()[0] + 1.0).abs() < 1e-12);
        assert!((tape.value(out).data()[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_constant_row_yields_bias() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::new(vec![1, 3], vec![4.2, 4.2, 4.2]).unwrap());
        let gain = tape.constant(Tensor::new(vec![3], vec![2.0, 3.0, 4.0]).unwrap());
        let bias = tape.constant(Tensor::new(vec![3], vec![-1.0, 0.5, 9.0]).unwrap());
        let out = tape.layer_norm(x, gain, bias, 1e-5).unwrap();
        for (got, want) in tape.value(out).data().iter().zip([-1.0, 0.5, 9.0]) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn layer_norm_rows_standardized_before_affine() {
        let mut rng = Xoshiro256pp::from_seed(66);
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_fn(vec![4, 8], |_| rng.next_f64() * 6.0 - 3.0));
        let gain = tape.constant(Tensor::new(vec![8], vec![1.0; 8]).unwrap());
        let bias = tape.constant(Tensor::new(vec![8], vec![0.0; 8]).unwrap());
        let out = tape.layer_norm(x, gain, bias, 1e-9).unwrap();
        for i in 0..4 {
            let row = tape.value(out).row(i);
            let mean: f64 = row.iter().sum::<f64>() / 8.0;
            let var: f64 = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-5, "row {i} mean {mean}");
            assert!((var - 1.0).abs() < 1e-5, "row {i} var {var}");
        }
    }

    #[test]
    fn backward_of_sum_of_squares_is_two_x() {
        let mut params = ParamSet::new();
        let x_val = Tensor::<f64>::new(vec![4], vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        params.add("x", x_val.clone()).unwrap();
        let mut tape = Tape::new();
        let x = tape.param(&params, 0);
        let target = Tensor::zeros(vec![4]);
        // sum(x_i^2) = 4 * mse(x, 0)
        let mse = tape.mse_loss(x, target).unwrap();
        let loss = tape.scale(mse, 4.0);
        tape.backward(loss, &mut params).unwrap();
        for (&g, &x) in params.get(0).grad.data().iter().zip(x_val.data()) {
            assert!((g - 2.0 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_sigmoid_dot_at_zero_weights() {
        // loss = sigmoid(w · x) with w = 0: d loss / d w = 0.25 * x.
        let x_val = Tensor::<f64>::new(vec![3, 1], vec![0.7, -1.2, 2.0]).unwrap();
        let mut params = ParamSet::new();
        params.add("w", Tensor::zeros(vec![1, 3])).unwrap();
        let mut tape = Tape::new();
        let w = tape.param(&params, 0);
        let x = tape.constant(x_val.clone());
        let dot = tape.matmul(w, x).unwrap();
        let loss = tape.sigmoid(dot);
        tape.backward(loss, &mut params).unwrap();
        for (&g, &x) in params.get(0).grad.data().iter().zip(x_val.data()) {
            assert!((g - 0.25 * x).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut params = ParamSet::<f64>::new();
        params.add("w", Tensor::zeros(vec![2])).unwrap();
        let mut tape = Tape::new();
        let w = tape.param(&params, 0);
        let y = tape.relu(w);
        assert!(tape.backward(y, &mut params).is_err());
    }

    #[test]
    fn gradients_accumulate_until_zeroed() {
        let mut params = ParamSet::new();
        params.add("x", Tensor::<f64>::new(vec![2], vec![1.0, 2.0]).unwrap()).unwrap();
        for pass in 1..=3u32 {
            let mut tape = Tape::new();
            let x = tape.param(&params, 0);
            let loss = tape.sum_all(x);
            tape.backward(loss, &mut params).unwrap();
            for &g in params.get(0).grad.data() {
                assert_eq!(g, pass as f64);
            }
        }
        params.zero_grad();
        assert!(params.get(0).grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn non_finite_loss_is_rejected() {
        let mut params = ParamSet::new();
        params.add("x", Tensor::<f64>::new(vec![1], vec![0.0]).unwrap()).unwrap();
        let mut tape = Tape::new();
        let x = tape.param(&params, 0);
        let inf = tape.constant(Tensor::scalar(f64::INFINITY));
        let loss = tape.add(x, inf).unwrap();
        assert!(matches!(
            tape.backward(loss, &mut params),
            Err(crate::Error::NonFinite { .. })
        ));
    }

    #[test]
    fn softmax_rows_are_simplex_points() {
        let mut rng = Xoshiro256pp::from_seed(77);
        for _ in 0..20 {
            let r = rng.next_below(6) as usize + 1;
            let c = rng.next_below(8) as usize + 1;
            let mut tape = Tape::<f64>::new();
            let x = tape.constant(Tensor::from_fn(vec![r, c], |_| rng.next_f64() * 40.0 - 20.0));
            let y = tape.softmax_rows(x);
            for i in 0..r {
                let row = tape.value(y).row(i);
                assert!(row.iter().all(|&p| p >= 0.0));
                let sum: f64 = row.iter().sum();
                assert!((sum - 1.0).abs() < 1e-6);
            }
        }
    }
}
