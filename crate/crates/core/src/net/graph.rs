//! Reverse-mode automatic differentiation over a flat tape.
//!
//! Every operation is fused (forward and its hand-written adjoint live side
//! by side), so the tape stays short even for attention and normalization.

use std::collections::HashMap;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type NodeId = usize;

const LAYER_NORM_EPS: f64 = 1e-6;
const GROUP_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Conv {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: usize,
        pad: usize,
    },
    Depthwise {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        pad: usize,
    },
    Pointwise {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    LayerNorm {
        x: NodeId,
        g: NodeId,
        b: NodeId,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    GroupNorm {
        x: NodeId,
        g: NodeId,
        b: NodeId,
        groups: usize,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Gelu {
        x: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    ScaleBy {
        x: NodeId,
        s: NodeId,
    },
    MulConst {
        x: NodeId,
        c: T,
    },
    Concat {
        a: NodeId,
        b: NodeId,
    },
    Attention {
        q: NodeId,
        k: NodeId,
        v: NodeId,
        heads: usize,
        probs: Vec<T>,
    },
    Focal {
        z: NodeId,
        target: Vec<bool>,
        gamma: T,
        alpha: T,
    },
    Dice {
        z: NodeId,
        target: Vec<bool>,
        eps: T,
    },
    WeightedSum {
        terms: Vec<(NodeId, T)>,
    },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Computation tape. Nodes are appended in evaluation order, so a node's
/// inputs always have smaller ids.
#[derive(Debug, Clone, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<String, NodeId>,
    trainable: Vec<(String, NodeId)>,
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::ShapeMismatch { op, detail }
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

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn gelu_parts<T: Scalar>(x: T) -> (T, T) {
    let k0 = T::of((2.0 / std::f64::consts::PI).sqrt());
    let k1 = T::of(0.044715);
    let half = T::of(0.5);
    let u = k0 * (x + k1 * x * x * x);
    let t = u.tanh();
    let y = half * x * (T::one() + t);
    let dy = half * (T::one() + t) + half * x * (T::one() - t * t) * k0 * (T::one() + T::of(3.0) * k1 * x * x);
    (y, dy)
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            trainable: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[NodeId]) -> NodeId {
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        self.nodes.len() - 1
    }

    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        self.nodes.len() - 1
    }

    /// Named leaf. Repeated calls with the same name return the same node, so
    /// gradients from every use accumulate in one place.
    pub fn param(&mut self, name: &str, value: &Tensor<T>, trainable: bool) -> NodeId {
        if let Some(&id) = self.params.get(name) {
            return id;
        }
        self.nodes.push(Node {
            value: value.clone(),
            op: Op::Leaf,
            needs_grad: trainable,
        });
        let id = self.nodes.len() - 1;
        self.params.insert(name.to_string(), id);
        if trainable {
            self.trainable.push((name.to_string(), id));
        }
        id
    }

    fn dims3(&self, id: NodeId, op: &'static str) -> Result<(usize, usize, usize)> {
        match self.value(id).shape() {
            &[c, h, w] => Ok((c, h, w)),
            s => Err(shape_err(op, format!("expected a [C, H, W] tensor, got {s:?}"))),
        }
    }

    fn check_bias(&self, b: Option<NodeId>, n: usize, op: &'static str) -> Result<()> {
        if let Some(b) = b {
            if self.value(b).len() != n {
                return Err(shape_err(op, format!("bias has {} values, expected {n}", self.value(b).len())));
            }
        }
        Ok(())
    }

    /// Cross-correlation with a `[C_out, C_in, k, k]` kernel.
    pub fn conv2d(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>, stride: usize, pad: usize) -> Result<NodeId> {
        let (cin, h, wd) = self.dims3(x, "conv2d")?;
        let (cout, k) = match self.value(w).shape() {
            &[co, ci, k1, k2] if ci == cin && k1 == k2 => (co, k1),
            s => return Err(shape_err("conv2d", format!("kernel {s:?} does not fit {cin} input channels"))),
        };
        self.check_bias(b, cout, "conv2d")?;
        if stride == 0 || h + 2 * pad < k || wd + 2 * pad < k {
            return Err(shape_err("conv2d", format!("kernel {k} stride {stride} on {h}x{wd}")));
        }
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut out = vec![T::zero(); cout * ho * wo];
        for co in 0..cout {
            let o = &mut out[co * ho * wo..(co + 1) * ho * wo];
            if let Some(b) = b {
                o.fill(self.value(b).data()[co]);
            }
            for ci in 0..cin {
                let xc = &xv[ci * h * wd..(ci + 1) * h * wd];
                for ky in 0..k {
                    for kx in 0..k {
                        let wk = wv[((co * cin + ci) * k + ky) * k + kx];
                        for oy in 0..ho {
                            let iy = (oy * stride + ky) as i64 - pad as i64;
                            if iy < 0 || iy >= h as i64 {
                                continue;
                            }
                            let row = &xc[iy as usize * wd..(iy as usize + 1) * wd];
                            let orow = &mut o[oy * wo..(oy + 1) * wo];
                            for (ox, ov) in orow.iter_mut().enumerate() {
                                let ix = (ox * stride + kx) as i64 - pad as i64;
                                if ix >= 0 && ix < wd as i64 {
                                    *ov += wk * row[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![cout, ho, wo], out)?;
        let inputs: Vec<NodeId> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(value, Op::Conv { x, w, b, stride, pad }, &inputs))
    }

    /// Per-channel cross-correlation with a `[C, 1, k, k]` kernel, stride 1.
    pub fn depthwise(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>, pad: usize) -> Result<NodeId> {
        let (c, h, wd) = self.dims3(x, "depthwise")?;
        let k = match self.value(w).shape() {
            &[cc, 1, k1, k2] if cc == c && k1 == k2 && k1 == 2 * pad + 1 => k1,
            s => return Err(shape_err("depthwise", format!("kernel {s:?} for {c} channels, pad {pad}"))),
        };
        self.check_bias(b, c, "depthwise")?;
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let mut out = vec![T::zero(); c * h * wd];
        for ch in 0..c {
            let o = &mut out[ch * h * wd..(ch + 1) * h * wd];
            if let Some(b) = b {
                o.fill(self.value(b).data()[ch]);
            }
            let xc = &xv[ch * h * wd..(ch + 1) * h * wd];
            for ky in 0..k {
                for kx in 0..k {
                    let wk = wv[(ch * k + ky) * k + kx];
                    for oy in 0..h {
                        let iy = (oy + ky) as i64 - pad as i64;
                        if iy < 0 || iy >= h as i64 {
                            continue;
                        }
                        for ox in 0..wd {
                            let ix = (ox + kx) as i64 - pad as i64;
                            if ix >= 0 && ix < wd as i64 {
                                o[oy * wd + ox] += wk * xc[iy as usize * wd + ix as usize];
                            }
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![c, h, wd], out)?;
        let inputs: Vec<NodeId> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(value, Op::Depthwise { x, w, b, pad }, &inputs))
    }

    /// Channel mixing `W x + b` at every position; `W` is `[C_out, C_in]`.
    pub fn pointwise(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let xt = self.value(x);
        let (cin, n) = (xt.channels(), xt.positions());
        let cout = match self.value(w).shape() {
            &[co, ci] if ci == cin => co,
            s => return Err(shape_err("pointwise", format!("weight {s:?} for {cin} input channels"))),
        };
        self.check_bias(b, cout, "pointwise")?;
        let xv = xt.data();
        let wv = self.value(w).data();
        let mut out = vec![T::zero(); cout * n];
        for co in 0..cout {
            let o = &mut out[co * n..(co + 1) * n];
            if let Some(b) = b {
                o.fill(self.value(b).data()[co]);
            }
            for ci in 0..cin {
                let wk = wv[co * cin + ci];
                for (ov, &xv) in o.iter_mut().zip(&xv[ci * n..(ci + 1) * n]) {
                    *ov += wk * xv;
                }
            }
        }
        let mut shape = xt.shape().to_vec();
        if shape.is_empty() {
            shape.push(cout);
        } else {
            shape[0] = cout;
        }
        let value = Tensor::new(shape, out)?;
        let inputs: Vec<NodeId> = [Some(x), Some(w), b].into_iter().flatten().collect();
        Ok(self.push(value, Op::Pointwise { x, w, b }, &inputs))
    }

    /// Normalizes across channels at each position (LayerNorm2d).
    pub fn layer_norm(&mut self, x: NodeId, g: NodeId, b: NodeId) -> Result<NodeId> {
        let xt = self.value(x);
        let (c, n) = (xt.channels(), xt.positions());
        if self.value(g).len() != c || self.value(b).len() != c {
            return Err(shape_err("layer_norm", format!("affine params do not match {c} channels")));
        }
        let xv = xt.data();
        let (gv, bv) = (self.value(g).data(), self.value(b).data());
        let cf = T::of(c as f64);
        let eps = T::of(LAYER_NORM_EPS);
        let mut xhat = vec![T::zero(); c * n];
        let mut rstd = vec![T::zero(); n];
        let mut out = vec![T::zero(); c * n];
        for p in 0..n {
            let mean = (0..c).map(|ch| xv[ch * n + p]).sum::<T>() / cf;
            let var = (0..c).map(|ch| (xv[ch * n + p] - mean).powi(2)).sum::<T>() / cf;
            let r = T::one() / (var + eps).sqrt();
            rstd[p] = r;
            for ch in 0..c {
                let xh = (xv[ch * n + p] - mean) * r;
                xhat[ch * n + p] = xh;
                out[ch * n + p] = gv[ch] * xh + bv[ch];
            }
        }
        let value = Tensor::new(xt.shape().to_vec(), out)?;
        Ok(self.push(value, Op::LayerNorm { x, g, b, xhat, rstd }, &[x, g, b]))
    }

    /// Normalizes over groups of consecutive channels and all positions.
    pub fn group_norm(&mut self, x: NodeId, g: NodeId, b: NodeId, groups: usize) -> Result<NodeId> {
        let xt = self.value(x);
        let (c, n) = (xt.channels(), xt.positions());
        if groups == 0 || c % groups != 0 {
            return Err(shape_err("group_norm", format!("{c} channels not divisible into {groups} groups")));
        }
        if self.value(g).len() != c || self.value(b).len() != c {
            return Err(shape_err("group_norm", format!("affine params do not match {c} channels")));
        }
        let xv = xt.data();
        let (gv, bv) = (self.value(g).data(), self.value(b).data());
        let cpg = c / groups;
        let m = cpg * n;
        let mf = T::of(m as f64);
        let eps = T::of(GROUP_NORM_EPS);
        let mut xhat = vec![T::zero(); c * n];
        let mut rstd = vec![T::zero(); groups];
        let mut out = vec![T::zero(); c * n];
        for gi in 0..groups {
            let block = gi * m..(gi + 1) * m;
            let mean = xv[block.clone()].iter().copied().sum::<T>() / mf;
            let var = xv[block.clone()].iter().map(|&v| (v - mean).powi(2)).sum::<T>() / mf;
            let r = T::one() / (var + eps).sqrt();
            rstd[gi] = r;
            for i in block {
                let ch = i / n;
                let xh = (xv[i] - mean) * r;
                xhat[i] = xh;
                out[i] = gv[ch] * xh + bv[ch];
            }
        }
        let value = Tensor::new(xt.shape().to_vec(), out)?;
        Ok(self.push(
            value,
            Op::GroupNorm {
                x,
                g,
                b,
                groups,
                xhat,
                rstd,
            },
            &[x, g, b],
        ))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| gelu_parts(v).0);
        self.push(value, Op::Gelu { x }, &[x])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.value(a).same_shape(self.value(b), "add")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&p, &q)| p + q)
            .collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data)?;
        Ok(self.push(value, Op::Add { a, b }, &[a, b]))
    }

    /// Multiplies `x` by the single value held in node `s`.
    pub fn scale_by(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        if self.value(s).len() != 1 {
            return Err(shape_err("scale_by", format!("scale has shape {:?}", self.value(s).shape())));
        }
        let sv = self.value(s).item();
        let value = self.value(x).map(|v| sv * v);
        Ok(self.push(value, Op::ScaleBy { x, s }, &[x, s]))
    }

    pub fn mul_const(&mut self, x: NodeId, c: T) -> NodeId {
        let value = self.value(x).map(|v| c * v);
        self.push(value, Op::MulConst { x, c }, &[x])
    }

    /// Stacks two tensors along the channel axis.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() < 2 || ta.shape()[1..] != tb.shape()[1..] {
            return Err(shape_err("concat", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let mut shape = ta.shape().to_vec();
        shape[0] += tb.channels();
        let data = ta.data().iter().chain(tb.data()).copied().collect();
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::Concat { a, b }, &[a, b]))
    }

    /// Multi-head scaled dot-product attention. `q` is `[D, N_q, ..]`, `k`
    /// and `v` are `[D, N_k, ..]`; the result has the shape of `q`.
    pub fn attention(&mut self, q: NodeId, k: NodeId, v: NodeId, heads: usize) -> Result<NodeId> {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        let d = tq.channels();
        let (nq, nk) = (tq.positions(), tk.positions());
        if tk.channels() != d || tv.channels() != d || tv.positions() != nk {
            return Err(shape_err(
                "attention",
                format!("q {:?}, k {:?}, v {:?}", tq.shape(), tk.shape(), tv.shape()),
            ));
        }
        if heads == 0 || d % heads != 0 {
            return Err(shape_err("attention", format!("{d} channels over {heads} heads")));
        }
        let dh = d / heads;
        let scale = T::one() / T::of(dh as f64).sqrt();
        let (qv, kv, vv) = (tq.data(), tk.data(), tv.data());
        let mut probs = vec![T::zero(); heads * nq * nk];
        let mut out = vec![T::zero(); d * nq];
        let mut qrow = vec![T::zero(); dh];
        for h in 0..heads {
            let kt = transpose_head(kv, h, dh, nk);
            let vt = transpose_head(vv, h, dh, nk);
            for i in 0..nq {
                for (dd, qr) in qrow.iter_mut().enumerate() {
                    *qr = qv[(h * dh + dd) * nq + i];
                }
                let p = &mut probs[(h * nq + i) * nk..(h * nq + i + 1) * nk];
                let mut mx = T::neg_infinity();
                for (j, pj) in p.iter_mut().enumerate() {
                    let s = dot(&qrow, &kt[j * dh..(j + 1) * dh]) * scale;
                    *pj = s;
                    mx = mx.max(s);
                }
                let mut z = T::zero();
                for pj in p.iter_mut() {
                    *pj = (*pj - mx).exp();
                    z += *pj;
                }
                for pj in p.iter_mut() {
                    *pj /= z;
                }
                for dd in 0..dh {
                    let mut acc = T::zero();
                    for (j, &pj) in p.iter().enumerate() {
                        acc += pj * vt[j * dh + dd];
                    }
                    out[(h * dh + dd) * nq + i] = acc;
                }
            }
        }
        let value = Tensor::new(tq.shape().to_vec(), out)?;
        Ok(self.push(value, Op::Attention { q, k, v, heads, probs }, &[q, k, v]))
    }

    /// Mean focal loss `-α (1 - p_t)^γ log p_t` over all logits.
    pub fn focal_loss(&mut self, z: NodeId, target: &[bool], gamma: T, alpha: T) -> Result<NodeId> {
        let zt = self.value(z);
        if zt.len() != target.len() || target.is_empty() {
            return Err(shape_err("focal_loss", format!("{} logits vs {} targets", zt.len(), target.len())));
        }
        let mut total = T::zero();
        for (&l, &y) in zt.data().iter().zip(target) {
            let s = if y { l } else { -l };
            let log_pt = -softplus(-s);
            let q = sigmoid(-s);
            total += -alpha * q.powf(gamma) * log_pt;
        }
        let value = Tensor::scalar(total / T::of(target.len() as f64));
        Ok(self.push(
            value,
            Op::Focal {
                z,
                target: target.to_vec(),
                gamma,
                alpha,
            },
            &[z],
        ))
    }

    /// Soft Dice loss `1 - (2 Σ p y + ε) / (Σ p + Σ y + ε)` with `p = σ(z)`.
    pub fn dice_loss(&mut self, z: NodeId, target: &[bool], eps: T) -> Result<NodeId> {
        let zt = self.value(z);
        if zt.len() != target.len() {
            return Err(shape_err("dice_loss", format!("{} logits vs {} targets", zt.len(), target.len())));
        }
        let (inter, sp, sy) = dice_sums(zt.data(), target);
        let den = sp + sy + eps;
        let loss = if den.is_zero() {
            T::zero()
        } else {
            T::one() - (T::of(2.0) * inter + eps) / den
        };
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Dice {
                z,
                target: target.to_vec(),
                eps,
            },
            &[z],
        ))
    }

    /// `Σ c_i x_i` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(NodeId, T)]) -> Result<NodeId> {
        let mut total = T::zero();
        for &(id, c) in terms {
            if self.value(id).len() != 1 {
                return Err(shape_err("weighted_sum", format!("term {:?} is not scalar", self.value(id).shape())));
            }
            total += c * self.value(id).item();
        }
        let ids: Vec<NodeId> = terms.iter().map(|t| t.0).collect();
        Ok(self.push(Tensor::scalar(total), Op::WeightedSum { terms: terms.to_vec() }, &ids))
    }

    /// Gradients of scalar node `root` with respect to every trainable
    /// parameter registered on this tape.
    pub fn backward(&self, root: NodeId) -> Result<HashMap<String, Tensor<T>>> {
        if self.value(root).len() != 1 {
            return Err(shape_err("backward", format!("root has shape {:?}", self.value(root).shape())));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; root + 1];
        grads[root] = Some(vec![T::one()]);
        for id in (0..=root).rev() {
            let Some(gy) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(gy);
                continue;
            }
            self.backprop_node(id, &gy, &mut grads);
        }
        let mut out = HashMap::new();
        for (name, id) in &self.trainable {
            let shape = self.value(*id).shape();
            let g = match grads.get_mut(*id).and_then(Option::take) {
                Some(g) => Tensor::new(shape.to_vec(), g)?,
                None => Tensor::zeros(shape),
            };
            if !g.all_finite() {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
            out.insert(name.clone(), g);
        }
        Ok(out)
    }

    fn backprop_node(&self, id: NodeId, gy: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[id];
        let mut acc = |target: NodeId, f: &mut dyn FnMut(&mut [T])| {
            if self.nodes[target].needs_grad {
                let g = grads[target].get_or_insert_with(|| vec![T::zero(); self.nodes[target].value.len()]);
                f(g);
            }
        };
        match &node.op {
            Op::Leaf => {}
            &Op::Conv { x, w, b, stride, pad } => {
                let xt = self.value(x);
                let (cin, h, wd) = (xt.shape()[0], xt.shape()[1], xt.shape()[2]);
                let (cout, ho, wo) = (node.value.shape()[0], node.value.shape()[1], node.value.shape()[2]);
                let k = self.value(w).shape()[2];
                let (xv, wv) = (xt.data(), self.value(w).data());
                let taps = |f: &mut dyn FnMut(usize, usize, usize)| {
                    // (weight index, input index, output index) for every valid tap
                    for co in 0..cout {
                        for ci in 0..cin {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let wi = ((co * cin + ci) * k + ky) * k + kx;
                                    for oy in 0..ho {
                                        let iy = (oy * stride + ky) as i64 - pad as i64;
                                        if iy < 0 || iy >= h as i64 {
                                            continue;
                                        }
                                        for ox in 0..wo {
                                            let ix = (ox * stride + kx) as i64 - pad as i64;
                                            if ix >= 0 && ix < wd as i64 {
                                                f(wi, (ci * h + iy as usize) * wd + ix as usize, (co * ho + oy) * wo + ox);
                                            }
                                        }
                                    }
                                }
                            }
                        }
                    }
                };
                acc(x, &mut |gx| taps(&mut |wi, xi, oi| gx[xi] += wv[wi] * gy[oi]));
                acc(w, &mut |gw| taps(&mut |wi, xi, oi| gw[wi] += xv[xi] * gy[oi]));
                if let Some(b) = b {
                    acc(b, &mut |gb| channel_sums(gy, cout, gb));
                }
            }
            &Op::Depthwise { x, w, b, pad } => {
                let xt = self.value(x);
                let (c, h, wd) = (xt.shape()[0], xt.shape()[1], xt.shape()[2]);
                let k = 2 * pad + 1;
                let (xv, wv) = (xt.data(), self.value(w).data());
                let taps = |f: &mut dyn FnMut(usize, usize, usize)| {
                    for ch in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let wi = (ch * k + ky) * k + kx;
                                for oy in 0..h {
                                    let iy = (oy + ky) as i64 - pad as i64;
                                    if iy < 0 || iy >= h as i64 {
                                        continue;
                                    }
                                    for ox in 0..wd {
                                        let ix = (ox + kx) as i64 - pad as i64;
                                        if ix >= 0 && ix < wd as i64 {
                                            f(wi, (ch * h + iy as usize) * wd + ix as usize, (ch * h + oy) * wd + ox);
                                        }
                                    }
                                }
                            }
                        }
                    }
                };
                acc(x, &mut |gx| taps(&mut |wi, xi, oi| gx[xi] += wv[wi] * gy[oi]));
                acc(w, &mut |gw| taps(&mut |wi, xi, oi| gw[wi] += xv[xi] * gy[oi]));
                if let Some(b) = b {
                    acc(b, &mut |gb| channel_sums(gy, c, gb));
                }
            }
            &Op::Pointwise { x, w, b } => {
                let xt = self.value(x);
                let (cin, n) = (xt.channels(), xt.positions());
                let cout = node.value.channels();
                let (xv, wv) = (xt.data(), self.value(w).data());
                acc(x, &mut |gx| {
                    for co in 0..cout {
                        let go = &gy[co * n..(co + 1) * n];
                        for ci in 0..cin {
                            let wk = wv[co * cin + ci];
                            for (g, &o) in gx[ci * n..(ci + 1) * n].iter_mut().zip(go) {
                                *g += wk * o;
                            }
                        }
                    }
                });
                acc(w, &mut |gw| {
                    for co in 0..cout {
                        let go = &gy[co * n..(co + 1) * n];
                        for ci in 0..cin {
                            gw[co * cin + ci] += dot(go, &xv[ci * n..(ci + 1) * n]);
                        }
                    }
                });
                if let Some(b) = b {
                    acc(b, &mut |gb| channel_sums(gy, cout, gb));
                }
            }
            Op::LayerNorm { x, g, b, xhat, rstd } => {
                let (c, n) = (node.value.channels(), node.value.positions());
                let gv = self.value(*g).data();
                acc(*x, &mut |gx| {
                    let cf = T::of(c as f64);
                    for p in 0..n {
                        let (mut s1, mut s2) = (T::zero(), T::zero());
                        for ch in 0..c {
                            let gh = gy[ch * n + p] * gv[ch];
                            s1 += gh;
                            s2 += gh * xhat[ch * n + p];
                        }
                        for ch in 0..c {
                            let i = ch * n + p;
                            let gh = gy[i] * gv[ch];
                            gx[i] += rstd[p] / cf * (cf * gh - s1 - xhat[i] * s2);
                        }
                    }
                });
                acc(*g, &mut |gg| {
                    for (i, (&o, &xh)) in gy.iter().zip(xhat).enumerate() {
                        gg[i / n] += o * xh;
                    }
                });
                acc(*b, &mut |gb| channel_sums(gy, c, gb));
            }
            Op::GroupNorm {
                x,
                g,
                b,
                groups,
                xhat,
                rstd,
            } => {
                let (c, n) = (node.value.channels(), node.value.positions());
                let gv = self.value(*g).data();
                let m = c / groups * n;
                acc(*x, &mut |gx| {
                    let mf = T::of(m as f64);
                    for gi in 0..*groups {
                        let (mut s1, mut s2) = (T::zero(), T::zero());
                        for i in gi * m..(gi + 1) * m {
                            let gh = gy[i] * gv[i / n];
                            s1 += gh;
                            s2 += gh * xhat[i];
                        }
                        for i in gi * m..(gi + 1) * m {
                            let gh = gy[i] * gv[i / n];
                            gx[i] += rstd[gi] / mf * (mf * gh - s1 - xhat[i] * s2);
                        }
                    }
                });
                acc(*g, &mut |gg| {
                    for (i, (&o, &xh)) in gy.iter().zip(xhat).enumerate() {
                        gg[i / n] += o * xh;
                    }
                });
                acc(*b, &mut |gb| channel_sums(gy, c, gb));
            }
            &Op::Gelu { x } => {
                let xv = self.value(x).data();
                acc(x, &mut |gx| {
                    for ((g, &o), &v) in gx.iter_mut().zip(gy).zip(xv) {
                        *g += o * gelu_parts(v).1;
                    }
                });
            }
            &Op::Add { a, b } => {
                acc(a, &mut |ga| add_into(ga, gy));
                acc(b, &mut |gb| add_into(gb, gy));
            }
            &Op::ScaleBy { x, s } => {
                let sv = self.value(s).item();
                let xv = self.value(x).data();
                acc(x, &mut |gx| {
                    for (g, &o) in gx.iter_mut().zip(gy) {
                        *g += sv * o;
                    }
                });
                acc(s, &mut |gs| gs[0] += dot(gy, xv));
            }
            &Op::MulConst { x, c } => {
                acc(x, &mut |gx| {
                    for (g, &o) in gx.iter_mut().zip(gy) {
                        *g += c * o;
                    }
                });
            }
            &Op::Concat { a, b } => {
                let na = self.value(a).len();
                acc(a, &mut |ga| add_into(ga, &gy[..na]));
                acc(b, &mut |gb| add_into(gb, &gy[na..]));
            }
            Op::Attention { q, k, v, heads, probs } => {
                let (tq, tk, tv) = (self.value(*q), self.value(*k), self.value(*v));
                let d = tq.channels();
                let (nq, nk) = (tq.positions(), tk.positions());
                let dh = d / heads;
                let scale = T::one() / T::of(dh as f64).sqrt();
                let mut gq = vec![T::zero(); d * nq];
                let mut gk = vec![T::zero(); d * nk];
                let mut gv = vec![T::zero(); d * nk];
                let mut gs = vec![T::zero(); nk];
                let mut grow = vec![T::zero(); dh];
                let mut qrow = vec![T::zero(); dh];
                for h in 0..*heads {
                    let kt = transpose_head(tk.data(), h, dh, nk);
                    let vt = transpose_head(tv.data(), h, dh, nk);
                    let mut gkt = vec![T::zero(); nk * dh];
                    let mut gvt = vec![T::zero(); nk * dh];
                    for i in 0..nq {
                        for dd in 0..dh {
                            grow[dd] = gy[(h * dh + dd) * nq + i];
                            qrow[dd] = tq.data()[(h * dh + dd) * nq + i];
                        }
                        let p = &probs[(h * nq + i) * nk..(h * nq + i + 1) * nk];
                        let mut inner = T::zero();
                        for j in 0..nk {
                            let gp = dot(&grow, &vt[j * dh..(j + 1) * dh]);
                            gs[j] = gp;
                            inner += p[j] * gp;
                            for dd in 0..dh {
                                gvt[j * dh + dd] += p[j] * grow[dd];
                            }
                        }
                        for j in 0..nk {
                            let s = p[j] * (gs[j] - inner) * scale;
                            if s.is_zero() {
                                continue;
                            }
                            for dd in 0..dh {
                                gq[(h * dh + dd) * nq + i] += s * kt[j * dh + dd];
                                gkt[j * dh + dd] += s * qrow[dd];
                            }
                        }
                    }
                    for j in 0..nk {
                        for dd in 0..dh {
                            gk[(h * dh + dd) * nk + j] += gkt[j * dh + dd];
                            gv[(h * dh + dd) * nk + j] += gvt[j * dh + dd];
                        }
                    }
                }
                acc(*q, &mut |g| add_into(g, &gq));
                acc(*k, &mut |g| add_into(g, &gk));
                acc(*v, &mut |g| add_into(g, &gv));
            }
            Op::Focal { z, target, gamma, alpha } => {
                let zv = self.value(*z).data();
                let scale = gy[0] / T::of(target.len() as f64);
                acc(*z, &mut |gz| {
                    for ((g, &l), &y) in gz.iter_mut().zip(zv).zip(target) {
                        let s = if y { l } else { -l };
                        let p = sigmoid(s);
                        let q = sigmoid(-s);
                        let log_p = -softplus(-s);
                        let ds = *alpha * q.powf(*gamma) * (*gamma * p * log_p - q);
                        *g += scale * if y { ds } else { -ds };
                    }
                });
            }
            Op::Dice { z, target, eps } => {
                let zv = self.value(*z).data();
                let (inter, sp, sy) = dice_sums(zv, target);
                let den = sp + sy + *eps;
                if den.is_zero() {
                    return;
                }
                let num = T::of(2.0) * inter + *eps;
                acc(*z, &mut |gz| {
                    for ((g, &l), &y) in gz.iter_mut().zip(zv).zip(target) {
                        let p = sigmoid(l);
                        let yv = if y { T::one() } else { T::zero() };
                        let dl_dp = -(T::of(2.0) * yv * den - num) / (den * den);
                        *g += gy[0] * dl_dp * p * (T::one() - p);
                    }
                });
            }
            Op::WeightedSum { terms } => {
                for &(t, c) in terms {
                    acc(t, &mut |g| g[0] += c * gy[0]);
                }
            }
        }
    }
}

fn dice_sums<T: Scalar>(z: &[T], target: &[bool]) -> (T, T, T) {
    let (mut inter, mut sp, mut sy) = (T::zero(), T::zero(), T::zero());
    for (&l, &y) in z.iter().zip(target) {
        let p = sigmoid(l);
        sp += p;
        if y {
            inter += p;
            sy += T::one();
        }
    }
    (inter, sp, sy)
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn channel_sums<T: Scalar>(g: &[T], channels: usize, out: &mut [T]) {
    let n = g.len() / channels;
    for (c, o) in out.iter_mut().enumerate() {
        *o += g[c * n..(c + 1) * n].iter().copied().sum::<T>();
    }
}

/// Rows `h*dh .. (h+1)*dh` of a `[D, N]` buffer as an `[N, dh]` buffer.
fn transpose_head<T: Scalar>(src: &[T], h: usize, dh: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n * dh];
    for dd in 0..dh {
        let row = &src[(h * dh + dd) * n..(h * dh + dd + 1) * n];
        for (j, &v) in row.iter().enumerate() {
            out[j * dh + dd] = v;
        }
    }
    out
}
