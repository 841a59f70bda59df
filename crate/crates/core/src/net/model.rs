//! Forward definitions of the network components, recorded on a [`Graph`].

use super::graph::{Graph, NodeId};
use super::params::{ToyNetParams, Trainable};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ImageGrid, ScribbleMap};
use crate::scalar::Scalar;

/// Module switches for one refinement round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundFlags {
    pub use_sgf: bool,
    pub use_memory: bool,
}

impl Default for RoundFlags {
    fn default() -> Self {
        Self {
            use_sgf: true,
            use_memory: true,
        }
    }
}

/// Prompts available to one round.
#[derive(Debug, Clone, Copy)]
pub struct RoundPrompt<'a> {
    /// Every stroke so far (dense decoder prompt).
    pub accumulated: &'a ScribbleMap,
    /// Only the newest strokes (SGF input).
    pub latest: &'a ScribbleMap,
    /// Previous round's binarized prediction; `None` at the first round.
    pub prev_mask: Option<&'a BinaryMask>,
}

/// Node handles produced by one round.
#[derive(Debug, Clone, Copy)]
pub struct RoundNodes {
    /// `[1, embed_side, embed_side]` mask logits.
    pub logits: NodeId,
    /// Encoded memory for the next round, when memory is in use.
    pub memory: Option<NodeId>,
}

/// A recording session: a tape plus the parameter set it reads from.
pub struct NetGraph<'p, T> {
    pub graph: Graph<T>,
    params: &'p ToyNetParams<T>,
    trainable: Trainable,
}

impl<'p, T: Scalar> NetGraph<'p, T> {
    pub fn new(params: &'p ToyNetParams<T>, trainable: Trainable) -> Self {
        Self {
            graph: Graph::new(),
            params,
            trainable,
        }
    }

    pub fn params(&self) -> &ToyNetParams<T> {
        self.params
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        self.graph.value(id)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> NodeId {
        self.graph.constant(t)
    }

    fn p(&mut self, name: &str) -> Result<NodeId> {
        let t = self.params.get(name)?;
        Ok(self.graph.param(name, t, self.trainable.contains(name)))
    }

    fn d(&self) -> usize {
        self.params.config().embed_dim
    }

    fn side(&self) -> usize {
        self.params.config().embed_side()
    }

    fn check_feature(&self, id: NodeId, what: &str) -> Result<()> {
        let (d, s) = (self.d(), self.side());
        if self.value(id).shape() != [d, s, s] {
            return Err(Error::ShapeMismatch {
                op: "feature map",
                detail: format!("{what} has shape {:?}, expected [{d}, {s}, {s}]", self.value(id).shape()),
            });
        }
        Ok(())
    }

    fn conv_block(&mut self, x: NodeId, prefix: &str, k: usize) -> Result<NodeId> {
        let w = self.p(&format!("{prefix}.conv{k}.w"))?;
        let b = self.p(&format!("{prefix}.conv{k}.b"))?;
        let y = self.graph.conv2d(x, w, Some(b), 2, 0)?;
        let g = self.p(&format!("{prefix}.ln{k}.g"))?;
        let beta = self.p(&format!("{prefix}.ln{k}.b"))?;
        let y = self.graph.layer_norm(y, g, beta)?;
        Ok(self.graph.gelu(y))
    }

    /// Two stride-2 `2x2 conv → LayerNorm → GELU` blocks and a 1x1 projection.
    fn downscale_stack(&mut self, prefix: &str, input: Tensor<T>) -> Result<NodeId> {
        let side = self.params.config().input_side;
        if input.shape()[1..] != [side, side] {
            return Err(Error::ShapeMismatch {
                op: prefix_op(prefix),
                detail: format!("input {:?} is not {side}x{side}", input.shape()),
            });
        }
        let x = self.graph.constant(input);
        let y = self.conv_block(x, prefix, 1)?;
        let y = self.conv_block(y, prefix, 2)?;
        let w = self.p(&format!("{prefix}.proj.w"))?;
        let b = self.p(&format!("{prefix}.proj.b"))?;
        self.graph.pointwise(y, w, Some(b))
    }

    /// Dense scribble embedding `E_S`; `None` stands for the exact zero
    /// embedding of an empty map.
    pub fn scribble_encode(&mut self, s: &ScribbleMap) -> Result<Option<NodeId>> {
        if s.is_empty() {
            return Ok(None);
        }
        let side = self.params.config().input_side;
        let r = s.resize_nearest(side, side);
        let data: Vec<T> = r
            .positive()
            .bits()
            .iter()
            .chain(r.negative().bits())
            .map(|&b| if b { T::one() } else { T::zero() })
            .collect();
        let input = Tensor::new(vec![2, side, side], data)?;
        self.downscale_stack("scribble_encoder", input).map(Some)
    }

    /// Embedding of a previous prediction.
    pub fn mask_encode(&mut self, m: &BinaryMask) -> Result<NodeId> {
        let side = self.params.config().input_side;
        let r = m.resize_nearest(side, side);
        let data = r.bits().iter().map(|&b| if b { T::one() } else { T::zero() }).collect();
        let input = Tensor::new(vec![1, side, side], data)?;
        self.downscale_stack("mask_encoder", input)
    }

    /// Frozen image features `F_img`: a 4x4 stride-4 convolution, GELU and
    /// a 1x1 projection over the image resized to `input_side`.
    pub fn image_encode(&mut self, image: &ImageGrid) -> Result<NodeId> {
        let side = self.params.config().input_side;
        let (w, h) = image.dims();
        if w == 0 || h == 0 {
            return Err(Error::EmptyRegion);
        }
        let mut data = vec![T::zero(); 3 * side * side];
        for y in 0..side {
            let sy = y * h / side;
            for x in 0..side {
                let px = image.get(x * w / side, sy);
                for c in 0..3 {
                    data[(c * side + y) * side + x] = T::of(px[c] as f64 / 255.0);
                }
            }
        }
        let input = self.graph.constant(Tensor::new(vec![3, side, side], data)?);
        let cw = self.p("image_encoder.conv.w")?;
        let cb = self.p("image_encoder.conv.b")?;
        let y = self.graph.conv2d(input, cw, Some(cb), 4, 0)?;
        let y = self.graph.gelu(y);
        let pw = self.p("image_encoder.proj.w")?;
        let pb = self.p("image_encoder.proj.b")?;
        self.graph.pointwise(y, pw, Some(pb))
    }

    /// `W x + enabled · scale · B (A x)` with the base weight untouched.
    pub fn lora_linear(&mut self, x: NodeId, base: &str, adapter: &str) -> Result<NodeId> {
        let w = self.p(base)?;
        let y = self.graph.pointwise(x, w, None)?;
        let scale = self.params.config().lora_scale;
        if !self.params.lora_enabled(adapter) || scale == 0.0 {
            return Ok(y);
        }
        let a = self.p(&format!("{adapter}.a"))?;
        let b = self.p(&format!("{adapter}.b"))?;
        let low = self.graph.pointwise(x, a, None)?;
        let up = self.graph.pointwise(low, b, None)?;
        let up = self.graph.mul_const(up, T::of(scale));
        self.graph.add(y, up)
    }

    /// Spatial gated fusion `F' = F + α · g · SpatialMix(Concat(F, g · E_S))`.
    pub fn sgf_fuse(&mut self, f: NodeId, e_s: Option<NodeId>, gate: bool) -> Result<NodeId> {
        self.check_feature(f, "SGF input")?;
        if let Some(e) = e_s {
            self.check_feature(e, "SGF scribble embedding")?;
        }
        if !gate {
            return Ok(f);
        }
        let e = match e_s {
            Some(e) => e,
            None => {
                let shape = self.value(f).shape().to_vec();
                self.graph.constant(Tensor::zeros(&shape))
            }
        };
        let groups = self.params.config().groupnorm_groups;
        let cat = self.graph.concat(f, e)?;
        let (rw, rb) = (self.p("sgf.reduce.w")?, self.p("sgf.reduce.b")?);
        let y = self.graph.pointwise(cat, rw, Some(rb))?;
        let (g1, b1) = (self.p("sgf.gn1.g")?, self.p("sgf.gn1.b")?);
        let y = self.graph.group_norm(y, g1, b1, groups)?;
        let y = self.graph.gelu(y);
        let (dw, db) = (self.p("sgf.dw.w")?, self.p("sgf.dw.b")?);
        let y = self.graph.depthwise(y, dw, Some(db), 3)?;
        let (pw, pb) = (self.p("sgf.pw.w")?, self.p("sgf.pw.b")?);
        let y = self.graph.pointwise(y, pw, Some(pb))?;
        let (g2, b2) = (self.p("sgf.gn2.g")?, self.p("sgf.gn2.b")?);
        let y = self.graph.group_norm(y, g2, b2, groups)?;
        let mix = self.graph.gelu(y);
        let alpha = self.p("sgf.alpha")?;
        let scaled = self.graph.scale_by(mix, alpha)?;
        self.graph.add(f, scaled)
    }

    /// Residual cross-attention of `F_q` tokens over the memory tokens, or
    /// over the single no-memory embedding when the bank is empty.
    pub fn memory_attention(&mut self, fq: NodeId, memory: Option<NodeId>) -> Result<NodeId> {
        self.check_feature(fq, "memory-attention query")?;
        let src = match memory {
            Some(m) => {
                self.check_feature(m, "memory")?;
                m
            }
            None => self.p("mem_attn.no_mem")?,
        };
        let q = self.lora_linear(fq, "mem_attn.wq", "mem_attn.lora_q")?;
        let wk = self.p("mem_attn.wk")?;
        let k = self.graph.pointwise(src, wk, None)?;
        let v = self.lora_linear(src, "mem_attn.wv", "mem_attn.lora_v")?;
        let heads = self.params.config().attn_heads;
        let a = self.graph.attention(q, k, v, heads)?;
        let (wo, bo) = (self.p("mem_attn.wo")?, self.p("mem_attn.bo")?);
        let o = self.graph.pointwise(a, wo, Some(bo))?;
        self.graph.add(fq, o)
    }

    /// Self-attention block over `F_mem + E_dense` and a two-layer pointwise
    /// head producing `[1, s, s]` logits.
    pub fn mask_decode(&mut self, fmem: NodeId, dense: Option<NodeId>) -> Result<NodeId> {
        self.check_feature(fmem, "decoder input")?;
        let x = match dense {
            Some(e) => {
                self.check_feature(e, "dense prompt")?;
                self.graph.add(fmem, e)?
            }
            None => fmem,
        };
        let q = self.lora_linear(x, "decoder.attn.wq", "decoder.lora_q")?;
        let wk = self.p("decoder.attn.wk")?;
        let k = self.graph.pointwise(x, wk, None)?;
        let v = self.lora_linear(x, "decoder.attn.wv", "decoder.lora_v")?;
        let heads = self.params.config().attn_heads;
        let a = self.graph.attention(q, k, v, heads)?;
        let (wo, bo) = (self.p("decoder.attn.wo")?, self.p("decoder.attn.bo")?);
        let o = self.graph.pointwise(a, wo, Some(bo))?;
        let y = self.graph.add(x, o)?;
        let (w1, b1) = (self.p("decoder.head.w1")?, self.p("decoder.head.b1")?);
        let h = self.graph.pointwise(y, w1, Some(b1))?;
        let h = self.graph.gelu(h);
        let (w2, b2) = (self.p("decoder.head.w2")?, self.p("decoder.head.b2")?);
        self.graph.pointwise(h, w2, Some(b2))
    }

    /// Memory entry from image features and the round's logits.
    pub fn mem_encode(&mut self, f_img: NodeId, logits: NodeId) -> Result<NodeId> {
        let cat = self.graph.concat(f_img, logits)?;
        let (w, b) = (self.p("mem_encoder.w")?, self.p("mem_encoder.b")?);
        self.graph.pointwise(cat, w, Some(b))
    }

    /// One pass of the refinement loop body.
    pub fn round(
        &mut self,
        f_img: NodeId,
        prompt: RoundPrompt<'_>,
        memory: Option<NodeId>,
        flags: RoundFlags,
    ) -> Result<RoundNodes> {
        prompt.accumulated.positive().check_same_dims(prompt.latest.positive())?;
        let e_acc = self.scribble_encode(prompt.accumulated)?;
        let e_latest = self.scribble_encode(prompt.latest)?;
        let e_mask = match prompt.prev_mask {
            Some(m) => Some(self.mask_encode(m)?),
            None => None,
        };
        let fq = if flags.use_sgf {
            self.sgf_fuse(f_img, e_latest, e_latest.is_some())?
        } else {
            f_img
        };
        let fmem = if flags.use_memory {
            self.memory_attention(fq, memory)?
        } else {
            fq
        };
        let dense = match (e_acc, e_mask) {
            (Some(a), Some(m)) => Some(self.graph.add(a, m)?),
            (a, m) => a.or(m),
        };
        let logits = self.mask_decode(fmem, dense)?;
        let memory = if flags.use_memory {
            Some(self.mem_encode(f_img, logits)?)
        } else {
            None
        };
        Ok(RoundNodes { logits, memory })
    }
}

fn prefix_op(prefix: &str) -> &'static str {
    if prefix == "mask_encoder" {
        "mask_encode"
    } else {
        "scribble_encode"
    }
}

/// Bilinear resize of a `[1, h, w]` logit map (pixel-centre aligned).
pub fn upsample_logits<T: Scalar>(logits: &Tensor<T>, width: usize, height: usize) -> Vec<T> {
    let (h, w) = (logits.shape()[1], logits.shape()[2]);
    let src = logits.data();
    let coord = |dst: usize, n_out: usize, n_in: usize| {
        let s = ((dst as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(n_in - 1);
        (i0, i1, T::of(s - i0 as f64))
    };
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let (y0, y1, fy) = coord(y, height, h);
        for x in 0..width {
            let (x0, x1, fx) = coord(x, width, w);
            let top = src[y0 * w + x0] * (T::one() - fx) + src[y0 * w + x1] * fx;
            let bot = src[y1 * w + x0] * (T::one() - fx) + src[y1 * w + x1] * fx;
            out.push(top * (T::one() - fy) + bot * fy);
        }
    }
    out
}

/// Upsamples logits to `width x height` and thresholds them.
pub fn binarize_logits<T: Scalar>(logits: &Tensor<T>, width: usize, height: usize, threshold: f64) -> BinaryMask {
    let up = upsample_logits(logits, width, height);
    let t = T::of(threshold);
    BinaryMask::from_bits(width, height, up.into_iter().map(|v| v > t).collect())
        .expect("upsampled buffer matches dimensions")
}

/// Majority vote of `mask` over each cell of a `side x side` grid.
pub fn downscale_majority(mask: &BinaryMask, side: usize) -> Vec<bool> {
    let (w, h) = mask.dims();
    let mut on = vec![0usize; side * side];
    let mut all = vec![0usize; side * side];
    for y in 0..h {
        let cy = y * side / h;
        for x in 0..w {
            let c = cy * side + x * side / w;
            all[c] += 1;
            if mask.get(x, y) {
                on[c] += 1;
            }
        }
    }
    on.iter().zip(&all).map(|(&o, &a)| a > 0 && 2 * o >= a).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::config::NetConfig;

    fn tiny_cfg() -> NetConfig {
        NetConfig {
            input_side: 8,
            embed_dim: 4,
            attn_heads: 1,
            lora_rank: 1,
            lora_scale: 2.0,
            groupnorm_groups: 2,
        }
    }

    fn zero_params(cfg: &NetConfig) -> ToyNetParams<f64> {
        let mut p = ToyNetParams::init(cfg, 0).unwrap();
        let names: Vec<String> = p.names().map(String::from).collect();
        for n in names {
            let shape = p.get(&n).unwrap().shape().to_vec();
            p.set(&n, Tensor::zeros(&shape)).unwrap();
        }
        p
    }

    #[test]
    fn empty_scribble_is_zero_embedding() {
        let p = ToyNetParams::<f64>::init(&NetConfig::default(), 0).unwrap();
        let mut net = NetGraph::new(&p, Trainable::None);
        assert!(net.scribble_encode(&ScribbleMap::empty(64, 64)).unwrap().is_none());
        let mut s = ScribbleMap::empty(64, 64);
        s.mark(3, 3, crate::raster::Channel::Positive);
        let e = net.scribble_encode(&s).unwrap().unwrap();
        assert_eq!(net.value(e).shape(), &[16, 16, 16]);
    }

    #[test]
    fn single_pixel_scribble_hand_computed() {
        // 8x8 raster, D = 8 so the first block has two channels. One positive
        // pixel at (0, 0); conv1 routes it to channel 0 only, conv2 copies
        // channel 0 of the top-left tap into channel k with weight k + 1.
        let cfg = NetConfig {
            embed_dim: 8,
            ..tiny_cfg()
        };
        let mut p = zero_params(&cfg);
        let mut w1 = Tensor::zeros(&[2, 2, 2, 2]);
        w1.data_mut()[0] = 1.0;
        p.set("scribble_encoder.conv1.w", w1).unwrap();
        p.set("scribble_encoder.ln1.g", Tensor::filled(&[2], 1.0)).unwrap();
        let w2 = Tensor::from_fn(&[8, 2, 2, 2], |i| if i % 8 == 0 { (i / 8 + 1) as f64 } else { 0.0 });
        p.set("scribble_encoder.conv2.w", w2).unwrap();
        p.set("scribble_encoder.ln2.g", Tensor::filled(&[8], 1.0)).unwrap();
        let eye = Tensor::from_fn(&[8, 8], |i| if i / 8 == i % 8 { 1.0 } else { 0.0 });
        p.set("scribble_encoder.proj.w", eye).unwrap();

        let mut s = ScribbleMap::empty(8, 8);
        s.mark(0, 0, crate::raster::Channel::Positive);
        let mut net = NetGraph::new(&p, Trainable::None);
        let e = net.scribble_encode(&s).unwrap().unwrap();
        let out = net.value(e);
        assert_eq!(out.shape(), &[8, 2, 2]);
        // Block 1 at cell (0, 0): LayerNorm of (1, 0) is (1, -1), then GELU.
        // Block 2 at output cell (0, 0): (k + 1) * GELU(1), whose LayerNorm is
        // (k + 1 - 4.5) / sqrt(5.25). Every other cell is all zeros.
        let gelu = |v: f64| {
            let u = (2.0 / std::f64::consts::PI).sqrt() * (v + 0.044715 * v * v * v);
            0.5 * v * (1.0 + u.tanh())
        };
        for k in 0..8 {
            let want = gelu((k as f64 + 1.0 - 4.5) / 5.25f64.sqrt());
            let got = out.data()[k * 4];
            assert!((got - want).abs() < 1e-5, "channel {k}: {got} vs {want}");
            assert_eq!(&out.data()[k * 4 + 1..k * 4 + 4], &[0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn zero_weights_give_zero_embedding() {
        let cfg = tiny_cfg();
        let p = zero_params(&cfg);
        let mut s = ScribbleMap::empty(8, 8);
        s.mark(2, 5, crate::raster::Channel::Negative);
        let mut net = NetGraph::new(&p, Trainable::None);
        let e = net.scribble_encode(&s).unwrap().unwrap();
        assert!(net.value(e).is_all_zero());
        let m = net.mask_encode(&BinaryMask::new(8, 8)).unwrap();
        assert!(net.value(m).is_all_zero());
    }

    #[test]
    fn full_mask_with_unit_weights_is_constant() {
        let cfg = tiny_cfg();
        let mut p = zero_params(&cfg);
        p.set("mask_encoder.conv1.w", Tensor::filled(&[1, 1, 2, 2], 1.0)).unwrap();
        p.set("mask_encoder.ln1.g", Tensor::filled(&[1], 1.0)).unwrap();
        p.set("mask_encoder.conv2.w", Tensor::filled(&[4, 1, 2, 2], 1.0)).unwrap();
        p.set("mask_encoder.ln2.g", Tensor::filled(&[4], 1.0)).unwrap();
        p.set("mask_encoder.ln2.b", Tensor::filled(&[4], 1.0)).unwrap();
        p.set("mask_encoder.proj.w", Tensor::filled(&[4, 4], 1.0)).unwrap();
        let mut net = NetGraph::new(&p, Trainable::None);
        let e = net.mask_encode(&BinaryMask::full(8, 8)).unwrap();
        // conv1 → 4 everywhere; LN over one channel → beta 0; GELU → 0;
        // conv2 → 0; LN over equal channels → beta 1; GELU(1); proj sums 4.
        let u = (2.0 / std::f64::consts::PI).sqrt() * (1.0 + 0.044715);
        let g1 = 0.5 * (1.0 + u.tanh());
        for &v in net.value(e).data() {
            assert!((v - 4.0 * g1).abs() < 1e-12);
        }
    }

    #[test]
    fn lora_hand_example() {
        // r = 1, A = [1, 0], B = [0; 1], scale 2, base = I, x = (3, 5) → (3, 11)
        let cfg = NetConfig {
            embed_dim: 2,
            attn_heads: 1,
            groupnorm_groups: 1,
            ..tiny_cfg()
        };
        let mut p = zero_params(&cfg);
        p.set("decoder.attn.wq", Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
        p.set("decoder.lora_q.a", Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap()).unwrap();
        p.set("decoder.lora_q.b", Tensor::new(vec![2, 1], vec![0.0, 1.0]).unwrap()).unwrap();
        let run = |p: &ToyNetParams<f64>| {
            let mut net = NetGraph::new(p, Trainable::None);
            let x = net.constant(Tensor::new(vec![2, 1], vec![3.0, 5.0]).unwrap());
            let y = net.lora_linear(x, "decoder.attn.wq", "decoder.lora_q").unwrap();
            net.value(y).data().to_vec()
        };
        assert_eq!(run(&p), vec![3.0, 11.0]);
        let mut off = p.clone();
        off.set_lora_enabled("decoder.lora_q", false).unwrap();
        assert_eq!(run(&off), vec![3.0, 5.0]);
        let mut zero_b = p.clone();
        zero_b.set("decoder.lora_q.b", Tensor::zeros(&[2, 1])).unwrap();
        assert_eq!(run(&zero_b), vec![3.0, 5.0]);
    }

    #[test]
    fn sgf_single_cell_hand_computed() {
        // D = 2, one spatial cell, groups = 2 (one channel per group).
        // GroupNorm over a single value outputs its shift, so the fixture's
        // arithmetic runs through the shifts: gn1.b = (0.5, -0.25) → GELU →
        // depthwise centre tap 2 + bias 0.1 → pointwise mixing → gn2.b.
        let cfg = NetConfig {
            input_side: 4,
            embed_dim: 2,
            attn_heads: 1,
            lora_rank: 1,
            lora_scale: 2.0,
            groupnorm_groups: 2,
        };
        let mut p = zero_params(&cfg);
        p.set("sgf.gn1.b", Tensor::new(vec![2], vec![0.5, -0.25]).unwrap()).unwrap();
        p.set("sgf.gn2.b", Tensor::new(vec![2], vec![0.3, 0.7]).unwrap()).unwrap();
        p.set("sgf.alpha", Tensor::scalar(1.0)).unwrap();
        let mut net = NetGraph::new(&p, Trainable::None);
        let f = net.constant(Tensor::new(vec![2, 1, 1], vec![1.0, -2.0]).unwrap());
        let e = net.constant(Tensor::new(vec![2, 1, 1], vec![0.25, 4.0]).unwrap());
        let y = net.sgf_fuse(f, Some(e), true).unwrap();
        let gelu = |v: f64| {
            let u = (2.0 / std::f64::consts::PI).sqrt() * (v + 0.044715 * v * v * v);
            0.5 * v * (1.0 + u.tanh())
        };
        let expect = [1.0 + gelu(0.3), -2.0 + gelu(0.7)];
        for (got, want) in net.value(y).data().iter().zip(expect) {
            assert!((got - want).abs() < 1e-12);
        }
        // closed gate or zero alpha leave F untouched
        let y0 = net.sgf_fuse(f, Some(e), false).unwrap();
        assert_eq!(net.value(y0).data(), &[1.0, -2.0]);
    }

    #[test]
    fn decoder_with_only_final_bias_is_constant() {
        let cfg = tiny_cfg();
        let mut p = zero_params(&cfg);
        p.set("decoder.head.b2", Tensor::scalar(-1.25)).unwrap();
        let mut net = NetGraph::new(&p, Trainable::None);
        let f = net.constant(Tensor::from_fn(&[4, 2, 2], |i| i as f64));
        let l = net.mask_decode(f, None).unwrap();
        assert_eq!(net.value(l).shape(), &[1, 2, 2]);
        assert!(net.value(l).data().iter().all(|&v| v == -1.25));
    }

    #[test]
    fn decoder_two_by_two_hand_forward() {
        // identity attention projections, single head, identity head layer
        let cfg = NetConfig {
            embed_dim: 2,
            attn_heads: 1,
            groupnorm_groups: 1,
            ..tiny_cfg()
        };
        let mut p = zero_params(&cfg);
        let eye = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        for n in ["decoder.attn.wq", "decoder.attn.wk", "decoder.attn.wv", "decoder.attn.wo", "decoder.head.w1"] {
            p.set(n, eye.clone()).unwrap();
        }
        p.set("decoder.head.w2", Tensor::new(vec![1, 2], vec![1.0, -1.0]).unwrap()).unwrap();
        let tokens = [[0.0, 1.0, 0.5, -0.5], [1.0, 0.0, 0.25, 0.0]];
        let mut net = NetGraph::new(&p, Trainable::None);
        let f = net.constant(Tensor::new(vec![2, 2, 2], tokens.concat()).unwrap());
        let l = net.mask_decode(f, None).unwrap();
        // manual: softmax(x_i·x_j / sqrt 2) weighted sum, residual, GELU, w2
        let gelu = |v: f64| {
            let u = (2.0 / std::f64::consts::PI).sqrt() * (v + 0.044715 * v * v * v);
            0.5 * v * (1.0 + u.tanh())
        };
        for i in 0..4 {
            let s: Vec<f64> = (0..4)
                .map(|j| (tokens[0][i] * tokens[0][j] + tokens[1][i] * tokens[1][j]) / 2f64.sqrt())
                .collect();
            let m = s.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
            let z: f64 = e.iter().sum();
            let a: Vec<f64> = (0..2)
                .map(|d| (0..4).map(|j| e[j] / z * tokens[d][j]).sum::<f64>())
                .collect();
            let y = [tokens[0][i] + a[0], tokens[1][i] + a[1]];
            let want = gelu(y[0]) - gelu(y[1]);
            assert!((net.value(l).data()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn memory_attention_identity_paths() {
        let p = ToyNetParams::<f64>::init(&NetConfig::default(), 2).unwrap();
        let mut net = NetGraph::new(&p, Trainable::None);
        let fq = net.constant(Tensor::from_fn(&[16, 16, 16], |i| (i as f64 * 0.37).sin()));
        let y = net.memory_attention(fq, None).unwrap();
        assert!(net.value(y).bit_eq(net.value(fq)));
    }

    #[test]
    fn memory_equal_keys_give_value_projection() {
        // identity projections, one head, memory tokens all equal → output
        // adds the (shared) value token to every query
        let cfg = NetConfig {
            embed_dim: 2,
            attn_heads: 1,
            groupnorm_groups: 1,
            ..tiny_cfg()
        };
        let mut p = zero_params(&cfg);
        let eye = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        for n in ["mem_attn.wq", "mem_attn.wk", "mem_attn.wv", "mem_attn.wo"] {
            p.set(n, eye.clone()).unwrap();
        }
        let mut net = NetGraph::new(&p, Trainable::None);
        let fq = net.constant(Tensor::from_fn(&[2, 2, 2], |i| i as f64 - 3.0));
        let mem = net.constant(Tensor::new(vec![2, 2, 2], vec![0.5, 0.5, 0.5, 0.5, -1.0, -1.0, -1.0, -1.0]).unwrap());
        let y = net.memory_attention(fq, Some(mem)).unwrap();
        let fqv = net.value(fq).data().to_vec();
        for (i, &v) in net.value(y).data().iter().enumerate() {
            let add = if i < 4 { 0.5 } else { -1.0 };
            assert!((v - (fqv[i] + add)).abs() < 1e-12);
        }
    }

    #[test]
    fn upsample_constant_and_downscale_majority() {
        let t = Tensor::<f64>::filled(&[1, 2, 2], 3.0);
        assert!(upsample_logits(&t, 5, 7).iter().all(|&v| v == 3.0));
        let m = BinaryMask::from_fn(8, 8, |x, _| x < 4);
        assert_eq!(
            downscale_majority(&m, 2),
            vec![true, false, true, false]
        );
    }

    #[test]
    fn bilinear_matches_centre_alignment() {
        let t = Tensor::<f64>::new(vec![1, 1, 2], vec![0.0, 1.0]).unwrap();
        let up = upsample_logits(&t, 4, 1);
        assert_eq!(up, vec![0.0, 0.25, 0.75, 1.0]);
    }
}
