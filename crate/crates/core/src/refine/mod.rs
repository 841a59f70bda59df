//! Dual-track multi-round refinement over one image: the accumulated
//! scribbles drive the decoder prompt, the latest correction alone drives the
//! query fusion, and a single memory slot carries the previous prediction.

mod log;

pub use log::{replay, LogEntry, SessionLog};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{binarize_logits, NetConfig, NetGraph, RoundFlags, RoundPrompt, Tensor, ToyNetParams, Trainable};
use crate::raster::{BinaryMask, ImageGrid, ScribbleMap};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub net: NetConfig,
    pub use_sgf: bool,
    pub use_memory: bool,
    /// Logit cutoff for binarization.
    pub threshold: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            net: NetConfig::default(),
            use_sgf: true,
            use_memory: true,
            threshold: 0.0,
        }
    }
}

impl RefineConfig {
    /// Neither SGF nor memory.
    pub fn baseline(net: NetConfig) -> Self {
        Self {
            net,
            use_sgf: false,
            use_memory: false,
            threshold: 0.0,
        }
    }

    pub fn flags(&self) -> RoundFlags {
        RoundFlags {
            use_sgf: self.use_sgf,
            use_memory: self.use_memory,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState<T> {
    width: usize,
    height: usize,
    f_img: Tensor<T>,
    s_acc: ScribbleMap,
    s_latest: ScribbleMap,
    memory: Option<Tensor<T>>,
    prev_mask: Option<BinaryMask>,
    round: usize,
}

impl<T: Scalar> SessionState<T> {
    /// Cached image features.
    pub fn image_features(&self) -> &Tensor<T> {
        &self.f_img
    }

    pub fn accumulated(&self) -> &ScribbleMap {
        &self.s_acc
    }

    /// Prompt of the most recent round (the initial scribble before round 0 runs).
    pub fn latest(&self) -> &ScribbleMap {
        &self.s_latest
    }

    /// The single memory slot.
    pub fn memory(&self) -> Option<&Tensor<T>> {
        self.memory.as_ref()
    }

    pub fn prev_mask(&self) -> Option<&BinaryMask> {
        self.prev_mask.as_ref()
    }

    /// Number of completed refinement steps.
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

fn check_net(params: &ToyNetParams<impl Scalar>, cfg: &RefineConfig) -> Result<()> {
    if params.config() != &cfg.net {
        return Err(Error::invalid("parameters were built for a different network configuration"));
    }
    Ok(())
}

/// Encodes the image once and seeds both tracks with `s0`.
pub fn init_session<T: Scalar>(
    params: &ToyNetParams<T>,
    image: &ImageGrid,
    s0: &ScribbleMap,
    cfg: &RefineConfig,
) -> Result<SessionState<T>> {
    check_net(params, cfg)?;
    if image.dims() != s0.dims() {
        return Err(Error::DimensionMismatch {
            expected: image.dims(),
            actual: s0.dims(),
        });
    }
    let mut net = NetGraph::new(params, Trainable::None);
    let f = net.image_encode(image)?;
    let (width, height) = image.dims();
    Ok(SessionState {
        width,
        height,
        f_img: net.value(f).clone(),
        s_acc: s0.clone(),
        s_latest: s0.clone(),
        memory: None,
        prev_mask: None,
        round: 0,
    })
}

/// Runs one round. At round 0 the correction must be absent (the initial
/// scribble is already in the state); afterwards it is the map of strokes
/// drawn since the previous prediction, possibly empty.
pub fn refine_step<T: Scalar>(
    state: &SessionState<T>,
    correction: Option<&ScribbleMap>,
    params: &ToyNetParams<T>,
    cfg: &RefineConfig,
) -> Result<(BinaryMask, SessionState<T>)> {
    check_net(params, cfg)?;
    let mut next = state.clone();
    match (state.round, correction) {
        (0, Some(_)) => return Err(Error::invalid("round 0 takes its prompt from init_session")),
        (0, None) => {}
        (_, None) => return Err(Error::invalid("rounds after the first need a correction map")),
        (_, Some(c)) => {
            if c.dims() != (state.width, state.height) {
                return Err(Error::DimensionMismatch {
                    expected: (state.width, state.height),
                    actual: c.dims(),
                });
            }
            next.s_acc = state.s_acc.channel_max(c)?;
            next.s_latest = c.clone();
        }
    }
    let mut net = NetGraph::new(params, Trainable::None);
    let f_img = net.constant(state.f_img.clone());
    let memory = state.memory.clone().map(|m| net.constant(m));
    let prompt = RoundPrompt {
        accumulated: &next.s_acc,
        latest: &next.s_latest,
        prev_mask: state.prev_mask.as_ref(),
    };
    let nodes = net.round(f_img, prompt, memory, cfg.flags())?;
    let logits = net.value(nodes.logits);
    if !logits.all_finite() {
        return Err(Error::NonFinite("refinement logits".into()));
    }
    let mask = binarize_logits(logits, state.width, state.height, cfg.threshold);
    next.memory = nodes.memory.map(|m| net.value(m).clone());
    next.prev_mask = Some(mask.clone());
    next.round += 1;
    Ok((mask, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_samples, SynthConfig};
    use crate::net::LORA_ADAPTERS;
    use crate::rng::stream;
    use crate::scribble::{corrective_scribbles, generate_scribble, GenParams, ScribbleStyle};

    fn small() -> NetConfig {
        NetConfig {
            input_side: 32,
            embed_dim: 8,
            attn_heads: 2,
            lora_rank: 2,
            lora_scale: 2.0,
            groupnorm_groups: 2,
        }
    }

    fn fixture() -> (ToyNetParams<f64>, ImageGrid, BinaryMask, ScribbleMap) {
        let p = ToyNetParams::init(&small(), 3).unwrap();
        let s = synthetic_samples(&SynthConfig {
            count: 1,
            side: 48,
            seed: 2,
            kinds: Vec::new(),
        })
        .unwrap()
        .remove(0);
        let gt = s.targets[0].mask.clone();
        let s0 = generate_scribble(&gt, ScribbleStyle::Adaptive, &GenParams::default(), &mut stream(1, &[0])).unwrap();
        (p, s.image, gt, s0)
    }

    fn cfg() -> RefineConfig {
        RefineConfig {
            net: small(),
            ..RefineConfig::default()
        }
    }

    #[test]
    fn init_has_empty_memory_and_both_tracks_seeded() {
        let (p, img, _, s0) = fixture();
        let st = init_session(&p, &img, &s0, &cfg()).unwrap();
        assert!(st.memory().is_none());
        assert_eq!(st.round(), 0);
        assert_eq!(st.accumulated(), &s0);
        assert_eq!(st.latest(), &s0);
        let again = init_session(&p, &img, &s0, &cfg()).unwrap();
        assert!(st.image_features().bit_eq(again.image_features()));
    }

    #[test]
    fn empty_initial_scribble_is_valid() {
        let (p, img, _, s0) = fixture();
        let empty = ScribbleMap::empty(s0.width(), s0.height());
        let st = init_session(&p, &img, &empty, &cfg()).unwrap();
        let (m, st) = refine_step(&st, None, &p, &cfg()).unwrap();
        assert_eq!(m.dims(), img.dims());
        assert_eq!(st.round(), 1);
    }

    #[test]
    fn correction_contract_by_round() {
        let (p, img, _, s0) = fixture();
        let st = init_session(&p, &img, &s0, &cfg()).unwrap();
        assert!(refine_step(&st, Some(&s0), &p, &cfg()).is_err());
        let (_, st) = refine_step(&st, None, &p, &cfg()).unwrap();
        assert!(refine_step(&st, None, &p, &cfg()).is_err());
        let wrong = ScribbleMap::empty(3, 3);
        assert!(matches!(
            refine_step(&st, Some(&wrong), &p, &cfg()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn memory_holds_one_entry_and_tracks_separate() {
        let (p, img, gt, s0) = fixture();
        let mut st = init_session(&p, &img, &s0, &cfg()).unwrap();
        let (mut mask, next) = refine_step(&st, None, &p, &cfg()).unwrap();
        st = next;
        for t in 1..4u64 {
            let c = corrective_scribbles(&mask, &gt, &GenParams::default(), &mut stream(9, &[t])).unwrap();
            let before = st.accumulated().clone();
            let (m, next) = refine_step(&st, Some(&c), &p, &cfg()).unwrap();
            assert_eq!(next.latest(), &c);
            assert_eq!(next.accumulated(), &before.channel_max(&c).unwrap());
            assert_eq!(next.memory().unwrap().shape(), st.image_features().shape());
            assert_eq!(next.round(), t as usize + 1);
            mask = m;
            st = next;
        }
    }

    #[test]
    fn empty_correction_keeps_accumulated() {
        let (p, img, _, s0) = fixture();
        let st = init_session(&p, &img, &s0, &cfg()).unwrap();
        let (_, st) = refine_step(&st, None, &p, &cfg()).unwrap();
        let empty = ScribbleMap::empty(s0.width(), s0.height());
        let (_, next) = refine_step(&st, Some(&empty), &p, &cfg()).unwrap();
        assert_eq!(next.accumulated(), st.accumulated());
    }

    #[test]
    fn zero_gates_make_sgf_invisible_across_rounds() {
        let (p, img, _, s0) = fixture();
        let empty = ScribbleMap::empty(s0.width(), s0.height());
        let run = |use_sgf: bool| {
            let c = RefineConfig {
                use_sgf,
                use_memory: false,
                ..cfg()
            };
            let st = init_session(&p, &img, &s0, &c).unwrap();
            let (m0, st) = refine_step(&st, None, &p, &c).unwrap();
            let (m1, st) = refine_step(&st, Some(&empty), &p, &c).unwrap();
            let (m2, st) = refine_step(&st, Some(&empty), &p, &c).unwrap();
            (vec![m0, m1, m2], st.accumulated().clone())
        };
        let (with, acc_a) = run(true);
        let (without, acc_b) = run(false);
        assert_eq!(with, without);
        assert_eq!(acc_a, s0);
        assert_eq!(acc_b, s0);
        // same prompt and same previous mask give the same mask
        if with[0] == with[1] {
            assert_eq!(with[1], with[2]);
        }
    }

    #[test]
    fn baseline_ignores_latest_track() {
        let (mut p, img, _, s0) = fixture();
        p.set("sgf.alpha", Tensor::scalar(0.7)).unwrap();
        for a in LORA_ADAPTERS {
            let name = format!("{a}.b");
            let shape = p.get(&name).unwrap().shape().to_vec();
            p.set(&name, Tensor::filled(&shape, 0.2)).unwrap();
        }
        let base = RefineConfig::baseline(small());
        let st = init_session(&p, &img, &s0, &base).unwrap();
        let (_, st) = refine_step(&st, None, &p, &base).unwrap();
        // re-sending the initial scribble leaves the accumulated map as it is
        let empty = ScribbleMap::empty(s0.width(), s0.height());
        let (a, sa) = refine_step(&st, Some(&empty), &p, &base).unwrap();
        let (b, sb) = refine_step(&st, Some(&s0), &p, &base).unwrap();
        assert_eq!(sa.accumulated(), sb.accumulated());
        assert_ne!(sa.latest(), sb.latest());
        assert_eq!(a, b);
        assert!(sa.memory().is_none());
    }

    #[test]
    fn mismatched_config_is_rejected() {
        let (p, img, _, s0) = fixture();
        assert!(init_session(&p, &img, &s0, &RefineConfig::default()).is_err());
    }
}
