use std::sync::Arc;

use super::{check_prompt, SegmentSession, Segmenter, SegmenterKind};
use crate::error::Result;
use crate::net::ToyNetParams;
use crate::raster::{BinaryMask, ImageGrid, ScribbleMap};
use crate::refine::{init_session, refine_step, RefineConfig, SessionState};

/// Toy-network backend delegating to the refinement loop.
#[derive(Debug, Clone)]
pub struct ToyNetSegmenter {
    pub params: Arc<ToyNetParams<f64>>,
    pub cfg: RefineConfig,
}

impl ToyNetSegmenter {
    pub fn new(params: Arc<ToyNetParams<f64>>, cfg: RefineConfig) -> Self {
        Self { params, cfg }
    }
}

struct ToyNetSession {
    params: Arc<ToyNetParams<f64>>,
    cfg: RefineConfig,
    image: ImageGrid,
    acc: ScribbleMap,
    state: Option<SessionState<f64>>,
}

impl Segmenter for ToyNetSegmenter {
    fn kind(&self) -> SegmenterKind {
        SegmenterKind::ToyNet
    }

    fn start(&self, image: &ImageGrid, _gt: Option<&BinaryMask>) -> Result<Box<dyn SegmentSession>> {
        let (w, h) = image.dims();
        Ok(Box::new(ToyNetSession {
            params: Arc::clone(&self.params),
            cfg: self.cfg.clone(),
            image: image.clone(),
            acc: ScribbleMap::empty(w, h),
            state: None,
        }))
    }
}

impl SegmentSession for ToyNetSession {
    fn step(&mut self, prompt: &ScribbleMap) -> Result<BinaryMask> {
        check_prompt(self.image.dims(), prompt)?;
        let (mask, next) = match &self.state {
            None => {
                let st = init_session(&self.params, &self.image, prompt, &self.cfg)?;
                refine_step(&st, None, &self.params, &self.cfg)?
            }
            Some(st) => refine_step(st, Some(prompt), &self.params, &self.cfg)?,
        };
        self.acc = next.accumulated().clone();
        self.state = Some(next);
        Ok(mask)
    }

    fn round(&self) -> usize {
        self.state.as_ref().map_or(0, SessionState::round)
    }

    fn accumulated(&self) -> &ScribbleMap {
        &self.acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetConfig;
    use crate::raster::{rasterize_stroke, Channel, Polyline};
    use crate::segment::{clicks_to_scribble, Click};

    fn setup() -> (ToyNetSegmenter, ImageGrid) {
        let net = NetConfig {
            input_side: 32,
            embed_dim: 8,
            attn_heads: 2,
            lora_rank: 2,
            lora_scale: 2.0,
            groupnorm_groups: 2,
        };
        let p = Arc::new(ToyNetParams::init(&net, 4).unwrap());
        let cfg = RefineConfig {
            net,
            ..RefineConfig::default()
        };
        let img = ImageGrid::from_fn(32, 32, |x, y| [(x * 8) as u8, (y * 8) as u8, 60]);
        (ToyNetSegmenter::new(p, cfg), img)
    }

    #[test]
    fn matches_refine_step() {
        let (seg, img) = setup();
        let mut s0 = ScribbleMap::empty(32, 32);
        s0.paint(&rasterize_stroke((32, 32), &Polyline::open(vec![(8.0, 8.0), (20.0, 12.0)]), 3.0).unwrap(), Channel::Positive)
            .unwrap();
        let mut c = ScribbleMap::empty(32, 32);
        c.mark(28, 28, Channel::Negative);
        let mut sess = seg.start(&img, None).unwrap();
        let a0 = sess.step(&s0).unwrap();
        let a1 = sess.step(&c).unwrap();
        let st = init_session(&seg.params, &img, &s0, &seg.cfg).unwrap();
        let (b0, st) = refine_step(&st, None, &seg.params, &seg.cfg).unwrap();
        let (b1, _) = refine_step(&st, Some(&c), &seg.params, &seg.cfg).unwrap();
        assert_eq!((a0, a1), (b0, b1));
        assert_eq!(sess.round(), 2);
        assert_eq!(sess.accumulated(), &s0.channel_max(&c).unwrap());
    }

    #[test]
    fn click_equals_one_pixel_scribble() {
        let (seg, img) = setup();
        let clicks = clicks_to_scribble(32, 32, &[Click::positive(10, 14)]).unwrap();
        let mut dot = ScribbleMap::empty(32, 32);
        dot.paint(&BinaryMask::from_fn(32, 32, |x, y| (x, y) == (10, 14)), Channel::Positive)
            .unwrap();
        let a = seg.start(&img, None).unwrap().step(&clicks).unwrap();
        let b = seg.start(&img, None).unwrap().step(&dot).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_prompt_at_round_zero() {
        let (seg, img) = setup();
        let m = seg.start(&img, None).unwrap().step(&ScribbleMap::empty(32, 32)).unwrap();
        assert_eq!(m.dims(), (32, 32));
    }
}
