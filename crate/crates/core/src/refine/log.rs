use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{init_session, refine_step, RefineConfig};
use crate::error::{Error, Result};
use crate::net::ToyNetParams;
use crate::raster::{BinaryMask, ImageGrid, MaskRle, ScribbleMap, ScribbleRle};
use crate::scalar::Scalar;

/// One round of a session: the prompt fed that round (the initial scribble
/// at round 0) and the resulting mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub round: usize,
    pub correction: ScribbleRle,
    pub mask: MaskRle,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dice: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub rounds: Vec<LogEntry>,
}

impl SessionLog {
    pub fn push(&mut self, correction: &ScribbleMap, mask: &BinaryMask, metrics: Option<(f64, f64)>) {
        self.rounds.push(LogEntry {
            round: self.rounds.len(),
            correction: correction.into(),
            mask: mask.into(),
            iou: metrics.map(|m| m.0),
            dice: metrics.map(|m| m.1),
        });
    }

    pub fn corrections(&self) -> Result<Vec<ScribbleMap>> {
        self.rounds.iter().map(|e| e.correction.decode()).collect()
    }

    pub fn masks(&self) -> Result<Vec<BinaryMask>> {
        self.rounds.iter().map(|e| e.mask.decode()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let log: SessionLog = serde_json::from_str(s)?;
        for (i, e) in log.rounds.iter().enumerate() {
            if e.round != i {
                return Err(Error::invalid(format!("log entry {i} is labelled round {}", e.round)));
            }
        }
        Ok(log)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Re-runs a logged toy-network session and returns its masks.
pub fn replay<T: Scalar>(
    log: &SessionLog,
    image: &ImageGrid,
    params: &ToyNetParams<T>,
    cfg: &RefineConfig,
) -> Result<Vec<BinaryMask>> {
    let corrections = log.corrections()?;
    let Some((first, rest)) = corrections.split_first() else {
        return Ok(Vec::new());
    };
    let mut state = init_session(params, image, first, cfg)?;
    let mut masks = Vec::with_capacity(corrections.len());
    let (m, s) = refine_step(&state, None, params, cfg)?;
    masks.push(m);
    state = s;
    for c in rest {
        let (m, s) = refine_step(&state, Some(c), params, cfg)?;
        masks.push(m);
        state = s;
    }
    Ok(masks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::NetConfig;
    use crate::rng::stream;
    use crate::scribble::{corrective_scribbles, generate_scribble, GenParams, ScribbleStyle};

    #[test]
    fn replay_reproduces_masks_bytewise() {
        let net = NetConfig {
            input_side: 32,
            embed_dim: 8,
            attn_heads: 2,
            lora_rank: 2,
            lora_scale: 2.0,
            groupnorm_groups: 2,
        };
        let cfg = RefineConfig {
            net: net.clone(),
            ..RefineConfig::default()
        };
        let p = ToyNetParams::<f64>::init(&net, 5).unwrap();
        let gt = BinaryMask::from_fn(40, 40, |x, y| (x as i32 - 20).pow(2) + (y as i32 - 18).pow(2) < 120);
        let image = ImageGrid::from_fn(40, 40, |x, y| if gt.get(x, y) { [200, 90, 90] } else { [30, 40, 50] });
        let gen = GenParams::default();
        let s0 = generate_scribble(&gt, ScribbleStyle::Adaptive, &gen, &mut stream(0, &[0])).unwrap();
        let mut log = SessionLog::default();
        let mut st = init_session(&p, &image, &s0, &cfg).unwrap();
        let (mut mask, next) = refine_step(&st, None, &p, &cfg).unwrap();
        log.push(&s0, &mask, None);
        st = next;
        for t in 1..3u64 {
            let c = corrective_scribbles(&mask, &gt, &gen, &mut stream(0, &[t])).unwrap();
            let (m, next) = refine_step(&st, Some(&c), &p, &cfg).unwrap();
            log.push(&c, &m, Some((0.5, 2.0 / 3.0)));
            mask = m;
            st = next;
        }
        let text = log.to_json().unwrap();
        let back = SessionLog::from_json(&text).unwrap();
        assert_eq!(back, log);
        assert!(!text.contains("\"iou\": null"));
        assert_eq!(replay(&back, &image, &p, &cfg).unwrap(), log.masks().unwrap());
    }

    #[test]
    fn misnumbered_rounds_are_rejected() {
        let m = BinaryMask::new(2, 2);
        let mut log = SessionLog::default();
        log.push(&ScribbleMap::empty(2, 2), &m, None);
        log.rounds[0].round = 3;
        assert!(SessionLog::from_json(&log.to_json().unwrap()).is_err());
    }
}
