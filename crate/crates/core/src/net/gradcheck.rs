//! Central finite-difference verification of the analytic gradients.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{LossConfig, NetConfig};
use super::episode::{record_episode_loss, Corrections, RolloutPlan};
use super::model::{NetGraph, RoundFlags};
use super::params::{ToyNetParams, Trainable, LORA_ADAPTERS};
use super::tensor::Tensor;
use crate::data::{synthetic_samples, SynthConfig};
use crate::error::{Error, Result};
use crate::raster::{BinaryMask, ImageGrid, ScribbleMap};
use crate::rng::stream;
use crate::scribble::{generate_scribble, GenParams, ScribbleStyle};

/// Denominator floor of the relative error, so entries with vanishing
/// gradients are judged on absolute error.
pub const REL_ERR_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamCheck {
    pub name: String,
    pub trainable: bool,
    pub checked: usize,
    pub max_rel_err: f64,
    pub max_abs_grad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub eps: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    /// Max relative error per module (`sgf`, `scribble_encoder`,
    /// `decoder.lora`, `mem_attn.lora`, ...), trainable entries only.
    pub fn per_module(&self) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        for p in self.params.iter().filter(|p| p.trainable) {
            let module = module_of(&p.name);
            let e = out.entry(module).or_insert(0.0f64);
            *e = e.max(p.max_rel_err);
        }
        out
    }

    /// True when every frozen parameter's analytic gradient is exactly zero.
    pub fn frozen_all_zero(&self) -> bool {
        self.params.iter().filter(|p| !p.trainable).all(|p| p.max_abs_grad == 0.0)
    }

    pub fn trainable_values(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.checked).sum()
    }
}

fn module_of(name: &str) -> String {
    let parts: Vec<&str> = name.split('.').collect();
    match parts.as_slice() {
        [m, l, ..] if l.starts_with("lora_") => format!("{m}.lora"),
        [m, ..] => m.to_string(),
        [] => String::new(),
    }
}

/// Inputs of one gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckFixture {
    pub params: ToyNetParams<f64>,
    pub image: ImageGrid,
    pub gt: BinaryMask,
    pub initial: ScribbleMap,
    pub plan: RolloutPlan,
    pub flags: RoundFlags,
    pub loss: LossConfig,
}

impl GradCheckFixture {
    /// A synthetic sample with a recorded rollout. Biases are jittered so no
    /// LayerNorm sits at zero variance, where its curvature defeats central
    /// differences. With `perturb_gates` the zero-initialized gates (SGF
    /// alpha, LoRA `B`) get random values so every branch carries gradient.
    pub fn synthetic(cfg: &NetConfig, rounds: usize, seed: u64, perturb_gates: bool) -> Result<Self> {
        let mut params = ToyNetParams::<f64>::init(cfg, seed)?;
        let mut rng = stream(seed, &[0x9a7e]);
        let jitter = Normal::new(0.0, 0.1).expect("valid std");
        let biases: Vec<String> = params
            .names()
            .filter(|n| !module_of(n).ends_with(".lora") && !n.ends_with("no_mem"))
            .filter(|n| [".b", ".b1", ".b2", ".bo"].iter().any(|s| n.ends_with(s)))
            .map(str::to_string)
            .collect();
        for name in biases {
            let shape = params.get(&name)?.shape().to_vec();
            params.set(&name, Tensor::from_fn(&shape, |_| jitter.sample(&mut rng)))?;
        }
        if perturb_gates {
            params.set("sgf.alpha", Tensor::scalar(rng.gen_range(0.2..0.6)))?;
            let normal = Normal::new(0.0, 0.3).expect("valid std");
            for a in LORA_ADAPTERS {
                let name = format!("{a}.b");
                let shape = params.get(&name)?.shape().to_vec();
                params.set(&name, Tensor::from_fn(&shape, |_| normal.sample(&mut rng)))?;
            }
        }
        let sample = synthetic_samples(&SynthConfig {
            count: 1,
            side: cfg.input_side.max(48),
            seed,
            kinds: Vec::new(),
        })?
        .remove(0);
        let gt = sample.targets[0].mask.clone();
        let gen = GenParams::default();
        let initial = generate_scribble(&gt, ScribbleStyle::Adaptive, &gen, &mut stream(seed, &[1]))?;
        let loss = LossConfig {
            rounds,
            ..LossConfig::default()
        };
        let flags = RoundFlags::default();
        let mut net = NetGraph::new(&params, Trainable::None);
        let (_, ep) = record_episode_loss(
            &mut net,
            &sample.image,
            &gt,
            &initial,
            Corrections::Oracle { gen: &gen, seed },
            flags,
            &loss,
        )?;
        Ok(Self {
            params,
            image: sample.image,
            gt,
            initial,
            plan: ep.plan,
            flags,
            loss,
        })
    }

    fn loss_at(&self, params: &ToyNetParams<f64>) -> Result<f64> {
        let mut net = NetGraph::new(params, Trainable::None);
        let (l, _) = record_episode_loss(
            &mut net,
            &self.image,
            &self.gt,
            &self.initial,
            Corrections::Replay(&self.plan),
            self.flags,
            &self.loss,
        )?;
        Ok(net.value(l).item())
    }

    /// Analytic gradients of the replayed episode loss.
    pub fn analytic(&self, trainable: Trainable) -> Result<(f64, std::collections::HashMap<String, Tensor<f64>>)> {
        let mut net = NetGraph::new(&self.params, trainable);
        let (l, _) = record_episode_loss(
            &mut net,
            &self.image,
            &self.gt,
            &self.initial,
            Corrections::Replay(&self.plan),
            self.flags,
            &self.loss,
        )?;
        Ok((net.value(l).item(), net.graph.backward(l)?))
    }
}

/// Compares analytic gradients with central differences for every value of
/// every parameter in `trainable` (or an evenly spaced subset of at most
/// `max_per_tensor` values per tensor). Frozen parameters are reported with
/// their analytic gradient, which must be zero.
pub fn grad_check(
    fixture: &GradCheckFixture,
    trainable: Trainable,
    eps: f64,
    max_per_tensor: Option<usize>,
) -> Result<GradCheckReport> {
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(Error::invalid(format!("finite-difference step {eps} outside [1e-6, 1e-3]")));
    }
    let (_, grads) = fixture.analytic(trainable)?;
    let mut jobs: Vec<(String, usize)> = Vec::new();
    for (name, t) in fixture.params.iter() {
        if !trainable.contains(name) {
            continue;
        }
        let n = t.len();
        let take = max_per_tensor.unwrap_or(n).min(n).max(1);
        for k in 0..take {
            jobs.push((name.to_string(), k * n / take));
        }
    }
    let errors: Vec<(String, f64)> = jobs
        .par_iter()
        .map(|(name, i)| -> Result<(String, f64)> {
            let mut p = fixture.params.clone();
            let base = p.get(name)?.data()[*i];
            p.get_mut(name)?.data_mut()[*i] = base + eps;
            let plus = fixture.loss_at(&p)?;
            p.get_mut(name)?.data_mut()[*i] = base - eps;
            let minus = fixture.loss_at(&p)?;
            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = grads.get(name).map_or(0.0, |g| g.data()[*i]);
            if !numeric.is_finite() || !analytic.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {name}[{i}]")));
            }
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
            Ok((name.clone(), rel))
        })
        .collect::<Result<_>>()?;

    let mut by_name: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    for (name, rel) in errors {
        let e = by_name.entry(name).or_insert((0, 0.0));
        e.0 += 1;
        e.1 = e.1.max(rel);
    }
    let params = fixture
        .params
        .iter()
        .map(|(name, _)| {
            let is_trainable = trainable.contains(name);
            let max_abs_grad = grads
                .get(name)
                .map_or(0.0, |g| g.data().iter().fold(0.0f64, |m, v| m.max(v.abs())));
            let (checked, max_rel_err) = by_name.get(name).copied().unwrap_or((0, 0.0));
            ParamCheck {
                name: name.to_string(),
                trainable: is_trainable,
                checked,
                max_rel_err,
                max_abs_grad,
            }
        })
        .collect();
    Ok(GradCheckReport { eps, params })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> NetConfig {
        NetConfig {
            input_side: 16,
            embed_dim: 8,
            attn_heads: 2,
            lora_rank: 2,
            lora_scale: 2.0,
            groupnorm_groups: 2,
        }
    }

    #[test]
    fn every_parameter_matches_finite_differences_at_small_scale() {
        let fx = GradCheckFixture::synthetic(&small_cfg(), 2, 3, true).unwrap();
        let report = grad_check(&fx, Trainable::All, 1e-6, Some(6)).unwrap();
        assert!(report.max_rel_err() < 1e-4, "{:#?}", report.per_module());
        // modules frozen during training still get gradients once unfrozen
        assert!(report.params.iter().any(|p| p.name == "mem_encoder.w" && p.max_abs_grad > 0.0));
    }

    #[test]
    fn frozen_parameters_report_zero() {
        let fx = GradCheckFixture::synthetic(&small_cfg(), 2, 4, true).unwrap();
        let report = grad_check(&fx, Trainable::Stage1, 1e-6, Some(2)).unwrap();
        assert!(report.frozen_all_zero());
        assert!(report.params.iter().any(|p| p.name == "sgf.alpha" && !p.trainable));
        assert!(report.max_rel_err() < 1e-4);
    }

    #[test]
    fn alpha_gradient_at_zero_is_nonzero() {
        let mut fx = GradCheckFixture::synthetic(&small_cfg(), 2, 5, false).unwrap();
        fx.params.set("sgf.alpha", Tensor::scalar(0.0)).unwrap();
        let (_, grads) = fx.analytic(Trainable::Stage2).unwrap();
        let g = grads["sgf.alpha"].item();
        assert!(g.abs() > 1e-8, "alpha gradient {g}");
        let report = grad_check(&fx, Trainable::Stage2, 1e-6, Some(1)).unwrap();
        let alpha = report.params.iter().find(|p| p.name == "sgf.alpha").unwrap();
        assert!(alpha.max_rel_err < 1e-4);
    }

    #[test]
    fn step_outside_range_is_rejected() {
        let fx = GradCheckFixture::synthetic(&small_cfg(), 1, 6, false).unwrap();
        assert!(grad_check(&fx, Trainable::Stage1, 1e-2, Some(1)).is_err());
    }

    #[test]
    fn module_names() {
        assert_eq!(module_of("decoder.lora_q.a"), "decoder.lora");
        assert_eq!(module_of("sgf.dw.w"), "sgf");
        assert_eq!(module_of("decoder.head.w1"), "decoder");
    }
}
