use std::collections::BTreeMap;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::NetConfig;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::{hash_str, stream};
use crate::scalar::Scalar;

const MANIFEST_FORMAT: &str = "scribble-toynet-params/1";

/// The four LoRA adapters, by parameter prefix.
pub const LORA_ADAPTERS: [&str; 4] = ["decoder.lora_q", "decoder.lora_v", "mem_attn.lora_q", "mem_attn.lora_v"];

/// Which parameters receive gradients and optimizer updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trainable {
    /// Nothing trains (inference).
    None,
    /// Scribble encoder and decoder LoRA.
    Stage1,
    /// Stage 1 plus SGF and memory-attention LoRA.
    Stage2,
    /// Every parameter, frozen backbone included.
    All,
}

impl Trainable {
    pub fn contains(self, name: &str) -> bool {
        let stage1 = name.starts_with("scribble_encoder.") || name.starts_with("decoder.lora_");
        match self {
            Trainable::None => false,
            Trainable::Stage1 => stage1,
            Trainable::Stage2 => stage1 || name.starts_with("sgf.") || name.starts_with("mem_attn.lora_"),
            Trainable::All => true,
        }
    }

    pub fn from_stage(stage: u8) -> Result<Self> {
        match stage {
            1 => Ok(Trainable::Stage1),
            2 => Ok(Trainable::Stage2),
            s => Err(Error::invalid(format!("unknown training stage {s}"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Init {
    Zeros,
    Ones,
    /// Gaussian with standard deviation `1 / sqrt(fan_in)`.
    FanIn(usize),
}

/// Named parameter tensors plus LoRA on/off switches.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyNetParams<T> {
    config: NetConfig,
    tensors: BTreeMap<String, Tensor<T>>,
    lora_enabled: BTreeMap<String, bool>,
}

fn layout(cfg: &NetConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = cfg.embed_dim;
    let c1 = cfg.encoder_hidden();
    let r = cfg.lora_rank;
    let mut out: Vec<(String, Vec<usize>, Init)> = Vec::new();
    let mut add = |name: &str, shape: &[usize], init: Init| out.push((name.to_string(), shape.to_vec(), init));

    add("image_encoder.conv.w", &[d, 3, 4, 4], Init::FanIn(3 * 16));
    add("image_encoder.conv.b", &[d], Init::Zeros);
    add("image_encoder.proj.w", &[d, d], Init::FanIn(d));
    add("image_encoder.proj.b", &[d], Init::Zeros);

    for (prefix, cin) in [("scribble_encoder", 2), ("mask_encoder", 1)] {
        add(&format!("{prefix}.conv1.w"), &[c1, cin, 2, 2], Init::FanIn(cin * 4));
        add(&format!("{prefix}.conv1.b"), &[c1], Init::Zeros);
        add(&format!("{prefix}.ln1.g"), &[c1], Init::Ones);
        add(&format!("{prefix}.ln1.b"), &[c1], Init::Zeros);
        add(&format!("{prefix}.conv2.w"), &[d, c1, 2, 2], Init::FanIn(c1 * 4));
        add(&format!("{prefix}.conv2.b"), &[d], Init::Zeros);
        add(&format!("{prefix}.ln2.g"), &[d], Init::Ones);
        add(&format!("{prefix}.ln2.b"), &[d], Init::Zeros);
        add(&format!("{prefix}.proj.w"), &[d, d], Init::FanIn(d));
        add(&format!("{prefix}.proj.b"), &[d], Init::Zeros);
    }

    add("sgf.reduce.w", &[d, 2 * d], Init::FanIn(2 * d));
    add("sgf.reduce.b", &[d], Init::Zeros);
    add("sgf.gn1.g", &[d], Init::Ones);
    add("sgf.gn1.b", &[d], Init::Zeros);
    add("sgf.dw.w", &[d, 1, 7, 7], Init::FanIn(49));
    add("sgf.dw.b", &[d], Init::Zeros);
    add("sgf.pw.w", &[d, d], Init::FanIn(d));
    add("sgf.pw.b", &[d], Init::Zeros);
    add("sgf.gn2.g", &[d], Init::Ones);
    add("sgf.gn2.b", &[d], Init::Zeros);
    add("sgf.alpha", &[1], Init::Zeros);

    for prefix in ["mem_attn", "decoder.attn"] {
        for p in ["wq", "wk", "wv", "wo"] {
            add(&format!("{prefix}.{p}"), &[d, d], Init::FanIn(d));
        }
        add(&format!("{prefix}.bo"), &[d], Init::Zeros);
    }
    add("mem_attn.no_mem", &[d, 1], Init::Zeros);
    for adapter in LORA_ADAPTERS {
        add(&format!("{adapter}.a"), &[r, d], Init::FanIn(d));
        add(&format!("{adapter}.b"), &[d, r], Init::Zeros);
    }
    add("mem_encoder.w", &[d, d + 1], Init::FanIn(d + 1));
    add("mem_encoder.b", &[d], Init::Zeros);
    add("decoder.head.w1", &[d, d], Init::FanIn(d));
    add("decoder.head.b1", &[d], Init::Zeros);
    add("decoder.head.w2", &[1, d], Init::FanIn(d));
    add("decoder.head.b2", &[1], Init::Zeros);
    out
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    config: NetConfig,
    lora_enabled: BTreeMap<String, bool>,
    params: BTreeMap<String, ManifestEntry>,
}

impl<T: Scalar> ToyNetParams<T> {
    /// Seeded initialization. Zero-initialized gates (SGF `alpha`, LoRA `B`,
    /// the no-memory embedding) make the adapted network start out identical
    /// to the frozen one.
    pub fn init(config: &NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut tensors = BTreeMap::new();
        for (name, shape, init) in layout(config) {
            let t = match init {
                Init::Zeros => Tensor::zeros(&shape),
                Init::Ones => Tensor::filled(&shape, T::one()),
                Init::FanIn(fan) => {
                    let mut rng = stream(seed, &[hash_str(&name)]);
                    let normal = Normal::new(0.0, 1.0 / (fan as f64).sqrt()).expect("positive std");
                    Tensor::from_fn(&shape, |_| T::of(normal.sample(&mut rng)))
                }
            };
            tensors.insert(name, t);
        }
        Ok(Self {
            config: config.clone(),
            tensors,
            lora_enabled: LORA_ADAPTERS.iter().map(|a| (a.to_string(), true)).collect(),
        })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter `{name}`")))
    }

    /// Replaces a tensor, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let slot = self.get_mut(name)?;
        slot.same_shape(&value, "set parameter")?;
        *slot = value;
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn num_values(&self, trainable: Trainable) -> usize {
        self.iter().filter(|(n, _)| trainable.contains(n)).map(|(_, t)| t.len()).sum()
    }

    pub fn lora_enabled(&self, adapter: &str) -> bool {
        self.lora_enabled.get(adapter).copied().unwrap_or(false)
    }

    pub fn set_lora_enabled(&mut self, adapter: &str, enabled: bool) -> Result<()> {
        match self.lora_enabled.get_mut(adapter) {
            Some(slot) => {
                *slot = enabled;
                Ok(())
            }
            None => Err(Error::invalid(format!("unknown LoRA adapter `{adapter}`"))),
        }
    }

    pub fn set_all_lora(&mut self, enabled: bool) {
        for v in self.lora_enabled.values_mut() {
            *v = enabled;
        }
    }

    pub fn cast<U: Scalar>(&self) -> ToyNetParams<U> {
        ToyNetParams {
            config: self.config.clone(),
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
            lora_enabled: self.lora_enabled.clone(),
        }
    }

    /// Flat JSON manifest: name → shape and row-major values.
    pub fn to_json(&self) -> Result<String> {
        let manifest = Manifest {
            format: MANIFEST_FORMAT.to_string(),
            config: self.config.clone(),
            lora_enabled: self.lora_enabled.clone(),
            params: self
                .tensors
                .iter()
                .map(|(k, t)| {
                    (
                        k.clone(),
                        ManifestEntry {
                            shape: t.shape().to_vec(),
                            values: t.data().iter().map(|v| v.to_f64_lossy()).collect(),
                        },
                    )
                })
                .collect(),
        };
        Ok(serde_json::to_string(&manifest)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(s)?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::invalid(format!("unsupported parameter format `{}`", m.format)));
        }
        let mut params = Self::init(&m.config, 0)?;
        for (name, entry) in m.params {
            let t = Tensor::new(entry.shape, entry.values.into_iter().map(T::of).collect())?;
            params.set(&name, t)?;
        }
        for (adapter, on) in m.lora_enabled {
            params.set_lora_enabled(&adapter, on)?;
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}
