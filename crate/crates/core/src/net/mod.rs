//! Toy-scale scribble-conditioned segmentation network with reverse-mode
//! gradients: scribble and mask encoders, spatial gated fusion, memory
//! attention and mask decoder with toggleable LoRA adapters.

mod config;
mod episode;
mod gradcheck;
mod graph;
mod loss;
mod model;
mod optim;
mod params;
mod tensor;
mod train;

pub use config::{LossConfig, NetConfig};
pub use episode::{record_episode, record_episode_loss, Corrections, Episode, RolloutPlan};
pub use gradcheck::{grad_check, GradCheckFixture, GradCheckReport, ParamCheck, REL_ERR_FLOOR};
pub use graph::{Graph, NodeId};
pub use loss::{dice_loss, focal_loss, multi_round_loss, record_multi_round_loss};
pub use model::{binarize_logits, downscale_majority, upsample_logits, NetGraph, RoundFlags, RoundNodes, RoundPrompt};
pub use optim::{AdamW, AdamWConfig};
pub use params::{ToyNetParams, Trainable, LORA_ADAPTERS};
pub use tensor::Tensor;
pub use train::{evaluate_loss, stage_flags, train_toy, TrainConfig, TrainReport};
