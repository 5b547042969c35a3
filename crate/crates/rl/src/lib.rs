//! Policy network, reverse-mode tensors and PPO training for the macro
//! placement environment.

pub mod checkpoint;
pub mod layers;
pub mod optim;
pub mod policy;
pub mod ppo;
pub mod tensor;

pub use policy::{GraphInput, PolicyConfig, PolicyOutput, PolicyParams};
pub use ppo::{TrainConfig, Trainer};
