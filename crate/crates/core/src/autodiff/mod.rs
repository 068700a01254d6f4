//! Minimal reverse-mode differentiation: a tape of matrix operations,
//! dense and GRU layers, and RMSprop.

mod layers;
mod optim;
mod params;
mod tape;

pub use layers::{activation, dense, dense_act, gru_step, init_gru};
pub use optim::RmsProp;
pub use params::{ParamStore, Tensor};
pub use tape::{Activation, NodeId, Tape};
