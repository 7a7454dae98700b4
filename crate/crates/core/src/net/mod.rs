//! Reverse-mode training stack: PolyConv trunk, normalization, pooling, FC
//! head, cross-entropy and Adam.

mod adam;
mod checkpoint;
mod config;
pub mod gradcheck;
pub mod layers;
mod network;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CHECKPOINT_SCHEMA_VERSION};
pub use config::{LrSchedule, NetConfig, TanhPlacement, TrainConfig};
pub use network::{NetInput, Network};
