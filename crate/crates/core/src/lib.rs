//! Image color retouching that runs as pure table lookups.
//!
//! A tiny two-branch pointwise network with a split fully connected head is
//! trained to predict weights for a set of basis 3D color lattices
//! ([`model`]), baked into Channel, Weight, and basis lookup tables
//! ([`lutgen`]), and executed without any network arithmetic ([`engine`]).

pub mod dataset;
pub mod engine;
pub mod imaging;
pub mod lutgen;
pub mod metrics;
pub mod model;
pub mod synth;

pub use engine::{retouch, EngineError};
pub use imaging::{ImageF32, ImageU8, ImagingError};
pub use lutgen::{bake, LutBundle, LutError, QuantSpec};
pub use model::{ModelConfig, ModelError, TrainConfig, TrainableModel};
