//! The interpretable driving network family: FeatureNet encoders, vanilla and
//! atrous spatial attention, the attentional bottleneck with Fourier
//! positional features, a recurrent waypoint decoder and an optional
//! object-attention branch.

pub mod attention;
pub mod bottleneck;
pub mod checkpoint;
pub mod config;
pub mod decoder;
pub mod error;
pub mod features;
pub mod network;
pub mod positional;

pub use attention::{AttentionMechanism, AttentionRegistry, Attended};
pub use checkpoint::{load_checkpoint, read_checkpoint_header, save_checkpoint, CheckpointHeader, Lineage};
pub use config::{AttentionMode, ModelConfig, Pooling, VariantConfig, VARIANT_NAMES};
pub use error::{ModelError, Result};
pub use network::{ForwardOptions, ForwardOutput, Model, ModelInput, Rollout};
pub use positional::positional_basis;
