//! Dataset ingestion and generation.

pub mod evolving;
pub mod idx;
pub mod pca;
pub mod series;

pub use evolving::{
    build_evolving_stream, evolving_label_prob, synthetic_drift_stream, EvolvingStream, StreamManifest,
};
pub use idx::{load_mnist, parse_idx, LabeledImageSet, MnistSplit};
pub use pca::{pca_fit, Pca};
pub use series::{oscillating_texture, sliding_windows, TextureSpec};
