//! Landmark sequences and the audio-to-landmark generator.

mod model;
mod sequence;

pub use model::{
    generate_landmarks, ConvBlock, DomainFeatures, DomainToggles, LandmarkConfig, LandmarkModel, LandmarkOutput,
    MouthInsert, MouthScatter, ResConvBlock, Variant,
};
pub use sequence::{default_mouth_indices, validate_mouth, LandmarkSequence, DEFAULT_POINTS};
