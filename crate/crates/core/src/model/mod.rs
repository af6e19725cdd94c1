//! Domain types, quality metrics and the pluggable generative codecs.

mod codec;
mod corpus;
mod quality;
mod synthetic;
mod toy;

pub use codec::{CodecDescriptor, CodecFamily, CodecSpec, GenerativeCodec};
pub use corpus::{synthetic_corpus, synthetic_opaque_corpus, write_pgm};
pub use quality::{
    brightest_quadrant, quality_deviation, quality_goal, DistanceMetric, QualityKind, QualityMetric, QualityPolicy,
    QualityValue,
};
pub use synthetic::{sample_quality, NoiseShape, SyntheticCodec, SyntheticRQLaw};
pub use toy::{pixel_swap, swap_indices, ToyImageCodec, ToyVariant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("prompt size {requested} bpp is below the codec minimum {minimum} bpp")]
    PromptTooSmall { requested: f64, minimum: f64 },
    #[error("codec has no variant {0}")]
    UnsupportedVariant(u8),
    #[error("prompt was produced by a different codec variant: {0}")]
    VariantMismatch(String),
    #[error("payload shapes differ")]
    ShapeMismatch,
    #[error("fraction {0} outside [0, 1]")]
    InvalidFraction(f64),
    #[error("data point has no task label")]
    MissingLabel,
    #[error("codec cannot handle this payload: {0}")]
    UnsupportedPayload(&'static str),
}

/// Codec variant identifier (the model parameterization shared by encoder and
/// generator).
pub type VariantId = u8;

/// Grayscale pixel grid. `depth` is bits per pixel; values are below `2^depth`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelGrid {
    pub width: u32,
    pub height: u32,
    pub depth: u8,
    pub pixels: Vec<u8>,
}

impl PixelGrid {
    pub fn new(width: u32, height: u32, depth: u8, pixels: Vec<u8>) -> Self {
        assert!((1..=8).contains(&depth), "depth must be 1..=8 bits");
        assert_eq!(pixels.len(), width as usize * height as usize);
        Self {
            width,
            height,
            depth,
            pixels,
        }
    }

    pub fn zeros(width: u32, height: u32, depth: u8) -> Self {
        Self::new(width, height, depth, vec![0; width as usize * height as usize])
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    pub fn same_shape(&self, other: &PixelGrid) -> bool {
        self.width == other.width && self.height == other.height && self.depth == other.depth
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Payload {
    Pixels(PixelGrid),
    Bytes(Vec<u8>),
}

impl Payload {
    pub fn size_bits(&self) -> u64 {
        match self {
            Payload::Pixels(g) => g.pixel_count() as u64 * u64::from(g.depth),
            Payload::Bytes(b) => b.len() as u64 * 8,
        }
    }

    pub fn same_shape(&self, other: &Payload) -> bool {
        match (self, other) {
            (Payload::Pixels(a), Payload::Pixels(b)) => a.same_shape(b),
            (Payload::Bytes(a), Payload::Bytes(b)) => a.len() == b.len(),
            _ => false,
        }
    }

    pub fn as_pixels(&self) -> Option<&PixelGrid> {
        match self {
            Payload::Pixels(g) => Some(g),
            Payload::Bytes(_) => None,
        }
    }
}

/// A single unit of source content.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub id: u64,
    pub payload: Payload,
    pub label: Option<u8>,
}

impl DataPoint {
    pub fn new(id: u64, payload: Payload) -> Self {
        Self {
            id,
            payload,
            label: None,
        }
    }

    pub fn with_label(mut self, label: u8) -> Self {
        self.label = Some(label);
        self
    }

    pub fn size_bits(&self) -> u64 {
        self.payload.size_bits()
    }
}

/// Encoded prompt. `payload_bits` is the exact on-wire size; `size_bpp` is the
/// same quantity normalized by the source pixel count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub source_id: u64,
    pub size_bpp: f64,
    pub payload_bits: u64,
    pub latent: Vec<u8>,
    pub augmentation_fraction: f64,
    pub variant: VariantId,
    pub rng_seed: u64,
}

/// Generated reconstruction of a data point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Approximation {
    pub source_id: u64,
    pub payload: Payload,
    pub generating_prompt_size_bpp: f64,
    /// Quality drawn by codecs that model quality directly instead of
    /// producing pixels (the synthetic codec).
    pub sampled_quality: Option<QualityValue>,
}

impl Approximation {
    pub fn size_bits(&self) -> u64 {
        self.payload.size_bits()
    }
}
