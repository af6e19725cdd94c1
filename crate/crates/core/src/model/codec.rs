use serde::{Deserialize, Serialize};

use super::{
    Approximation, CodecError, DataPoint, Prompt, QualityMetric, QualityPolicy, QualityValue, SyntheticCodec,
    SyntheticRQLaw, ToyImageCodec, ToyVariant, VariantId,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CodecFamily {
    Synthetic,
    ToyImage,
}

/// Capabilities a generative node advertises for its codec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecDescriptor {
    pub family: CodecFamily,
    pub modality: String,
    /// Smallest prompt size any variant can produce, in bpp.
    pub l_min: f64,
    /// Largest prompt size, in bpp.
    pub l_max: f64,
    pub supports_augmented_generation: bool,
    /// Generation time per data point, seconds.
    pub generation_time: f64,
    pub variants: Vec<VariantId>,
}

impl CodecDescriptor {
    pub fn supports_size(&self, bpp: f64) -> bool {
        bpp >= self.l_min && bpp <= self.l_max
    }
}

/// Encoder `f_θ`, generator `g_θ` and the quality measurement that goes with
/// the codec's output.
pub trait GenerativeCodec: Send + Sync {
    fn descriptor(&self) -> CodecDescriptor;

    fn policy(&self) -> QualityPolicy;

    /// Smallest prompt size for `variant` and data point `x`, in bpp.
    fn min_prompt_bpp(&self, x: &DataPoint, variant: VariantId) -> Result<f64, CodecError>;

    fn encode(&self, x: &DataPoint, target_bpp: f64, variant: VariantId, seed: u64) -> Result<Prompt, CodecError>;

    fn generate(&self, prompt: &Prompt) -> Result<Approximation, CodecError>;

    fn measure(&self, x: &DataPoint, xhat: &Approximation, metric: QualityMetric) -> Result<QualityValue, CodecError>;

    /// Pixel count used to normalize sizes into bpp.
    fn pixel_count(&self, x: &DataPoint) -> u64;
}

/// Serializable codec configuration, as stored in registries and run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum CodecSpec {
    Synthetic {
        law: SyntheticRQLaw,
        l_min: f64,
        #[serde(default = "default_l_max")]
        l_max: f64,
        pixels: u64,
        #[serde(default)]
        generation_time: f64,
        #[serde(default)]
        policy: QualityPolicy,
    },
    ToyImage {
        #[serde(default = "ToyVariant::defaults")]
        variants: Vec<ToyVariant>,
        #[serde(default)]
        generation_time: f64,
        #[serde(default)]
        policy: QualityPolicy,
    },
}

fn default_l_max() -> f64 {
    f64::MAX
}

impl CodecSpec {
    pub fn build(&self) -> Box<dyn GenerativeCodec> {
        match self {
            CodecSpec::Synthetic {
                law,
                l_min,
                l_max,
                pixels,
                generation_time,
                policy,
            } => Box::new(SyntheticCodec {
                law: *law,
                l_min: *l_min,
                l_max: *l_max,
                pixels: *pixels,
                generation_time: *generation_time,
                policy: *policy,
            }),
            CodecSpec::ToyImage {
                variants,
                generation_time,
                policy,
            } => Box::new(ToyImageCodec {
                variants: variants.clone(),
                generation_time: *generation_time,
                policy: *policy,
            }),
        }
    }

    pub fn family(&self) -> CodecFamily {
        match self {
            CodecSpec::Synthetic { .. } => CodecFamily::Synthetic,
            CodecSpec::ToyImage { .. } => CodecFamily::ToyImage,
        }
    }
}
