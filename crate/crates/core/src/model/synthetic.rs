use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use super::{
    Approximation, CodecDescriptor, CodecError, CodecFamily, DataPoint, GenerativeCodec, Payload, Prompt, QualityKind,
    QualityMetric, QualityPolicy, QualityValue, VariantId,
};
use crate::rng;

/// Shape of the zero-mean, unit-variance noise added to the mean curve.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum NoiseShape {
    #[default]
    Gaussian,
    /// Student-t with `dof > 2`, rescaled to unit variance.
    StudentT { dof: f64 },
}

/// Ground-truth rate-quality law: mean `q_max·(1 − e^{−beta·L})`, noise
/// standard deviation `sigma0·e^{−gamma·L}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticRQLaw {
    pub q_max: f64,
    pub beta: f64,
    pub sigma0: f64,
    pub gamma: f64,
    #[serde(default)]
    pub noise: NoiseShape,
}

impl SyntheticRQLaw {
    pub fn new(q_max: f64, beta: f64, sigma0: f64, gamma: f64) -> Self {
        assert!(q_max > 0.0 && beta > 0.0 && sigma0 >= 0.0 && gamma >= 0.0);
        Self {
            q_max,
            beta,
            sigma0,
            gamma,
            noise: NoiseShape::Gaussian,
        }
    }

    pub fn with_noise(mut self, noise: NoiseShape) -> Self {
        if let NoiseShape::StudentT { dof } = noise {
            assert!(dof > 2.0, "Student-t noise needs dof > 2 for a finite variance");
        }
        self.noise = noise;
        self
    }

    pub fn mean(&self, l_p: f64) -> f64 {
        self.q_max * (1.0 - (-self.beta * l_p).exp())
    }

    pub fn sd(&self, l_p: f64) -> f64 {
        self.sigma0 * (-self.gamma * l_p).exp()
    }

    /// Unit-variance noise draw.
    pub fn noise_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.noise {
            NoiseShape::Gaussian => StandardNormal.sample(rng),
            NoiseShape::StudentT { dof } => {
                let t: f64 = StudentT::new(dof).expect("dof > 2").sample(rng);
                t * ((dof - 2.0) / dof).sqrt()
            }
        }
    }

    /// Raw (unclamped) quality draw.
    pub fn draw<R: Rng + ?Sized>(&self, l_p: f64, rng: &mut R) -> f64 {
        let z = self.noise_draw(rng);
        self.mean(l_p) + self.sd(l_p) * z
    }
}

/// One quality observation from `law` at prompt size `l_p`, deterministic per
/// seed and clamped to the policy's floor and cap.
pub fn sample_quality(law: &SyntheticRQLaw, l_p: f64, seed: u64, policy: &QualityPolicy) -> QualityValue {
    let mut r = rng::stream(seed, &[]);
    let q = policy.clamp(law.draw(l_p, &mut r));
    QualityValue {
        value: q,
        kind: QualityKind::DeviationBased,
        distance: Some(1.0 / q),
    }
}

/// Codec that produces no pixels: the generator attaches a quality drawn from
/// a [`SyntheticRQLaw`]. Data points are opaque byte payloads treated as
/// images of `pixels` pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCodec {
    pub law: SyntheticRQLaw,
    pub l_min: f64,
    pub l_max: f64,
    pub pixels: u64,
    pub generation_time: f64,
    pub policy: QualityPolicy,
}

impl SyntheticCodec {
    pub fn new(law: SyntheticRQLaw, l_min: f64, pixels: u64) -> Self {
        Self {
            law,
            l_min,
            l_max: f64::MAX,
            pixels,
            generation_time: 0.0,
            policy: QualityPolicy::default(),
        }
    }
}

impl GenerativeCodec for SyntheticCodec {
    fn descriptor(&self) -> CodecDescriptor {
        CodecDescriptor {
            family: CodecFamily::Synthetic,
            modality: "synthetic".into(),
            l_min: self.l_min,
            l_max: self.l_max,
            supports_augmented_generation: true,
            generation_time: self.generation_time,
            variants: vec![0],
        }
    }

    fn policy(&self) -> QualityPolicy {
        self.policy
    }

    fn min_prompt_bpp(&self, _x: &DataPoint, variant: VariantId) -> Result<f64, CodecError> {
        if variant != 0 {
            return Err(CodecError::UnsupportedVariant(variant));
        }
        Ok(self.l_min)
    }

    fn encode(&self, x: &DataPoint, target_bpp: f64, variant: VariantId, seed: u64) -> Result<Prompt, CodecError> {
        if variant != 0 {
            return Err(CodecError::UnsupportedVariant(variant));
        }
        if !(target_bpp >= self.l_min) {
            return Err(CodecError::PromptTooSmall {
                requested: target_bpp,
                minimum: self.l_min,
            });
        }
        let target = target_bpp.min(self.l_max);
        let payload_bits = ((target * self.pixels as f64).round() as u64).max(1);
        Ok(Prompt {
            source_id: x.id,
            size_bpp: payload_bits as f64 / self.pixels as f64,
            payload_bits,
            latent: x.size_bits().to_le_bytes().to_vec(),
            augmentation_fraction: 0.0,
            variant,
            rng_seed: seed,
        })
    }

    fn generate(&self, prompt: &Prompt) -> Result<Approximation, CodecError> {
        if prompt.variant != 0 {
            return Err(CodecError::VariantMismatch(format!(
                "synthetic codec has no variant {}",
                prompt.variant
            )));
        }
        let source_bits = <[u8; 8]>::try_from(prompt.latent.as_slice())
            .map(u64::from_le_bytes)
            .map_err(|_| CodecError::VariantMismatch("latent is not a synthetic-codec latent".into()))?;
        let quality = sample_quality(&self.law, prompt.size_bpp, prompt.rng_seed, &self.policy);
        Ok(Approximation {
            source_id: prompt.source_id,
            payload: Payload::Bytes(vec![0; source_bits.div_ceil(8) as usize]),
            generating_prompt_size_bpp: prompt.size_bpp,
            sampled_quality: Some(quality),
        })
    }

    fn measure(&self, _x: &DataPoint, xhat: &Approximation, metric: QualityMetric) -> Result<QualityValue, CodecError> {
        let mut q = xhat.sampled_quality.ok_or(CodecError::UnsupportedPayload(
            "approximation carries no sampled quality",
        ))?;
        q.kind = metric.kind();
        Ok(q)
    }

    fn pixel_count(&self, _x: &DataPoint) -> u64 {
        self.pixels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_free_closed_form() {
        let law = SyntheticRQLaw::new(10.0, 1.0, 0.0, 0.0);
        let q = sample_quality(&law, 2f64.ln(), 1, &QualityPolicy::default());
        assert!((q.value - 5.0).abs() < 1e-12);
    }

    #[test]
    fn saturates_at_q_max() {
        let law = SyntheticRQLaw::new(10.0, 1.0, 0.5, 0.1);
        let l = 60.0;
        for seed in 0..100 {
            let q = sample_quality(&law, l, seed, &QualityPolicy::default()).value;
            assert!((q - 10.0).abs() <= 3.0 * law.sd(l) + 1e-9);
        }
    }

    #[test]
    fn monte_carlo_moments_match_law() {
        let law = SyntheticRQLaw::new(10.0, 1.0, 0.8, 0.2);
        let l = 1.5;
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|i| sample_quality(&law, l, rng::derive_seed(5, &[i]), &QualityPolicy::default()).value)
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - law.mean(l)).abs() < 0.01 * law.q_max);
        assert!((var.sqrt() / law.sd(l) - 1.0).abs() < 0.05);
    }

    #[test]
    fn student_noise_has_unit_variance() {
        let law = SyntheticRQLaw::new(10.0, 1.0, 1.0, 0.0).with_noise(NoiseShape::StudentT { dof: 5.0 });
        let mut r = rng::stream(9, &[]);
        let n = 200_000;
        let v = (0..n).map(|_| law.noise_draw(&mut r).powi(2)).sum::<f64>() / n as f64;
        assert!((v - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn variance_decreases_with_prompt_size() {
        let law = SyntheticRQLaw::new(10.0, 1.0, 1.0, 0.5);
        let mut prev = f64::INFINITY;
        for (g, l) in [0.5, 1.5, 3.0].into_iter().enumerate() {
            let mut r = rng::stream(17, &[g as u64]);
            let xs: Vec<f64> = (0..10_000).map(|_| law.draw(l, &mut r)).collect();
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
            assert!(v < prev);
            prev = v;
        }
        for w in [0.1, 0.5, 1.0, 2.0, 4.0].windows(2) {
            assert!(law.mean(w[0]) < law.mean(w[1]));
        }
    }

    #[test]
    fn encode_checks_minimum_and_generate_is_deterministic() {
        let codec = SyntheticCodec::new(SyntheticRQLaw::new(10.0, 1.0, 1.0, 0.0), 0.25, 1000);
        let x = DataPoint::new(3, Payload::Bytes(vec![0; 16]));
        assert!(matches!(
            codec.encode(&x, 0.1, 0, 1),
            Err(CodecError::PromptTooSmall { .. })
        ));
        assert_eq!(codec.encode(&x, 0.5, 1, 1), Err(CodecError::UnsupportedVariant(1)));
        let p = codec.encode(&x, 0.5004, 0, 42).unwrap();
        assert_eq!(p.payload_bits, 500);
        assert!((p.size_bpp - 0.5004).abs() <= 1.0 / 1000.0);
        let a = codec.generate(&p).unwrap();
        assert_eq!(a, codec.generate(&p).unwrap());
        assert_eq!(a.size_bits(), x.size_bits());
    }
}
