//! Toy image codec.
//!
//! The latent is a box-filtered `factor`×`factor` downsample quantized to
//! `latent_bits` per sample; generation upsamples it with nearest-neighbour
//! replication. Prompts may additionally carry a random fraction of the
//! original pixels (pixel swapping). Swap positions come from the prompt seed,
//! which both ends share, so only the pixel values travel:
//! `size_bpp = base_latent_bpp + fraction·depth`.
//!
//! Latent layout: `width u32le | height u32le | depth u8 | factor u8 |
//! latent_bits u8 | variant u8 | swapped u32le | samples.. | swapped values..`,
//! one byte per sample. The nominal bit size charged on the wire is
//! `samples·latent_bits + swapped·depth`.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{
    quality_deviation, quality_goal, Approximation, CodecDescriptor, CodecError, CodecFamily, DataPoint,
    GenerativeCodec, Payload, PixelGrid, Prompt, QualityMetric, QualityPolicy, QualityValue, VariantId,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyVariant {
    pub id: VariantId,
    pub factor: u32,
    pub latent_bits: u8,
}

impl ToyVariant {
    /// Downsample factors 2, 4 and 8 with 4-bit latents.
    pub fn defaults() -> Vec<ToyVariant> {
        [2, 4, 8]
            .into_iter()
            .enumerate()
            .map(|(i, factor)| ToyVariant {
                id: i as u8,
                factor,
                latent_bits: 4,
            })
            .collect()
    }

    fn latent_dims(&self, g: &PixelGrid) -> (u32, u32) {
        (g.width.div_ceil(self.factor), g.height.div_ceil(self.factor))
    }

    pub fn base_bits(&self, g: &PixelGrid) -> u64 {
        let (lw, lh) = self.latent_dims(g);
        u64::from(lw) * u64::from(lh) * u64::from(self.latent_bits)
    }

    pub fn base_bpp(&self, g: &PixelGrid) -> f64 {
        self.base_bits(g) as f64 / g.pixel_count() as f64
    }

    /// Nominal base size for dimensions divisible by the factor.
    pub fn nominal_base_bpp(&self) -> f64 {
        f64::from(self.latent_bits) / f64::from(self.factor * self.factor)
    }
}

/// Positions of the `count` pixels replaced by originals, drawn uniformly
/// without replacement from a stream keyed by `seed`.
pub fn swap_indices(pixel_count: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut r = rng::stream(seed, &[0x5a5a]);
    index::sample(&mut r, pixel_count, count).into_vec()
}

fn swap_count(fraction: f64, pixel_count: usize) -> usize {
    (fraction * pixel_count as f64).round() as usize
}

/// Replaces `round(fraction·P)` seeded-random pixels of `generated` with the
/// original's values.
pub fn pixel_swap(
    generated: &Approximation,
    original: &DataPoint,
    fraction: f64,
    seed: u64,
) -> Result<Approximation, CodecError> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(CodecError::InvalidFraction(fraction));
    }
    let (gen, orig) = match (&generated.payload, &original.payload) {
        (Payload::Pixels(g), Payload::Pixels(o)) if g.same_shape(o) => (g, o),
        _ => return Err(CodecError::ShapeMismatch),
    };
    let mut out = gen.clone();
    for i in swap_indices(out.pixel_count(), swap_count(fraction, out.pixel_count()), seed) {
        out.pixels[i] = orig.pixels[i];
    }
    Ok(Approximation {
        payload: Payload::Pixels(out),
        ..generated.clone()
    })
}

fn quant_shift(depth: u8, latent_bits: u8) -> u8 {
    depth.saturating_sub(latent_bits)
}

fn downsample(g: &PixelGrid, v: &ToyVariant) -> Vec<u8> {
    let (lw, lh) = v.latent_dims(g);
    let shift = quant_shift(g.depth, v.latent_bits);
    let mut out = Vec::with_capacity((lw * lh) as usize);
    for by in 0..lh {
        for bx in 0..lw {
            let (mut sum, mut n) = (0u32, 0u32);
            for y in by * v.factor..((by + 1) * v.factor).min(g.height) {
                for x in bx * v.factor..((bx + 1) * v.factor).min(g.width) {
                    sum += u32::from(g.get(x, y));
                    n += 1;
                }
            }
            let avg = (sum + n / 2) / n;
            out.push((avg >> shift) as u8);
        }
    }
    out
}

fn dequantize(q: u8, shift: u8) -> u8 {
    if shift == 0 {
        q
    } else {
        (u16::from(q) << shift | (1u16 << (shift - 1))) as u8
    }
}

fn upsample(samples: &[u8], width: u32, height: u32, depth: u8, v: &ToyVariant) -> PixelGrid {
    let lw = width.div_ceil(v.factor);
    let shift = quant_shift(depth, v.latent_bits);
    let mut pixels = Vec::with_capacity((width * height) as usize);
    for y in 0..height {
        for x in 0..width {
            let q = samples[((y / v.factor) * lw + x / v.factor) as usize];
            pixels.push(dequantize(q, shift));
        }
    }
    PixelGrid::new(width, height, depth, pixels)
}

const HEADER: usize = 4 + 4 + 1 + 1 + 1 + 1 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyImageCodec {
    pub variants: Vec<ToyVariant>,
    pub generation_time: f64,
    pub policy: QualityPolicy,
}

impl Default for ToyImageCodec {
    fn default() -> Self {
        Self {
            variants: ToyVariant::defaults(),
            generation_time: 0.0,
            policy: QualityPolicy::default(),
        }
    }
}

impl ToyImageCodec {
    pub fn variant(&self, id: VariantId) -> Result<&ToyVariant, CodecError> {
        self.variants
            .iter()
            .find(|v| v.id == id)
            .ok_or(CodecError::UnsupportedVariant(id))
    }

    fn grid<'a>(&self, x: &'a DataPoint) -> Result<&'a PixelGrid, CodecError> {
        x.payload
            .as_pixels()
            .ok_or(CodecError::UnsupportedPayload("toy codec needs a pixel payload"))
    }

    /// Encodes with an explicit augmentation fraction instead of a target size.
    pub fn encode_fraction(
        &self,
        x: &DataPoint,
        variant: VariantId,
        fraction: f64,
        seed: u64,
    ) -> Result<Prompt, CodecError> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(CodecError::InvalidFraction(fraction));
        }
        let v = *self.variant(variant)?;
        let g = self.grid(x)?;
        let p = g.pixel_count();
        let swapped = swap_count(fraction, p);
        let samples = downsample(g, &v);
        let mut latent = Vec::with_capacity(HEADER + samples.len() + swapped);
        latent.extend_from_slice(&g.width.to_le_bytes());
        latent.extend_from_slice(&g.height.to_le_bytes());
        latent.extend_from_slice(&[g.depth, v.factor as u8, v.latent_bits, v.id]);
        latent.extend_from_slice(&(swapped as u32).to_le_bytes());
        latent.extend_from_slice(&samples);
        latent.extend(swap_indices(p, swapped, seed).into_iter().map(|i| g.pixels[i]));
        let payload_bits = v.base_bits(g) + swapped as u64 * u64::from(g.depth);
        Ok(Prompt {
            source_id: x.id,
            size_bpp: payload_bits as f64 / p as f64,
            payload_bits,
            latent,
            augmentation_fraction: swapped as f64 / p as f64,
            variant,
            rng_seed: seed,
        })
    }
}

impl GenerativeCodec for ToyImageCodec {
    fn descriptor(&self) -> CodecDescriptor {
        let bases = self.variants.iter().map(ToyVariant::nominal_base_bpp);
        let l_min = bases.clone().fold(f64::INFINITY, f64::min);
        let l_max = bases.fold(0.0, f64::max) + 8.0;
        CodecDescriptor {
            family: CodecFamily::ToyImage,
            modality: "image".into(),
            l_min,
            l_max,
            supports_augmented_generation: true,
            generation_time: self.generation_time,
            variants: self.variants.iter().map(|v| v.id).collect(),
        }
    }

    fn policy(&self) -> QualityPolicy {
        self.policy
    }

    fn min_prompt_bpp(&self, x: &DataPoint, variant: VariantId) -> Result<f64, CodecError> {
        Ok(self.variant(variant)?.base_bpp(self.grid(x)?))
    }

    /// Hits `target_bpp` by choosing the augmentation fraction; sizes above
    /// `base + depth` saturate at a full copy of the original.
    fn encode(&self, x: &DataPoint, target_bpp: f64, variant: VariantId, seed: u64) -> Result<Prompt, CodecError> {
        let v = self.variant(variant)?;
        let g = self.grid(x)?;
        let base = v.base_bpp(g);
        if !(target_bpp >= base - 1e-12) {
            return Err(CodecError::PromptTooSmall {
                requested: target_bpp,
                minimum: base,
            });
        }
        let fraction = ((target_bpp - base) / f64::from(g.depth)).clamp(0.0, 1.0);
        self.encode_fraction(x, variant, fraction, seed)
    }

    fn generate(&self, prompt: &Prompt) -> Result<Approximation, CodecError> {
        let bad = |m: &str| CodecError::VariantMismatch(m.to_string());
        let l = &prompt.latent;
        if l.len() < HEADER {
            return Err(bad("latent too short for the toy codec"));
        }
        let width = u32::from_le_bytes(l[0..4].try_into().unwrap());
        let height = u32::from_le_bytes(l[4..8].try_into().unwrap());
        let (depth, factor, latent_bits, vid) = (l[8], u32::from(l[9]), l[10], l[11]);
        let swapped = u32::from_le_bytes(l[12..16].try_into().unwrap()) as usize;
        let v = self.variant(prompt.variant).map_err(|_| bad("unknown variant"))?;
        if vid != prompt.variant || v.factor != factor || v.latent_bits != latent_bits {
            return Err(bad("latent was encoded for another variant"));
        }
        let n_samples = (width.div_ceil(factor) * height.div_ceil(factor)) as usize;
        if l.len() != HEADER + n_samples + swapped {
            return Err(bad("latent length does not match its header"));
        }
        let mut grid = upsample(&l[HEADER..HEADER + n_samples], width, height, depth, v);
        let values = &l[HEADER + n_samples..];
        for (i, val) in swap_indices(grid.pixel_count(), swapped, prompt.rng_seed)
            .into_iter()
            .zip(values)
        {
            grid.pixels[i] = *val;
        }
        Ok(Approximation {
            source_id: prompt.source_id,
            payload: Payload::Pixels(grid),
            generating_prompt_size_bpp: prompt.size_bpp,
            sampled_quality: None,
        })
    }

    fn measure(&self, x: &DataPoint, xhat: &Approximation, metric: QualityMetric) -> Result<QualityValue, CodecError> {
        match metric {
            QualityMetric::Deviation(m) => quality_deviation(x, xhat, m, &self.policy),
            QualityMetric::Goal => quality_goal(xhat, x.label, &self.policy),
        }
    }

    fn pixel_count(&self, x: &DataPoint) -> u64 {
        x.payload.as_pixels().map_or(0, |g| g.pixel_count() as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{synthetic_corpus, DistanceMetric};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(id: u64, w: u32, h: u32, seed: u64) -> DataPoint {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let px = (0..w * h).map(|_| r.random()).collect();
        DataPoint::new(id, Payload::Pixels(PixelGrid::new(w, h, 8, px)))
    }

    fn approx_of(g: PixelGrid) -> Approximation {
        Approximation {
            source_id: 0,
            payload: Payload::Pixels(g),
            generating_prompt_size_bpp: 0.0,
            sampled_quality: None,
        }
    }

    #[test]
    fn size_formula() {
        let codec = ToyImageCodec::default();
        let x = random_image(1, 16, 16, 1);
        // factor 4, 4-bit latent: 0.25 bpp base
        let p = codec.encode_fraction(&x, 1, 0.25, 9).unwrap();
        assert_eq!(p.size_bpp, 2.25);
        let p = codec.encode_fraction(&x, 1, 1.0, 9).unwrap();
        assert_eq!(p.size_bpp, 8.25);
        assert_eq!(codec.generate(&p).unwrap().payload, x.payload);
        let p = codec.encode_fraction(&x, 1, 0.0, 9).unwrap();
        assert_eq!(p.size_bpp, 0.25);
    }

    #[test]
    fn too_small_and_unknown_variant() {
        let codec = ToyImageCodec::default();
        let x = random_image(1, 16, 16, 1);
        assert!(matches!(
            codec.encode(&x, 0.1, 1, 0),
            Err(CodecError::PromptTooSmall { .. })
        ));
        assert_eq!(codec.encode(&x, 1.0, 7, 0), Err(CodecError::UnsupportedVariant(7)));
    }

    #[test]
    fn encode_hits_target_within_one_step() {
        let codec = ToyImageCodec::default();
        let x = random_image(1, 16, 16, 3);
        let step = 8.0 / 256.0;
        for target in [0.25, 0.3, 1.0, 2.0, 4.4, 7.9] {
            let p = codec.encode(&x, target, 1, 5).unwrap();
            assert!((p.size_bpp - target).abs() <= step, "{target} -> {}", p.size_bpp);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let codec = ToyImageCodec::default();
        let x = random_image(1, 20, 12, 4);
        let p = codec.encode(&x, 3.0, 0, 77).unwrap();
        assert_eq!(codec.generate(&p).unwrap(), codec.generate(&p).unwrap());
        assert_eq!(codec.encode(&x, 3.0, 0, 77).unwrap(), p);
    }

    #[test]
    fn variant_mismatch_detected() {
        let codec = ToyImageCodec::default();
        let x = random_image(1, 16, 16, 1);
        let mut p = codec.encode(&x, 1.0, 1, 0).unwrap();
        p.variant = 2;
        assert!(matches!(codec.generate(&p), Err(CodecError::VariantMismatch(_))));
    }

    /// Independent restatement of the factor-2 rule: block mean with
    /// round-half-up, keep the top 4 bits, reconstruct at the bin centre.
    fn reference_downup2(px: &[u8], w: usize, h: usize) -> Vec<u8> {
        let mut out = vec![0u8; w * h];
        for y in 0..h {
            for x in 0..w {
                let (bx, by) = (x / 2 * 2, y / 2 * 2);
                let mut vals = vec![];
                for yy in by..(by + 2).min(h) {
                    for xx in bx..(bx + 2).min(w) {
                        vals.push(px[yy * w + xx] as f64);
                    }
                }
                let mean = (vals.iter().sum::<f64>() / vals.len() as f64 + 0.5).floor();
                let bin = (mean / 16.0).floor();
                out[y * w + x] = (bin * 16.0 + 8.0) as u8;
            }
        }
        out
    }

    #[test]
    fn checkerboard_matches_reference() {
        let (w, h) = (9usize, 7usize);
        let px: Vec<u8> = (0..w * h)
            .map(|i| if (i % w + i / w) % 2 == 0 { 255 } else { 0 })
            .collect();
        let x = DataPoint::new(0, Payload::Pixels(PixelGrid::new(w as u32, h as u32, 8, px.clone())));
        let codec = ToyImageCodec::default();
        let xhat = codec.generate(&codec.encode_fraction(&x, 0, 0.0, 1).unwrap()).unwrap();
        let expected = reference_downup2(&px, w, h);
        assert_eq!(xhat.payload.as_pixels().unwrap().pixels, expected);
        let mse_ref = px
            .iter()
            .zip(&expected)
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum::<f64>()
            / (w * h) as f64;
        let q = codec
            .measure(&x, &xhat, QualityMetric::Deviation(DistanceMetric::Mse))
            .unwrap();
        assert!((q.value - 1.0 / mse_ref).abs() < 1e-15);
    }

    #[test]
    fn pixel_swap_identities_and_count() {
        let orig = random_image(0, 10, 10, 21);
        let o = orig.payload.as_pixels().unwrap();
        let gen = PixelGrid::new(10, 10, 8, o.pixels.iter().map(|p| p.wrapping_add(1)).collect());
        let generated = approx_of(gen.clone());
        for seed in 0..5 {
            let full = pixel_swap(&generated, &orig, 1.0, seed).unwrap();
            assert_eq!(full.payload, orig.payload);
            let none = pixel_swap(&generated, &orig, 0.0, seed).unwrap();
            assert_eq!(none.payload, generated.payload);
            let half = pixel_swap(&generated, &orig, 0.5, seed).unwrap();
            let hp = &half.payload.as_pixels().unwrap().pixels;
            let differing = hp.iter().zip(&gen.pixels).filter(|(a, b)| a != b).count();
            assert_eq!(differing, 50);
        }
        let other = approx_of(PixelGrid::zeros(5, 20, 8));
        assert_eq!(pixel_swap(&other, &orig, 0.5, 0), Err(CodecError::ShapeMismatch));
        assert_eq!(
            pixel_swap(&generated, &orig, 1.5, 0),
            Err(CodecError::InvalidFraction(1.5))
        );
    }

    #[test]
    fn generate_equals_decode_then_swap() {
        let codec = ToyImageCodec::default();
        let x = random_image(4, 16, 16, 8);
        let base = codec.generate(&codec.encode_fraction(&x, 1, 0.0, 3).unwrap()).unwrap();
        let aug = codec.generate(&codec.encode_fraction(&x, 1, 0.4, 3).unwrap()).unwrap();
        let swapped = pixel_swap(&base, &x, 0.4, 3).unwrap();
        assert_eq!(aug.payload, swapped.payload);
    }

    fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
        fn ranks(v: &[f64]) -> Vec<f64> {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
            let mut r = vec![0.0; v.len()];
            let mut i = 0;
            while i < idx.len() {
                let mut j = i;
                while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                    j += 1;
                }
                for k in i..=j {
                    r[idx[k]] = (i + j) as f64 / 2.0;
                }
                i = j + 1;
            }
            r
        }
        let (rx, ry) = (ranks(xs), ranks(ys));
        let n = xs.len() as f64;
        let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn mean_quality_rises_with_fraction() {
        let codec = ToyImageCodec::default();
        let corpus = synthetic_corpus(200, 16, 16, 99);
        let fractions: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let means: Vec<f64> = fractions
            .iter()
            .map(|&f| {
                corpus
                    .iter()
                    .map(|x| {
                        let p = codec.encode_fraction(x, 1, f, x.id).unwrap();
                        let xhat = codec.generate(&p).unwrap();
                        codec
                            .measure(x, &xhat, QualityMetric::Deviation(DistanceMetric::Mse))
                            .unwrap()
                            .value
                    })
                    .sum::<f64>()
                    / corpus.len() as f64
            })
            .collect();
        assert!(spearman(&fractions, &means) > 0.99, "{means:?}");
    }

    #[test]
    fn goal_success_matches_exhaustive_rule() {
        let codec = ToyImageCodec::default();
        let corpus = synthetic_corpus(100, 16, 16, 5);
        let mut successes = 0;
        let mut brute = 0;
        for x in &corpus {
            let p = codec.encode_fraction(x, 2, 0.9, x.id).unwrap();
            let xhat = codec.generate(&p).unwrap();
            if codec.measure(x, &xhat, QualityMetric::Goal).unwrap().value == 1.0 {
                successes += 1;
            }
            // brute force: recompute quadrant sums directly
            let g = xhat.payload.as_pixels().unwrap();
            let mut sums = [0u64; 4];
            for (i, &v) in g.pixels.iter().enumerate() {
                let (cx, cy) = (i % 16, i / 16);
                sums[(cx >= 8) as usize + 2 * (cy >= 8) as usize] += v as u64;
            }
            let max = *sums.iter().max().unwrap();
            if sums.iter().filter(|&&s| s == max).count() == 1 && sums[x.label.unwrap() as usize] == max {
                brute += 1;
            }
        }
        assert_eq!(successes, brute);
        assert!(successes > 50);
    }
}
