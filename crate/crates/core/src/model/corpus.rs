//! Seeded synthetic corpora.

use std::io::{self, Write};

use rand::Rng;

use super::{brightest_quadrant, DataPoint, Payload, PixelGrid};
use crate::rng;

fn render(width: u32, height: u32, r: &mut impl Rng) -> PixelGrid {
    let (gx, gy) = (r.random_range(-1.0..1.0f64), r.random_range(-1.0..1.0f64));
    let amp = r.random_range(20.0..90.0f64);
    let quadrant = r.random_range(0..4u32);
    let (qw, qh) = (width as f64 / 2.0, height as f64 / 2.0);
    let cx = (quadrant % 2) as f64 * qw + r.random_range(0.25..0.75) * qw;
    let cy = (quadrant / 2) as f64 * qh + r.random_range(0.25..0.75) * qh;
    let radius = r.random_range(0.2..0.45) * qw.min(qh);
    let peak = r.random_range(140.0..250.0f64);
    let mut pixels = Vec::with_capacity((width * height) as usize);
    for y in 0..height {
        for x in 0..width {
            let (u, v) = (x as f64 / width as f64 - 0.5, y as f64 / height as f64 - 0.5);
            let d2 = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (radius * radius);
            let val = 100.0 + amp * (gx * u + gy * v) + peak * (-d2).exp() + r.random_range(-12.0..12.0);
            pixels.push(val.round().clamp(0.0, 255.0) as u8);
        }
    }
    PixelGrid::new(width, height, 8, pixels)
}

/// `n` 8-bit grayscale images (gradient background, one bright blob, noise),
/// labelled with their brightest quadrant. Images whose quadrant rule is
/// ambiguous are redrawn.
pub fn synthetic_corpus(n: usize, width: u32, height: u32, seed: u64) -> Vec<DataPoint> {
    (0..n as u64)
        .map(|id| {
            let mut r = rng::stream(seed, &[id]);
            loop {
                let g = render(width, height, &mut r);
                if let Some(label) = brightest_quadrant(&g) {
                    return DataPoint::new(id, Payload::Pixels(g)).with_label(label);
                }
            }
        })
        .collect()
}

/// `n` opaque data points of `bytes` bytes each, for codecs that never look at
/// content.
pub fn synthetic_opaque_corpus(n: usize, bytes: usize, seed: u64) -> Vec<DataPoint> {
    (0..n as u64)
        .map(|id| {
            let mut r = rng::stream(seed, &[id]);
            let mut b = vec![0u8; bytes];
            r.fill(&mut b[..]);
            DataPoint::new(id, Payload::Bytes(b))
        })
        .collect()
}

/// Binary 8-bit PGM (P5).
pub fn write_pgm<W: Write>(grid: &PixelGrid, mut out: W) -> io::Result<()> {
    let maxval = (1u16 << grid.depth) - 1;
    write!(out, "P5\n{} {}\n{}\n", grid.width, grid.height, maxval)?;
    out.write_all(&grid.pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_seeded_and_labelled() {
        let a = synthetic_corpus(20, 16, 12, 4);
        assert_eq!(a, synthetic_corpus(20, 16, 12, 4));
        assert_ne!(a, synthetic_corpus(20, 16, 12, 5));
        for x in &a {
            let g = x.payload.as_pixels().unwrap();
            assert_eq!(x.label, brightest_quadrant(g));
            assert_eq!(x.size_bits(), 16 * 12 * 8);
        }
    }

    #[test]
    fn pgm_header() {
        let g = PixelGrid::new(3, 2, 8, vec![1, 2, 3, 4, 5, 6]);
        let mut buf = vec![];
        write_pgm(&g, &mut buf).unwrap();
        assert_eq!(&buf[..11], b"P5\n3 2\n255\n");
        assert_eq!(&buf[11..], &[1, 2, 3, 4, 5, 6]);
    }
}
