use serde::{Deserialize, Serialize};

use super::{Approximation, CodecError, DataPoint, PixelGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QualityKind {
    DeviationBased,
    GoalOriented,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMetric {
    Mse,
    Mae,
}

/// What a measuring site computes on a received approximation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QualityMetric {
    Deviation(DistanceMetric),
    /// Brightest-quadrant classification checked against the source label.
    Goal,
}

impl QualityMetric {
    pub fn kind(self) -> QualityKind {
        match self {
            QualityMetric::Deviation(_) => QualityKind::DeviationBased,
            QualityMetric::Goal => QualityKind::GoalOriented,
        }
    }
}

/// Bounds applied to every quality value so that statistics stay finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityPolicy {
    /// Quality reported for a perfect reconstruction (distance 0).
    pub q_cap: f64,
    /// Smallest quality ever reported.
    pub eps_floor: f64,
}

impl Default for QualityPolicy {
    fn default() -> Self {
        Self {
            q_cap: 1000.0,
            eps_floor: 1e-6,
        }
    }
}

impl QualityPolicy {
    pub fn clamp(&self, q: f64) -> f64 {
        q.max(self.eps_floor).min(self.q_cap)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityValue {
    pub value: f64,
    pub kind: QualityKind,
    pub distance: Option<f64>,
}

impl QualityValue {
    pub fn from_distance(distance: f64, policy: &QualityPolicy) -> Self {
        let value = if distance > 0.0 {
            (1.0 / distance).min(policy.q_cap)
        } else {
            policy.q_cap
        };
        Self {
            value,
            kind: QualityKind::DeviationBased,
            distance: Some(distance),
        }
    }
}

fn grids<'a>(x: &'a DataPoint, xhat: &'a Approximation) -> Result<(&'a PixelGrid, &'a PixelGrid), CodecError> {
    match (x.payload.as_pixels(), xhat.payload.as_pixels()) {
        (Some(a), Some(b)) if a.same_shape(b) => Ok((a, b)),
        (Some(_), Some(_)) => Err(CodecError::ShapeMismatch),
        _ => Err(CodecError::UnsupportedPayload("deviation metrics need pixel payloads")),
    }
}

/// Deviation-based quality `1/δ(x, x̂)`, capped at `policy.q_cap`.
pub fn quality_deviation(
    x: &DataPoint,
    xhat: &Approximation,
    metric: DistanceMetric,
    policy: &QualityPolicy,
) -> Result<QualityValue, CodecError> {
    let (a, b) = grids(x, xhat)?;
    let n = a.pixel_count() as f64;
    let pairs = a.pixels.iter().zip(&b.pixels);
    let delta = match metric {
        DistanceMetric::Mse => {
            pairs
                .map(|(&p, &q)| {
                    let d = f64::from(p) - f64::from(q);
                    d * d
                })
                .sum::<f64>()
                / n
        }
        DistanceMetric::Mae => pairs.map(|(&p, &q)| (f64::from(p) - f64::from(q)).abs()).sum::<f64>() / n,
    };
    Ok(QualityValue::from_distance(delta, policy))
}

/// Index of the quadrant with the largest intensity sum (0 top-left,
/// 1 top-right, 2 bottom-left, 3 bottom-right). `None` when the maximum is
/// shared, which is also the answer for a flat image.
pub fn brightest_quadrant(grid: &PixelGrid) -> Option<u8> {
    let (hw, hh) = (grid.width / 2, grid.height / 2);
    let mut sums = [0u64; 4];
    for y in 0..grid.height {
        for x in 0..grid.width {
            let q = usize::from(x >= hw) + 2 * usize::from(y >= hh);
            sums[q] += u64::from(grid.get(x, y));
        }
    }
    let max = *sums.iter().max()?;
    let mut winners = sums.iter().enumerate().filter(|(_, &s)| s == max);
    let (idx, _) = winners.next()?;
    if winners.next().is_some() {
        None
    } else {
        Some(idx as u8)
    }
}

/// Goal-oriented quality: 1 when the brightest-quadrant rule applied to `xhat`
/// reproduces `label`, else `eps_floor`.
pub fn quality_goal(
    xhat: &Approximation,
    label: Option<u8>,
    policy: &QualityPolicy,
) -> Result<QualityValue, CodecError> {
    let label = label.ok_or(CodecError::MissingLabel)?;
    let grid = xhat
        .payload
        .as_pixels()
        .ok_or(CodecError::UnsupportedPayload("goal rule needs a pixel payload"))?;
    let value = if brightest_quadrant(grid) == Some(label) {
        1.0
    } else {
        policy.eps_floor
    };
    Ok(QualityValue {
        value,
        kind: QualityKind::GoalOriented,
        distance: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Payload;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn point(w: u32, h: u32, px: Vec<u8>) -> DataPoint {
        DataPoint::new(0, Payload::Pixels(PixelGrid::new(w, h, 8, px)))
    }

    fn approx(w: u32, h: u32, px: Vec<u8>) -> Approximation {
        Approximation {
            source_id: 0,
            payload: Payload::Pixels(PixelGrid::new(w, h, 8, px)),
            generating_prompt_size_bpp: 1.0,
            sampled_quality: None,
        }
    }

    #[test]
    fn hand_computed_mse() {
        let p = QualityPolicy::default();
        let q = quality_deviation(
            &point(2, 1, vec![0, 0]),
            &approx(2, 1, vec![2, 2]),
            DistanceMetric::Mse,
            &p,
        )
        .unwrap();
        assert_eq!(q.distance, Some(4.0));
        assert_eq!(q.value, 0.25);
        let q = quality_deviation(
            &point(2, 1, vec![0, 0]),
            &approx(2, 1, vec![2, 2]),
            DistanceMetric::Mae,
            &p,
        )
        .unwrap();
        assert_eq!(q.value, 0.5);
    }

    #[test]
    fn identical_maps_to_cap() {
        let p = QualityPolicy::default();
        let px = vec![3, 9, 200, 7];
        let q = quality_deviation(&point(2, 2, px.clone()), &approx(2, 2, px), DistanceMetric::Mse, &p).unwrap();
        assert_eq!(q.value, 1000.0);
        assert_eq!(q.distance, Some(0.0));
    }

    #[test]
    fn random_pair_matches_brute_force_mse() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a: Vec<u8> = (0..64).map(|_| rng.random()).collect();
        let b: Vec<u8> = (0..64).map(|_| rng.random()).collect();
        let mut sse = 0.0;
        for i in 0..64 {
            let d = a[i] as f64 - b[i] as f64;
            sse += d * d;
        }
        let expected = 1.0 / (sse / 64.0);
        let q = quality_deviation(
            &point(8, 8, a),
            &approx(8, 8, b),
            DistanceMetric::Mse,
            &QualityPolicy::default(),
        )
        .unwrap();
        assert!((q.value - expected).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let r = quality_deviation(
            &point(2, 1, vec![0, 0]),
            &approx(1, 2, vec![0, 0]),
            DistanceMetric::Mse,
            &QualityPolicy::default(),
        );
        assert_eq!(r, Err(CodecError::ShapeMismatch));
    }

    #[test]
    fn goal_rule() {
        let p = QualityPolicy::default();
        // bright top-right quadrant in a 4x4 image
        let mut px = vec![10u8; 16];
        for (x, y) in [(2, 0), (3, 0), (2, 1), (3, 1)] {
            px[y * 4 + x] = 250;
        }
        let grid = PixelGrid::new(4, 4, 8, px.clone());
        assert_eq!(brightest_quadrant(&grid), Some(1));
        assert_eq!(quality_goal(&approx(4, 4, px), Some(1), &p).unwrap().value, 1.0);
        let zero = approx(4, 4, vec![0; 16]);
        for label in 0..4 {
            assert_eq!(quality_goal(&zero, Some(label), &p).unwrap().value, 1e-6);
        }
        assert_eq!(quality_goal(&zero, None, &p), Err(CodecError::MissingLabel));
    }
}
