use serde::{Serialize, Serializer};

use super::ExperimentError;
use crate::budget::megabits_to_bits;
use crate::protocol::{per_point_cost, LearningVariant, PointSizes};

/// Viability point: number of post-learning transmissions needed to recover
/// the learning cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Viability {
    Point(u64),
    NotViable,
}

impl Serialize for Viability {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Viability::Point(n) => s.serialize_u64(*n),
            Viability::NotViable => s.serialize_str("NOT_VIABLE"),
        }
    }
}

/// `⌈K_L / w⌉` for positive savings, otherwise not viable.
pub fn viability(k_bits: u64, w_bits: i64) -> Viability {
    if w_bits <= 0 {
        Viability::NotViable
    } else {
        Viability::Point(k_bits.div_ceil(w_bits as u64))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViabilityRecord {
    pub method: String,
    #[serde(rename = "Q_min")]
    pub q_min: f64,
    #[serde(rename = "N_L_opt")]
    pub n_l_opt: Option<u64>,
    #[serde(rename = "K_L_bits")]
    pub k_l_bits: u64,
    pub w_bits: i64,
    #[serde(rename = "N_V")]
    pub n_v: Viability,
}

impl ViabilityRecord {
    pub fn new(method: impl Into<String>, q_min: f64, n_l_opt: Option<u64>, k_l_bits: u64, w_bits: i64) -> Self {
        Self {
            method: method.into(),
            q_min,
            n_l_opt,
            k_l_bits,
            w_bits,
            n_v: viability(k_l_bits, w_bits),
        }
    }
}

/// Per-point sizes behind the learning-cost table, bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CostSizes {
    pub original_bits: u64,
    pub min_prompt_bits: u64,
    pub avg_prompt_bits: u64,
    pub generated_bits: u64,
}

/// Sizes of a VGA image workload.
pub const REFERENCE_SIZES: CostSizes = CostSizes {
    original_bits: 1_482_000,
    min_prompt_bits: 92_000,
    avg_prompt_bits: 787_000,
    generated_bits: 1_482_000,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LearningCostRow {
    pub variant: LearningVariant,
    #[serde(rename = "N_p")]
    pub n_p: u64,
    pub kappa_bits: u64,
}

/// Per-point learning cost of every variant at each `N_p`, with all `N_p`
/// prompts at the average size. Rows are grouped by variant.
pub fn learning_costs(sizes: &CostSizes, n_p_values: &[u64]) -> Result<Vec<LearningCostRow>, ExperimentError> {
    if n_p_values.contains(&0) {
        return Err(super::invalid("N_p must be at least 1"));
    }
    let mut rows = Vec::new();
    for variant in LearningVariant::ALL {
        for &n_p in n_p_values {
            let point = PointSizes {
                prompt_bits: vec![sizes.avg_prompt_bits; n_p as usize],
                min_prompt_bits: sizes.min_prompt_bits,
                original_bits: sizes.original_bits,
                generated_bits: sizes.generated_bits,
            };
            let kappa_bits = per_point_cost(variant, &point).map_err(|e| super::invalid(e.to_string()))?;
            rows.push(LearningCostRow {
                variant,
                n_p,
                kappa_bits,
            });
        }
    }
    Ok(rows)
}

/// One transcribed row of published viability results.
#[derive(Debug, Clone, PartialEq)]
pub struct PublishedViability {
    pub method: String,
    /// Threshold as printed.
    pub q_min: String,
    pub budget: u64,
    pub k_l_bits: u64,
    pub w_png_bits: i64,
    pub nv_png: Viability,
    pub w_jpeg_bits: i64,
    pub nv_jpeg: Viability,
}

impl PublishedViability {
    /// Viability records against both baselines.
    pub fn records(&self) -> Result<[ViabilityRecord; 2], ExperimentError> {
        let q: f64 = self
            .q_min
            .parse()
            .map_err(|_| super::invalid(format!("bad threshold {:?}", self.q_min)))?;
        Ok([
            ViabilityRecord::new(
                format!("{}-PNG", self.method),
                q,
                Some(self.budget),
                self.k_l_bits,
                self.w_png_bits,
            ),
            ViabilityRecord::new(
                format!("{}-JPEG", self.method),
                q,
                Some(self.budget),
                self.k_l_bits,
                self.w_jpeg_bits,
            ),
        ])
    }
}

pub const PUBLISHED_VIABILITY_CSV: &str = include_str!("../../data/published_viability.csv");

fn signed_megabits(s: &str) -> Option<i64> {
    let t = s.trim();
    let (neg, mag) = t.strip_prefix('-').map_or((false, t), |m| (true, m));
    let bits = i64::try_from(megabits_to_bits(mag).ok()?).ok()?;
    Some(if neg { -bits } else { bits })
}

fn published(s: &str) -> Option<Viability> {
    match s.trim() {
        "N/A" => Some(Viability::NotViable),
        t => t.parse().ok().map(Viability::Point),
    }
}

/// Parses the transcription format: `#` comments, a header, then
/// `method,q_min,budget,k_l_mb,w_png_mb,nv_png,w_jpeg_mb,nv_jpeg`.
pub fn parse_published_viability(text: &str) -> Result<Vec<PublishedViability>, ExperimentError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |reason: &str| ExperimentError::MalformedRow {
            line,
            reason: reason.to_string(),
        };
        if rec.len() != 8 {
            return Err(bad("expected 8 fields"));
        }
        let k = megabits_to_bits(&rec[3]).map_err(|_| bad("bad K_L"))?;
        rows.push(PublishedViability {
            method: rec[0].to_string(),
            q_min: rec[1].to_string(),
            budget: rec[2].parse().map_err(|_| bad("bad budget"))?,
            k_l_bits: k,
            w_png_bits: signed_megabits(&rec[4]).ok_or_else(|| bad("bad PNG savings"))?,
            nv_png: published(&rec[5]).ok_or_else(|| bad("bad PNG viability point"))?,
            w_jpeg_bits: signed_megabits(&rec[6]).ok_or_else(|| bad("bad JPEG savings"))?,
            nv_jpeg: published(&rec[7]).ok_or_else(|| bad("bad JPEG viability point"))?,
        });
    }
    Ok(rows)
}

pub fn load_published_viability() -> Result<Vec<PublishedViability>, ExperimentError> {
    parse_published_viability(PUBLISHED_VIABILITY_CSV)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CheckStatus {
    Match,
    /// Differs, but some savings value that rounds to the printed one
    /// reproduces the published point.
    RoundingExplained,
    Mismatch,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViabilityCheck {
    pub method: String,
    #[serde(rename = "Q_min")]
    pub q_min: String,
    pub baseline: String,
    #[serde(rename = "K_L_bits")]
    pub k_l_bits: u64,
    pub w_bits: i64,
    pub published: Viability,
    pub recomputed: Viability,
    pub status: CheckStatus,
}

/// Half a unit in the last printed digit of `w` (0.001 Mb).
const W_HALF_ULP: i64 = 500;

fn classify(k: u64, w: i64, published: Viability) -> (Viability, CheckStatus) {
    let recomputed = viability(k, w);
    let status = if recomputed == published {
        CheckStatus::Match
    } else {
        match (published, viability(k, w + W_HALF_ULP), viability(k, w - W_HALF_ULP)) {
            (Viability::Point(p), Viability::Point(lo), hi) => {
                let within_hi = match hi {
                    Viability::Point(h) => p <= h,
                    Viability::NotViable => true,
                };
                if lo <= p && within_hi {
                    CheckStatus::RoundingExplained
                } else {
                    CheckStatus::Mismatch
                }
            }
            _ => CheckStatus::Mismatch,
        }
    };
    (recomputed, status)
}

/// Recomputes every published viability point from the row's own `K_L`
/// and `w` columns.
pub fn viability_crosscheck(rows: &[PublishedViability]) -> Vec<ViabilityCheck> {
    let mut out = Vec::with_capacity(rows.len() * 2);
    for r in rows {
        for (baseline, w, nv) in [("PNG", r.w_png_bits, r.nv_png), ("JPEG", r.w_jpeg_bits, r.nv_jpeg)] {
            let (recomputed, status) = classify(r.k_l_bits, w, nv);
            out.push(ViabilityCheck {
                method: r.method.clone(),
                q_min: r.q_min.clone(),
                baseline: baseline.to_string(),
                k_l_bits: r.k_l_bits,
                w_bits: w,
                published: nv,
                recomputed,
                status,
            });
        }
    }
    out
}
