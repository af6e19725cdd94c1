//! Rate-quality estimation.
//!
//! Each prompt size on the grid is treated as its own Gaussian population:
//! the estimate keeps a sample mean, an unbiased residual variance and a
//! sample count per size, and prediction intervals are computed per size from
//! the Student-t distribution with `N_L − k` degrees of freedom. A saturating
//! parametric curve fitted to the per-size means is used only to interpolate
//! and extrapolate between grid points.

mod curve;

pub use curve::RqCurve;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::model::QualityValue;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RqError {
    #[error("no quality samples")]
    EmptyInput,
    #[error("non-finite quality or prompt size in sample for data point {0}")]
    NonFiniteQuality(u64),
    #[error("prompt size {0} is not on the estimate's grid")]
    NotOnGrid(f64),
    #[error("{count} samples at {l_p} bpp do not exceed the {k} fitted parameters")]
    InsufficientSamples { l_p: f64, count: f64, k: u32 },
    #[error("level {0} must lie strictly between 0 and 1")]
    InvalidLevel(f64),
    #[error("prompt size {l_p} is below the smallest grid point {min}")]
    BelowGrid { l_p: f64, min: f64 },
    #[error("pilot sample at {0} bpp does not match the grid")]
    GridMismatch(f64),
    #[error("forgetting factor {0} outside (0, 1]")]
    InvalidForgetting(f64),
    #[error("malformed estimate: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurementSite {
    Source,
    Node,
    Destination,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualitySample {
    pub data_point_id: u64,
    pub l_p: f64,
    pub quality: QualityValue,
    pub site: MeasurementSite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    /// Unknown parameters per grid point; the t-distribution uses `N_L − k`
    /// degrees of freedom.
    pub k: u32,
    /// Multiply interval half-widths by `√(1 + 1/N_L)` (variance of a fresh
    /// observation around an estimated mean).
    pub inflation: bool,
    /// Fit the interpolation curve. Experiments that never interpolate skip it.
    pub fit_curve: bool,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            k: 1,
            inflation: true,
            fit_curve: true,
        }
    }
}

/// Per-grid-point statistics. `count` is the (possibly fractional, after
/// forgetting) weight mass of the samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridStat {
    pub count: f64,
    pub mean: f64,
    pub variance: f64,
}

/// Estimated rate-quality function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "EstimateDoc", try_from = "EstimateDoc")]
pub struct RQEstimate {
    grid: Vec<f64>,
    stats: Vec<GridStat>,
    options: EstimatorOptions,
    curve: Option<RqCurve>,
}

/// Two-sided interval for a fresh quality observation at one prompt size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionBand {
    pub l_p: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub dof: f64,
    pub quantile: f64,
}

impl PredictionBand {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Statistic returned by [`interpolate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Statistic {
    Mean,
    /// One-sided lower bound exceeded with probability `alpha_star`.
    Lower {
        alpha_star: f64,
    },
}

/// `p`-quantile of Student's t with `dof` degrees of freedom.
pub fn t_quantile(p: f64, dof: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    StudentsT::new(0.0, 1.0, dof).expect("dof > 0").inverse_cdf(p)
}

fn column_stats(values: &mut [f64]) -> GridStat {
    // sorted so the result does not depend on sample order
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    if values[0] == values[values.len() - 1] {
        return GridStat {
            count: n,
            mean: values[0],
            variance: 0.0,
        };
    }
    let mean = values.iter().sum::<f64>() / n;
    let variance = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    GridStat {
        count: n,
        mean,
        variance,
    }
}

/// Fits an estimate from quality samples. The grid is the sorted set of
/// distinct prompt sizes present in `samples`.
pub fn fit_rq(samples: &[QualitySample], options: EstimatorOptions) -> Result<RQEstimate, RqError> {
    if samples.is_empty() {
        return Err(RqError::EmptyInput);
    }
    if let Some(s) = samples
        .iter()
        .find(|s| !s.quality.value.is_finite() || !s.l_p.is_finite())
    {
        return Err(RqError::NonFiniteQuality(s.data_point_id));
    }
    let mut sorted: Vec<(f64, f64)> = samples.iter().map(|s| (s.l_p, s.quality.value)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut grid = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (l, q) in sorted {
        if grid.last() != Some(&l) {
            grid.push(l);
            columns.push(Vec::new());
        }
        columns.last_mut().unwrap().push(q);
    }
    RQEstimate::from_columns(grid, columns, options)
}

impl RQEstimate {
    /// Builds an estimate from raw quality columns, one per grid point.
    pub fn from_columns(
        grid: Vec<f64>,
        mut columns: Vec<Vec<f64>>,
        options: EstimatorOptions,
    ) -> Result<Self, RqError> {
        if grid.is_empty() {
            return Err(RqError::EmptyInput);
        }
        if grid.len() != columns.len() || columns.iter().any(Vec::is_empty) {
            return Err(RqError::Malformed("every grid point needs at least one sample".into()));
        }
        let stats = columns.iter_mut().map(|c| column_stats(c)).collect();
        Self::from_stats(grid, stats, options)
    }

    /// Builds an estimate directly from summary statistics.
    pub fn from_stats(grid: Vec<f64>, stats: Vec<GridStat>, options: EstimatorOptions) -> Result<Self, RqError> {
        if grid.is_empty() {
            return Err(RqError::EmptyInput);
        }
        if grid.len() != stats.len() {
            return Err(RqError::Malformed("grid and statistics differ in length".into()));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) || grid.iter().any(|l| !l.is_finite()) {
            return Err(RqError::Malformed("grid must be finite and strictly increasing".into()));
        }
        if stats
            .iter()
            .any(|s| !(s.count > 0.0) || !s.mean.is_finite() || !(s.variance >= 0.0) || !s.variance.is_finite())
        {
            return Err(RqError::Malformed(
                "counts must be positive, means finite, variances non-negative".into(),
            ));
        }
        let mut est = Self {
            grid,
            stats,
            options,
            curve: None,
        };
        est.refit_curve();
        Ok(est)
    }

    fn refit_curve(&mut self) {
        self.curve = self.options.fit_curve.then(|| {
            let means: Vec<f64> = self.stats.iter().map(|s| s.mean).collect();
            RqCurve::fit(&self.grid, &means)
        });
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn stats(&self) -> &[GridStat] {
        &self.stats
    }

    pub fn options(&self) -> EstimatorOptions {
        self.options
    }

    pub fn curve(&self) -> Option<&RqCurve> {
        self.curve.as_ref()
    }

    /// Mean of the grid prompt sizes.
    pub fn average_prompt_size(&self) -> f64 {
        self.grid.iter().sum::<f64>() / self.grid.len() as f64
    }

    pub fn index_of(&self, l_p: f64) -> Option<usize> {
        self.grid.iter().position(|&g| g == l_p)
    }

    pub fn stat_at(&self, l_p: f64) -> Result<&GridStat, RqError> {
        self.index_of(l_p)
            .map(|i| &self.stats[i])
            .ok_or(RqError::NotOnGrid(l_p))
    }

    fn spread(&self, l_p: f64, stat: &GridStat) -> Result<(f64, f64), RqError> {
        let dof = stat.count - f64::from(self.options.k);
        if !(dof > 0.0) {
            return Err(RqError::InsufficientSamples {
                l_p,
                count: stat.count,
                k: self.options.k,
            });
        }
        let inflate = if self.options.inflation {
            (1.0 + 1.0 / stat.count).sqrt()
        } else {
            1.0
        };
        Ok((dof, stat.variance.sqrt() * inflate))
    }
}

/// Two-sided `1 − alpha` prediction band at grid point `l_p`.
pub fn prediction_interval(est: &RQEstimate, l_p: f64, alpha: f64) -> Result<PredictionBand, RqError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(RqError::InvalidLevel(alpha));
    }
    let stat = est.stat_at(l_p)?;
    let (dof, scale) = est.spread(l_p, stat)?;
    let quantile = t_quantile(1.0 - alpha / 2.0, dof);
    let half = if stat.variance == 0.0 { 0.0 } else { quantile * scale };
    Ok(PredictionBand {
        l_p,
        mean: stat.mean,
        lower: stat.mean - half,
        upper: stat.mean + half,
        alpha,
        dof,
        quantile,
    })
}

/// Quality a fresh observation at `l_p` exceeds with estimated probability
/// `alpha_star`.
pub fn lower_quality_bound(est: &RQEstimate, l_p: f64, alpha_star: f64) -> Result<f64, RqError> {
    if !(alpha_star > 0.0 && alpha_star < 1.0) {
        return Err(RqError::InvalidLevel(alpha_star));
    }
    let stat = est.stat_at(l_p)?;
    let (dof, scale) = est.spread(l_p, stat)?;
    if stat.variance == 0.0 {
        return Ok(stat.mean);
    }
    Ok(stat.mean - t_quantile(alpha_star, dof) * scale)
}

fn statistic_at(est: &RQEstimate, i: usize, which: Statistic) -> Result<f64, RqError> {
    match which {
        Statistic::Mean => Ok(est.stats[i].mean),
        Statistic::Lower { alpha_star } => lower_quality_bound(est, est.grid[i], alpha_star),
    }
}

/// Piecewise-linear interpolation of `which` between grid points. Above the
/// grid the value is clamped to the last grid point, or, with `extrapolate`,
/// read off the fitted curve (lower bounds keep the last grid point's margin
/// below the mean).
pub fn interpolate(est: &RQEstimate, l_p: f64, which: Statistic, extrapolate: bool) -> Result<f64, RqError> {
    let grid = &est.grid;
    if !(l_p >= grid[0]) {
        return Err(RqError::BelowGrid { l_p, min: grid[0] });
    }
    let last = grid.len() - 1;
    if l_p >= grid[last] {
        let at_last = statistic_at(est, last, which)?;
        return match (extrapolate && l_p > grid[last], est.curve) {
            (true, Some(curve)) => Ok(curve.eval(l_p) - (est.stats[last].mean - at_last)),
            _ => Ok(at_last),
        };
    }
    let hi = grid.partition_point(|&g| g <= l_p);
    let lo = hi - 1;
    if grid[lo] == l_p {
        return statistic_at(est, lo, which);
    }
    let (y0, y1) = (statistic_at(est, lo, which)?, statistic_at(est, hi, which)?);
    let t = (l_p - grid[lo]) / (grid[hi] - grid[lo]);
    Ok(y0 + t * (y1 - y0))
}

/// Folds pilot samples into the estimate with exponential forgetting.
///
/// Each sample decays the existing weight mass of its grid point by
/// `forgetting` before being added with unit weight (weighted Welford update).
/// `forgetting = 1` reproduces the pooled statistics.
pub fn update_with_pilot(est: &RQEstimate, new: &[QualitySample], forgetting: f64) -> Result<RQEstimate, RqError> {
    if !(forgetting > 0.0 && forgetting <= 1.0) {
        return Err(RqError::InvalidForgetting(forgetting));
    }
    let mut out = est.clone();
    for s in new {
        let i = est.index_of(s.l_p).ok_or(RqError::GridMismatch(s.l_p))?;
        let x = s.quality.value;
        if !x.is_finite() {
            return Err(RqError::NonFiniteQuality(s.data_point_id));
        }
        let st = &mut out.stats[i];
        let weight = forgetting * st.count;
        let m2 = forgetting * st.variance * (st.count - 1.0).max(0.0);
        let total = weight + 1.0;
        let delta = x - st.mean;
        let mean = st.mean + delta / total;
        let m2 = m2 + weight * delta * delta / total;
        st.count = total;
        st.mean = mean;
        st.variance = if total > 1.0 {
            (m2 / (total - 1.0)).max(0.0)
        } else {
            0.0
        };
    }
    out.refit_curve();
    Ok(out)
}

/// Serialized form: parallel arrays indexed by grid position.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct EstimateDoc {
    grid: Vec<f64>,
    counts: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    k: u32,
    inflation: bool,
    curve: Option<RqCurve>,
    /// Reminder for consumers of the JSON: `alpha` of a band is two-sided
    /// (alpha/2 per tail); `alpha_star` of a lower bound is the probability of
    /// exceeding it.
    alpha_convention: String,
}

const ALPHA_CONVENTION: &str = "two-sided alpha, alpha/2 per tail; lower bound exceeded with probability alpha_star";

impl From<RQEstimate> for EstimateDoc {
    fn from(e: RQEstimate) -> Self {
        EstimateDoc {
            counts: e.stats.iter().map(|s| s.count).collect(),
            means: e.stats.iter().map(|s| s.mean).collect(),
            variances: e.stats.iter().map(|s| s.variance).collect(),
            grid: e.grid,
            k: e.options.k,
            inflation: e.options.inflation,
            curve: e.curve,
            alpha_convention: ALPHA_CONVENTION.into(),
        }
    }
}

impl TryFrom<EstimateDoc> for RQEstimate {
    type Error = RqError;

    fn try_from(d: EstimateDoc) -> Result<Self, RqError> {
        let n = d.grid.len();
        if d.counts.len() != n || d.means.len() != n || d.variances.len() != n {
            return Err(RqError::Malformed("array lengths differ".into()));
        }
        let stats = (0..n)
            .map(|i| GridStat {
                count: d.counts[i],
                mean: d.means[i],
                variance: d.variances[i],
            })
            .collect();
        let options = EstimatorOptions {
            k: d.k,
            inflation: d.inflation,
            fit_curve: d.curve.is_some(),
        };
        let mut est = RQEstimate::from_stats(d.grid, stats, options)?;
        if d.curve.is_some() {
            est.curve = d.curve;
        }
        Ok(est)
    }
}
