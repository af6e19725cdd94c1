//! Monte Carlo harness: interval-width distributions, quality adherence,
//! optimal estimation budgets, and the learning-cost and viability tables.
//!
//! Every realization draws from streams derived from `(seed, realization, ...)`
//! so results do not depend on the number of worker threads.

mod tables;

pub use tables::{
    learning_costs, load_published_viability, parse_published_viability, viability, viability_crosscheck, CheckStatus,
    CostSizes, LearningCostRow, PublishedViability, Viability, ViabilityCheck, ViabilityRecord,
    PUBLISHED_VIABILITY_CSV, REFERENCE_SIZES,
};

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    sample_quality, synthetic_corpus, CodecError, DistanceMetric, GenerativeCodec, QualityMetric, QualityPolicy,
    SyntheticRQLaw, ToyImageCodec, VariantId,
};
use crate::rng::derive_seed;
use crate::rq::{prediction_interval, EstimatorOptions, RQEstimate, RqError};
use crate::select::{select_quality_constrained, Choice, ModeConfig, SelectError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment input: {0}")]
    InvalidInput(String),
    #[error("malformed row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Estimate(#[from] RqError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

fn invalid(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::InvalidInput(msg.into())
}

/// Source of quality observations. `point_seed` identifies a data point and
/// `grid_index` the prompt size it is encoded at, so one point can be
/// observed at every grid size.
pub trait QualityModel: Send + Sync {
    fn draw(&self, l_p: f64, point_seed: u64, grid_index: u64) -> Result<f64, ExperimentError>;
}

impl QualityModel for SyntheticRQLaw {
    fn draw(&self, l_p: f64, point_seed: u64, grid_index: u64) -> Result<f64, ExperimentError> {
        Ok(sample_quality(
            self,
            l_p,
            derive_seed(point_seed, &[grid_index]),
            &QualityPolicy::default(),
        )
        .value)
    }
}

/// Toy image codec on freshly rendered synthetic images.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyQualityModel {
    pub codec: ToyImageCodec,
    pub variant: VariantId,
    pub width: u32,
    pub height: u32,
    pub metric: QualityMetric,
}

impl QualityModel for ToyQualityModel {
    fn draw(&self, l_p: f64, point_seed: u64, grid_index: u64) -> Result<f64, ExperimentError> {
        let x = synthetic_corpus(1, self.width, self.height, point_seed).remove(0);
        let prompt = self
            .codec
            .encode(&x, l_p, self.variant, derive_seed(point_seed, &[grid_index]))?;
        let xhat = self.codec.generate(&prompt)?;
        Ok(self.codec.measure(&x, &xhat, self.metric)?.value)
    }
}

/// Serializable choice of quality model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelSpec {
    Synthetic {
        law: SyntheticRQLaw,
    },
    ToyImage {
        #[serde(default = "default_variant")]
        variant: VariantId,
        #[serde(default = "default_side")]
        width: u32,
        #[serde(default = "default_side")]
        height: u32,
        #[serde(default = "default_metric")]
        metric: QualityMetric,
    },
}

fn default_variant() -> VariantId {
    1
}

fn default_side() -> u32 {
    16
}

fn default_metric() -> QualityMetric {
    QualityMetric::Deviation(DistanceMetric::Mse)
}

impl ModelSpec {
    pub fn build(&self) -> Box<dyn QualityModel> {
        match self {
            ModelSpec::Synthetic { law } => Box::new(*law),
            ModelSpec::ToyImage {
                variant,
                width,
                height,
                metric,
            } => Box::new(ToyQualityModel {
                codec: ToyImageCodec::default(),
                variant: *variant,
                width: *width,
                height: *height,
                metric: *metric,
            }),
        }
    }
}

/// Runs `f` on a pool of `workers` threads (0: rayon's default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T, ExperimentError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

const WIDTH_STREAM: u64 = 0x5749_4454;
const TRAIN_STREAM: u64 = 0x0054_524e;
const TEST_STREAM: u64 = 0x5445_5354;

fn check_grid(grid: &[f64]) -> Result<(), ExperimentError> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("grid must be nonempty and strictly increasing"));
    }
    Ok(())
}

fn check_budgets(budgets: &[u64], min: u64) -> Result<(), ExperimentError> {
    if budgets.is_empty() || budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("budgets must be nonempty and strictly increasing"));
    }
    if budgets[0] < min {
        return Err(invalid(format!("every budget needs at least {min} samples")));
    }
    Ok(())
}

/// Per-grid-point estimate from the first `n` samples of each column.
fn prefix_estimate(grid: &[f64], columns: &[Vec<f64>], n: usize) -> Result<RQEstimate, RqError> {
    let options = EstimatorOptions {
        fit_curve: false,
        ..EstimatorOptions::default()
    };
    RQEstimate::from_columns(
        grid.to_vec(),
        columns.iter().map(|c| c[..n].to_vec()).collect(),
        options,
    )
}

/// Training samples of one realization: `n` points observed at every grid size.
fn training_columns(
    model: &dyn QualityModel,
    grid: &[f64],
    n: u64,
    seed: u64,
    r: u64,
) -> Result<Vec<Vec<f64>>, ExperimentError> {
    let mut columns = vec![Vec::with_capacity(n as usize); grid.len()];
    for i in 0..n {
        let point = derive_seed(seed, &[TRAIN_STREAM, r, i]);
        for (j, &l) in grid.iter().enumerate() {
            columns[j].push(model.draw(l, point, j as u64)?);
        }
    }
    Ok(columns)
}

/// Linear-interpolation percentile of sorted data.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthRow {
    #[serde(rename = "L_p")]
    pub l_p: f64,
    #[serde(rename = "N_L")]
    pub n_l: u64,
    pub mean: f64,
    pub p10: f64,
    pub p90: f64,
    #[serde(skip)]
    pub realizations: u64,
}

/// Distribution over `realizations` of the two-sided prediction-interval
/// width at each grid size and budget. Budgets are nested prefixes of one
/// sample stream per realization. Rows are ordered by prompt size, then budget.
pub fn width_distribution(
    model: &dyn QualityModel,
    grid: &[f64],
    budgets: &[u64],
    realizations: u64,
    alpha: f64,
    seed: u64,
    workers: usize,
) -> Result<Vec<WidthRow>, ExperimentError> {
    check_grid(grid)?;
    check_budgets(budgets, 2)?;
    if realizations < 2 {
        return Err(invalid("width distributions need at least 2 realizations"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha must lie in (0, 1)"));
    }
    let n_max = *budgets.last().unwrap();
    let base = derive_seed(seed, &[WIDTH_STREAM]);
    // widths[r][b][j]
    let widths: Vec<Vec<Vec<f64>>> = with_workers(workers, || {
        (0..realizations)
            .into_par_iter()
            .map(|r| {
                let columns = training_columns(model, grid, n_max, base, r)?;
                budgets
                    .iter()
                    .map(|&n| {
                        let est = prefix_estimate(grid, &columns, n as usize)?;
                        grid.iter()
                            .map(|&l| Ok(prediction_interval(&est, l, alpha)?.width()))
                            .collect::<Result<Vec<f64>, ExperimentError>>()
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()
    })??;
    let mut rows = Vec::with_capacity(grid.len() * budgets.len());
    for (j, &l_p) in grid.iter().enumerate() {
        for (b, &n_l) in budgets.iter().enumerate() {
            let mut w: Vec<f64> = widths.iter().map(|per| per[b][j]).collect();
            w.sort_by(f64::total_cmp);
            rows.push(WidthRow {
                l_p,
                n_l,
                mean: w.iter().sum::<f64>() / w.len() as f64,
                p10: percentile(&w, 0.1),
                p90: percentile(&w, 0.9),
                realizations,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdherenceOptions {
    /// Count full-data selections as adherent.
    pub full_data_adherent: bool,
    pub workers: usize,
}

impl Default for AdherenceOptions {
    fn default() -> Self {
        Self {
            full_data_adherent: true,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdherencePoint {
    #[serde(rename = "Q_min")]
    pub q_min: f64,
    pub alpha_star: f64,
    #[serde(rename = "N_L")]
    pub n_l: u64,
    pub adherence: f64,
    #[serde(rename = "R")]
    pub realizations: u64,
    #[serde(rename = "M")]
    pub test_size: u64,
}

/// Adherence of one realization: fit on its training prefix of `n` points,
/// select, and score `m` fresh test points at the selected size.
#[allow(clippy::too_many_arguments)]
fn realization_adherence(
    model: &dyn QualityModel,
    cfg: &ModeConfig,
    columns: &[Vec<f64>],
    n: usize,
    m: u64,
    seed: u64,
    r: u64,
    full_data_adherent: bool,
) -> Result<f64, ExperimentError> {
    let est = prefix_estimate(&cfg.grid, columns, n)?;
    let q_min = cfg.q_min.unwrap();
    Ok(match select_quality_constrained(&est, cfg)?.chosen {
        Choice::FullData => f64::from(u8::from(full_data_adherent)),
        Choice::PromptSize(l) => {
            let j = cfg.grid.iter().position(|&g| g == l).unwrap() as u64;
            let mut ok = 0u64;
            for t in 0..m {
                if model.draw(l, derive_seed(seed, &[TEST_STREAM, r, t]), j)? >= q_min {
                    ok += 1;
                }
            }
            ok as f64 / m as f64
        }
    })
}

fn adherence_curve(
    model: &dyn QualityModel,
    cfg: &ModeConfig,
    budgets: &[u64],
    realizations: u64,
    test_size: u64,
    seed: u64,
    opts: &AdherenceOptions,
) -> Result<Vec<AdherencePoint>, ExperimentError> {
    if let Some(p) = cfg.problems().into_iter().next() {
        return Err(invalid(p));
    }
    check_budgets(budgets, 2)?;
    if realizations == 0 || test_size == 0 {
        return Err(invalid("realizations and test size must be positive"));
    }
    let n_max = *budgets.last().unwrap();
    // per[r][b]
    let per: Vec<Vec<f64>> = with_workers(opts.workers, || {
        (0..realizations)
            .into_par_iter()
            .map(|r| {
                let columns = training_columns(model, &cfg.grid, n_max, seed, r)?;
                budgets
                    .iter()
                    .map(|&n| {
                        realization_adherence(
                            model,
                            cfg,
                            &columns,
                            n as usize,
                            test_size,
                            seed,
                            r,
                            opts.full_data_adherent,
                        )
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, ExperimentError>>()
    })??;
    Ok(budgets
        .iter()
        .enumerate()
        .map(|(b, &n_l)| AdherencePoint {
            q_min: cfg.q_min.unwrap(),
            alpha_star: cfg.alpha_star.unwrap(),
            n_l,
            adherence: per.iter().map(|p| p[b]).sum::<f64>() / realizations as f64,
            realizations,
            test_size,
        })
        .collect())
}

/// Probability that a fresh observation at the selected prompt size meets
/// `q_min`, averaged over `realizations` training sets of `n_l` points.
#[allow(clippy::too_many_arguments)]
pub fn quality_adherence(
    model: &dyn QualityModel,
    grid: &[f64],
    n_l: u64,
    q_min: f64,
    alpha_star: f64,
    realizations: u64,
    test_size: u64,
    seed: u64,
    opts: &AdherenceOptions,
) -> Result<AdherencePoint, ExperimentError> {
    let cfg = ModeConfig::quality_constrained(grid.to_vec(), q_min, alpha_star);
    Ok(adherence_curve(model, &cfg, &[n_l], realizations, test_size, seed, opts)?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalBudget {
    /// Smallest adhering budget; `None` when no budget in range adheres.
    pub n_l: Option<u64>,
    pub curve: Vec<AdherencePoint>,
}

/// Smallest budget whose adherence reaches `alpha_star`. Every budget in the
/// range is evaluated on the same random numbers (nested training prefixes,
/// shared test points).
#[allow(clippy::too_many_arguments)]
pub fn optimal_budget(
    model: &dyn QualityModel,
    grid: &[f64],
    q_min: f64,
    alpha_star: f64,
    budgets: &[u64],
    realizations: u64,
    test_size: u64,
    seed: u64,
    opts: &AdherenceOptions,
) -> Result<OptimalBudget, ExperimentError> {
    check_budgets(budgets, 2)?;
    if alpha_star <= 0.0 {
        return Ok(OptimalBudget {
            n_l: Some(budgets[0]),
            curve: Vec::new(),
        });
    }
    let cfg = ModeConfig::quality_constrained(grid.to_vec(), q_min, alpha_star);
    let curve = adherence_curve(model, &cfg, budgets, realizations, test_size, seed, opts)?;
    Ok(OptimalBudget {
        n_l: curve.iter().find(|p| p.adherence >= alpha_star).map(|p| p.n_l),
        curve,
    })
}

/// Serializes `rows` as CSV with a header line.
pub fn write_csv<W: Write, T: Serialize>(rows: &[T], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
