//! Prompt-size selection for the three communication modes.
//!
//! All selectors scan a finite candidate grid in increasing order and keep the
//! first best candidate, so ties go to the smaller (cheaper) prompt.
//!
//! The rate-constrained and unconstrained objectives are `y_g·(1 − w/Q̂(L_p))`
//! where `y_g = λ·L − λ·L_p` is the divergence at the generative node: the
//! prompt flow `λ·L_p` enters it and the regenerated flow `λ·L` leaves it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netsim::{NetError, Topology};
use crate::rq::{interpolate, lower_quality_bound, RQEstimate, RqError, Statistic};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectError {
    #[error("configuration is for {0:?} mode")]
    WrongMode(Mode),
    #[error("mode configuration is invalid: {0}")]
    InvalidConfig(String),
    #[error("candidate {0} bpp is not covered by the estimate")]
    GridNotCovered(f64),
    #[error("rate-constrained transmission infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Estimate(#[from] RqError),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    QualityConstrained,
    RateConstrained,
    Unconstrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeConfig {
    pub mode: Mode,
    /// Quality floor; `-inf` makes the constraint vacuous.
    #[serde(default)]
    pub q_min: Option<f64>,
    #[serde(default)]
    pub alpha_star: Option<f64>,
    /// Importance of quality in the rate/unconstrained objectives.
    #[serde(default)]
    pub w_weight: f64,
    /// Candidate prompt sizes, bpp, strictly increasing.
    pub grid: Vec<f64>,
    /// Data-point generation rate, points per second.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// Original data-point size, bits.
    #[serde(default)]
    pub l_bits: Option<f64>,
    /// Smallest realizable prompt size, bpp.
    #[serde(default)]
    pub l_min: f64,
    /// Pixels per data point: converts bpp into bits.
    #[serde(default = "one")]
    pub pixels: f64,
    /// Candidates off the estimate grid are read by interpolation instead of
    /// being rejected.
    #[serde(default)]
    pub interpolate_off_grid: bool,
}

fn one() -> f64 {
    1.0
}

impl ModeConfig {
    pub fn quality_constrained(grid: Vec<f64>, q_min: f64, alpha_star: f64) -> Self {
        Self {
            mode: Mode::QualityConstrained,
            q_min: Some(q_min),
            alpha_star: Some(alpha_star),
            w_weight: 0.0,
            grid,
            lambda: None,
            l_bits: None,
            l_min: 0.0,
            pixels: 1.0,
            interpolate_off_grid: false,
        }
    }

    pub fn rate_constrained(grid: Vec<f64>, w_weight: f64, lambda: f64, l_bits: f64, l_min: f64) -> Self {
        Self {
            mode: Mode::RateConstrained,
            q_min: None,
            alpha_star: None,
            w_weight,
            grid,
            lambda: Some(lambda),
            l_bits: Some(l_bits),
            l_min,
            pixels: 1.0,
            interpolate_off_grid: false,
        }
    }

    pub fn unconstrained(grid: Vec<f64>, w_weight: f64, l_bits: f64, l_min: f64) -> Self {
        Self {
            mode: Mode::Unconstrained,
            lambda: None,
            ..Self::rate_constrained(grid, w_weight, 1.0, l_bits, l_min)
        }
    }

    /// Structural checks; returns one message per problem.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.grid.is_empty() {
            out.push("grid is empty".to_string());
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) || self.grid.iter().any(|g| g.is_nan()) {
            out.push("grid must be strictly increasing".to_string());
        }
        if !(self.pixels > 0.0) {
            out.push("pixels must be positive".into());
        }
        if !(self.w_weight >= 0.0) {
            out.push("w_weight must be non-negative".into());
        }
        let quality = self.mode == Mode::QualityConstrained;
        if quality != self.q_min.is_some() {
            out.push("q_min is required by, and only allowed in, quality-constrained mode".into());
        }
        if quality != self.alpha_star.is_some() {
            out.push("alpha_star is required by, and only allowed in, quality-constrained mode".into());
        }
        if let Some(a) = self.alpha_star {
            if !(a > 0.0 && a < 1.0) {
                out.push("alpha_star must lie in (0, 1)".into());
            }
        }
        match self.mode {
            Mode::RateConstrained => {
                if !self.lambda.is_some_and(|l| l > 0.0) {
                    out.push("lambda must be a positive rate in rate-constrained mode".into());
                }
            }
            Mode::QualityConstrained if self.lambda.is_some() => {
                out.push("lambda is only meaningful for rate-constrained or unconstrained mode".into());
            }
            _ => {}
        }
        if self.mode != Mode::QualityConstrained && !self.l_bits.is_some_and(|l| l > 0.0) {
            out.push("l_bits must be a positive data-point size".into());
        }
        out
    }

    fn check(&self, mode: Mode) -> Result<(), SelectError> {
        if self.mode != mode {
            return Err(SelectError::WrongMode(self.mode));
        }
        match self.problems().into_iter().next() {
            Some(p) => Err(SelectError::InvalidConfig(p)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Choice {
    PromptSize(f64),
    /// Send the original; no candidate satisfied the constraints.
    FullData,
}

impl Choice {
    pub fn prompt_size(self) -> Option<f64> {
        match self {
            Choice::PromptSize(l) => Some(l),
            Choice::FullData => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub l_p: f64,
    /// Lower quality bound (quality-constrained) or objective value.
    pub value: Option<f64>,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub mode: Mode,
    pub chosen: Choice,
    pub objective_value: Option<f64>,
    pub feasible: bool,
    pub diagnostics: Vec<CandidateRow>,
}

fn statistic(est: &RQEstimate, cfg: &ModeConfig, l_p: f64, which: Statistic) -> Result<f64, SelectError> {
    if est.index_of(l_p).is_some() || (cfg.interpolate_off_grid && l_p >= est.grid()[0]) {
        return Ok(interpolate(est, l_p, which, false)?);
    }
    Err(SelectError::GridNotCovered(l_p))
}

/// Smallest grid size whose lower quality bound at `alpha_star` reaches
/// `q_min`; full data when none does.
pub fn select_quality_constrained(est: &RQEstimate, cfg: &ModeConfig) -> Result<Selection, SelectError> {
    cfg.check(Mode::QualityConstrained)?;
    let (q_min, alpha_star) = (cfg.q_min.unwrap(), cfg.alpha_star.unwrap());
    let mut diagnostics = Vec::with_capacity(cfg.grid.len());
    let mut chosen = None;
    for &l_p in &cfg.grid {
        let bound = if est.index_of(l_p).is_some() {
            lower_quality_bound(est, l_p, alpha_star)?
        } else {
            statistic(est, cfg, l_p, Statistic::Lower { alpha_star })?
        };
        let feasible = bound >= q_min;
        if feasible && chosen.is_none() {
            chosen = Some(l_p);
        }
        diagnostics.push(CandidateRow {
            l_p,
            value: Some(bound),
            feasible,
        });
    }
    Ok(Selection {
        mode: Mode::QualityConstrained,
        chosen: chosen.map_or(Choice::FullData, Choice::PromptSize),
        objective_value: chosen,
        feasible: chosen.is_some(),
        diagnostics,
    })
}

/// Best `(l_p, objective)` and one diagnostic row per candidate.
type Scan = (Option<(f64, f64)>, Vec<CandidateRow>);

/// Scans `y_g·(1 − w/Q̂)` over candidates that pass `admissible`.
fn weighted_scan(
    est: &RQEstimate,
    cfg: &ModeConfig,
    lambda: f64,
    admissible: impl Fn(f64) -> bool,
) -> Result<Scan, SelectError> {
    let l_bits = cfg.l_bits.unwrap();
    let mut best: Option<(f64, f64)> = None;
    let mut diagnostics = Vec::with_capacity(cfg.grid.len());
    for &l_p in &cfg.grid {
        let q = statistic(est, cfg, l_p, Statistic::Mean)?;
        let bits = l_p * cfg.pixels;
        let y_g = lambda * (l_bits - bits);
        let feasible = l_p >= cfg.l_min && y_g >= 0.0 && q > 0.0 && admissible(bits);
        let value = feasible.then(|| y_g * (1.0 - cfg.w_weight / q));
        if let Some(v) = value {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((l_p, v));
            }
        }
        diagnostics.push(CandidateRow { l_p, value, feasible });
    }
    Ok((best, diagnostics))
}

/// Rate-constrained selection on `topo`, with `s`, `g`, `d` the source,
/// generative node and destination ids.
pub fn select_rate_constrained(
    est: &RQEstimate,
    cfg: &ModeConfig,
    topo: &Topology,
    s: &str,
    g: &str,
    d: &str,
) -> Result<Selection, SelectError> {
    cfg.check(Mode::RateConstrained)?;
    let (lambda, l_bits) = (cfg.lambda.unwrap(), cfg.l_bits.unwrap());
    let c_sg = topo.min_cut(s, g)?;
    let c_gd = topo.min_cut(g, d)?;
    if lambda * cfg.l_min * cfg.pixels > c_sg {
        return Err(SelectError::Infeasible(format!(
            "minimum prompt flow {} b/s exceeds the s-g min-cut {c_sg} b/s",
            lambda * cfg.l_min * cfg.pixels
        )));
    }
    if lambda * l_bits > c_gd {
        return Err(SelectError::Infeasible(format!(
            "regenerated flow {} b/s exceeds the g-d min-cut {c_gd} b/s",
            lambda * l_bits
        )));
    }
    let (best, diagnostics) = weighted_scan(est, cfg, lambda, |bits| lambda * bits <= c_sg)?;
    let (l_p, v) = best.ok_or_else(|| SelectError::Infeasible("no candidate fits the s-g min-cut".into()))?;
    Ok(Selection {
        mode: Mode::RateConstrained,
        chosen: Choice::PromptSize(l_p),
        objective_value: Some(v),
        feasible: true,
        diagnostics,
    })
}

/// Unconstrained selection; `lambda` defaults to 1 point per second.
pub fn select_unconstrained(est: &RQEstimate, cfg: &ModeConfig) -> Result<Selection, SelectError> {
    cfg.check(Mode::Unconstrained)?;
    let lambda = cfg.lambda.unwrap_or(1.0);
    let (best, diagnostics) = weighted_scan(est, cfg, lambda, |_| true)?;
    Ok(Selection {
        mode: Mode::Unconstrained,
        chosen: best.map_or(Choice::FullData, |(l, _)| Choice::PromptSize(l)),
        objective_value: best.map(|(_, v)| v),
        feasible: best.is_some(),
        diagnostics,
    })
}

/// Dispatches on `cfg.mode`. Rate-constrained mode needs the topology and the
/// role ids.
pub fn select(
    est: &RQEstimate,
    cfg: &ModeConfig,
    network: Option<(&Topology, &str, &str, &str)>,
) -> Result<Selection, SelectError> {
    match cfg.mode {
        Mode::QualityConstrained => select_quality_constrained(est, cfg),
        Mode::Unconstrained => select_unconstrained(est, cfg),
        Mode::RateConstrained => {
            let (t, s, g, d) =
                network.ok_or_else(|| SelectError::InvalidConfig("rate-constrained mode needs a topology".into()))?;
            select_rate_constrained(est, cfg, t, s, g, d)
        }
    }
}

#[cfg(test)]
mod tests;
