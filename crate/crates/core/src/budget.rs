//! Budgets, data-point counts and pilot schedules.
//!
//! Communication budgets are integer bits and time budgets are integer
//! nanoseconds, so every floor and ceiling here is exact integer division.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BudgetError {
    #[error("per-point cost is zero")]
    ZeroCost,
    #[error("per-point latency is zero")]
    ZeroLatency,
    #[error("invalid duration {0} s")]
    InvalidDuration(f64),
    #[error("invalid bit quantity {0:?}")]
    InvalidBits(String),
    #[error("invalid pilot schedule: {0}")]
    InvalidSchedule(String),
}

/// How a hybrid plan projects the cost of the next data point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginPolicy {
    /// Running mean of observed per-point costs.
    #[default]
    RunningMean,
    /// Largest per-point cost observed so far.
    MaxObserved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BudgetPlan {
    Communication {
        bits: u64,
    },
    Time {
        seconds: f64,
    },
    /// Communication budget checked point by point against observed costs.
    Hybrid {
        bits: u64,
        #[serde(default)]
        margin: MarginPolicy,
    },
    FixedCount {
        points: u64,
    },
}

impl BudgetPlan {
    pub fn problems(&self) -> Vec<String> {
        match *self {
            BudgetPlan::Time { seconds } if !(seconds >= 0.0 && seconds.is_finite()) => {
                vec!["budget.seconds must be a finite non-negative number".into()]
            }
            _ => Vec::new(),
        }
    }
}

/// `⌊B_c/κ⌋`.
pub fn points_from_comm_budget(budget_bits: u64, kappa_bits: u64) -> Result<u64, BudgetError> {
    if kappa_bits == 0 {
        return Err(BudgetError::ZeroCost);
    }
    Ok(budget_bits / kappa_bits)
}

/// Seconds as integer nanoseconds, rounded to nearest.
pub fn nanos(seconds: f64) -> Result<u128, BudgetError> {
    if !(seconds >= 0.0) || !seconds.is_finite() {
        return Err(BudgetError::InvalidDuration(seconds));
    }
    Ok((seconds * 1e9).round() as u128)
}

/// `⌊B_T/T_L⌋`, both sides resolved to whole nanoseconds first.
pub fn points_from_time_budget(budget_seconds: f64, latency_seconds: f64) -> Result<u64, BudgetError> {
    let t = nanos(latency_seconds)?;
    if t == 0 {
        return Err(BudgetError::ZeroLatency);
    }
    Ok((nanos(budget_seconds)? / t) as u64)
}

/// True iff `spent + projected ≤ budget`. `projected` is derived from
/// `observed` per `margin`, or is `a_priori` before any point was observed.
/// The running mean is compared without division.
pub fn hybrid_should_continue(spent: u64, observed: &[u64], a_priori: u64, budget: u64, margin: MarginPolicy) -> bool {
    let (spent, budget) = (u128::from(spent), u128::from(budget));
    if observed.is_empty() {
        return spent + u128::from(a_priori) <= budget;
    }
    match margin {
        MarginPolicy::RunningMean => {
            let n = observed.len() as u128;
            let total: u128 = observed.iter().map(|&c| u128::from(c)).sum();
            spent * n + total <= budget * n
        }
        MarginPolicy::MaxObserved => spent + u128::from(*observed.iter().max().unwrap()) <= budget,
    }
}

/// Stateful form of [`hybrid_should_continue`] used by learning sessions.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridTracker {
    pub budget: u64,
    pub a_priori: u64,
    pub margin: MarginPolicy,
    spent: u64,
    observed: Vec<u64>,
}

impl HybridTracker {
    pub fn new(budget: u64, a_priori: u64, margin: MarginPolicy) -> Self {
        Self {
            budget,
            a_priori,
            margin,
            spent: 0,
            observed: Vec::new(),
        }
    }

    pub fn should_continue(&self) -> bool {
        hybrid_should_continue(self.spent, &self.observed, self.a_priori, self.budget, self.margin)
    }

    pub fn record(&mut self, cost: u64) {
        self.spent += cost;
        self.observed.push(cost);
    }

    pub fn spent(&self) -> u64 {
        self.spent
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "kebab-case")]
pub enum PilotPolicy {
    Periodic {
        period: u64,
    },
    Exponential {
        base: f64,
    },
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotSchedule {
    #[serde(flatten)]
    pub policy: PilotPolicy,
    /// Forgetting factor handed to the estimate update.
    #[serde(default = "one")]
    pub forgetting: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for PilotSchedule {
    fn default() -> Self {
        Self {
            policy: PilotPolicy::None,
            forgetting: 1.0,
        }
    }
}

impl PilotSchedule {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self.policy {
            PilotPolicy::Periodic { period: 0 } => out.push("pilots.period must be at least 1".into()),
            PilotPolicy::Exponential { base } if !(base > 1.0 && base.is_finite()) => {
                out.push("pilots.base must be greater than 1".into())
            }
            _ => {}
        }
        if !(self.forgetting > 0.0 && self.forgetting <= 1.0) {
            out.push("pilots.forgetting must lie in (0, 1]".into());
        }
        out
    }
}

/// 1-based stream indices that carry pilot transmissions, increasing.
pub fn pilot_slots(schedule: &PilotSchedule, n_c: u64) -> Result<Vec<u64>, BudgetError> {
    if let Some(p) = schedule.problems().into_iter().next() {
        return Err(BudgetError::InvalidSchedule(p));
    }
    Ok(match schedule.policy {
        PilotPolicy::None => Vec::new(),
        PilotPolicy::Periodic { period } => (1..=n_c / period).map(|k| k * period).collect(),
        PilotPolicy::Exponential { base } => {
            let mut out: Vec<u64> = Vec::new();
            let mut k = 1;
            loop {
                let v = base.powi(k).ceil();
                if v > n_c as f64 {
                    break;
                }
                let v = v as u64;
                if out.last() != Some(&v) {
                    out.push(v);
                }
                k += 1;
            }
            out
        }
    })
}

/// Parses a decimal megabit quantity ("1.482") into exact bits.
pub fn megabits_to_bits(s: &str) -> Result<u64, BudgetError> {
    let bad = || BudgetError::InvalidBits(s.to_string());
    let t = s.trim();
    let (int, frac) = t.split_once('.').unwrap_or((t, ""));
    if (int.is_empty() && frac.is_empty())
        || frac.len() > 6
        || !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit())
    {
        return Err(bad());
    }
    let whole: u64 = if int.is_empty() {
        0
    } else {
        int.parse().map_err(|_| bad())?
    };
    let frac_bits: u64 = if frac.is_empty() {
        0
    } else {
        frac.parse::<u64>().map_err(|_| bad())? * 10u64.pow(6 - frac.len() as u32)
    };
    whole
        .checked_mul(1_000_000)
        .and_then(|w| w.checked_add(frac_bits))
        .ok_or_else(bad)
}
