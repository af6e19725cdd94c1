//! Simulation and statistics for initializing generative-AI-aided relaying.
//!
//! A source that wants to send compact prompts through a generative node must
//! first learn how approximation quality depends on prompt size. This crate
//! models that start-up phase end to end:
//!
//! * [`model`]: data points, prompts, quality metrics and pluggable codecs;
//! * [`rq`]: rate-quality estimation with per-size prediction intervals;
//! * [`select`]: prompt-size selection for the three communication modes;
//! * [`netsim`]: topology, min-cut feasibility and latency;
//! * [`protocol`]: discovery, probing, contracting, the learning protocols and
//!   their cost ledgers;
//! * [`budget`]: turning bit and time budgets into data-point counts, pilots;
//! * [`experiment`]: Monte Carlo harness for interval widths, quality
//!   adherence, optimal budgets and viability points.

// Negated float comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod budget;
pub mod experiment;
pub mod model;
pub mod netsim;
pub mod protocol;
pub mod rng;
pub mod rq;
pub mod select;
