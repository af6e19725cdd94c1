//! Initialization protocol: discovery, probing, contracting, the learning
//! variants and post-learning operation, all with bit-exact cost ledgers.

mod discovery;
mod ledger;
mod operational;
mod session;

pub use discovery::{
    contract_scores, contract_select, discover, probe, record_discovery, ContractTerms, DiscoveryStyle, KpiWeights,
    NodeAdvertisement, ProbePlan, ProbeReport, Query, Registry,
};
pub use ledger::{
    write_ndjson, ControlCharging, CostLedger, EventKind, LedgerRow, MessageRecord, PayloadClass, Phase, PointCost,
    TraceEvent,
};
pub use operational::{run_operational, savings_bits, OperationalOutcome, PointOutcome};
pub use session::{
    run_learning, LearningOutcome, LearningSession, PrefitCache, PrefitProfile, RoleNames, SessionOptions,
    TransmissionMode,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::budget::BudgetError;
use crate::model::{CodecDescriptor, CodecError, QualityKind, QualityMetric, VariantId};
use crate::netsim::NetError;
use crate::rq::RqError;
use crate::select::SelectError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("unknown learning variant {0:?}")]
    UnknownVariant(String),
    #[error("{metric:?} quality is not measurable under the {variant} variant")]
    MetricIncompatible {
        variant: LearningVariant,
        metric: QualityKind,
    },
    #[error("stateful destination task allows one prompt size per data point, got {0}")]
    StatefulGrid(usize),
    #[error("prompt-size grid is empty")]
    EmptyGrid,
    #[error("grid must be strictly increasing")]
    GridNotIncreasing,
    #[error("prompt size {0} bpp is outside the codec's supported range")]
    UnsupportedSize(f64),
    #[error("codec variant {0} is not offered by the node")]
    UnsupportedCodecVariant(VariantId),
    #[error("node cannot generate from the original plus a minimal prompt")]
    NoAugmentedGeneration,
    #[error("budget affords no data point")]
    BudgetExhausted,
    #[error("corpus holds {available} points, {needed} needed")]
    CorpusExhausted { needed: u64, available: u64 },
    #[error("time budget needs a latency profile")]
    MissingLatency,
    #[error("node {0} is unreachable")]
    Unreachable(String),
    #[error("no candidate nodes")]
    NoCandidates,
    #[error("probe plan is empty")]
    EmptyProbePlan,
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Estimate(#[from] RqError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error(transparent)]
    Select(#[from] SelectError),
}

/// Who measures quality and what the source sends per learning data point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearningVariant {
    /// Source sends every prompt, gets every approximation back, measures.
    Source,
    /// Source sends the original and the minimal prompt; the node derives the
    /// larger prompts itself.
    NodeAugmented,
    /// Source sends the original and every prompt; the node measures.
    NodeStandard,
    /// Approximations go to the destination, which scores a task goal.
    DestinationGoal,
    /// Destination also receives the original and measures a deviation.
    DestinationDeviation,
}

impl LearningVariant {
    pub const ALL: [LearningVariant; 5] = [
        LearningVariant::Source,
        LearningVariant::NodeAugmented,
        LearningVariant::NodeStandard,
        LearningVariant::DestinationGoal,
        LearningVariant::DestinationDeviation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LearningVariant::Source => "source",
            LearningVariant::NodeAugmented => "node-augmented",
            LearningVariant::NodeStandard => "node-standard",
            LearningVariant::DestinationGoal => "destination-goal",
            LearningVariant::DestinationDeviation => "destination-deviation",
        }
    }

    pub fn is_destination(self) -> bool {
        matches!(
            self,
            LearningVariant::DestinationGoal | LearningVariant::DestinationDeviation
        )
    }

    pub fn is_node(self) -> bool {
        matches!(self, LearningVariant::NodeAugmented | LearningVariant::NodeStandard)
    }

    /// Quality kind the measuring site can compute.
    pub fn metric_kind(self) -> QualityKind {
        match self {
            LearningVariant::DestinationGoal => QualityKind::GoalOriented,
            _ => QualityKind::DeviationBased,
        }
    }

    pub fn check_metric(self, metric: QualityMetric) -> Result<(), ProtocolError> {
        if metric.kind() == self.metric_kind() {
            Ok(())
        } else {
            Err(ProtocolError::MetricIncompatible {
                variant: self,
                metric: metric.kind(),
            })
        }
    }

    /// Data-plane messages exchanged for one learning data point, in order.
    pub fn messages(self, sizes: &PointSizes) -> Vec<(Link, u64)> {
        let prompts = sizes.prompt_bits.iter().copied();
        match self {
            LearningVariant::Source => prompts
                .flat_map(|p| [(Link::SourceToNode, p), (Link::NodeToSource, sizes.generated_bits)])
                .collect(),
            LearningVariant::NodeAugmented => vec![
                (Link::SourceToNode, sizes.original_bits),
                (Link::SourceToNode, sizes.min_prompt_bits),
            ],
            LearningVariant::NodeStandard => std::iter::once((Link::SourceToNode, sizes.original_bits))
                .chain(prompts.map(|p| (Link::SourceToNode, p)))
                .collect(),
            LearningVariant::DestinationGoal => prompts
                .flat_map(|p| [(Link::SourceToNode, p), (Link::NodeToDestination, sizes.generated_bits)])
                .collect(),
            LearningVariant::DestinationDeviation => std::iter::once((Link::SourceToDestination, sizes.original_bits))
                .chain(prompts.flat_map(|p| [(Link::SourceToNode, p), (Link::NodeToDestination, sizes.generated_bits)]))
                .collect(),
        }
    }
}

impl fmt::Display for LearningVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LearningVariant {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LearningVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ProtocolError::UnknownVariant(s.to_string()))
    }
}

/// Directed logical link between protocol roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Link {
    SourceToNode,
    NodeToSource,
    NodeToDestination,
    SourceToDestination,
    DestinationToSource,
}

/// Sizes of one data point's learning traffic, bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointSizes {
    /// One entry per grid prompt size.
    pub prompt_bits: Vec<u64>,
    pub min_prompt_bits: u64,
    pub original_bits: u64,
    pub generated_bits: u64,
}

/// Learning cost of one data point, bits.
pub fn per_point_cost(variant: LearningVariant, sizes: &PointSizes) -> Result<u64, ProtocolError> {
    if variant != LearningVariant::NodeAugmented && sizes.prompt_bits.is_empty() {
        return Err(ProtocolError::EmptyGrid);
    }
    Ok(variant.messages(sizes).iter().map(|m| m.1).sum())
}

/// Agreement between the source and a generative node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub node_id: String,
    pub codec_variant: VariantId,
    /// Prompt sizes to learn, bpp.
    pub grid: Vec<f64>,
    pub variant: LearningVariant,
    pub metric: QualityMetric,
    /// Committed generation time per data point, seconds.
    pub generation_time: f64,
}

impl Contract {
    /// Checks the contract against the node's codec.
    pub fn validate(&self, codec: &CodecDescriptor) -> Result<(), ProtocolError> {
        if self.grid.is_empty() {
            return Err(ProtocolError::EmptyGrid);
        }
        if self.grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(ProtocolError::GridNotIncreasing);
        }
        if let Some(&l) = self.grid.iter().find(|&&l| !codec.supports_size(l)) {
            return Err(ProtocolError::UnsupportedSize(l));
        }
        if !codec.variants.contains(&self.codec_variant) {
            return Err(ProtocolError::UnsupportedCodecVariant(self.codec_variant));
        }
        if self.variant == LearningVariant::NodeAugmented && !codec.supports_augmented_generation {
            return Err(ProtocolError::NoAugmentedGeneration);
        }
        self.variant.check_metric(self.metric)
    }
}
