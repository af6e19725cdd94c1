use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ledger::{Recorder, Site};
use super::{
    Contract, CostLedger, EventKind, LearningVariant, Link, MessageRecord, PayloadClass, Phase, ProtocolError,
    RoleNames, SessionOptions, TraceEvent,
};
use crate::model::{CodecDescriptor, CodecFamily, CodecSpec, DataPoint, QualityMetric, VariantId};
use crate::netsim::Topology;
use crate::rng::{derive_seed, f64_key, stream};
use crate::rq::{MeasurementSite, QualitySample, RQEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscoveryStyle {
    /// Capabilities arrive with the discovery answer.
    AgentCard,
    /// Capabilities need a follow-up request to the node.
    RegistryEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeAdvertisement {
    pub node_id: String,
    pub style: DiscoveryStyle,
    pub modalities: Vec<String>,
    #[serde(default)]
    pub quality_claims: Option<RQEstimate>,
    /// Advertised generation time per data point, seconds.
    pub generation_time: f64,
    pub codec: CodecSpec,
    pub location: String,
}

impl NodeAdvertisement {
    pub fn descriptor(&self) -> CodecDescriptor {
        self.codec.build().descriptor()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub nodes: Vec<NodeAdvertisement>,
}

impl Registry {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for n in &self.nodes {
            if !seen.insert(n.node_id.as_str()) {
                out.push(format!("duplicate node id {:?}", n.node_id));
            }
            if !(n.generation_time >= 0.0) {
                out.push(format!("node {:?} advertises a negative generation time", n.node_id));
            }
        }
        out
    }
}

/// Discovery filter; `None` fields match anything.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Query {
    #[serde(default)]
    pub modality: Option<String>,
    #[serde(default)]
    pub location: Option<String>,
    #[serde(default)]
    pub family: Option<CodecFamily>,
    #[serde(default)]
    pub max_generation_time: Option<f64>,
}

impl Query {
    pub fn matches(&self, ad: &NodeAdvertisement) -> bool {
        self.modality.as_ref().is_none_or(|m| ad.modalities.contains(m))
            && self.location.as_ref().is_none_or(|l| &ad.location == l)
            && self.family.is_none_or(|f| ad.codec.family() == f)
            && self.max_generation_time.is_none_or(|t| ad.generation_time <= t)
    }
}

/// Advertisements matching every predicate of `query`, ordered by node id.
pub fn discover(registry: &Registry, query: &Query) -> Vec<NodeAdvertisement> {
    let mut out: Vec<NodeAdvertisement> = registry.nodes.iter().filter(|a| query.matches(a)).cloned().collect();
    out.sort_by(|a, b| a.node_id.cmp(&b.node_id));
    out
}

/// Control traffic of one discovery round: a query round trip to the
/// registry plus a capability round trip per registry-entry result.
pub fn record_discovery(results: &[NodeAdvertisement], options: &SessionOptions) -> (CostLedger, Vec<TraceEvent>) {
    let bits = if options.control.enabled {
        options.control.control_bits
    } else {
        0
    };
    let source = options.names.source.clone();
    let mut pairs = vec![
        (source.clone(), "registry".to_string()),
        ("registry".to_string(), source.clone()),
    ];
    for ad in results.iter().filter(|a| a.style == DiscoveryStyle::RegistryEntry) {
        pairs.push((source.clone(), ad.node_id.clone()));
        pairs.push((ad.node_id.clone(), source.clone()));
    }
    let mut ledger = CostLedger::default();
    let mut trace = Vec::new();
    for (i, (from, to)) in pairs.into_iter().enumerate() {
        ledger.records.push(MessageRecord {
            seq: i as u64,
            phase: Phase::Discovery,
            point: None,
            from: from.clone(),
            to: to.clone(),
            class: PayloadClass::Control,
            bits,
            l_p: None,
        });
        trace.push(TraceEvent {
            seq: i as u64,
            t: 0.0,
            phase: Phase::Discovery,
            kind: EventKind::Message,
            from,
            to: Some(to),
            class: Some(PayloadClass::Control),
            size_bits: Some(bits),
            l_p: None,
            point: None,
        });
    }
    (ledger, trace)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbePlan {
    /// Prompt sizes to probe, bpp.
    pub sizes: Vec<f64>,
    pub repetitions: u32,
    #[serde(default)]
    pub codec_variant: VariantId,
    pub metric: QualityMetric,
    /// Relative half-width of uniform jitter on the generation time.
    #[serde(default)]
    pub jitter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub node_id: String,
    pub latency_samples: Vec<f64>,
    pub quality_samples: Vec<QualitySample>,
    pub cost_bits: u64,
    pub ledger: CostLedger,
}

impl ProbeReport {
    pub fn mean_quality(&self) -> f64 {
        mean(self.quality_samples.iter().map(|s| s.quality.value))
    }

    pub fn mean_latency(&self) -> f64 {
        mean(self.latency_samples.iter().copied())
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (n, s) = it.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

const PROBE_STREAM: u64 = 0x5052_4f42;

fn name_key(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3)
    })
}

/// Source-measured mini learning loops against one node: a prompt up and an
/// approximation back per (size, repetition). Repetition `r` uses sample
/// point `r mod len`.
pub fn probe(
    ad: &NodeAdvertisement,
    plan: &ProbePlan,
    sample: &[DataPoint],
    network: Option<(&Topology, &str)>,
    options: &SessionOptions,
) -> Result<ProbeReport, ProtocolError> {
    if plan.sizes.is_empty() || plan.repetitions == 0 || sample.is_empty() {
        return Err(ProtocolError::EmptyProbePlan);
    }
    if let Some((topo, s)) = network {
        if !topo.reachable(s, &ad.node_id)? {
            return Err(ProtocolError::Unreachable(ad.node_id.clone()));
        }
    }
    let codec = ad.codec.build();
    let names = RoleNames {
        node: ad.node_id.clone(),
        ..options.names.clone()
    };
    let mut rec = Recorder::new(CostLedger::default(), &names, None, options.control, ad.generation_time);
    let base = derive_seed(options.seed, &[PROBE_STREAM, name_key(&ad.node_id)]);
    let mut jitter = stream(base, &[0]);
    let mut latency_samples = Vec::new();
    let mut quality_samples = Vec::new();
    for (j, &l) in plan.sizes.iter().enumerate() {
        for r in 0..plan.repetitions {
            let x = &sample[r as usize % sample.len()];
            let pt = Some(x.id);
            rec.act(Phase::Probe, pt, EventKind::Encode, Site::Source, Some(l));
            let prompt = codec.encode(
                x,
                l,
                plan.codec_variant,
                derive_seed(base, &[j as u64, f64_key(l), u64::from(r)]),
            )?;
            rec.send(
                Phase::Probe,
                pt,
                Link::SourceToNode,
                PayloadClass::Prompt,
                prompt.payload_bits,
                Some(l),
            );
            rec.act(Phase::Probe, pt, EventKind::Generate, Site::Node, Some(l));
            let xhat = codec.generate(&prompt)?;
            rec.send(
                Phase::Probe,
                pt,
                Link::NodeToSource,
                PayloadClass::Approximation,
                xhat.size_bits(),
                Some(l),
            );
            rec.act(Phase::Probe, pt, EventKind::Measure, Site::Source, Some(l));
            let u: f64 = if plan.jitter > 0.0 {
                jitter.random_range(-1.0..=1.0)
            } else {
                0.0
            };
            latency_samples.push((ad.generation_time * (1.0 + plan.jitter * u)).max(0.0));
            quality_samples.push(QualitySample {
                data_point_id: x.id,
                l_p: l,
                quality: codec.measure(x, &xhat, plan.metric)?,
                site: MeasurementSite::Source,
            });
        }
    }
    let ledger = rec.ledger;
    Ok(ProbeReport {
        node_id: ad.node_id.clone(),
        latency_samples,
        quality_samples,
        cost_bits: ledger.phase_bits(Phase::Probe),
        ledger,
    })
}

/// Weights of the contract score terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KpiWeights {
    pub quality: f64,
    pub latency: f64,
    /// Weight of the probe sample count.
    pub confidence: f64,
}

impl Default for KpiWeights {
    fn default() -> Self {
        Self {
            quality: 1.0,
            latency: 1.0,
            confidence: 0.0,
        }
    }
}

/// Min-max normalization onto [0, 1]; a constant column maps to 0.
fn normalize(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    v.iter()
        .map(|x| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

/// Contract score of each report: weighted normalized mean quality, inverted
/// normalized mean latency and normalized sample count.
pub fn contract_scores(reports: &[ProbeReport], weights: &KpiWeights) -> Vec<f64> {
    let q = normalize(&reports.iter().map(ProbeReport::mean_quality).collect::<Vec<_>>());
    let l = normalize(&reports.iter().map(ProbeReport::mean_latency).collect::<Vec<_>>());
    let c = normalize(
        &reports
            .iter()
            .map(|r| r.quality_samples.len() as f64)
            .collect::<Vec<_>>(),
    );
    (0..reports.len())
        .map(|i| weights.quality * q[i] + weights.latency * (1.0 - l[i]) + weights.confidence * c[i])
        .collect()
}

/// Picks the best-scoring node (ties toward the smaller id) and fills the
/// node-specific fields of `terms`.
pub fn contract_select(
    reports: &[ProbeReport],
    weights: &KpiWeights,
    terms: &ContractTerms,
) -> Result<Contract, ProtocolError> {
    let scores = contract_scores(reports, weights);
    let best = (0..reports.len())
        .reduce(|b, i| {
            if scores[i] > scores[b] || (scores[i] == scores[b] && reports[i].node_id < reports[b].node_id) {
                i
            } else {
                b
            }
        })
        .ok_or(ProtocolError::NoCandidates)?;
    let r = &reports[best];
    Ok(Contract {
        node_id: r.node_id.clone(),
        codec_variant: terms.codec_variant,
        grid: terms.grid.clone(),
        variant: terms.variant,
        metric: terms.metric,
        generation_time: r.mean_latency(),
    })
}

/// Node-independent part of a contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractTerms {
    #[serde(default)]
    pub codec_variant: VariantId,
    pub grid: Vec<f64>,
    pub variant: LearningVariant,
    pub metric: QualityMetric,
}
