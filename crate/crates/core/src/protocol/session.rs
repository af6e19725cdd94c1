use serde::{Deserialize, Serialize};

use super::ledger::{Recorder, Site};
use super::{
    per_point_cost, Contract, ControlCharging, CostLedger, EventKind, LearningVariant, Link, PayloadClass, Phase,
    PointSizes, ProtocolError, TraceEvent,
};
use crate::budget::{points_from_comm_budget, points_from_time_budget, BudgetPlan, HybridTracker};
use crate::model::{DataPoint, GenerativeCodec, Payload};
use crate::netsim::{total_latency, LatencyProfile};
use crate::rng::{derive_seed, f64_key};
use crate::rq::{fit_rq, EstimatorOptions, MeasurementSite, QualitySample, RQEstimate};

/// Node ids used in ledgers and traces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleNames {
    pub source: String,
    pub node: String,
    pub destination: String,
}

impl Default for RoleNames {
    fn default() -> Self {
        Self {
            source: "s".into(),
            node: "g".into(),
            destination: "d".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransmissionMode {
    /// Learning finishes before any data reaches the destination.
    #[default]
    PreTransmission,
    /// Learning approximations are forwarded to the destination as they are
    /// produced.
    RealTime,
}

/// Stored estimate for a known source distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefitProfile {
    pub mean: f64,
    pub variance: f64,
    pub estimate: RQEstimate,
}

/// Node-side cache of previously fitted estimates, keyed by corpus summary
/// statistics (mean and variance of sample values).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefitCache {
    pub profiles: Vec<PrefitProfile>,
    /// Largest accepted distance in (mean, standard deviation) space.
    pub max_distance: f64,
}

impl PrefitCache {
    pub fn lookup(&self, mean: f64, variance: f64) -> Option<&PrefitProfile> {
        let d = |p: &PrefitProfile| ((p.mean - mean).powi(2) + (p.variance.sqrt() - variance.sqrt()).powi(2)).sqrt();
        self.profiles
            .iter()
            .filter(|p| d(p) <= self.max_distance)
            .min_by(|a, b| d(a).total_cmp(&d(b)))
    }
}

fn summary(points: &[DataPoint]) -> (f64, f64) {
    let (mut n, mut mean, mut m2) = (0f64, 0f64, 0f64);
    for p in points {
        let values: &[u8] = match &p.payload {
            Payload::Pixels(g) => &g.pixels,
            Payload::Bytes(b) => b,
        };
        for &v in values {
            n += 1.0;
            let delta = f64::from(v) - mean;
            mean += delta / n;
            m2 += delta * (f64::from(v) - mean);
        }
    }
    (mean, if n > 0.0 { m2 / n } else { 0.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOptions {
    #[serde(default)]
    pub mode: TransmissionMode,
    /// The destination task changes state per data point, so each point can
    /// be scored once.
    #[serde(default)]
    pub stateful_task: bool,
    #[serde(default)]
    pub estimator: EstimatorOptions,
    #[serde(default)]
    pub control: ControlCharging,
    #[serde(default)]
    pub latency: Option<LatencyProfile>,
    #[serde(default)]
    pub prefit: Option<PrefitCache>,
    #[serde(default)]
    pub names: RoleNames,
    pub seed: u64,
}

impl SessionOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            mode: TransmissionMode::default(),
            stateful_task: false,
            estimator: EstimatorOptions::default(),
            control: ControlCharging::default(),
            latency: None,
            prefit: None,
            names: RoleNames::default(),
            seed,
        }
    }
}

pub struct LearningSession<'a> {
    pub contract: Contract,
    pub codec: &'a dyn GenerativeCodec,
    pub corpus: &'a [DataPoint],
    pub budget: BudgetPlan,
    pub options: SessionOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningOutcome {
    pub estimate: RQEstimate,
    pub ledger: CostLedger,
    pub trace: Vec<TraceEvent>,
    pub samples: Vec<QualitySample>,
    /// The node answered from its prefit cache instead of learning.
    pub prefit_hit: bool,
}

const LEARN_STREAM: u64 = 0x4c45_4152;
pub(crate) const PILOT_STREAM: u64 = 0x5049_4c54;

/// Sizes the source can compute before sending anything: encoded prompt
/// sizes of `x` and an approximation as large as the original.
pub(crate) fn nominal_sizes(
    codec: &dyn GenerativeCodec,
    contract: &Contract,
    x: &DataPoint,
) -> Result<PointSizes, ProtocolError> {
    let v = contract.codec_variant;
    let prompt_bits = contract
        .grid
        .iter()
        .map(|&l| Ok(codec.encode(x, l, v, 0)?.payload_bits))
        .collect::<Result<_, ProtocolError>>()?;
    let min_prompt_bits = codec.encode(x, codec.min_prompt_bpp(x, v)?, v, 0)?.payload_bits;
    Ok(PointSizes {
        prompt_bits,
        min_prompt_bits,
        original_bits: x.size_bits(),
        generated_bits: x.size_bits(),
    })
}

/// One learning loop over the contract grid for data point `x`, following
/// the variant's message sequence. Returns the quality samples and the sizes
/// actually sent. `min_prompt_bits` is zero unless the variant sends a
/// minimal prompt.
pub(crate) fn learn_point(
    rec: &mut Recorder<'_>,
    codec: &dyn GenerativeCodec,
    contract: &Contract,
    x: &DataPoint,
    phase: Phase,
    seed: u64,
) -> Result<(Vec<QualitySample>, PointSizes), ProtocolError> {
    let variant = contract.variant;
    let v = contract.codec_variant;
    let pt = Some(x.id);
    let mut samples = Vec::with_capacity(contract.grid.len());
    let mut sizes = PointSizes {
        prompt_bits: Vec::with_capacity(contract.grid.len()),
        min_prompt_bits: 0,
        original_bits: x.size_bits(),
        generated_bits: x.size_bits(),
    };
    match variant {
        LearningVariant::NodeAugmented | LearningVariant::NodeStandard => {
            rec.send(
                phase,
                pt,
                Link::SourceToNode,
                PayloadClass::Original,
                x.size_bits(),
                None,
            );
        }
        LearningVariant::DestinationDeviation => {
            rec.send(
                phase,
                pt,
                Link::SourceToDestination,
                PayloadClass::Original,
                x.size_bits(),
                None,
            );
        }
        _ => {}
    }
    if variant == LearningVariant::NodeAugmented {
        let l_min = codec.min_prompt_bpp(x, v)?;
        rec.act(phase, pt, EventKind::Encode, Site::Source, Some(l_min));
        let p = codec.encode(x, l_min, v, derive_seed(seed, &[u64::MAX]))?;
        sizes.min_prompt_bits = p.payload_bits;
        rec.send(
            phase,
            pt,
            Link::SourceToNode,
            PayloadClass::Prompt,
            p.payload_bits,
            Some(l_min),
        );
    }
    let site = match variant {
        LearningVariant::Source => Site::Source,
        LearningVariant::NodeAugmented | LearningVariant::NodeStandard => Site::Node,
        _ => Site::Destination,
    };
    for (j, &l) in contract.grid.iter().enumerate() {
        let s = derive_seed(seed, &[j as u64, f64_key(l)]);
        let encoder = if variant == LearningVariant::NodeAugmented {
            Site::Node
        } else {
            Site::Source
        };
        rec.act(phase, pt, EventKind::Encode, encoder, Some(l));
        let prompt = codec.encode(x, l, v, s)?;
        sizes.prompt_bits.push(prompt.payload_bits);
        if encoder == Site::Source {
            rec.send(
                phase,
                pt,
                Link::SourceToNode,
                PayloadClass::Prompt,
                prompt.payload_bits,
                Some(l),
            );
        }
        rec.act(phase, pt, EventKind::Generate, Site::Node, Some(l));
        let xhat = codec.generate(&prompt)?;
        sizes.generated_bits = xhat.size_bits();
        match site {
            Site::Source => rec.send(
                phase,
                pt,
                Link::NodeToSource,
                PayloadClass::Approximation,
                xhat.size_bits(),
                Some(l),
            ),
            Site::Destination => rec.send(
                phase,
                pt,
                Link::NodeToDestination,
                PayloadClass::Approximation,
                xhat.size_bits(),
                Some(l),
            ),
            Site::Node => {}
        }
        rec.act(phase, pt, EventKind::Measure, site, Some(l));
        let quality = codec.measure(x, &xhat, contract.metric)?;
        samples.push(QualitySample {
            data_point_id: x.id,
            l_p: l,
            quality,
            site: match site {
                Site::Source => MeasurementSite::Source,
                Site::Node => MeasurementSite::Node,
                Site::Destination => MeasurementSite::Destination,
            },
        });
    }
    Ok((samples, sizes))
}

fn fitter(variant: LearningVariant) -> (Site, Option<Link>) {
    match variant {
        LearningVariant::Source => (Site::Source, None),
        LearningVariant::NodeAugmented | LearningVariant::NodeStandard => (Site::Node, Some(Link::NodeToSource)),
        _ => (Site::Destination, Some(Link::DestinationToSource)),
    }
}

/// Runs the contract's learning protocol over the corpus until the budget
/// plan stops it, then fits the estimate where the variant measures quality.
pub fn run_learning(session: &LearningSession<'_>) -> Result<LearningOutcome, ProtocolError> {
    let LearningSession {
        contract,
        codec,
        corpus,
        budget,
        options,
    } = session;
    let codec = *codec;
    contract.validate(&codec.descriptor())?;
    let variant = contract.variant;
    if options.stateful_task && variant.is_destination() && contract.grid.len() > 1 {
        return Err(ProtocolError::StatefulGrid(contract.grid.len()));
    }
    let first = corpus.first().ok_or(ProtocolError::CorpusExhausted {
        needed: 1,
        available: 0,
    })?;
    let nominal = nominal_sizes(codec, contract, first)?;
    let kappa0 = per_point_cost(variant, &nominal)?;
    let planned = match *budget {
        BudgetPlan::FixedCount { points } => Some(points),
        BudgetPlan::Communication { bits } => Some(points_from_comm_budget(bits, kappa0)?),
        BudgetPlan::Time { seconds } => {
            let profile = options.latency.as_ref().ok_or(ProtocolError::MissingLatency)?;
            Some(points_from_time_budget(
                seconds,
                total_latency(profile, &nominal, variant)?,
            )?)
        }
        BudgetPlan::Hybrid { .. } => None,
    };
    if planned == Some(0) {
        return Err(ProtocolError::BudgetExhausted);
    }
    if let Some(n) = planned.filter(|&n| n > corpus.len() as u64) {
        return Err(ProtocolError::CorpusExhausted {
            needed: n,
            available: corpus.len() as u64,
        });
    }
    let mut rec = Recorder::new(
        CostLedger::new(variant, contract.grid.len()),
        &options.names,
        options.latency.as_ref(),
        options.control,
        contract.generation_time,
    );
    let (fit_site, return_link) = fitter(variant);

    if let (Some(cache), true) = (&options.prefit, variant.is_node()) {
        let used = &corpus[..planned.map_or(corpus.len(), |n| n as usize)];
        let (mean, var) = summary(used);
        rec.send(
            Phase::Learning,
            None,
            Link::SourceToNode,
            PayloadClass::Control,
            0,
            None,
        );
        if let Some(hit) = cache.lookup(mean, var) {
            rec.send(
                Phase::Learning,
                None,
                Link::NodeToSource,
                PayloadClass::Estimate,
                0,
                None,
            );
            return Ok(LearningOutcome {
                estimate: hit.estimate.clone(),
                ledger: rec.ledger,
                trace: rec.trace,
                samples: Vec::new(),
                prefit_hit: true,
            });
        }
    }

    let mut tracker = match *budget {
        BudgetPlan::Hybrid { bits, margin } => Some(HybridTracker::new(bits, kappa0, margin)),
        _ => None,
    };
    let n_max = planned.unwrap_or(corpus.len() as u64) as usize;
    let mut samples = Vec::new();
    for (i, x) in corpus.iter().take(n_max).enumerate() {
        if tracker.as_ref().is_some_and(|t| !t.should_continue()) {
            if i == 0 {
                return Err(ProtocolError::BudgetExhausted);
            }
            break;
        }
        rec.begin_point();
        let (s, sizes) = learn_point(
            &mut rec,
            codec,
            contract,
            x,
            Phase::Learning,
            derive_seed(options.seed, &[LEARN_STREAM, x.id]),
        )?;
        let cost = rec.end_point(x.id, Phase::Learning, Some(sizes.clone()));
        if let Some(t) = tracker.as_mut() {
            t.record(cost);
        }
        if options.mode == TransmissionMode::RealTime && !variant.is_destination() {
            let l = *contract.grid.last().unwrap();
            rec.send(
                Phase::Delivery,
                Some(x.id),
                Link::NodeToDestination,
                PayloadClass::Approximation,
                sizes.generated_bits,
                Some(l),
            );
        }
        samples.extend(s);
    }
    rec.act(Phase::Learning, None, EventKind::Fit, fit_site, None);
    let estimate = fit_rq(&samples, options.estimator)?;
    if let Some(link) = return_link {
        rec.send(Phase::Learning, None, link, PayloadClass::Estimate, 0, None);
    }
    Ok(LearningOutcome {
        estimate,
        ledger: rec.ledger,
        trace: rec.trace,
        samples,
        prefit_hit: false,
    })
}
