use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{LearningVariant, Link, PointSizes, RoleNames};
use crate::netsim::LatencyProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PayloadClass {
    Prompt,
    Original,
    Approximation,
    Estimate,
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Discovery,
    Probe,
    Learning,
    Pilot,
    Operational,
    /// Approximations forwarded to the destination as useful data.
    Delivery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Message,
    Encode,
    Generate,
    Measure,
    Fit,
    Select,
}

/// Sizes charged for control-plane messages. Disabled by default, so only
/// data-plane payloads count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlCharging {
    pub enabled: bool,
    #[serde(default)]
    pub control_bits: u64,
    #[serde(default)]
    pub estimate_bits: u64,
}

impl ControlCharging {
    fn charge(&self, class: PayloadClass, bits: u64) -> u64 {
        match class {
            PayloadClass::Control if self.enabled => self.control_bits,
            PayloadClass::Estimate if self.enabled => self.estimate_bits,
            PayloadClass::Control | PayloadClass::Estimate => 0,
            _ => bits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub seq: u64,
    pub phase: Phase,
    pub point: Option<u64>,
    pub from: String,
    pub to: String,
    pub class: PayloadClass,
    pub bits: u64,
    pub l_p: Option<f64>,
}

/// Bits spent on one data point in one phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCost {
    pub point_id: u64,
    pub phase: Phase,
    pub bits: u64,
    pub sizes: Option<PointSizes>,
}

/// One line of the event trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    /// Simulated time, seconds.
    pub t: f64,
    pub phase: Phase,
    pub kind: EventKind,
    pub from: String,
    pub to: Option<String>,
    pub class: Option<PayloadClass>,
    pub size_bits: Option<u64>,
    pub l_p: Option<f64>,
    pub point: Option<u64>,
}

/// Writes events as newline-delimited JSON.
pub fn write_ndjson<W: Write>(events: &[TraceEvent], mut out: W) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Summary row of a ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub variant: String,
    #[serde(rename = "N_L")]
    pub n_l: u64,
    #[serde(rename = "N_p")]
    pub n_p: usize,
    /// Empty when learning points differ in cost.
    pub kappa_bits: Option<u64>,
    #[serde(rename = "K_L_bits")]
    pub k_l_bits: u64,
    #[serde(rename = "W_bits")]
    pub w_bits: i64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub variant: Option<LearningVariant>,
    pub grid_len: usize,
    pub records: Vec<MessageRecord>,
    pub points: Vec<PointCost>,
    /// Per-point savings of operational transmissions, bits.
    pub savings: Vec<i64>,
}

impl CostLedger {
    pub fn new(variant: LearningVariant, grid_len: usize) -> Self {
        Self {
            variant: Some(variant),
            grid_len,
            ..Self::default()
        }
    }

    pub fn phase_bits(&self, phase: Phase) -> u64 {
        self.records.iter().filter(|r| r.phase == phase).map(|r| r.bits).sum()
    }

    /// Total learning cost `K_L`.
    pub fn learning_bits(&self) -> u64 {
        self.phase_bits(Phase::Learning)
    }

    pub fn post_learning_bits(&self) -> u64 {
        [Phase::Pilot, Phase::Operational, Phase::Delivery]
            .iter()
            .map(|&p| self.phase_bits(p))
            .sum()
    }

    pub fn n_learned(&self) -> u64 {
        self.points.iter().filter(|p| p.phase == Phase::Learning).count() as u64
    }

    /// Common per-point learning cost `κ`, if every learning point cost the same.
    pub fn kappa(&self) -> Option<u64> {
        let mut costs = self
            .points
            .iter()
            .filter(|p| p.phase == Phase::Learning)
            .map(|p| p.bits);
        let first = costs.next()?;
        costs.all(|c| c == first).then_some(first)
    }

    pub fn savings_total(&self) -> i64 {
        self.savings.iter().sum()
    }

    pub fn row(&self) -> LedgerRow {
        LedgerRow {
            variant: self.variant.map_or_else(String::new, |v| v.name().to_string()),
            n_l: self.n_learned(),
            n_p: self.grid_len,
            kappa_bits: self.kappa(),
            k_l_bits: self.learning_bits(),
            w_bits: self.savings_total(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.serialize(self.row())?;
        w.flush()?;
        Ok(())
    }
}

/// Which role performs an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Site {
    Source,
    Node,
    Destination,
}

/// Appends ledger records and trace events under a simulated clock.
pub(crate) struct Recorder<'a> {
    pub ledger: CostLedger,
    pub trace: Vec<TraceEvent>,
    pub clock: f64,
    names: &'a RoleNames,
    latency: Option<&'a LatencyProfile>,
    control: ControlCharging,
    generation_time: f64,
    point_start: usize,
}

impl<'a> Recorder<'a> {
    pub fn new(
        ledger: CostLedger,
        names: &'a RoleNames,
        latency: Option<&'a LatencyProfile>,
        control: ControlCharging,
        generation_time: f64,
    ) -> Self {
        Self {
            ledger,
            trace: Vec::new(),
            clock: 0.0,
            names,
            latency,
            control,
            generation_time,
            point_start: 0,
        }
    }

    fn name(&self, site: Site) -> &str {
        match site {
            Site::Source => &self.names.source,
            Site::Node => &self.names.node,
            Site::Destination => &self.names.destination,
        }
    }

    fn endpoints(link: Link) -> (Site, Site) {
        match link {
            Link::SourceToNode => (Site::Source, Site::Node),
            Link::NodeToSource => (Site::Node, Site::Source),
            Link::NodeToDestination => (Site::Node, Site::Destination),
            Link::SourceToDestination => (Site::Source, Site::Destination),
            Link::DestinationToSource => (Site::Destination, Site::Source),
        }
    }

    pub fn send(
        &mut self,
        phase: Phase,
        point: Option<u64>,
        link: Link,
        class: PayloadClass,
        bits: u64,
        l_p: Option<f64>,
    ) {
        let bits = self.control.charge(class, bits);
        if let Some(t) = self.latency.and_then(|p| p.message_time(link, bits).ok()) {
            self.clock += t;
        }
        let (a, b) = Self::endpoints(link);
        let (from, to) = (self.name(a).to_string(), self.name(b).to_string());
        self.ledger.records.push(MessageRecord {
            seq: self.ledger.records.len() as u64,
            phase,
            point,
            from: from.clone(),
            to: to.clone(),
            class,
            bits,
            l_p,
        });
        self.push(
            phase,
            EventKind::Message,
            from,
            Some(to),
            Some(class),
            Some(bits),
            l_p,
            point,
        );
    }

    pub fn act(&mut self, phase: Phase, point: Option<u64>, kind: EventKind, site: Site, l_p: Option<f64>) {
        self.clock += match kind {
            EventKind::Encode => self.latency.map_or(0.0, |p| p.encode_time),
            EventKind::Generate => self.latency.map_or(self.generation_time, |p| p.generation_time),
            _ => 0.0,
        };
        let who = self.name(site).to_string();
        self.push(phase, kind, who, None, None, None, l_p, point);
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        phase: Phase,
        kind: EventKind,
        from: String,
        to: Option<String>,
        class: Option<PayloadClass>,
        size_bits: Option<u64>,
        l_p: Option<f64>,
        point: Option<u64>,
    ) {
        self.trace.push(TraceEvent {
            seq: self.trace.len() as u64,
            t: self.clock,
            phase,
            kind,
            from,
            to,
            class,
            size_bits,
            l_p,
            point,
        });
    }

    pub fn begin_point(&mut self) {
        self.point_start = self.ledger.records.len();
    }

    /// Closes the current point, returning its cost.
    pub fn end_point(&mut self, point_id: u64, phase: Phase, sizes: Option<PointSizes>) -> u64 {
        let bits = self.ledger.records[self.point_start..]
            .iter()
            .filter(|r| r.phase == phase)
            .map(|r| r.bits)
            .sum();
        self.ledger.points.push(PointCost {
            point_id,
            phase,
            bits,
            sizes,
        });
        bits
    }
}
