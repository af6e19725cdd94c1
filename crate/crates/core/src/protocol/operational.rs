use serde::{Deserialize, Serialize};

use super::ledger::{Recorder, Site};
use super::session::{learn_point, PILOT_STREAM};
use super::{Contract, CostLedger, EventKind, Link, PayloadClass, Phase, ProtocolError, SessionOptions, TraceEvent};
use crate::budget::{pilot_slots, PilotSchedule};
use crate::model::{DataPoint, GenerativeCodec};
use crate::netsim::Topology;
use crate::rng::derive_seed;
use crate::rq::{update_with_pilot, RQEstimate};
use crate::select::{select, Choice, ModeConfig, Selection};

const OPERATE_STREAM: u64 = 0x4f50_4552;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointOutcome {
    pub point_id: u64,
    pub pilot: bool,
    pub choice: Option<Choice>,
    /// `|x| − L_P*·pixels`, bits; zero for full-data transmissions and pilots.
    pub savings_bits: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperationalOutcome {
    pub ledger: CostLedger,
    pub trace: Vec<TraceEvent>,
    /// Estimate after all pilot updates.
    pub estimate: RQEstimate,
    /// Initial selection followed by one per pilot refresh.
    pub selections: Vec<Selection>,
    pub points: Vec<PointOutcome>,
    /// `W`, summed over non-pilot points.
    pub savings_bits: i64,
}

/// Per-point savings of a prompt of `l_p` bpp over the original.
pub fn savings_bits(original_bits: u64, l_p: f64, pixels: u64) -> i64 {
    original_bits as i64 - (l_p * pixels as f64).round() as i64
}

/// Post-learning transmission of `stream`. Pilot slots run a learning loop,
/// fold its samples into the estimate and refresh the selection; all other
/// points are sent as the selected prompt (or in full).
#[allow(clippy::too_many_arguments)]
pub fn run_operational(
    contract: &Contract,
    codec: &dyn GenerativeCodec,
    estimate: &RQEstimate,
    mode: &ModeConfig,
    network: Option<(&Topology, &str, &str, &str)>,
    stream: &[DataPoint],
    pilots: &PilotSchedule,
    options: &SessionOptions,
) -> Result<OperationalOutcome, ProtocolError> {
    let slots = pilot_slots(pilots, stream.len() as u64)?;
    let mut rec = Recorder::new(
        CostLedger::new(contract.variant, contract.grid.len()),
        &options.names,
        options.latency.as_ref(),
        options.control,
        contract.generation_time,
    );
    let mut est = estimate.clone();
    rec.act(Phase::Operational, None, EventKind::Select, Site::Source, None);
    let mut selection = select(&est, mode, network)?;
    let mut selections = vec![selection.clone()];
    let mut points = Vec::with_capacity(stream.len());
    let mut next_slot = slots.iter().peekable();
    for (i, x) in stream.iter().enumerate() {
        let n = i as u64 + 1;
        if next_slot.next_if_eq(&&n).is_some() {
            rec.begin_point();
            let (samples, sizes) = learn_point(
                &mut rec,
                codec,
                contract,
                x,
                Phase::Pilot,
                derive_seed(options.seed, &[PILOT_STREAM, x.id, n]),
            )?;
            rec.end_point(x.id, Phase::Pilot, Some(sizes));
            est = update_with_pilot(&est, &samples, pilots.forgetting)?;
            rec.act(Phase::Pilot, Some(x.id), EventKind::Select, Site::Source, None);
            selection = select(&est, mode, network)?;
            selections.push(selection.clone());
            points.push(PointOutcome {
                point_id: x.id,
                pilot: true,
                choice: None,
                savings_bits: 0,
            });
            continue;
        }
        let pt = Some(x.id);
        rec.begin_point();
        let w = match selection.chosen {
            Choice::PromptSize(l) => {
                rec.act(Phase::Operational, pt, EventKind::Encode, Site::Source, Some(l));
                let prompt = codec.encode(
                    x,
                    l,
                    contract.codec_variant,
                    derive_seed(options.seed, &[OPERATE_STREAM, x.id, n]),
                )?;
                rec.send(
                    Phase::Operational,
                    pt,
                    Link::SourceToNode,
                    PayloadClass::Prompt,
                    prompt.payload_bits,
                    Some(l),
                );
                rec.act(Phase::Operational, pt, EventKind::Generate, Site::Node, Some(l));
                let xhat = codec.generate(&prompt)?;
                rec.send(
                    Phase::Operational,
                    pt,
                    Link::NodeToDestination,
                    PayloadClass::Approximation,
                    xhat.size_bits(),
                    Some(l),
                );
                savings_bits(x.size_bits(), l, codec.pixel_count(x))
            }
            Choice::FullData => {
                rec.send(
                    Phase::Operational,
                    pt,
                    Link::SourceToDestination,
                    PayloadClass::Original,
                    x.size_bits(),
                    None,
                );
                0
            }
        };
        rec.end_point(x.id, Phase::Operational, None);
        rec.ledger.savings.push(w);
        points.push(PointOutcome {
            point_id: x.id,
            pilot: false,
            choice: Some(selection.chosen),
            savings_bits: w,
        });
    }
    let savings = rec.ledger.savings_total();
    Ok(OperationalOutcome {
        ledger: rec.ledger,
        trace: rec.trace,
        estimate: est,
        selections,
        points,
        savings_bits: savings,
    })
}
