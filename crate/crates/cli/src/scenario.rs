//! Scenario execution and artifact writing.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use genrelay_core::experiment::{
    learning_costs, load_published_viability, optimal_budget, quality_adherence, viability_crosscheck,
    width_distribution, write_csv, AdherenceOptions, ExperimentError, ViabilityRecord, REFERENCE_SIZES,
};
use genrelay_core::protocol::{
    contract_scores, contract_select, discover, probe, record_discovery, run_learning, run_operational, write_ndjson,
    LearningOutcome, LearningSession, ProtocolError,
};
use genrelay_core::select::{Choice, SelectError};
use serde::Serialize;
use thiserror::Error;

use crate::config::{DiscoverPlan, ExperimentPlan, LearnPlan, OperatePlan, Plan, Resolved, Scenario};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ScenarioError {
    /// Short machine-readable cause.
    pub fn kind(&self) -> &'static str {
        match self {
            ScenarioError::Protocol(e) => match e {
                ProtocolError::BudgetExhausted => "budget-exhausted",
                ProtocolError::CorpusExhausted { .. } => "corpus-exhausted",
                ProtocolError::Unreachable(_) => "unreachable",
                ProtocolError::NoCandidates => "no-candidates",
                ProtocolError::Select(SelectError::Infeasible(_)) => "infeasible",
                ProtocolError::Estimate(_) | ProtocolError::Select(SelectError::Estimate(_)) => "estimate",
                _ => "protocol",
            },
            ScenarioError::Experiment(_) => "experiment",
            ScenarioError::Output { .. } | ScenarioError::Json(_) => "output",
        }
    }
}

/// Output directory with a record of the files written.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn put(&mut self, name: &str, bytes: Vec<u8>) -> Result<(), ScenarioError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|source| ScenarioError::Output { path, source })?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), ScenarioError> {
        let mut buf = Vec::new();
        write_csv(rows, &mut buf)?;
        self.put(name, buf)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), ScenarioError> {
        let mut buf = serde_json::to_vec_pretty(value)?;
        buf.push(b'\n');
        self.put(name, buf)
    }

    fn trace(&mut self, name: &str, events: &[genrelay_core::protocol::TraceEvent]) -> Result<(), ScenarioError> {
        let mut buf = Vec::new();
        write_ndjson(events, &mut buf).map_err(|source| ScenarioError::Output {
            path: self.dir.join(name),
            source,
        })?;
        self.put(name, buf)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: &'static str,
    pub out: PathBuf,
    pub files: Vec<String>,
}

fn learn(plan: &LearnPlan, out: &mut Outputs) -> Result<LearningOutcome, ScenarioError> {
    let codec = plan.codec.build();
    let outcome = run_learning(&LearningSession {
        contract: plan.contract.clone(),
        codec: codec.as_ref(),
        corpus: &plan.corpus,
        budget: plan.budget,
        options: plan.options.clone(),
    })?;
    out.trace("learning_trace.ndjson", &outcome.trace)?;
    out.json("estimate.json", &outcome.estimate)?;
    Ok(outcome)
}

#[derive(Serialize)]
struct PointRow {
    point_id: u64,
    pilot: bool,
    full_data: bool,
    #[serde(rename = "L_p")]
    l_p: Option<f64>,
    savings_bits: i64,
}

fn operate(learn_plan: &LearnPlan, plan: &OperatePlan, out: &mut Outputs) -> Result<(), ScenarioError> {
    let learned = learn(learn_plan, out)?;
    let codec = learn_plan.codec.build();
    let names = &learn_plan.options.names;
    let network = plan.topology.as_ref().map(|t| {
        (
            t,
            names.source.as_str(),
            names.node.as_str(),
            names.destination.as_str(),
        )
    });
    let op = run_operational(
        &learn_plan.contract,
        codec.as_ref(),
        &learned.estimate,
        &plan.mode,
        network,
        &plan.stream,
        &plan.pilots,
        &learn_plan.options,
    )?;
    out.trace("operational_trace.ndjson", &op.trace)?;
    let mut row = learned.ledger.row();
    row.w_bits = op.savings_bits;
    out.csv("ledger.csv", &[row])?;
    out.json("selections.json", &op.selections)?;
    let rows: Vec<PointRow> = op
        .points
        .iter()
        .map(|p| PointRow {
            point_id: p.point_id,
            pilot: p.pilot,
            full_data: p.choice == Some(Choice::FullData),
            l_p: p.choice.and_then(|c| c.prompt_size()),
            savings_bits: p.savings_bits,
        })
        .collect();
    out.csv("points.csv", &rows)
}

#[derive(Serialize)]
struct ProbeRow {
    node_id: String,
    mean_quality: f64,
    mean_latency: f64,
    samples: usize,
    cost_bits: u64,
    score: f64,
}

fn discover_scenario(plan: &DiscoverPlan, out: &mut Outputs) -> Result<(), ScenarioError> {
    let found = discover(&plan.registry, &plan.section.query);
    let (ledger, trace) = record_discovery(&found, &plan.options);
    out.trace("discovery_trace.ndjson", &trace)?;
    let network = plan.topology.as_ref().map(|t| (t, plan.options.names.source.as_str()));
    let reports = found
        .iter()
        .map(|ad| probe(ad, &plan.section.probe, &plan.sample, network, &plan.options))
        .collect::<Result<Vec<_>, _>>()?;
    let scores = contract_scores(&reports, &plan.section.weights);
    let rows: Vec<ProbeRow> = reports
        .iter()
        .zip(&scores)
        .map(|(r, &score)| ProbeRow {
            node_id: r.node_id.clone(),
            mean_quality: r.mean_quality(),
            mean_latency: r.mean_latency(),
            samples: r.quality_samples.len(),
            cost_bits: r.cost_bits,
            score,
        })
        .collect();
    out.csv("probes.csv", &rows)?;
    out.csv("discovery_ledger.csv", &ledger.records)?;
    let contract = contract_select(&reports, &plan.section.weights, &plan.section.terms)?;
    out.json("contract.json", &contract)
}

fn experiment(
    scenario: Scenario,
    plan: &ExperimentPlan,
    seed: u64,
    workers: usize,
    out: &mut Outputs,
) -> Result<(), ScenarioError> {
    let e = &plan.section;
    let model = e.model.build();
    let opts = AdherenceOptions {
        full_data_adherent: e.full_data_adherent,
        workers,
    };
    match scenario {
        Scenario::Width => {
            let rows = width_distribution(
                model.as_ref(),
                &e.grid,
                &plan.budgets,
                e.realizations,
                e.alpha,
                seed,
                workers,
            )?;
            out.csv("widths.csv", &rows)
        }
        Scenario::Adherence => {
            let (q, a, m) = (e.q_min.unwrap(), e.alpha_star.unwrap(), e.test_size.unwrap());
            let rows = plan
                .budgets
                .iter()
                .map(|&n| quality_adherence(model.as_ref(), &e.grid, n, q, a, e.realizations, m, seed, &opts))
                .collect::<Result<Vec<_>, _>>()?;
            out.csv("adherence.csv", &rows)
        }
        _ => {
            let (q, a, m) = (e.q_min.unwrap(), e.alpha_star.unwrap(), e.test_size.unwrap());
            let best = optimal_budget(
                model.as_ref(),
                &e.grid,
                q,
                a,
                &plan.budgets,
                e.realizations,
                m,
                seed,
                &opts,
            )?;
            out.csv("adherence.csv", &best.curve)?;
            out.json("optimal_budget.json", &best)?;
            if let (Some(kappa), Some(w)) = (e.kappa_bits, e.w_bits) {
                let k_l = best.n_l.map_or(0, |n| n * kappa);
                out.csv(
                    "viability.csv",
                    &[ViabilityRecord::new("synthetic", q, best.n_l, k_l, w)],
                )?;
            }
            Ok(())
        }
    }
}

fn tables(out: &mut Outputs) -> Result<(), ScenarioError> {
    out.csv(
        "learning_costs.csv",
        &learning_costs(&REFERENCE_SIZES, &[1, 2, 3, 4, 5])?,
    )?;
    let rows = load_published_viability()?;
    out.csv("viability_check.csv", &viability_crosscheck(&rows))?;
    let mut records = Vec::with_capacity(rows.len() * 2);
    for r in &rows {
        records.extend(r.records()?);
    }
    out.csv("viability.csv", &records)
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    scenario: &'static str,
    seed: u64,
    /// Effective configuration without `out` and `workers`, which do not
    /// affect results.
    config: serde_json::Value,
    files: &'a [String],
    started_unix_seconds: u64,
    elapsed_seconds: f64,
}

/// Executes a resolved plan, writing artifacts and `manifest.json` to its
/// output directory.
pub fn execute(r: &Resolved) -> Result<RunSummary, ScenarioError> {
    let start = Instant::now();
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    fs::create_dir_all(&r.out).map_err(|source| ScenarioError::Output {
        path: r.out.clone(),
        source,
    })?;
    let mut out = Outputs {
        dir: r.out.clone(),
        files: Vec::new(),
    };
    match &r.plan {
        Plan::Learn(p) => {
            let outcome = learn(p, &mut out)?;
            out.csv("ledger.csv", &[outcome.ledger.row()])?;
        }
        Plan::Operate(l, o) => operate(l, o, &mut out)?,
        Plan::Discover(d) => discover_scenario(d, &mut out)?,
        Plan::Experiment(e) => experiment(r.scenario, e, r.seed, r.workers, &mut out)?,
        Plan::Tables => tables(&mut out)?,
    }
    let mut config = r.document.clone();
    config.remove("out");
    config.remove("workers");
    let files = out.files.clone();
    let manifest = Manifest {
        tool: "genrelay",
        version: env!("CARGO_PKG_VERSION"),
        scenario: r.scenario.name(),
        seed: r.seed,
        config: serde_json::to_value(&config)?,
        files: &files,
        started_unix_seconds: if r.deterministic { 0 } else { started },
        elapsed_seconds: if r.deterministic {
            0.0
        } else {
            start.elapsed().as_secs_f64()
        },
    };
    out.json("manifest.json", &manifest)?;
    Ok(RunSummary {
        scenario: r.scenario.name(),
        out: r.out.clone(),
        files: out.files,
    })
}

/// Reads a config file; relative paths inside it resolve against its directory.
pub fn load(path: &Path) -> Result<(toml::Table, PathBuf), LoadError> {
    let text = fs::read_to_string(path).map_err(|e| LoadError::Unreadable(format!("{}: {e}", path.display())))?;
    let doc = toml::from_str::<toml::Table>(&text).map_err(|e| LoadError::Parse(e.to_string().trim().to_string()))?;
    let base = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    Ok((doc, base))
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("file unreadable: {0}")]
    Unreadable(String),
    #[error("config is not valid TOML: {0}")]
    Parse(String),
}
