//! Run configuration: TOML document, dotted overrides and resolution into
//! an executable plan. `run` and `validate` share [`resolve`], so a config
//! validates exactly when it resolves.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use genrelay_core::budget::{BudgetPlan, PilotSchedule};
use genrelay_core::experiment::ModelSpec;
use genrelay_core::model::{
    synthetic_corpus, synthetic_opaque_corpus, CodecFamily, CodecSpec, DataPoint, GenerativeCodec,
};
use genrelay_core::netsim::{total_latency, LatencyProfile, Topology};
use genrelay_core::protocol::{
    discover, Contract, ContractTerms, ControlCharging, KpiWeights, LearningVariant, PointSizes, PrefitCache,
    ProbePlan, Query, Registry, RoleNames, SessionOptions, TransmissionMode,
};
use genrelay_core::rng::derive_seed;
use genrelay_core::rq::EstimatorOptions;
use genrelay_core::select::{Mode, ModeConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    /// Dotted path of the offending field.
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "learn")]
    Learn,
    #[serde(rename = "operate")]
    Operate,
    #[serde(rename = "discover")]
    Discover,
    #[serde(rename = "experiment.width")]
    Width,
    #[serde(rename = "experiment.adherence")]
    Adherence,
    #[serde(rename = "experiment.optimal-budget")]
    OptimalBudget,
    #[serde(rename = "experiment.tables")]
    Tables,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::Learn,
        Scenario::Operate,
        Scenario::Discover,
        Scenario::Width,
        Scenario::Adherence,
        Scenario::OptimalBudget,
        Scenario::Tables,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Learn => "learn",
            Scenario::Operate => "operate",
            Scenario::Discover => "discover",
            Scenario::Width => "experiment.width",
            Scenario::Adherence => "experiment.adherence",
            Scenario::OptimalBudget => "experiment.optimal-budget",
            Scenario::Tables => "experiment.tables",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| format!("unknown scenario {s:?}"))
    }
}

/// Data points synthesized for a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CorpusSpec {
    Images { count: usize, width: u32, height: u32 },
    Opaque { count: usize, bytes: usize },
}

impl CorpusSpec {
    fn count(&self) -> usize {
        match *self {
            CorpusSpec::Images { count, .. } | CorpusSpec::Opaque { count, .. } => count,
        }
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match *self {
            CorpusSpec::Images { width, height, .. } if width == 0 || height == 0 => {
                out.push("image dimensions must be positive".into())
            }
            CorpusSpec::Opaque { bytes: 0, .. } => out.push("opaque points need at least one byte".into()),
            _ => {}
        }
        if self.count() == 0 {
            out.push("corpus must hold at least one point".into());
        }
        out
    }

    /// `count + extra` points; ids run from 0.
    pub fn generate(&self, extra: usize, seed: u64) -> Vec<DataPoint> {
        let n = self.count() + extra;
        match *self {
            CorpusSpec::Images { width, height, .. } => synthetic_corpus(n, width, height, seed),
            CorpusSpec::Opaque { bytes, .. } => synthetic_opaque_corpus(n, bytes, seed),
        }
    }
}

/// `[session]`: everything in [`SessionOptions`] except the seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSection {
    #[serde(default)]
    pub mode: TransmissionMode,
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
}

impl SessionSection {
    fn options(&self, seed: u64) -> SessionOptions {
        SessionOptions {
            mode: self.mode,
            stateful_task: self.stateful_task,
            estimator: self.estimator,
            control: self.control,
            latency: self.latency.clone(),
            prefit: self.prefit.clone(),
            names: self.names.clone(),
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperateSection {
    /// Post-learning points to transmit.
    pub stream_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscoverSection {
    #[serde(default)]
    pub query: Query,
    pub probe: ProbePlan,
    pub terms: ContractTerms,
    #[serde(default)]
    pub weights: KpiWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub model: ModelSpec,
    pub grid: Vec<f64>,
    #[serde(default)]
    pub budgets: Option<Vec<u64>>,
    /// Inclusive `[first, last]` alternative to `budgets`.
    #[serde(default)]
    pub budget_range: Option<[u64; 2]>,
    pub realizations: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub q_min: Option<f64>,
    #[serde(default)]
    pub alpha_star: Option<f64>,
    #[serde(default)]
    pub test_size: Option<u64>,
    #[serde(default = "yes")]
    pub full_data_adherent: bool,
    /// Per-point learning cost; with `w_bits`, adds a viability record.
    #[serde(default)]
    pub kappa_bits: Option<u64>,
    #[serde(default)]
    pub w_bits: Option<i64>,
}

fn default_alpha() -> f64 {
    0.1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnPlan {
    pub codec: CodecSpec,
    pub contract: Contract,
    pub corpus: Vec<DataPoint>,
    pub budget: BudgetPlan,
    pub options: SessionOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperatePlan {
    pub mode: ModeConfig,
    pub stream: Vec<DataPoint>,
    pub pilots: PilotSchedule,
    pub topology: Option<Topology>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscoverPlan {
    pub registry: Registry,
    pub section: DiscoverSection,
    pub sample: Vec<DataPoint>,
    pub topology: Option<Topology>,
    pub options: SessionOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub section: ExperimentSection,
    pub budgets: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Plan {
    Learn(LearnPlan),
    Operate(LearnPlan, OperatePlan),
    Discover(DiscoverPlan),
    Experiment(ExperimentPlan),
    Tables,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub scenario: Scenario,
    pub seed: u64,
    pub out: PathBuf,
    pub workers: usize,
    /// Zero wall-clock fields in the manifest.
    pub deterministic: bool,
    /// Effective document after overrides.
    pub document: Table,
    pub plan: Plan,
}

const TOP_KEYS: [&str; 17] = [
    "scenario",
    "seed",
    "out",
    "workers",
    "deterministic",
    "topology",
    "registry",
    "codec",
    "contract",
    "corpus",
    "budget",
    "session",
    "mode",
    "pilots",
    "operate",
    "discover",
    "experiment",
];

const CORPUS_STREAM: u64 = 0x434f_5250;

/// Sets `key` (dotted) to `raw`, read as a TOML value when it parses as one
/// and as a bare string otherwise.
pub fn apply_override(doc: &mut Table, key: &str, raw: &str) -> Result<(), Diagnostic> {
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    set_path(doc, key, value)
}

pub fn set_path(doc: &mut Table, key: &str, value: Value) -> Result<(), Diagnostic> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Diagnostic::new(key, "override key has an empty segment"));
    }
    let mut table = doc;
    for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Diagnostic::new(parts[..=i].join("."), "is not a table"))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

struct Ctx<'a> {
    doc: &'a Table,
    base: &'a Path,
    diags: Vec<Diagnostic>,
}

impl Ctx<'_> {
    fn err(&mut self, path: impl Into<String>, msg: impl Into<String>) {
        self.diags.push(Diagnostic::new(path, msg));
    }

    fn get<T: DeserializeOwned>(&mut self, key: &str, required: bool) -> Option<T> {
        match self.doc.get(key) {
            None => {
                if required {
                    self.err(key, "required for this scenario");
                }
                None
            }
            Some(v) => match v.clone().try_into::<T>() {
                Ok(t) => Some(t),
                Err(e) => {
                    self.err(key, e.to_string().trim().to_string());
                    None
                }
            },
        }
    }

    /// JSON document referenced by the path stored under `key`.
    fn file<T: DeserializeOwned>(&mut self, key: &str, required: bool) -> Option<T> {
        let rel: String = self.get(key, required)?;
        let path = self.base.join(&rel);
        match std::fs::read_to_string(&path) {
            Err(e) => {
                self.err(key, format!("cannot read {}: {e}", path.display()));
                None
            }
            Ok(text) => match serde_json::from_str(&text) {
                Ok(t) => Some(t),
                Err(e) => {
                    self.err(key, format!("{}: {e}", path.display()));
                    None
                }
            },
        }
    }
}

/// Problems of a strictly increasing, finite, nonempty grid.
fn grid_problem(grid: &[f64]) -> Option<&'static str> {
    if grid.is_empty() {
        Some("grid is empty")
    } else if grid.iter().any(|l| !l.is_finite()) {
        Some("grid values must be finite")
    } else if grid.windows(2).any(|w| !(w[0] < w[1])) {
        Some("grid must be strictly increasing")
    } else {
        None
    }
}

/// Checks that `codec` can encode every grid size for the given points.
fn check_sizes(
    ctx: &mut Ctx<'_>,
    path: &str,
    codec: &dyn GenerativeCodec,
    variant: u8,
    grid: &[f64],
    points: &[DataPoint],
) {
    for x in points.iter().take(1) {
        match codec.min_prompt_bpp(x, variant) {
            Err(e) => ctx.err(path, e.to_string()),
            Ok(min) => {
                if let Some(l) = grid.iter().find(|&&l| l < min - 1e-12) {
                    ctx.err(
                        path,
                        format!("prompt size {l} bpp is below the smallest size {min} the codec variant produces"),
                    );
                }
            }
        }
    }
}

fn corpus_matches_codec(ctx: &mut Ctx<'_>, codec: &CodecSpec, corpus: &CorpusSpec) -> bool {
    if codec.family() == CodecFamily::ToyImage && matches!(corpus, CorpusSpec::Opaque { .. }) {
        ctx.err("corpus.kind", "the toy-image codec needs an image corpus");
        return false;
    }
    true
}

fn resolve_learn(ctx: &mut Ctx<'_>, seed: u64, extra: usize) -> Option<(LearnPlan, Vec<DataPoint>)> {
    let codec: Option<CodecSpec> = ctx.get("codec", true);
    let contract: Option<Contract> = ctx.get("contract", true);
    let corpus: Option<CorpusSpec> = ctx.get("corpus", true);
    let budget: Option<BudgetPlan> = ctx.get("budget", true);
    let session: SessionSection = ctx.get("session", false).unwrap_or_default();
    if let Some(b) = &budget {
        for p in b.problems() {
            ctx.err("budget", p);
        }
        if matches!(b, BudgetPlan::Time { .. }) && session.latency.is_none() {
            ctx.err("session.latency", "a time budget needs a latency profile");
        }
    }
    if let Some(c) = &corpus {
        for p in c.problems() {
            ctx.err("corpus", p);
        }
    }
    if let Some(c) = &contract {
        if let Some(p) = grid_problem(&c.grid) {
            ctx.err("contract.grid", p);
        } else if session.stateful_task && c.variant.is_destination() && c.grid.len() > 1 {
            ctx.err(
                "contract.grid",
                "a stateful destination task allows a single prompt size",
            );
        }
        if !(c.generation_time >= 0.0) {
            ctx.err("contract.generation_time", "must be non-negative");
        }
        if let Some(p) = &session.latency {
            let sizes = PointSizes {
                prompt_bits: vec![1; c.grid.len()],
                min_prompt_bits: 1,
                original_bits: 1,
                generated_bits: 1,
            };
            if let Err(e) = total_latency(p, &sizes, c.variant) {
                ctx.err("session.latency", e.to_string());
            }
        }
    }
    let (codec, contract, corpus, budget) = (codec?, contract?, corpus?, budget?);
    if !ctx.diags.is_empty() || !corpus_matches_codec(ctx, &codec, &corpus) {
        return None;
    }
    let built = codec.build();
    if let Err(e) = contract.validate(&built.descriptor()) {
        ctx.err(
            "contract",
            match e {
                genrelay_core::protocol::ProtocolError::MetricIncompatible { .. } => {
                    format!("quality metric compatibility: {e}")
                }
                _ => e.to_string(),
            },
        );
        return None;
    }
    let mut points = corpus.generate(extra, derive_seed(seed, &[CORPUS_STREAM]));
    check_sizes(
        ctx,
        "contract.grid",
        built.as_ref(),
        contract.codec_variant,
        &contract.grid,
        &points,
    );
    if !ctx.diags.is_empty() {
        return None;
    }
    let stream = points.split_off(corpus.count());
    Some((
        LearnPlan {
            codec,
            contract,
            corpus: points,
            budget,
            options: session.options(seed),
        },
        stream,
    ))
}

fn resolve_operate(ctx: &mut Ctx<'_>, seed: u64) -> Option<Plan> {
    let op: Option<OperateSection> = ctx.get("operate", true);
    let mode: Option<ModeConfig> = ctx.get("mode", true);
    let pilots: PilotSchedule = ctx.get("pilots", false).unwrap_or(PilotSchedule {
        policy: Default::default(),
        forgetting: 1.0,
    });
    for p in pilots.problems() {
        ctx.err("pilots", p);
    }
    let topology: Option<Topology> = if ctx.doc.contains_key("topology") {
        ctx.file("topology", false)
    } else {
        None
    };
    if let Some(m) = &mode {
        for p in m.problems() {
            ctx.err("mode", p);
        }
    }
    let op = op?;
    let (learn, stream) = resolve_learn(ctx, seed, op.stream_length)?;
    let mode = mode?;
    let g = &learn.contract.grid;
    let covered = |l: &f64| {
        if mode.interpolate_off_grid {
            *l >= g[0] && *l <= g[g.len() - 1]
        } else {
            g.contains(l)
        }
    };
    if let Some(l) = mode.grid.iter().find(|l| !covered(l)) {
        ctx.err(
            "mode.grid",
            format!("prompt size {l} is not covered by the contract grid"),
        );
    }
    if mode.mode == Mode::RateConstrained {
        match &topology {
            None => ctx.err("topology", "rate-constrained mode needs a topology"),
            Some(t) => {
                let n = &learn.options.names;
                for (path, id) in [
                    ("session.names.source", &n.source),
                    ("session.names.node", &n.node),
                    ("session.names.destination", &n.destination),
                ] {
                    if let Err(e) = t.reachable(id, id) {
                        ctx.err(path, e.to_string());
                    }
                }
            }
        }
    }
    if !ctx.diags.is_empty() {
        return None;
    }
    Some(Plan::Operate(
        learn,
        OperatePlan {
            mode,
            stream,
            pilots,
            topology,
        },
    ))
}

fn resolve_discover(ctx: &mut Ctx<'_>, seed: u64) -> Option<Plan> {
    let registry: Option<Registry> = ctx.file("registry", true);
    let section: Option<DiscoverSection> = ctx.get("discover", true);
    let corpus: Option<CorpusSpec> = ctx.get("corpus", true);
    let session: SessionSection = ctx.get("session", false).unwrap_or_default();
    let topology: Option<Topology> = if ctx.doc.contains_key("topology") {
        ctx.file("topology", false)
    } else {
        None
    };
    if let Some(r) = &registry {
        for p in r.problems() {
            ctx.err("registry", p);
        }
    }
    if let Some(c) = &corpus {
        for p in c.problems() {
            ctx.err("corpus", p);
        }
    }
    if let Some(s) = &section {
        if s.probe.sizes.is_empty() || s.probe.repetitions == 0 {
            ctx.err("discover.probe", "probe plan needs sizes and at least one repetition");
        }
        if !(s.probe.jitter >= 0.0 && s.probe.jitter <= 1.0) {
            ctx.err("discover.probe.jitter", "must lie in [0, 1]");
        }
        if let Some(p) = grid_problem(&s.terms.grid) {
            ctx.err("discover.terms.grid", p);
        }
        if let Err(e) = s.terms.variant.check_metric(s.terms.metric) {
            ctx.err("discover.terms", format!("quality metric compatibility: {e}"));
        }
    }
    if let Some(t) = &topology {
        if let Err(e) = t.reachable(&session.names.source, &session.names.source) {
            ctx.err("session.names.source", e.to_string());
        }
    }
    let (registry, section, corpus) = (registry?, section?, corpus?);
    if !ctx.diags.is_empty() {
        return None;
    }
    let sample = corpus.generate(0, derive_seed(seed, &[CORPUS_STREAM]));
    for ad in discover(&registry, &section.query) {
        if !corpus_matches_codec(ctx, &ad.codec, &corpus) {
            break;
        }
        let codec = ad.codec.build();
        let path = format!("registry.{}", ad.node_id);
        let terms = &section.terms;
        let probe_contract = Contract {
            node_id: ad.node_id.clone(),
            codec_variant: section.probe.codec_variant,
            grid: section.probe.sizes.clone(),
            variant: LearningVariant::Source,
            metric: section.probe.metric,
            generation_time: ad.generation_time,
        };
        if let Err(e) = probe_contract.validate(&codec.descriptor()) {
            ctx.err(format!("{path} (probe)"), e.to_string());
        }
        check_sizes(
            ctx,
            &format!("{path} (probe)"),
            codec.as_ref(),
            section.probe.codec_variant,
            &section.probe.sizes,
            &sample,
        );
        let contract = Contract {
            node_id: ad.node_id.clone(),
            codec_variant: terms.codec_variant,
            grid: terms.grid.clone(),
            variant: terms.variant,
            metric: terms.metric,
            generation_time: ad.generation_time,
        };
        if let Err(e) = contract.validate(&codec.descriptor()) {
            ctx.err(format!("{path} (terms)"), e.to_string());
        }
        check_sizes(
            ctx,
            &format!("{path} (terms)"),
            codec.as_ref(),
            terms.codec_variant,
            &terms.grid,
            &sample,
        );
    }
    if !ctx.diags.is_empty() {
        return None;
    }
    Some(Plan::Discover(DiscoverPlan {
        registry,
        section,
        sample,
        topology,
        options: session.options(seed),
    }))
}

fn resolve_experiment(ctx: &mut Ctx<'_>, scenario: Scenario) -> Option<Plan> {
    let e: ExperimentSection = ctx.get("experiment", true)?;
    let budgets = match (&e.budgets, e.budget_range) {
        (Some(b), None) => b.clone(),
        (None, Some([a, b])) if a <= b => (a..=b).collect(),
        (None, Some(_)) => {
            ctx.err("experiment.budget_range", "first budget exceeds last");
            Vec::new()
        }
        (Some(_), Some(_)) => {
            ctx.err("experiment.budgets", "give either budgets or budget_range, not both");
            Vec::new()
        }
        (None, None) => {
            ctx.err("experiment.budgets", "required for this scenario");
            Vec::new()
        }
    };
    if let Some(p) = grid_problem(&e.grid) {
        ctx.err("experiment.grid", p);
    }
    if !budgets.is_empty() {
        if budgets.windows(2).any(|w| w[0] >= w[1]) {
            ctx.err("experiment.budgets", "budgets must be strictly increasing");
        }
        if budgets[0] < 2 {
            ctx.err("experiment.budgets", "every budget needs at least 2 samples");
        }
    }
    let min_realizations = if scenario == Scenario::Width { 2 } else { 1 };
    if e.realizations < min_realizations {
        ctx.err(
            "experiment.realizations",
            format!("must be at least {min_realizations}"),
        );
    }
    if scenario == Scenario::Width {
        if !(e.alpha > 0.0 && e.alpha < 1.0) {
            ctx.err("experiment.alpha", "must lie in (0, 1)");
        }
    } else {
        match e.q_min {
            None => ctx.err("experiment.q_min", "required for this scenario"),
            Some(q) if q.is_nan() => ctx.err("experiment.q_min", "must be a number"),
            _ => {}
        }
        let lowest = if scenario == Scenario::OptimalBudget {
            0.0
        } else {
            f64::MIN_POSITIVE
        };
        match e.alpha_star {
            None => ctx.err("experiment.alpha_star", "required for this scenario"),
            Some(a) if !(a >= lowest && a < 1.0) => ctx.err("experiment.alpha_star", "must lie in (0, 1)"),
            _ => {}
        }
        if e.test_size.unwrap_or(0) == 0 {
            ctx.err("experiment.test_size", "must be at least 1");
        }
    }
    if e.kappa_bits.is_some() != e.w_bits.is_some() {
        ctx.err("experiment.kappa_bits", "kappa_bits and w_bits go together");
    }
    if ctx.diags.is_empty() {
        if let ModelSpec::ToyImage {
            variant, width, height, ..
        } = e.model
        {
            if width == 0 || height == 0 {
                ctx.err("experiment.model", "image dimensions must be positive");
            } else {
                let codec = genrelay_core::model::ToyImageCodec::default();
                let probe = synthetic_corpus(1, width, height, 0);
                check_sizes(ctx, "experiment.grid", &codec, variant, &e.grid, &probe);
            }
        }
    }
    if !ctx.diags.is_empty() {
        return None;
    }
    Some(Plan::Experiment(ExperimentPlan { section: e, budgets }))
}

/// Resolves a document into a plan, or every problem found.
pub fn resolve(doc: &Table, base: &Path) -> Result<Resolved, Vec<Diagnostic>> {
    let mut ctx = Ctx {
        doc,
        base,
        diags: Vec::new(),
    };
    for k in doc.keys() {
        if !TOP_KEYS.contains(&k.as_str()) {
            ctx.err(k.clone(), "unknown key");
        }
    }
    let seed: Option<u64> = ctx.get("seed", true);
    let scenario = ctx
        .get::<String>("scenario", true)
        .and_then(|s| match s.parse::<Scenario>() {
            Ok(sc) => Some(sc),
            Err(e) => {
                ctx.err("scenario", e);
                None
            }
        });
    let out: String = ctx.get("out", false).unwrap_or_else(|| "out".into());
    let workers: usize = ctx.get("workers", false).unwrap_or(0);
    let deterministic: bool = ctx.get("deterministic", false).unwrap_or(true);
    let (Some(seed), Some(scenario)) = (seed, scenario) else {
        return Err(ctx.diags);
    };
    let plan = match scenario {
        Scenario::Learn => resolve_learn(&mut ctx, seed, 0).map(|(p, _)| Plan::Learn(p)),
        Scenario::Operate => resolve_operate(&mut ctx, seed),
        Scenario::Discover => resolve_discover(&mut ctx, seed),
        Scenario::Width | Scenario::Adherence | Scenario::OptimalBudget => resolve_experiment(&mut ctx, scenario),
        Scenario::Tables => Some(Plan::Tables),
    };
    match plan {
        Some(plan) if ctx.diags.is_empty() => Ok(Resolved {
            scenario,
            seed,
            out: PathBuf::from(out),
            workers,
            deterministic,
            document: doc.clone(),
            plan,
        }),
        _ => {
            if ctx.diags.is_empty() {
                ctx.err("", "configuration could not be resolved");
            }
            Err(ctx.diags)
        }
    }
}

/// Diagnostics of a document; empty means `run` will accept it.
pub fn validate(doc: &Table, base: &Path) -> Vec<Diagnostic> {
    resolve(doc, base).err().unwrap_or_default()
}
