use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use genrelay_cli::{apply_override, run_document, validate, CliError};
use proptest::prelude::*;
use toml::Table;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_genrelay"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

const BUNDLED: [&str; 8] = [
    "learn",
    "operate",
    "operate-rate",
    "discover",
    "width",
    "adherence",
    "optimal-budget",
    "tables",
];

#[test]
fn bundled_configs_validate_clean() {
    for name in BUNDLED {
        let cfg = configs().join(format!("{name}.toml"));
        let out = run(&["validate", "--config", cfg.to_str().unwrap()]);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stdout));
        assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "[]");
    }
}

#[test]
fn tables_scenario_writes_learning_costs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "run",
        "--scenario",
        "experiment.tables",
        "--seed",
        "1",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t3 = fs::read_to_string(tmp.path().join("learning_costs.csv")).unwrap();
    assert!(t3.lines().any(|l| l == "node-augmented,1,1574000"));
    assert!(t3.lines().any(|l| l == "destination-deviation,2,6020000"));
    let t4 = fs::read_to_string(tmp.path().join("viability_check.csv")).unwrap();
    assert!(t4.contains("PS,100,PNG,76840000,54000,1430,1423,ROUNDING_EXPLAINED"));
    assert!(!t4.contains("MISMATCH"));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["started_unix_seconds"], 0);
}

#[test]
fn missing_seed_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "run",
        "--scenario",
        "experiment.tables",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let rec: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(rec["error"], "config-invalid");
    assert!(rec["diagnostics"]
        .as_array()
        .unwrap()
        .iter()
        .any(|d| d["path"] == "seed"));
}

#[test]
fn reruns_are_byte_identical_and_worker_invariant() {
    for name in BUNDLED {
        let cfg = configs().join(format!("{name}.toml"));
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let common = [
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "experiment.realizations=30",
        ];
        let extra = |d: &Path, w: &str| {
            [&common[..], &["--out", d.to_str().unwrap(), "--workers", w]]
                .concat()
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
        };
        // The override adds an experiment section that non-experiment
        // scenarios reject, so drop it there.
        let strip = |v: Vec<String>| -> Vec<String> {
            if name.contains("learn") || name.contains("operate") || name == "discover" || name == "tables" {
                v.into_iter()
                    .filter(|s| s != "--set" && s != "experiment.realizations=30")
                    .collect()
            } else {
                v
            }
        };
        let oa = bin().args(strip(extra(a.path(), "1"))).output().unwrap();
        let ob = bin().args(strip(extra(b.path(), "4"))).output().unwrap();
        assert!(oa.status.success(), "{name}: {}", String::from_utf8_lossy(&oa.stderr));
        assert!(ob.status.success(), "{name}: {}", String::from_utf8_lossy(&ob.stderr));
        assert_eq!(dir_contents(a.path()), dir_contents(b.path()), "{name}");
    }
}

#[test]
fn seed_flag_overrides_the_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("learn.toml");
    let out = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "99",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 99);
    assert_eq!(manifest["config"]["seed"], 99);
}

fn doc(name: &str) -> Table {
    toml::from_str(&fs::read_to_string(configs().join(format!("{name}.toml"))).unwrap()).unwrap()
}

#[test]
fn decreasing_grid_gets_one_diagnostic() {
    let mut d = doc("learn");
    apply_override(&mut d, "contract.grid", "[2.0, 1.0, 3.0]").unwrap();
    let diags = validate(&d, &configs());
    assert_eq!(diags.len(), 1, "{diags:?}");
    assert_eq!(diags[0].path, "contract.grid");
}

#[test]
fn goal_metric_under_source_learning_is_rejected() {
    let mut d = doc("operate");
    apply_override(&mut d, "contract.metric", "\"goal\"").unwrap();
    let diags = validate(&d, &configs());
    assert_eq!(diags.len(), 1, "{diags:?}");
    assert!(
        diags[0].message.contains("metric compatibility"),
        "{}",
        diags[0].message
    );
}

#[test]
fn validate_cli_reports_problems() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "scenario = \"learn\"\nseed = 1\nbogus = 3\n").unwrap();
    let out = run(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let diags: Vec<serde_json::Value> = serde_json::from_slice(&out.stdout).unwrap();
    let paths: Vec<&str> = diags.iter().map(|d| d["path"].as_str().unwrap()).collect();
    for p in ["bogus", "codec", "contract", "corpus", "budget"] {
        assert!(paths.contains(&p), "{paths:?}");
    }
    let missing = run(&["validate", "--config", "/nonexistent/x.toml"]);
    assert_eq!(missing.status.code(), Some(2));
    let rec: serde_json::Value = serde_json::from_slice(&missing.stderr).unwrap();
    assert_eq!(rec["error"], "file-unreadable");
}

#[test]
fn scenario_failures_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("learn.toml");
    let out = run(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "budget.bits=1000",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let rec: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(rec["kind"], "budget-exhausted");
}

// Config fuzzing: random edits of the bundled configs must be accepted by
// `run` exactly when `validate` accepts them.

const PATHS: [&str; 40] = [
    "seed",
    "scenario",
    "contract.grid",
    "contract.variant",
    "contract.metric",
    "contract.codec_variant",
    "contract.generation_time",
    "codec.l_min",
    "codec.family",
    "corpus.count",
    "corpus.kind",
    "corpus.width",
    "corpus.bytes",
    "budget.kind",
    "budget.bits",
    "budget.points",
    "budget.seconds",
    "session.stateful_task",
    "session.mode",
    "mode.mode",
    "mode.q_min",
    "mode.alpha_star",
    "mode.grid",
    "mode.lambda",
    "mode.l_bits",
    "operate.stream_length",
    "pilots.policy",
    "pilots.period",
    "pilots.forgetting",
    "experiment.grid",
    "experiment.budgets",
    "experiment.realizations",
    "experiment.alpha",
    "experiment.q_min",
    "experiment.alpha_star",
    "experiment.test_size",
    "discover.probe.sizes",
    "discover.terms.variant",
    "discover.terms.metric",
    "registry",
];

const VALUES: [&str; 34] = [
    "DELETE",
    "-1",
    "0",
    "1",
    "2",
    "7",
    "40",
    "-0.5",
    "0.0",
    "0.05",
    "0.3",
    "0.9",
    "1.5",
    "4.0",
    "1e9",
    "true",
    "\"source\"",
    "\"node-augmented\"",
    "\"destination-goal\"",
    "\"destination-deviation\"",
    "\"goal\"",
    "{ deviation = \"mae\" }",
    "\"quality-constrained\"",
    "\"unconstrained\"",
    "\"periodic\"",
    "\"time\"",
    "\"fixed-count\"",
    "\"images\"",
    "\"learn\"",
    "\"experiment.adherence\"",
    "[0.5, 1.0, 2.0]",
    "[1.0, 0.5]",
    "[]",
    "[2, 3, 5]",
];

const RUNTIME_KINDS: [&str; 6] = [
    "budget-exhausted",
    "corpus-exhausted",
    "infeasible",
    "estimate",
    "no-candidates",
    "unreachable",
];

fn remove_path(doc: &mut Table, key: &str) {
    let parts: Vec<&str> = key.split('.').collect();
    let mut t = doc;
    for p in &parts[..parts.len() - 1] {
        match t.get_mut(*p).and_then(|v| v.as_table_mut()) {
            Some(next) => t = next,
            None => return,
        }
    }
    t.remove(parts[parts.len() - 1]);
}

fn small(mut d: Table) -> Table {
    if d.contains_key("experiment") {
        apply_override(&mut d, "experiment.realizations", "8").unwrap();
    }
    d
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, ..ProptestConfig::default() })]

    #[test]
    fn validate_agrees_with_run(
        base in 0usize..BUNDLED.len(),
        edits in prop::collection::vec((0usize..PATHS.len(), 0usize..VALUES.len()), 0..4),
    ) {
        let mut d = small(doc(BUNDLED[base]));
        for (p, v) in edits {
            if VALUES[v] == "DELETE" {
                remove_path(&mut d, PATHS[p]);
            } else if apply_override(&mut d, PATHS[p], VALUES[v]).is_err() {
                continue;
            }
        }
        let tmp = tempfile::tempdir().unwrap();
        d.insert("out".into(), toml::Value::String(tmp.path().display().to_string()));
        let diags = validate(&d, &configs());
        match run_document(&d, &configs()) {
            Ok(_) => prop_assert!(diags.is_empty(), "run accepted a config validate rejects: {diags:?}"),
            Err(CliError::ConfigInvalid(run_diags)) => {
                prop_assert!(!diags.is_empty(), "validate accepted a config run rejects: {run_diags:?}");
                prop_assert_eq!(diags, run_diags);
            }
            Err(CliError::ScenarioFailed(e)) => {
                prop_assert!(diags.is_empty());
                prop_assert!(RUNTIME_KINDS.contains(&e.kind()), "schema-like failure at run time: {e}");
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}
