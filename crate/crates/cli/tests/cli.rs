use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use geoadapt_core::config::RunConfig;
use geoadapt_core::policy::ToyPolicy;
use geoadapt_core::world::SyntheticGeoWorld;
use serde_json::Value;

fn fixture(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
        .to_string_lossy()
        .into_owned()
}

fn geoadapt() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_geoadapt"));
    cmd.env_remove("GEOADAPT_CONFIG");
    cmd
}

fn run(args: &[&str]) -> Output {
    geoadapt().args(args).output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn record(id: &str, l_visual: f64, d_reason: f64, d_rag: f64) -> String {
    format!(
        r#"{{"image_id":"{id}","l_visual":{l_visual},"ground_truth":{{"country":"France","city":"Paris","coord":{{"lat":48.85,"lon":2.35}}}},"d_rag":{d_rag},"d_reason":{d_reason}}}"#
    )
}

fn lines(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn score_labels_the_four_record_example() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let rows = [
        record("a", 0.8, 200.0, 100.0),
        record("b", 0.8, 150.0, 100.0),
        record("c", 0.8, 60.0, 0.0),
        record("d", 0.8, 0.0, 500.0),
    ];
    std::fs::write(&input, rows.join("\n") + "\n").unwrap();
    let output = dir.path().join("out.jsonl");
    let out = run(&["score", "-i", path_str(&input), "-o", path_str(&output)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let scored = lines(&output);
    let strata: Vec<&str> = scored.iter().map(|r| r["stratum"].as_str().unwrap()).collect();
    assert_eq!(strata, ["RagSuperior", "Standard", "RagSuperior", "Standard"]);
    for r in &scored {
        for key in ["l_base", "l_gap", "l_reason", "l_opt"] {
            assert!(r[key].is_f64(), "missing {key}");
        }
    }
    assert_eq!(scored[3]["l_gap"], 1.0);
}

#[test]
fn empty_file_gives_empty_output_and_zero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.jsonl");
    std::fs::write(&input, "").unwrap();
    let output = dir.path().join("out.jsonl");
    let out = run(&["score", "-i", path_str(&input), "-o", path_str(&output)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&output).unwrap(), "");
}

#[test]
fn out_of_range_l_visual_is_rejected_and_logged() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    std::fs::write(
        &input,
        format!(
            "{}\n{}\n",
            record("ok", 0.5, 10.0, 10.0),
            record("bad", 1.2, 10.0, 10.0)
        ),
    )
    .unwrap();
    let output = dir.path().join("out.jsonl");
    let log = dir.path().join("rejects.jsonl");
    let out = run(&[
        "score",
        "-i",
        path_str(&input),
        "-o",
        path_str(&output),
        "--reject-log",
        path_str(&log),
    ]);

    assert_eq!(out.status.code(), Some(2));
    let kept = lines(&output);
    assert_eq!(kept.len(), 1);
    assert_eq!(kept[0]["image_id"], "ok");
    let rejects = lines(&log);
    assert_eq!(rejects.len(), 1);
    assert_eq!(rejects[0]["image_id"], "bad");
    assert!(rejects[0]["reason"].as_str().unwrap().contains("l_visual"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad"));
}

#[test]
fn malformed_line_aborts_unless_lenient() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    std::fs::write(
        &input,
        format!(
            "{}\nnot json\n{}\n",
            record("a", 0.5, 1.0, 1.0),
            record("b", 0.5, 1.0, 1.0)
        ),
    )
    .unwrap();
    let output = dir.path().join("out.jsonl");

    let strict = run(&["score", "-i", path_str(&input), "-o", path_str(&output)]);
    assert_eq!(strict.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&strict.stderr).contains("line 2"));
    assert!(!output.exists());

    let lenient = run(&["--lenient", "score", "-i", path_str(&input), "-o", path_str(&output)]);
    assert_eq!(lenient.status.code(), Some(2));
    assert_eq!(lines(&output).len(), 2);
    assert!(String::from_utf8_lossy(&lenient.stderr).contains(r#""line":2"#));
}

#[test]
fn unknown_format_is_a_usage_error() {
    let out = run(&["eval", "-i", &fixture("eval/four.jsonl"), "--format", "xml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid value"));
}

#[test]
fn eval_csv_matches_golden() {
    let out = run(&["eval", "-i", &fixture("eval/four.jsonl"), "--format", "csv"]);
    assert!(out.status.success());
    assert_eq!(out.stdout, std::fs::read(fixture("eval/four.golden.csv")).unwrap());
}

#[test]
fn report_rerenders_saved_json() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("report.json");
    assert!(run(&["eval", "-i", &fixture("eval/four.jsonl"), "-o", path_str(&json)])
        .status
        .success());
    let out = run(&["report", "-i", path_str(&json), "--format", "csv"]);
    assert!(out.status.success());
    assert_eq!(out.stdout, std::fs::read(fixture("eval/four.golden.csv")).unwrap());

    let table = run(&["report", "-i", path_str(&json)]);
    let text = String::from_utf8(table.stdout).unwrap();
    for col in ["Street", "City", "Region", "Country", "Continent"] {
        assert!(text.contains(col), "{col} missing");
    }
}

#[test]
fn eval_of_empty_predictions_fails() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.jsonl");
    std::fs::write(&input, "\n").unwrap();
    assert_eq!(run(&["eval", "-i", path_str(&input)]).status.code(), Some(1));
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("geoadapt.toml");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn config_precedence_has_three_layers() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "alpha = 0.5\nsigma = 50.0\nseed = 9\n");

    let defaults = geoadapt_cli::load_config(None, &[], None).unwrap();
    assert_eq!((defaults.alpha, defaults.sigma, defaults.seed), (0.6, 100.0, 42));

    let file = geoadapt_cli::load_config(Some(&config), &[], None).unwrap();
    assert_eq!((file.alpha, file.sigma, file.seed), (0.5, 50.0, 9));
    assert_eq!(file.gamma1, 0.01);

    let flags = geoadapt_cli::load_config(Some(&config), &["alpha=0.4".into()], Some(3)).unwrap();
    assert_eq!((flags.alpha, flags.sigma, flags.seed), (0.4, 50.0, 3));
}

#[test]
fn config_layers_reach_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    // d_reason = d_rag = 100 gives L_reason = e^-1, so L_opt = (1 - alpha) + alpha e^-1
    std::fs::write(&input, record("x", 1.0, 100.0, 100.0) + "\n").unwrap();
    let config = write_config(dir.path(), "alpha = 0.5\n");
    let l_opt = |extra: &[&str], env: Option<&Path>| {
        let output = dir.path().join("out.jsonl");
        let mut cmd = geoadapt();
        if let Some(p) = env {
            cmd.env("GEOADAPT_CONFIG", p);
        }
        let out = cmd
            .args(extra)
            .args(["score", "-i", path_str(&input), "-o", path_str(&output)])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        lines(&output)[0]["l_opt"].as_f64().unwrap()
    };
    let e = (-1.0f64).exp();
    let expect = |alpha: f64| (1.0 - alpha) + alpha * e;

    assert!((l_opt(&[], None) - expect(0.6)).abs() < 1e-12);
    assert!((l_opt(&["--config", path_str(&config)], None) - expect(0.5)).abs() < 1e-12);
    assert!((l_opt(&[], Some(&config)) - expect(0.5)).abs() < 1e-12);
    assert!((l_opt(&["--set", "alpha=0.2"], Some(&config)) - expect(0.2)).abs() < 1e-12);
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "alpah = 0.5\n");
    let out = run(&["--config", path_str(&config), "eval", "-i", &fixture("eval/four.jsonl")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpah"));
}

#[test]
fn zero_epochs_leave_the_initial_policy() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, policy) = (dir.path().join("trace.jsonl"), dir.path().join("policy.txt"));
    let out = run(&[
        "--set",
        "stage1_epochs=0",
        "--set",
        "stage2_epochs=0",
        "train-toy",
        "--trace",
        path_str(&trace),
        "--policy",
        path_str(&policy),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&trace).unwrap(), "");

    let config = RunConfig::default();
    let world = SyntheticGeoWorld::generate(config.world()).unwrap();
    let init = ToyPolicy::zeros(world.num_cells(), world.num_features(), config.temperature).unwrap();
    assert_eq!(std::fs::read_to_string(&policy).unwrap(), init.to_text());
}

#[test]
fn train_toy_writes_five_epochs_and_a_loadable_policy() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, policy) = (dir.path().join("t.jsonl"), dir.path().join("p.txt"));
    let out = run(&[
        "--seed",
        "7",
        "train-toy",
        "--trace",
        path_str(&trace),
        "--policy",
        path_str(&policy),
    ]);
    assert!(out.status.success());
    let epochs = lines(&trace);
    let stages: Vec<u64> = epochs.iter().map(|e| e["stage"].as_u64().unwrap()).collect();
    assert_eq!(stages, [1, 1, 1, 2, 2]);
    let p = ToyPolicy::from_text(&std::fs::read_to_string(&policy).unwrap()).unwrap();
    assert!(p.weights().iter().any(|w| *w != 0.0));
}

#[test]
fn seeds_change_training() {
    let dir = tempfile::tempdir().unwrap();
    let dump = |seed: &str| {
        let (trace, policy) = (dir.path().join(format!("t{seed}")), dir.path().join(format!("p{seed}")));
        assert!(run(&[
            "--seed",
            seed,
            "train-toy",
            "--trace",
            path_str(&trace),
            "--policy",
            path_str(&policy)
        ])
        .status
        .success());
        std::fs::read(&trace).unwrap()
    };
    assert_ne!(dump("1"), dump("2"));
}

#[test]
fn stratify_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "--plot",
        "stratify",
        "-i",
        &fixture("curation/dataset.jsonl"),
        "--out-dir",
        path_str(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["standard"], 5);
    assert_eq!(summary["rag_superior"], 3);
    assert_eq!(summary["rejected"], 4);
    assert_eq!(lines(&dir.path().join("rag_superior.jsonl")).len(), 3);
    assert!(dir.path().join("l_opt_histogram.svg").exists());
    // plain stratification does not augment
    assert!(lines(&dir.path().join("rag_superior.jsonl"))
        .iter()
        .all(|r| r.get("augmented_steps").is_none()));
}

#[test]
fn reward_flags_empty_entity_sets() {
    let out = run(&[
        "reward",
        "-i",
        &fixture("reward/requests.jsonl"),
        "--grounding",
        &fixture("reward/grounding.tsv"),
        "--aliases",
        &fixture("reward/aliases.tsv"),
    ]);
    assert!(out.status.success());
    let rows: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 3);
    // "FR" resolves to France through the alias table
    assert!(rows[0]["r_geo"].as_f64().unwrap() > 0.99);
    assert_eq!(rows[2]["no_entities"], true);
    assert_eq!(rows[2]["r_vis"], 0.0);
    assert_eq!(rows[2]["r_geo"], 0.0);
}
