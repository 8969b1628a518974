use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rment::domain::read_demos_jsonl;
use rment::envs::GridWorld;
use rment::StateId;
use rment_cli::ModelFile;
use tempfile::TempDir;

fn rment(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rment"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn gen(dir: &Path, env: &str, kind: &str, n: &str, seed: &str, file: &str) -> PathBuf {
    let out = rment(dir, &["gen-demos", "--env", env, "--kind", kind, "--n", n, "--seed", seed, "--out", file]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    dir.join(file)
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn weights_table(out: &Output) -> Vec<(String, f64)> {
    stdout(out)
        .lines()
        .skip(1)
        .map(|l| {
            let cols: Vec<&str> = l.split('\t').collect();
            (cols[0].to_string(), cols[1].parse().unwrap())
        })
        .collect()
}

#[test]
fn correct_demos_end_next_to_the_goal() {
    let dir = TempDir::new().unwrap();
    let path = gen(dir.path(), "gridworld", "correct", "2", "0", "c.jsonl");
    let demos = read_demos_jsonl(std::fs::read(path).unwrap().as_slice()).unwrap();
    assert_eq!(demos.len(), 2);
    let g = GridWorld::default();
    for d in &demos {
        let last = d.steps.last().unwrap();
        assert_eq!(g.next_state(last.s, last.a), g.goal());
    }
}

#[test]
fn adversarial_demo_is_never_optimal() {
    let dir = TempDir::new().unwrap();
    let path = gen(dir.path(), "gridworld", "adversarial", "1", "3", "a.jsonl");
    let demos = read_demos_jsonl(std::fs::read(path).unwrap().as_slice()).unwrap();
    assert_eq!(demos.len(), 1);
    let g = GridWorld::default();
    for step in &demos[0].steps {
        assert!(!g.optimal_actions(StateId(step.s.0)).contains(&step.a));
    }
}

#[test]
fn zero_demos_writes_an_empty_file() {
    let dir = TempDir::new().unwrap();
    let path = gen(dir.path(), "gridworld", "random", "0", "0", "empty.jsonl");
    assert_eq!(std::fs::read(path).unwrap().len(), 0);
}

#[test]
fn generation_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let a = gen(dir.path(), "mountaincar", "adversarial", "2", "4", "a.jsonl");
    let b = gen(dir.path(), "mountaincar", "adversarial", "2", "4", "b.jsonl");
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn invalid_flags_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = rment(dir.path(), &["gen-demos", "--env", "cartpole", "--kind", "correct", "--n", "1", "--out", "x"]);
    assert_eq!(code(&out), 2);
    let out = rment(dir.path(), &["gen-demos", "--env", "gridworld", "--kind", "sneaky", "--n", "1", "--out", "x"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn unwritable_output_exits_1() {
    let dir = TempDir::new().unwrap();
    let out = rment(
        dir.path(),
        &["gen-demos", "--env", "gridworld", "--kind", "correct", "--n", "1", "--out", "missing/dir/x.jsonl"],
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn fit_reports_table_weights() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "gridworld", "correct", "2", "0", "c.jsonl");
    gen(dir.path(), "gridworld", "adversarial", "1", "0", "a.jsonl");
    let out = rment(dir.path(), &["fit", "--demos", "c.jsonl", "a.jsonl", "--m", "1", "--out", "m.json"]);
    assert_eq!(code(&out), 0);
    let table = weights_table(&out);
    let weights: Vec<f64> = table.iter().map(|r| r.1).collect();
    assert_eq!(weights, [0.5, 0.5, 0.0]);
    assert_eq!(table[2].0, "gridworld-adversarial-0");
    let model = read_json(&dir.path().join("m.json"));
    assert_eq!(model["version"], 1);
    assert_eq!(model["M"], 1.0);
    assert_eq!(model["solver"]["converged"], true);
}

#[test]
fn single_demo_gets_full_weight() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "gridworld", "correct", "1", "5", "c.jsonl");
    let out = rment(dir.path(), &["fit", "--demos", "c.jsonl", "--out", "m.json"]);
    assert_eq!(code(&out), 0);
    assert_eq!(weights_table(&out)[0].1, 1.0);
}

#[test]
fn budget_above_demo_count_exits_2_without_model() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "gridworld", "correct", "3", "0", "c.jsonl");
    let out = rment(dir.path(), &["fit", "--demos", "c.jsonl", "--m", "5", "--out", "m.json"]);
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("m.json").exists());
}

#[test]
fn parse_errors_exit_1_with_line_number() {
    let dir = TempDir::new().unwrap();
    let path = gen(dir.path(), "gridworld", "correct", "2", "0", "c.jsonl");
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("{not json}\n");
    std::fs::write(&path, text).unwrap();
    let out = rment(dir.path(), &["fit", "--demos", "c.jsonl", "--out", "m.json"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn non_convergence_exits_3_and_still_writes_the_model() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "gridworld", "correct", "2", "0", "c.jsonl");
    let out = rment(dir.path(), &["fit", "--demos", "c.jsonl", "--max-iter", "1", "--out", "m.json"]);
    assert_eq!(code(&out), 3);
    let model = read_json(&dir.path().join("m.json"));
    assert_eq!(model["solver"]["inner_converged"], false);
}

#[test]
fn model_file_round_trips() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "mountaincar", "correct", "2", "0", "c.jsonl");
    gen(dir.path(), "mountaincar", "adversarial", "2", "0", "a.jsonl");
    let out = rment(dir.path(), &["fit", "--demos", "c.jsonl", "a.jsonl", "--m", "2", "--out", "m.json"]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(dir.path().join("m.json")).unwrap();
    let model: ModelFile = serde_json::from_str(&text).unwrap();
    let again = serde_json::to_string_pretty(&model).unwrap();
    assert_eq!(again.trim_end(), text.trim_end());
    assert_eq!(serde_json::from_str::<ModelFile>(&again).unwrap(), model);
    assert_eq!(model.weights.len(), 4);
    assert_eq!(model.lambda.len(), 1200);
}

#[test]
fn eval_clean_grid_model_is_exact() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "gridworld", "correct", "2", "0", "c.jsonl");
    assert_eq!(code(&rment(dir.path(), &["fit", "--demos", "c.jsonl", "--out", "m.json"])), 0);
    let out = rment(dir.path(), &["eval", "--model", "m.json", "--metric", "accuracy"]);
    assert_eq!(code(&out), 0);
    let report: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    assert_eq!(stdout(&out).lines().count(), 1);
    assert_eq!(report["value"], 1.0);
    assert_eq!(report["metric"], "accuracy");
}

#[test]
fn eval_zero_lambda_model_matches_uniform_accuracy() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "gridworld", "correct", "1", "0", "c.jsonl");
    assert_eq!(code(&rment(dir.path(), &["fit", "--demos", "c.jsonl", "--out", "m.json"])), 0);
    let path = dir.path().join("m.json");
    let mut model = read_json(&path);
    let n = model["lambda"].as_array().unwrap().len();
    model["lambda"] = serde_json::json!(vec![0.0; n]);
    std::fs::write(&path, serde_json::to_string(&model).unwrap()).unwrap();
    let out = rment(dir.path(), &["eval", "--model", "m.json"]);
    let report: serde_json::Value = serde_json::from_str(stdout(&out).trim()).unwrap();
    // Lowest-index tie-break picks UP, optimal everywhere except the top row.
    assert_eq!(report["value"], 20.0 / 24.0);
}

#[test]
fn eval_accuracy_on_mountain_car_exits_2() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "mountaincar", "correct", "1", "0", "c.jsonl");
    assert_eq!(code(&rment(dir.path(), &["fit", "--demos", "c.jsonl", "--out", "m.json"])), 0);
    let out = rment(dir.path(), &["eval", "--model", "m.json", "--metric", "accuracy"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn eval_return_is_stable_across_runs() {
    let dir = TempDir::new().unwrap();
    gen(dir.path(), "mountaincar", "correct", "2", "0", "c.jsonl");
    assert_eq!(code(&rment(dir.path(), &["fit", "--demos", "c.jsonl", "--m", "2", "--out", "m.json"])), 0);
    let args = ["eval", "--model", "m.json", "--metric", "return", "--episodes", "100", "--seed", "7"];
    let a = rment(dir.path(), &args);
    let b = rment(dir.path(), &args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let report: serde_json::Value = serde_json::from_str(stdout(&a).trim()).unwrap();
    assert!(report["std"].is_number());
    assert_eq!(report["n_episodes"], 100);
}

#[test]
fn sweep_writes_eight_rows_with_expected_trends() {
    let dir = TempDir::new().unwrap();
    let args = [
        "sweep", "--env", "gridworld", "--correct", "2", "--adversarial", "3", "--algs", "rment,bc", "--m", "1",
        "--out", "s.csv",
    ];
    let out = rment(dir.path(), &args);
    assert_eq!(code(&out), 0);
    let first = std::fs::read(dir.path().join("s.csv")).unwrap();
    let mut reader = csv::Reader::from_reader(first.as_slice());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["alg", "task", "n_correct", "n_adversarial", "M", "metric", "value", "seed"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 8);
    let series = |alg: &str| -> Vec<f64> {
        rows.iter().filter(|r| &r[0] == alg).map(|r| r[6].parse().unwrap()).collect()
    };
    assert!(series("rment").iter().all(|&v| v == 1.0));
    let bc = series("bc");
    assert!(bc.windows(2).all(|p| p[1] <= p[0]));
    let weights = std::fs::read_to_string(dir.path().join("s.csv.weights.jsonl")).unwrap();
    assert_eq!(weights.lines().count(), 4);

    assert_eq!(code(&rment(dir.path(), &args)), 0);
    assert_eq!(std::fs::read(dir.path().join("s.csv")).unwrap(), first);
}

#[test]
fn sweep_rejects_infeasible_budget() {
    let dir = TempDir::new().unwrap();
    let out = rment(
        dir.path(),
        &["sweep", "--env", "gridworld", "--correct", "1", "--adversarial", "1", "--m", "2", "--out", "s.csv"],
    );
    assert_eq!(code(&out), 2);
}
