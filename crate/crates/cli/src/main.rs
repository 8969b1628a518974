use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rment::domain::{read_demos_jsonl, write_demos_jsonl};
use rment::envs::{gen_demo, DemoKind, Env};
use rment::eval::{default_features, default_metric, evaluate_policy, robustness_sweep, Algorithm, SweepConfig, SweepRow};
use rment::{build_feature_map, fit_robust, DemoSet, Demonstration, Error, FeatureSpec, RobustOptions};

use rment_cli::{ModelFile, MODEL_VERSION};

#[derive(Parser)]
#[command(name = "rment", version, about = "Robust maximum-entropy behavior cloning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scripted demonstrations as JSONL.
    GenDemos {
        #[arg(long)]
        env: Env,
        #[arg(long)]
        kind: DemoKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit policy and per-demo trust weights.
    Fit {
        /// Task of the demos; inferred from demo ids when omitted.
        #[arg(long)]
        env: Option<Env>,
        #[arg(long, num_args = 1.., required = true)]
        demos: Vec<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        m: f64,
        /// `tabular` or `tiled:AxB`.
        #[arg(long, value_parser = parse_features)]
        features: Option<FeatureSpec>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_outer: Option<usize>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a fitted model; prints one JSON line.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// `accuracy` or `return`; defaults to the task's natural metric.
        #[arg(long)]
        metric: Option<String>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sweep adversarial counts 0..=N and write a CSV.
    Sweep {
        #[arg(long)]
        env: Env,
        #[arg(long)]
        correct: usize,
        #[arg(long)]
        adversarial: usize,
        #[arg(long, value_delimiter = ',', default_value = "rment,bc")]
        algs: Vec<Algorithm>,
        #[arg(long, default_value_t = 1.0)]
        m: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure carrying its process exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn io(msg: impl Into<String>) -> Self {
        Failure { code: 1, msg: msg.into() }
    }

    fn usage(msg: impl Into<String>) -> Self {
        Failure { code: 2, msg: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Parse { .. } => Failure::io(e.to_string()),
            _ => Failure::usage(e.to_string()),
        }
    }
}

fn parse_features(s: &str) -> Result<FeatureSpec, String> {
    match s.split_once(':') {
        None if s == "tabular" => Ok(FeatureSpec::TabularIndicator),
        Some(("tiled", dims)) => dims
            .split('x')
            .map(|d| d.parse::<usize>().map_err(|e| format!("bad tile count {d:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(|tiles| FeatureSpec::TiledIndicator { tiles }),
        _ => Err(format!("unknown feature spec {s:?}; expected tabular or tiled:AxB")),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::io(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn gen_demos(env: &Env, kind: DemoKind, n: usize, seed: u64, out: &Path) -> Result<ExitCode, Failure> {
    let demos = (0..n as u64)
        .map(|i| gen_demo(env, kind, seed + i))
        .collect::<rment::Result<Vec<_>>>()?;
    let mut w = create(out)?;
    write_demos_jsonl(&mut w, &demos)?;
    w.flush().map_err(|e| Failure::io(e.to_string()))?;
    for d in &demos {
        match (d.steps.first(), d.steps.last()) {
            (Some(first), Some(last)) => println!(
                "{}\tsteps={}\tfirst_state={}\tlast_state={}",
                d.demo_id,
                d.len(),
                first.s.0,
                last.s.0
            ),
            _ => println!("{}\tsteps=0", d.demo_id),
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn load_demos(paths: &[PathBuf]) -> Result<Vec<Demonstration>, Failure> {
    let mut all = Vec::new();
    for path in paths {
        let file = File::open(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        let demos = read_demos_jsonl(BufReader::new(file))
            .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        all.extend(demos);
    }
    Ok(all)
}

fn infer_env(demos: &[Demonstration]) -> Result<Env, Failure> {
    let prefix = |d: &Demonstration| d.demo_id.split('-').next().unwrap_or("").to_string();
    let first = demos.first().map(prefix).unwrap_or_default();
    if demos.iter().any(|d| prefix(d) != first) {
        return Err(Failure::usage("demos come from different tasks; pass --env"));
    }
    first
        .parse()
        .map_err(|_| Failure::usage(format!("cannot infer the task from demo id prefix {first:?}; pass --env")))
}

struct FitArgs {
    env: Option<Env>,
    demos: Vec<PathBuf>,
    m: f64,
    features: Option<FeatureSpec>,
    tol: Option<f64>,
    max_outer: Option<usize>,
    max_iter: Option<usize>,
    out: PathBuf,
}

fn fit(args: FitArgs) -> Result<ExitCode, Failure> {
    let demos = load_demos(&args.demos)?;
    if demos.is_empty() {
        return Err(Failure::usage("no demonstrations in the given files"));
    }
    let env = match args.env {
        Some(env) => env,
        None => infer_env(&demos)?,
    };
    let task = env.task_spec();
    let features = args.features.unwrap_or_else(|| default_features(&env));
    let fm = build_feature_map(&features, &task)?;
    let set = DemoSet::new(demos, task.clone())?;

    let mut opts = RobustOptions::default();
    if let Some(tol) = args.tol {
        opts.inner.tol = tol;
    }
    if let Some(n) = args.max_outer {
        opts.max_outer = n;
    }
    if let Some(n) = args.max_iter {
        opts.inner.max_iter = n;
    }
    let model = fit_robust(&set, &fm, args.m, &opts)?;
    let file = ModelFile::from_fit(&task, &fm, &model, &opts);
    write_json(&args.out, &file)?;

    println!("demo_id\tweight\tc_d");
    for ((id, w), c) in file.demo_ids.iter().zip(&file.weights).zip(&file.c) {
        println!("{id}\t{w:.6}\t{c:.6}");
    }
    if file.fully_converged() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "warning: not converged (outer converged: {}, inner converged: {}, oscillated: {}); model written",
            file.solver.converged, file.solver.inner_converged, file.solver.oscillated
        );
        Ok(ExitCode::from(3))
    }
}

fn eval(model: &Path, metric: Option<String>, episodes: usize, seed: u64) -> Result<ExitCode, Failure> {
    let text = std::fs::read_to_string(model).map_err(|e| Failure::io(format!("{}: {e}", model.display())))?;
    let file: ModelFile =
        serde_json::from_str(&text).map_err(|e| Failure::io(format!("{}: {e}", model.display())))?;
    if file.version != MODEL_VERSION {
        return Err(Failure::usage(format!("unsupported model version {}", file.version)));
    }
    let env = Env::from_task(&file.task)?;
    let metric = metric.unwrap_or_else(|| default_metric(&env).to_string());
    let policy = file.policy()?;
    let mut report = evaluate_policy(&policy, &env, &metric, episodes, seed)?;
    report.weights = Some(file.weights.clone());
    println!("{}", serde_json::to_string(&report).map_err(|e| Failure::io(e.to_string()))?);
    Ok(ExitCode::SUCCESS)
}

#[derive(serde::Serialize)]
struct WeightRecord<'a> {
    alg: Algorithm,
    n_adversarial: usize,
    seed: u64,
    demo_ids: &'a [String],
    weights: &'a [f64],
}

fn sweep(cfg: &SweepConfig, out: &Path) -> Result<ExitCode, Failure> {
    if !(cfg.m > 0.0 && cfg.m <= cfg.n_correct as f64) {
        return Err(Failure::usage(format!(
            "--m {} must lie in (0, {}] so every row is feasible",
            cfg.m, cfg.n_correct
        )));
    }
    let rows = robustness_sweep(cfg)?;
    let mut csv = csv::Writer::from_writer(create(out)?);
    let io_err = |e: csv::Error| Failure::io(format!("{}: {e}", out.display()));
    csv.write_record(SweepRow::CSV_HEADER).map_err(io_err)?;
    for row in &rows {
        csv.write_record(row.csv_fields()).map_err(io_err)?;
    }
    csv.flush().map_err(|e| Failure::io(e.to_string()))?;

    let weights_path = PathBuf::from(format!("{}.weights.jsonl", out.display()));
    let mut w = create(&weights_path)?;
    for row in &rows {
        if let Some(weights) = &row.weights {
            let rec = WeightRecord {
                alg: row.alg,
                n_adversarial: row.n_adversarial,
                seed: row.seed,
                demo_ids: &row.demo_ids,
                weights,
            };
            let line = serde_json::to_string(&rec).map_err(|e| Failure::io(e.to_string()))?;
            writeln!(w, "{line}").map_err(|e| Failure::io(e.to_string()))?;
        }
    }
    w.flush().map_err(|e| Failure::io(e.to_string()))?;

    for row in &rows {
        match &row.value {
            Ok(v) => println!("{}\tadversarial={}\t{}={v:.4}", row.alg, row.n_adversarial, row.metric),
            Err(e) => println!("{}\tadversarial={}\terror: {e}", row.alg, row.n_adversarial),
        }
    }
    if !rows.is_empty() && rows.iter().all(|r| r.value.is_err()) {
        return Err(Failure::io("every sweep row failed"));
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::GenDemos { env, kind, n, seed, out } => gen_demos(&env, kind, n, seed, &out),
        Command::Fit { env, demos, m, features, tol, max_outer, max_iter, out } => fit(FitArgs {
            env,
            demos,
            m,
            features,
            tol,
            max_outer,
            max_iter,
            out,
        }),
        Command::Eval { model, metric, episodes, seed } => eval(&model, metric, episodes, seed),
        Command::Sweep { env, correct, adversarial, algs, m, seed, episodes, out } => {
            let mut cfg = SweepConfig::new(env, correct, adversarial, algs, m, seed);
            cfg.episodes = episodes;
            sweep(&cfg, &out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            io::stderr().flush().ok();
            ExitCode::from(f.code)
        }
    }
}
