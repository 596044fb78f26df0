use std::fs::File;
use std::io::{self, BufWriter, Read};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

use clsp::encoding::fit_normalizer;
use clsp::exact::{bnb_solve, BnbOptions, ExactSolver};
use clsp::generator::{generate_instance, GeneratorConfig};
use clsp::harness::dataset::{build_dataset, read_dataset, write_dataset, BuildOptions, Split};
use clsp::harness::eval::{evaluate_model, render_table, write_rows_csv, EvalOptions, LabelStub, StubKind};
use clsp::harness::{export_attention, AttentionKind};
use clsp::instance::{Instance, Status};
use clsp::nn::{make_example, train, ModelCheckpoint, ModelConfig, TrainConfig};
use clsp::pipeline::{predict_setup, RepairOptions, SetupPredictor};
use clsp::Error;

#[derive(Parser)]
#[command(name = "clsp", version, about = "Lot sizing: generate, solve exactly, learn setups, evaluate")]
struct Cli {
    /// Generator seed for `gen`; parameter and data-order seed for `train`.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one instance, or a labelled dataset with --count.
    Gen(GenArgs),
    /// Solve an instance exactly.
    Solve(SolveArgs),
    /// Train a model on the train split of a dataset.
    Train(TrainArgs),
    /// Predict a setup plan with a trained model.
    Predict(PredictArgs),
    /// Evaluate a model (or a label stub) on a dataset.
    Eval(EvalArgs),
    /// Export attention weights for one instance.
    Attn(AttnArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverName {
    BruteForce,
    Bnb,
    Dp,
}

impl SolverName {
    fn solver(self) -> ExactSolver {
        match self {
            SolverName::BruteForce => ExactSolver::BruteForce,
            SolverName::Bnb => ExactSolver::default(),
            SolverName::Dp => ExactSolver::InventoryDp,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[arg(long = "T", default_value_t = 10)]
    horizon: usize,
    #[arg(long, default_value_t = 3)]
    c: u32,
    #[arg(long, default_value_t = 1000)]
    f: u32,
    /// Generator config JSON (`{"T":..,"c":..,"f":..,"seed":..}`); overrides the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of labelled records; omit to emit a single instance.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, value_enum, default_value = "bnb")]
    solver: SolverName,
    /// Record label solve times (makes the file non-reproducible).
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance JSON file, `-` for stdin.
    instance: PathBuf,
    #[arg(long, group = "method")]
    brute_force: bool,
    #[arg(long, group = "method")]
    bnb: bool,
    #[arg(long, group = "method")]
    dp: bool,
    #[arg(long)]
    node_limit: Option<u64>,
    /// Seconds.
    #[arg(long)]
    time_limit: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// JSON with optional `model` and `train` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Write the per-step loss history here as JSON.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    instance: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum StubName {
    Oracle,
    FlipLast,
    Zeros,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitName {
    Train,
    Valid,
    Test,
    All,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, required_unless_present = "stub")]
    checkpoint: Option<PathBuf>,
    /// Answer from dataset labels instead of a model.
    #[arg(long, value_enum, conflicts_with = "checkpoint")]
    stub: Option<StubName>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitName,
    /// Per-instance CSV output.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Text report output.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    no_flip: bool,
    #[arg(long)]
    no_fallback: bool,
    #[arg(long, value_enum, default_value = "bnb")]
    fallback_solver: SolverName,
    /// Concurrent evaluation of the two repair candidates.
    #[arg(long)]
    concurrent: bool,
    /// Write zero times so the CSV is reproducible.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct AttnArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "encoder")]
    kind: AttentionKind,
}

/// Successful commands either finish normally or report an infeasible or
/// limit-bound result.
enum Outcome {
    Done(Value),
    Infeasible(Value),
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> clsp::Result<T> {
    let mut text = String::new();
    if path == Path::new("-") {
        io::stdin().read_to_string(&mut text)?;
    } else {
        File::open(path)?.read_to_string(&mut text)?;
    }
    Ok(serde_json::from_str(&text)?)
}

fn gen(args: GenArgs, seed: u64) -> clsp::Result<Outcome> {
    let config = match &args.config {
        Some(p) => read_json(p)?,
        None => GeneratorConfig::new(args.horizon, args.c, args.f, seed),
    };
    let Some(count) = args.count else {
        let inst = generate_instance(&config)?;
        if let Some(out) = &args.out {
            serde_json::to_writer(BufWriter::new(File::create(out)?), &inst)?;
        }
        return Ok(Outcome::Done(serde_json::to_value(inst)?));
    };
    let out = args
        .out
        .ok_or_else(|| Error::Config("--out is required with --count".into()))?;
    let options = BuildOptions {
        count,
        solver: args.solver.solver(),
        timing: args.timing,
    };
    let records = build_dataset(&config, &options)?;
    write_dataset(&out, &records)?;
    let split_count = |s: Split| records.iter().filter(|r| r.split == s).count();
    Ok(Outcome::Done(json!({
        "path": out,
        "records": records.len(),
        "generator": config,
        "solver": options.solver.name(),
        "splits": {
            "train": split_count(Split::Train),
            "valid": split_count(Split::Valid),
            "test": split_count(Split::Test),
        },
    })))
}

fn solve(args: SolveArgs) -> clsp::Result<Outcome> {
    let inst: Instance = read_json(&args.instance)?;
    let limited = args.node_limit.is_some() || args.time_limit.is_some();
    let (sol, nodes, limit_reached) = if args.brute_force || args.dp {
        if limited {
            return Err(Error::Config("limits only apply to --bnb".into()));
        }
        let solver = if args.dp {
            ExactSolver::InventoryDp
        } else {
            ExactSolver::BruteForce
        };
        (solver.solve(&inst)?, None, false)
    } else {
        let opts = BnbOptions {
            node_limit: args.node_limit.unwrap_or(u64::MAX),
            time_limit: args.time_limit.unwrap_or(f64::INFINITY),
            ..BnbOptions::default()
        };
        let r = bnb_solve(&inst, &opts)?;
        (r.solution, Some(r.nodes), r.limit_reached)
    };
    let status = sol.status;
    let mut value = serde_json::to_value(&sol)?;
    value["nodes"] = json!(nodes);
    value["limit_reached"] = json!(limit_reached);
    Ok(if status == Status::Optimal {
        Outcome::Done(value)
    } else {
        Outcome::Infeasible(value)
    })
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct TrainFile {
    model: Option<ModelConfig>,
    train: Option<TrainConfig>,
}

fn train_cmd(args: TrainArgs, seed: u64) -> clsp::Result<Outcome> {
    let file: TrainFile = match &args.config {
        Some(p) => read_json(p)?,
        None => TrainFile::default(),
    };
    let model = ModelConfig {
        seed,
        ..file.model.unwrap_or_default()
    };
    let config = TrainConfig {
        data_seed: seed,
        ..file.train.unwrap_or_default()
    };
    let records = read_dataset(&args.data)?;
    let resume = args.resume.as_ref().map(ModelCheckpoint::load).transpose()?;
    let train_records: Vec<_> = records.iter().filter(|r| r.split == Split::Train).collect();
    let tokenizer = match &resume {
        Some(c) => c.tokenizer.clone(),
        None => fit_normalizer(train_records.iter().map(|r| &r.instance))?,
    };
    let examples = |split: Split| -> Vec<_> {
        records
            .iter()
            .filter(|r| r.split == split)
            .map(|r| make_example(&r.instance, &r.y, &tokenizer))
            .collect()
    };
    let (train_set, valid_set) = (examples(Split::Train), examples(Split::Valid));
    let outcome = train(&model, &config, &tokenizer, &train_set, &valid_set, resume)?;
    outcome.checkpoint.save(&args.out)?;
    if let Some(h) = &args.history {
        serde_json::to_writer(BufWriter::new(File::create(h)?), &outcome.history)?;
    }
    let valid_accuracy = if valid_set.is_empty() {
        None
    } else {
        Some(clsp::nn::token_accuracy(&outcome.checkpoint.params, &model, &valid_set)?)
    };
    let last = outcome.history.last();
    let value = json!({
        "checkpoint": args.out,
        "steps": outcome.checkpoint.step(),
        "train_examples": train_set.len(),
        "valid_examples": valid_set.len(),
        "final_loss": last.map(|h| h.loss),
        "final_train_accuracy": last.map(|h| h.accuracy),
        "valid_accuracy": valid_accuracy,
        "diverged": outcome.diverged.as_ref().map(|e| e.to_string()),
    });
    Ok(match outcome.diverged {
        Some(_) => Outcome::Infeasible(value),
        None => Outcome::Done(value),
    })
}

fn predict(args: PredictArgs) -> clsp::Result<Outcome> {
    let ckpt = ModelCheckpoint::load(&args.checkpoint)?;
    let inst: Instance = read_json(&args.instance)?;
    let y = predict_setup(&inst, &ckpt)?;
    Ok(Outcome::Done(json!({ "T": inst.horizon(), "y": y })))
}

fn eval(args: EvalArgs) -> clsp::Result<Outcome> {
    let mut records = read_dataset(&args.data)?;
    let wanted = match args.split {
        SplitName::Train => Some(Split::Train),
        SplitName::Valid => Some(Split::Valid),
        SplitName::Test => Some(Split::Test),
        SplitName::All => None,
    };
    if let Some(s) = wanted {
        records.retain(|r| r.split == s);
    }
    let predictor: Box<dyn SetupPredictor> = match (args.stub, &args.checkpoint) {
        (Some(stub), _) => {
            let kind = match stub {
                StubName::Oracle => StubKind::Oracle,
                StubName::FlipLast => StubKind::FlipLast,
                StubName::Zeros => StubKind::AllZeros,
            };
            Box::new(LabelStub::new(kind, &records))
        }
        (None, Some(path)) => Box::new(ModelCheckpoint::load(path)?),
        (None, None) => unreachable!("clap requires one of --checkpoint/--stub"),
    };
    let options = EvalOptions {
        repair: RepairOptions {
            flip_last: !args.no_flip,
            fallback_exact: !args.no_fallback,
            evaluate_candidates_concurrently: args.concurrent,
            fallback_solver: args.fallback_solver.solver(),
        },
        timing: !args.no_timing,
    };
    let (metrics, rows) = evaluate_model(predictor.as_ref(), &records, &options);
    if let Some(path) = &args.csv {
        write_rows_csv(BufWriter::new(File::create(path)?), &rows)?;
    }
    let table = render_table(&metrics);
    match &args.report {
        Some(path) => std::fs::write(path, &table)?,
        None => eprint!("{table}"),
    }
    Ok(Outcome::Done(serde_json::to_value(&metrics)?))
}

fn attn(args: AttnArgs) -> clsp::Result<Outcome> {
    let ckpt = ModelCheckpoint::load(&args.checkpoint)?;
    let inst: Instance = read_json(&args.instance)?;
    let rows = export_attention(&ckpt, &inst, args.kind, BufWriter::new(File::create(&args.out)?))?;
    Ok(Outcome::Done(json!({ "path": args.out, "rows": rows, "kind": args.kind })))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let seed = cli.seed;
    let result = match cli.command {
        Command::Gen(a) => gen(a, seed),
        Command::Solve(a) => solve(a),
        Command::Train(a) => train_cmd(a, seed),
        Command::Predict(a) => predict(a),
        Command::Eval(a) => eval(a),
        Command::Attn(a) => attn(a),
    };
    match result {
        Ok(Outcome::Done(v)) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Ok(Outcome::Infeasible(v)) => {
            println!("{v}");
            ExitCode::from(2)
        }
        Err(Error::LimitExhausted) => {
            eprintln!("error: {}", Error::LimitExhausted);
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
