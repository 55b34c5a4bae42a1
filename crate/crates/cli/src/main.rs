use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

use commands::Failure;

/// Joint classification of character relationships in narratives.
#[derive(Parser, Debug)]
#[command(name = "narrel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model on a gold-labeled corpus.
    Train(TrainArgs),
    /// Label every edge of every document in a corpus.
    Predict(PredictArgs),
    /// Score a model against the gold labels of a corpus.
    Eval(EvalArgs),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
    /// Compare the gating gradient with finite differences.
    Gradcheck(GradcheckArgs),
    /// Print the triad census of each document's gold labels.
    Census(CensusArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Lr,
    Spr,
    Mixture,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SamplingArg {
    WithReplacement,
    ShuffledEpochs,
}

#[derive(Args, Debug, Clone)]
struct DecodeArgs {
    /// Largest triangle-connected component solved exactly.
    #[arg(long, default_value_t = 20)]
    component_cap: usize,
    /// Text-score magnitude above which greedy restarts keep the text sign.
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    /// Greedy starting points for oversized components.
    #[arg(long, default_value_t = 5)]
    restarts: usize,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, value_enum)]
    model: ModelKind,
    /// Training corpus (JSONL).
    #[arg(long)]
    train: PathBuf,
    /// Where to write the model file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    /// Keep the final perceptron weights instead of their average.
    #[arg(long)]
    no_average: bool,
    #[arg(long, value_enum, default_value = "with-replacement")]
    sampling: SamplingArg,
    #[command(flatten)]
    decode: DecodeArgs,
    /// Number of clusters.
    #[arg(short = 'k', long = "clusters", default_value_t = 2)]
    clusters: usize,
    #[arg(long, default_value_t = 0.8)]
    alpha: f64,
    /// Gating step size.
    #[arg(long, default_value_t = 0.01)]
    mu: f64,
    #[arg(long, default_value_t = 10)]
    outer_rounds: usize,
    #[arg(long, default_value_t = 50)]
    lambda_iters: usize,
    #[arg(long, default_value_t = 0.01)]
    lambda_init: f64,
    /// Write the mixture training log (JSONL) here.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    l2: f64,
    #[arg(long, default_value_t = 1000)]
    lr_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    lr_tol: f64,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Output path (JSONL); standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also propose labels for unannotated pairs that close a triangle.
    #[arg(long)]
    infer_ungrounded: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    decode: DecodeArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Also write the metrics record (JSON) here.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    decode: DecodeArgs,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output path (JSONL); standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    docs: usize,
    #[arg(long, default_value_t = 4)]
    min_chars: usize,
    #[arg(long, default_value_t = 7)]
    max_chars: usize,
    #[arg(long, default_value_t = 0.6)]
    density: f64,
    /// Planted structural weights: clique,love_triangle,common_enemy,mexican_standoff.
    #[arg(long, default_value = "0,0,0,0", allow_hyphen_values = true)]
    weights: String,
    /// Text feature dimension.
    #[arg(long, default_value_t = 5)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    signal: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Cluster profile `w1,w2,w3,w4:m1,m2,...` (weights, then descriptor
    /// mean). Repeat for several clusters.
    #[arg(long, allow_hyphen_values = true)]
    profile: Vec<String>,
    #[arg(long, default_value_t = 200)]
    sweeps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
}

#[derive(Args, Debug)]
struct CensusArgs {
    #[arg(long)]
    input: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Eval(a) => commands::eval(a),
        Command::Synth(a) => commands::synth(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Census(a) => commands::census(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
