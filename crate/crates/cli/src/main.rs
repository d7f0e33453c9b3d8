use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use cdnmf::datasets::{load_linqs, write_graph};
use cdnmf::runner::{trace_csv, DATA_ROOT_ENV};
use cdnmf::{
    cmd_ablate, cmd_benchmark, cmd_eval, cmd_trace, cmd_train, generate_sbm, DatasetSource, NegCap, RunConfig,
    RunResult, SbmSpec,
};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

/// Community detection on attributed graphs with contrastive deep NMF.
#[derive(Parser, Debug)]
#[command(name = "cdnmf", version)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Pretrain, fine-tune and evaluate every seed.
    Train(RunArgs),
    /// Compare the full model with its topology-only and attribute-only variants.
    Ablate(RunArgs),
    /// Run several configs and print a mean ± std table.
    Benchmark(BenchmarkArgs),
    /// Train and emit the per-epoch loss terms as CSV.
    Trace(RunArgs),
    /// Write a planted-partition graph in the edge-list/feature/label layout.
    GenSbm(SbmArgs),
    /// Score an assignment CSV against a label file.
    Eval(EvalArgs),
    /// Convert LINQS `.content`/`.cites` files to the edge-list/feature/label layout.
    ImportLinqs(ImportArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Builtin dataset name (cora, citeseer, pubmed); overrides the config's dataset.
    #[arg(long)]
    dataset: Option<String>,
    /// Seed to run; repeatable.
    #[arg(long = "seed")]
    seed: Vec<u64>,
    /// Run seeds 0..N.
    #[arg(long, conflicts_with = "seed")]
    seeds: Option<u64>,
    /// Output directory for result JSON and assignment CSVs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Clamp the learned factors to be nonnegative before prediction.
    #[arg(long)]
    clamp_output: bool,
    /// Negatives per anchor: auto, full, or a count.
    #[arg(long)]
    neg_cap: Option<String>,
    /// Directory holding builtin datasets.
    #[arg(long, env = DATA_ROOT_ENV)]
    data_root: Option<PathBuf>,
    /// Fine-tuning epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Save pretrained factors per seed into the output directory.
    #[arg(long, requires = "out")]
    save_checkpoints: bool,
    /// Fine-tune from checkpoints saved by an earlier run.
    #[arg(long)]
    resume_from: Option<PathBuf>,
    /// Print the full result JSON to stdout.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    /// JSON run configurations, one row each.
    #[arg(long = "config", required = true)]
    configs: Vec<PathBuf>,
    /// Overrides every config's seed list with 0..N.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long, env = DATA_ROOT_ENV)]
    data_root: Option<PathBuf>,
    /// Directory for benchmark.md and benchmark.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print CSV instead of Markdown.
    #[arg(long)]
    csv: bool,
}

#[derive(Args, Debug)]
struct SbmArgs {
    /// Comma-separated block sizes.
    #[arg(long, value_delimiter = ',', default_value = "50,50")]
    blocks: Vec<usize>,
    #[arg(long, default_value_t = 0.3)]
    p_in: f64,
    #[arg(long, default_value_t = 0.01)]
    p_out: f64,
    /// Indicator width per block.
    #[arg(long, default_value_t = 10)]
    feature_dim: usize,
    #[arg(long, default_value_t = 0.5)]
    feature_noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// CSV with header `node_id,predicted_community`.
    #[arg(long)]
    assignments: PathBuf,
    /// Whitespace-separated `node_id label` lines.
    #[arg(long)]
    labels: PathBuf,
}

#[derive(Args, Debug)]
struct ImportArgs {
    #[arg(long)]
    content: PathBuf,
    #[arg(long)]
    cites: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let mut out = String::new();
    let status = run(cli.command, &mut out);
    // a closed pipe on stdout is not a failure
    let _ = std::io::stdout().lock().write_all(out.as_bytes());
    match status {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", error_message(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The error chain joined by `: `, skipping causes already spelled out by
/// their parent's message.
fn error_message(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<cdnmf::Error>()) {
        Some(err) if err.is_numeric_error() => EXIT_NUMERIC,
        Some(err) if err.is_data_error() => EXIT_DATA,
        Some(cdnmf::Error::Domain(_) | cdnmf::Error::Shape(_)) => EXIT_DATA,
        _ => EXIT_USAGE,
    }
}

fn run(command: Command, out: &mut String) -> anyhow::Result<()> {
    match command {
        Command::Train(args) => {
            let cfg = run_config(&args)?;
            let result = cmd_train(&cfg)?;
            print_result(out, &result, args.json)
        }
        Command::Trace(args) => {
            let cfg = run_config(&args)?;
            let result = cmd_trace(&cfg)?;
            if args.json {
                print_result(out, &result, true)
            } else {
                for s in &result.seeds {
                    if result.seeds.len() > 1 {
                        writeln!(out, "# seed {}", s.seed)?;
                    }
                    write!(out, "{}", trace_csv(&s.trace))?;
                }
                Ok(())
            }
        }
        Command::Ablate(args) => {
            let cfg = run_config(&args)?;
            let result = cmd_ablate(&cfg)?;
            if args.json {
                writeln!(out, "{}", serde_json::to_string_pretty(&result)?)?;
            } else {
                write!(out, "{}", result.markdown())?;
            }
            Ok(())
        }
        Command::Benchmark(args) => {
            let configs = args
                .configs
                .iter()
                .map(|p| {
                    let mut c = RunConfig::load(p)?;
                    if let Some(n) = args.seeds {
                        c.seeds = (0..n).collect();
                    }
                    if args.data_root.is_some() {
                        c.data_root = args.data_root.clone();
                    }
                    Ok(c)
                })
                .collect::<cdnmf::Result<Vec<_>>>()?;
            let table = cmd_benchmark(&configs);
            if let Some(dir) = &args.out {
                std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
                write(&dir.join("benchmark.md"), &table.markdown())?;
                write(&dir.join("benchmark.csv"), &table.csv())?;
            }
            write!(out, "{}", if args.csv { table.csv() } else { table.markdown() })?;
            Ok(())
        }
        Command::GenSbm(args) => {
            let spec = SbmSpec {
                block_sizes: args.blocks,
                p_in: args.p_in,
                p_out: args.p_out,
                feature_dim: args.feature_dim,
                feature_noise: args.feature_noise,
                seed: args.seed,
            };
            let graph = generate_sbm(&spec)?;
            std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
            write_graph(&graph, &args.out)?;
            writeln!(out, 
                "wrote {} nodes, {} edges to {}",
                graph.n(),
                graph.num_edges(),
                args.out.display()
            )?;
            Ok(())
        }
        Command::Eval(args) => {
            let report = cmd_eval(&args.assignments, &args.labels)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            Ok(())
        }
        Command::ImportLinqs(args) => {
            let graph = load_linqs(&args.content, &args.cites)?;
            std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
            write_graph(&graph, &args.out)?;
            writeln!(out, 
                "wrote {} nodes, {} edges to {}",
                graph.n(),
                graph.num_edges(),
                args.out.display()
            )?;
            Ok(())
        }
    }
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn run_config(args: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match (&args.config, &args.dataset) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(name)) => RunConfig::new(DatasetSource::Builtin(name.clone())),
        (None, None) => bail!(cdnmf::Error::Config("either --config or --dataset is required".into())),
    };
    if let (Some(_), Some(name)) = (&args.config, &args.dataset) {
        cfg.dataset = DatasetSource::Builtin(name.clone());
    }
    if !args.seed.is_empty() {
        cfg.seeds = args.seed.clone();
    }
    if let Some(n) = args.seeds {
        cfg.seeds = (0..n).collect();
    }
    if args.out.is_some() {
        cfg.out_dir = args.out.clone();
    }
    if args.clamp_output {
        cfg.clamp_output = true;
    }
    if let Some(cap) = &args.neg_cap {
        let cap: NegCap = cap.parse()?;
        let mut hyper = cfg.base_hyper();
        hyper.neg_cap = cap;
        cfg.hyper = Some(hyper);
    }
    if args.data_root.is_some() {
        cfg.data_root = args.data_root.clone();
    }
    if let Some(e) = args.epochs {
        cfg.optimizer.epochs = e;
    }
    if args.save_checkpoints {
        cfg.save_checkpoints = true;
    }
    if args.resume_from.is_some() {
        cfg.resume_from = args.resume_from.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_result(out: &mut String, result: &RunResult, json: bool) -> anyhow::Result<()> {
    if json {
        writeln!(out, "{}", serde_json::to_string_pretty(result)?)?;
        return Ok(());
    }
    for s in &result.seeds {
        match &s.report {
            Some(r) => writeln!(out, 
                "{} seed {}: ACC {:.4} NMI {:.4} ({} epochs)",
                result.name, s.seed, r.acc, r.nmi, s.epochs_run
            )?,
            None => writeln!(out, "{} seed {}: {} epochs, no ground truth", result.name, s.seed, s.epochs_run)?,
        }
    }
    if let Some(sum) = &result.summary {
        writeln!(out, 
            "{} mean over {} seeds: ACC {:.4} ± {:.4} NMI {:.4} ± {:.4}",
            result.name,
            result.seeds.len(),
            sum.acc_mean,
            sum.acc_std,
            sum.nmi_mean,
            sum.nmi_std
        )?;
    }
    Ok(())
}
