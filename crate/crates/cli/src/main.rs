use std::path::PathBuf;
use std::process::ExitCode;

use albm::Result;
use albm_cli::config::RunConfig;
use albm_cli::eval::{self, EvalMode};
use albm_cli::report::{self, Report};
use albm_cli::synth::{self, SynthConfig};
use albm_cli::train::{self, TrainTarget};
use albm_cli::{dss_cmd, exit_code};
use clap::{ArgAction, Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "albm", version, about = "Attribute-formed concept bottleneck experiments")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an attribute-formed concept file with the LLM pipeline.
    Dss(DssArgs),
    /// Train a classifier or attribute prompts and write a checkpoint.
    Train(TrainArgs),
    /// Run an evaluation protocol and write a CSV report.
    Eval(EvalArgs),
    /// Print CSV reports as a table.
    Report(ReportArgs),
    /// Write a synthetic dataset and run config.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DssArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Class list, one name per line.
    #[arg(long)]
    classes: Option<PathBuf>,
    /// Existing per-class concept lists (JSON object). Skips description.
    #[arg(long)]
    concepts: Option<PathBuf>,
    /// live, replay or record.
    #[arg(long)]
    mode: Option<String>,
    /// Minimum class coverage in percent.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory of recorded LLM fixtures.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Logit temperature (prompt-alignment temperature for `train prompts`).
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(value_enum)]
    target: TrainTarget,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Train on this many samples per class.
    #[arg(long)]
    shots: Option<usize>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(value_enum)]
    mode: EvalMode,
    #[arg(long)]
    config: PathBuf,
    /// CSV path. Stdout when neither this nor `report` is set.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Class-local checkpoint (albm, nec-sweep).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Class-shared checkpoint (lbm-shared).
    #[arg(long)]
    shared_checkpoint: Option<PathBuf>,
    /// Shot counts for `fewshot`, e.g. --shots 1,4,16.
    #[arg(long, value_delimiter = ',')]
    shots: Vec<usize>,
    /// Retrain surviving weights after each prune in `nec-sweep`.
    #[arg(long)]
    refit: bool,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: SynthConfig,
}

fn load(path: Option<&PathBuf>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn apply(cfg: &mut RunConfig, o: &Overrides, prompts: bool) {
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    cfg.sync_seeds();
    if prompts {
        if let Some(e) = o.epochs {
            cfg.prompts.train.epochs = e;
        }
        if let Some(lr) = o.lr {
            cfg.prompts.train.lr = lr;
        }
        if let Some(t) = o.tau {
            cfg.prompts.train.temperature = t;
        }
    } else {
        if let Some(e) = o.epochs {
            cfg.train.epochs = e;
        }
        if let Some(lr) = o.lr {
            cfg.train.lr = lr;
        }
        if let Some(t) = o.tau {
            cfg.train.temperature = t;
            cfg.eval.tau = t;
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Dss(a) => {
            let mut cfg = load(a.config.as_ref())?;
            let d = &mut cfg.dss;
            d.classes = a.classes.or(d.classes.take());
            d.concepts = a.concepts.or(d.concepts.take());
            d.out = a.out.or(d.out.take());
            if let Some(m) = a.mode {
                d.mode = m;
            }
            if let Some(r) = a.r {
                d.pipeline.r = r;
            }
            if let Some(c) = a.cache_dir {
                d.cache_dir = c;
            }
            if let Some(m) = a.model {
                d.model = m;
            }
            print!("{}", dss_cmd::run(&cfg)?);
        }
        Command::Train(a) => {
            let mut cfg = load(a.config.as_ref())?;
            apply(&mut cfg, &a.overrides, a.target == TrainTarget::Prompts);
            if let Some(out) = a.out {
                match a.target {
                    TrainTarget::Walpha => cfg.eval.checkpoint = Some(out),
                    TrainTarget::WpShared => cfg.eval.shared_checkpoint = Some(out),
                    TrainTarget::Prompts => cfg.prompts.out = Some(out),
                }
            }
            print!("{}", train::run(&cfg, a.target, a.shots)?);
        }
        Command::Eval(a) => {
            let mut cfg = RunConfig::load(&a.config)?;
            apply(&mut cfg, &a.overrides, false);
            cfg.eval.checkpoint = a.checkpoint.or(cfg.eval.checkpoint.take());
            cfg.eval.shared_checkpoint = a.shared_checkpoint.or(cfg.eval.shared_checkpoint.take());
            if !a.shots.is_empty() {
                cfg.split.fewshot = a.shots;
            }
            cfg.eval.nec_refit |= a.refit;
            let report = eval::run(&cfg, a.mode)?;
            let summary = report::summarize(std::slice::from_ref(&report));
            match a.out.or(cfg.report.clone()) {
                Some(path) => {
                    report.save(&path)?;
                    print!("{summary}");
                    println!("wrote {}", path.display());
                }
                None => {
                    print!("{}", report.to_csv()?);
                    eprint!("{summary}");
                }
            }
        }
        Command::Report(a) => {
            let reports = a.files.iter().map(|p| Report::load(p)).collect::<Result<Vec<_>>>()?;
            print!("{}", report::summarize(&reports));
        }
        Command::Synth(a) => {
            let path = synth::generate(&a.out, &a.config)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
