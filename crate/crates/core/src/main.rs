use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use llmpc::harness::{
    generate_task_records, run_experiment, verify_plan, write_task_file, ExperimentConfig, ExperimentKind, Overrides,
    SamplerKind, TaskDomain,
};

#[derive(Parser)]
#[command(name = "llmpc", version, about = "Sampling-based MPC experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-loop spring control: exact MPC against sampled plans.
    SpringTrajectory(RunArgs),
    /// Best-of-K cost ratio over sampled spring states.
    SpringRatio(RunArgs),
    /// Feedback-driven trip planning over a task set.
    Trip(RunArgs),
    /// Feedback-driven meeting planning over a task set.
    Meeting(RunArgs),
    /// Write generated tasks with reference plans as JSONL.
    GenInstances(GenArgs),
    /// Check a plan file against a task file.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerArg {
    Llm,
    MockNoisy,
    Oracle,
    Replay,
}

impl From<SamplerArg> for SamplerKind {
    fn from(s: SamplerArg) -> Self {
        match s {
            SamplerArg::Llm => SamplerKind::Llm,
            SamplerArg::MockNoisy => SamplerKind::MockNoisy,
            SamplerArg::Oracle => SamplerKind::Oracle,
            SamplerArg::Replay => SamplerKind::Replay,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Trip,
    Meeting,
}

impl From<DomainArg> for TaskDomain {
    fn from(d: DomainArg) -> Self {
        match d {
            DomainArg::Trip => TaskDomain::Trip,
            DomainArg::Meeting => TaskDomain::Meeting,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    sampler: Option<SamplerArg>,
    /// Planning rounds (T).
    #[arg(short = 'T', long)]
    rounds: Option<usize>,
    /// Samples per round (K).
    #[arg(short = 'K', long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Response cache directory for llm and replay samplers.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// JSONL task file (trip and meeting only).
    #[arg(long)]
    tasks: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    domain: DomainArg,
    /// City or friend counts.
    #[arg(long, value_delimiter = ',', default_value = "3,4,5,6")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    per_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    domain: DomainArg,
    /// Task statement as plain text.
    #[arg(long)]
    task: PathBuf,
    /// Plan as plain text.
    #[arg(long)]
    plan: PathBuf,
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(kind),
    };
    if config.experiment != kind {
        anyhow::bail!(
            "config is for `{}` but the subcommand is `{}`",
            config.experiment.as_str(),
            kind.as_str()
        );
    }
    config.apply(&Overrides {
        sampler: args.sampler.map(Into::into),
        rounds: args.rounds,
        samples: args.samples,
        seed: args.seed,
        output_dir: args.output_dir,
        cache_dir: args.cache_dir,
        tasks: args.tasks,
    });
    config.validate()?;
    let summary = run_experiment(&config)?;
    println!("{}", summary.headline.to_aligned());
    for f in &summary.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

/// Error chain without causes whose text is already in the message.
fn describe(e: &anyhow::Error) -> String {
    let mut out = e.to_string();
    for cause in e.chain().skip(1) {
        let text = cause.to_string();
        if !out.contains(&text) {
            out.push_str(": ");
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::SpringTrajectory(a) => run(ExperimentKind::SpringTrajectory, a),
        Command::SpringRatio(a) => run(ExperimentKind::SpringRatio, a),
        Command::Trip(a) => run(ExperimentKind::Trip, a),
        Command::Meeting(a) => run(ExperimentKind::Meeting, a),
        Command::GenInstances(a) => {
            let records = generate_task_records(a.domain.into(), &a.sizes, a.per_size, a.seed);
            write_task_file(&a.output, &records)
                .map(|_| println!("wrote {} tasks to {}", records.len(), a.output.display()))
                .map_err(Into::into)
        }
        Command::Verify(a) => (|| {
            let task = std::fs::read_to_string(&a.task).with_context(|| a.task.display().to_string())?;
            let plan = std::fs::read_to_string(&a.plan).with_context(|| a.plan.display().to_string())?;
            let report = verify_plan(a.domain.into(), &task, &plan)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if report.success {
                Ok(())
            } else {
                anyhow::bail!("plan does not solve the task")
            }
        })(),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}
