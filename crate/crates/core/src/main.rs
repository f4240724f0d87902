use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ccprobe::decision::{DecisionRule, Normalization};
use ccprobe::pipeline::{
    load_summary, write_report, BackendKind, Pipeline, PipelineError, ReportRow, RunConfig, Stage, ENDPOINT_ENV,
};
use ccprobe::synthetic::{generate, write_world, SyntheticSpec};

#[derive(Parser)]
#[command(
    name = "ccprobe",
    version,
    about = "Probe the conceptual consistency of language models"
)]
struct Cli {
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the knowledge-base store and negative pool.
    Ingest(StageArgs),
    /// Match concepts and collect positive and negative background facts.
    Extract(SeededArgs),
    /// Score background facts and anchors with the configured backend.
    Score(SeededArgs),
    /// Compute background/task scores, consistency and breakdowns.
    Metrics(StageArgs),
    /// Write tables and charts for one or more finished runs.
    Report(ReportArgs),
    /// Run every stage, skipping those already up to date.
    Run(RunArgs),
    /// Write a synthetic knowledge graph, dataset and config to a directory.
    Synth(SynthArgs),
}

#[derive(Args)]
struct StageArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides `output_dir`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides `data.top_k`.
    #[arg(long)]
    top_k: Option<usize>,
    /// Re-run even when artifacts are current.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SeededArgs {
    #[command(flatten)]
    stage: StageArgs,
    #[arg(long)]
    seed: u64,
    #[command(flatten)]
    scoring: ScoringArgs,
}

#[derive(Args)]
struct ScoringArgs {
    #[arg(long, value_parser = ["mock", "remote"])]
    backend: Option<String>,
    /// Remote scorer base URL.
    #[arg(long, env = ENDPOINT_ENV)]
    endpoint: Option<String>,
    #[arg(long, value_parser = ["global-argmax", "per-meta-prompt-vote"])]
    rule: Option<String>,
    #[arg(long, value_parser = ["sum", "mean"])]
    normalization: Option<String>,
    /// Alternate prompt file.
    #[arg(long)]
    prompts: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    seeded: SeededArgs,
    /// Stages to run; all when omitted.
    #[arg(long, value_delimiter = ',')]
    stages: Vec<Stage>,
}

#[derive(Args)]
struct ReportArgs {
    /// Use this run's configuration and output directory.
    #[arg(short, long, conflicts_with = "run_dir")]
    config: Option<PathBuf>,
    /// Finished run directories, one table row each.
    #[arg(long)]
    run_dir: Vec<PathBuf>,
    /// Where to write the combined report.
    #[arg(long, default_value = "report")]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    concepts: usize,
    #[arg(long, default_value_t = 1500)]
    edges: usize,
    #[arg(long, default_value_t = 100)]
    anchors: usize,
}

fn load_config(args: &StageArgs) -> Result<RunConfig, PipelineError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = std::env::current_dir()
            .map_err(|e| PipelineError::io(Path::new("."), e))?
            .join(dir);
    }
    if let Some(k) = args.top_k {
        cfg.data.top_k = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply_scoring(cfg: &mut RunConfig, args: &ScoringArgs) -> Result<(), PipelineError> {
    let parse = |v: &str| serde_json::Value::String(v.to_owned());
    if let Some(b) = &args.backend {
        cfg.scoring.backend = if b == "remote" {
            BackendKind::Remote
        } else {
            BackendKind::Mock
        };
    }
    if let Some(e) = &args.endpoint {
        cfg.set_endpoint(e.clone());
    }
    if let Some(r) = &args.rule {
        cfg.scoring.rule =
            serde_json::from_value::<DecisionRule>(parse(r)).map_err(|e| PipelineError::Config(e.to_string()))?;
    }
    if let Some(n) = &args.normalization {
        cfg.scoring.normalization =
            serde_json::from_value::<Normalization>(parse(n)).map_err(|e| PipelineError::Config(e.to_string()))?;
    }
    if let Some(p) = &args.prompts {
        let abs = std::env::current_dir()
            .map_err(|e| PipelineError::io(Path::new("."), e))?
            .join(p);
        cfg.prompts.path = Some(abs);
    }
    cfg.validate()
}

fn seeded_config(args: &SeededArgs) -> Result<RunConfig, PipelineError> {
    let mut cfg = load_config(&args.stage)?;
    cfg.seed = Some(args.seed);
    apply_scoring(&mut cfg, &args.scoring)?;
    Ok(cfg)
}

fn run_stages(cfg: RunConfig, stages: &[Stage], force: bool) -> Result<(), PipelineError> {
    let mut pipeline = Pipeline::open(cfg)?.force(force);
    let manifest = pipeline.run(stages)?;
    for (stage, record) in &manifest.stages {
        let counts: Vec<String> = record.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("{stage}: {}", counts.join(" "));
    }
    Ok(())
}

const SYNTH_CONFIG: &str = r#"output_dir = "run"

[data]
dump = "assertions.tsv"
dataset = "dev.jsonl"
word_list = "words.txt"
frequency_list = "frequencies.tsv"

[scoring]
backend = "mock"

[scoring.mock]
knowledge_rate = 0.6

[scoring.mock.anchor_policy]
coupling = 0.75
threshold = 0.5
base_rate = 0.5

[report]
concept_min_count = 3
"#;

fn execute(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Ingest(args) => run_stages(load_config(&args)?, &[Stage::Ingest], args.force),
        Command::Metrics(args) => {
            let mut cfg = load_config(&args)?;
            cfg.seed = None;
            run_stages(cfg, &[Stage::Metrics], args.force)
        }
        Command::Extract(args) => run_stages(seeded_config(&args)?, &[Stage::Extract], args.stage.force),
        Command::Score(args) => run_stages(seeded_config(&args)?, &[Stage::Score], args.stage.force),
        Command::Run(args) => {
            let stages = if args.stages.is_empty() {
                Stage::ALL.to_vec()
            } else {
                args.stages.clone()
            };
            run_stages(seeded_config(&args.seeded)?, &stages, args.seeded.stage.force)
        }
        Command::Report(args) => {
            if let Some(config) = args.config {
                let cfg = load_config(&StageArgs {
                    config,
                    output_dir: None,
                    top_k: None,
                    force: args.force,
                })?;
                return run_stages(cfg, &[Stage::Report], args.force);
            }
            if args.run_dir.is_empty() {
                return Err(PipelineError::Config(
                    "report needs --config or at least one --run-dir".into(),
                ));
            }
            let rows = args
                .run_dir
                .iter()
                .map(|dir| {
                    let summary = load_summary(dir)?;
                    Ok(ReportRow {
                        label: format!("{} [{}]", summary.backend, dir.display()),
                        summary,
                    })
                })
                .collect::<Result<Vec<_>, PipelineError>>()?;
            let files = write_report(&rows, &args.out, "")?;
            for f in files {
                println!("{}", args.out.join(&f.path).display());
            }
            Ok(())
        }
        Command::Synth(args) => {
            let spec = SyntheticSpec {
                seed: args.seed,
                concepts: args.concepts,
                edges: args.edges,
                anchors: args.anchors,
                ..Default::default()
            };
            let world = generate(&spec);
            write_world(&world, &args.out).map_err(|e| PipelineError::io(&args.out, e))?;
            let cfg = args.out.join("ccprobe.toml");
            std::fs::write(&cfg, SYNTH_CONFIG).map_err(|e| PipelineError::io(&cfg, e))?;
            println!(
                "wrote {} (run with: ccprobe run --config {} --seed 7)",
                cfg.display(),
                cfg.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
