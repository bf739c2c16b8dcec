use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use signgad::encoding::export_encoding;
use signgad::harness::{
    ablate, generate_synthetic, load_dataset, run_pipeline, stratified_split, write_dataset,
    FeatureFormat, RunConfig, Sweep,
};
use signgad::planner::{
    build_task_descriptor, compute_graph_stats, plan_llm, plan_rule_based, HttpChatClient,
};
use signgad::seed::{derive, stage};
use signgad::workflow::Workbench;

#[derive(Parser)]
#[command(name = "signgad", version, about = "Few-shot graph anomaly detection workflows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config value, e.g. --set seed=3 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Print graph statistics of a dataset directory.
    Stats {
        dir: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Print the candidate workflows for a config.
    Plan {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the full pipeline and print the report.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Also write the deployed model blob and selected encoding here.
        #[arg(long)]
        export_dir: Option<PathBuf>,
    },
    /// Generate the synthetic graph of a config into a dataset directory.
    Synth {
        config: PathBuf,
        /// Target dataset directory.
        #[arg(long)]
        dir: PathBuf,
        /// Store features as features.bin instead of features.csv.
        #[arg(long)]
        binary: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Run one pipeline per point of a sweep.
    Ablate {
        config: PathBuf,
        /// One of k, n_workflows, alpha, modules.
        #[arg(long)]
        sweep: Sweep,
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_file(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    for o in overrides {
        cfg.set(o).with_context(|| format!("applying --set {o}"))?;
    }
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.write_all(b"\n")?;
            Ok(())
        }
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Stats { dir, common } => {
            let mut cfg = RunConfig::default();
            for o in &common.set {
                cfg.set(o)?;
            }
            let ds = load_dataset(&dir, cfg.train_ratio, cfg.val_share, derive(cfg.seed, stage::SPLIT))?;
            let stats = compute_graph_stats(&ds.graph);
            emit(common.out.as_deref(), &serde_json::to_string_pretty(&stats)?)
        }
        Command::Plan { config, common } => {
            let cfg = load_config(&config, &common.set)?;
            let (graph, _, text) = signgad::harness::prepare_graph(&cfg)?;
            let descriptor = build_task_descriptor(&text.unwrap_or_else(|| cfg.task_text.clone()), &graph);
            let specs = match cfg.planner {
                signgad::harness::PlannerBackend::Rule => plan_rule_based(&descriptor, cfg.n_workflows)?,
                signgad::harness::PlannerBackend::Llm => {
                    let client = HttpChatClient::from_env(
                        &cfg.llm_endpoint,
                        &cfg.llm_model,
                        std::time::Duration::from_secs(cfg.llm_timeout_secs),
                    );
                    plan_llm(&descriptor, cfg.n_workflows, &client)?.specs
                }
            };
            emit(common.out.as_deref(), &serde_json::to_string_pretty(&specs)?)
        }
        Command::Run {
            config,
            common,
            export_dir,
        } => {
            let cfg = load_config(&config, &common.set)?;
            let outcome = run_pipeline(&cfg)?;
            if let Some(dir) = export_dir {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("model.sgdt"), outcome.deployed.to_blob()?)?;
                let bench = Workbench::new(&outcome.graph, cfg.evidence_config(), cfg.detector_config());
                let spec = &outcome.report.selected.spec;
                let enc = bench.encoding(spec.topology, &spec.evidence)?;
                export_encoding(&dir, "encoding", &enc)?;
            }
            emit(common.out.as_deref(), &outcome.report.to_json())
        }
        Command::Synth {
            config,
            dir,
            binary,
            common,
        } => {
            let cfg = load_config(&config, &common.set)?;
            let data = generate_synthetic(&cfg.synthetic_spec())?;
            let splits = stratified_split(
                &data.labels(),
                cfg.train_ratio,
                cfg.val_share,
                derive(cfg.seed, stage::SPLIT),
            );
            let graph = data.into_graph(splits)?;
            let format = if binary {
                FeatureFormat::Binary
            } else {
                FeatureFormat::Csv
            };
            let text = (!cfg.task_text.is_empty()).then_some(cfg.task_text.as_str());
            write_dataset(&dir, &graph, text, format)?;
            emit(
                common.out.as_deref(),
                &serde_json::to_string_pretty(&compute_graph_stats(&graph))?,
            )
        }
        Command::Ablate {
            config,
            sweep,
            common,
        } => {
            let cfg = load_config(&config, &common.set)?;
            let points = ablate(&cfg, sweep)?;
            emit(common.out.as_deref(), &serde_json::to_string_pretty(&points)?)
        }
    }
}
