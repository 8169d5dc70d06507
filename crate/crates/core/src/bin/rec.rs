use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use hgnn_rec::pipeline::{Pipeline, PipelineConfig, Stage, StageArgs};

#[derive(Parser)]
#[command(name = "rec", about = "Run one stage of the audiobook recommendation pipeline")]
struct Cli {
    /// synth, split, build-graph, train-hgnn, embed, train-2t, build-index,
    /// recommend, evaluate, ablate, weak-signals or probe.
    stage: String,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// User to recommend for (`recommend` only).
    #[arg(long)]
    user: Option<String>,
    /// Number of items to return (`recommend` only).
    #[arg(long)]
    k: Option<usize>,
}

fn run(cli: Cli) -> hgnn_rec::Result<()> {
    let stage: Stage = cli.stage.parse()?;
    let config = PipelineConfig::load(&cli.config)?;
    let pipeline = Pipeline::new(config, cli.seed, cli.out)?;
    let outcome = pipeline.run(stage, &StageArgs { user: cli.user, k: cli.k })?;
    for w in &outcome.warnings {
        eprintln!("{}", serde_json::json!({ "level": "warning", "stage": stage.name(), "message": w }));
    }
    for item in &outcome.recommendations {
        println!("{}", serde_json::to_string(item)?);
    }
    for a in &outcome.artifacts {
        eprintln!("wrote {}", a.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
