//! Runs every stage through the file-backed pipeline in a temporary
//! directory, the same way the `rec` binary does, and prints a few
//! recommendations and the artifact manifests.

use hgnn_rec::pipeline::{ArtifactManifest, Pipeline, PipelineConfig, Stage, StageArgs};

fn main() -> hgnn_rec::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let pipeline = Pipeline::new(PipelineConfig::default(), Some(5), Some(dir.path().to_path_buf()))?;
    let none = StageArgs::default();
    for stage in [
        Stage::Synth,
        Stage::Split,
        Stage::BuildGraph,
        Stage::TrainHgnn,
        Stage::Embed,
        Stage::TrainTwoTower,
        Stage::BuildIndex,
        Stage::Evaluate,
    ] {
        let out = pipeline.run(stage, &none)?;
        for a in &out.artifacts {
            let m = ArtifactManifest::load(a)?;
            println!("{:<12} {:<32} {}", stage.name(), m.artifact, &m.sha256[..16]);
        }
    }

    for user in ["u0000", "someone-new"] {
        println!("recommendations for {user}:");
        for item in pipeline.recommend(user, 5)? {
            println!("  {} {:.3}", item.item_id, item.score);
        }
    }
    let report = std::fs::read_to_string(pipeline.layout().eval_csv()).expect("evaluate wrote metrics");
    print!("{report}");
    Ok(())
}
