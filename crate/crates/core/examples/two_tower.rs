//! Trains the two-tower model on top of HGNN embeddings and weak-signal
//! features, then scores one warm and one brand-new user.

use std::collections::BTreeSet;

use hgnn_rec::index::build_index;
use hgnn_rec::pipeline::{hgnn_embeddings, prepare, two_tower, Dataset, PipelineConfig};
use hgnn_rec::two_tower::{assemble_user_features, TwoTowerConfig};

fn main() -> hgnn_rec::Result<()> {
    let config = PipelineConfig::default();
    let seed = 2;
    let dataset: Dataset = hgnn_rec::data::synth_generate(&config.synth, seed)?.into();
    let prep = prepare(dataset, &config)?;
    let (_, embeddings) = hgnn_embeddings(&prep, &config, seed)?;

    let tt = TwoTowerConfig {
        epochs: 5,
        ..config.two_tower.clone()
    };
    let run = two_tower(&prep, &embeddings, &tt, seed + 1)?;
    println!(
        "{} user vectors, {} item vectors of dim {}; {} items embedded from content only",
        run.user_vectors.len(),
        run.item_vectors.len(),
        run.model.output_dim(),
        run.inductive_items.len()
    );

    let index = build_index(run.item_vectors.clone())?;
    let warm = run.user_vectors.keys().next().expect("users").clone();
    println!("top 5 for {warm}:");
    for (id, score) in index.query_topk(&run.user_vectors[&warm], 5, &BTreeSet::new())? {
        println!("  {id} {score:.3}");
    }

    // A user with no history and no profile still gets a vector.
    let cold = assemble_user_features(
        "new-user",
        &[],
        prep.split.split_time,
        &embeddings,
        None,
        run.model.dims.music,
        &run.model.config.features,
    );
    let q = run.model.user_vectors(&[&cold])?;
    println!("top 5 for a new user:");
    for (id, score) in index.query_topk(q.row(0), 5, &BTreeSet::new())? {
        println!("  {id} {score:.3}");
    }
    Ok(())
}
