//! Scores the popularity, content-KNN and HGNN-only baselines on the
//! synthetic holdout, per user segment and per popularity tier.

use std::collections::BTreeSet;

use hgnn_rec::eval::{content_knn, evaluate_lists, hgnn_knn, recommend_all, tiered_metrics, EvalContext, Popularity, Recommender};
use hgnn_rec::pipeline::{hgnn_embeddings, prepare, Dataset, PipelineConfig};

fn main() -> hgnn_rec::Result<()> {
    let config = PipelineConfig::default();
    let dataset: Dataset = hgnn_rec::data::synth_generate(&config.synth, 0)?.into();
    let prep = prepare(dataset, &config)?;
    let target = config.eval.target;
    let (train, end, days) = (&prep.split.train, prep.split.split_time, config.split.window_days);
    let ctx = EvalContext::new(&prep.split, &prep.segments, &prep.dataset.catalog, target, config.eval.k);
    let (_, embeddings) = hgnn_embeddings(&prep, &config, 0)?;

    let popularity = Popularity::from_train(train, &prep.dataset.catalog, target, end, days);
    let models: Vec<Box<dyn Recommender>> = vec![
        Box::new(popularity.clone()),
        Box::new(content_knn(train, &prep.dataset.catalog, target, end, days, popularity.clone())?),
        Box::new(hgnn_knn(train, &embeddings, target, end, days, popularity)?),
    ];

    println!("{:<12} {:<5} {:>6} {:>6} {:>6} {:>5}", "model", "seg", "HR@10", "MRR", "cov", "users");
    let users: BTreeSet<String> = ctx.users().cloned().collect();
    let mut tiers = Vec::new();
    for m in &models {
        let lists = recommend_all(m.as_ref(), &ctx)?;
        for r in evaluate_lists(m.name(), &lists, &ctx)? {
            println!(
                "{:<12} {:<5} {:>6.3} {:>6.3} {:>6.3} {:>5}",
                r.model,
                r.segment.name(),
                r.hr_at_k,
                r.mrr,
                r.coverage,
                r.n_users
            );
        }
        tiers.push(tiered_metrics(m.name(), &lists, &ctx, train, &users)?);
    }

    println!("\nHR@10 by popularity tier (1 = most streamed):");
    for t in &tiers {
        let cells: Vec<String> = t
            .tiers
            .iter()
            .chain(std::iter::once(&t.long_tail))
            .map(|m| match m.hr_at_k {
                Some(hr) => format!("{}:{hr:.2}", m.tier),
                None => format!("{}:-", m.tier),
            })
            .collect();
        println!("  {:<12} {}", t.model, cells.join("  "));
    }
    Ok(())
}
