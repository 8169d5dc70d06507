//! Cosine similarity of audiobook pairs that were co-listened, pairs that
//! only share podcast listeners, and random pairs, under raw content
//! vectors and under learned HGNN embeddings.

use hgnn_rec::eval::{pair_similarity_probe, Pairing};
use hgnn_rec::pipeline::{hgnn_embeddings, prepare, Dataset, PipelineConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> hgnn_rec::Result<()> {
    let config = PipelineConfig::default();
    let dataset: Dataset = hgnn_rec::data::synth_generate(&config.synth, 4)?.into();
    let prep = prepare(dataset, &config)?;
    let (_, embeddings) = hgnn_embeddings(&prep, &config, 4)?;
    let catalog = &prep.dataset.catalog;

    for pairing in Pairing::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let content = pair_similarity_probe(
            &prep.graph,
            |id| catalog.get(id).map(|it| it.content_vector.as_slice()),
            pairing,
            config.eval.probe_pairs,
            &mut rng,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let learned = pair_similarity_probe(&prep.graph, |id| embeddings.get(id), pairing, config.eval.probe_pairs, &mut rng);
        match (content, learned) {
            (Ok(c), Ok(h)) => println!(
                "{pairing:?}: {} pairs, content {:.3} ± {:.3}, hgnn {:.3} ± {:.3}",
                c.n, c.mean, c.std, h.mean, h.std
            ),
            (Err(e), _) | (_, Err(e)) => println!("{pairing:?}: {e}"),
        }
    }
    Ok(())
}
