//! Builds a co-listening graph, first from a hand-written log and then from
//! the synthetic benchmark's train window.

use hgnn_rec::data::{synth_generate, timeline_split, Catalog, CatalogItem, InteractionRecord, ItemType, Signal, SynthConfig};
use hgnn_rec::graph::{build_colisten_graph, graph_stats, EdgeKind, GraphBuildConfig};

fn item(id: &str, ty: ItemType) -> CatalogItem {
    CatalogItem {
        item_id: id.into(),
        item_type: ty,
        content_vector: vec![1.0, 0.0],
        language: "en".into(),
        genre: "misc".into(),
    }
}

fn main() -> hgnn_rec::Result<()> {
    // U1 streams an audiobook and a podcast, U2 two podcasts. A1 and P2 are
    // never streamed by the same user, so they stay unconnected.
    let catalog = Catalog::from_items([
        item("A1", ItemType::Audiobook),
        item("P1", ItemType::Podcast),
        item("P2", ItemType::Podcast),
    ])?;
    let log = [
        InteractionRecord::new("U1", "A1", ItemType::Audiobook, Signal::Stream, 0),
        InteractionRecord::new("U1", "P1", ItemType::Podcast, Signal::Stream, 1),
        InteractionRecord::new("U2", "P1", ItemType::Podcast, Signal::Stream, 2),
        InteractionRecord::new("U2", "P2", ItemType::Podcast, Signal::Stream, 3),
    ];
    let toy = build_colisten_graph(&log, &catalog, &GraphBuildConfig::default())?;
    for kind in EdgeKind::ALL {
        let edges: Vec<String> = toy
            .edges(kind)
            .iter()
            .map(|e| format!("{}-{}", toy.id(e.u), toy.id(e.v)))
            .collect();
        println!("{:<3} {:?}", kind.as_str(), edges);
    }

    let data = synth_generate(&SynthConfig::default(), 0)?;
    let split = timeline_split(&data.interactions, None)?;
    for min_co_users in [1, 2, 3] {
        let config = GraphBuildConfig {
            min_co_users,
            ..GraphBuildConfig::default()
        };
        let graph = build_colisten_graph(&split.train, &data.catalog, &config)?;
        let stats = graph_stats(&graph);
        println!(
            "min_co_users {min_co_users}: aa {:>5}  ap {:>6}  pp {:>6}  max degree {}",
            stats.aa,
            stats.ap,
            stats.pp,
            graph.max_degree()
        );
    }
    Ok(())
}
