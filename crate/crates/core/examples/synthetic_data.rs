//! Generates the default synthetic benchmark and checks the structure the
//! rest of the pipeline relies on: co-listened audiobooks are closer in
//! content space than random pairs.
//!
//! Run with `cargo run --release --example synthetic_data -- [seed]`.

use std::collections::{BTreeMap, BTreeSet};

use hgnn_rec::data::{synth_generate, ItemType, Signal, SynthConfig};
use hgnn_rec::linalg::cosine;

fn main() -> hgnn_rec::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let config = SynthConfig::default();
    let data = synth_generate(&config, seed)?;

    let mut by_signal: BTreeMap<Signal, usize> = BTreeMap::new();
    for r in &data.interactions {
        *by_signal.entry(r.signal).or_default() += 1;
    }
    println!(
        "seed {seed}: {} users, {} catalog items, {} interactions",
        data.users.len(),
        data.catalog.len(),
        data.interactions.len()
    );
    for (signal, n) in &by_signal {
        println!("  {:<14} {n}", signal.as_str());
    }

    let mut streamed: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in &data.interactions {
        if r.signal == Signal::Stream && r.item_type == ItemType::Audiobook {
            streamed.entry(&r.user_id).or_default().insert(&r.item_id);
        }
    }
    let mut co_listened = BTreeSet::new();
    for items in streamed.values() {
        let v: Vec<&str> = items.iter().copied().collect();
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                co_listened.insert((v[i], v[j]));
            }
        }
    }

    let books = data.catalog.ids_of_type(ItemType::Audiobook);
    let vector = |id: &str| data.catalog.get(id).map(|it| it.content_vector.as_slice()).unwrap();
    let (mut co, mut all) = ((0.0, 0usize), (0.0, 0usize));
    for i in 0..books.len() {
        for j in i + 1..books.len() {
            let s = cosine(vector(books[i]), vector(books[j]));
            all = (all.0 + s, all.1 + 1);
            if co_listened.contains(&(books[i], books[j])) {
                co = (co.0 + s, co.1 + 1);
            }
        }
    }
    println!(
        "mean content cosine: co-listened audiobooks {:.3} ({} pairs), all pairs {:.3} ({} pairs)",
        co.0 / co.1 as f64,
        co.1,
        all.0 / all.1 as f64,
        all.1
    );
    Ok(())
}
