//! Exact top-k retrieval: ties break by item id, excluded items never
//! appear, and the index survives a save/load round trip.

use std::collections::BTreeSet;

use hgnn_rec::index::{build_index, RecIndex};

fn unit(x: f64, y: f64) -> Vec<f64> {
    let n = (x * x + y * y).sqrt();
    vec![x / n, y / n]
}

fn main() -> hgnn_rec::Result<()> {
    let index = build_index([
        ("b".to_string(), unit(1.0, 0.0)),
        ("a".to_string(), unit(1.0, 0.0)),
        ("c".to_string(), unit(1.0, 1.0)),
        ("d".to_string(), unit(0.0, 1.0)),
    ])?;
    let q = unit(1.0, 0.2);
    println!("top 3: {:?}", index.query_topk(&q, 3, &BTreeSet::new())?);
    let exclude: BTreeSet<String> = ["a".to_string()].into();
    println!("top 3 without a: {:?}", index.query_topk(&q, 3, &exclude)?);

    let path = std::env::temp_dir().join("hgnn_rec_example_index.bin");
    index.save(&path)?;
    let loaded = RecIndex::load(&path)?;
    assert_eq!(loaded, index);
    println!("round trip through {} ok ({} items, dim {})", path.display(), loaded.len(), loaded.dim());
    std::fs::remove_file(&path).ok();

    match build_index([("x".to_string(), vec![3.0, 4.0])]) {
        Err(e) => println!("non-unit vector rejected: {e}"),
        Ok(_) => unreachable!("index accepts unit vectors only"),
    }
    Ok(())
}
