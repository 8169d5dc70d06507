//! The seeded synthetic benchmark: every model on every segment, over a
//! number of seeds.
//!
//! `cargo run --release --example benchmark -- 10`

use hgnn_rec::eval::Segment;
use hgnn_rec::pipeline::{run_benchmark, PipelineConfig};

const MODELS: [&str; 6] = ["popularity", "content_knn", "hgnn_only", "2t", "2t_hgnn", "2t_hgnn_no_weak_signals"];

fn main() -> hgnn_rec::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let config = PipelineConfig::default();
    let mut sums = [0.0; MODELS.len()];
    println!("HR@10, all users");
    println!("seed {}", MODELS.map(|m| format!("{m:>24}")).concat());
    for seed in 0..seeds {
        let r = run_benchmark(&config, seed)?;
        let hr = MODELS.map(|m| r.metric(m, Segment::All).map_or(f64::NAN, |x| x.hr_at_k));
        for (s, h) in sums.iter_mut().zip(hr) {
            *s += h;
        }
        println!("{seed:>4} {}", hr.map(|h| format!("{h:>24.3}")).concat());
    }
    println!("mean {}", sums.map(|s| format!("{:>24.3}", s / seeds as f64)).concat());
    Ok(())
}
