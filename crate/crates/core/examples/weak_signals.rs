//! Co-occurrence of signal types and one logistic fit per weak signal:
//! does an earlier follow, preview or intent-to-pay raise the odds of a
//! later stream of the same audiobook?

use hgnn_rec::data::{default_split_time, synth_generate, SynthConfig};
use hgnn_rec::eval::weak_signal_analysis;

fn main() -> hgnn_rec::Result<()> {
    for seed in 0..3 {
        let data = synth_generate(&SynthConfig::default(), seed)?;
        let cutoff = default_split_time(&data.interactions, 14).expect("nonempty log");
        let report = weak_signal_analysis(&data.interactions, cutoff)?;

        println!("seed {seed}");
        let names: Vec<&str> = report.signals.iter().map(|s| s.as_str()).collect();
        println!("  {:<14} {}", "", names.iter().map(|n| format!("{n:>14}")).collect::<String>());
        for (name, row) in names.iter().zip(&report.cooccurrence) {
            println!("  {name:<14} {}", row.iter().map(|x| format!("{x:>14.3}")).collect::<String>());
        }
        for f in &report.fits {
            println!(
                "  {:<14} beta {:+.3}  odds ratio {:.2}  ({} pairs, {} streamed){}",
                f.signal.as_str(),
                f.coefficient,
                f.odds_ratio,
                f.n_samples,
                f.n_positive,
                if f.converged { "" } else { "  [not converged]" }
            );
        }
        for s in &report.skipped {
            println!("  {:<14} skipped: {}", s.signal.as_str(), s.reason);
        }
    }
    Ok(())
}
