use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::evaluate::EvalContext;
use super::metrics::{hit_rate_at_k, mrr, Recommendations, Relevant};
use crate::data::{InteractionRecord, Signal};
use crate::error::{Error, Result};

pub const NUM_TIERS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierMetrics {
    /// "1" is the most streamed fifth of the catalog; "3-5" the long tail.
    pub tier: String,
    pub n_items: usize,
    pub n_users: usize,
    pub hr_at_k: Option<f64>,
    pub mrr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierReport {
    pub model: String,
    pub k: usize,
    pub tiers: Vec<TierMetrics>,
    /// Tiers 3 to 5 together.
    pub long_tail: TierMetrics,
}

/// Splits `items` into five equal-count tiers by descending train stream
/// count, ties by id. Earlier tiers take the remainder.
pub fn popularity_tiers(train: &[InteractionRecord], items: &BTreeSet<String>) -> Result<Vec<BTreeSet<String>>> {
    if items.len() < NUM_TIERS {
        return Err(Error::Invalid(format!(
            "tiering needs at least {NUM_TIERS} items, got {}",
            items.len()
        )));
    }
    let mut counts: BTreeMap<&str, usize> = items.iter().map(|i| (i.as_str(), 0)).collect();
    for r in train {
        if r.signal == Signal::Stream {
            if let Some(c) = counts.get_mut(r.item_id.as_str()) {
                *c += 1;
            }
        }
    }
    let mut order: Vec<(&str, usize)> = counts.into_iter().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let n = order.len();
    let base = n / NUM_TIERS;
    let extra = n % NUM_TIERS;
    let mut tiers = Vec::with_capacity(NUM_TIERS);
    let mut at = 0;
    for t in 0..NUM_TIERS {
        let size = base + usize::from(t < extra);
        tiers.push(order[at..at + size].iter().map(|(id, _)| id.to_string()).collect());
        at += size;
    }
    Ok(tiers)
}

fn tier_metrics(tier: String, items: &BTreeSet<String>, recs: &Recommendations, ctx: &EvalContext, users: &BTreeSet<String>) -> Result<TierMetrics> {
    let relevant: Relevant = ctx
        .relevant
        .iter()
        .filter(|(u, _)| users.contains(*u))
        .filter_map(|(u, rel)| {
            let r: BTreeSet<String> = rel.intersection(items).cloned().collect();
            (!r.is_empty()).then(|| (u.clone(), r))
        })
        .collect();
    let (hr, m) = if relevant.is_empty() {
        (None, None)
    } else {
        (Some(hit_rate_at_k(recs, &relevant, ctx.k)?), Some(mrr(recs, &relevant)?))
    };
    Ok(TierMetrics {
        tier,
        n_items: items.len(),
        n_users: relevant.len(),
        hr_at_k: hr,
        mrr: m,
    })
}

/// HR and MRR per popularity tier over `users`. A user counts in every tier
/// holding one of their relevant items, with relevance restricted to it.
pub fn tiered_metrics(
    model: &str,
    recs: &Recommendations,
    ctx: &EvalContext,
    train: &[InteractionRecord],
    users: &BTreeSet<String>,
) -> Result<TierReport> {
    let tiers = popularity_tiers(train, &ctx.catalog)?;
    let mut out = Vec::with_capacity(NUM_TIERS);
    for (t, items) in tiers.iter().enumerate() {
        out.push(tier_metrics((t + 1).to_string(), items, recs, ctx, users)?);
    }
    let tail: BTreeSet<String> = tiers[2..].iter().flatten().cloned().collect();
    let long_tail = tier_metrics("3-5".into(), &tail, recs, ctx, users)?;
    Ok(TierReport {
        model: model.to_string(),
        k: ctx.k,
        tiers: out,
        long_tail,
    })
}
