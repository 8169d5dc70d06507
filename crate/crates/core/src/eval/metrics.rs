use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Recommendation lists are cut to this length before any metric.
pub const MAX_LIST: usize = 100;

pub type Recommendations = BTreeMap<String, Vec<String>>;
pub type Relevant = BTreeMap<String, BTreeSet<String>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Warm,
    Cold,
    All,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Segment::Warm, Segment::Cold, Segment::All];

    pub fn name(self) -> &'static str {
        match self {
            Segment::Warm => "warm",
            Segment::Cold => "cold",
            Segment::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub segment: Segment,
    pub k: usize,
    pub hr_at_k: f64,
    pub mrr: f64,
    pub coverage: f64,
    pub n_users: usize,
}

fn check(relevant: &Relevant) -> Result<()> {
    if relevant.is_empty() {
        return Err(Error::Empty("no users to evaluate".into()));
    }
    if let Some((u, _)) = relevant.iter().find(|(_, r)| r.is_empty()) {
        return Err(Error::Invalid(format!("user {u} has no relevant items")));
    }
    Ok(())
}

fn list<'a>(recs: &'a Recommendations, user: &str) -> &'a [String] {
    let l = recs.get(user).map_or(&[][..], |v| v.as_slice());
    &l[..l.len().min(MAX_LIST)]
}

/// Fraction of users with a relevant item among their first `k`.
pub fn hit_rate_at_k(recs: &Recommendations, relevant: &Relevant, k: usize) -> Result<f64> {
    check(relevant)?;
    let hits = relevant
        .iter()
        .filter(|(u, rel)| list(recs, u).iter().take(k).any(|i| rel.contains(i)))
        .count();
    Ok(hits as f64 / relevant.len() as f64)
}

/// Mean reciprocal rank of each user's first relevant item; 0 when none
/// is in the top 100.
pub fn mrr(recs: &Recommendations, relevant: &Relevant) -> Result<f64> {
    check(relevant)?;
    let sum: f64 = relevant
        .iter()
        .map(|(u, rel)| {
            list(recs, u)
                .iter()
                .position(|i| rel.contains(i))
                .map_or(0.0, |r| 1.0 / (r + 1) as f64)
        })
        .sum();
    Ok(sum / relevant.len() as f64)
}

/// Share of `catalog` that appears in at least one list.
pub fn coverage(recs: &Recommendations, catalog: &BTreeSet<String>) -> f64 {
    if catalog.is_empty() {
        return 0.0;
    }
    let shown: BTreeSet<&String> = recs
        .values()
        .flat_map(|l| l.iter().take(MAX_LIST))
        .filter(|i| catalog.contains(*i))
        .collect();
    shown.len() as f64 / catalog.len() as f64
}
