use std::collections::{BTreeMap, BTreeSet};

use super::metrics::{coverage, hit_rate_at_k, mrr, MetricsReport, Recommendations, Relevant, Segment, MAX_LIST};
use super::recommenders::Recommender;
use crate::data::{Catalog, DatasetSplit, ItemType, Signal, UserSegments};
use crate::error::{Error, Result};

/// Everything about the holdout a recommender is scored against.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub k: usize,
    pub target: ItemType,
    /// Holdout streams of the target type per user; users without any are
    /// absent.
    pub relevant: Relevant,
    /// Target-type items each user streamed in train.
    pub consumed: BTreeMap<String, BTreeSet<String>>,
    pub segments: UserSegments,
    /// Every target-type catalog item.
    pub catalog: BTreeSet<String>,
}

impl EvalContext {
    pub fn new(split: &DatasetSplit, segments: &UserSegments, catalog: &Catalog, target: ItemType, k: usize) -> Self {
        let mut relevant: Relevant = BTreeMap::new();
        for r in &split.holdout {
            if r.signal == Signal::Stream && r.item_type == target {
                relevant.entry(r.user_id.clone()).or_default().insert(r.item_id.clone());
            }
        }
        let mut consumed: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for r in &split.train {
            if r.signal == Signal::Stream && r.item_type == target {
                consumed.entry(r.user_id.clone()).or_default().insert(r.item_id.clone());
            }
        }
        EvalContext {
            k,
            target,
            relevant,
            consumed,
            segments: segments.clone(),
            catalog: catalog.ids_of_type(target).into_iter().map(str::to_string).collect(),
        }
    }

    pub fn users(&self) -> impl Iterator<Item = &String> {
        self.relevant.keys()
    }

    fn segment_users(&self, segment: Segment) -> BTreeSet<&String> {
        self.relevant
            .keys()
            .filter(|u| match segment {
                Segment::Warm => self.segments.warm.contains(*u),
                Segment::Cold => self.segments.cold.contains(*u),
                Segment::All => true,
            })
            .collect()
    }
}

/// Top-100 lists for every evaluable user, train-consumed items removed.
pub fn recommend_all(rec: &dyn Recommender, ctx: &EvalContext) -> Result<Recommendations> {
    let empty = BTreeSet::new();
    ctx.users()
        .map(|u| {
            let exclude = ctx.consumed.get(u).unwrap_or(&empty);
            let list = rec.recommend(u, MAX_LIST, exclude)?;
            Ok((u.clone(), list))
        })
        .collect()
}

/// Scores precomputed lists per segment. Empty segments are skipped.
pub fn evaluate_lists(model: &str, recs: &Recommendations, ctx: &EvalContext) -> Result<Vec<MetricsReport>> {
    let mut out = Vec::new();
    for segment in Segment::ALL {
        let users = ctx.segment_users(segment);
        if users.is_empty() {
            if segment == Segment::All {
                return Err(Error::Empty("no evaluable users in the holdout".into()));
            }
            continue;
        }
        let relevant: Relevant = users.iter().map(|u| ((*u).clone(), ctx.relevant[*u].clone())).collect();
        let lists: Recommendations = users
            .iter()
            .filter_map(|u| recs.get(*u).map(|l| ((*u).clone(), l.clone())))
            .collect();
        out.push(MetricsReport {
            model: model.to_string(),
            segment,
            k: ctx.k,
            hr_at_k: hit_rate_at_k(&lists, &relevant, ctx.k)?,
            mrr: mrr(&lists, &relevant)?,
            coverage: coverage(&lists, &ctx.catalog),
            n_users: relevant.len(),
        });
    }
    Ok(out)
}

pub fn evaluate(rec: &dyn Recommender, ctx: &EvalContext) -> Result<Vec<MetricsReport>> {
    let recs = recommend_all(rec, ctx)?;
    evaluate_lists(rec.name(), &recs, ctx)
}
