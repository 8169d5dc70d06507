use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::types::{InteractionRecord, ItemType, SECONDS_PER_DAY};
use crate::error::{Error, Result};

pub const DEFAULT_HOLDOUT_DAYS: i64 = 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<InteractionRecord>,
    pub holdout: Vec<InteractionRecord>,
    pub split_time: i64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// `max timestamp − holdout_days`.
pub fn default_split_time(records: &[InteractionRecord], holdout_days: i64) -> Option<i64> {
    records
        .iter()
        .map(|r| r.timestamp)
        .max()
        .map(|m| m - holdout_days * SECONDS_PER_DAY)
}

/// Global-timeline split: `timestamp < split_time` goes to train, the rest
/// to holdout. Input order is preserved within each side.
pub fn timeline_split(records: &[InteractionRecord], split_time: Option<i64>) -> Result<DatasetSplit> {
    if records.is_empty() {
        return Err(Error::Empty("timeline_split needs at least one record".into()));
    }
    let split_time = split_time
        .or_else(|| default_split_time(records, DEFAULT_HOLDOUT_DAYS))
        .expect("nonempty");
    let (train, holdout): (Vec<_>, Vec<_>) = records
        .iter()
        .cloned()
        .partition(|r| r.timestamp < split_time);

    let mut warnings = Vec::new();
    if holdout.is_empty() {
        warnings.push(format!(
            "split_time {split_time} is after every record; holdout is empty"
        ));
    }
    if train.is_empty() {
        warnings.push(format!(
            "split_time {split_time} is at or before every record; train is empty"
        ));
    }
    Ok(DatasetSplit {
        train,
        holdout,
        split_time,
        warnings,
    })
}

impl DatasetSplit {
    /// Drops train records older than `days` before the split time.
    pub fn truncate_train_window(&mut self, days: i64) {
        let start = self.split_time - days * SECONDS_PER_DAY;
        self.train.retain(|r| r.timestamp >= start);
    }

    /// Train records inside the trailing `days` window before the split.
    pub fn train_window(&self, days: i64) -> impl Iterator<Item = &InteractionRecord> {
        let start = self.split_time - days * SECONDS_PER_DAY;
        self.train.iter().filter(move |r| r.timestamp >= start)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSegments {
    pub warm: BTreeSet<String>,
    pub cold: BTreeSet<String>,
}

impl UserSegments {
    pub fn all(&self) -> BTreeSet<String> {
        self.warm.union(&self.cold).cloned().collect()
    }
}

/// Splits the holdout users into warm (any audiobook signal in train) and
/// cold. Users seen only in train belong to neither.
pub fn user_segments(split: &DatasetSplit) -> UserSegments {
    let warm_in_train: BTreeSet<&str> = split
        .train
        .iter()
        .filter(|r| r.item_type == ItemType::Audiobook)
        .map(|r| r.user_id.as_str())
        .collect();
    let mut seg = UserSegments::default();
    for r in &split.holdout {
        if warm_in_train.contains(r.user_id.as_str()) {
            seg.warm.insert(r.user_id.clone());
        } else {
            seg.cold.insert(r.user_id.clone());
        }
    }
    seg
}
