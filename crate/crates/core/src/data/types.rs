use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemType {
    Audiobook,
    Podcast,
}

impl ItemType {
    pub const ALL: [ItemType; 2] = [ItemType::Audiobook, ItemType::Podcast];

    /// Dense index used for per-type tables (audiobook 0, podcast 1).
    #[inline]
    pub fn index(self) -> usize {
        match self {
            ItemType::Audiobook => 0,
            ItemType::Podcast => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ItemType::Audiobook => "audiobook",
            ItemType::Podcast => "podcast",
        }
    }
}

impl fmt::Display for ItemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ItemType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "audiobook" => Ok(ItemType::Audiobook),
            "podcast" => Ok(ItemType::Podcast),
            other => Err(Error::Invalid(format!("unknown item type {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    Stream,
    Follow,
    Preview,
    IntentToPay,
}

impl Signal {
    pub const ALL: [Signal; 4] = [
        Signal::Stream,
        Signal::Follow,
        Signal::Preview,
        Signal::IntentToPay,
    ];
    pub const WEAK: [Signal; 3] = [Signal::Follow, Signal::Preview, Signal::IntentToPay];

    #[inline]
    pub fn index(self) -> usize {
        match self {
            Signal::Stream => 0,
            Signal::Follow => 1,
            Signal::Preview => 2,
            Signal::IntentToPay => 3,
        }
    }

    pub fn is_weak(self) -> bool {
        self != Signal::Stream
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Signal::Stream => "stream",
            Signal::Follow => "follow",
            Signal::Preview => "preview",
            Signal::IntentToPay => "intent_to_pay",
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub user_id: String,
    pub item_id: String,
    pub item_type: ItemType,
    pub signal: Signal,
    pub timestamp: i64,
}

impl InteractionRecord {
    pub fn new(
        user_id: impl Into<String>,
        item_id: impl Into<String>,
        item_type: ItemType,
        signal: Signal,
        timestamp: i64,
    ) -> Self {
        InteractionRecord {
            user_id: user_id.into(),
            item_id: item_id.into(),
            item_type,
            signal,
            timestamp,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.timestamp < 0 {
            return Err(format!("negative timestamp {}", self.timestamp));
        }
        if self.signal.is_weak() && self.item_type != ItemType::Audiobook {
            return Err(format!(
                "signal {} is only valid for audiobooks, got {}",
                self.signal, self.item_type
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogItem {
    pub item_id: String,
    pub item_type: ItemType,
    pub content_vector: Vec<f64>,
    pub language: String,
    pub genre: String,
}

/// Item metadata keyed by id. All content vectors share one dimension.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    items: BTreeMap<String, CatalogItem>,
    dim: usize,
}

impl Catalog {
    pub fn from_items(items: impl IntoIterator<Item = CatalogItem>) -> Result<Self> {
        let mut map = BTreeMap::new();
        let mut dim = None;
        for (i, item) in items.into_iter().enumerate() {
            let d = *dim.get_or_insert(item.content_vector.len());
            if item.content_vector.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    got: item.content_vector.len(),
                    context: format!("content_vector of {}", item.item_id),
                });
            }
            if item.content_vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!(
                    "non-finite content_vector entry for {}",
                    item.item_id
                )));
            }
            if map.contains_key(&item.item_id) {
                let first = map.keys().position(|k| k == &item.item_id).unwrap_or(0) + 1;
                return Err(Error::DuplicateItem {
                    id: item.item_id,
                    first,
                    second: i + 1,
                });
            }
            map.insert(item.item_id.clone(), item);
        }
        Ok(Catalog {
            items: map,
            dim: dim.unwrap_or(0),
        })
    }

    /// Content-vector dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&CatalogItem> {
        self.items.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.items.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CatalogItem> {
        self.items.values()
    }

    /// Ids of one type in lexicographic order.
    pub fn ids_of_type(&self, ty: ItemType) -> Vec<&str> {
        self.items
            .values()
            .filter(|c| c.item_type == ty)
            .map(|c| c.item_id.as_str())
            .collect()
    }

    pub fn count_of_type(&self, ty: ItemType) -> usize {
        self.items.values().filter(|c| c.item_type == ty).count()
    }

    pub fn items(&self) -> &BTreeMap<String, CatalogItem> {
        &self.items
    }
}

/// Per-user side information for the user tower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub country: String,
    pub age_bucket: String,
    #[serde(default)]
    pub music_vector: Vec<f64>,
}
