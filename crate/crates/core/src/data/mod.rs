//! Interaction and catalog contracts, file formats, the timeline split and
//! the synthetic generator.

pub mod io;
pub mod split;
pub mod synth;
pub mod types;

pub use io::{parse_catalog, parse_interactions, parse_users, Diagnostic, ParsedInteractions};
pub use split::{default_split_time, timeline_split, user_segments, DatasetSplit, UserSegments};
pub use synth::{synth_generate, SynthConfig, SynthDataset};
pub use types::{Catalog, CatalogItem, InteractionRecord, ItemType, Signal, UserProfile, SECONDS_PER_DAY};
