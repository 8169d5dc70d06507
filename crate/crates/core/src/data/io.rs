//! JSON Lines readers and writers for interactions, catalog and user profiles.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{Catalog, CatalogItem, InteractionRecord, UserProfile};
use crate::error::{Error, Result};

/// A rejected input line. `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedInteractions {
    pub records: Vec<InteractionRecord>,
    pub diagnostics: Vec<Diagnostic>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn parse_interactions(path: impl AsRef<Path>) -> Result<ParsedInteractions> {
    Ok(parse_interactions_str(&read(path.as_ref())?))
}

/// Parses interaction JSON Lines. Bad lines are skipped and reported; blank
/// lines are ignored.
pub fn parse_interactions_str(text: &str) -> ParsedInteractions {
    let mut out = ParsedInteractions::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<InteractionRecord>(line)
            .map_err(|e| e.to_string())
            .and_then(|r| r.validate().map(|_| r));
        match parsed {
            Ok(r) => out.records.push(r),
            Err(message) => out.diagnostics.push(Diagnostic {
                line: i + 1,
                message,
            }),
        }
    }
    out
}

pub fn parse_catalog(path: impl AsRef<Path>) -> Result<Catalog> {
    let path = path.as_ref();
    parse_catalog_str(&read(path)?).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}

pub fn parse_catalog_str(text: &str) -> Result<Catalog> {
    let mut items = Vec::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut dim: Option<(usize, usize)> = None;
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let item: CatalogItem = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: "<catalog>".into(),
            line: lineno,
            message: e.to_string(),
        })?;
        if let Some(&first) = seen.get(&item.item_id) {
            return Err(Error::DuplicateItem {
                id: item.item_id,
                first,
                second: lineno,
            });
        }
        match dim {
            None => dim = Some((item.content_vector.len(), lineno)),
            Some((d, first_line)) if d != item.content_vector.len() => {
                return Err(Error::Dimension {
                    expected: d,
                    got: item.content_vector.len(),
                    context: format!(
                        "content_vector at line {lineno} (dimension set at line {first_line})"
                    ),
                })
            }
            _ => {}
        }
        seen.insert(item.item_id.clone(), lineno);
        items.push(item);
    }
    Catalog::from_items(items)
}

pub fn parse_users(path: impl AsRef<Path>) -> Result<BTreeMap<String, UserProfile>> {
    let path = path.as_ref();
    let mut out = BTreeMap::new();
    for (i, line) in read(path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let u: UserProfile = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.insert(u.user_id.clone(), u);
    }
    Ok(out)
}

/// Writes one JSON document per line.
pub fn write_jsonl<'a, T, I>(path: impl AsRef<Path>, rows: I) -> Result<()>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, row)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Serializes rows to an in-memory JSON Lines string.
pub fn to_jsonl<'a, T, I>(rows: I) -> Result<String>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let mut s = String::new();
    for row in rows {
        s.push_str(&serde_json::to_string(row)?);
        s.push('\n');
    }
    Ok(s)
}
