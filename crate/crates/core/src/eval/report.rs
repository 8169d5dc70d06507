use std::path::Path;

use serde::Serialize;

use super::metrics::MetricsReport;
use crate::error::{Error, Result};

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_json(value)?).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    model: &'a str,
    segment: &'a str,
    k: usize,
    hr_at_k: f64,
    mrr: f64,
    coverage: f64,
    n_users: usize,
    config_hash: &'a str,
}

/// One row per (model, segment).
pub fn metrics_csv(rows: &[MetricsReport], config_hash: &str) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(CsvRow {
            model: &r.model,
            segment: r.segment.name(),
            k: r.k,
            hr_at_k: r.hr_at_k,
            mrr: r.mrr,
            coverage: r.coverage,
            n_users: r.n_users,
            config_hash,
        })
        .map_err(|e| Error::Serde(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[MetricsReport], config_hash: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, metrics_csv(rows, config_hash)?).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::metrics::Segment;

    #[test]
    fn csv_has_header_and_rows() {
        let rows = vec![MetricsReport {
            model: "popularity".into(),
            segment: Segment::Warm,
            k: 10,
            hr_at_k: 0.25,
            mrr: 0.1,
            coverage: 0.5,
            n_users: 40,
        }];
        let s = metrics_csv(&rows, "abc").unwrap();
        assert_eq!(
            s,
            "model,segment,k,hr_at_k,mrr,coverage,n_users,config_hash\npopularity,warm,10,0.25,0.1,0.5,40,abc\n"
        );
    }
}
