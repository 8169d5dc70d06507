//! Exhaustive maximum-dot-product retrieval.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};

const MAGIC: &[u8; 8] = b"RECINDEX";
const VERSION: u32 = 1;
const UNIT_TOLERANCE: f64 = 1e-6;

/// Item vectors in ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct RecIndex {
    ids: Vec<String>,
    vectors: Matrix,
}

/// Builds an index of unit-norm vectors.
pub fn build_index(vectors: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<RecIndex> {
    let index = build_raw_index(vectors)?;
    for (i, id) in index.ids.iter().enumerate() {
        let n = norm(index.vectors.row(i));
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::Invalid(format!("vector of {id} has norm {n}, expected 1")));
        }
    }
    Ok(index)
}

/// Builds an index without the unit-norm check.
pub fn build_raw_index(vectors: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<RecIndex> {
    let mut entries: Vec<(String, Vec<f64>)> = vectors.into_iter().collect();
    if entries.is_empty() {
        return Err(Error::Empty("cannot build an index from no vectors".into()));
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    for w in entries.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::Invalid(format!("duplicate item id {} in index", w[0].0)));
        }
    }
    let dim = entries[0].1.len();
    let mut data = Vec::with_capacity(entries.len() * dim);
    let mut ids = Vec::with_capacity(entries.len());
    for (id, v) in entries {
        if v.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: v.len(),
                context: format!("index vector of {id}"),
            });
        }
        data.extend_from_slice(&v);
        ids.push(id);
    }
    Ok(RecIndex {
        vectors: Matrix::from_vec(ids.len(), dim, data),
        ids,
    })
}

impl RecIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, id: &str) -> Option<&[f64]> {
        self.position(id).map(|i| self.vectors.row(i))
    }

    fn position(&self, id: &str) -> Option<usize> {
        self.ids.binary_search_by(|x| x.as_str().cmp(id)).ok()
    }

    /// The `k` highest-scoring items not in `exclude`, by descending dot
    /// product with ties in ascending id order.
    pub fn query_topk(&self, query: &[f64], k: usize, exclude: &BTreeSet<String>) -> Result<Vec<(String, f64)>> {
        if query.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: query.len(),
                context: "query vector".into(),
            });
        }
        let mut skip = vec![false; self.len()];
        for id in exclude {
            if let Some(i) = self.position(id) {
                skip[i] = true;
            }
        }
        let mut scored: Vec<(f64, usize)> = (0..self.len())
            .filter(|&i| !skip[i])
            .map(|i| (dot(query, self.vectors.row(i)), i))
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
        if k == 0 {
            return Ok(Vec::new());
        }
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, order);
            scored.truncate(k);
        }
        scored.sort_by(order);
        Ok(scored
            .into_iter()
            .map(|(s, i)| (self.ids[i].clone(), s))
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + self.vectors.data.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim() as u64).to_le_bytes());
        for id in &self.ids {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        for v in &self.vectors.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Serde(format!("index file: {m}"));
        let mut at = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes.get(at..at + n).ok_or_else(|| bad("truncated"))?;
            at += n;
            Ok(s)
        };
        if take(8)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let count = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let dim = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let mut ids = Vec::with_capacity(count);
        for _ in 0..count {
            let len = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
            let id = std::str::from_utf8(take(len)?).map_err(|_| bad("id is not utf-8"))?;
            ids.push(id.to_string());
        }
        let mut data = Vec::with_capacity(count * dim);
        for _ in 0..count * dim {
            data.push(f64::from_le_bytes(take(8)?.try_into().expect("8 bytes")));
        }
        if at != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(RecIndex {
            ids,
            vectors: Matrix::from_vec(count, dim, data),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        RecIndex::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy() -> RecIndex {
        build_index([
            ("C".to_string(), vec![0.6, 0.8]),
            ("A".to_string(), vec![1.0, 0.0]),
            ("B".to_string(), vec![0.0, 1.0]),
        ])
        .unwrap()
    }

    #[test]
    fn ids_are_sorted() {
        assert_eq!(toy().ids(), ["A", "B", "C"]);
    }

    #[test]
    fn top_two() {
        let got = toy().query_topk(&[1.0, 0.0], 2, &BTreeSet::new()).unwrap();
        assert_eq!(got, vec![("A".into(), 1.0), ("C".into(), 0.6)]);
    }

    #[test]
    fn exclusion() {
        let ex: BTreeSet<String> = ["A".to_string()].into();
        let got = toy().query_topk(&[1.0, 0.0], 2, &ex).unwrap();
        assert_eq!(got, vec![("C".into(), 0.6), ("B".into(), 0.0)]);
    }

    #[test]
    fn ties_in_id_order() {
        let idx = build_index([("z".to_string(), vec![1.0, 0.0]), ("m".to_string(), vec![1.0, 0.0])]).unwrap();
        let got = idx.query_topk(&[1.0, 0.0], 2, &BTreeSet::new()).unwrap();
        assert_eq!(got[0].0, "m");
        assert_eq!(got[1].0, "z");
    }

    #[test]
    fn build_errors() {
        assert!(build_index([("a".to_string(), vec![1.0]), ("a".to_string(), vec![1.0])]).is_err());
        assert!(build_index([("a".to_string(), vec![1.0, 0.0]), ("b".to_string(), vec![1.0])]).is_err());
        assert!(build_index([("a".to_string(), vec![2.0])]).is_err());
        assert!(build_index(Vec::<(String, Vec<f64>)>::new()).is_err());
    }

    #[test]
    fn small_index_returns_fewer_than_k() {
        assert_eq!(toy().query_topk(&[0.0, 1.0], 10, &BTreeSet::new()).unwrap().len(), 3);
    }

    #[test]
    fn file_round_trip_is_exact() {
        let idx = toy();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.bin");
        idx.save(&path).unwrap();
        let back = RecIndex::load(&path).unwrap();
        assert_eq!(back, idx);
        assert_eq!(back.to_bytes(), idx.to_bytes());
        assert_eq!(toy().to_bytes(), idx.to_bytes());
    }

    /// Full sort of every non-excluded item.
    fn reference(idx: &RecIndex, q: &[f64], k: usize, ex: &BTreeSet<String>) -> Vec<(String, f64)> {
        let mut all: Vec<(String, f64)> = idx
            .ids()
            .iter()
            .filter(|id| !ex.contains(*id))
            .map(|id| (id.clone(), dot(q, idx.vector(id).unwrap())))
            .collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    #[test]
    fn matches_full_sort_with_ties_and_exclusions() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let basis: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = norm(&v);
                v.iter().map(|x| x / n).collect()
            })
            .collect();
        let idx = build_index((0..30).map(|i| (format!("i{i:02}"), basis[rng.gen_range(0..4)].clone()))).unwrap();
        for _ in 0..1000 {
            let q: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let k = rng.gen_range(1..35);
            let ex: BTreeSet<String> = (0..rng.gen_range(0..10)).map(|_| format!("i{:02}", rng.gen_range(0..30))).collect();
            assert_eq!(idx.query_topk(&q, k, &ex).unwrap(), reference(&idx, &q, k, &ex));
        }
    }

    proptest! {
        #[test]
        fn results_are_sound(q in proptest::collection::vec(-1.0f64..1.0, 3), k in 1usize..12, ex in proptest::collection::btree_set(0usize..10, 0..6)) {
            let idx = build_index((0..10).map(|i| {
                let v = vec![(i as f64).cos(), (i as f64).sin(), 0.0];
                (format!("x{i}"), v)
            })).unwrap();
            let ex: BTreeSet<String> = ex.into_iter().map(|i| format!("x{i}")).collect();
            let got = idx.query_topk(&q, k, &ex).unwrap();
            prop_assert!(got.len() <= k);
            prop_assert!(got.iter().all(|(id, _)| !ex.contains(id)));
            prop_assert!(got.windows(2).all(|w| w[0].1 >= w[1].1));
        }
    }
}
