use serde::{Deserialize, Serialize};

pub const OOV_TOKEN: &str = "<oov>";

/// Categorical vocabulary. Index 0 is the out-of-vocabulary slot; every
/// value not seen at build time maps there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
}

impl Vocab {
    pub fn build<'a>(values: impl IntoIterator<Item = &'a str>) -> Self {
        let mut seen: Vec<String> = values
            .into_iter()
            .filter(|v| *v != OOV_TOKEN)
            .map(str::to_string)
            .collect();
        seen.sort();
        seen.dedup();
        let mut tokens = vec![OOV_TOKEN.to_string()];
        tokens.extend(seen);
        Vocab { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, value: &str) -> usize {
        self.tokens[1..]
            .binary_search_by(|t| t.as_str().cmp(value))
            .map_or(0, |i| i + 1)
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unseen_values_share_the_oov_slot() {
        let v = Vocab::build(["se", "us", "de", "us"]);
        assert_eq!(v.len(), 4);
        assert_eq!(v.index("de"), 1);
        assert_eq!(v.index("us"), 3);
        assert_eq!(v.index("zz"), 0);
        assert_eq!(v.index(OOV_TOKEN), 0);
        assert_eq!(v.token(0), OOV_TOKEN);
    }
}
