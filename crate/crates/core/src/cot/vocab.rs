//! Closed vocabulary over the label generator's output language.

use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::sim::InstructionScenario;

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";

/// Numeric tokens cover `±NUMBER_LIMIT` hundredths.
pub const NUMBER_LIMIT: i64 = 320;

const PUNCTUATION: [&str; 8] = [":", ",", ".", ";", "(", ")", " ", "\n"];

const TEMPLATE_WORDS: [&str; 15] = [
    "scene", "nothing", "feedback", "all", "available", "missing", "suggest", "add", "plan", "grasp", "none",
    "objects", "at", "frame", "state",
];

/// Formats a value binned to 0.01 as its numeric token, e.g. `-0.07`.
/// Values beyond the table are clamped.
pub fn number_token(x: f64) -> String {
    let n = ((x * 100.0).round() as i64).clamp(-NUMBER_LIMIT, NUMBER_LIMIT);
    cents_token(n)
}

fn cents_token(n: i64) -> String {
    let sign = if n < 0 { "-" } else { "" };
    let a = n.abs();
    format!("{sign}{}.{:02}", a / 100, a % 100)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenVocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
    longest: usize,
}

impl TokenVocab {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::Parse { what: "vocabulary".into(), detail: format!("empty token at {i}") });
            }
            if ids.insert(t.clone(), i).is_some() {
                return Err(Error::Parse { what: "vocabulary".into(), detail: format!("duplicate token {t:?}") });
            }
        }
        for s in [PAD, BOS, EOS] {
            if !ids.contains_key(s) {
                return Err(Error::Parse { what: "vocabulary".into(), detail: format!("missing {s}") });
            }
        }
        let longest = tokens.iter().map(String::len).max().unwrap_or(0);
        Ok(Self { tokens, ids, longest })
    }

    /// Vocabulary covering every label the given scenarios can produce.
    pub fn for_scenarios(scenarios: &[InstructionScenario]) -> Self {
        let mut tokens: Vec<String> = [PAD, BOS, EOS].iter().map(|s| s.to_string()).collect();
        tokens.extend(PUNCTUATION.iter().map(|s| s.to_string()));
        tokens.extend(TEMPLATE_WORDS.iter().map(|s| s.to_string()));
        for sc in scenarios {
            for w in sc.universe.iter().chain(std::iter::once(&sc.item_noun)) {
                if !tokens.contains(w) {
                    tokens.push(w.clone());
                }
            }
        }
        tokens.extend((0..10).map(|d| d.to_string()));
        tokens.extend((-NUMBER_LIMIT..=NUMBER_LIMIT).map(cents_token));
        Self::from_tokens(tokens).expect("built-in vocabulary is well formed")
    }

    pub fn standard() -> Self {
        Self::for_scenarios(&crate::sim::scenarios())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens.get(id).map(String::as_str).ok_or(Error::UnknownTokenId(id))
    }

    pub fn pad(&self) -> usize {
        self.ids[PAD]
    }

    pub fn bos(&self) -> usize {
        self.ids[BOS]
    }

    pub fn eos(&self) -> usize {
        self.ids[EOS]
    }

    /// Greedy longest-match segmentation.
    pub fn tokenize(&self, text: &str) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < text.len() {
            let rest = &text[pos..];
            let mut len = self.longest.min(rest.len());
            let found = loop {
                if len == 0 {
                    break None;
                }
                if rest.is_char_boundary(len) {
                    if let Some(&id) = self.ids.get(&rest[..len]) {
                        break Some(id);
                    }
                }
                len -= 1;
            };
            match found {
                Some(id) => {
                    out.push(id);
                    pos += len;
                }
                None => {
                    let fragment: String = rest.chars().take(8).collect();
                    return Err(Error::UnknownToken { position: pos, fragment });
                }
            }
        }
        Ok(out)
    }

    pub fn detokenize(&self, ids: &[usize]) -> Result<String> {
        let mut s = String::new();
        for &id in ids {
            s.push_str(self.token(id)?);
        }
        Ok(s)
    }
}

impl Serialize for TokenVocab {
    fn serialize<Ser: Serializer>(&self, s: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for TokenVocab {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let tokens = Vec::<String>::deserialize(d)?;
        Self::from_tokens(tokens).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bijective_and_small() {
        let v = TokenVocab::standard();
        assert!(v.len() < 2048);
        for (i, t) in v.tokens().iter().enumerate() {
            assert_eq!(v.id(t), Some(i));
        }
    }

    #[test]
    fn number_bins() {
        assert_eq!(number_token(0.614), "0.61");
        assert_eq!(number_token(-0.004), "0.00");
        assert_eq!(number_token(-0.07), "-0.07");
        assert_eq!(number_token(1.05), "1.05");
        assert_eq!(number_token(9.0), "3.20");
    }

    #[test]
    fn empty_and_unknown() {
        let v = TokenVocab::standard();
        assert_eq!(v.tokenize("").unwrap(), Vec::<usize>::new());
        assert_eq!(v.detokenize(&[]).unwrap(), "");
        assert!(matches!(v.tokenize("scene: egg!"), Err(Error::UnknownToken { position: 10, .. })));
        assert!(matches!(v.detokenize(&[v.len()]), Err(Error::UnknownTokenId(_))));
    }

    #[test]
    fn numbers_are_single_tokens() {
        let v = TokenVocab::standard();
        let ids = v.tokenize("(0.61, -1.20, 0.78)").unwrap();
        assert_eq!(ids.len(), 9);
        assert_eq!(v.detokenize(&ids).unwrap(), "(0.61, -1.20, 0.78)");
    }

    #[test]
    fn json_is_ordered_list() {
        let v = TokenVocab::standard();
        let s = serde_json::to_string(&v).unwrap();
        assert!(s.starts_with(r#"["<pad>","<bos>","<eos>",":""#));
        let back: TokenVocab = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
        assert!(serde_json::from_str::<TokenVocab>(r#"["<pad>","<bos>","<eos>","a","a"]"#).is_err());
    }
}
