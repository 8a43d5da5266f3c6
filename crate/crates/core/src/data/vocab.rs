use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::SentenceRecord;

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
/// Number of reserved ids at the front of every vocabulary.
pub const RESERVED: usize = 4;

const RESERVED_TOKENS: [&str; RESERVED] = ["<pad>", "<bos>", "<eos>", "<unk>"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Src,
    Tgt,
    Labels,
}

/// Token/id bijection with reserved ids `pad=0, bos=1, eos=2, unk=3`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    ids: BTreeMap<String, usize>,
    tokens: Vec<String>,
}

impl Vocabulary {
    /// Vocabulary from content tokens in the given id order.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Self {
            ids: BTreeMap::new(),
            tokens: RESERVED_TOKENS.iter().map(|s| s.to_string()).collect(),
        };
        for (i, t) in v.tokens.iter().enumerate() {
            v.ids.insert(t.clone(), i);
        }
        for t in tokens {
            let t = t.into();
            if !v.ids.contains_key(&t) {
                v.ids.insert(t.clone(), v.tokens.len());
                v.tokens.push(t);
            }
        }
        v
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of non-reserved entries.
    pub fn content_len(&self) -> usize {
        self.tokens.len() - RESERVED
    }

    /// Id of `token`, or [`UNK`] when unseen.
    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Content tokens in id order.
    pub fn content_tokens(&self) -> &[String] {
        &self.tokens[RESERVED..]
    }
}

/// Vocabulary of one side of a corpus, ordered by descending frequency
/// and then by token.
pub fn build_vocab(corpus: &[SentenceRecord], side: Side) -> Vocabulary {
    build_vocab_min_count(corpus, side, 1)
}

/// Like [`build_vocab`], leaving out tokens seen fewer than `min_count`
/// times so they encode as [`UNK`].
pub fn build_vocab_min_count(corpus: &[SentenceRecord], side: Side, min_count: usize) -> Vocabulary {
    let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
    for r in corpus {
        let toks = match side {
            Side::Src => &r.src,
            Side::Tgt => &r.tgt,
            Side::Labels => &r.labels,
        };
        for t in toks {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut entries: Vec<(&str, usize)> = freq.into_iter().filter(|&(_, c)| c >= min_count).collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    Vocabulary::from_tokens(entries.into_iter().map(|(t, _)| t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rec(src: &[&str]) -> SentenceRecord {
        SentenceRecord {
            src: src.iter().map(|s| s.to_string()).collect(),
            tgt: src.iter().map(|s| s.to_string()).collect(),
            labels: src.iter().map(|_| "X".to_string()).collect(),
        }
    }

    #[test]
    fn frequency_then_lexical_order() {
        let v = build_vocab(&[rec(&["b", "a", "a", "c"])], Side::Src);
        assert_eq!(v.content_tokens(), &["a", "b", "c"]);
        assert!(v.id("a") < v.id("b"));
        assert_eq!(v.id("a"), RESERVED);
    }

    #[test]
    fn unseen_is_unk_and_reserved_fixed() {
        let v = build_vocab(&[rec(&["a"])], Side::Src);
        assert_eq!(v.id("zzz"), UNK);
        assert_eq!(v.id("<pad>"), PAD);
        assert_eq!(v.token(BOS), Some("<bos>"));
        assert_eq!(v.token(EOS), Some("<eos>"));
        assert_eq!(v.encode(&["a", "q"]), vec![4, UNK]);
    }

    #[test]
    fn min_count_drops_rare_tokens() {
        let v = build_vocab_min_count(&[rec(&["a", "b", "a", "c", "c"])], Side::Src, 2);
        assert_eq!(v.content_tokens(), &["a", "c"]);
        assert_eq!(v.id("b"), UNK);
    }

    #[test]
    fn label_side_of_default_grammar() {
        let corpus = crate::data::GrammarConfig::default_grammar(2).generate(200).unwrap();
        let v = build_vocab(&corpus, Side::Labels);
        assert_eq!(v.len(), 4 + RESERVED);
        assert_eq!(v.content_len(), 4);
    }
}
