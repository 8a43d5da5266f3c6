//! Synthetic tagged parallel corpora, vocabularies and padded batches.

mod batch;
mod grammar;
mod vocab;

use alloc::string::String;
use alloc::vec::Vec;

pub use batch::{batchify, Batch, EncodedSentence};
pub use grammar::{generate_corpus, GrammarConfig, LabelWords};
pub(crate) use grammar::entropy_of_counts;
pub use vocab::{build_vocab, build_vocab_min_count, Side, Vocabulary, BOS, EOS, PAD, RESERVED, UNK};

use crate::error::invalid;
use crate::Result;

/// One sentence pair with a label for every source token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceRecord {
    pub src: Vec<String>,
    pub tgt: Vec<String>,
    pub labels: Vec<String>,
}

impl SentenceRecord {
    pub fn validate(&self) -> Result<()> {
        if self.src.is_empty() || self.tgt.is_empty() {
            return Err(invalid("sentence with an empty side"));
        }
        if self.labels.len() != self.src.len() {
            return Err(invalid(alloc::format!(
                "{} labels for {} source tokens",
                self.labels.len(),
                self.src.len()
            )));
        }
        Ok(())
    }
}

/// Source-token count of a corpus.
pub fn token_count(corpus: &[SentenceRecord]) -> usize {
    corpus.iter().map(|r| r.src.len()).sum()
}
