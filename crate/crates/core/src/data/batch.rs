use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{SentenceRecord, Vocabulary, PAD, RESERVED};
use crate::error::invalid;
use crate::Result;

/// A sentence mapped to ids. `labels` holds probe class indices, i.e. label
/// vocabulary ids with the reserved block removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSentence {
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
    pub labels: Vec<usize>,
}

impl EncodedSentence {
    pub fn encode(
        record: &SentenceRecord,
        src: &Vocabulary,
        tgt: &Vocabulary,
        labels: &Vocabulary,
    ) -> Result<Self> {
        record.validate()?;
        let classes = record
            .labels
            .iter()
            .map(|l| {
                labels
                    .id(l)
                    .checked_sub(RESERVED)
                    .ok_or_else(|| invalid(format!("unknown label {l}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            src: src.encode(&record.src),
            tgt: tgt.encode(&record.tgt),
            labels: classes,
        })
    }
}

/// Right-padded id matrices for a group of sentences. Masks are `true` on
/// real tokens; labels share the source positions and mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub src: Vec<Vec<usize>>,
    pub src_mask: Vec<Vec<bool>>,
    pub tgt: Vec<Vec<usize>>,
    pub tgt_mask: Vec<Vec<bool>>,
    pub labels: Vec<Vec<usize>>,
}

fn pad(rows: &[&[usize]]) -> (Vec<Vec<usize>>, Vec<Vec<bool>>) {
    let width = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let ids = rows
        .iter()
        .map(|r| {
            let mut v = r.to_vec();
            v.resize(width, PAD);
            v
        })
        .collect();
    let mask = rows
        .iter()
        .map(|r| {
            let mut m = vec![true; r.len()];
            m.resize(width, false);
            m
        })
        .collect();
    (ids, mask)
}

impl Batch {
    pub fn new(sentences: &[&EncodedSentence]) -> Self {
        let (src, src_mask) = pad(&sentences.iter().map(|s| s.src.as_slice()).collect::<Vec<_>>());
        let (tgt, tgt_mask) = pad(&sentences.iter().map(|s| s.tgt.as_slice()).collect::<Vec<_>>());
        let (labels, _) = pad(&sentences.iter().map(|s| s.labels.as_slice()).collect::<Vec<_>>());
        Self {
            src,
            src_mask,
            tgt,
            tgt_mask,
            labels,
        }
    }

    pub fn size(&self) -> usize {
        self.src.len()
    }

    pub fn src_width(&self) -> usize {
        self.src.first().map_or(0, Vec::len)
    }

    pub fn tgt_width(&self) -> usize {
        self.tgt.first().map_or(0, Vec::len)
    }

    pub fn src_tokens(&self) -> usize {
        self.src_mask.iter().flatten().filter(|m| **m).count()
    }

    pub fn tgt_tokens(&self) -> usize {
        self.tgt_mask.iter().flatten().filter(|m| **m).count()
    }

    /// Source ids at position `t` across the batch.
    pub fn src_column(&self, t: usize) -> Vec<usize> {
        self.src.iter().map(|r| r[t]).collect()
    }
}

/// Splits `sentences` into consecutive batches of at most `batch_size`.
pub fn batchify(sentences: &[EncodedSentence], batch_size: usize) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(invalid("batch size must be positive"));
    }
    Ok(sentences
        .chunks(batch_size)
        .map(|c| Batch::new(&c.iter().collect::<Vec<_>>()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(n: usize) -> EncodedSentence {
        EncodedSentence {
            src: (0..n).map(|i| 4 + i).collect(),
            tgt: (0..n).map(|i| 4 + i).collect(),
            labels: vec![0; n],
        }
    }

    #[test]
    fn pads_to_widest() {
        let b = batchify(&[sent(3), sent(5)], 2).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].src_width(), 5);
        let sums: Vec<usize> = b[0]
            .src_mask
            .iter()
            .map(|r| r.iter().filter(|m| **m).count())
            .collect();
        assert_eq!(sums, vec![3, 5]);
        assert_eq!(b[0].src[0][3], PAD);
    }

    #[test]
    fn singletons_need_no_padding() {
        for b in batchify(&[sent(3), sent(5), sent(2)], 1).unwrap() {
            assert!(b.src_mask.iter().flatten().all(|m| *m));
        }
    }

    #[test]
    fn token_conservation() {
        let corpus: Vec<_> = (1..20).map(sent).collect();
        let total: usize = corpus.iter().map(|s| s.src.len()).sum();
        let batched: usize = batchify(&corpus, 4).unwrap().iter().map(Batch::src_tokens).sum();
        assert_eq!(total, batched);
        assert!(batchify(&corpus, 0).is_err());
    }
}
