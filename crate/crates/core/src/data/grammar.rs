use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SentenceRecord;
use crate::error::invalid;
use crate::math;
use crate::Result;

/// A label together with the source words that carry it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelWords {
    pub label: String,
    pub words: Vec<String>,
}

/// Template grammar for a synthetic parallel corpus with gold token labels.
///
/// Source sentences fill a template (a sequence of label slots) with random
/// words of each slot's label. The target is the word-by-word lexicon
/// translation, after moving every `modifier` in front of a `head` behind
/// that head and then moving every `final_label` word to the end.
///
/// With probability `rare_rate` a slot is instead filled with a freshly
/// coined word of the slot's label. Coined words come from a space large
/// enough that almost all of them occur once, so a frequency-thresholded
/// vocabulary maps them to the unknown token while their labels stay gold.
#[derive(Debug, Clone, PartialEq)]
pub struct GrammarConfig {
    pub labels: Vec<LabelWords>,
    pub templates: Vec<Vec<String>>,
    pub lexicon: BTreeMap<String, String>,
    pub min_len: usize,
    pub max_len: usize,
    pub final_label: Option<String>,
    /// `(modifier, head)`.
    pub postpose: Option<(String, String)>,
    pub rare_rate: f64,
    pub seed: u64,
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

fn pseudo_word(index: usize) -> String {
    let space = CONSONANTS.len() * VOWELS.len() * CONSONANTS.len() * VOWELS.len();
    // 37 is coprime with the space size, so the map is injective.
    let mut k = (index * 37 + 11) % space;
    let mut s = String::with_capacity(4);
    for radix in [CONSONANTS, VOWELS, CONSONANTS, VOWELS] {
        s.push(radix[k % radix.len()] as char);
        k /= radix.len();
    }
    s
}

const RARE_SPACE: usize = 14 * 5 * 14 * 5 * 14 * 5;
const RARE_SHAPE: [&[u8]; 6] = [CONSONANTS, VOWELS, CONSONANTS, VOWELS, CONSONANTS, VOWELS];

/// Six-letter word number `index` of the coined-word space.
fn rare_word(index: usize) -> String {
    let mut k = index;
    let mut s = String::with_capacity(6);
    for radix in RARE_SHAPE {
        s.push(radix[k % radix.len()] as char);
        k /= radix.len();
    }
    s
}

fn rare_index(word: &str) -> Option<usize> {
    let bytes = word.as_bytes();
    if bytes.len() != RARE_SHAPE.len() {
        return None;
    }
    let mut k = 0;
    for (b, radix) in bytes.iter().zip(RARE_SHAPE).rev() {
        k = k * radix.len() + radix.iter().position(|c| c == b)?;
    }
    Some(k)
}

fn translate_word(word: &str) -> String {
    let mut out: String = word
        .bytes()
        .map(|b| {
            if let Some(i) = CONSONANTS.iter().position(|&c| c == b) {
                CONSONANTS[(i + 5) % CONSONANTS.len()] as char
            } else if let Some(i) = VOWELS.iter().position(|&c| c == b) {
                VOWELS[(i + 2) % VOWELS.len()] as char
            } else {
                b as char
            }
        })
        .collect();
    out.push('n');
    out
}

impl GrammarConfig {
    /// Four labels {N, V, ADJ, DET} with 40 words each, 12 templates of
    /// length 4 to 10, verb-final target order and adjectives placed after
    /// their noun. Half of all slots hold coined rare words.
    pub fn default_grammar(seed: u64) -> Self {
        let names = ["N", "V", "ADJ", "DET"];
        let mut labels = Vec::new();
        let mut lexicon = BTreeMap::new();
        for (li, name) in names.iter().enumerate() {
            let words: Vec<String> = (0..40).map(|i| pseudo_word(li * 40 + i)).collect();
            for w in &words {
                lexicon.insert(w.clone(), translate_word(w));
            }
            labels.push(LabelWords {
                label: name.to_string(),
                words,
            });
        }
        let templates = [
            "DET N V DET N",
            "DET ADJ N V DET N",
            "DET N V DET ADJ N",
            "N V DET N",
            "DET ADJ N V",
            "DET ADJ ADJ N V DET N",
            "N V DET ADJ N",
            "DET N V N",
            "DET ADJ N V DET ADJ N",
            "DET N V DET ADJ ADJ N",
            "N V DET ADJ N V DET N",
            "DET ADJ N V DET ADJ N V DET N",
        ]
        .iter()
        .map(|t| t.split_whitespace().map(String::from).collect())
        .collect();
        Self {
            labels,
            templates,
            lexicon,
            min_len: 4,
            max_len: 10,
            final_label: Some("V".into()),
            postpose: Some(("ADJ".into(), "N".into())),
            rare_rate: 0.5,
            seed,
        }
    }

    /// Checks the structural invariants: labels known, words unique across
    /// labels, every word translated, at least one usable template.
    pub fn validate(&self) -> Result<()> {
        if self.labels.is_empty() {
            return Err(invalid("grammar has no labels"));
        }
        let mut seen = BTreeSet::new();
        let mut names = BTreeSet::new();
        for lw in &self.labels {
            if lw.words.is_empty() {
                return Err(invalid(format!("label {} has no words", lw.label)));
            }
            if !names.insert(lw.label.as_str()) {
                return Err(invalid(format!("label {} listed twice", lw.label)));
            }
            for w in &lw.words {
                if w.is_empty() || w.chars().any(char::is_whitespace) {
                    return Err(invalid(format!("bad word {w:?} for label {}", lw.label)));
                }
                if !seen.insert(w.as_str()) {
                    return Err(invalid(format!("word {w} has more than one label")));
                }
                if !self.lexicon.contains_key(w) {
                    return Err(invalid(format!("word {w} has no translation")));
                }
            }
        }
        if self.templates.is_empty() {
            return Err(invalid("grammar has no templates"));
        }
        for t in &self.templates {
            if let Some(bad) = t.iter().find(|l| !names.contains(l.as_str())) {
                return Err(invalid(format!("template slot {bad} is not a label")));
            }
        }
        for l in self.final_label.iter().chain(self.postpose.iter().flat_map(|(a, b)| [a, b])) {
            if !names.contains(l.as_str()) {
                return Err(invalid(format!("reordering label {l} is not a label")));
            }
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(invalid(format!(
                "bad length range {}..={}",
                self.min_len, self.max_len
            )));
        }
        if self.eligible_templates().next().is_none() {
            return Err(invalid("no template within the length range"));
        }
        if !(0.0..1.0).contains(&self.rare_rate) {
            return Err(invalid(format!("rare_rate {} outside [0, 1)", self.rare_rate)));
        }
        if self.rare_rate > 0.0 {
            if self.labels.len() > RARE_SPACE {
                return Err(invalid("too many labels for coined words"));
            }
            if let Some(w) = seen.iter().find(|w| rare_index(w).is_some()) {
                return Err(invalid(format!("word {w} collides with the coined-word space")));
            }
        }
        Ok(())
    }

    fn eligible_templates(&self) -> impl Iterator<Item = &Vec<String>> {
        self.templates
            .iter()
            .filter(|t| (self.min_len..=self.max_len).contains(&t.len()))
    }

    fn words_of(&self, label: &str) -> Option<&[String]> {
        self.labels
            .iter()
            .find(|l| l.label == label)
            .map(|l| l.words.as_slice())
    }

    /// Label of a source word, if the grammar knows it. Coined words are
    /// recognised when `rare_rate` is positive.
    pub fn label_of(&self, word: &str) -> Option<&str> {
        if let Some(l) = self.labels.iter().find(|l| l.words.iter().any(|w| w == word)) {
            return Some(l.label.as_str());
        }
        if self.rare_rate > 0.0 {
            let k = rare_index(word)?;
            return self.labels.get(k / self.rare_block()).map(|l| l.label.as_str());
        }
        None
    }

    fn rare_block(&self) -> usize {
        RARE_SPACE / self.labels.len()
    }

    fn translation_of(&self, word: &str) -> String {
        match self.lexicon.get(word) {
            Some(t) => t.clone(),
            None if self.rare_rate > 0.0 && rare_index(word).is_some() => translate_word(word),
            None => word.to_string(),
        }
    }

    /// Target-side rendering of a labelled source sentence.
    pub fn translate(&self, src: &[String], labels: &[String]) -> Vec<String> {
        let mut order: Vec<usize> = Vec::with_capacity(src.len());
        match &self.postpose {
            Some((modifier, head)) => {
                let mut pending = Vec::new();
                for (i, l) in labels.iter().enumerate() {
                    if l == modifier {
                        pending.push(i);
                    } else if l == head {
                        order.push(i);
                        order.append(&mut pending);
                    } else {
                        order.append(&mut pending);
                        order.push(i);
                    }
                }
                order.append(&mut pending);
            }
            None => order.extend(0..src.len()),
        }
        if let Some(fin) = &self.final_label {
            let (mut rest, last): (Vec<usize>, Vec<usize>) =
                order.into_iter().partition(|&i| &labels[i] != fin);
            rest.extend(last);
            order = rest;
        }
        order
            .into_iter()
            .map(|i| self.translation_of(&src[i]))
            .collect()
    }

    /// Generates `n` sentences; the output depends only on the config.
    pub fn generate(&self, n: usize) -> Result<Vec<SentenceRecord>> {
        if n == 0 {
            return Err(invalid("n must be positive"));
        }
        self.validate()?;
        let templates: Vec<&Vec<String>> = self.eligible_templates().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let t = templates[rng.random_range(0..templates.len())];
            let mut src = Vec::with_capacity(t.len());
            for slot in t {
                if self.rare_rate > 0.0 && rng.random_bool(self.rare_rate) {
                    let li = self.labels.iter().position(|l| &l.label == slot).expect("validated");
                    let block = self.rare_block();
                    src.push(rare_word(li * block + rng.random_range(0..block)));
                } else {
                    let words = self.words_of(slot).expect("validated");
                    src.push(words[rng.random_range(0..words.len())].clone());
                }
            }
            let labels = t.clone();
            let tgt = self.translate(&src, &labels);
            out.push(SentenceRecord { src, tgt, labels });
        }
        Ok(out)
    }

    /// Limit of the corpus label entropy (nats) as the corpus grows: each
    /// template is equally likely, so label `l` has token frequency
    /// `sum_t count_t(l) / sum_t len_t`.
    pub fn expected_label_entropy(&self) -> f64 {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut total = 0usize;
        for t in self.eligible_templates() {
            for l in t {
                *counts.entry(l.as_str()).or_default() += 1;
                total += 1;
            }
        }
        entropy_of_counts(counts.values().copied(), total)
    }
}

pub(crate) fn entropy_of_counts(counts: impl Iterator<Item = usize>, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / t;
            -p * math::ln(p)
        })
        .sum::<f64>()
        .max(0.0)
}

/// Generates a corpus from `cfg`.
pub fn generate_corpus(cfg: &GrammarConfig, n: usize) -> Result<Vec<SentenceRecord>> {
    cfg.generate(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn same_seed_same_corpus() {
        let g = GrammarConfig::default_grammar(5);
        assert_eq!(g.generate(50).unwrap(), g.generate(50).unwrap());
        let other = GrammarConfig::default_grammar(6);
        assert_ne!(g.generate(50).unwrap(), other.generate(50).unwrap());
    }

    #[test]
    fn cardinality_and_alignment() {
        let corpus = GrammarConfig::default_grammar(1).generate(100).unwrap();
        assert_eq!(corpus.len(), 100);
        for r in &corpus {
            assert_eq!(r.labels.len(), r.src.len());
            assert_eq!(r.tgt.len(), r.src.len());
            assert!((4..=10).contains(&r.src.len()));
        }
    }

    #[test]
    fn labels_are_a_function_of_words() {
        let g = GrammarConfig::default_grammar(3);
        let corpus = g.generate(500).unwrap();
        let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
        for r in &corpus {
            for (w, l) in r.src.iter().zip(&r.labels) {
                assert_eq!(*seen.entry(w).or_insert(l), l.as_str());
                assert_eq!(g.label_of(w), Some(l.as_str()));
            }
        }
    }

    #[test]
    fn default_grammar_shape() {
        let g = GrammarConfig::default_grammar(0);
        g.validate().unwrap();
        assert_eq!(g.labels.len(), 4);
        assert!(g.labels.iter().all(|l| l.words.len() == 40));
        assert_eq!(g.templates.len(), 12);
        assert!(g.expected_label_entropy() > 1.0);
    }

    #[test]
    fn reordering_moves_verbs_last_and_adjectives_after_nouns() {
        let g = GrammarConfig::default_grammar(0);
        let w = |l: &str, i: usize| g.words_of(l).unwrap()[i].clone();
        let src = vec![w("DET", 0), w("ADJ", 1), w("ADJ", 2), w("N", 3), w("V", 4), w("DET", 5), w("N", 6)];
        let labels: Vec<String> = ["DET", "ADJ", "ADJ", "N", "V", "DET", "N"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let tgt = g.translate(&src, &labels);
        let expect: Vec<String> = [0, 3, 1, 2, 5, 6, 4]
            .iter()
            .map(|&i| g.lexicon[&src[i]].clone())
            .collect();
        assert_eq!(tgt, expect);
    }

    #[test]
    fn validation_failures() {
        let mut g = GrammarConfig::default_grammar(0);
        g.templates.clear();
        assert!(g.generate(3).is_err());

        let mut g = GrammarConfig::default_grammar(0);
        g.templates.push(vec!["PREP".into(); 5]);
        assert!(g.validate().is_err());

        let mut g = GrammarConfig::default_grammar(0);
        let w = g.labels[0].words[0].clone();
        g.lexicon.remove(&w);
        assert!(g.validate().is_err());

        let mut g = GrammarConfig::default_grammar(0);
        g.min_len = 11;
        g.max_len = 12;
        assert!(g.validate().is_err());

        let g = GrammarConfig::default_grammar(0);
        assert!(g.generate(0).is_err());
    }

    #[test]
    fn coined_words_are_rare_and_labelled() {
        let g = GrammarConfig::default_grammar(4);
        let corpus = g.generate(2000).unwrap();
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        let (mut coined, mut total) = (0usize, 0usize);
        for r in &corpus {
            for (w, l) in r.src.iter().zip(&r.labels) {
                total += 1;
                if rare_index(w).is_some() {
                    coined += 1;
                    *freq.entry(w).or_default() += 1;
                    assert_eq!(g.label_of(w), Some(l.as_str()));
                }
            }
        }
        let rate = coined as f64 / total as f64;
        assert!((rate - 0.5).abs() < 0.02, "{rate}");
        let singletons = freq.values().filter(|&&c| c == 1).count();
        assert!(singletons as f64 > 0.95 * freq.len() as f64);
        // coined translations follow the same cipher as the lexicon
        let r = corpus.iter().find(|r| r.src.iter().any(|w| rare_index(w).is_some())).unwrap();
        assert_eq!(r.tgt, g.translate(&r.src, &r.labels));
        assert!(r.tgt.iter().all(|t| rare_index(t).is_none()));
    }

    #[test]
    fn rare_word_codec_round_trips() {
        for k in [0, 1, 77, RARE_SPACE / 2, RARE_SPACE - 1] {
            assert_eq!(rare_index(&rare_word(k)), Some(k));
        }
        assert_eq!(rare_index("bab"), None);
        assert_eq!(rare_index("bababx"), None);
    }

    #[test]
    fn without_rare_words_only_lexicon_words_appear() {
        let mut g = GrammarConfig::default_grammar(2);
        g.rare_rate = 0.0;
        for r in g.generate(200).unwrap() {
            assert!(r.src.iter().all(|w| g.lexicon.contains_key(w)));
        }
        assert_eq!(g.label_of("bababa"), None);
        g.rare_rate = 1.0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn empirical_entropy_approaches_template_entropy() {
        let g = GrammarConfig::default_grammar(9);
        let corpus = g.generate(20_000).unwrap();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut total = 0;
        for r in &corpus {
            for l in &r.labels {
                *counts.entry(l).or_default() += 1;
                total += 1;
            }
        }
        let empirical = entropy_of_counts(counts.values().copied(), total);
        assert!((empirical - g.expected_label_entropy()).abs() < 5e-3);
    }
}
