//! Task and information measurements. Entropies are in nats.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::entropy_of_counts;
use crate::data::EncodedSentence;
use crate::error::invalid;
use crate::math;
use crate::models::{Encoder, ProbeModel};
use crate::{Result, Tensor};

const MAX_ORDER: usize = 4;

fn ngram_counts(tokens: &[String], n: usize) -> BTreeMap<&[String], usize> {
    let mut counts = BTreeMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Case-insensitive corpus BLEU with 4-gram precisions and no smoothing,
/// on a 0 to 100 scale.
pub fn bleu<C, R, S, T>(candidates: &[C], references: &[R]) -> Result<f64>
where
    C: AsRef<[S]>,
    R: AsRef<[T]>,
    S: AsRef<str>,
    T: AsRef<str>,
{
    if candidates.len() != references.len() {
        return Err(invalid(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        )));
    }
    let mut matched = [0usize; MAX_ORDER];
    let mut total = [0usize; MAX_ORDER];
    let (mut c, mut r) = (0usize, 0usize);
    for (cand, refr) in candidates.iter().zip(references) {
        let cand: Vec<String> = cand.as_ref().iter().map(|t| t.as_ref().to_lowercase()).collect();
        let refr: Vec<String> = refr.as_ref().iter().map(|t| t.as_ref().to_lowercase()).collect();
        c += cand.len();
        r += refr.len();
        for n in 1..=MAX_ORDER {
            let ref_counts = ngram_counts(&refr, n);
            for (gram, count) in ngram_counts(&cand, n) {
                matched[n - 1] += count.min(ref_counts.get(gram).copied().unwrap_or(0));
                total[n - 1] += count;
            }
        }
    }
    if matched.contains(&0) {
        return Ok(0.0);
    }
    let log_precision: f64 = matched
        .iter()
        .zip(&total)
        .map(|(&m, &t)| math::ln(m as f64 / t as f64))
        .sum::<f64>()
        / MAX_ORDER as f64;
    let brevity = (1.0 - r as f64 / c as f64).min(0.0);
    Ok(100.0 * math::exp(log_precision + brevity))
}

/// Plug-in entropy of the empirical label distribution.
pub fn label_entropy<L: Ord>(labels: impl IntoIterator<Item = L>) -> Result<f64> {
    let mut counts = BTreeMap::new();
    let mut total = 0usize;
    for l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
        total += 1;
    }
    if total == 0 {
        return Err(invalid("label entropy of an empty corpus"));
    }
    Ok(entropy_of_counts(counts.into_values(), total))
}

/// Stacked encoder rows for every token of `corpus` with their labels, in
/// corpus order.
pub fn probe_dataset<E: Encoder + ?Sized>(encoder: &E, corpus: &[EncodedSentence]) -> Result<(Tensor, Vec<usize>)> {
    let seqs: Vec<&[usize]> = corpus.iter().map(|s| s.src.as_slice()).collect();
    let encoded = encoder.encode_all(&seqs)?;
    let rows: usize = encoded.iter().map(|h| h.shape()[0]).sum();
    let mut data = Vec::with_capacity(rows * encoder.width());
    for h in encoded {
        data.extend(h.into_data());
    }
    let labels = corpus.iter().flat_map(|s| s.labels.iter().copied()).collect();
    Ok((Tensor::from_parts(alloc::vec![rows, encoder.width()], data), labels))
}

/// Mean probe cross-entropy over the tokens of `corpus`; an upper bound on
/// H(s|h) once the probe has been fitted to the frozen encoder.
pub fn conditional_entropy<E: Encoder + ?Sized>(
    probe: &ProbeModel,
    encoder: &E,
    corpus: &[EncodedSentence],
) -> Result<f64> {
    let (h, labels) = probe_dataset(encoder, corpus)?;
    probe.cross_entropy(&h, &labels)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoEstimate {
    pub h_s: f64,
    pub h_s_given_h: f64,
    pub mi: f64,
    /// Set when `h_s_given_h` exceeded `h_s` and the estimate was clamped.
    pub clamped: bool,
}

/// `I(h, s) = H(s) - H(s|h)`, clamped at zero.
pub fn mutual_information(h_s: f64, h_s_given_h: f64) -> Result<InfoEstimate> {
    if !h_s.is_finite() || !h_s_given_h.is_finite() {
        return Err(invalid("entropies must be finite"));
    }
    if h_s < 0.0 {
        return Err(invalid(format!("negative label entropy {h_s}")));
    }
    let raw = h_s - h_s_given_h;
    Ok(InfoEstimate {
        h_s,
        h_s_given_h,
        mi: raw.max(0.0),
        clamped: raw < 0.0,
    })
}

pub fn perplexity(mean_nll: f64) -> f64 {
    math::exp(mean_nll)
}
