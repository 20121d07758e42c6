// SPDX-License-Identifier: MIT OR Apache-2.0

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::forward;
use super::params::Parameters;
use super::vocab::{Vocabulary, UNK};
use crate::kb::Sample;
use crate::{Error, Result};

/// Token ids for a sample: `<bos>`, prefix, target. Also returns the index of
/// the last prefix position.
pub fn sample_tokens(sample: &Sample, vocab: &Vocabulary) -> Result<(Vec<usize>, usize)> {
    let mut ids = vocab.encode_with_bos(&sample.prefix);
    if ids.len() < 2 {
        return Err(Error::invalid(format!("sample for triple {} has an empty prefix", sample.triple_id)));
    }
    let metric_pos = ids.len() - 1;
    ids.extend(vocab.encode(&sample.target));
    Ok((ids, metric_pos))
}

/// Measurements of one knowledge sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeRecord {
    pub triple_id: usize,
    /// Logit of the first target token at the last prefix position.
    pub logit: f64,
    /// Softmax probability of that token.
    pub prob: f64,
    /// Mean log-probability over all target tokens.
    pub logprob: f64,
    /// Target is unknown to the vocabulary; excluded from aggregates.
    pub flagged: bool,
}

pub fn measure_sample(params: &Parameters, sample: &Sample, vocab: &Vocabulary) -> Result<KnowledgeRecord> {
    let (ids, metric_pos) = sample_tokens(sample, vocab)?;
    let target = &ids[metric_pos + 1..];
    if target.is_empty() {
        return Err(Error::invalid(format!("sample for triple {} has an empty target", sample.triple_id)));
    }
    let (logits, _) = forward(params, &ids, false)?;
    let v = params.config.vocab_size;
    let log_softmax_at = |pos: usize, tok: usize| {
        let row = &logits[pos * v..(pos + 1) * v];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        row[tok] - lse
    };
    let first = target[0];
    let logprob = target
        .iter()
        .enumerate()
        .map(|(i, &tok)| log_softmax_at(metric_pos + i, tok))
        .sum::<f64>()
        / target.len() as f64;
    Ok(KnowledgeRecord {
        triple_id: sample.triple_id,
        logit: logits[metric_pos * v + first],
        prob: log_softmax_at(metric_pos, first).exp(),
        logprob,
        flagged: target.iter().all(|&t| t == UNK),
    })
}

/// First-target-token logit at the last prefix position; `None` when the
/// target is unknown to the vocabulary.
pub fn target_logit(params: &Parameters, sample: &Sample, vocab: &Vocabulary) -> Result<Option<f64>> {
    let r = measure_sample(params, sample, vocab)?;
    Ok((!r.flagged).then_some(r.logit))
}

/// Mean log-probability of the whole target phrase.
pub fn target_logprob(params: &Parameters, sample: &Sample, vocab: &Vocabulary) -> Result<Option<f64>> {
    let r = measure_sample(params, sample, vocab)?;
    Ok((!r.flagged).then_some(r.logprob))
}

/// One record per sample, in input order.
pub fn evaluate_knowledge(params: &Parameters, samples: &[Sample], vocab: &Vocabulary) -> Result<Vec<KnowledgeRecord>> {
    samples.par_iter().map(|s| measure_sample(params, s, vocab)).collect()
}

/// `<bos>` + prefix + target for every sample, in order.
pub fn training_sequences(samples: &[Sample], vocab: &Vocabulary) -> Vec<Vec<usize>> {
    samples.iter().map(|s| vocab.encode_with_bos(&s.text())).collect()
}

/// `<bos>` + sentence for every line of free text.
pub fn text_sequences<S: AsRef<str>>(lines: &[S], vocab: &Vocabulary) -> Vec<Vec<usize>> {
    lines.iter().map(|l| vocab.encode_with_bos(l.as_ref())).collect()
}
