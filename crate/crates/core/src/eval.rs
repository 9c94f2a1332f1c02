//! Verification scoring, equal error rate and clean-selection precision/recall.

use serde::{Deserialize, Serialize};

use crate::dataset::{NoisyCorpus, TrialList};
use crate::error::{Error, Result};
use crate::model::{cosine_score, Embedder};
use crate::selector::Decision;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrial {
    pub score: f64,
    pub is_target: bool,
}

pub type ScoredTrials = Vec<ScoredTrial>;

/// Scores every trial by the cosine of the two samples' embeddings, in trial order.
pub fn score_trials<E: Embedder + ?Sized>(
    model: &E,
    test_corpus: &NoisyCorpus,
    trials: &TrialList,
) -> Result<ScoredTrials> {
    let n = test_corpus.len();
    let mut embeddings: Vec<Option<Vec<f64>>> = vec![None; n];
    for t in &trials.trials {
        for id in [t.sample_a, t.sample_b] {
            let slot = embeddings
                .get_mut(id)
                .ok_or_else(|| Error::Lookup(format!("trial references missing sample {id}")))?;
            if slot.is_none() {
                *slot = Some(model.embed(&test_corpus.samples[id].features)?);
            }
        }
    }
    trials
        .trials
        .iter()
        .map(|t| {
            let a = embeddings[t.sample_a].as_deref().expect("embedded above");
            let b = embeddings[t.sample_b].as_deref().expect("embedded above");
            Ok(ScoredTrial {
                score: cosine_score(a, b)?,
                is_target: t.is_target,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EerResult {
    pub eer: f64,
    pub threshold: f64,
}

/// Equal error rate with "accept iff score >= threshold".
///
/// Operating points are taken at every distinct score (plus reject-all). The
/// first pair of consecutive points where `FRR - FAR` changes sign is
/// interpolated linearly; the threshold is interpolated the same way, except
/// that a crossing adjacent to reject-all reports the highest score.
pub fn compute_eer(scored: &[ScoredTrial]) -> Result<EerResult> {
    let num_target = scored.iter().filter(|t| t.is_target).count();
    let num_nontarget = scored.len() - num_target;
    if num_target == 0 || num_nontarget == 0 {
        return Err(Error::Input("EER needs at least one target and one nontarget trial".into()));
    }
    if scored.iter().any(|t| !t.score.is_finite()) {
        return Err(Error::Input("non-finite trial score".into()));
    }
    let mut sorted: Vec<&ScoredTrial> = scored.iter().collect();
    sorted.sort_by(|a, b| b.score.partial_cmp(&a.score).expect("finite"));

    let (nt, nn) = (num_target as f64, num_nontarget as f64);
    let mut accepted_targets = 0usize;
    let mut accepted_nontargets = 0usize;
    // Reject-all operating point.
    let mut prev_far = 0.0;
    let mut prev_frr = 1.0;
    let mut prev_threshold: Option<f64> = None;
    let mut i = 0;
    while i < sorted.len() {
        let threshold = sorted[i].score;
        while i < sorted.len() && sorted[i].score == threshold {
            if sorted[i].is_target {
                accepted_targets += 1;
            } else {
                accepted_nontargets += 1;
            }
            i += 1;
        }
        let far = accepted_nontargets as f64 / nn;
        let frr = (num_target - accepted_targets) as f64 / nt;
        let diff = frr - far;
        if diff <= 0.0 {
            let prev_diff = prev_frr - prev_far;
            if diff == 0.0 {
                return Ok(EerResult { eer: far, threshold });
            }
            let lambda = prev_diff / (prev_diff - diff);
            let eer = prev_far + lambda * (far - prev_far);
            let threshold = match prev_threshold {
                Some(prev) => prev + lambda * (threshold - prev),
                None => threshold,
            };
            return Ok(EerResult { eer, threshold });
        }
        prev_far = far;
        prev_frr = frr;
        prev_threshold = Some(threshold);
    }
    unreachable!("accept-all point has FRR = 0 <= FAR = 1")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub num_selected: usize,
    pub num_selected_clean: usize,
    pub num_clean_total: usize,
    /// Absent when nothing was selected.
    pub precision: Option<f64>,
    /// Absent when the corpus has no clean labels.
    pub recall: Option<f64>,
}

/// Precision and recall of the Clean decisions against the corruption flags.
pub fn selection_metrics(decisions: &[Decision], corpus: &NoisyCorpus) -> Result<SelectionReport> {
    if decisions.len() != corpus.len() {
        return Err(Error::Input(format!(
            "{} decisions for {} samples",
            decisions.len(),
            corpus.len()
        )));
    }
    let mut num_selected = 0;
    let mut num_selected_clean = 0;
    let mut num_clean_total = 0;
    for (d, s) in decisions.iter().zip(&corpus.samples) {
        let clean = s.observed_label == s.true_label;
        num_clean_total += usize::from(clean);
        if d.is_clean() {
            num_selected += 1;
            num_selected_clean += usize::from(clean);
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    Ok(SelectionReport {
        num_selected,
        num_selected_clean,
        num_clean_total,
        precision: ratio(num_selected_clean, num_selected),
        recall: ratio(num_selected_clean, num_clean_total),
    })
}
