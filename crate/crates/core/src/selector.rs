//! Clean-label selection.
//!
//! [`PredictionStore`] keeps, per sample, what is needed to answer the OR-Gate
//! question "did the observed label ever appear in this sample's top-k
//! prediction in an earlier epoch?". [`SelfMovingAverage`] is the
//! moving-average ensemble selector used as a baseline.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textio;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Clean,
    Noisy,
}

impl Decision {
    pub fn is_clean(self) -> bool {
        self == Decision::Clean
    }
}

fn check_finite(probabilities: &[f64]) -> Result<()> {
    if probabilities.iter().any(|p| p.is_nan()) {
        return Err(Error::numeric("NaN in prediction"));
    }
    if probabilities.iter().any(|p| p.is_infinite()) {
        return Err(Error::numeric("non-finite value in prediction"));
    }
    Ok(())
}

/// Labels of the `k` largest probabilities, in rank order. Ties go to the lower label.
pub fn topk_labels(probabilities: &[f64], k: usize) -> Result<Vec<usize>> {
    let c = probabilities.len();
    if k == 0 || k > c {
        return Err(Error::config(format!("k={k} outside [1, {c}]")));
    }
    check_finite(probabilities)?;
    let mut order: Vec<usize> = (0..c).collect();
    let by_rank = |a: &usize, b: &usize| {
        probabilities[*b]
            .partial_cmp(&probabilities[*a])
            .expect("finite")
            .then(a.cmp(b))
    };
    if k < c {
        order.select_nth_unstable_by(k - 1, by_rank);
        order.truncate(k);
    }
    order.sort_by(by_rank);
    Ok(order)
}

/// Index of the largest entry; ties go to the lower index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        match best {
            Some(b) if values[b] >= *v => {}
            _ => best = Some(i),
        }
    }
    best
}

/// One epoch's top-k label set for one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopKSet {
    pub epoch: usize,
    pub labels: Vec<usize>,
}

impl TopKSet {
    pub fn contains(&self, label: usize) -> bool {
        self.labels.contains(&label)
    }
}

#[derive(Debug, Clone, Default)]
struct SampleState {
    epochs_recorded: usize,
    first_match_epoch: Option<usize>,
    history: Vec<TopKSet>,
}

/// The prediction set: per-sample top-k history across epochs.
///
/// Observed labels are registered up front so the match flag can be folded in
/// at record time. With history retention disabled only the first-match epoch
/// is kept, which answers every OR-Gate query exactly.
#[derive(Debug, Clone)]
pub struct PredictionStore {
    k: usize,
    num_classes: usize,
    retain_history: bool,
    labels: Vec<usize>,
    samples: Vec<SampleState>,
}

impl PredictionStore {
    pub fn new(
        k: usize,
        num_classes: usize,
        observed_labels: Vec<usize>,
        retain_history: bool,
    ) -> Result<Self> {
        if k == 0 || k > num_classes {
            return Err(Error::config(format!("k={k} outside [1, {num_classes}]")));
        }
        if let Some(bad) = observed_labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::config(format!("observed label {bad} outside [0, {num_classes})")));
        }
        let samples = vec![SampleState::default(); observed_labels.len()];
        Ok(PredictionStore {
            k,
            num_classes,
            retain_history,
            labels: observed_labels,
            samples,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn retains_history(&self) -> bool {
        self.retain_history
    }

    fn sample(&self, sample_id: usize) -> Result<&SampleState> {
        self.samples
            .get(sample_id)
            .ok_or_else(|| Error::Lookup(format!("unknown sample {sample_id}")))
    }

    /// Epochs recorded for one sample.
    pub fn epochs_recorded(&self, sample_id: usize) -> Result<usize> {
        Ok(self.sample(sample_id)?.epochs_recorded)
    }

    /// Epochs recorded for every sample, when they agree.
    pub fn num_epochs_recorded(&self) -> Option<usize> {
        let first = self.samples.first().map_or(0, |s| s.epochs_recorded);
        self.samples
            .iter()
            .all(|s| s.epochs_recorded == first)
            .then_some(first)
    }

    pub fn first_match_epoch(&self, sample_id: usize) -> Result<Option<usize>> {
        Ok(self.sample(sample_id)?.first_match_epoch)
    }

    /// Full history; `None` when retention is disabled.
    pub fn history(&self, sample_id: usize) -> Result<Option<&[TopKSet]>> {
        let state = self.sample(sample_id)?;
        Ok(self.retain_history.then_some(state.history.as_slice()))
    }

    /// Appends the top-k set of `probabilities` as `epoch` for one sample.
    /// Epochs must arrive in order starting at 0.
    pub fn record_epoch(&mut self, sample_id: usize, probabilities: &[f64], epoch: usize) -> Result<()> {
        if probabilities.len() != self.num_classes {
            return Err(Error::shape(self.num_classes, probabilities.len()));
        }
        let expected = self.epochs_recorded(sample_id)?;
        if epoch != expected {
            return Err(Error::state(format!(
                "sample {sample_id}: recording epoch {epoch}, expected {expected}"
            )));
        }
        let labels = topk_labels(probabilities, self.k)?;
        let label = self.labels[sample_id];
        let state = &mut self.samples[sample_id];
        if state.first_match_epoch.is_none() && labels.contains(&label) {
            state.first_match_epoch = Some(epoch);
        }
        if self.retain_history {
            state.history.push(TopKSet { epoch, labels });
        }
        state.epochs_recorded += 1;
        Ok(())
    }

    /// Clean iff `observed_label` was in the top-k set of any epoch before `current_epoch`.
    pub fn or_gate_decision(
        &self,
        sample_id: usize,
        observed_label: usize,
        current_epoch: usize,
    ) -> Result<Decision> {
        let state = self.sample(sample_id)?;
        if state.epochs_recorded < current_epoch {
            return Err(Error::state(format!(
                "sample {sample_id}: decision at epoch {current_epoch} but only {} epochs recorded",
                state.epochs_recorded
            )));
        }
        let matched = if self.retain_history {
            state.history[..current_epoch]
                .iter()
                .any(|set| set.contains(observed_label))
        } else {
            if observed_label != self.labels[sample_id] {
                return Err(Error::state(format!(
                    "sample {sample_id}: compressed store tracks label {}, asked about {observed_label}",
                    self.labels[sample_id]
                )));
            }
            state.first_match_epoch.is_some_and(|e| e < current_epoch)
        };
        Ok(if matched { Decision::Clean } else { Decision::Noisy })
    }

    /// Gate decisions for every sample against its registered label.
    pub fn decide_all(&self, current_epoch: usize) -> Result<Vec<Decision>> {
        (0..self.samples.len())
            .map(|id| self.or_gate_decision(id, self.labels[id], current_epoch))
            .collect()
    }

    /// Rows `sample_id,epoch,matched,first_match_epoch` describing the cumulative
    /// match state as of the end of `epoch`; -1 marks "never matched".
    pub fn diagnostic_rows(&self, epoch: usize) -> String {
        let mut out = String::from("sample_id,epoch,matched,first_match_epoch\n");
        for (id, state) in self.samples.iter().enumerate() {
            let first = state.first_match_epoch.filter(|&e| e <= epoch);
            let _ = writeln!(
                out,
                "{id},{epoch},{},{}",
                u8::from(first.is_some()),
                first.map_or(-1, |e| e as i64)
            );
        }
        out
    }

    pub fn write_diagnostics(&self, epoch: usize, path: &Path) -> Result<()> {
        textio::write_file(path, &self.diagnostic_rows(epoch))
    }
}

/// Per-sample exponential moving average of predictions.
#[derive(Debug, Clone)]
pub struct SelfMovingAverage {
    alpha: f64,
    num_classes: usize,
    values: Vec<f64>,
    initialized: Vec<bool>,
}

impl SelfMovingAverage {
    pub fn new(num_samples: usize, num_classes: usize, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::config(format!("momentum {alpha} outside [0, 1]")));
        }
        Ok(SelfMovingAverage {
            alpha,
            num_classes,
            values: vec![0.0; num_samples * num_classes],
            initialized: vec![false; num_samples],
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn check_id(&self, sample_id: usize) -> Result<()> {
        if sample_id >= self.initialized.len() {
            return Err(Error::Lookup(format!("unknown sample {sample_id}")));
        }
        Ok(())
    }

    /// Averaged prediction, if the sample has been updated at least once.
    pub fn average(&self, sample_id: usize) -> Result<Option<&[f64]>> {
        self.check_id(sample_id)?;
        let c = self.num_classes;
        Ok(self.initialized[sample_id].then(|| &self.values[sample_id * c..(sample_id + 1) * c]))
    }

    /// `avg = alpha * avg + (1 - alpha) * p`; the first update stores `p` as is.
    pub fn update(&mut self, sample_id: usize, probabilities: &[f64]) -> Result<()> {
        self.check_id(sample_id)?;
        if probabilities.len() != self.num_classes {
            return Err(Error::shape(self.num_classes, probabilities.len()));
        }
        check_finite(probabilities)?;
        let c = self.num_classes;
        let slot = &mut self.values[sample_id * c..(sample_id + 1) * c];
        if self.initialized[sample_id] {
            let a = self.alpha;
            slot.iter_mut()
                .zip(probabilities)
                .for_each(|(avg, p)| *avg = a * *avg + (1.0 - a) * p);
        } else {
            slot.copy_from_slice(probabilities);
            self.initialized[sample_id] = true;
        }
        Ok(())
    }

    /// Clean iff the argmax of the average equals the observed label.
    pub fn decision(&self, sample_id: usize, observed_label: usize) -> Result<Decision> {
        let avg = self
            .average(sample_id)?
            .ok_or_else(|| Error::state(format!("sample {sample_id} has no moving average yet")))?;
        Ok(if argmax(avg) == Some(observed_label) {
            Decision::Clean
        } else {
            Decision::Noisy
        })
    }
}
