//! Two-stage training: an early-learning phase on every sample, then gated
//! epochs in which only samples judged clean contribute gradients while the
//! rest are forward-passed so their predictions still reach the store.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{NoisyCorpus, TrialList};
use crate::error::{Error, Result};
use crate::eval::{compute_eer, score_trials, selection_metrics};
use crate::model::{ForwardCache, Gradients, ModelConfig, ModelState, OptimizerConfig};
use crate::selector::{Decision, PredictionStore, SelfMovingAverage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Orgate,
    Baseline,
    OrgateNoEarly,
    OrgateK1,
    SelfBaseline,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Orgate,
        Mode::Baseline,
        Mode::OrgateNoEarly,
        Mode::OrgateK1,
        Mode::SelfBaseline,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Orgate => "orgate",
            Mode::Baseline => "baseline",
            Mode::OrgateNoEarly => "orgate_no_early",
            Mode::OrgateK1 => "orgate_k1",
            Mode::SelfBaseline => "self_baseline",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown mode {s:?}")))
    }
}

/// `max(1, round(0.07 * c))`, the top-k size used when none is given.
pub fn default_k(num_classes: usize) -> usize {
    ((0.07 * num_classes as f64).round() as usize).clamp(1, num_classes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Early-learning epochs.
    pub w: usize,
    /// Top-k size; `None` uses [`default_k`].
    #[serde(default)]
    pub k: Option<usize>,
    pub max_epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub model: ModelConfig,
    pub seed: u64,
    #[serde(default = "default_self_alpha")]
    pub self_alpha: f64,
    /// EER is evaluated every `eval_interval` epochs and after the last one; 0 means last only.
    #[serde(default)]
    pub eval_interval: usize,
    #[serde(default)]
    pub retain_history: bool,
}

fn default_self_alpha() -> f64 {
    0.9
}

impl TrainConfig {
    pub fn effective_w(&self) -> usize {
        match self.mode {
            Mode::OrgateNoEarly => 0,
            _ => self.w,
        }
    }

    pub fn effective_k(&self) -> usize {
        match self.mode {
            Mode::OrgateK1 => 1,
            _ => self.k.unwrap_or_else(|| default_k(self.model.num_classes)),
        }
    }

    /// Copy with the mode overrides written out.
    pub fn resolved(&self) -> TrainConfig {
        TrainConfig {
            w: self.effective_w(),
            k: Some(self.effective_k()),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.optimizer.validate()?;
        let c = self.model.num_classes;
        if self.max_epochs < 1 {
            return Err(Error::config("max_epochs must be at least 1"));
        }
        if self.effective_w() >= self.max_epochs {
            return Err(Error::config(format!(
                "w={} must be smaller than max_epochs={}",
                self.effective_w(),
                self.max_epochs
            )));
        }
        let k = self.effective_k();
        if k == 0 || k > c {
            return Err(Error::config(format!("k={k} outside [1, {c}]")));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.self_alpha) {
            return Err(Error::config("self_alpha must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean loss over samples that received a gradient; absent when none did.
    pub mean_training_loss: Option<f64>,
    pub num_selected: usize,
    pub num_rejected: usize,
    pub selection_precision: Option<f64>,
    pub selection_recall: Option<f64>,
    pub learning_rate: f64,
    pub parameter_updates: usize,
    pub eer_on_trials: Option<f64>,
}

/// Held-out corpus and its verification trials.
#[derive(Debug, Clone, Copy)]
pub struct EvalSet<'a> {
    pub corpus: &'a NoisyCorpus,
    pub trials: &'a TrialList,
}

impl EvalSet<'_> {
    pub fn eer(&self, model: &ModelState) -> Result<f64> {
        let scored = score_trials(model, self.corpus, self.trials)?;
        Ok(compute_eer(&scored)?.eer)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub config: TrainConfig,
    pub logs: Vec<EpochLog>,
    pub final_eer: f64,
    pub model: ModelState,
    pub warnings: Vec<String>,
    pub duration_secs: f64,
}

impl RunResult {
    pub fn final_log(&self) -> &EpochLog {
        self.logs.last().expect("at least one epoch")
    }

    pub fn log(&self, epoch: usize) -> Option<&EpochLog> {
        self.logs.get(epoch)
    }
}

/// Mutable training state for one run over one corpus.
pub struct Trainer<'a> {
    config: TrainConfig,
    corpus: &'a NoisyCorpus,
    pub model: ModelState,
    pub store: PredictionStore,
    pub moving_average: Option<SelfMovingAverage>,
}

impl<'a> Trainer<'a> {
    pub fn new(config: &TrainConfig, corpus: &'a NoisyCorpus) -> Result<Self> {
        config.validate()?;
        let config = config.resolved();
        if corpus.num_classes() != config.model.num_classes {
            return Err(Error::config(format!(
                "corpus has {} classes, model expects {}",
                corpus.num_classes(),
                config.model.num_classes
            )));
        }
        if corpus.config.feature_dim != config.model.feature_dim {
            return Err(Error::config(format!(
                "corpus features have {} dims, model expects {}",
                corpus.config.feature_dim, config.model.feature_dim
            )));
        }
        let k = config.effective_k();
        let store = PredictionStore::new(
            k,
            corpus.num_classes(),
            corpus.observed_labels(),
            config.retain_history,
        )?;
        let moving_average = match config.mode {
            Mode::SelfBaseline => Some(SelfMovingAverage::new(
                corpus.len(),
                corpus.num_classes(),
                config.self_alpha,
            )?),
            _ => None,
        };
        Ok(Trainer {
            model: ModelState::new(config.model.clone())?,
            config,
            corpus,
            store,
            moving_average,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Seeded shuffle of all sample ids for `epoch`, split into batches.
    pub fn epoch_batches(&self, epoch: usize) -> Vec<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch as u64 + 1);
        let mut order: Vec<usize> = (0..self.corpus.len()).collect();
        order.shuffle(&mut rng);
        order
            .chunks(self.config.batch_size)
            .map(<[usize]>::to_vec)
            .collect()
    }

    fn check_epoch(&self, epoch: usize) -> Result<()> {
        match self.store.num_epochs_recorded() {
            Some(e) if e == epoch => Ok(()),
            other => Err(Error::state(format!(
                "store holds {other:?} epochs, cannot run epoch {epoch}"
            ))),
        }
    }

    /// Early learning: every sample trains on its observed label.
    pub fn train_epoch_all(&mut self, epoch: usize, lr: f64) -> Result<EpochLog> {
        let decisions = vec![Decision::Clean; self.corpus.len()];
        self.run_epoch(epoch, lr, &decisions)
    }

    /// Gated epoch: OR-Gate decisions are frozen from the store as it stands at epoch start.
    pub fn train_epoch_gated(&mut self, epoch: usize, lr: f64) -> Result<EpochLog> {
        self.check_epoch(epoch)?;
        let decisions = self.store.decide_all(epoch)?;
        self.run_epoch(epoch, lr, &decisions)
    }

    /// Gated epoch using the moving-average selector instead of the OR-Gate.
    pub fn train_epoch_self_gated(&mut self, epoch: usize, lr: f64) -> Result<EpochLog> {
        let ma = self
            .moving_average
            .as_ref()
            .ok_or_else(|| Error::state("moving average selector not configured"))?;
        let decisions = self
            .corpus
            .samples
            .iter()
            .map(|s| ma.decision(s.id, s.observed_label))
            .collect::<Result<Vec<_>>>()?;
        self.run_epoch(epoch, lr, &decisions)
    }

    /// Runs one epoch: forward every sample, backpropagate the Clean ones, and
    /// record every sample's prediction.
    pub fn run_epoch(&mut self, epoch: usize, lr: f64, decisions: &[Decision]) -> Result<EpochLog> {
        self.check_epoch(epoch)?;
        if decisions.len() != self.corpus.len() {
            return Err(Error::shape(self.corpus.len(), decisions.len()));
        }
        let mut total_loss = 0.0;
        let mut trained = 0usize;
        let mut updates = 0usize;
        for batch in self.epoch_batches(epoch) {
            let outcome = train_batch(
                &mut self.model,
                &self.config.optimizer,
                self.corpus,
                &batch,
                |id| decisions[id].is_clean(),
                lr,
            )?;
            for (id, prediction) in batch.iter().zip(&outcome.predictions) {
                self.store.record_epoch(*id, prediction, epoch)?;
                if let Some(ma) = self.moving_average.as_mut() {
                    ma.update(*id, prediction)?;
                }
            }
            total_loss += outcome.loss_sum;
            trained += outcome.trained;
            updates += usize::from(outcome.trained > 0);
        }
        let report = selection_metrics(decisions, self.corpus)?;
        Ok(EpochLog {
            epoch,
            mean_training_loss: (trained > 0).then(|| total_loss / trained as f64),
            num_selected: report.num_selected,
            num_rejected: self.corpus.len() - report.num_selected,
            selection_precision: report.precision,
            selection_recall: report.recall,
            learning_rate: lr,
            parameter_updates: updates,
            eer_on_trials: None,
        })
    }
}

/// What one batch produced.
#[derive(Debug, Clone)]
pub struct BatchOutcome {
    /// Label-free prediction per batch member, from the pre-update forward pass.
    pub predictions: Vec<Vec<f64>>,
    pub loss_sum: f64,
    pub trained: usize,
}

/// Forward-passes every member and takes one Adam step on the mean gradient of
/// the members `trainable` accepts. No step is taken when none are accepted.
pub fn train_batch(
    model: &mut ModelState,
    optimizer: &OptimizerConfig,
    corpus: &NoisyCorpus,
    members: &[usize],
    trainable: impl Fn(usize) -> bool,
    lr: f64,
) -> Result<BatchOutcome> {
    let loss = model.loss();
    let head = model.head.normalized()?;
    let mut grads = Gradients::zeros_like(model);
    let mut cache = ForwardCache::default();
    let mut grad_embedding = vec![0.0; model.config.embedding_dim];
    let mut predictions = Vec::with_capacity(members.len());
    let mut loss_sum = 0.0;
    let mut trained = 0usize;
    for &id in members {
        let sample = corpus
            .samples
            .get(id)
            .ok_or_else(|| Error::Lookup(format!("unknown sample {id}")))?;
        model.forward(&sample.features, &mut cache)?;
        let out = loss.forward(&head, cache.embedding(), sample.observed_label)?;
        predictions.push(out.prediction(loss.scale));
        if trainable(id) {
            grad_embedding.iter_mut().for_each(|g| *g = 0.0);
            loss.backward_into(
                &head,
                cache.embedding(),
                sample.observed_label,
                &out,
                1.0,
                &mut grad_embedding,
                &mut grads.class_weights,
            );
            model.backward_into(&cache, &grad_embedding, &mut grads);
            loss_sum += out.loss;
            trained += 1;
        }
    }
    if trained > 0 {
        grads.scale(1.0 / trained as f64);
        model.adam_step(optimizer, &grads, lr)?;
    }
    Ok(BatchOutcome {
        predictions,
        loss_sum,
        trained,
    })
}

/// Runs a full experiment in the configured mode and evaluates EER on `eval`.
pub fn run_experiment(config: &TrainConfig, corpus: &NoisyCorpus, eval: EvalSet<'_>) -> Result<RunResult> {
    let started = Instant::now();
    let mut trainer = Trainer::new(config, corpus)?;
    let config = trainer.config().clone();
    let w = config.effective_w();
    let mut logs = Vec::with_capacity(config.max_epochs);
    let mut warnings = Vec::new();
    for epoch in 0..config.max_epochs {
        let lr = config.optimizer.lr_at_epoch(epoch);
        let mut log = match config.mode {
            Mode::Baseline => trainer.train_epoch_all(epoch, lr)?,
            _ if epoch < w => trainer.train_epoch_all(epoch, lr)?,
            Mode::SelfBaseline => trainer.train_epoch_self_gated(epoch, lr)?,
            _ => trainer.train_epoch_gated(epoch, lr)?,
        };
        if log.num_selected == 0 {
            warnings.push(format!(
                "epoch {epoch}: no samples selected, forward-only pass recorded predictions"
            ));
        }
        let last = epoch + 1 == config.max_epochs;
        let periodic = config.eval_interval > 0 && (epoch + 1) % config.eval_interval == 0;
        if last || periodic {
            log.eer_on_trials = Some(eval.eer(&trainer.model)?);
        }
        logs.push(log);
    }
    let final_eer = logs
        .last()
        .and_then(|l| l.eer_on_trials)
        .expect("last epoch is always evaluated");
    Ok(RunResult {
        config,
        logs,
        final_eer,
        model: trainer.model,
        warnings,
        duration_secs: started.elapsed().as_secs_f64(),
    })
}
