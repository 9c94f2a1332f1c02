//! Experiment plans: the noise-rate x mode x repeat grid, per-run artifacts and
//! the aggregate results tables.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{
    corpus_to_string, generate_corpus, inject_symmetric_noise_with, make_trials, save_corpus, save_trials,
    CorpusConfig, FlipMode, NoisyCorpus, TrialList,
};
use crate::error::{Error, Result};
use crate::model::{Activation, ModelConfig, OptimizerConfig};
use crate::textio::{self, sig6, sig6_opt};
use crate::trainer::{run_experiment, EpochLog, EvalSet, Mode, RunResult, TrainConfig};

/// Noise rates of the standard grid.
pub const DEFAULT_NOISE_RATES: [f64; 6] = [0.0, 0.05, 0.10, 0.20, 0.30, 0.50];

/// Training hyperparameters shared by every cell of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub w: usize,
    pub k: Option<usize>,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub hidden_dims: Vec<usize>,
    pub embedding_dim: usize,
    pub margin: f64,
    pub scale: f64,
    pub activation: Activation,
    pub self_alpha: f64,
    pub retain_history: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            w: 3,
            k: Some(2),
            max_epochs: 12,
            batch_size: 16,
            optimizer: OptimizerConfig {
                initial_lr: 1e-3,
                ..OptimizerConfig::default()
            },
            hidden_dims: vec![128, 128],
            embedding_dim: 32,
            margin: 0.2,
            scale: 30.0,
            activation: Activation::Tanh,
            self_alpha: 0.9,
            retain_history: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    /// Training corpus; its seed is replaced per repeat.
    pub corpus: CorpusConfig,
    pub test_speakers: usize,
    pub test_utterances_per_speaker: usize,
    pub num_target_trials: usize,
    pub num_nontarget_trials: usize,
    pub noise_rates: Vec<f64>,
    pub flip_mode: FlipMode,
    pub modes: Vec<Mode>,
    pub repeats: usize,
    /// Base seed; every corpus, noise mask, trial list and model seed derives from it.
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub eval_interval: usize,
    /// Epochs whose selection precision/recall get their own table columns.
    pub snapshot_epochs: Vec<usize>,
    pub train: TrainSettings,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            corpus: CorpusConfig {
                num_speakers: 150,
                utterances_per_speaker: 40,
                feature_dim: 32,
                class_separation: 14.0,
                within_class_stddev: 1.0,
                subspace_dim: 8,
                speaker_offset: 0,
                seed: 0,
            },
            test_speakers: 20,
            test_utterances_per_speaker: 20,
            num_target_trials: 2000,
            num_nontarget_trials: 2000,
            noise_rates: DEFAULT_NOISE_RATES.to_vec(),
            flip_mode: FlipMode::Bernoulli,
            modes: Mode::ALL.to_vec(),
            repeats: 3,
            seed: 2023,
            output_dir: None,
            eval_interval: 4,
            snapshot_epochs: vec![3, 6, 9, 11],
            train: TrainSettings::default(),
        }
    }
}

/// SplitMix64 finalizer over a base seed and a path of indices.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut state = base;
    for &p in path {
        state = state
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(p.wrapping_mul(0xD1B5_4A32_D192_ED03));
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        state = z ^ (z >> 31);
    }
    state
}

/// FNV-1a digest, used to show that cells share identical corpora.
pub fn digest(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

const SEED_CORPUS: u64 = 1;
const SEED_NOISE: u64 = 2;
const SEED_TRIALS: u64 = 3;
const SEED_MODEL: u64 = 4;
const SEED_TRAIN: u64 = 5;

/// Data shared by every mode in one (repeat) block.
#[derive(Debug, Clone)]
pub struct RepeatData {
    pub train: NoisyCorpus,
    pub test: NoisyCorpus,
    pub trials: TrialList,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::Input("plan has no modes".into()));
        }
        if self.noise_rates.is_empty() {
            return Err(Error::Input("plan has no noise rates".into()));
        }
        if let Some(bad) = self.noise_rates.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(Error::config(format!("noise rate {bad} outside [0, 1)")));
        }
        let unique_rates: BTreeSet<u64> = self.noise_rates.iter().map(|r| r.to_bits()).collect();
        let unique_modes: BTreeSet<Mode> = self.modes.iter().copied().collect();
        if unique_rates.len() != self.noise_rates.len() || unique_modes.len() != self.modes.len() {
            return Err(Error::config("noise rates and modes must not repeat"));
        }
        if self.repeats < 1 {
            return Err(Error::config("repeats must be at least 1"));
        }
        self.corpus.validate()?;
        if self.test_speakers < 2 || self.test_utterances_per_speaker < 2 {
            return Err(Error::config("test corpus needs at least 2 speakers x 2 utterances"));
        }
        for &mode in &self.modes {
            self.train_config(mode, 0).validate()?;
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("plan file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&textio::read_file(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    /// Training corpus, held-out corpus and trials for one repeat.
    pub fn repeat_data(&self, repeat: usize) -> Result<RepeatData> {
        let seed = derive_seed(self.seed, &[SEED_CORPUS, repeat as u64]);
        let train_cfg = CorpusConfig {
            seed,
            speaker_offset: 0,
            ..self.corpus.clone()
        };
        let test_cfg = CorpusConfig {
            num_speakers: self.test_speakers,
            utterances_per_speaker: self.test_utterances_per_speaker,
            speaker_offset: self.corpus.num_speakers,
            ..train_cfg.clone()
        };
        let train = generate_corpus(&train_cfg)?;
        let test = generate_corpus(&test_cfg)?;
        let trials = make_trials(
            &test,
            self.num_target_trials,
            self.num_nontarget_trials,
            derive_seed(self.seed, &[SEED_TRIALS, repeat as u64]),
        )?;
        Ok(RepeatData { train, test, trials })
    }

    /// Noisy training corpus for one (eta, repeat) cell; the mask depends only on the seed, eta and repeat.
    pub fn noisy_corpus(&self, data: &RepeatData, eta: f64, repeat: usize) -> Result<NoisyCorpus> {
        let noise_seed = derive_seed(self.seed, &[SEED_NOISE, repeat as u64, eta.to_bits()]);
        inject_symmetric_noise_with(&data.train, eta, noise_seed, self.flip_mode)
    }

    pub fn train_config(&self, mode: Mode, repeat: usize) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            mode,
            w: t.w,
            k: t.k,
            max_epochs: t.max_epochs,
            batch_size: t.batch_size,
            optimizer: t.optimizer.clone(),
            model: ModelConfig {
                feature_dim: self.corpus.feature_dim,
                hidden_dims: t.hidden_dims.clone(),
                embedding_dim: t.embedding_dim,
                num_classes: self.corpus.num_speakers,
                margin: t.margin,
                scale: t.scale,
                activation: t.activation,
                seed: derive_seed(self.seed, &[SEED_MODEL, repeat as u64]),
            },
            seed: derive_seed(self.seed, &[SEED_TRAIN, repeat as u64]),
            self_alpha: t.self_alpha,
            eval_interval: self.eval_interval,
            retain_history: t.retain_history,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub epoch: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub mode: Mode,
    pub eta: f64,
    pub repeat: usize,
    pub realized_noise_rate: f64,
    pub corpus_digest: String,
    pub final_eer: f64,
    pub final_precision: Option<f64>,
    pub final_recall: Option<f64>,
    /// First epoch after early learning.
    pub post_early_epoch: usize,
    pub post_early_precision: Option<f64>,
    pub post_early_recall: Option<f64>,
    pub snapshots: Vec<Snapshot>,
}

impl ResultRow {
    pub fn snapshot(&self, epoch: usize) -> Option<&Snapshot> {
        self.snapshots.iter().find(|s| s.epoch == epoch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub modes: Vec<Mode>,
    pub noise_rates: Vec<f64>,
    pub repeats: usize,
    pub snapshot_epochs: Vec<usize>,
    pub rows: Vec<ResultRow>,
}

impl ResultsTable {
    pub fn row(&self, mode: Mode, eta: f64, repeat: usize) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.mode == mode && r.eta == eta && r.repeat == repeat)
    }

    /// Rows sorted by mode, then noise rate, then repeat.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| {
            a.mode
                .cmp(&b.mode)
                .then(a.eta.total_cmp(&b.eta))
                .then(a.repeat.cmp(&b.repeat))
        });
    }

    /// Rows must cover the mode x rate x repeat product exactly once.
    pub fn check_complete(&self) -> Result<()> {
        if self.modes.is_empty() || self.noise_rates.is_empty() || self.repeats == 0 {
            return Err(Error::Input("results table has an empty grid".into()));
        }
        let expected = self.modes.len() * self.noise_rates.len() * self.repeats;
        let mut seen = BTreeSet::new();
        for r in &self.rows {
            let in_grid = self.modes.contains(&r.mode)
                && self.noise_rates.iter().any(|e| e.to_bits() == r.eta.to_bits())
                && r.repeat < self.repeats;
            if !in_grid {
                return Err(Error::Input(format!(
                    "row (mode={}, eta={}, repeat={}) is outside the plan grid",
                    r.mode, r.eta, r.repeat
                )));
            }
            if !seen.insert((r.mode, r.eta.to_bits(), r.repeat)) {
                return Err(Error::Input(format!(
                    "duplicate row (mode={}, eta={}, repeat={})",
                    r.mode, r.eta, r.repeat
                )));
            }
        }
        if seen.len() != expected {
            return Err(Error::Input(format!(
                "results table has {} of {expected} cells",
                seen.len()
            )));
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "mode,eta,repeat,realized_noise_rate,final_eer,final_precision,final_recall,\
             post_early_epoch,post_early_precision,post_early_recall",
        );
        for e in &self.snapshot_epochs {
            let _ = write!(out, ",precision_epoch_{e},recall_epoch_{e}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.mode,
                sig6(r.eta),
                r.repeat,
                sig6(r.realized_noise_rate),
                sig6(r.final_eer),
                sig6_opt(r.final_precision),
                sig6_opt(r.final_recall),
                r.post_early_epoch,
                sig6_opt(r.post_early_precision),
                sig6_opt(r.post_early_recall),
            );
            for e in &self.snapshot_epochs {
                let snap = r.snapshot(*e);
                let _ = write!(
                    out,
                    ",{},{}",
                    sig6_opt(snap.and_then(|s| s.precision)),
                    sig6_opt(snap.and_then(|s| s.recall))
                );
            }
            out.push('\n');
        }
        out
    }

    /// Final EER pivoted to one line per (mode, repeat) and one column per noise rate.
    pub fn eer_pivot_csv(&self) -> String {
        let mut rates = self.noise_rates.clone();
        rates.sort_by(f64::total_cmp);
        let mut modes = self.modes.clone();
        modes.sort();
        let mut out = String::from("mode,repeat");
        for r in &rates {
            let _ = write!(out, ",{}%", sig6(r * 100.0));
        }
        out.push('\n');
        for mode in modes {
            for repeat in 0..self.repeats {
                let _ = write!(out, "{mode},{repeat}");
                for &eta in &rates {
                    let cell = self.row(mode, eta, repeat).map(|r| sig6(r.final_eer));
                    let _ = write!(out, ",{}", cell.unwrap_or_default());
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("results serialize");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
    Both,
}

/// Writes `results.csv`, `eer_table.csv` and/or `results.json` in `dir`, sorted
/// deterministically. Returns the written paths.
pub fn emit_tables(results: &ResultsTable, dir: &Path, format: TableFormat) -> Result<Vec<PathBuf>> {
    results.check_complete()?;
    let mut sorted = results.clone();
    sorted.sort();
    let mut written = Vec::new();
    if matches!(format, TableFormat::Csv | TableFormat::Both) {
        let path = dir.join("results.csv");
        textio::write_file(&path, &sorted.to_csv())?;
        written.push(path);
        let path = dir.join("eer_table.csv");
        textio::write_file(&path, &sorted.eer_pivot_csv())?;
        written.push(path);
    }
    if matches!(format, TableFormat::Json | TableFormat::Both) {
        let path = dir.join("results.json");
        textio::write_file(&path, &sorted.to_json())?;
        written.push(path);
    }
    Ok(written)
}

pub fn load_results(path: &Path) -> Result<ResultsTable> {
    ResultsTable::from_json(&textio::read_file(path)?)
}

fn epochs_csv(logs: &[EpochLog]) -> String {
    let mut out = String::from(
        "epoch,mean_training_loss,num_selected,num_rejected,selection_precision,selection_recall,\
         learning_rate,parameter_updates,eer\n",
    );
    for l in logs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            l.epoch,
            sig6_opt(l.mean_training_loss),
            l.num_selected,
            l.num_rejected,
            sig6_opt(l.selection_precision),
            sig6_opt(l.selection_recall),
            sig6(l.learning_rate),
            l.parameter_updates,
            sig6_opt(l.eer_on_trials),
        );
    }
    out
}

#[derive(Serialize)]
struct RunSummary<'a> {
    mode: Mode,
    eta: f64,
    repeat: usize,
    final_eer: String,
    realized_noise_rate: String,
    corpus_digest: &'a str,
    warnings: &'a [String],
    duration_secs: f64,
}

/// Writes one run's config snapshot, epoch table, checkpoint and summary under `dir`.
pub fn write_run_artifacts(dir: &Path, run: &RunResult, row: &ResultRow) -> Result<()> {
    let config = serde_json::to_string_pretty(&run.config).expect("config serializes");
    textio::write_file(&dir.join("config.json"), &(config + "\n"))?;
    textio::write_file(&dir.join("epochs.csv"), &epochs_csv(&run.logs))?;
    run.model.save_checkpoint(&dir.join("checkpoint.txt"))?;
    let summary = RunSummary {
        mode: row.mode,
        eta: row.eta,
        repeat: row.repeat,
        final_eer: sig6(run.final_eer),
        realized_noise_rate: sig6(row.realized_noise_rate),
        corpus_digest: &row.corpus_digest,
        warnings: &run.warnings,
        duration_secs: run.duration_secs,
    };
    let summary = serde_json::to_string_pretty(&summary).expect("summary serializes");
    textio::write_file(&dir.join("result.json"), &(summary + "\n"))
}

/// Runs one cell and returns its table row.
pub fn run_cell(
    plan: &ExperimentPlan,
    data: &RepeatData,
    corpus: &NoisyCorpus,
    mode: Mode,
    eta: f64,
    repeat: usize,
) -> Result<(RunResult, ResultRow)> {
    let config = plan.train_config(mode, repeat);
    let eval = EvalSet {
        corpus: &data.test,
        trials: &data.trials,
    };
    let run = run_experiment(&config, corpus, eval)?;
    let row = result_row(plan, &run, corpus, eta, repeat);
    Ok((run, row))
}

fn result_row(plan: &ExperimentPlan, run: &RunResult, corpus: &NoisyCorpus, eta: f64, repeat: usize) -> ResultRow {
    let last = run.final_log();
    let post_early_epoch = run.config.effective_w().min(run.logs.len() - 1);
    let post = run.log(post_early_epoch);
    let snapshots = plan
        .snapshot_epochs
        .iter()
        .map(|&epoch| {
            let log = run.log(epoch);
            Snapshot {
                epoch,
                precision: log.and_then(|l| l.selection_precision),
                recall: log.and_then(|l| l.selection_recall),
            }
        })
        .collect();
    ResultRow {
        mode: run.config.mode,
        eta,
        repeat,
        realized_noise_rate: corpus.realized_noise_rate(),
        corpus_digest: digest(&corpus_to_string(corpus)),
        final_eer: run.final_eer,
        final_precision: last.selection_precision,
        final_recall: last.selection_recall,
        post_early_epoch,
        post_early_precision: post.and_then(|l| l.selection_precision),
        post_early_recall: post.and_then(|l| l.selection_recall),
        snapshots,
    }
}

pub fn cell_dir_name(mode: Mode, eta: f64, repeat: usize) -> String {
    format!("{mode}_eta{}_r{repeat}", sig6(eta))
}

/// Runs every (repeat, noise rate, mode) cell. All modes of one (rate, repeat)
/// train on the same corpus, trials and initial model. When the plan has an
/// output directory, per-run artifacts and the aggregate tables are written.
pub fn run_plan(plan: &ExperimentPlan) -> Result<ResultsTable> {
    run_plan_with(plan, |_, _| {})
}

/// [`run_plan`] with a progress callback invoked after each cell.
pub fn run_plan_with(
    plan: &ExperimentPlan,
    mut progress: impl FnMut(&ResultRow, &RunResult),
) -> Result<ResultsTable> {
    plan.validate()?;
    if let Some(dir) = &plan.output_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut rows = Vec::with_capacity(plan.modes.len() * plan.noise_rates.len() * plan.repeats);
    for repeat in 0..plan.repeats {
        let data = plan.repeat_data(repeat)?;
        if let Some(dir) = &plan.output_dir {
            let base = dir.join("data").join(format!("r{repeat}"));
            save_corpus(&data.test, &base.join("test_corpus.txt"))?;
            save_trials(&data.trials, &base.join("trials.txt"))?;
        }
        for &eta in &plan.noise_rates {
            let corpus = plan.noisy_corpus(&data, eta, repeat)?;
            if let Some(dir) = &plan.output_dir {
                let path = dir
                    .join("data")
                    .join(format!("r{repeat}"))
                    .join(format!("train_eta{}.txt", sig6(eta)));
                save_corpus(&corpus, &path)?;
            }
            for &mode in &plan.modes {
                let cell = |source: Error| Error::Cell {
                    mode: mode.to_string(),
                    eta,
                    repeat,
                    source: Box::new(source),
                };
                let (run, row) = run_cell(plan, &data, &corpus, mode, eta, repeat).map_err(cell)?;
                if let Some(dir) = &plan.output_dir {
                    let run_dir = dir.join("runs").join(cell_dir_name(mode, eta, repeat));
                    write_run_artifacts(&run_dir, &run, &row).map_err(cell)?;
                }
                progress(&row, &run);
                rows.push(row);
            }
        }
    }
    let mut table = ResultsTable {
        modes: plan.modes.clone(),
        noise_rates: plan.noise_rates.clone(),
        repeats: plan.repeats,
        snapshot_epochs: plan.snapshot_epochs.clone(),
        rows,
    };
    table.sort();
    if let Some(dir) = &plan.output_dir {
        emit_tables(&table, dir, TableFormat::Both)?;
    }
    Ok(table)
}
