//! Synthetic multi-speaker corpora, symmetric label noise and verification trials.
//!
//! Every speaker is an isotropic Gaussian cloud around a class mean. Class
//! means live in a seeded random subspace of the feature space, so that a
//! training corpus and a held-out corpus generated from the same `seed` (with
//! different `speaker_offset`s) share the speaker subspace but have disjoint
//! speakers.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textio::{self, Header};

const CORPUS_MAGIC: &str = "orgate-corpus";
const CORPUS_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub num_speakers: usize,
    pub utterances_per_speaker: usize,
    pub feature_dim: usize,
    /// Expected Euclidean distance between two class means.
    pub class_separation: f64,
    pub within_class_stddev: f64,
    /// Rank of the subspace holding the class means; 0 means the full feature space.
    #[serde(default)]
    pub subspace_dim: usize,
    /// Global index of this corpus' first speaker. Corpora with the same seed and
    /// non-overlapping speaker ranges have disjoint speakers.
    #[serde(default)]
    pub speaker_offset: usize,
    pub seed: u64,
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_speakers < 2 {
            return Err(Error::config("num_speakers must be at least 2"));
        }
        if self.utterances_per_speaker < 2 {
            return Err(Error::config("utterances_per_speaker must be at least 2"));
        }
        if self.feature_dim < 1 {
            return Err(Error::config("feature_dim must be at least 1"));
        }
        if self.subspace_dim > self.feature_dim {
            return Err(Error::config("subspace_dim cannot exceed feature_dim"));
        }
        if !(self.class_separation.is_finite() && self.class_separation >= 0.0) {
            return Err(Error::config("class_separation must be finite and nonnegative"));
        }
        if !(self.within_class_stddev.is_finite() && self.within_class_stddev > 0.0) {
            return Err(Error::config("within_class_stddev must be finite and positive"));
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        self.num_speakers * self.utterances_per_speaker
    }

    fn effective_subspace_dim(&self) -> usize {
        if self.subspace_dim == 0 {
            self.feature_dim
        } else {
            self.subspace_dim
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: usize,
    pub features: Vec<f64>,
    pub true_label: usize,
    pub observed_label: usize,
    pub is_corrupted: bool,
}

/// How samples are chosen for flipping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipMode {
    /// Each sample flips independently with probability eta.
    #[default]
    Bernoulli,
    /// Exactly `round(eta * n)` samples, chosen uniformly without replacement.
    ExactCount,
}

impl FlipMode {
    fn as_str(self) -> &'static str {
        match self {
            FlipMode::Bernoulli => "bernoulli",
            FlipMode::ExactCount => "exact_count",
        }
    }

    fn parse(raw: &str) -> Option<Self> {
        match raw {
            "bernoulli" => Some(FlipMode::Bernoulli),
            "exact_count" => Some(FlipMode::ExactCount),
            _ => None,
        }
    }
}

/// Record of the noise applied to a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseInfo {
    pub rate: f64,
    pub seed: u64,
    pub mode: FlipMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyCorpus {
    pub config: CorpusConfig,
    pub samples: Vec<Sample>,
    /// Nominal noise rate; `None` for a corpus that was never passed through noise injection.
    pub noise: Option<NoiseInfo>,
}

impl NoisyCorpus {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_speakers
    }

    pub fn noise_rate(&self) -> f64 {
        self.noise.map_or(0.0, |n| n.rate)
    }

    pub fn num_corrupted(&self) -> usize {
        self.samples.iter().filter(|s| s.is_corrupted).count()
    }

    /// Realized fraction of corrupted samples.
    pub fn realized_noise_rate(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.num_corrupted() as f64 / self.samples.len() as f64
        }
    }

    pub fn observed_labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.observed_label).collect()
    }

    /// Checks the structural invariants; used after loading.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let c = self.config.num_speakers;
        for (idx, s) in self.samples.iter().enumerate() {
            if s.id != idx {
                return Err(Error::state(format!("sample id {} at position {idx}", s.id)));
            }
            if s.true_label >= c || s.observed_label >= c {
                return Err(Error::state(format!("sample {idx} has a label outside [0, {c})")));
            }
            if s.is_corrupted != (s.true_label != s.observed_label) {
                return Err(Error::state(format!("sample {idx} has an inconsistent corruption flag")));
            }
            if s.features.len() != self.config.feature_dim {
                return Err(Error::shape(self.config.feature_dim, s.features.len()));
            }
        }
        Ok(())
    }
}

/// Rng for one independent stream derived from a seed.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Orthonormal basis (rows) of a seeded random `rank`-dimensional subspace.
fn subspace_basis(seed: u64, feature_dim: usize, rank: usize) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, 0);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rank);
    while basis.len() < rank {
        let mut v: Vec<f64> = (0..feature_dim).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        // Degenerate draws are vanishingly rare; redraw instead of dividing by ~0.
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

/// Generates a clean corpus: `num_speakers` blocks of `utterances_per_speaker`
/// samples each, labels in speaker order.
pub fn generate_corpus(config: &CorpusConfig) -> Result<NoisyCorpus> {
    config.validate()?;
    let rank = config.effective_subspace_dim();
    let basis = subspace_basis(config.seed, config.feature_dim, rank);
    // Coordinates ~ N(0, sep^2 / (2 rank)) give E|mu_a - mu_b|^2 = sep^2.
    let coord_scale = config.class_separation / (2.0 * rank as f64).sqrt();

    let mut samples = Vec::with_capacity(config.num_samples());
    for label in 0..config.num_speakers {
        let speaker = (config.speaker_offset + label) as u64;
        let mut mean_rng = stream_rng(config.seed, 2 * speaker + 1);
        let mut mean = vec![0.0; config.feature_dim];
        for b in &basis {
            let z: f64 = mean_rng.sample(StandardNormal);
            mean.iter_mut().zip(b).for_each(|(m, x)| *m += coord_scale * z * x);
        }
        let mut utt_rng = stream_rng(config.seed, 2 * speaker + 2);
        for _ in 0..config.utterances_per_speaker {
            let features = mean
                .iter()
                .map(|m| {
                    let e: f64 = utt_rng.sample(StandardNormal);
                    m + config.within_class_stddev * e
                })
                .collect();
            samples.push(Sample {
                id: samples.len(),
                features,
                true_label: label,
                observed_label: label,
                is_corrupted: false,
            });
        }
    }
    Ok(NoisyCorpus {
        config: config.clone(),
        samples,
        noise: None,
    })
}

/// Flips labels symmetrically: a flipped sample's label is uniform over the
/// `c - 1` wrong classes. Uses per-sample Bernoulli selection.
pub fn inject_symmetric_noise(corpus: &NoisyCorpus, eta: f64, seed: u64) -> Result<NoisyCorpus> {
    inject_symmetric_noise_with(corpus, eta, seed, FlipMode::Bernoulli)
}

pub fn inject_symmetric_noise_with(
    corpus: &NoisyCorpus,
    eta: f64,
    seed: u64,
    mode: FlipMode,
) -> Result<NoisyCorpus> {
    if !(0.0..1.0).contains(&eta) {
        return Err(Error::config(format!("noise rate {eta} outside [0, 1)")));
    }
    if corpus.noise.is_some() || corpus.samples.iter().any(|s| s.is_corrupted) {
        return Err(Error::state("corpus already carries injected noise"));
    }
    let c = corpus.num_classes();
    if c < 2 {
        return Err(Error::config("symmetric noise needs at least 2 classes"));
    }

    let n = corpus.len();
    let mut select_rng = stream_rng(seed, 0);
    let flip: Vec<bool> = match mode {
        FlipMode::Bernoulli => (0..n).map(|_| select_rng.gen::<f64>() < eta).collect(),
        FlipMode::ExactCount => {
            let count = (eta * n as f64).round() as usize;
            let mut mask = vec![false; n];
            for idx in rand::seq::index::sample(&mut select_rng, n, count) {
                mask[idx] = true;
            }
            mask
        }
    };

    let mut label_rng = stream_rng(seed, 1);
    let mut out = corpus.clone();
    for (sample, flip) in out.samples.iter_mut().zip(flip) {
        if flip {
            // Uniform over the c-1 labels other than the true one.
            let draw = label_rng.gen_range(0..c - 1);
            let label = if draw >= sample.true_label { draw + 1 } else { draw };
            sample.observed_label = label;
            sample.is_corrupted = true;
        }
    }
    out.noise = Some(NoiseInfo {
        rate: eta,
        seed,
        mode,
    });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub sample_a: usize,
    pub sample_b: usize,
    pub is_target: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialList {
    pub trials: Vec<Trial>,
}

impl TrialList {
    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn num_targets(&self) -> usize {
        self.trials.iter().filter(|t| t.is_target).count()
    }
}

fn unordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Samples `k` distinct unordered pairs out of `pool` pairs described by `total`
/// and `draw`; enumerates exhaustively when the request is a large fraction.
fn sample_pairs(
    rng: &mut ChaCha8Rng,
    count: usize,
    total: usize,
    mut draw: impl FnMut(&mut ChaCha8Rng) -> (usize, usize),
    enumerate: impl FnOnce() -> Vec<(usize, usize)>,
) -> Vec<(usize, usize)> {
    if count == 0 {
        return Vec::new();
    }
    if 2 * count >= total {
        let mut all = enumerate();
        all.shuffle(rng);
        all.truncate(count);
        return all;
    }
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let pair = draw(rng);
        if seen.insert(unordered(pair.0, pair.1)) {
            out.push(pair);
        }
    }
    out
}

/// Samples distinct target (same speaker) and nontarget (different speaker)
/// pairs from a held-out corpus. Targets come first, then nontargets.
pub fn make_trials(
    test_corpus: &NoisyCorpus,
    num_target: usize,
    num_nontarget: usize,
    seed: u64,
) -> Result<TrialList> {
    let c = test_corpus.num_classes();
    let mut by_speaker: Vec<Vec<usize>> = vec![Vec::new(); c];
    for s in &test_corpus.samples {
        let bucket = by_speaker
            .get_mut(s.true_label)
            .ok_or_else(|| Error::config(format!("sample {} label out of range", s.id)))?;
        bucket.push(s.id);
    }
    let speakers: Vec<&Vec<usize>> = by_speaker.iter().filter(|v| !v.is_empty()).collect();
    if speakers.len() < 2 || speakers.iter().any(|v| v.len() < 2) {
        return Err(Error::config(
            "trials need at least 2 speakers with at least 2 samples each",
        ));
    }

    let target_total: usize = speakers.iter().map(|v| v.len() * (v.len() - 1) / 2).sum();
    let n: usize = speakers.iter().map(|v| v.len()).sum();
    let nontarget_total = n * (n - 1) / 2 - target_total;
    if num_target > target_total {
        return Err(Error::config(format!(
            "{num_target} target trials requested but only {target_total} exist"
        )));
    }
    if num_nontarget > nontarget_total {
        return Err(Error::config(format!(
            "{num_nontarget} nontarget trials requested but only {nontarget_total} exist"
        )));
    }

    let mut rng = stream_rng(seed, 0);
    let targets = sample_pairs(
        &mut rng,
        num_target,
        target_total,
        |rng| {
            let spk = speakers.choose(rng).expect("nonempty");
            let picked: Vec<&usize> = spk.choose_multiple(rng, 2).collect();
            (*picked[0], *picked[1])
        },
        || {
            let mut all = Vec::with_capacity(target_total);
            for spk in &speakers {
                for (i, &a) in spk.iter().enumerate() {
                    for &b in &spk[i + 1..] {
                        all.push((a, b));
                    }
                }
            }
            all
        },
    );
    let samples = &test_corpus.samples;
    let nontargets = sample_pairs(
        &mut rng,
        num_nontarget,
        nontarget_total,
        |rng| loop {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if samples[a].true_label != samples[b].true_label {
                return (samples[a].id, samples[b].id);
            }
        },
        || {
            let mut all = Vec::with_capacity(nontarget_total);
            for a in 0..n {
                for b in a + 1..n {
                    if samples[a].true_label != samples[b].true_label {
                        all.push((samples[a].id, samples[b].id));
                    }
                }
            }
            all
        },
    );

    let trials = targets
        .into_iter()
        .map(|(a, b)| Trial {
            sample_a: a,
            sample_b: b,
            is_target: true,
        })
        .chain(nontargets.into_iter().map(|(a, b)| Trial {
            sample_a: a,
            sample_b: b,
            is_target: false,
        }))
        .collect();
    Ok(TrialList { trials })
}

/// Serializes a corpus to the versioned text format.
pub fn corpus_to_string(corpus: &NoisyCorpus) -> String {
    let cfg = &corpus.config;
    let mut out = String::new();
    let _ = writeln!(out, "{CORPUS_MAGIC} v{CORPUS_VERSION}");
    let _ = writeln!(out, "num_speakers={}", cfg.num_speakers);
    let _ = writeln!(out, "utterances_per_speaker={}", cfg.utterances_per_speaker);
    let _ = writeln!(out, "feature_dim={}", cfg.feature_dim);
    let _ = writeln!(out, "class_separation={}", cfg.class_separation);
    let _ = writeln!(out, "within_class_stddev={}", cfg.within_class_stddev);
    let _ = writeln!(out, "subspace_dim={}", cfg.subspace_dim);
    let _ = writeln!(out, "speaker_offset={}", cfg.speaker_offset);
    let _ = writeln!(out, "seed={}", cfg.seed);
    match corpus.noise {
        Some(noise) => {
            let _ = writeln!(out, "noise_rate={}", noise.rate);
            let _ = writeln!(out, "noise_seed={}", noise.seed);
            let _ = writeln!(out, "flip_mode={}", noise.mode.as_str());
        }
        None => {
            let _ = writeln!(out, "noise_rate=none");
        }
    }
    let _ = writeln!(out, "samples={}", corpus.samples.len());
    out.push_str("---\n");
    for s in &corpus.samples {
        let _ = write!(
            out,
            "{},{},{},{},",
            s.id,
            s.true_label,
            s.observed_label,
            u8::from(s.is_corrupted)
        );
        for (i, f) in s.features.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            // `Display` for f64 is the shortest exact round-trip form.
            let _ = write!(out, "{f}");
        }
        out.push('\n');
    }
    out
}

pub fn corpus_from_str(text: &str) -> Result<NoisyCorpus> {
    textio::check_terminated(text)?;
    let lines: Vec<&str> = text.lines().collect();
    textio::check_magic(&lines, CORPUS_MAGIC, CORPUS_VERSION)?;
    let header = Header::parse(&lines, 1)?;
    let config = CorpusConfig {
        num_speakers: header.get("num_speakers")?,
        utterances_per_speaker: header.get("utterances_per_speaker")?,
        feature_dim: header.get("feature_dim")?,
        class_separation: header.get("class_separation")?,
        within_class_stddev: header.get("within_class_stddev")?,
        subspace_dim: header.get("subspace_dim")?,
        speaker_offset: header.get("speaker_offset")?,
        seed: header.get("seed")?,
    };
    config
        .validate()
        .map_err(|e| Error::parse(header.end_line, e.to_string()))?;
    let noise = if header.get_str("noise_rate")? == "none" {
        None
    } else {
        let mode_raw = header.get_str("flip_mode")?;
        Some(NoiseInfo {
            rate: header.get("noise_rate")?,
            seed: header.get("noise_seed")?,
            mode: FlipMode::parse(mode_raw).ok_or_else(|| {
                Error::parse(header.end_line, format!("unknown flip_mode {mode_raw:?}"))
            })?,
        })
    };
    let expected: usize = header.get("samples")?;
    let c = config.num_speakers;

    let records = &lines[header.end_line..];
    if records.len() != expected {
        return Err(Error::parse(
            lines.len(),
            format!("expected {expected} sample records, found {}", records.len()),
        ));
    }
    let mut samples = Vec::with_capacity(expected);
    for (offset, record) in records.iter().enumerate() {
        let line = header.end_line + offset + 1;
        let fields: Vec<&str> = record.splitn(5, ',').collect();
        if fields.len() != 5 {
            return Err(Error::parse(line, "expected 5 comma-separated fields"));
        }
        let id: usize = textio::parse_field(fields[0], line, "id")?;
        if id != offset {
            return Err(Error::parse(line, format!("expected id {offset}, found {id}")));
        }
        let true_label: usize = textio::parse_field(fields[1], line, "true_label")?;
        let observed_label: usize = textio::parse_field(fields[2], line, "observed_label")?;
        if true_label >= c || observed_label >= c {
            return Err(Error::parse(line, format!("label outside [0, {c})")));
        }
        let is_corrupted = textio::parse_bool01(fields[3], line, "is_corrupted")?;
        if is_corrupted != (true_label != observed_label) {
            return Err(Error::parse(line, "corruption flag disagrees with labels"));
        }
        let features = fields[4]
            .split_whitespace()
            .map(|f| textio::parse_field::<f64>(f, line, "feature"))
            .collect::<Result<Vec<f64>>>()?;
        if features.len() != config.feature_dim {
            return Err(Error::parse(
                line,
                format!("expected {} features, found {}", config.feature_dim, features.len()),
            ));
        }
        samples.push(Sample {
            id,
            features,
            true_label,
            observed_label,
            is_corrupted,
        });
    }
    Ok(NoisyCorpus {
        config,
        samples,
        noise,
    })
}

pub fn save_corpus(corpus: &NoisyCorpus, path: &Path) -> Result<()> {
    textio::write_file(path, &corpus_to_string(corpus))
}

pub fn load_corpus(path: &Path) -> Result<NoisyCorpus> {
    corpus_from_str(&textio::read_file(path)?)
}

pub fn trials_to_string(trials: &TrialList) -> String {
    let mut out = String::with_capacity(trials.len() * 12);
    for t in &trials.trials {
        let _ = writeln!(out, "{},{},{}", t.sample_a, t.sample_b, u8::from(t.is_target));
    }
    out
}

pub fn trials_from_str(text: &str) -> Result<TrialList> {
    textio::check_terminated(text)?;
    let mut trials = Vec::new();
    for (idx, record) in text.lines().enumerate() {
        let line = idx + 1;
        if record.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = record.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::parse(line, "expected sample_id_a,sample_id_b,is_target"));
        }
        let sample_a = textio::parse_field(fields[0], line, "sample_id_a")?;
        let sample_b = textio::parse_field(fields[1], line, "sample_id_b")?;
        if sample_a == sample_b {
            return Err(Error::parse(line, "trial pairs a sample with itself"));
        }
        trials.push(Trial {
            sample_a,
            sample_b,
            is_target: textio::parse_bool01(fields[2], line, "is_target")?,
        });
    }
    Ok(TrialList { trials })
}

pub fn save_trials(trials: &TrialList, path: &Path) -> Result<()> {
    textio::write_file(path, &trials_to_string(trials))
}

pub fn load_trials(path: &Path) -> Result<TrialList> {
    trials_from_str(&textio::read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(c: usize, utts: usize) -> CorpusConfig {
        CorpusConfig {
            num_speakers: c,
            utterances_per_speaker: utts,
            feature_dim: 4,
            class_separation: 3.0,
            within_class_stddev: 1.0,
            subspace_dim: 0,
            speaker_offset: 0,
            seed: 7,
        }
    }

    #[test]
    fn labels_follow_speaker_order() {
        let corpus = generate_corpus(&config(2, 2)).unwrap();
        let labels: Vec<usize> = corpus.samples.iter().map(|s| s.true_label).collect();
        assert_eq!(labels, vec![0, 0, 1, 1]);
        assert!(corpus.samples.iter().all(|s| !s.is_corrupted));
        assert_eq!(corpus.observed_labels(), labels);
    }

    #[test]
    fn rejects_bad_dimensions() {
        for bad in [
            CorpusConfig { num_speakers: 1, ..config(2, 2) },
            CorpusConfig { utterances_per_speaker: 1, ..config(2, 2) },
            CorpusConfig { feature_dim: 0, ..config(2, 2) },
            CorpusConfig { subspace_dim: 9, ..config(2, 2) },
            CorpusConfig { within_class_stddev: 0.0, ..config(2, 2) },
        ] {
            assert!(matches!(generate_corpus(&bad), Err(Error::Config(_))));
        }
    }

    #[test]
    fn offset_speakers_differ_but_share_the_subspace() {
        let mut cfg = config(3, 4);
        cfg.feature_dim = 8;
        cfg.subspace_dim = 2;
        let train = generate_corpus(&cfg).unwrap();
        let test = generate_corpus(&CorpusConfig { speaker_offset: 3, ..cfg.clone() }).unwrap();
        assert_ne!(train.samples[0].features, test.samples[0].features);
        // Same speaker index through a different offset reproduces the speaker.
        let shifted = generate_corpus(&CorpusConfig { speaker_offset: 1, ..cfg }).unwrap();
        assert_eq!(train.samples[4].features, shifted.samples[0].features);
    }

    #[test]
    fn zero_noise_is_identity() {
        let corpus = generate_corpus(&config(3, 5)).unwrap();
        let noisy = inject_symmetric_noise(&corpus, 0.0, 11).unwrap();
        assert_eq!(noisy.samples, corpus.samples);
        assert_eq!(noisy.num_corrupted(), 0);
    }

    #[test]
    fn noise_errors() {
        let corpus = generate_corpus(&config(3, 5)).unwrap();
        assert!(matches!(inject_symmetric_noise(&corpus, 1.0, 1), Err(Error::Config(_))));
        assert!(matches!(inject_symmetric_noise(&corpus, -0.1, 1), Err(Error::Config(_))));
        let noisy = inject_symmetric_noise(&corpus, 0.3, 1).unwrap();
        assert!(matches!(inject_symmetric_noise(&noisy, 0.3, 2), Err(Error::State(_))));
    }

    #[test]
    fn exact_count_mode_flips_exactly() {
        let corpus = generate_corpus(&config(4, 50)).unwrap();
        let noisy = inject_symmetric_noise_with(&corpus, 0.25, 3, FlipMode::ExactCount).unwrap();
        assert_eq!(noisy.num_corrupted(), 50);
    }

    #[test]
    fn trials_on_minimal_corpus() {
        let corpus = generate_corpus(&config(2, 2)).unwrap();
        let trials = make_trials(&corpus, 2, 0, 5).unwrap();
        assert_eq!(trials.len(), 2);
        for t in &trials.trials {
            assert!(t.is_target);
            assert_ne!(t.sample_a, t.sample_b);
            assert_eq!(
                corpus.samples[t.sample_a].true_label,
                corpus.samples[t.sample_b].true_label
            );
        }
        assert!(make_trials(&corpus, 0, 0, 5).unwrap().is_empty());
        assert!(matches!(make_trials(&corpus, 3, 0, 5), Err(Error::Config(_))));
        assert!(matches!(make_trials(&corpus, 0, 5, 5), Err(Error::Config(_))));
    }

    #[test]
    fn corpus_parse_errors() {
        let corpus = inject_symmetric_noise(&generate_corpus(&config(2, 3)).unwrap(), 0.2, 4).unwrap();
        let text = corpus_to_string(&corpus);
        assert_eq!(corpus_from_str(&text).unwrap(), corpus);

        // Label >= c.
        let bad_label = text.replacen("\n0,0,0,0,", "\n0,0,2,1,", 1);
        assert!(matches!(corpus_from_str(&bad_label), Err(Error::Parse { .. })));

        // Truncated.
        let truncated: String = text.lines().take(text.lines().count() - 2).collect::<Vec<_>>().join("\n");
        assert!(matches!(corpus_from_str(&truncated), Err(Error::Parse { .. })));

        // Half a record.
        let cut = &text[..text.len() - 10];
        assert!(matches!(corpus_from_str(cut), Err(Error::Parse { .. })));

        let future = text.replacen("orgate-corpus v1", "orgate-corpus v2", 1);
        assert!(matches!(corpus_from_str(&future), Err(Error::Format(_))));
    }

    #[test]
    fn trial_file_round_trip() {
        let corpus = generate_corpus(&config(3, 4)).unwrap();
        let trials = make_trials(&corpus, 5, 5, 2).unwrap();
        assert_eq!(trials_from_str(&trials_to_string(&trials)).unwrap(), trials);
        assert!(trials_from_str("1,1,1\n").is_err());
        assert!(trials_from_str("1,2\n").is_err());
    }
}
