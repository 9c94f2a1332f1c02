//! Independent reference implementations used by the property and acceptance suites.
#![allow(dead_code)]

use orgate_core::dataset::NoisyCorpus;
use orgate_core::eval::ScoredTrial;
use orgate_core::model::{AmSoftmax, CosineHead};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// 0.99 quantile of chi-square with 8 degrees of freedom.
pub const CHI2_099_DF8: f64 = 20.090;

/// Label `j` is in the top-k set iff fewer than k labels outrank it
/// (higher probability, or equal probability and lower index).
pub fn in_topk_bruteforce(probs: &[f64], label: usize, k: usize) -> bool {
    let outranking = (0..probs.len())
        .filter(|&i| probs[i] > probs[label] || (probs[i] == probs[label] && i < label))
        .count();
    outranking < k
}

/// OR over epochs `0..current_epoch` of top-k membership.
pub fn or_gate_bruteforce(history: &[Vec<f64>], label: usize, k: usize, current_epoch: usize) -> bool {
    history[..current_epoch]
        .iter()
        .any(|p| in_topk_bruteforce(p, label, k))
}

/// Direct AM-softmax loss from raw (unnormalized) vectors.
pub fn am_softmax_loss(weights: &[f64], dim: usize, embedding: &[f64], label: usize, s: f64, m: f64) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let e_norm = norm(embedding);
    let logits: Vec<f64> = weights
        .chunks(dim)
        .enumerate()
        .map(|(j, w)| {
            let cos = w.iter().zip(embedding).map(|(a, b)| a * b).sum::<f64>() / (norm(w) * e_norm);
            s * (cos - if j == label { m } else { 0.0 })
        })
        .collect();
    let max = logits.iter().cloned().fold(f64::MIN, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

/// Central finite difference gradients of the AM-softmax loss.
pub fn am_softmax_numeric_grad(
    head: &CosineHead,
    embedding: &[f64],
    label: usize,
    loss: AmSoftmax,
    h: f64,
) -> (Vec<f64>, Vec<f64>) {
    let f = |w: &[f64], e: &[f64]| am_softmax_loss(w, head.dim, e, label, loss.scale, loss.margin);
    let mut ge = vec![0.0; embedding.len()];
    let mut e = embedding.to_vec();
    for i in 0..e.len() {
        let x = e[i];
        e[i] = x + h;
        let up = f(&head.weights, &e);
        e[i] = x - h;
        let down = f(&head.weights, &e);
        e[i] = x;
        ge[i] = (up - down) / (2.0 * h);
    }
    let mut gw = vec![0.0; head.weights.len()];
    let mut w = head.weights.clone();
    for i in 0..w.len() {
        let x = w[i];
        w[i] = x + h;
        let up = f(&w, embedding);
        w[i] = x - h;
        let down = f(&w, embedding);
        w[i] = x;
        gw[i] = (up - down) / (2.0 * h);
    }
    (ge, gw)
}

/// `|a - b| / max(|a|, |b|)` over whole vectors; 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Exhaustive EER: FAR/FRR recounted from scratch at each candidate threshold
/// (reject-all, then every distinct score in decreasing order), interpolated
/// at the first point where FRR no longer exceeds FAR.
pub fn eer_bruteforce(trials: &[ScoredTrial]) -> (f64, f64) {
    let nt = trials.iter().filter(|t| t.is_target).count() as f64;
    let nn = trials.iter().filter(|t| !t.is_target).count() as f64;
    let mut thresholds: Vec<f64> = trials.iter().map(|t| t.score).collect();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let rates = |th: f64| {
        let fa = trials.iter().filter(|t| !t.is_target && t.score >= th).count() as f64;
        let fr = trials.iter().filter(|t| t.is_target && t.score < th).count() as f64;
        (fa / nn, fr / nt)
    };
    let (mut pfar, mut pfrr, mut pth) = (0.0, 1.0, None::<f64>);
    for th in thresholds {
        let (far, frr) = rates(th);
        if frr <= far {
            let (d0, d1) = (pfrr - pfar, frr - far);
            if d1 == 0.0 {
                return (far, th);
            }
            let t = d0 / (d0 - d1);
            let eer = pfar + t * (far - pfar);
            return (eer, pth.map_or(th, |p| p + t * (th - p)));
        }
        (pfar, pfrr, pth) = (far, frr, Some(th));
    }
    unreachable!()
}

/// Random probability vector; with `ties` some entries are duplicated.
pub fn random_probs(rng: &mut ChaCha8Rng, c: usize, ties: bool) -> Vec<f64> {
    let mut raw: Vec<f64> = (0..c)
        .map(|_| if ties { rng.gen_range(1..5) as f64 } else { rng.gen::<f64>() + 1e-9 })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter_mut().for_each(|x| *x /= total);
    raw
}

/// Nearest-class-mean classification accuracy using the training means.
pub fn nearest_mean_accuracy(train: &NoisyCorpus, test: &NoisyCorpus) -> f64 {
    let c = train.num_classes();
    let d = train.config.feature_dim;
    let mut means = vec![vec![0.0; d]; c];
    let mut counts = vec![0usize; c];
    for s in &train.samples {
        counts[s.true_label] += 1;
        means[s.true_label].iter_mut().zip(&s.features).for_each(|(m, x)| *m += x);
    }
    for (m, n) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|x| *x /= *n as f64);
    }
    let correct = test
        .samples
        .iter()
        .filter(|s| {
            let dist = |m: &Vec<f64>| m.iter().zip(&s.features).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let best = (0..c)
                .min_by(|&a, &b| dist(&means[a]).partial_cmp(&dist(&means[b])).unwrap())
                .unwrap();
            best == s.true_label
        })
        .count();
    correct as f64 / test.len() as f64
}

/// Chi-square statistic of the corrupted samples' label offsets
/// `(observed - true) mod c` against the uniform law over the c-1 wrong classes.
pub fn wrong_class_chi_square(corpus: &NoisyCorpus) -> f64 {
    let c = corpus.num_classes();
    let mut counts = vec![0usize; c];
    for s in corpus.samples.iter().filter(|s| s.is_corrupted) {
        counts[(s.observed_label + c - s.true_label) % c] += 1;
    }
    assert_eq!(counts[0], 0, "a corrupted label equals its true label");
    let total: usize = counts.iter().sum();
    let expected = total as f64 / (c - 1) as f64;
    counts[1..]
        .iter()
        .map(|&o| (o as f64 - expected).powi(2) / expected)
        .sum()
}
