//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Criteria 6-11 run the default sweep (twice, for the determinism check); this
//! takes several minutes in an optimized build.

mod oracles;

use std::process::ExitCode;
use std::time::Instant;

use orgate_core::dataset::{generate_corpus, inject_symmetric_noise, CorpusConfig};
use orgate_core::eval::{compute_eer, ScoredTrial};
use orgate_core::model::{AmSoftmax, CosineHead};
use orgate_core::plan::{run_plan, ExperimentPlan, ResultRow, ResultsTable};
use orgate_core::selector::{PredictionStore, SelfMovingAverage};
use orgate_core::trainer::Mode;
use oracles::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn noise_fidelity() -> Outcome {
    let started = Instant::now();
    let (c, n, eta) = (10usize, 10_000usize, 0.3);
    let corpus = generate_corpus(&CorpusConfig {
        num_speakers: c,
        utterances_per_speaker: n / c,
        feature_dim: 2,
        class_separation: 1.0,
        within_class_stddev: 1.0,
        subspace_dim: 0,
        speaker_offset: 0,
        seed: 1,
    })
    .unwrap();
    let noisy = inject_symmetric_noise(&corpus, eta, 2).unwrap();
    let flips = noisy.num_corrupted() as f64;
    let sigma = (n as f64 * eta * (1.0 - eta)).sqrt();
    let z = (flips - eta * n as f64) / sigma;
    let chi2 = wrong_class_chi_square(&noisy);
    let secs = started.elapsed().as_secs_f64();
    outcome(
        z.abs() <= 4.0 && chi2 < CHI2_099_DF8 && secs < 1.0,
        format!("flips={flips} z={z:.3} chi2={chi2:.3} (critical {CHI2_099_DF8}) time={secs:.3}s"),
    )
}

fn or_gate_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0usize;
    let mut checks = 0usize;
    for case in 0..1000 {
        let c = rng.gen_range(1..=20);
        let k = rng.gen_range(1..=c);
        let epochs = rng.gen_range(0..=30);
        let label = rng.gen_range(0..c);
        let ties = case % 2 == 0;
        let history: Vec<Vec<f64>> = (0..epochs).map(|_| random_probs(&mut rng, c, ties)).collect();
        let mut full = PredictionStore::new(k, c, vec![label], true).unwrap();
        let mut compact = PredictionStore::new(k, c, vec![label], false).unwrap();
        for (e, p) in history.iter().enumerate() {
            full.record_epoch(0, p, e).unwrap();
            compact.record_epoch(0, p, e).unwrap();
        }
        for t in 0..=epochs {
            let expected = or_gate_bruteforce(&history, label, k, t);
            let a = full.or_gate_decision(0, label, t).unwrap().is_clean();
            let b = compact.or_gate_decision(0, label, t).unwrap().is_clean();
            checks += 1;
            mismatches += usize::from(a != expected || b != expected);
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 5.0,
        format!("{checks} epoch decisions, {mismatches} mismatches, time={secs:.3}s"),
    )
}

fn gradient_check() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let c = rng.gen_range(2..=12);
        let dim = rng.gen_range(2..=16);
        let head = CosineHead {
            num_classes: c,
            dim,
            weights: (0..c * dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        };
        let e: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let label = rng.gen_range(0..c);
        let loss = AmSoftmax {
            scale: rng.gen_range(1.0..30.0),
            margin: rng.gen_range(0.0..0.5),
        };
        let (ge, gw) = loss.backward(&head.normalized().unwrap(), &e, label).unwrap();
        let (ne, nw) = am_softmax_numeric_grad(&head, &e, label, loss, 1e-6);
        worst = worst.max(relative_error(&ge, &ne)).max(relative_error(&gw, &nw));
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst < 1e-4 && secs < 5.0,
        format!("100 instances, worst relative error {worst:.3e}, time={secs:.3}s"),
    )
}

fn eer_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    let mut worst_invariance: f64 = 0.0;
    for case in 0..100 {
        let n = rng.gen_range(2..=400);
        let mut trials: Vec<ScoredTrial> = (0..n)
            .map(|_| {
                let is_target = rng.gen_bool(0.5);
                let score = if case % 3 == 0 {
                    // coarse grid: many ties
                    (rng.gen_range(-10..=10) as f64) / 10.0
                } else {
                    let shift = if is_target { 0.3 } else { 0.0 };
                    rng.gen_range(-1.0..1.0) + shift
                };
                ScoredTrial { score, is_target }
            })
            .collect();
        trials[0].is_target = true;
        trials[1].is_target = false;
        let r = compute_eer(&trials).unwrap();
        let (oracle, _) = eer_bruteforce(&trials);
        worst = worst.max((r.eer - oracle).abs());
        for f in [|x: f64| x.exp(), |x: f64| 5.0 * x - 2.0, |x: f64| x.atan()] {
            let mapped: Vec<ScoredTrial> = trials.iter().map(|t| ScoredTrial { score: f(t.score), ..*t }).collect();
            worst_invariance = worst_invariance.max((compute_eer(&mapped).unwrap().eer - r.eer).abs());
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst < 1e-9 && worst_invariance < 1e-9 && secs < 10.0,
        format!("max |eer - oracle|={worst:.3e}, max transform drift={worst_invariance:.3e}, time={secs:.3}s"),
    )
}

fn self_arithmetic() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let c = 6;
    let seqs: Vec<Vec<Vec<f64>>> = (0..50)
        .map(|_| (0..8).map(|_| random_probs(&mut rng, c, false)).collect())
        .collect();
    let mut worst: f64 = 0.0;
    let mut endpoints_ok = true;
    for alpha in [0.0, 1.0, 0.3, 0.9, 0.55] {
        let mut ma = SelfMovingAverage::new(seqs.len(), c, alpha).unwrap();
        for (id, seq) in seqs.iter().enumerate() {
            let mut oracle = seq[0].clone();
            for (step, p) in seq.iter().enumerate() {
                ma.update(id, p).unwrap();
                if step > 0 {
                    for (o, x) in oracle.iter_mut().zip(p) {
                        *o = alpha * *o + (1.0 - alpha) * x;
                    }
                }
                let got = ma.average(id).unwrap().unwrap();
                for (g, o) in got.iter().zip(&oracle) {
                    worst = worst.max((g - o).abs());
                }
                if alpha == 0.0 {
                    endpoints_ok &= got == p.as_slice();
                }
                if alpha == 1.0 {
                    endpoints_ok &= got == seq[0].as_slice();
                }
            }
        }
    }
    outcome(
        worst <= 1e-12 && endpoints_ok,
        format!("max deviation {worst:.3e}, endpoint cases exact={endpoints_ok}"),
    )
}

fn sweep_tables(plan: &ExperimentPlan) -> (ResultsTable, Vec<(String, Vec<u8>)>, f64) {
    let dir = tempfile::tempdir().unwrap();
    let plan = ExperimentPlan {
        output_dir: Some(dir.path().to_path_buf()),
        ..plan.clone()
    };
    let started = Instant::now();
    let table = run_plan(&plan).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let files = ["results.csv", "results.json", "eer_table.csv"]
        .iter()
        .map(|name| (name.to_string(), std::fs::read(dir.path().join(name)).unwrap()))
        .collect();
    (table, files, secs)
}

fn row(table: &ResultsTable, mode: Mode, eta: f64, repeat: usize) -> &ResultRow {
    table
        .row(mode, eta, repeat)
        .unwrap_or_else(|| panic!("missing cell {mode} eta={eta} repeat={repeat}"))
}

fn eer(table: &ResultsTable, mode: Mode, eta: f64, repeat: usize) -> f64 {
    row(table, mode, eta, repeat).final_eer
}

/// Evaluates `check` per repeat; passes when at least 2 of 3 repeats hold.
fn per_repeat(table: &ResultsTable, check: impl Fn(usize) -> (bool, String)) -> Outcome {
    let mut held = 0;
    let mut details = Vec::new();
    for r in 0..table.repeats {
        let (ok, text) = check(r);
        held += usize::from(ok);
        details.push(format!("r{r}:{}[{text}]", if ok { "ok" } else { "no" }));
    }
    outcome(
        held >= 2,
        format!("{held}/{} repeats hold; {}", table.repeats, details.join(" ")),
    )
}

fn baseline_degradation(t: &ResultsTable) -> Outcome {
    per_repeat(t, |r| {
        let e: Vec<f64> = [0.0, 0.2, 0.5].iter().map(|&eta| eer(t, Mode::Baseline, eta, r)).collect();
        (e[0] < e[1] && e[1] < e[2], format!("{:.4} {:.4} {:.4}", e[0], e[1], e[2]))
    })
}

fn orgate_robustness(t: &ResultsTable) -> Outcome {
    per_repeat(t, |r| {
        let (o3, b3) = (eer(t, Mode::Orgate, 0.3, r), eer(t, Mode::Baseline, 0.3, r));
        let (o5, b5) = (eer(t, Mode::Orgate, 0.5, r), eer(t, Mode::Baseline, 0.5, r));
        let gap = (b5 - o5) / b5;
        (
            o3 < b3 && o5 < b5 && gap > 0.2,
            format!("0.3: {o3:.4}<{b3:.4} 0.5: {o5:.4}<{b5:.4} gap={:.1}%", gap * 100.0),
        )
    })
}

fn selection_quality(t: &ResultsTable) -> Outcome {
    per_repeat(t, |r| {
        let mut ok = true;
        let mut text = Vec::new();
        for &eta in t.noise_rates.iter().filter(|&&e| e <= 0.3) {
            let row = row(t, Mode::Orgate, eta, r);
            let p = row.post_early_precision.unwrap_or(0.0);
            let rec = row.final_recall.unwrap_or(0.0);
            ok &= p >= 0.99 && rec >= 0.95;
            text.push(format!("{eta}:p={p:.4},R={rec:.4}"));
        }
        let row = row(t, Mode::Orgate, 0.5, r);
        let (early, last) = (row.post_early_recall.unwrap_or(0.0), row.final_recall.unwrap_or(0.0));
        ok &= last > early;
        text.push(format!("0.5:R {early:.4}->{last:.4}"));
        (ok, text.join(" "))
    })
}

fn ablations(t: &ResultsTable) -> Outcome {
    per_repeat(t, |r| {
        let o = eer(t, Mode::Orgate, 0.3, r);
        let k1 = eer(t, Mode::OrgateK1, 0.3, r);
        let ne = eer(t, Mode::OrgateNoEarly, 0.3, r);
        (o < k1 && o < ne, format!("orgate={o:.4} k1={k1:.4} no_early={ne:.4}"))
    })
}

fn self_comparison(t: &ResultsTable) -> Outcome {
    per_repeat(t, |r| {
        let o = eer(t, Mode::Orgate, 0.3, r);
        let s = eer(t, Mode::SelfBaseline, 0.3, r);
        (o <= s, format!("orgate={o:.4} self={s:.4}"))
    })
}

fn report(id: usize, name: &str, o: &Outcome) {
    println!("criterion {id:>2} {:<4} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut run = |id: usize, name: &str, o: Outcome| {
        report(id, name, &o);
        failed += usize::from(!o.pass);
    };
    run(1, "noise-model fidelity", noise_fidelity());
    run(2, "OR-Gate oracle equivalence", or_gate_oracle());
    run(3, "AM-Softmax gradient correctness", gradient_check());
    run(4, "EER oracle equivalence", eer_oracle());
    run(5, "SELF update arithmetic", self_arithmetic());

    let plan = ExperimentPlan::default();
    let (table, first, secs_a) = sweep_tables(&plan);
    let (_, second, secs_b) = sweep_tables(&plan);
    let identical = first == second;
    run(
        6,
        "determinism",
        outcome(
            identical,
            format!(
                "{} rows; tables byte-identical={identical}; sweeps took {secs_a:.0}s and {secs_b:.0}s",
                table.rows.len()
            ),
        ),
    );
    run(7, "baseline degradation", baseline_degradation(&table));
    run(8, "OR-Gate robustness", orgate_robustness(&table));
    run(9, "selection quality", selection_quality(&table));
    run(10, "ablations", ablations(&table));
    run(11, "SELF comparison", self_comparison(&table));

    if failed == 0 {
        println!("all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
