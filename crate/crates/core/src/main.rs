use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use orgate_core::dataset::{load_corpus, load_trials, save_corpus, save_trials, FlipMode};
use orgate_core::plan::{
    emit_tables, load_results, run_cell, run_plan_with, write_run_artifacts, ExperimentPlan, RepeatData,
    TableFormat,
};
use orgate_core::textio::sig6;
use orgate_core::trainer::Mode;
use orgate_core::Error;

#[derive(Parser)]
#[command(name = "orgate", version, about = "Noisy-label speaker embedding laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the training corpus for one (noise rate, repeat), the held-out corpus and trials.
    Generate(GenerateArgs),
    /// Train a single mode on one cell.
    Train(TrainArgs),
    /// Run the full plan and write the results tables.
    Sweep(SweepArgs),
    /// Re-emit tables from a saved results.json.
    Report(ReportArgs),
}

#[derive(Args)]
struct PlanArgs {
    /// TOML plan file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    speakers: Option<usize>,
    #[arg(long)]
    utterances: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    stddev: Option<f64>,
    #[arg(long)]
    subspace_dim: Option<usize>,
    #[arg(long)]
    test_speakers: Option<usize>,
    #[arg(long)]
    test_utterances: Option<usize>,
    #[arg(long)]
    target_trials: Option<usize>,
    #[arg(long)]
    nontarget_trials: Option<usize>,
    #[arg(long, value_enum)]
    flip_mode: Option<FlipArg>,
    #[arg(long, value_delimiter = ',')]
    noise_rates: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<Mode>>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    eval_interval: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    snapshot_epochs: Option<Vec<usize>>,
    /// Early-learning epochs.
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    hidden_dims: Option<Vec<usize>>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    self_alpha: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FlipArg {
    Bernoulli,
    ExactCount,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

impl From<FormatArg> for TableFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => TableFormat::Csv,
            FormatArg::Json => TableFormat::Json,
            FormatArg::Both => TableFormat::Both,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    plan: PlanArgs,
    #[arg(long, default_value_t = 0.0)]
    noise_rate: f64,
    #[arg(long, default_value_t = 0)]
    repeat: usize,
    /// Output directory for train.txt, test.txt and trials.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    plan: PlanArgs,
    #[arg(long)]
    mode: Mode,
    #[arg(long, default_value_t = 0.0)]
    noise_rate: f64,
    #[arg(long, default_value_t = 0)]
    repeat: usize,
    /// Training corpus file; generated from the plan when omitted.
    #[arg(long, requires_all = ["test_corpus", "trials"])]
    corpus: Option<PathBuf>,
    #[arg(long)]
    test_corpus: Option<PathBuf>,
    #[arg(long)]
    trials: Option<PathBuf>,
    /// Run directory for config.json, epochs.csv, checkpoint.txt and result.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    plan: PlanArgs,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// results.json written by a sweep.
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Both)]
    format: FormatArg,
}

impl PlanArgs {
    fn resolve(&self) -> Result<ExperimentPlan, Error> {
        let mut plan = match &self.config {
            Some(path) => ExperimentPlan::load(path)?,
            None => ExperimentPlan::default(),
        };
        fn set<T: Clone>(slot: &mut T, value: &Option<T>) {
            if let Some(v) = value {
                *slot = v.clone();
            }
        }
        set(&mut plan.seed, &self.seed);
        set(&mut plan.corpus.num_speakers, &self.speakers);
        set(&mut plan.corpus.utterances_per_speaker, &self.utterances);
        set(&mut plan.corpus.feature_dim, &self.feature_dim);
        set(&mut plan.corpus.class_separation, &self.separation);
        set(&mut plan.corpus.within_class_stddev, &self.stddev);
        set(&mut plan.corpus.subspace_dim, &self.subspace_dim);
        set(&mut plan.test_speakers, &self.test_speakers);
        set(&mut plan.test_utterances_per_speaker, &self.test_utterances);
        set(&mut plan.num_target_trials, &self.target_trials);
        set(&mut plan.num_nontarget_trials, &self.nontarget_trials);
        if let Some(f) = self.flip_mode {
            plan.flip_mode = match f {
                FlipArg::Bernoulli => FlipMode::Bernoulli,
                FlipArg::ExactCount => FlipMode::ExactCount,
            };
        }
        set(&mut plan.noise_rates, &self.noise_rates);
        set(&mut plan.modes, &self.modes);
        set(&mut plan.repeats, &self.repeats);
        set(&mut plan.eval_interval, &self.eval_interval);
        set(&mut plan.snapshot_epochs, &self.snapshot_epochs);
        let t = &mut plan.train;
        set(&mut t.w, &self.w);
        if self.k.is_some() {
            t.k = self.k;
        }
        set(&mut t.max_epochs, &self.max_epochs);
        set(&mut t.batch_size, &self.batch_size);
        set(&mut t.optimizer.initial_lr, &self.lr);
        set(&mut t.hidden_dims, &self.hidden_dims);
        set(&mut t.embedding_dim, &self.embedding_dim);
        set(&mut t.margin, &self.margin);
        set(&mut t.scale, &self.scale);
        set(&mut t.self_alpha, &self.self_alpha);
        Ok(plan)
    }
}

fn generate(args: &GenerateArgs) -> Result<(), Error> {
    let plan = args.plan.resolve()?;
    let data = plan.repeat_data(args.repeat)?;
    let train = plan.noisy_corpus(&data, args.noise_rate, args.repeat)?;
    save_corpus(&train, &args.out.join("train.txt"))?;
    save_corpus(&data.test, &args.out.join("test.txt"))?;
    save_trials(&data.trials, &args.out.join("trials.txt"))?;
    eprintln!(
        "wrote {} training samples ({} corrupted), {} test samples, {} trials to {}",
        train.len(),
        train.num_corrupted(),
        data.test.len(),
        data.trials.len(),
        args.out.display()
    );
    Ok(())
}

fn train(args: &TrainArgs) -> Result<(), Error> {
    let mut plan = args.plan.resolve()?;
    let (data, corpus) = match (&args.corpus, &args.test_corpus, &args.trials) {
        (Some(c), Some(t), Some(tr)) => {
            let corpus = load_corpus(c)?;
            plan.corpus.num_speakers = corpus.num_classes();
            plan.corpus.feature_dim = corpus.config.feature_dim;
            let data = RepeatData {
                train: corpus.clone(),
                test: load_corpus(t)?,
                trials: load_trials(tr)?,
            };
            (data, corpus)
        }
        _ => {
            let data = plan.repeat_data(args.repeat)?;
            let corpus = plan.noisy_corpus(&data, args.noise_rate, args.repeat)?;
            (data, corpus)
        }
    };
    let eta = corpus.noise_rate();
    let (run, row) = run_cell(&plan, &data, &corpus, args.mode, eta, args.repeat)?;
    for log in &run.logs {
        eprintln!(
            "epoch {:>3}  loss {:>10}  selected {:>6}  precision {:>8}  recall {:>8}  eer {}",
            log.epoch,
            log.mean_training_loss.map(sig6).unwrap_or_else(|| "-".into()),
            log.num_selected,
            log.selection_precision.map(sig6).unwrap_or_else(|| "-".into()),
            log.selection_recall.map(sig6).unwrap_or_else(|| "-".into()),
            log.eer_on_trials.map(sig6).unwrap_or_default(),
        );
    }
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(out) = &args.out {
        write_run_artifacts(out, &run, &row)?;
    }
    println!("final_eer={}", sig6(run.final_eer));
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<(), Error> {
    let mut plan = args.plan.resolve()?;
    if args.output_dir.is_some() {
        plan.output_dir = args.output_dir.clone();
    }
    if plan.output_dir.is_none() {
        return Err(Error::Input("sweep needs --output-dir or output_dir in the plan".into()));
    }
    plan.validate()?;
    let total = plan.modes.len() * plan.noise_rates.len() * plan.repeats;
    if plan.repeats > 1 {
        eprintln!("note: {} seeded repeats per cell (the `repeat` column)", plan.repeats);
    }
    let mut done = 0;
    let table = run_plan_with(&plan, |row, run| {
        done += 1;
        eprintln!(
            "[{done}/{total}] {} eta={} repeat={} final_eer={} ({:.1}s)",
            row.mode,
            sig6(row.eta),
            row.repeat,
            sig6(row.final_eer),
            run.duration_secs
        );
    })?;
    let dir = plan.output_dir.as_deref().unwrap_or(Path::new("."));
    eprintln!("wrote {} rows to {}", table.rows.len(), dir.display());
    Ok(())
}

fn report(args: &ReportArgs) -> Result<(), Error> {
    let table = load_results(&args.results)?;
    for path in emit_tables(&table, &args.out, args.format.into())? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Sweep(a) => sweep(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
