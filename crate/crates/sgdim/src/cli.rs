//! `sgdim` subcommands. Every command writes a JSON manifest with its resolved
//! configuration next to its main output unless `--manifest` names another path.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use serde_json::{json, Value};
use sgdim_core::corpus::{
    attach_negatives, build_vocab, extract_pairs, subsample, PairStream, Vocabulary,
};
use sgdim_core::criteria::{Criterion, SamplerConfig, SgnsOutcomes, SnmlConfig, WarmStartLr};
use sgdim_core::evaluation::{analogy_score, dissimilar_osg, similar_sgns, similarity_task_score};
use sgdim_core::sgmodel::{train, ModelKind, TrainConfig};
use sgdim_core::synthgen::{generate_truth, sample_corpus};
use sgdim_core::SeededRng;

use crate::io;
use crate::sweep::{run_sweep, SweepConfig};

/// Process exit status for a failed command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    PartialFailure = 1,
    InvalidInput = 2,
    Infeasible = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub status: ExitStatus,
    pub error: anyhow::Error,
}

impl CliError {
    fn input(error: impl Into<anyhow::Error>) -> Self {
        Self {
            status: ExitStatus::InvalidInput,
            error: error.into(),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(error: anyhow::Error) -> Self {
        Self::input(error)
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "sgdim",
    version,
    about = "Skip-gram dimensionality selection by information criteria"
)]
pub struct Cli {
    /// Base seed; each command derives its sub-seeds from it and records them.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Dimensions trained concurrently by `sweep`.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Manifest path (default: next to the command's main output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count tokens and write the filtered vocabulary as TSV.
    BuildVocab {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 73)]
        min_count: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Subsample a corpus and extract shuffled (word, context) pairs.
    Pairs {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = 5)]
        window: usize,
        /// Subsampling threshold; `inf` disables subsampling.
        #[arg(long, default_value_t = 1e-5)]
        threshold: f64,
        #[command(flatten)]
        negatives: NegativeArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic truth and sample a pair corpus from it.
    Synth {
        /// Analogy questions as word indices (Google format); omit for an unconstrained truth.
        #[arg(long)]
        questions: Option<PathBuf>,
        #[arg(long, default_value_t = 40)]
        s_w: usize,
        #[arg(long, default_value_t = 50)]
        s_c: usize,
        #[arg(long, default_value_t = 1_000_000)]
        n: usize,
        /// Standard deviation of the per-record logit noise.
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
        #[command(flatten)]
        negatives: NegativeArgs,
        #[arg(long)]
        out_truth: PathBuf,
        #[arg(long)]
        out_pairs: PathBuf,
    },
    /// Train one model.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        dim: usize,
        /// Params output (binary).
        #[arg(long)]
        out: PathBuf,
        /// Loss trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Train every candidate dimension and score AIC, BIC, CV and SNML.
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Candidate dimensions, comma separated (at least two).
        #[arg(long, value_delimiter = ',', default_value = "5,10,15,20,25,30")]
        dims: Vec<usize>,
        /// Restrict to these criteria (comma separated).
        #[arg(long, value_delimiter = ',')]
        only: Vec<CriterionArg>,
        /// Trailing records scored by SNML.
        #[arg(long, default_value_t = 6000)]
        tail: usize,
        /// Importance samples per record (oSG); default ceil(S_C / 10). `m >= S_C` enumerates.
        #[arg(long)]
        m: Option<usize>,
        /// Warm-start gradient steps per record.
        #[arg(long, default_value_t = 20)]
        steps: usize,
        /// Warm-start step size: a number, or `auto` for 1 / (steps * n / S_W).
        #[arg(long, default_value = "auto")]
        warm_lr: String,
        /// SGNS normalizer: all S_z + 1 one-hot labelings or only the first S_z.
        #[arg(long, value_enum, default_value_t = OutcomesArg::All)]
        outcomes: OutcomesArg,
        /// Held-out fraction for CV.
        #[arg(long, default_value_t = 0.05)]
        holdout: f64,
        /// Truth file; enables the oracle report.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Also write reports rescaled to [0, 1].
        #[arg(long)]
        normalized: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score a params file.
    Eval {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, value_enum)]
        task: Task,
        /// Truth JSON (oracle), analogy questions or similarity TSV.
        #[arg(long)]
        data: PathBuf,
        /// Vocabulary for analogy and similarity tasks.
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Smooth zero truth cells with epsilon 1e-12 (oSG oracle).
        #[arg(long)]
        smooth: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a sweep directory and export curves.
    Report {
        #[arg(long)]
        dir: PathBuf,
        /// Export the cumulative SNML difference for a pair of dims, e.g. `15,25`.
        #[arg(long, value_delimiter = ',')]
        curve: Vec<usize>,
        /// Write normalized copies of every report.
        #[arg(long)]
        normalized: bool,
    },
}

#[derive(Debug, Clone, Args)]
pub struct NegativeArgs {
    /// Attach this many negatives per record (SGNS pair files).
    #[arg(long)]
    pub negatives: Option<usize>,
    /// Exponent of the unigram negative-sampling distribution.
    #[arg(long, default_value_t = 0.75)]
    pub power: f64,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    /// Vocabulary TSV; sets S_W = S_C to its size.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub s_w: Option<usize>,
    #[arg(long)]
    pub s_c: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Osg)]
    pub model: KindArg,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// SGNS negatives per record (attached if the pair file has none).
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    /// Stop when the relative epoch improvement drops below this.
    #[arg(long)]
    pub early_stop: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Osg,
    Sgns,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Osg => ModelKind::Osg,
            KindArg::Sgns => ModelKind::Sgns,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    Aic,
    Bic,
    Cv,
    Snml,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Aic => Criterion::Aic,
            CriterionArg::Bic => Criterion::Bic,
            CriterionArg::Cv => Criterion::Cv,
            CriterionArg::Snml => Criterion::Snml,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutcomesArg {
    All,
    FirstSz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Oracle,
    Analogy,
    Similarity,
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
    io::write_atomic(path, bytes.as_ref()).with_context(|| format!("writing {}", path.display()))
}

fn default_manifest(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

struct Ctx<'a> {
    cli: &'a Cli,
}

impl Ctx<'_> {
    fn manifest(&self, main_output: &Path, command: &str, body: Value) -> CliResult {
        let path = self
            .cli
            .manifest
            .clone()
            .unwrap_or_else(|| default_manifest(main_output));
        let doc = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.cli.seed,
            "jobs": self.cli.jobs,
            "config": body,
        });
        write_file(&path, io::format_json(&doc))?;
        Ok(())
    }
}

pub fn run(cli: &Cli) -> CliResult {
    let ctx = Ctx { cli };
    match &cli.command {
        Command::BuildVocab {
            corpus,
            min_count,
            out,
        } => cmd_build_vocab(&ctx, corpus, *min_count, out),
        Command::Pairs {
            corpus,
            vocab,
            window,
            threshold,
            negatives,
            out,
        } => cmd_pairs(&ctx, corpus, vocab, *window, *threshold, negatives, out),
        Command::Synth {
            questions,
            s_w,
            s_c,
            n,
            noise,
            negatives,
            out_truth,
            out_pairs,
        } => cmd_synth(
            &ctx,
            questions.as_deref(),
            *s_w,
            *s_c,
            *n,
            *noise,
            negatives,
            out_truth,
            out_pairs,
        ),
        Command::Train {
            data,
            train,
            dim,
            out,
            trace,
        } => cmd_train(&ctx, data, train, *dim, out, trace.as_deref()),
        Command::Sweep { .. } => cmd_sweep(&ctx),
        Command::Eval {
            params,
            task,
            data,
            vocab,
            smooth,
            out,
        } => cmd_eval(&ctx, params, *task, data, vocab.as_deref(), *smooth, out),
        Command::Report {
            dir,
            curve,
            normalized,
        } => cmd_report(dir, curve, *normalized),
    }
}

fn cmd_build_vocab(ctx: &Ctx, corpus: &Path, min_count: u64, out: &Path) -> CliResult {
    let text = read_text(corpus)?;
    let tokens = io::tokenize(&text);
    let vocab = build_vocab(&tokens, min_count).map_err(CliError::input)?;
    write_file(out, io::format_vocab(&vocab))?;
    ctx.manifest(
        out,
        "build-vocab",
        json!({
            "corpus": corpus,
            "min_count": min_count,
            "out": out,
            "tokens": tokens.len(),
            "vocab_size": vocab.len(),
            "vocab_total": vocab.total(),
        }),
    )
}

fn with_negatives(
    stream: PairStream,
    s_c: usize,
    s_z: usize,
    power: f64,
    seed: u64,
) -> anyhow::Result<PairStream> {
    let counts = stream.context_counts(s_c);
    Ok(attach_negatives(&stream, &counts, s_z, power, seed)?)
}

fn cmd_pairs(
    ctx: &Ctx,
    corpus: &Path,
    vocab_path: &Path,
    window: usize,
    threshold: f64,
    negatives: &NegativeArgs,
    out: &Path,
) -> CliResult {
    let vocab = io::parse_vocab(&read_text(vocab_path)?).map_err(CliError::input)?;
    let text = read_text(corpus)?;
    let tokens = io::tokenize(&text);
    let (sub_seed, shuffle_seed, neg_seed) = (
        ctx.cli.seed,
        ctx.cli.seed.wrapping_add(1),
        ctx.cli.seed.wrapping_add(2),
    );
    let mut rng = SeededRng::seed_from_u64(sub_seed);
    let kept = if threshold.is_infinite() && threshold > 0.0 {
        let mut indices = Vec::with_capacity(tokens.len());
        let mut oov = 0;
        for t in &tokens {
            match vocab.index_of(t) {
                Some(i) => indices.push(i),
                None => oov += 1,
            }
        }
        sgdim_core::corpus::Subsampled {
            indices,
            out_of_vocab: oov,
        }
    } else {
        subsample(&tokens, &vocab, threshold, &mut rng).map_err(CliError::input)?
    };
    let mut stream = extract_pairs(&kept.indices, &vocab, &vocab, window, shuffle_seed)
        .map_err(CliError::input)?;
    if let Some(s_z) = negatives.negatives {
        stream = with_negatives(stream, vocab.len(), s_z, negatives.power, neg_seed)?;
    }
    write_file(out, io::format_pairs(&stream))?;
    ctx.manifest(
        out,
        "pairs",
        json!({
            "corpus": corpus,
            "vocab": vocab_path,
            "window": window,
            "threshold": threshold,
            "negatives": negatives.negatives,
            "power": negatives.power,
            "out": out,
            "seeds": {"subsample": sub_seed, "shuffle": shuffle_seed, "negatives": neg_seed},
            "order_seed": stream.order_seed,
            "tokens_before": tokens.len(),
            "out_of_vocab": kept.out_of_vocab,
            "tokens_after": kept.indices.len(),
            "pairs": stream.len(),
            "s_w": vocab.len(),
            "s_c": vocab.len(),
        }),
    )
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    ctx: &Ctx,
    questions: Option<&Path>,
    s_w: usize,
    s_c: usize,
    n: usize,
    noise: f64,
    negatives: &NegativeArgs,
    out_truth: &Path,
    out_pairs: &Path,
) -> CliResult {
    let qs = match questions {
        Some(p) => {
            let raw = io::parse_questions(&read_text(p)?).map_err(CliError::input)?;
            io::resolve_questions(&raw, None).map_err(|e| CliError::input(anyhow::anyhow!(e)))?
        }
        None => Vec::new(),
    };
    let (truth_seed, sample_seed, neg_seed) = (
        ctx.cli.seed,
        ctx.cli.seed.wrapping_add(1),
        ctx.cli.seed.wrapping_add(2),
    );
    let truth = match generate_truth(&qs, s_w, s_c, truth_seed) {
        Ok(t) => t,
        Err(e @ sgdim_core::Error::InfeasibleConstraint { .. }) => {
            return Err(CliError {
                status: ExitStatus::Infeasible,
                error: e.into(),
            })
        }
        Err(e) => return Err(CliError::input(e)),
    };
    let mut stream = sample_corpus(&truth, n, noise, sample_seed).map_err(CliError::input)?;
    if let Some(s_z) = negatives.negatives {
        stream = with_negatives(stream, s_c, s_z, negatives.power, neg_seed)?;
    }
    write_file(out_truth, io::format_truth(&truth))?;
    write_file(out_pairs, io::format_pairs(&stream))?;
    ctx.manifest(
        out_pairs,
        "synth",
        json!({
            "questions": questions,
            "s_w": s_w,
            "s_c": s_c,
            "n": n,
            "noise_sigma": noise,
            "negatives": negatives.negatives,
            "power": negatives.power,
            "out_truth": out_truth,
            "out_pairs": out_pairs,
            "seeds": {"truth": truth_seed, "sample": sample_seed, "negatives": neg_seed},
            "order_seed": stream.order_seed,
            "max_residual": truth.max_residual(),
        }),
    )
}

struct LoadedData {
    stream: PairStream,
    s_w: usize,
    s_c: usize,
}

fn load_data(data: &DataArgs) -> CliResult<LoadedData> {
    let stream = io::parse_pairs(&read_text(&data.pairs)?, 0)
        .with_context(|| format!("parsing {}", data.pairs.display()))?;
    if stream.is_empty() {
        return Err(CliError::input(anyhow::anyhow!(
            "{} holds no records",
            data.pairs.display()
        )));
    }
    let vocab = match &data.vocab {
        Some(p) => Some(io::parse_vocab(&read_text(p)?).map_err(CliError::input)?),
        None => None,
    };
    let max_w = stream.records.iter().map(|r| r.word()).max().unwrap_or(0) + 1;
    let max_c = stream
        .records
        .iter()
        .flat_map(|r| std::iter::once(r.context()).chain(r.negatives().iter().map(|&z| z as usize)))
        .max()
        .unwrap_or(0)
        + 1;
    let s_w = data
        .s_w
        .or(vocab.as_ref().map(Vocabulary::len))
        .unwrap_or(max_w);
    let s_c = data
        .s_c
        .or(vocab.as_ref().map(Vocabulary::len))
        .unwrap_or(max_c);
    stream.validate(s_w, s_c).map_err(CliError::input)?;
    Ok(LoadedData { stream, s_w, s_c })
}

fn train_config(args: &TrainArgs, dim: usize, seed: u64) -> TrainConfig {
    let kind: ModelKind = args.model.into();
    let mut c = match kind {
        ModelKind::Osg => TrainConfig::osg(dim),
        ModelKind::Sgns => TrainConfig::sgns(dim),
    };
    c.epochs = args.epochs.unwrap_or(c.epochs);
    c.learning_rate = args.lr.unwrap_or(c.learning_rate);
    c.momentum = args.momentum.unwrap_or(c.momentum);
    c.batch_size = args.batch.unwrap_or(c.batch_size);
    c.negatives = args.negatives.unwrap_or(c.negatives);
    c.init_scale = args.init_scale.unwrap_or(c.init_scale);
    c.early_stop = args.early_stop;
    c.seed = seed;
    c
}

fn train_json(c: &TrainConfig) -> Value {
    json!({
        "model": c.kind.name(),
        "learning_rate": c.learning_rate,
        "momentum": c.momentum,
        "batch_size": c.batch_size,
        "epochs": c.epochs,
        "negatives": c.negatives,
        "init_scale": c.init_scale,
        "early_stop": c.early_stop,
        "seed": c.seed,
    })
}

/// Attaches SGNS negatives when the pair file carries none.
fn prepare_stream(
    data: LoadedData,
    config: &TrainConfig,
    seed: u64,
) -> CliResult<(PairStream, bool)> {
    if config.kind == ModelKind::Sgns && data.stream.negatives_per_record().unwrap_or(0) == 0 {
        let s = with_negatives(data.stream, data.s_c, config.negatives, 0.75, seed)?;
        return Ok((s, true));
    }
    Ok((data.stream, false))
}

fn cmd_train(
    ctx: &Ctx,
    data: &DataArgs,
    args: &TrainArgs,
    dim: usize,
    out: &Path,
    trace: Option<&Path>,
) -> CliResult {
    let config = train_config(args, dim, ctx.cli.seed);
    config.validate().map_err(CliError::input)?;
    let loaded = load_data(data)?;
    let (s_w, s_c) = (loaded.s_w, loaded.s_c);
    let neg_seed = ctx.cli.seed.wrapping_add(3);
    let (stream, attached) = prepare_stream(loaded, &config, neg_seed)?;
    let outcome = train(&stream.records, s_w, s_c, &config).map_err(|e| CliError {
        status: ExitStatus::PartialFailure,
        error: e.into(),
    })?;
    write_file(out, io::encode_params(&outcome.params, config.kind))?;
    if let Some(t) = trace {
        write_file(t, io::format_trace(&outcome.trace))?;
    }
    ctx.manifest(
        out,
        "train",
        json!({
            "pairs": data.pairs,
            "s_w": s_w,
            "s_c": s_c,
            "dim": dim,
            "train": train_json(&config),
            "negatives_attached": attached.then_some(neg_seed),
            "records": stream.len(),
            "final_loss": outcome.trace.last(),
            "out": out,
            "trace": trace,
        }),
    )
}

fn parse_warm_lr(s: &str) -> anyhow::Result<WarmStartLr> {
    if s == "auto" {
        return Ok(WarmStartLr::CountScaled);
    }
    let lr: f64 = s
        .parse()
        .with_context(|| format!("--warm-lr must be `auto` or a number, got {s:?}"))?;
    anyhow::ensure!(
        lr >= 0.0 && lr.is_finite(),
        "--warm-lr must be a finite non-negative number"
    );
    Ok(WarmStartLr::Fixed(lr))
}

fn cmd_sweep(ctx: &Ctx) -> CliResult {
    let Command::Sweep {
        data,
        train: targs,
        dims,
        only,
        tail,
        m,
        steps,
        warm_lr,
        outcomes,
        holdout,
        truth,
        normalized,
        out_dir,
    } = &ctx.cli.command
    else {
        unreachable!("cmd_sweep called for another command")
    };
    let unique: BTreeSet<usize> = dims.iter().copied().collect();
    if unique.len() < 2 || unique.contains(&0) {
        return Err(CliError::input(anyhow::anyhow!(
            "a sweep needs at least two distinct positive dims"
        )));
    }
    let seed = ctx.cli.seed;
    let (train_seed, snml_seed, split_seed, neg_seed) = (
        seed,
        seed.wrapping_add(1),
        seed.wrapping_add(2),
        seed.wrapping_add(3),
    );
    let tconf = train_config(
        targs,
        unique.iter().next().copied().unwrap_or(1),
        train_seed,
    );
    tconf.validate().map_err(CliError::input)?;
    let lr = parse_warm_lr(warm_lr)?;
    let loaded = load_data(data)?;
    let (s_w, s_c) = (loaded.s_w, loaded.s_c);
    let truth = match truth {
        Some(p) => {
            let t = io::parse_truth(&read_text(p)?).map_err(CliError::input)?;
            if t.s_w() != s_w || t.s_c() != s_c {
                return Err(CliError::input(anyhow::anyhow!(
                    "truth is {}x{} but the data is {s_w}x{s_c}",
                    t.s_w(),
                    t.s_c()
                )));
            }
            Some(t)
        }
        None => None,
    };
    let (stream, attached) = prepare_stream(loaded, &tconf, neg_seed)?;
    let criteria: BTreeSet<Criterion> = if only.is_empty() {
        [
            Criterion::Aic,
            Criterion::Bic,
            Criterion::Cv,
            Criterion::Snml,
        ]
        .into_iter()
        .collect()
    } else {
        only.iter().map(|&c| c.into()).collect()
    };
    let mut snml = SnmlConfig::defaults(s_c);
    snml.steps = *steps;
    snml.lr = lr;
    snml.seed = snml_seed;
    if let Some(m) = m {
        if *m == 0 {
            return Err(CliError::input(anyhow::anyhow!("--m must be at least 1")));
        }
        snml.sampler = SamplerConfig::uniform(*m);
    }
    snml.outcomes = match outcomes {
        OutcomesArg::All => SgnsOutcomes::AllPositions,
        OutcomesArg::FirstSz => SgnsOutcomes::FirstSz,
    };
    let config = SweepConfig {
        dims: unique.iter().copied().collect(),
        train: tconf,
        snml,
        tail: *tail,
        holdout_fraction: *holdout,
        split_seed,
        criteria,
        jobs: ctx.cli.jobs.max(1),
    };
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let outcome = run_sweep(&stream, s_w, s_c, &config, truth.as_ref()).map_err(CliError::input)?;

    for r in &outcome.results {
        write_file(
            &out_dir.join(format!("params_d{}.bin", r.dim)),
            io::encode_params(&r.params, config.kind()),
        )?;
        write_file(
            &out_dir.join(format!("trace_d{}.csv", r.dim)),
            io::format_trace(&r.trace),
        )?;
        if let Some(l) = &r.ledger {
            write_file(
                &out_dir.join(format!("ledger_d{}.csv", r.dim)),
                io::format_ledger(l),
            )?;
        }
    }
    for rep in &outcome.reports {
        let file = io::ReportFile::from(rep);
        let name = rep.criterion.name();
        write_file(
            &out_dir.join(format!("report_{name}.json")),
            io::format_json(&file),
        )?;
        if *normalized {
            write_file(
                &out_dir.join(format!("report_{name}.normalized.json")),
                io::format_json(&file.normalized()),
            )?;
        }
    }
    let with_ledger: Vec<usize> = outcome
        .results
        .iter()
        .filter(|r| r.ledger.is_some())
        .map(|r| r.dim)
        .collect();
    for (i, &a) in with_ledger.iter().enumerate() {
        for &b in &with_ledger[i + 1..] {
            let diff = outcome.snml_curve(a, b).expect("both dims have ledgers");
            write_file(
                &out_dir.join(format!("curve_{a}_{b}.csv")),
                io::format_curve(a, b, &diff),
            )?;
        }
    }
    let chosen: serde_json::Map<String, Value> = outcome
        .reports
        .iter()
        .map(|r| (r.criterion.name().to_string(), json!(r.chosen_dim)))
        .collect();
    let failures: Vec<Value> = outcome
        .failures
        .iter()
        .map(|(d, e)| json!({"dim": d, "error": e}))
        .collect();
    let manifest_target = out_dir.join("sweep");
    ctx.manifest(
        &manifest_target,
        "sweep",
        json!({
            "pairs": data.pairs,
            "truth": truth.as_ref().map(|t| t.gen_seed),
            "s_w": s_w,
            "s_c": s_c,
            "records": stream.len(),
            "dims": config.dims,
            "criteria": config.criteria.iter().map(|c| c.name()).collect::<Vec<_>>(),
            "train": train_json(&config.train),
            "snml": {
                "tail": config.tail,
                "steps": config.snml.steps,
                "warm_lr": warm_lr,
                "m": config.snml.sampler.m.min(s_c),
                "outcomes": format!("{:?}", config.snml.outcomes),
                "seed": snml_seed,
            },
            "holdout": config.holdout_fraction,
            "seeds": {"train": train_seed, "snml": snml_seed, "split": split_seed, "negatives": neg_seed},
            "negatives_attached": attached,
            "chosen": chosen,
            "failures": failures,
        }),
    )?;
    for r in &outcome.reports {
        println!("{:<6} {}", r.criterion.name(), r.chosen_dim);
    }
    if !outcome.failures.is_empty() {
        for (d, e) in &outcome.failures {
            eprintln!("dim {d} failed: {e}");
        }
        return Err(CliError {
            status: ExitStatus::PartialFailure,
            error: anyhow::anyhow!(
                "{} of {} dims failed",
                outcome.failures.len(),
                config.dims.len()
            ),
        });
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    ctx: &Ctx,
    params_path: &Path,
    task: Task,
    data: &Path,
    vocab: Option<&Path>,
    smooth: bool,
    out: &Path,
) -> CliResult {
    let bytes =
        std::fs::read(params_path).with_context(|| format!("reading {}", params_path.display()))?;
    let (params, kind) = io::decode_params(&bytes).map_err(CliError::input)?;
    let load_vocab = || -> CliResult<Vocabulary> {
        let p = vocab
            .ok_or_else(|| CliError::input(anyhow::anyhow!("--vocab is required for this task")))?;
        io::parse_vocab(&read_text(p)?).map_err(CliError::input)
    };
    let (name, score) = match task {
        Task::Oracle => {
            let truth = io::parse_truth(&read_text(data)?).map_err(CliError::input)?;
            let s = match kind {
                ModelKind::Osg => dissimilar_osg(&params, &truth, smooth.then_some(1e-12)),
                ModelKind::Sgns => similar_sgns(&params, &truth),
            }
            .map_err(CliError::input)?;
            let task_name = match kind {
                ModelKind::Osg => "oracle_kl",
                ModelKind::Sgns => "oracle_spearman",
            };
            (
                task_name,
                sgdim_core::evaluation::TaskScore {
                    score: s.value,
                    attempted: s.per_word.len() - s.undefined_words,
                    skipped: s.undefined_words,
                },
            )
        }
        Task::Analogy => {
            let v = load_vocab()?;
            let qs = io::parse_questions(&read_text(data)?).map_err(CliError::input)?;
            (
                "analogy",
                analogy_score(&params, &qs, &v).map_err(CliError::input)?,
            )
        }
        Task::Similarity => {
            let v = load_vocab()?;
            let pairs = io::parse_similarity(&read_text(data)?).map_err(CliError::input)?;
            (
                "similarity",
                similarity_task_score(&params, &pairs, &v).map_err(CliError::input)?,
            )
        }
    };
    let file = io::ScoreFile::new(name, score);
    write_file(out, io::format_json(&file))?;
    println!("{name} {}", score.score);
    ctx.manifest(
        out,
        "eval",
        json!({
            "params": params_path,
            "model": kind.name(),
            "dim": params.dim(),
            "task": name,
            "data": data,
            "vocab": vocab,
            "smooth": smooth,
            "attempted": score.attempted,
            "skipped": score.skipped,
            "out": out,
        }),
    )
}

fn cmd_report(dir: &Path, curve: &[usize], normalized: bool) -> CliResult {
    if !curve.is_empty() && curve.len() != 2 {
        return Err(CliError::input(anyhow::anyhow!(
            "--curve takes exactly two dims, e.g. 15,25"
        )));
    }
    let mut reports = Vec::new();
    let entries = std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths {
        let name = p
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        if name.starts_with("report_")
            && name.ends_with(".json")
            && !name.ends_with(".normalized.json")
        {
            let r: io::ReportFile = serde_json::from_str(&read_text(&p)?)
                .with_context(|| format!("parsing {}", p.display()))?;
            if normalized {
                let out = p.with_file_name(name.replace(".json", ".normalized.json"));
                write_file(&out, io::format_json(&r.normalized()))?;
            }
            reports.push(r);
        }
    }
    if reports.is_empty() {
        return Err(CliError::input(anyhow::anyhow!(
            "no report files in {}",
            dir.display()
        )));
    }
    let dims: BTreeSet<usize> = reports
        .iter()
        .flat_map(|r| r.values.keys().copied())
        .collect();
    print!("{:<8}", "dim");
    for r in &reports {
        print!(" {:>16}", r.criterion);
    }
    println!();
    for d in &dims {
        print!("{d:<8}");
        for r in &reports {
            match r.values.get(d) {
                Some(v) => print!(" {v:>16.6}"),
                None => print!(" {:>16}", "-"),
            }
        }
        println!();
    }
    print!("{:<8}", "chosen");
    for r in &reports {
        print!(" {:>16}", r.chosen_dim);
    }
    println!();
    if let [a, b] = curve {
        let load = |d: usize| -> CliResult<Vec<f64>> {
            let p = dir.join(format!("ledger_d{d}.csv"));
            Ok(io::parse_ledger(&read_text(&p)?)
                .map_err(CliError::input)?
                .1)
        };
        let (ca, cb) = (load(*a)?, load(*b)?);
        if ca.len() != cb.len() {
            return Err(CliError::input(anyhow::anyhow!(
                "ledgers for dims {a} and {b} differ in length"
            )));
        }
        let diff: Vec<f64> = ca.iter().zip(&cb).map(|(x, y)| x - y).collect();
        let out = dir.join(format!("curve_{a}_{b}.csv"));
        write_file(&out, io::format_curve(*a, *b, &diff))?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn warm_lr_parsing() {
        assert_eq!(parse_warm_lr("auto").unwrap(), WarmStartLr::CountScaled);
        assert_eq!(parse_warm_lr("0.01").unwrap(), WarmStartLr::Fixed(0.01));
        assert!(parse_warm_lr("fast").is_err());
        assert!(parse_warm_lr("-1").is_err());
    }

    #[test]
    fn manifest_sits_beside_output() {
        assert_eq!(
            default_manifest(Path::new("out/v.tsv")),
            PathBuf::from("out/v.tsv.manifest.json")
        );
    }
}
