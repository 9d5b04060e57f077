//! Operator entry point: training, evaluation, decoding, hyperparameter
//! search, invariance audits, orbit tracking, gradient checks, and data
//! inspection.  Exit codes: 0 success, 1 usage or validation error,
//! 2 runtime or verification failure.

use clap::{Args, Parser, Subcommand};
use equitrans::analysis::{
    audit_equivariance, probe_set, track_orbits, AnalysisError, AUDIT_TOL, PROBE_X_FORM,
    PROBE_Y_FORM,
};
use equitrans::data::{
    builtin_lexicon, load_file, load_split, DataError, SplitName, SplitSpec, TokenId,
    LOW_DATA_PERCENTS,
};
use equitrans::tensor::{gradcheck, read_meta, real, CheckpointError, Graph, ParamStore, Real};
use equitrans::train::{
    load_trained, random_search, run_low_data, run_split, Precision, SearchRanges, TrainConfig,
    TrainError,
};
use equitrans::transducer::{HardAlignmentModel, ModelError, DEFAULT_MAX_LEN};
use equitrans::{LexicalClassMap, Vocabulary};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Parser)]
#[command(
    name = "equitrans",
    about = "Group-equivariant hard-alignment string transduction on SCAN",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model; writes metrics and a checkpoint under --out.
    Train(TrainArgs),
    /// Exact-match accuracy of a checkpoint on a split's test file.
    Eval(EvalArgs),
    /// Beam-decode one input sentence with a checkpoint.
    Decode(DecodeArgs),
    /// Random hyperparameter search; trials print sorted by validation
    /// NLL.
    Search(SearchArgs),
    /// Train across low-data subsamples and report accuracy per cell.
    LowData(LowDataArgs),
    /// Invariance audits on a checkpoint or a random model.
    Audit(AuditArgs),
    /// Track observed orbits of the probe set across a training run.
    OrbitTrack(OrbitTrackArgs),
    /// Analytic gradients vs central finite differences (use small dims).
    Gradcheck(GradcheckArgs),
    /// Print vocabularies, lexical classes, and split sizes.
    DataInfo(DataInfoArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed controlling all randomness.
    #[arg(long)]
    seed: Option<u64>,
    /// Element type for parameters and math.
    #[arg(long, value_parser = ["f32", "f64"])]
    precision: Option<String>,
    /// Likelihood reduction.
    #[arg(long, value_parser = ["sum", "max", "annealed"])]
    variant: Option<String>,
    /// Data split: simple, add-jump, around-right, or length.
    #[arg(long)]
    split: Option<String>,
    /// Directory holding the SCAN split files.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Output directory for metrics, checkpoints, and reports.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint to evaluate.
    #[arg(long)]
    ckpt: PathBuf,
    /// Beam width.
    #[arg(long, default_value_t = 3)]
    beam: usize,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint to decode with.
    #[arg(long)]
    ckpt: PathBuf,
    /// Input sentence, space-separated SCAN words.
    #[arg(long)]
    input: String,
    /// Beam width.
    #[arg(long, default_value_t = 3)]
    beam: usize,
    /// Output length cap.
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of random trials.
    #[arg(long, default_value_t = 12)]
    trials: usize,
}

#[derive(Args)]
struct LowDataArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Single percent cell; the full grid runs when omitted.
    #[arg(long)]
    percent: Option<u32>,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint to audit; a seeded random model is audited when
    /// omitted.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Pairs sampled from the split's training file (falls back to the
    /// probe set when data is missing).
    #[arg(long, default_value_t = 12)]
    pairs: usize,
    /// Relative tolerance.
    #[arg(long, default_value_t = AUDIT_TOL)]
    tolerance: f64,
}

#[derive(Args)]
struct OrbitTrackArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Epochs between orbit reports.
    #[arg(long, default_value_t = 5)]
    every: usize,
}

#[derive(Args)]
struct GradcheckArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Random pairs to check.
    #[arg(long, default_value_t = 5)]
    pairs: usize,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    /// Maximum allowed relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args)]
struct DataInfoArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("verification failed: {0}")]
    Failed(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Data(_) => 1,
            CliError::Train(TrainError::Config(_) | TrainError::Data(_)) => 1,
            _ => 2,
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.code());
    }
}

/// Apply flag overrides on top of the config file (or defaults).
fn build_config(common: &CommonArgs) -> Result<TrainConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => TrainConfig::load(path)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(p) = &common.precision {
        cfg.precision = p.parse()?;
    }
    if let Some(v) = &common.variant {
        cfg.variant = v.parse()?;
    }
    if let Some(s) = &common.split {
        cfg.split = s.parse().map_err(|e: DataError| CliError::Usage(e.to_string()))?;
    }
    if let Some(d) = &common.data_dir {
        cfg.data_dir = d.clone();
    }
    if let Some(o) = &common.out {
        cfg.out_dir = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Audits and gradient checks default to 64-bit unless asked otherwise.
fn verification_precision(common: &CommonArgs) -> Result<Precision, CliError> {
    Ok(match &common.precision {
        Some(p) => p.parse()?,
        None => Precision::F64,
    })
}

/// Checkpoint commands follow the checkpoint's own precision unless the
/// flag overrides it.
fn checkpoint_precision(common: &CommonArgs, ckpt: &PathBuf) -> Result<Precision, CliError> {
    if let Some(p) = &common.precision {
        return Ok(p.parse()?);
    }
    let meta = read_meta(ckpt)?;
    match meta.get("precision").map(String::as_str) {
        Some("f64") => Ok(Precision::F64),
        _ => Ok(Precision::F32),
    }
}

macro_rules! dispatch {
    ($prec:expr, $func:ident($($arg:expr),*)) => {
        match $prec {
            Precision::F32 => $func::<f32>($($arg),*),
            Precision::F64 => $func::<f64>($($arg),*),
        }
    };
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Train(a) => {
            let cfg = build_config(&a.common)?;
            dispatch!(cfg.precision, cmd_train(&cfg))
        }
        Command::Eval(a) => {
            let prec = checkpoint_precision(&a.common, &a.ckpt)?;
            dispatch!(prec, cmd_eval(&a))
        }
        Command::Decode(a) => {
            let prec = checkpoint_precision(&a.common, &a.ckpt)?;
            dispatch!(prec, cmd_decode(&a))
        }
        Command::Search(a) => {
            let cfg = build_config(&a.common)?;
            dispatch!(cfg.precision, cmd_search(&cfg, a.trials))
        }
        Command::LowData(a) => {
            let cfg = build_config(&a.common)?;
            let percents: Vec<u32> = match a.percent {
                Some(p) => vec![p],
                None => LOW_DATA_PERCENTS.to_vec(),
            };
            dispatch!(cfg.precision, cmd_low_data(&cfg, &percents))
        }
        Command::Audit(a) => {
            let prec = match &a.ckpt {
                Some(ckpt) if a.common.precision.is_none() => checkpoint_precision(&a.common, ckpt)?,
                _ => verification_precision(&a.common)?,
            };
            dispatch!(prec, cmd_audit(&a))
        }
        Command::OrbitTrack(a) => {
            let cfg = build_config(&a.common)?;
            dispatch!(cfg.precision, cmd_orbit_track(&cfg, &a))
        }
        Command::Gradcheck(a) => {
            let prec = verification_precision(&a.common)?;
            dispatch!(prec, cmd_gradcheck(&a))
        }
        Command::DataInfo(a) => cmd_data_info(&a),
    }
}

fn cmd_train<T: Real>(cfg: &TrainConfig) -> Result<(), CliError> {
    let (trained, accuracy) = run_split::<T>(cfg)?;
    let r = &trained.report;
    println!(
        "split {} variant {} precision {} seed {}",
        cfg.effective_split(),
        cfg.variant.name(),
        T::NAME,
        cfg.seed
    );
    println!(
        "dims k_embed {} n_filters {} align_emb {} hidden {} batch {}",
        cfg.dims.k_embed, cfg.dims.n_filters, cfg.dims.align_emb, cfg.dims.hidden, cfg.batch_size
    );
    println!(
        "epochs {} best_epoch {} best_val_nll {:.6}",
        r.epochs.len(),
        r.best_epoch,
        r.best_val_nll
    );
    println!("test_accuracy {:.2}", accuracy * 100.0);
    if let Some(ckpt) = &r.checkpoint {
        println!("checkpoint {}", ckpt.display());
        println!("metrics {}", ckpt.with_file_name("metrics.jsonl").display());
    }
    Ok(())
}

/// The split a checkpoint was trained for; low-data runs evaluate on the
/// simple test file.
fn meta_split(s: &str) -> Result<SplitName, CliError> {
    if s.starts_with("low-data") {
        return Ok(SplitName::Simple);
    }
    s.parse().map_err(|e: DataError| CliError::Usage(e.to_string()))
}

fn cmd_eval<T: Real>(a: &EvalArgs) -> Result<(), CliError> {
    let cfg = build_config(&a.common)?;
    let (model, store, meta) = load_trained::<T>(&a.ckpt)?;
    let split = match &a.common.split {
        Some(s) => s.parse().map_err(|e: DataError| CliError::Usage(e.to_string()))?,
        None => match meta.get("split") {
            Some(s) => meta_split(s)?,
            None => cfg.split,
        },
    };
    let (in_vocab, out_vocab, _) = builtin_lexicon();
    let spec = SplitSpec::locate(&cfg.data_dir, split)?;
    let (_, _, test) = load_split(&spec, cfg.seed, &in_vocab, &out_vocab)?;
    let accuracy = model.sequence_accuracy(&store, &test, a.beam);
    println!(
        "split {split} pairs {} beam {} accuracy {:.2}",
        test.len(),
        a.beam,
        accuracy * 100.0
    );
    Ok(())
}

fn tokenize(sentence: &str, vocab: &Vocabulary) -> Result<Vec<TokenId>, CliError> {
    let mut ids = Vec::new();
    for w in sentence.split_whitespace() {
        ids.push(
            vocab
                .id_of(w)
                .ok_or_else(|| CliError::Usage(format!("unknown input word `{w}`")))?,
        );
    }
    if ids.is_empty() {
        return Err(CliError::Usage("empty input sentence".into()));
    }
    ids.push(vocab.eos());
    Ok(ids)
}

fn cmd_decode<T: Real>(a: &DecodeArgs) -> Result<(), CliError> {
    let (model, store, _) = load_trained::<T>(&a.ckpt)?;
    let (in_vocab, out_vocab, _) = builtin_lexicon();
    let x = tokenize(&a.input, &in_vocab)?;
    let y = model.decode_beam(&store, &x, a.beam, a.max_len)?;
    let words: Vec<&str> = y.iter().map(|&t| out_vocab.token(t)).collect();
    println!("{}", words.join(" "));
    Ok(())
}

fn cmd_search<T: Real>(cfg: &TrainConfig, trials: usize) -> Result<(), CliError> {
    let (in_vocab, out_vocab, _) = builtin_lexicon();
    let spec = SplitSpec::locate(&cfg.data_dir, cfg.effective_split())?;
    let (train_set, val_set, _) = load_split(&spec, cfg.seed, &in_vocab, &out_vocab)?;
    let results =
        random_search::<T>(cfg, &SearchRanges::default(), trials, cfg.seed, &train_set, &val_set)?;
    println!("rank trial k_embed n_filters align_emb hidden batch best_val_nll best_epoch");
    for (rank, t) in results.iter().enumerate() {
        match t.best_val_nll {
            Some(nll) => println!(
                "{rank} {} {} {} {} {} {} {nll:.6} {}",
                t.index,
                t.dims.k_embed,
                t.dims.n_filters,
                t.dims.align_emb,
                t.dims.hidden,
                t.batch_size,
                t.best_epoch.unwrap_or(0),
            ),
            None => println!(
                "{rank} {} {} {} {} {} {} failed: {}",
                t.index,
                t.dims.k_embed,
                t.dims.n_filters,
                t.dims.align_emb,
                t.dims.hidden,
                t.batch_size,
                t.error.as_deref().unwrap_or("unknown")
            ),
        }
    }
    Ok(())
}

fn cmd_low_data<T: Real>(cfg: &TrainConfig, percents: &[u32]) -> Result<(), CliError> {
    let cells = run_low_data::<T>(cfg, percents, &[cfg.seed])?;
    println!("percent train_pairs best_val_nll accuracy");
    for c in &cells {
        println!(
            "{} {} {:.6} {:.2}",
            c.percent,
            c.train_pairs,
            c.best_val_nll,
            c.accuracy * 100.0
        );
    }
    Ok(())
}

/// Pairs for audits and gradient checks: a seeded sample of the split's
/// training file, or the probe set when the data files are absent.
fn sample_pairs(
    cfg: &TrainConfig,
    count: usize,
) -> Result<(Vec<equitrans::SentencePair>, &'static str), CliError> {
    let (in_vocab, out_vocab, map) = builtin_lexicon();
    match SplitSpec::locate(&cfg.data_dir, cfg.effective_split()) {
        Ok(spec) => {
            let data = load_file(&spec.train_path, &in_vocab, &out_vocab)?;
            let mut idx: Vec<usize> = (0..data.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
            let take = count.min(data.len());
            Ok((idx[..take].iter().map(|&i| data.pairs[i].clone()).collect(), "train file"))
        }
        Err(DataError::MissingFile { .. }) => {
            let pairs = probe_set(PROBE_X_FORM, PROBE_Y_FORM, &in_vocab, &out_vocab, &map)?;
            let take = count.min(pairs.len());
            Ok((pairs[..take].to_vec(), "probe set"))
        }
        Err(e) => Err(e.into()),
    }
}

fn audit_model<T: Real>(
    a: &AuditArgs,
    cfg: &TrainConfig,
) -> Result<(HardAlignmentModel, ParamStore<T>, String), CliError> {
    match &a.ckpt {
        Some(path) => {
            let (model, store, _) = load_trained::<T>(path)?;
            Ok((model, store, format!("checkpoint {}", path.display())))
        }
        None => {
            let (_, _, map) = builtin_lexicon();
            let map = map.with_equivariant(cfg.effective_split().equivariant_class());
            let model = HardAlignmentModel::new(
                &map,
                cfg.dims,
                cfg.runtime_variant(),
                equitrans::layers::EmbedKind::Equivariant,
            );
            let mut store = ParamStore::new();
            model.init_params(&mut store, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
            Ok((model, store, format!("random model (seed {})", cfg.seed)))
        }
    }
}

fn cmd_audit<T: Real>(a: &AuditArgs) -> Result<(), CliError> {
    let cfg = build_config(&a.common)?;
    let (model, store, source) = audit_model::<T>(a, &cfg)?;
    let (pairs, pair_source) = sample_pairs(&cfg, a.pairs)?;
    println!("auditing {source} on {} pairs from the {pair_source} at {}", pairs.len(), T::NAME);
    let report = audit_equivariance(&model, &store, &pairs, a.tolerance, cfg.seed)?;
    print!("{}", report.render());
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Failed("audit deviations exceed tolerance".into()))
    }
}

fn cmd_orbit_track<T: Real>(cfg: &TrainConfig, a: &OrbitTrackArgs) -> Result<(), CliError> {
    let (in_vocab, out_vocab, map) = builtin_lexicon();
    let map = map.with_equivariant(cfg.effective_split().equivariant_class());
    let probe = probe_set(PROBE_X_FORM, PROBE_Y_FORM, &in_vocab, &out_vocab, &map)?;
    let spec = SplitSpec::locate(&cfg.data_dir, cfg.effective_split())?;
    let (train_set, val_set, _) = load_split(&spec, cfg.seed, &in_vocab, &out_vocab)?;
    let (trained, reports) = track_orbits::<T>(cfg, &train_set, &val_set, &probe, a.every)?;
    for r in &reports {
        print!("{}", r.render());
    }
    println!("best_epoch {} best_val_nll {:.6}", trained.report.best_epoch, trained.report.best_val_nll);
    if let Some(dir) = &cfg.out_dir {
        let path = dir.join("orbits.jsonl");
        let mut text = String::new();
        for r in &reports {
            text.push_str(&serde_json::to_string(r).expect("report serializes"));
            text.push('\n');
        }
        std::fs::write(&path, text)
            .map_err(|source| TrainError::Io { path: path.clone(), source })?;
        println!("reports {}", path.display());
    }
    Ok(())
}

fn cmd_gradcheck<T: Real>(a: &GradcheckArgs) -> Result<(), CliError> {
    let cfg = build_config(&a.common)?;
    let (_, _, map) = builtin_lexicon();
    let map = map.with_equivariant(cfg.effective_split().equivariant_class());
    let model = HardAlignmentModel::new(
        &map,
        cfg.dims,
        cfg.runtime_variant(),
        equitrans::layers::EmbedKind::Equivariant,
    );
    let mut store = ParamStore::<T>::new();
    model.init_params(&mut store, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let (pairs, pair_source) = sample_pairs(&cfg, a.pairs)?;
    println!(
        "gradcheck variant {} precision {} epsilon {:.1e} tolerance {:.1e} ({} pairs from the {pair_source})",
        cfg.variant.name(),
        T::NAME,
        a.epsilon,
        a.tolerance,
        pairs.len()
    );
    let mut all_ok = true;
    for (i, p) in pairs.iter().enumerate() {
        let mut build = |store: &ParamStore<T>| {
            let graph = Graph::<T>::new();
            let ll = model.log_likelihood(&graph, store, &p.x, &p.y).expect("valid pair");
            let loss = graph.scale(ll, real::<T>(-1.0));
            (graph, loss)
        };
        let report = gradcheck(&mut store, &mut build, a.epsilon, a.tolerance);
        let worst = report
            .per_param
            .iter()
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .map(|(n, e)| format!("{n} {e:.3e}"))
            .unwrap_or_default();
        let ok = report.passed();
        all_ok &= ok;
        println!("pair {i} max_rel {:.3e} worst {worst} {}", report.max_rel_err(), if ok { "pass" } else { "FAIL" });
    }
    if all_ok {
        Ok(())
    } else {
        Err(CliError::Failed("gradient mismatch above tolerance".into()))
    }
}

fn class_members(len: usize, class_of: impl Fn(TokenId) -> usize, class: usize) -> Vec<TokenId> {
    (0..len).filter(|&t| class_of(t) == class).collect()
}

fn render_classes(
    vocab: &Vocabulary,
    n_classes: usize,
    vocab_len: usize,
    class_of: impl Fn(TokenId) -> usize + Copy,
) {
    for c in 0..n_classes {
        let members = class_members(vocab_len, class_of, c);
        let words: Vec<&str> = members.iter().map(|&t| vocab.token(t)).collect();
        println!("  class {c}: {{{}}}", words.join(", "));
    }
}

fn cmd_data_info(a: &DataInfoArgs) -> Result<(), CliError> {
    let cfg = build_config(&a.common)?;
    let (in_vocab, out_vocab, map) = builtin_lexicon();
    let words = |v: &Vocabulary| -> Vec<String> {
        (0..v.len()).map(|t| format!("{t}={}", v.token(t))).collect()
    };
    println!("input vocabulary ({}): {}", in_vocab.len(), words(&in_vocab).join(" "));
    println!("output vocabulary ({}): {}", out_vocab.len(), words(&out_vocab).join(" "));
    println!("input classes ({}):", map.num_input_classes());
    render_classes(&in_vocab, map.num_input_classes(), map.input_vocab_len(), |t| {
        map.class_of_input(t)
    });
    println!("output classes ({}):", map.num_output_classes());
    render_classes(&out_vocab, map.num_output_classes(), map.output_vocab_len(), |t| {
        map.class_of_output(t)
    });
    let show = |m: &LexicalClassMap, name: &str| {
        let words: Vec<&str> =
            m.equivariant_input_tokens().iter().map(|&t| in_vocab.token(t)).collect();
        println!("equivariant class for {name}: {{{}}} (group order {})", words.join(", "), m.group().order());
    };
    show(&map, "simple/add-jump/length");
    show(
        &map.clone().with_equivariant(equitrans::data::EquivariantClass::Direction),
        "around-right",
    );
    println!("splits under {}:", cfg.data_dir.display());
    for split in
        [SplitName::Simple, SplitName::AddJump, SplitName::AroundRight, SplitName::Length]
    {
        match SplitSpec::locate(&cfg.data_dir, split) {
            Ok(spec) => {
                let (train_set, val_set, test_set) =
                    load_split(&spec, cfg.seed, &in_vocab, &out_vocab)?;
                println!(
                    "  {split}: train {} val {} test {}",
                    train_set.len(),
                    val_set.len(),
                    test_set.len()
                );
            }
            Err(DataError::MissingFile { .. }) => println!("  {split}: missing"),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}
