//! Training: Adam on the mean per-sentence negative log-likelihood over
//! shape-bucketed batches, validation-based early stopping, JSONL metrics,
//! and checkpointing.
//!
//! Batches only ever contain pairs with identical input and output
//! lengths, so no padding or masking is needed anywhere in the model.
//! The best-validation parameters are kept as deep copies (the optimizer
//! needs exclusive ownership of the live tensors) and restored before the
//! final checkpoint is written.

use crate::data::{
    builtin_lexicon, load_split, DataError, Dataset, EquivariantClass, SplitName, SplitSpec,
    LOW_DATA_PERCENTS,
};
use crate::layers::EmbedKind;
use crate::tensor::{
    read_checkpoint, real, write_checkpoint, AdamState, CheckpointError, Graph, Meta, ParamStore,
    Real, TensorData, TensorError,
};
use crate::transducer::{
    HardAlignmentModel, ModelDims, ModelError, TempSchedule, Variant, DEFAULT_BEAM_WIDTH,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

pub const DEFAULT_EPOCHS: usize = 200;
pub const DEFAULT_PATIENCE: usize = 30;
pub const DEFAULT_LR: f64 = 1e-3;
pub const GRAD_CLIP_NORM: f64 = 5.0;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("non-finite loss at epoch {epoch} ({stage}); parameter norms: {norms}")]
    NonFinite { epoch: usize, stage: String, norms: String },
}

/// Which likelihood reduction to train, without the runtime temperature
/// state that [`Variant`] carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantKind {
    Sum,
    Max,
    Annealed,
}

impl VariantKind {
    pub fn name(self) -> &'static str {
        match self {
            VariantKind::Sum => "sum",
            VariantKind::Max => "max",
            VariantKind::Annealed => "annealed",
        }
    }
}

impl FromStr for VariantKind {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sum" => Ok(VariantKind::Sum),
            "max" => Ok(VariantKind::Max),
            "annealed" | "annealed-max" => Ok(VariantKind::Annealed),
            other => Err(TrainError::Config(format!(
                "unknown variant `{other}` (expected sum, max, or annealed)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

impl FromStr for Precision {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => {
                Err(TrainError::Config(format!("unknown precision `{other}` (expected f32 or f64)")))
            }
        }
    }
}

/// Everything a training run needs besides the data itself.  Parsed from
/// `key = value` lines (`#` starts a comment); unknown keys are rejected.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub data_dir: PathBuf,
    pub split: SplitName,
    pub variant: VariantKind,
    pub schedule: TempSchedule,
    pub dims: ModelDims,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub lr: f64,
    pub precision: Precision,
    /// Low-data subsampling of the simple split's training file.
    pub percent: Option<u32>,
    /// Where metrics and the checkpoint go; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            data_dir: PathBuf::from("data"),
            split: SplitName::Simple,
            variant: VariantKind::Sum,
            schedule: TempSchedule::default(),
            dims: ModelDims { k_embed: 32, n_filters: 8, align_emb: 64, hidden: 64 },
            batch_size: 8,
            epochs: DEFAULT_EPOCHS,
            patience: DEFAULT_PATIENCE,
            seed: 0,
            lr: DEFAULT_LR,
            precision: Precision::F32,
            percent: None,
            out_dir: None,
        }
    }
}

fn parse_num<V: FromStr>(key: &str, value: &str) -> Result<V, TrainError> {
    value
        .parse()
        .map_err(|_| TrainError::Config(format!("bad value `{value}` for key `{key}`")))
}

impl TrainConfig {
    pub fn parse(text: &str) -> Result<Self, TrainError> {
        let mut cfg = TrainConfig::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                TrainError::Config(format!("line {}: expected `key = value`, got `{raw}`", no + 1))
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|e| match e {
                TrainError::Config(m) => TrainError::Config(format!("line {}: {m}", no + 1)),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = fs::read_to_string(path)
            .map_err(|source| TrainError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), TrainError> {
        match key {
            "data_dir" => self.data_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = Some(PathBuf::from(value)),
            "split" => {
                self.split = value.parse().map_err(|e: DataError| TrainError::Config(e.to_string()))?
            }
            "variant" => self.variant = value.parse()?,
            "precision" => self.precision = value.parse()?,
            "k_embed" => self.dims.k_embed = parse_num(key, value)?,
            "n_filters" => self.dims.n_filters = parse_num(key, value)?,
            "align_emb" => self.dims.align_emb = parse_num(key, value)?,
            "hidden" => self.dims.hidden = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "patience" => self.patience = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "lr" => self.lr = parse_num(key, value)?,
            "percent" => self.percent = Some(parse_num(key, value)?),
            "tau_initial" => self.schedule.initial = parse_num(key, value)?,
            "tau_decay" => self.schedule.decay = parse_num(key, value)?,
            "tau_floor" => self.schedule.floor = parse_num(key, value)?,
            other => return Err(TrainError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let d = self.dims;
        for (name, v) in [
            ("k_embed", d.k_embed),
            ("n_filters", d.n_filters),
            ("align_emb", d.align_emb),
            ("hidden", d.hidden),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
        ] {
            if v == 0 {
                return Err(TrainError::Config(format!("{name} must be positive")));
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(TrainError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if let Some(p) = self.percent {
            if !LOW_DATA_PERCENTS.contains(&p) {
                return Err(DataError::InvalidPercent(p).into());
            }
            if self.split != SplitName::Simple {
                return Err(TrainError::Config(format!(
                    "low-data runs subsample the simple split, not {}",
                    self.split
                )));
            }
        }
        if self.variant == VariantKind::Annealed {
            let s = self.schedule;
            let ok = s.initial > 0.0
                && s.initial <= 1.0
                && s.decay > 0.0
                && s.decay <= 1.0
                && s.floor > 0.0
                && s.floor <= s.initial;
            if !ok {
                return Err(TrainError::Config(format!(
                    "bad temperature schedule: initial {} decay {} floor {}",
                    s.initial, s.decay, s.floor
                )));
            }
        }
        Ok(())
    }

    /// The stateful reduction this config trains, temperature reset.
    pub fn runtime_variant(&self) -> Variant {
        match self.variant {
            VariantKind::Sum => Variant::Sum,
            VariantKind::Max => Variant::Max,
            VariantKind::Annealed => Variant::annealed_with(self.schedule),
        }
    }

    /// The split actually loaded: low-data subsampling wraps Simple.
    pub fn effective_split(&self) -> SplitName {
        match self.percent {
            Some(p) => SplitName::LowData(p),
            None => self.split,
        }
    }
}

/// Search-selected sizes (k_embed, n_filters, align_emb, hidden) and batch
/// size per reduction and split; first row where several runs tied on
/// validation NLL.
pub fn preset(variant: VariantKind, split: SplitName) -> (ModelDims, usize) {
    let d = |k_embed, n_filters, align_emb, hidden| ModelDims {
        k_embed,
        n_filters,
        align_emb,
        hidden,
    };
    use SplitName::*;
    use VariantKind::*;
    match (variant, split) {
        (Sum, Simple | LowData(_)) => (d(20, 24, 36, 6), 8),
        (Sum, AddJump) => (d(122, 7, 223, 67), 8),
        (Sum, AroundRight) => (d(100, 7, 122, 36), 8),
        (Sum, Length) => (d(45, 24, 11, 149), 32),
        (Max, Simple | LowData(_)) => (d(16, 24, 182, 36), 8),
        (Max, AddJump) => (d(30, 11, 182, 55), 16),
        (Max, AroundRight) => (d(30, 223, 122, 11), 8),
        (Max, Length) => (d(36, 55, 30, 4), 16),
        (Annealed, Simple | LowData(_)) => (d(182, 122, 223, 11), 8),
        (Annealed, AddJump) => (d(122, 7, 223, 67), 8),
        (Annealed, AroundRight) => (d(55, 100, 45, 30), 8),
        (Annealed, Length) => (d(13, 9, 11, 16), 16),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_nll: f64,
    pub val_nll: f64,
    pub seconds: f64,
}

/// Everything a run produces besides the parameters.  For a fixed config
/// every field is reproducible except the `seconds` timings.
#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_nll: f64,
    pub checkpoint: Option<PathBuf>,
}

pub struct Trained<T: Real> {
    pub model: HardAlignmentModel,
    pub store: ParamStore<T>,
    pub report: TrainReport,
}

pub fn train<T: Real>(
    cfg: &TrainConfig,
    train_set: &Dataset,
    val_set: &Dataset,
) -> Result<Trained<T>, TrainError> {
    train_with_hook(cfg, train_set, val_set, |_, _, _| {})
}

/// Like [`train`], with `hook(epoch, model, store)` called at the top of
/// every epoch — at `hook(k, ..)` the parameters have seen k epochs of
/// updates, so epoch 0 observes the untrained model.
pub fn train_with_hook<T: Real>(
    cfg: &TrainConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    mut hook: impl FnMut(usize, &HardAlignmentModel, &ParamStore<T>),
) -> Result<Trained<T>, TrainError> {
    cfg.validate()?;
    let (_, _, map) = builtin_lexicon();
    let map = map.with_equivariant(cfg.effective_split().equivariant_class());
    let mut model =
        HardAlignmentModel::new(&map, cfg.dims, cfg.runtime_variant(), EmbedKind::Equivariant);
    let mut store = ParamStore::new();
    model.init_params(&mut store, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let report = fit(&mut model, &mut store, cfg, train_set, val_set, &mut hook)?;
    Ok(Trained { model, store, report })
}

fn non_finite<T: Real>(epoch: usize, stage: String, store: &ParamStore<T>) -> TrainError {
    let norms = store
        .iter()
        .map(|(name, v)| {
            let sq: f64 =
                v.as_slice().iter().map(|&x| x.to_f64().unwrap_or(f64::NAN).powi(2)).sum();
            format!("{name}={:.3e}", sq.sqrt())
        })
        .collect::<Vec<_>>()
        .join(" ");
    TrainError::NonFinite { epoch, stage, norms }
}

/// Mean negative log-likelihood per sentence, forward passes only.
pub fn mean_nll<T: Real>(
    model: &HardAlignmentModel,
    store: &ParamStore<T>,
    data: &Dataset,
) -> Result<f64, TrainError> {
    assert!(!data.is_empty(), "mean_nll: empty dataset");
    let mut total = 0.0;
    for p in &data.pairs {
        let graph = Graph::<T>::new();
        let ll = model.log_likelihood(&graph, store, &p.x, &p.y)?;
        total -= graph.item(ll).to_f64().unwrap();
    }
    Ok(total / data.len() as f64)
}

/// Batch index sets for one epoch.  Pairs are bucketed by (input length,
/// output length), shuffled within each bucket, chunked, and the chunks
/// shuffled, all from an rng derived from (seed, epoch).
pub fn epoch_batches(data: &Dataset, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    assert!(batch_size > 0, "batch_size must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(
        seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64 + 1),
    );
    let mut buckets: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, p) in data.pairs.iter().enumerate() {
        buckets.entry((p.x.len(), p.y.len())).or_default().push(i);
    }
    let mut batches = Vec::new();
    for bucket in buckets.values_mut() {
        bucket.shuffle(&mut rng);
        for chunk in bucket.chunks(batch_size) {
            batches.push(chunk.to_vec());
        }
    }
    batches.shuffle(&mut rng);
    batches
}

fn fit<T: Real>(
    model: &mut HardAlignmentModel,
    store: &mut ParamStore<T>,
    cfg: &TrainConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    hook: &mut dyn FnMut(usize, &HardAlignmentModel, &ParamStore<T>),
) -> Result<TrainReport, TrainError> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(TrainError::Config("train and validation sets must be nonempty".into()));
    }
    let mut adam = AdamState::new(store, real::<T>(cfg.lr));
    let mut metrics = match &cfg.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)
                .map_err(|source| TrainError::Io { path: dir.clone(), source })?;
            let path = dir.join("metrics.jsonl");
            let file = fs::File::create(&path)
                .map_err(|source| TrainError::Io { path: path.clone(), source })?;
            Some((file, path))
        }
        None => None,
    };
    let mut records: Vec<EpochRecord> = Vec::new();
    let mut best: Option<(usize, f64, Vec<(String, TensorData<T>)>)> = None;

    for epoch in 0..cfg.epochs {
        hook(epoch, model, store);
        let start = Instant::now();
        let batches = epoch_batches(train_set, cfg.batch_size, cfg.seed, epoch);
        let mut nll_sum = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            // the graph must drop before the optimizer touches the params
            let batch_nll = {
                let graph = Graph::<T>::new();
                let lls = batch
                    .iter()
                    .map(|&i| {
                        let p = &train_set.pairs[i];
                        model.log_likelihood(&graph, store, &p.x, &p.y)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let loss = graph
                    .scale(graph.sum(graph.concat(&lls, 0)), real::<T>(-1.0 / batch.len() as f64));
                let v = graph.item(loss).to_f64().unwrap();
                if !v.is_finite() {
                    return Err(non_finite(epoch, format!("train batch {bi}"), store));
                }
                graph.backward(loss)?;
                store.accumulate(&graph);
                v
            };
            store.clip_global_norm(real::<T>(GRAD_CLIP_NORM));
            adam.step(store)?;
            nll_sum += batch_nll * batch.len() as f64;
        }
        let train_nll = nll_sum / train_set.len() as f64;
        let val_nll = mean_nll(model, store, val_set)?;
        if !val_nll.is_finite() {
            return Err(non_finite(epoch, "validation".into(), store));
        }
        let record = EpochRecord { epoch, train_nll, val_nll, seconds: start.elapsed().as_secs_f64() };
        if let Some((file, path)) = &mut metrics {
            let mut line = serde_json::to_string(&record).expect("record serializes");
            line.push('\n');
            file.write_all(line.as_bytes())
                .map_err(|source| TrainError::Io { path: path.clone(), source })?;
        }
        records.push(record);
        model.variant.anneal_epoch();
        match &best {
            Some((_, b, _)) if val_nll >= *b => {
                let (best_epoch, _, _) = best.as_ref().unwrap();
                if epoch - best_epoch >= cfg.patience {
                    break;
                }
            }
            _ => {
                let snap =
                    store.iter().map(|(n, v)| (n.to_string(), v.as_ref().clone())).collect();
                best = Some((epoch, val_nll, snap));
            }
        }
    }
    if let Some((file, path)) = &mut metrics {
        file.flush().map_err(|source| TrainError::Io { path: path.clone(), source })?;
    }
    let (best_epoch, best_val_nll, snap) = best.expect("at least one epoch ran");
    for (name, value) in snap {
        store.load_value(&name, value)?;
    }
    let checkpoint = match &cfg.out_dir {
        Some(dir) => Some(save_checkpoint(dir, model, store, cfg, best_epoch)?),
        None => None,
    };
    Ok(TrainReport { epochs: records, best_epoch, best_val_nll, checkpoint })
}

fn save_checkpoint<T: Real>(
    dir: &Path,
    model: &HardAlignmentModel,
    store: &ParamStore<T>,
    cfg: &TrainConfig,
    best_epoch: usize,
) -> Result<PathBuf, TrainError> {
    let path = dir.join("model.ckpt");
    let mut meta = Meta::new();
    meta.insert("variant".into(), model.variant.name().into());
    if let Variant::AnnealedMax { tau, .. } = model.variant {
        meta.insert("tau".into(), format!("{tau}"));
    }
    meta.insert("split".into(), cfg.effective_split().to_string());
    let eq = match cfg.effective_split().equivariant_class() {
        EquivariantClass::Verb => "verb",
        EquivariantClass::Direction => "direction",
    };
    meta.insert("equivariant".into(), eq.into());
    meta.insert("group_order".into(), model.class_map().group().order().to_string());
    meta.insert("seed".into(), cfg.seed.to_string());
    meta.insert("precision".into(), T::NAME.into());
    meta.insert("best_epoch".into(), best_epoch.to_string());
    meta.insert("k_embed".into(), cfg.dims.k_embed.to_string());
    meta.insert("n_filters".into(), cfg.dims.n_filters.to_string());
    meta.insert("align_emb".into(), cfg.dims.align_emb.to_string());
    meta.insert("hidden".into(), cfg.dims.hidden.to_string());
    write_checkpoint(&path, store, &meta)?;
    Ok(path)
}

/// Rebuild a model and its parameters from a checkpoint written by
/// [`train`].
pub fn load_trained<T: Real>(
    path: &Path,
) -> Result<(HardAlignmentModel, ParamStore<T>, Meta), TrainError> {
    let (values, meta) = read_checkpoint::<T>(path)?;
    let need = |key: &str| {
        meta.get(key)
            .cloned()
            .ok_or_else(|| TrainError::Config(format!("checkpoint missing `{key}`")))
    };
    let precision = need("precision")?;
    if precision != T::NAME {
        return Err(TrainError::Config(format!(
            "checkpoint stores {precision} parameters but {} was requested",
            T::NAME
        )));
    }
    let dims = ModelDims {
        k_embed: parse_num("k_embed", &need("k_embed")?)?,
        n_filters: parse_num("n_filters", &need("n_filters")?)?,
        align_emb: parse_num("align_emb", &need("align_emb")?)?,
        hidden: parse_num("hidden", &need("hidden")?)?,
    };
    let variant = match need("variant")?.as_str() {
        "sum" => Variant::Sum,
        "max" => Variant::Max,
        "annealed" => Variant::annealed_at(parse_num("tau", &need("tau")?)?),
        other => return Err(TrainError::Config(format!("unknown variant `{other}` in checkpoint"))),
    };
    let eq = match need("equivariant")?.as_str() {
        "verb" => EquivariantClass::Verb,
        "direction" => EquivariantClass::Direction,
        other => {
            return Err(TrainError::Config(format!("unknown equivariant class `{other}`")))
        }
    };
    let (_, _, map) = builtin_lexicon();
    let model = HardAlignmentModel::new(
        &map.with_equivariant(eq),
        dims,
        variant,
        EmbedKind::Equivariant,
    );
    let mut store = ParamStore::new();
    model.init_params(&mut store, &mut ChaCha8Rng::seed_from_u64(0));
    let names: Vec<String> = store.names().map(|s| s.to_string()).collect();
    for name in &names {
        if !values.contains_key(name) {
            return Err(TrainError::Config(format!("checkpoint missing parameter `{name}`")));
        }
    }
    for (name, value) in values {
        store.load_value(&name, value)?;
    }
    Ok((model, store, meta))
}

/// Full protocol for one split: locate the files, make the 90/10
/// train/validation split, train, and beam-decode the untouched test set.
/// Returns the trained model and the exact-match test accuracy in [0, 1].
pub fn run_split<T: Real>(cfg: &TrainConfig) -> Result<(Trained<T>, f64), TrainError> {
    let (in_vocab, out_vocab, _) = builtin_lexicon();
    let spec = SplitSpec::locate(&cfg.data_dir, cfg.effective_split())?;
    let (train_set, val_set, test_set) = load_split(&spec, cfg.seed, &in_vocab, &out_vocab)?;
    let trained = train::<T>(cfg, &train_set, &val_set)?;
    let accuracy = trained.model.sequence_accuracy(&trained.store, &test_set, DEFAULT_BEAM_WIDTH);
    Ok((trained, accuracy))
}

/// Legal sampling bounds for [`random_search`].
#[derive(Debug, Clone, Copy)]
pub struct SearchRanges {
    pub dim_min: usize,
    pub dim_max: usize,
    pub batch_min: usize,
    pub batch_max: usize,
}

impl Default for SearchRanges {
    fn default() -> Self {
        SearchRanges { dim_min: 5, dim_max: 256, batch_min: 8, batch_max: 64 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trial {
    pub index: usize,
    pub dims: ModelDims,
    pub batch_size: usize,
    pub seed: u64,
    pub best_val_nll: Option<f64>,
    pub best_epoch: Option<usize>,
    pub error: Option<String>,
}

/// Uniform random hyperparameter search.  Sizes are drawn in a fixed
/// order (k_embed, n_filters, align_emb, hidden, batch) so a search seed
/// reproduces the sweep exactly.  Failed trials are kept with their error;
/// results are sorted best validation NLL first, failures last.
pub fn random_search<T: Real>(
    base: &TrainConfig,
    ranges: &SearchRanges,
    n_trials: usize,
    search_seed: u64,
    train_set: &Dataset,
    val_set: &Dataset,
) -> Result<Vec<Trial>, TrainError> {
    let full = SearchRanges::default();
    let ok = ranges.dim_min >= full.dim_min
        && ranges.dim_max <= full.dim_max
        && ranges.dim_min <= ranges.dim_max
        && ranges.batch_min >= full.batch_min
        && ranges.batch_max <= full.batch_max
        && ranges.batch_min <= ranges.batch_max;
    if !ok {
        return Err(TrainError::Config(format!(
            "search ranges must lie within sizes [{}, {}] and batch [{}, {}]",
            full.dim_min, full.dim_max, full.batch_min, full.batch_max
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(search_seed);
    let mut trials = Vec::with_capacity(n_trials);
    for index in 0..n_trials {
        let dims = ModelDims {
            k_embed: rng.gen_range(ranges.dim_min..=ranges.dim_max),
            n_filters: rng.gen_range(ranges.dim_min..=ranges.dim_max),
            align_emb: rng.gen_range(ranges.dim_min..=ranges.dim_max),
            hidden: rng.gen_range(ranges.dim_min..=ranges.dim_max),
        };
        let batch_size = rng.gen_range(ranges.batch_min..=ranges.batch_max);
        let mut cfg = base.clone();
        cfg.dims = dims;
        cfg.batch_size = batch_size;
        cfg.seed = base.seed.wrapping_add(index as u64);
        cfg.out_dir = None;
        let mut trial = Trial {
            index,
            dims,
            batch_size,
            seed: cfg.seed,
            best_val_nll: None,
            best_epoch: None,
            error: None,
        };
        match train::<T>(&cfg, train_set, val_set) {
            Ok(t) => {
                trial.best_val_nll = Some(t.report.best_val_nll);
                trial.best_epoch = Some(t.report.best_epoch);
            }
            Err(e) => trial.error = Some(e.to_string()),
        }
        trials.push(trial);
    }
    trials.sort_by(|a, b| match (a.best_val_nll, b.best_val_nll) {
        (Some(x), Some(y)) => x.total_cmp(&y).then(a.index.cmp(&b.index)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.index.cmp(&b.index),
    });
    Ok(trials)
}

#[derive(Debug, Clone, Serialize)]
pub struct LowDataCell {
    pub percent: u32,
    pub seed: u64,
    pub train_pairs: usize,
    /// Exact-match test accuracy in [0, 1].
    pub accuracy: f64,
    pub best_val_nll: f64,
}

/// Train on nested subsamples of the simple split's training file and
/// score every run on the full test set.
pub fn run_low_data<T: Real>(
    base: &TrainConfig,
    percents: &[u32],
    seeds: &[u64],
) -> Result<Vec<LowDataCell>, TrainError> {
    for &p in percents {
        if !LOW_DATA_PERCENTS.contains(&p) {
            return Err(DataError::InvalidPercent(p).into());
        }
    }
    let (in_vocab, out_vocab, _) = builtin_lexicon();
    let mut cells = Vec::new();
    for &percent in percents {
        for &seed in seeds {
            let mut cfg = base.clone();
            cfg.split = SplitName::Simple;
            cfg.percent = Some(percent);
            cfg.seed = seed;
            cfg.out_dir = base.out_dir.as_ref().map(|d| d.join(format!("p{percent}-s{seed}")));
            let spec = SplitSpec::locate(&cfg.data_dir, cfg.effective_split())?;
            let (train_set, val_set, test_set) = load_split(&spec, seed, &in_vocab, &out_vocab)?;
            let trained = train::<T>(&cfg, &train_set, &val_set)?;
            let accuracy =
                trained.model.sequence_accuracy(&trained.store, &test_set, DEFAULT_BEAM_WIDTH);
            cells.push(LowDataCell {
                percent,
                seed,
                train_pairs: train_set.len(),
                accuracy,
                best_val_nll: trained.report.best_val_nll,
            });
        }
    }
    Ok(cells)
}
