//! SCAN lexicon, lexical classes, dataset file ingestion, split handling,
//! delexicalization, and low-data subsampling.
//!
//! File format is the public SCAN release: one pair per line,
//! `IN: <tokens> OUT: <tokens>`.  Release files spell output actions as
//! `I_JUMP`, `I_TURN_LEFT`, ...; these are normalized to the canonical
//! names (`JUMP`, `LTURN`, ...) at parse time.

use crate::group::{CyclicShiftGroup, TokenAction};
use indexmap::IndexSet;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub type TokenId = usize;
pub type ClassId = usize;

pub const EOS: &str = "<EOS>";

pub const LOW_DATA_PERCENTS: [u32; 7] = [1, 2, 4, 8, 16, 32, 64];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line_no}: expected `IN: ... OUT: ...`, got: {line}")]
    MalformedLine { line_no: usize, line: String },
    #[error("line {line_no}: unknown {side} token `{token}`")]
    UnknownToken { line_no: usize, side: &'static str, token: String },
    #[error("duplicate vocabulary token `{0}`")]
    DuplicateToken(String),
    #[error("low-data percent {0} not in {{1,2,4,8,16,32,64}}")]
    InvalidPercent(u32),
    #[error("unknown split `{0}` (expected simple, add-jump, around-right, or length)")]
    UnknownSplit(String),
    #[error("no {split} {kind} file under {root} (tried {tried:?})")]
    MissingFile { split: &'static str, kind: &'static str, root: PathBuf, tried: Vec<PathBuf> },
    #[error("classes do not partition the vocabulary: token id {0} covered {1} times")]
    NotAPartition(TokenId, usize),
    #[error("paired classes differ in size: {0} vs {1}")]
    UnalignedPair(usize, usize),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Ordered set of distinct token strings with `<EOS>` as the last entry.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: IndexSet<String>,
}

impl Vocabulary {
    pub fn new(words: &[&str]) -> Result<Self, DataError> {
        let mut tokens = IndexSet::new();
        for &w in words.iter().chain(std::iter::once(&EOS)) {
            if !tokens.insert(w.to_string()) {
                return Err(DataError::DuplicateToken(w.to_string()));
            }
        }
        Ok(Vocabulary { tokens })
    }

    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.tokens.get_index_of(token)
    }

    pub fn token(&self, id: TokenId) -> &str {
        self.tokens.get_index(id).expect("token id in range")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn eos(&self) -> TokenId {
        self.tokens.len() - 1
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|s| s.as_str())
    }

    /// Space-joined token strings, dropping a trailing `<EOS>` if present.
    pub fn render(&self, seq: &[TokenId]) -> String {
        let end = if seq.last() == Some(&self.eos()) { seq.len() - 1 } else { seq.len() };
        seq[..end].iter().map(|&t| self.token(t)).collect::<Vec<_>>().join(" ")
    }
}

/// Which paired lexical class the acting group permutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquivariantClass {
    Verb,
    Direction,
}

/// Partition of both vocabularies into ordered classes, with the verb and
/// direction classes paired across sides and one pair designated as the
/// equivariant class.
#[derive(Debug, Clone)]
pub struct LexicalClassMap {
    input_classes: Vec<Vec<TokenId>>,
    output_classes: Vec<Vec<TokenId>>,
    class_of_input: Vec<ClassId>,
    class_of_output: Vec<ClassId>,
    // (input class, output class) pairs with aligned ordering; index 0 is
    // the verb pair, index 1 the direction pair
    paired: Vec<(ClassId, ClassId)>,
    equivariant_pair: usize,
}

fn class_lookup(classes: &[Vec<TokenId>], vocab_len: usize) -> Result<Vec<ClassId>, DataError> {
    let mut cover = vec![0usize; vocab_len];
    let mut lookup = vec![0; vocab_len];
    for (c, class) in classes.iter().enumerate() {
        for &t in class {
            cover[t] += 1;
            lookup[t] = c;
        }
    }
    for (t, &n) in cover.iter().enumerate() {
        if n != 1 {
            return Err(DataError::NotAPartition(t, n));
        }
    }
    Ok(lookup)
}

impl LexicalClassMap {
    pub fn new(
        input_classes: Vec<Vec<TokenId>>,
        output_classes: Vec<Vec<TokenId>>,
        paired: Vec<(ClassId, ClassId)>,
        equivariant_pair: usize,
        input_vocab_len: usize,
        output_vocab_len: usize,
    ) -> Result<Self, DataError> {
        let class_of_input = class_lookup(&input_classes, input_vocab_len)?;
        let class_of_output = class_lookup(&output_classes, output_vocab_len)?;
        for &(i, j) in &paired {
            if input_classes[i].len() != output_classes[j].len() {
                return Err(DataError::UnalignedPair(
                    input_classes[i].len(),
                    output_classes[j].len(),
                ));
            }
        }
        assert!(equivariant_pair < paired.len());
        Ok(LexicalClassMap {
            input_classes,
            output_classes,
            class_of_input,
            class_of_output,
            paired,
            equivariant_pair,
        })
    }

    pub fn with_equivariant(mut self, which: EquivariantClass) -> Self {
        self.equivariant_pair = match which {
            EquivariantClass::Verb => 0,
            EquivariantClass::Direction => 1,
        };
        self
    }

    pub fn class_of_input(&self, t: TokenId) -> ClassId {
        self.class_of_input[t]
    }

    pub fn class_of_output(&self, t: TokenId) -> ClassId {
        self.class_of_output[t]
    }

    pub fn num_input_classes(&self) -> usize {
        self.input_classes.len()
    }

    pub fn num_output_classes(&self) -> usize {
        self.output_classes.len()
    }

    pub fn input_vocab_len(&self) -> usize {
        self.class_of_input.len()
    }

    pub fn output_vocab_len(&self) -> usize {
        self.class_of_output.len()
    }

    pub fn equivariant_input_tokens(&self) -> &[TokenId] {
        &self.input_classes[self.paired[self.equivariant_pair].0]
    }

    pub fn equivariant_output_tokens(&self) -> &[TokenId] {
        &self.output_classes[self.paired[self.equivariant_pair].1]
    }

    /// The input token paired with an output token: same member index in
    /// the paired classes.  None when the output token's class is
    /// unpaired.
    pub fn source_of_output(&self, t: TokenId) -> Option<TokenId> {
        let j = self.class_of_output[t];
        let &(i, _) = self.paired.iter().find(|&&(_, pj)| pj == j)?;
        let k = self.output_classes[j].iter().position(|&o| o == t).expect("class covers token");
        Some(self.input_classes[i][k])
    }

    /// The cyclic shift group of the equivariant class size.
    pub fn group(&self) -> CyclicShiftGroup {
        CyclicShiftGroup::new(self.equivariant_input_tokens().len()).expect("nonempty class")
    }

    pub fn input_action(&self) -> TokenAction {
        TokenAction::new(self.group(), self.equivariant_input_tokens().to_vec(), self.class_of_input.len())
            .expect("valid class")
    }

    pub fn output_action(&self) -> TokenAction {
        TokenAction::new(self.group(), self.equivariant_output_tokens().to_vec(), self.class_of_output.len())
            .expect("valid class")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Input,
    Output,
}

/// Replace each token by its lexical class id.
pub fn delexicalize(seq: &[TokenId], side: Side, map: &LexicalClassMap) -> Vec<ClassId> {
    match side {
        Side::Input => seq.iter().map(|&t| map.class_of_input(t)).collect(),
        Side::Output => seq.iter().map(|&t| map.class_of_output(t)).collect(),
    }
}

/// One tokenized example; both sides end in `<EOS>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SentencePair {
    pub x: Vec<TokenId>,
    pub y: Vec<TokenId>,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub pairs: Vec<SentencePair>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitName {
    Simple,
    AddJump,
    AroundRight,
    Length,
    LowData(u32),
}

impl SplitName {
    pub fn equivariant_class(&self) -> EquivariantClass {
        match self {
            SplitName::AroundRight => EquivariantClass::Direction,
            _ => EquivariantClass::Verb,
        }
    }
}

impl std::fmt::Display for SplitName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplitName::Simple => write!(f, "simple"),
            SplitName::AddJump => write!(f, "add-jump"),
            SplitName::AroundRight => write!(f, "around-right"),
            SplitName::Length => write!(f, "length"),
            SplitName::LowData(p) => write!(f, "low-data-{p}"),
        }
    }
}

impl std::str::FromStr for SplitName {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('_', "-").as_str() {
            "simple" => Ok(SplitName::Simple),
            "add-jump" | "addjump" => Ok(SplitName::AddJump),
            "around-right" | "aroundright" => Ok(SplitName::AroundRight),
            "length" => Ok(SplitName::Length),
            other => Err(DataError::UnknownSplit(other.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplitSpec {
    pub name: SplitName,
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    pub equivariant: EquivariantClass,
}

fn split_files(name: SplitName) -> (&'static str, &'static str, &'static str, &'static str) {
    match name {
        SplitName::Simple | SplitName::LowData(_) => {
            ("simple", "simple_split", "tasks_train_simple.txt", "tasks_test_simple.txt")
        }
        SplitName::AddJump => (
            "add-jump",
            "add_prim_split",
            "tasks_train_addprim_jump.txt",
            "tasks_test_addprim_jump.txt",
        ),
        SplitName::AroundRight => (
            "around-right",
            "template_split",
            "tasks_train_template_around_right.txt",
            "tasks_test_template_around_right.txt",
        ),
        SplitName::Length => {
            ("length", "length_split", "tasks_train_length.txt", "tasks_test_length.txt")
        }
    }
}

fn probe(root: &Path, subdir: &str, file: &str) -> Option<PathBuf> {
    let nested = root.join(subdir).join(file);
    if nested.is_file() {
        return Some(nested);
    }
    let flat = root.join(file);
    flat.is_file().then_some(flat)
}

impl SplitSpec {
    /// Resolve a split's train/test files under `root`, accepting both the
    /// release layout (`simple_split/tasks_train_simple.txt`) and a flat
    /// directory of the same file names.
    pub fn locate(root: &Path, name: SplitName) -> Result<Self, DataError> {
        if let SplitName::LowData(p) = name {
            if !LOW_DATA_PERCENTS.contains(&p) {
                return Err(DataError::InvalidPercent(p));
            }
        }
        let (split, subdir, train, test) = split_files(name);
        let find = |file: &'static str, kind: &'static str| {
            probe(root, subdir, file).ok_or_else(|| DataError::MissingFile {
                split,
                kind,
                root: root.to_path_buf(),
                tried: vec![root.join(subdir).join(file), root.join(file)],
            })
        };
        Ok(SplitSpec {
            name,
            train_path: find(train, "train")?,
            test_path: find(test, "test")?,
            equivariant: name.equivariant_class(),
        })
    }
}

fn canonical_output(token: &str) -> &str {
    match token {
        "I_RUN" => "RUN",
        "I_WALK" => "WALK",
        "I_LOOK" => "LOOK",
        "I_JUMP" => "JUMP",
        "I_TURN_LEFT" => "LTURN",
        "I_TURN_RIGHT" => "RTURN",
        other => other,
    }
}

/// Parse one `IN: ... OUT: ...` line into id sequences with `<EOS>`
/// appended to both sides.
pub fn parse_line(
    line: &str,
    line_no: usize,
    in_vocab: &Vocabulary,
    out_vocab: &Vocabulary,
) -> Result<SentencePair, DataError> {
    let malformed = || DataError::MalformedLine { line_no, line: line.to_string() };
    let rest = line.trim().strip_prefix("IN:").ok_or_else(malformed)?;
    let (in_part, out_part) = rest.split_once("OUT:").ok_or_else(malformed)?;
    let in_tokens: Vec<&str> = in_part.split_whitespace().collect();
    let out_tokens: Vec<&str> = out_part.split_whitespace().collect();
    if in_tokens.is_empty() || out_tokens.is_empty() {
        return Err(malformed());
    }
    let mut x = Vec::with_capacity(in_tokens.len() + 1);
    for t in in_tokens {
        x.push(in_vocab.id_of(t).ok_or_else(|| DataError::UnknownToken {
            line_no,
            side: "input",
            token: t.to_string(),
        })?);
    }
    x.push(in_vocab.eos());
    let mut y = Vec::with_capacity(out_tokens.len() + 1);
    for t in out_tokens {
        let t = canonical_output(t);
        y.push(out_vocab.id_of(t).ok_or_else(|| DataError::UnknownToken {
            line_no,
            side: "output",
            token: t.to_string(),
        })?);
    }
    y.push(out_vocab.eos());
    Ok(SentencePair { x, y })
}

pub fn load_file(
    path: &Path,
    in_vocab: &Vocabulary,
    out_vocab: &Vocabulary,
) -> Result<Dataset, DataError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        pairs.push(parse_line(line, i + 1, in_vocab, out_vocab)?);
    }
    Ok(Dataset { pairs })
}

fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx
}

/// Load a split: seeded uniform 90/10 shuffle-split of the train file
/// (after low-data subsampling if requested); the test file is untouched.
pub fn load_split(
    spec: &SplitSpec,
    seed: u64,
    in_vocab: &Vocabulary,
    out_vocab: &Vocabulary,
) -> Result<(Dataset, Dataset, Dataset), DataError> {
    let mut full = load_file(&spec.train_path, in_vocab, out_vocab)?;
    if let SplitName::LowData(p) = spec.name {
        full = low_data_subset(&full, p, seed)?;
    }
    let order = seeded_permutation(full.len(), seed);
    let val_count = full.len() / 10;
    let val = Dataset {
        pairs: order[..val_count].iter().map(|&i| full.pairs[i].clone()).collect(),
    };
    let train = Dataset {
        pairs: order[val_count..].iter().map(|&i| full.pairs[i].clone()).collect(),
    };
    let test = load_file(&spec.test_path, in_vocab, out_vocab)?;
    Ok((train, val, test))
}

/// Seeded uniform sample of ceil(percent/100 * n) pairs.  Samples are
/// prefixes of one seeded permutation, so subsets nest as percent grows.
pub fn low_data_subset(train: &Dataset, percent: u32, seed: u64) -> Result<Dataset, DataError> {
    if !LOW_DATA_PERCENTS.contains(&percent) {
        return Err(DataError::InvalidPercent(percent));
    }
    let n = train.len();
    let k = (n * percent as usize).div_ceil(100);
    let order = seeded_permutation(n, seed);
    Ok(Dataset { pairs: order[..k].iter().map(|&i| train.pairs[i].clone()).collect() })
}

/// The SCAN lexicon: input and output vocabularies plus the class map with
/// the verb pair {walk,look,run,jump}<->{WALK,LOOK,RUN,JUMP} and the
/// direction pair {left,right}<->{LTURN,RTURN}; everything else is a
/// singleton class.  The verb pair starts as the equivariant class.
pub fn builtin_lexicon() -> (Vocabulary, Vocabulary, LexicalClassMap) {
    let in_vocab = Vocabulary::new(&[
        "run", "walk", "look", "jump", "left", "right", "after", "and", "turn", "around",
        "twice", "thrice", "opposite",
    ])
    .expect("distinct input words");
    let out_vocab = Vocabulary::new(&["RUN", "WALK", "LOOK", "JUMP", "LTURN", "RTURN"])
        .expect("distinct output words");

    let iid = |t: &str| in_vocab.id_of(t).unwrap();
    let oid = |t: &str| out_vocab.id_of(t).unwrap();

    // class token order defines the group cycle: walk -> look -> run -> jump
    let in_verbs = vec![iid("walk"), iid("look"), iid("run"), iid("jump")];
    let in_dirs = vec![iid("left"), iid("right")];
    let out_verbs = vec![oid("WALK"), oid("LOOK"), oid("RUN"), oid("JUMP")];
    let out_dirs = vec![oid("LTURN"), oid("RTURN")];

    let mut input_classes = vec![in_verbs.clone(), in_dirs.clone()];
    for t in 0..in_vocab.len() {
        if !in_verbs.contains(&t) && !in_dirs.contains(&t) {
            input_classes.push(vec![t]);
        }
    }
    let mut output_classes = vec![out_verbs.clone(), out_dirs.clone()];
    for t in 0..out_vocab.len() {
        if !out_verbs.contains(&t) && !out_dirs.contains(&t) {
            output_classes.push(vec![t]);
        }
    }

    let map = LexicalClassMap::new(
        input_classes,
        output_classes,
        vec![(0, 0), (1, 1)],
        0,
        in_vocab.len(),
        out_vocab.len(),
    )
    .expect("builtin classes partition the vocabularies");
    (in_vocab, out_vocab, map)
}
