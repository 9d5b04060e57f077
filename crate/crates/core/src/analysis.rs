//! Equivariance audits and the observed-orbit experiment.
//!
//! The orbit experiment asks whether the learned likelihood actually
//! collapses the sentence pairs the group makes equivalent: a probe set
//! closed under the group action is scored per pair, pairs with matching
//! NLLs are grouped, and the grouping is tracked across training.  The
//! audits re-verify the invariance guarantees numerically on arbitrary
//! parameters — including trained checkpoints, where a regression would
//! otherwise hide behind good accuracy.

use crate::data::{
    delexicalize, Dataset, LexicalClassMap, SentencePair, Side, TokenId, Vocabulary,
};
use crate::group::{
    act_aligned, act_componentwise, act_on_sentence, GroupError, ProductGroupElement,
};
use crate::tensor::{Graph, ParamStore, Real};
use crate::train::{train_with_hook, TrainConfig, TrainError, Trained};
use crate::transducer::{HardAlignmentModel, ModelError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fmt::Write as _;
use thiserror::Error;

pub const ORBIT_RTOL: f64 = 1e-5;
pub const ORBIT_ATOL: f64 = 1e-8;
pub const AUDIT_TOL: f64 = 1e-9;
pub const DEFAULT_TRACK_EVERY: usize = 5;
/// Product elements sampled per pair in the conditional audit.
const PRODUCT_SAMPLES: usize = 5;

/// Default probe forms: two verb slots around a fixed frame, outputs with
/// the second verb first (its clause executes first).
pub const PROBE_X_FORM: &str = "<verb1> right thrice after <verb2>";
pub const PROBE_Y_FORM: &str = "<verb2> RTURN <verb1> RTURN <verb1> RTURN <verb1>";

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("bad probe form: {0}")]
    BadForm(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Group(#[from] GroupError),
}

enum Piece {
    Lit(TokenId),
    Slot(usize),
}

fn parse_form(
    form: &str,
    vocab: &Vocabulary,
    side: &str,
    slots: &mut Vec<String>,
    allow_new: bool,
) -> Result<Vec<Piece>, AnalysisError> {
    form.split_whitespace()
        .map(|w| {
            if let Some(name) = w.strip_prefix('<').and_then(|s| s.strip_suffix('>')) {
                if let Some(k) = slots.iter().position(|n| n == name) {
                    Ok(Piece::Slot(k))
                } else if allow_new {
                    slots.push(name.to_string());
                    Ok(Piece::Slot(slots.len() - 1))
                } else {
                    Err(AnalysisError::BadForm(format!(
                        "output slot `<{name}>` missing from the input form"
                    )))
                }
            } else {
                vocab
                    .id_of(w)
                    .map(Piece::Lit)
                    .ok_or_else(|| AnalysisError::BadForm(format!("unknown {side} word `{w}`")))
            }
        })
        .collect()
}

/// Every instantiation of a pair of slotted forms over the equivariant
/// class.  Slots are written `<name>` and covary between the two forms:
/// the output slot is filled with the output token paired to the input
/// token chosen for that slot.  S slots over a class of p members yield
/// p^S pairs, terminators appended.
pub fn probe_set(
    x_form: &str,
    y_form: &str,
    in_vocab: &Vocabulary,
    out_vocab: &Vocabulary,
    map: &LexicalClassMap,
) -> Result<Vec<SentencePair>, AnalysisError> {
    let mut slots = Vec::new();
    let xs = parse_form(x_form, in_vocab, "input", &mut slots, true)?;
    if slots.is_empty() {
        return Err(AnalysisError::BadForm("input form has no slots".into()));
    }
    let ys = parse_form(y_form, out_vocab, "output", &mut slots, false)?;
    let in_class = map.equivariant_input_tokens();
    let out_class = map.equivariant_output_tokens();
    let p = in_class.len();
    let n_slots = slots.len();
    let total = p.pow(n_slots as u32);
    let mut pairs = Vec::with_capacity(total);
    let mut choice = vec![0usize; n_slots];
    for _ in 0..total {
        let mut x: Vec<TokenId> = xs
            .iter()
            .map(|piece| match piece {
                Piece::Lit(t) => *t,
                Piece::Slot(k) => in_class[choice[*k]],
            })
            .collect();
        x.push(in_vocab.eos());
        let mut y: Vec<TokenId> = ys
            .iter()
            .map(|piece| match piece {
                Piece::Lit(t) => *t,
                Piece::Slot(k) => out_class[choice[*k]],
            })
            .collect();
        y.push(out_vocab.eos());
        pairs.push(SentencePair { x, y });
        for slot in choice.iter_mut() {
            *slot += 1;
            if *slot < p {
                break;
            }
            *slot = 0;
        }
    }
    Ok(pairs)
}

/// Partition of the pairs into joint-action orbits: i and j share an
/// orbit iff some group element maps pair i onto pair j.  Errors when the
/// set is not closed under the action.
pub fn theoretical_orbits(
    pairs: &[SentencePair],
    map: &LexicalClassMap,
) -> Result<Vec<Vec<usize>>, AnalysisError> {
    let in_act = map.input_action();
    let out_act = map.output_action();
    let group = map.group();
    let mut owner: Vec<Option<usize>> = vec![None; pairs.len()];
    let mut orbits: Vec<Vec<usize>> = Vec::new();
    for i in 0..pairs.len() {
        if owner[i].is_some() {
            continue;
        }
        let id = orbits.len();
        let mut members = Vec::new();
        for g in group.elements() {
            let gx = act_on_sentence(g, &in_act, &pairs[i].x);
            let gy = act_on_sentence(g, &out_act, &pairs[i].y);
            let j = pairs.iter().position(|p| p.x == gx && p.y == gy).ok_or_else(|| {
                AnalysisError::BadForm("probe set is not closed under the group action".into())
            })?;
            if owner[j].is_none() {
                owner[j] = Some(id);
                members.push(j);
            }
        }
        members.sort_unstable();
        orbits.push(members);
    }
    Ok(orbits)
}

#[derive(Debug, Clone, Serialize)]
pub struct OrbitGroup {
    pub pairs: Vec<usize>,
    /// Mean NLL of the group's members.
    pub nll: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrbitReport {
    pub epoch: usize,
    pub rtol: f64,
    pub atol: f64,
    pub groups: Vec<OrbitGroup>,
}

impl OrbitReport {
    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.pairs.len()).collect()
    }

    /// True iff every given orbit sits wholly inside one observed group.
    pub fn covers(&self, orbits: &[Vec<usize>]) -> bool {
        orbits.iter().all(|orbit| {
            self.groups.iter().any(|grp| orbit.iter().all(|i| grp.pairs.contains(i)))
        })
    }

    pub fn render(&self) -> String {
        let mut s = format!("epoch {}: {} orbits, sizes {:?}\n", self.epoch, self.groups.len(), self.sizes());
        for (k, grp) in self.groups.iter().enumerate() {
            writeln!(s, "  orbit {k} nll {:.6} pairs {:?}", grp.nll, grp.pairs).unwrap();
        }
        s
    }
}

/// Group the pairs by NLL closeness: i and j are neighbors when
/// |v_i - v_j| <= atol + rtol*|v_j| in either direction, and groups are
/// the connected components of that relation.
pub fn observed_orbits<T: Real>(
    model: &HardAlignmentModel,
    store: &ParamStore<T>,
    pairs: &[SentencePair],
    epoch: usize,
    rtol: f64,
    atol: f64,
) -> Result<OrbitReport, ModelError> {
    let mut nll = Vec::with_capacity(pairs.len());
    for p in pairs {
        let graph = Graph::<T>::new();
        let ll = model.log_likelihood(&graph, store, &p.x, &p.y)?;
        nll.push(-graph.item(ll).to_f64().unwrap());
    }
    let close = |a: f64, b: f64| {
        (a - b).abs() <= atol + rtol * b.abs() || (a - b).abs() <= atol + rtol * a.abs()
    };
    let n = pairs.len();
    let mut group_of = vec![usize::MAX; n];
    let mut groups = Vec::new();
    for i in 0..n {
        if group_of[i] != usize::MAX {
            continue;
        }
        let id = groups.len();
        group_of[i] = id;
        let mut stack = vec![i];
        let mut members = Vec::new();
        while let Some(u) = stack.pop() {
            members.push(u);
            for v in 0..n {
                if group_of[v] == usize::MAX && close(nll[u], nll[v]) {
                    group_of[v] = id;
                    stack.push(v);
                }
            }
        }
        members.sort_unstable();
        let mean = members.iter().map(|&k| nll[k]).sum::<f64>() / members.len() as f64;
        groups.push(OrbitGroup { pairs: members, nll: mean });
    }
    Ok(OrbitReport { epoch, rtol, atol, groups })
}

/// Train per `cfg` while recording an orbit report every `every` epochs;
/// the report at epoch 0 observes the untrained model.  A final report
/// for the restored best-validation parameters is appended, tagged with
/// the best epoch.
pub fn track_orbits<T: Real>(
    cfg: &TrainConfig,
    train_set: &Dataset,
    val_set: &Dataset,
    pairs: &[SentencePair],
    every: usize,
) -> Result<(Trained<T>, Vec<OrbitReport>), TrainError> {
    assert!(every > 0, "every must be positive");
    let mut reports = Vec::new();
    let mut failure = None;
    let trained = train_with_hook::<T>(cfg, train_set, val_set, |epoch, model, store| {
        if failure.is_none() && epoch % every == 0 {
            match observed_orbits(model, store, pairs, epoch, ORBIT_RTOL, ORBIT_ATOL) {
                Ok(r) => reports.push(r),
                Err(e) => failure = Some(e),
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e.into());
    }
    let last = observed_orbits(
        &trained.model,
        &trained.store,
        pairs,
        trained.report.best_epoch,
        ORBIT_RTOL,
        ORBIT_ATOL,
    )?;
    reports.push(last);
    Ok((trained, reports))
}

/// Alignment heuristic: output position m takes the leftmost
/// not-yet-used input position holding the input token its own token is
/// paired with, falling back to the leftmost such position when all are
/// used and to the input terminator when none exists (1-based).
pub fn gold_alignment(x: &[TokenId], y: &[TokenId], map: &LexicalClassMap) -> Vec<usize> {
    let mut used = vec![false; x.len()];
    y.iter()
        .map(|&ym| {
            let n = match map.source_of_output(ym) {
                Some(src) => {
                    let mut first = None;
                    let mut unused = None;
                    for (i, &t) in x.iter().enumerate() {
                        if t == src {
                            first.get_or_insert(i);
                            if !used[i] {
                                unused = Some(i);
                                break;
                            }
                        }
                    }
                    unused.or(first).unwrap_or(x.len() - 1)
                }
                None => x.len() - 1,
            };
            used[n] = true;
            n + 1
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub tolerance: f64,
    pub pairs: usize,
    pub group_order: usize,
    /// Alignment distributions under every group element, compared
    /// bitwise.
    pub aligner_bits_equal: bool,
    pub aligner_max_abs: f64,
    /// Worst relative |Δ log p(y|x)| under every group element.
    pub model_max_rel: f64,
    /// Worst relative |Δ log p(y|x,a)| under sampled product elements
    /// with the alignment held fixed.
    pub conditional_max_rel: f64,
    /// The fixed alignment used per pair for the conditional audit.
    pub alignments: Vec<Vec<usize>>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.aligner_bits_equal
            && self.model_max_rel <= self.tolerance
            && self.conditional_max_rel <= self.tolerance
    }

    pub fn render(&self) -> String {
        let verdict = |ok: bool| if ok { "pass" } else { "FAIL" };
        let mut s = String::new();
        writeln!(
            s,
            "audit aligner-invariance max_abs {:.3e} bits_equal {} {}",
            self.aligner_max_abs,
            self.aligner_bits_equal,
            verdict(self.aligner_bits_equal)
        )
        .unwrap();
        writeln!(
            s,
            "audit model-equivariance max_rel {:.3e} tol {:.1e} {}",
            self.model_max_rel,
            self.tolerance,
            verdict(self.model_max_rel <= self.tolerance)
        )
        .unwrap();
        writeln!(
            s,
            "audit conditional-invariance max_rel {:.3e} tol {:.1e} {}",
            self.conditional_max_rel,
            self.tolerance,
            verdict(self.conditional_max_rel <= self.tolerance)
        )
        .unwrap();
        writeln!(s, "audit pairs {} group_order {}", self.pairs, self.group_order).unwrap();
        s
    }
}

fn matrix_values<T: Real>(
    model: &HardAlignmentModel,
    store: &ParamStore<T>,
    x: &[TokenId],
    y: &[TokenId],
) -> Vec<T> {
    let map = model.class_map();
    let graph = Graph::<T>::new();
    let enc = model.aligner().encode_input(&graph, store, &delexicalize(x, Side::Input, map));
    let mat =
        model.aligner().align_matrix(&graph, store, &delexicalize(y, Side::Output, map), enc);
    let values = graph.value(mat).as_slice().to_vec();
    values
}

fn ll_value<T: Real>(
    model: &HardAlignmentModel,
    store: &ParamStore<T>,
    x: &[TokenId],
    y: &[TokenId],
) -> Result<f64, ModelError> {
    let graph = Graph::<T>::new();
    let ll = model.log_likelihood(&graph, store, x, y)?;
    Ok(graph.item(ll).to_f64().unwrap())
}

fn cond_value<T: Real>(
    model: &HardAlignmentModel,
    store: &ParamStore<T>,
    x: &[TokenId],
    y: &[TokenId],
    a: &[usize],
) -> Result<f64, ModelError> {
    let graph = Graph::<T>::new();
    let ll = model.conditional_log_likelihood(&graph, store, x, y, a)?;
    Ok(graph.item(ll).to_f64().unwrap())
}

/// Three invariance audits over a sample of pairs: (a) the alignment
/// distribution is unchanged under every group element, bitwise; (b) the
/// full log-likelihood is unchanged under every group element, within
/// `tolerance` relative; (c) the alignment-conditioned log-likelihood is
/// unchanged under random product elements acting position-wise, within
/// `tolerance` relative.
pub fn audit_equivariance<T: Real>(
    model: &HardAlignmentModel,
    store: &ParamStore<T>,
    pairs: &[SentencePair],
    tolerance: f64,
    seed: u64,
) -> Result<AuditReport, AnalysisError> {
    let map = model.class_map();
    let group = map.group();
    let in_act = map.input_action();
    let out_act = map.output_action();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut aligner_bits_equal = true;
    let mut aligner_max_abs = 0.0f64;
    let mut model_max_rel = 0.0f64;
    let mut conditional_max_rel = 0.0f64;
    let mut alignments = Vec::with_capacity(pairs.len());

    for pair in pairs {
        let base_mat = matrix_values(model, store, &pair.x, &pair.y);
        let base_ll = ll_value(model, store, &pair.x, &pair.y)?;
        for g in group.elements() {
            let gx = act_on_sentence(g, &in_act, &pair.x);
            let gy = act_on_sentence(g, &out_act, &pair.y);
            let mat = matrix_values(model, store, &gx, &gy);
            for (&a, &b) in mat.iter().zip(&base_mat) {
                if a != b {
                    aligner_bits_equal = false;
                }
                let d = (a - b).abs().to_f64().unwrap();
                aligner_max_abs = aligner_max_abs.max(d);
            }
            let ll = ll_value(model, store, &gx, &gy)?;
            let rel = (ll - base_ll).abs() / base_ll.abs().max(1e-300);
            model_max_rel = model_max_rel.max(rel);
        }

        let alignment = gold_alignment(&pair.x, &pair.y, map);
        let base_cond = cond_value(model, store, &pair.x, &pair.y, &alignment)?;
        for _ in 0..PRODUCT_SAMPLES {
            let components =
                (0..pair.x.len()).map(|_| group.element(rng.gen_range(0..group.order()))).collect();
            let pg = ProductGroupElement::new(components)?;
            let gx = act_componentwise(&pg, &in_act, &pair.x)?;
            let gy = act_aligned(&pg, &out_act, &pair.y, &alignment)?;
            let cond = cond_value(model, store, &gx, &gy, &alignment)?;
            let rel = (cond - base_cond).abs() / base_cond.abs().max(1e-300);
            conditional_max_rel = conditional_max_rel.max(rel);
        }
        alignments.push(alignment);
    }

    Ok(AuditReport {
        tolerance,
        pairs: pairs.len(),
        group_order: group.order(),
        aligner_bits_equal,
        aligner_max_abs,
        model_max_rel,
        conditional_max_rel,
        alignments,
    })
}
