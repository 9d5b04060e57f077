//! Acceptance gate.  Each criterion is one test printing a single
//! `criterion N: pass|FAIL — detail` line (visible with --nocapture).
//! Criteria 1-7 are fast checks of the algebra, layers, oracles, and
//! gradients; 8-10 train full models and are `#[ignore]`d — run them in
//! release with `--ignored --test-threads=1`.  Wall budgets are enforced
//! in release builds only.

mod common;

use equitrans::analysis::{
    audit_equivariance, probe_set, theoretical_orbits, track_orbits, OrbitReport, PROBE_X_FORM,
    PROBE_Y_FORM,
};
use equitrans::data::{
    builtin_lexicon, delexicalize, load_split, parse_line, EquivariantClass, Side, SplitName,
    SplitSpec,
};
use equitrans::group::{
    act_on_sentence, act_on_token, compose, inverse, orbit, CyclicShiftGroup,
};
use equitrans::layers::{EmbedKind, Translator};
use equitrans::tensor::{gradcheck, Graph, ParamStore, TensorData};
use equitrans::train::{
    preset, run_low_data, run_split, TrainConfig, Trained, VariantKind,
};
use equitrans::transducer::{EvalCounts, HardAlignmentModel, ModelDims, Variant};
use equitrans::SentencePair;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;
use std::time::Instant;

fn report(n: usize, ok: bool, detail: &str, started: Instant, budget_secs: f64) {
    let elapsed = started.elapsed().as_secs_f64();
    let verdict = if ok { "pass" } else { "FAIL" };
    let line = format!("criterion {n}: {verdict} — {detail} ({elapsed:.2}s)");
    println!("{line}");
    assert!(ok, "{line}");
    if !cfg!(debug_assertions) {
        assert!(elapsed <= budget_secs, "criterion {n}: over budget {budget_secs}s: {elapsed:.2}s");
    }
}

/// Shortest corpus commands parsed into id pairs.
fn short_pairs(count: usize) -> Vec<SentencePair> {
    let (in_vocab, out_vocab, _) = builtin_lexicon();
    let mut cmds = common::all_commands();
    cmds.sort_by_key(|(i, o)| (i.len() + o.len(), i.clone()));
    cmds.iter()
        .take(count)
        .map(|(i, o)| {
            parse_line(&common::format_line(i, o), 0, &in_vocab, &out_vocab).expect("parses")
        })
        .collect()
}

fn tiny_dims() -> ModelDims {
    ModelDims { k_embed: 4, n_filters: 3, align_emb: 5, hidden: 4 }
}

fn seeded_model(
    which: EquivariantClass,
    dims: ModelDims,
    variant: Variant,
    kind: EmbedKind,
    seed: u64,
) -> (HardAlignmentModel, ParamStore<f64>) {
    let (_, _, map) = builtin_lexicon();
    let map = map.with_equivariant(which);
    let model = HardAlignmentModel::new(&map, dims, variant, kind);
    let mut store = ParamStore::new();
    model.init_params(&mut store, &mut ChaCha8Rng::seed_from_u64(seed));
    (model, store)
}

#[test]
fn criterion_01_group_algebra() {
    let t0 = Instant::now();
    for p in 1..=8 {
        let group = CyclicShiftGroup::new(p).unwrap();
        let elems: Vec<_> = group.elements().collect();
        assert_eq!(elems.len(), p);
        let id = group.identity();
        for &a in &elems {
            assert_eq!(compose(a, id).unwrap().shift(), a.shift());
            assert_eq!(compose(id, a).unwrap().shift(), a.shift());
            assert!(compose(a, inverse(a)).unwrap().is_identity());
            assert!(compose(inverse(a), a).unwrap().is_identity());
            for &b in &elems {
                assert!(compose(a, b).unwrap().shift() < p, "closure");
                for &c in &elems {
                    let left = compose(compose(a, b).unwrap(), c).unwrap();
                    let right = compose(a, compose(b, c).unwrap()).unwrap();
                    assert_eq!(left.shift(), right.shift(), "associativity");
                }
            }
        }
    }

    let (in_vocab, _, map) = builtin_lexicon();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for which in [EquivariantClass::Verb, EquivariantClass::Direction] {
        let m = map.clone().with_equivariant(which);
        let action = m.input_action();
        let group = m.group();
        for _ in 0..20 {
            let len = rng.gen_range(1..=9);
            let sentence: Vec<_> = (0..len).map(|_| rng.gen_range(0..in_vocab.len())).collect();
            for a in group.elements() {
                for b in group.elements() {
                    let ab = compose(a, b).unwrap();
                    let stepwise = act_on_sentence(a, &action, &act_on_sentence(b, &action, &sentence));
                    assert_eq!(act_on_sentence(ab, &action, &sentence), stepwise);
                }
            }
        }
    }

    let pairs = short_pairs(400);
    let two_verb: Vec<&SentencePair> = pairs
        .iter()
        .filter(|p| {
            let verbs: Vec<_> =
                p.x.iter().filter(|&&t| map.class_of_input(t) == 0).collect();
            verbs.len() == 2 && verbs[0] != verbs[1]
        })
        .take(10)
        .collect();
    assert!(two_verb.len() == 10, "corpus has two-verb commands");
    let in_action = map.input_action();
    let out_action = map.output_action();
    let group = map.group();
    for p in &two_verb {
        let orb = orbit(&p.x, &p.y, &in_action, &out_action, group);
        assert_eq!(orb.len(), 4, "two-verb orbit size");
    }
    report(1, true, "orders 1-8 axioms, action composition, two-verb orbits of 4", t0, 1.0);
}

#[test]
fn criterion_02_layer_equivariance() {
    let t0 = Instant::now();
    let (_, _, map) = builtin_lexicon();
    let mut worst_layer: f64 = 0.0;
    let mut worst_prob: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for which in [EquivariantClass::Verb, EquivariantClass::Direction] {
        let m = map.clone().with_equivariant(which);
        let p = m.group().order();
        let group = m.group();
        let act_in = m.input_action();
        let act_out = m.output_action();
        for draw in 0..50 {
            let k = rng.gen_range(3..8);
            let d = rng.gen_range(2..6);
            let t = Translator::new(&m, k, d, EmbedKind::Equivariant);
            let mut store = ParamStore::<f64>::new();
            t.init_params(&mut store, &mut ChaCha8Rng::seed_from_u64(1000 + draw));

            let embed_rows = |x| {
                let g = Graph::new();
                let v = g.value(t.g_embed(&g, &store, x)).clone();
                v
            };
            for x in 0..m.input_vocab_len() {
                let base = embed_rows(x);
                for gs in 0..p {
                    let acted = embed_rows(act_on_token(group.element(gs), &act_in, x));
                    for h in 0..p {
                        for c in 0..k {
                            let dev = (acted.get(h, c) - base.get((h + p - gs) % p, c)).abs();
                            worst_layer = worst_layer.max(dev);
                        }
                    }
                }
            }

            let shift_rows = |f: &TensorData<f64>, gs: usize, cols: usize| {
                let mut out = TensorData::zeros(p, cols);
                for h in 0..p {
                    for c in 0..cols {
                        out.set(h, c, f.get((h + p - gs) % p, c));
                    }
                }
                out
            };
            let f = TensorData::uniform(p, k, 1.0, &mut rng);
            let conv_of = |input: TensorData<f64>| {
                let g = Graph::new();
                let v = g.value(t.g_conv(&g, &store, g.constant(input))).clone();
                v
            };
            let base = conv_of(f.clone());
            for gs in 0..p {
                let acted = conv_of(shift_rows(&f, gs, k));
                for h in 0..p {
                    for c in 0..d {
                        let dev = (acted.get(h, c) - base.get((h + p - gs) % p, c)).abs();
                        worst_layer = worst_layer.max(dev);
                    }
                }
            }

            let phi = TensorData::uniform(p, d, 1.0, &mut rng);
            for y in 0..m.output_vocab_len() {
                let base = {
                    let g = Graph::new();
                    g.item(t.g_decode(&g, &store, g.constant(phi.clone()), y))
                };
                for gs in 0..p {
                    let gy = act_on_token(group.element(gs), &act_out, y);
                    let g = Graph::new();
                    let acted = g.item(t.g_decode(&g, &store, g.constant(shift_rows(&phi, gs, d)), gy));
                    worst_layer = worst_layer.max((acted - base).abs());
                }
            }

            let x = rng.gen_range(0..m.input_vocab_len());
            let base = {
                let g = Graph::new();
                let v = g.value(t.logprobs(&g, &store, x)).clone();
                v
            };
            for gs in group.elements() {
                let gx = act_on_token(gs, &act_in, x);
                let g = Graph::new();
                let acted = g.value(t.logprobs(&g, &store, gx)).clone();
                for y in 0..m.output_vocab_len() {
                    let gy = act_on_token(gs, &act_out, y);
                    let (a, b) = (acted.get(gy, 0).exp(), base.get(y, 0).exp());
                    worst_prob = worst_prob.max((a - b).abs() / b.abs().max(1e-300));
                }
            }
        }
    }
    let ok = worst_layer <= 1e-12 && worst_prob <= 1e-9;
    let detail = format!(
        "100 draws, |G| in {{2,4}}: layer dev {worst_layer:.2e} <= 1e-12, translator prob rel {worst_prob:.2e} <= 1e-9"
    );
    report(2, ok, &detail, t0, 10.0);
}

#[test]
fn criterion_03_aligner_invariance_is_bit_exact() {
    let t0 = Instant::now();
    let (_, _, map) = builtin_lexicon();
    let pairs = short_pairs(20);
    let group = map.group();
    let in_action = map.input_action();
    let out_action = map.output_action();
    let mut checked = 0usize;
    for seed in 0..100 {
        let (model, store) = seeded_model(
            EquivariantClass::Verb,
            ModelDims { k_embed: 3, n_filters: 2, align_emb: 6, hidden: 5 },
            Variant::Sum,
            EmbedKind::Equivariant,
            seed,
        );
        let aligner = model.aligner();
        let matrix_bits = |x: &[usize], y: &[usize]| -> Vec<u64> {
            let in_classes = delexicalize(x, Side::Input, &map);
            let out_classes = delexicalize(y, Side::Output, &map);
            let g = Graph::<f64>::new();
            let enc = aligner.encode_input(&g, &store, &in_classes);
            let mat = aligner.align_matrix(&g, &store, &out_classes, enc);
            let bits: Vec<u64> = g.value(mat).as_slice().iter().map(|v| v.to_bits()).collect();
            bits
        };
        for pair in &pairs {
            let base = matrix_bits(&pair.x, &pair.y);
            for g in group.elements() {
                let gx = act_on_sentence(g, &in_action, &pair.x);
                let gy = act_on_sentence(g, &out_action, &pair.y);
                assert_eq!(matrix_bits(&gx, &gy), base, "seed {seed} shift {}", g.shift());
                checked += 1;
            }
        }
    }
    report(
        3,
        true,
        &format!("{checked} alignment matrices bitwise equal across 100 models x 20 pairs"),
        t0,
        30.0,
    );
}

#[test]
fn criterion_04_sum_matches_brute_force() {
    let t0 = Instant::now();
    let (in_vocab, out_vocab, _) = builtin_lexicon();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let (model, store) = seeded_model(
            EquivariantClass::Verb,
            tiny_dims(),
            Variant::Sum,
            EmbedKind::Equivariant,
            400 + seed,
        );
        for n in 1..=4usize {
            for m in 1..=3usize {
                let mut x: Vec<usize> =
                    (0..n - 1).map(|_| rng.gen_range(0..in_vocab.len() - 1)).collect();
                x.push(in_vocab.eos());
                let mut y: Vec<usize> =
                    (0..m - 1).map(|_| rng.gen_range(0..out_vocab.len() - 1)).collect();
                y.push(out_vocab.eos());

                let g = Graph::<f64>::new();
                let mut counts = EvalCounts::default();
                let ll = model.log_likelihood_counted(&g, &store, &x, &y, &mut counts).unwrap();
                assert_eq!(counts.joint_terms, m * n, "term count is exactly M*N");
                let marginal = g.item(ll);
                let oracle = model.brute_force_likelihood(&g, &store, &x, &y).unwrap();
                worst = worst.max((marginal - oracle).abs() / oracle.abs().max(1e-300));
            }
        }
    }
    let ok = worst <= 1e-10;
    report(
        4,
        ok,
        &format!("sum marginal vs alignment enumeration rel {worst:.2e} <= 1e-10, M*N terms"),
        t0,
        60.0,
    );
}

#[test]
fn criterion_05_model_equivariance_audits() {
    let t0 = Instant::now();
    let (in_vocab, out_vocab, map) = builtin_lexicon();
    let probe = probe_set(PROBE_X_FORM, PROBE_Y_FORM, &in_vocab, &out_vocab, &map).unwrap();
    let mut pairs = short_pairs(8);
    pairs.extend(probe.iter().take(4).cloned());

    for seed in 0..10 {
        for variant in [Variant::Sum, Variant::Max, Variant::annealed_at(0.37)] {
            let (model, store) = seeded_model(
                EquivariantClass::Verb,
                tiny_dims(),
                variant,
                EmbedKind::Equivariant,
                500 + seed,
            );
            let audit = audit_equivariance(&model, &store, &pairs, 1e-9, seed).unwrap();
            assert!(audit.passed(), "random model audit:\n{}", audit.render());
            assert!(audit.aligner_bits_equal);
        }
    }

    let dir = tempfile::tempdir().unwrap();
    common::write_split(dir.path(), SplitName::Simple, 0);
    let spec = SplitSpec::locate(dir.path(), SplitName::Simple).unwrap();
    let (full_train, _, _) = load_split(&spec, 3, &in_vocab, &out_vocab).unwrap();
    let mut small = full_train;
    small.pairs.truncate(60);
    let mut val = small.clone();
    val.pairs = val.pairs.split_off(48);
    let mut cfg = TrainConfig::default();
    cfg.dims = tiny_dims();
    cfg.batch_size = 8;
    cfg.epochs = 25;
    cfg.patience = 25;
    cfg.seed = 11;
    let trained: Trained<f64> = equitrans::train::train(&cfg, &small, &val).unwrap();
    let audit = audit_equivariance(&trained.model, &trained.store, &pairs, 1e-9, 1).unwrap();
    assert!(audit.passed(), "trained model audit:\n{}", audit.render());

    let (flat_model, flat_store) = seeded_model(
        EquivariantClass::Verb,
        tiny_dims(),
        Variant::Sum,
        EmbedKind::Flat,
        500,
    );
    let negative = audit_equivariance(&flat_model, &flat_store, &pairs, 1e-9, 2).unwrap();
    assert!(!negative.passed(), "flat embedding must fail the audit");
    assert!(negative.model_max_rel > 1e-9);

    report(
        5,
        true,
        "random + trained audits <= 1e-9 rel, flat-embedding control fails",
        t0,
        60.0,
    );
}

#[test]
fn criterion_06_gradients_match_finite_differences() {
    let t0 = Instant::now();
    let pairs = short_pairs(40);
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let sample: Vec<SentencePair> =
        pairs.choose_multiple(&mut rng, 5).cloned().collect();
    let mut worst: f64 = 0.0;

    for (i, pair) in sample.iter().enumerate() {
        let seed = 600 + i as u64;
        for variant in [Variant::Sum, Variant::Max, Variant::annealed_at(0.5)] {
            let (model, mut store) = seeded_model(
                EquivariantClass::Verb,
                tiny_dims(),
                variant,
                EmbedKind::Equivariant,
                seed,
            );
            let rep = gradcheck(
                &mut store,
                &mut |s| {
                    let g = Graph::new();
                    let ll = model.log_likelihood(&g, s, &pair.x, &pair.y).unwrap();
                    let loss = g.scale(ll, -1.0);
                    (g, loss)
                },
                1e-5,
                1e-4,
            );
            assert!(rep.passed(), "{} variant: {:.3e}", variant.name(), rep.max_rel_err());
            worst = worst.max(rep.max_rel_err());
        }

        // translator and aligner in isolation
        let (model, mut store) = seeded_model(
            EquivariantClass::Verb,
            tiny_dims(),
            Variant::Sum,
            EmbedKind::Equivariant,
            seed,
        );
        let rep = gradcheck(
            &mut store,
            &mut |s| {
                let g = Graph::new();
                let terms: Vec<_> = pair
                    .x
                    .iter()
                    .map(|&t| model.translator().logprobs(&g, s, t))
                    .collect();
                let loss = g.scale(g.sum(g.concat(&terms, 0)), -1.0);
                (g, loss)
            },
            1e-5,
            1e-4,
        );
        assert!(rep.passed(), "translator: {:.3e}", rep.max_rel_err());
        worst = worst.max(rep.max_rel_err());

        let map = model.class_map().clone();
        let rep = gradcheck(
            &mut store,
            &mut |s| {
                let g = Graph::new();
                let in_classes = delexicalize(&pair.x, Side::Input, &map);
                let out_classes = delexicalize(&pair.y, Side::Output, &map);
                let enc = model.aligner().encode_input(&g, s, &in_classes);
                let mat = model.aligner().align_matrix(&g, s, &out_classes, enc);
                let loss = g.scale(g.sum(mat), -1.0);
                (g, loss)
            },
            1e-5,
            1e-4,
        );
        assert!(rep.passed(), "aligner: {:.3e}", rep.max_rel_err());
        worst = worst.max(rep.max_rel_err());
    }
    report(
        6,
        true,
        &format!("translator, aligner, three variants on 5 pairs: max rel {worst:.2e} <= 1e-4"),
        t0,
        120.0,
    );
}

/// Smallest top-two gap across the rows of a pair's joint log-term
/// matrix.
fn min_joint_gap(
    model: &HardAlignmentModel,
    store: &ParamStore<f64>,
    pair: &SentencePair,
) -> f64 {
    let map = model.class_map();
    let g = Graph::<f64>::new();
    let in_classes = delexicalize(&pair.x, Side::Input, map);
    let out_classes = delexicalize(&pair.y, Side::Output, map);
    let enc = model.aligner().encode_input(&g, store, &in_classes);
    let align = g.value(model.aligner().align_matrix(&g, store, &out_classes, enc)).clone();
    let logprobs: Vec<Vec<f64>> = pair
        .x
        .iter()
        .map(|&t| {
            let lp = model.translator().logprobs(&g, store, t);
            let col = g.value(lp).as_slice().to_vec();
            col
        })
        .collect();
    let mut min_gap = f64::INFINITY;
    for (m, &y) in pair.y.iter().enumerate() {
        let mut row: Vec<f64> =
            (0..pair.x.len()).map(|n| logprobs[n][y] + align.get(m, n)).collect();
        row.sort_by(|a, b| b.total_cmp(a));
        if row.len() >= 2 {
            min_gap = min_gap.min(row[0] - row[1]);
        }
    }
    min_gap
}

#[test]
fn criterion_07_variant_limits() {
    let t0 = Instant::now();
    let (_, _, map) = builtin_lexicon();
    let pairs = short_pairs(60);
    let dims = tiny_dims();
    let mut worst_gap: f64 = 0.0;
    let mut worst_order: f64 = f64::NEG_INFINITY;
    let mut accepted = 0u64;
    let mut skipped = 0u64;
    let mut seed = 0u64;
    // Near-ties in a joint row cost the annealed reduction up to tau/e
    // at the tie whatever tau is, so the 1e-6 limit check only applies
    // to draws whose rows are clear of the tie band (gap >= 50 tau,
    // where the tempered weight is already e^-50).  The sum/max
    // ordering is exact and checked on every draw.
    while accepted < 1000 {
        seed += 1;
        let mut store = ParamStore::<f64>::new();
        let sum_model =
            HardAlignmentModel::new(&map, dims, Variant::Sum, EmbedKind::Equivariant);
        sum_model.init_params(&mut store, &mut ChaCha8Rng::seed_from_u64(2000 + seed));
        let max_model =
            HardAlignmentModel::new(&map, dims, Variant::Max, EmbedKind::Equivariant);
        let annealed_model = HardAlignmentModel::new(
            &map,
            dims,
            Variant::annealed_at(1e-4),
            EmbedKind::Equivariant,
        );
        let pair = &pairs[ChaCha8Rng::seed_from_u64(seed).gen_range(0..pairs.len())];
        let ll = |model: &HardAlignmentModel| {
            let g = Graph::<f64>::new();
            let v = model.log_likelihood(&g, &store, &pair.x, &pair.y).unwrap();
            g.item(v)
        };
        let (sum, max) = (ll(&sum_model), ll(&max_model));
        worst_order = worst_order.max(max - sum);
        if min_joint_gap(&sum_model, &store, pair) < 50.0 * 1e-4 {
            skipped += 1;
            continue;
        }
        accepted += 1;
        let annealed = ll(&annealed_model);
        worst_gap = worst_gap.max((annealed - max).abs() / max.abs().max(1e-300));
    }
    let ok = worst_gap <= 1e-6 && worst_order <= 1e-12;
    report(
        7,
        ok,
        &format!("1000 gap-clear instances ({skipped} tie-band draws set aside): annealed(1e-4) vs max rel {worst_gap:.2e} <= 1e-6, max <= sum on all draws (worst excess {worst_order:.2e})"),
        t0,
        10.0,
    );
}

// ---- full training runs (release, --ignored) ----

struct AddJumpRun {
    accuracy: f64,
    reports: Vec<OrbitReport>,
    theory: Vec<Vec<usize>>,
    seconds: f64,
}

static ADD_JUMP: OnceLock<AddJumpRun> = OnceLock::new();

// One CPU core: the search-selected sizes either cost several hundred
// seconds per epoch here or (the tiny Simple cell) stall near 91% at the
// epoch cap, so every full-split run trains at the reduced fallback sizes.
fn long_run_config(variant: VariantKind, split: SplitName) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.variant = variant;
    cfg.split = split;
    cfg.dims = ModelDims { k_embed: 32, n_filters: 8, align_emb: 64, hidden: 64 };
    cfg.batch_size = preset(variant, split).1;
    cfg.seed = 1;
    cfg
}

fn add_jump_run() -> &'static AddJumpRun {
    ADD_JUMP.get_or_init(|| {
        let t0 = Instant::now();
        let dir = tempfile::tempdir().unwrap();
        common::write_split(dir.path(), SplitName::AddJump, 0);
        let (in_vocab, out_vocab, map) = builtin_lexicon();
        let probe =
            probe_set(PROBE_X_FORM, PROBE_Y_FORM, &in_vocab, &out_vocab, &map).unwrap();
        let theory = theoretical_orbits(&probe, &map).unwrap();
        let mut cfg = long_run_config(VariantKind::Sum, SplitName::AddJump);
        cfg.data_dir = dir.path().to_path_buf();
        let spec = SplitSpec::locate(dir.path(), SplitName::AddJump).unwrap();
        let (train_set, val_set, test_set) =
            load_split(&spec, cfg.seed, &in_vocab, &out_vocab).unwrap();
        let (trained, reports) =
            track_orbits::<f32>(&cfg, &train_set, &val_set, &probe, 5).unwrap();
        let accuracy = trained.model.sequence_accuracy(&trained.store, &test_set, 3);
        AddJumpRun { accuracy, reports, theory, seconds: t0.elapsed().as_secs_f64() }
    })
}

fn accuracy_of(split: SplitName) -> (f64, f64) {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    common::write_split(dir.path(), split, 0);
    let mut cfg = long_run_config(VariantKind::Sum, split);
    cfg.data_dir = dir.path().to_path_buf();
    let (_, accuracy) = run_split::<f32>(&cfg).unwrap();
    (accuracy, t0.elapsed().as_secs_f64())
}

#[test]
#[ignore]
fn criterion_08_end_to_end_accuracy() {
    let t0 = Instant::now();
    let (simple, t_simple) = accuracy_of(SplitName::Simple);
    println!("  simple: {:.2} ({t_simple:.0}s)", simple * 100.0);
    let (around, t_around) = accuracy_of(SplitName::AroundRight);
    println!("  around-right: {:.2} ({t_around:.0}s)", around * 100.0);
    let jump = add_jump_run();
    println!("  add-jump: {:.2} ({:.0}s)", jump.accuracy * 100.0, jump.seconds);
    let (length, t_length) = accuracy_of(SplitName::Length);
    println!("  length: {:.2} ({t_length:.0}s)", length * 100.0);

    let ok = simple >= 0.99 && jump.accuracy >= 0.99 && around >= 0.99 && length >= 0.10;
    let detail = format!(
        "beam 3 accuracy: simple {:.2} add-jump {:.2} around-right {:.2} (>= 99.0), length {:.2} (>= 10.0, report-only)",
        simple * 100.0,
        jump.accuracy * 100.0,
        around * 100.0,
        length * 100.0
    );
    report(8, ok, &detail, t0, f64::INFINITY);
}

#[test]
#[ignore]
fn criterion_09_orbit_merging() {
    let t0 = Instant::now();
    let run = add_jump_run();
    let first = run.reports.first().expect("initial report");
    let last = run.reports.last().expect("final report");
    let starts_split = first.sizes() == vec![4, 4, 4, 4];
    let ends_merged = last.sizes() == vec![16];
    let theory_held = run.reports.iter().all(|r| r.covers(&run.theory));
    for r in &run.reports {
        println!("  epoch {}: orbit sizes {:?}", r.epoch, r.sizes());
    }
    let ok = starts_split && ends_merged && theory_held;
    let detail = format!(
        "probe orbits {:?} at epoch 0 -> {:?} at best epoch {}, theory contained at every sample",
        first.sizes(),
        last.sizes(),
        last.epoch
    );
    report(9, ok, &detail, t0, f64::INFINITY);
}

#[test]
#[ignore]
fn criterion_10_low_data_trend() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    common::write_split(dir.path(), SplitName::Simple, 0);
    // the trend only needs the small search-selected Simple sizes, which
    // train in minutes
    let mut cfg = long_run_config(VariantKind::Sum, SplitName::Simple);
    let (dims, batch) = preset(VariantKind::Sum, SplitName::Simple);
    cfg.dims = dims;
    cfg.batch_size = batch;
    cfg.data_dir = dir.path().to_path_buf();
    let cells = run_low_data::<f32>(&cfg, &[1, 64], &[cfg.seed]).unwrap();
    for c in &cells {
        println!("  {}%: {} train pairs, accuracy {:.2}", c.percent, c.train_pairs, c.accuracy * 100.0);
    }
    let acc = |p: u32| cells.iter().find(|c| c.percent == p).unwrap().accuracy;
    let ok = acc(64) > acc(1);
    let detail = format!(
        "simple accuracy at 64% ({:.2}) strictly exceeds 1% ({:.2})",
        acc(64) * 100.0,
        acc(1) * 100.0
    );
    report(10, ok, &detail, t0, f64::INFINITY);
}
