//! SCAN corpus generated from the task grammar, so tests can build split
//! files without shipping the dataset.

// Each integration test compiles its own copy and uses a subset.
#![allow(dead_code)]

use equitrans::data::SplitName;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

pub const TOTAL_COMMANDS: usize = 20_910;
pub const SIMPLE_TRAIN: usize = 16_728;
pub const LENGTH_CUTOFF: usize = 22;

const VERBS: [(&str, &str); 4] =
    [("walk", "I_WALK"), ("look", "I_LOOK"), ("run", "I_RUN"), ("jump", "I_JUMP")];

fn turn(dir: &str) -> &'static str {
    match dir {
        "left" => "I_TURN_LEFT",
        "right" => "I_TURN_RIGHT",
        other => panic!("not a direction: {other}"),
    }
}

/// The 34 verb phrases with their action sequences.
fn v_phrases() -> Vec<(String, Vec<&'static str>)> {
    let mut out = Vec::new();
    for (w, a) in VERBS {
        out.push((w.to_string(), vec![a]));
    }
    for dir in ["left", "right"] {
        let t = turn(dir);
        for (w, a) in VERBS {
            out.push((format!("{w} {dir}"), vec![t, a]));
        }
        out.push((format!("turn {dir}"), vec![t]));
        for (w, a) in VERBS {
            out.push((format!("{w} opposite {dir}"), vec![t, t, a]));
        }
        out.push((format!("turn opposite {dir}"), vec![t, t]));
        for (w, a) in VERBS {
            out.push((format!("{w} around {dir}"), [t, a].repeat(4)));
        }
        out.push((format!("turn around {dir}"), vec![t; 4]));
    }
    out
}

/// The 102 clause phrases: every verb phrase, plain and with a repeat.
fn s_phrases() -> Vec<(String, Vec<&'static str>)> {
    let mut out = Vec::new();
    for (p, a) in v_phrases() {
        out.push((p.clone(), a.clone()));
        out.push((format!("{p} twice"), a.repeat(2)));
        out.push((format!("{p} thrice"), a.repeat(3)));
    }
    out
}

/// Every derivable command as `(input phrase, output phrase)`, in a fixed
/// order.  `and` concatenates; `after` swaps execution order.
pub fn all_commands() -> Vec<(String, String)> {
    let s = s_phrases();
    let mut out = Vec::with_capacity(TOTAL_COMMANDS);
    for (p, a) in &s {
        out.push((p.clone(), a.join(" ")));
    }
    for (p1, a1) in &s {
        for (p2, a2) in &s {
            let both = |x: &[&str], y: &[&str]| {
                x.iter().chain(y).copied().collect::<Vec<_>>().join(" ")
            };
            out.push((format!("{p1} and {p2}"), both(a1, a2)));
            out.push((format!("{p1} after {p2}"), both(a2, a1)));
        }
    }
    out
}

fn has_seq(phrase: &str, seq: &[&str]) -> bool {
    let words: Vec<&str> = phrase.split_whitespace().collect();
    words.windows(seq.len()).any(|w| w == seq)
}

pub fn format_line(input: &str, output: &str) -> String {
    format!("IN: {input} OUT: {output}")
}

/// Partition the corpus into a split's train and test lines.
pub fn split_lines(name: SplitName, seed: u64) -> (Vec<String>, Vec<String>) {
    let cmds = all_commands();
    let mut train = Vec::new();
    let mut test = Vec::new();
    match name {
        SplitName::Simple | SplitName::LowData(_) => {
            let mut idx: Vec<usize> = (0..cmds.len()).collect();
            idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            for (k, &i) in idx.iter().enumerate() {
                let line = format_line(&cmds[i].0, &cmds[i].1);
                if k < SIMPLE_TRAIN {
                    train.push(line);
                } else {
                    test.push(line);
                }
            }
        }
        SplitName::AddJump => {
            for (input, output) in &cmds {
                let line = format_line(input, output);
                if input == "jump" {
                    continue;
                } else if has_seq(input, &["jump"]) {
                    test.push(line);
                } else {
                    train.push(line);
                }
            }
            let copies = train.len() / 9;
            train.extend(std::iter::repeat(format_line("jump", "I_JUMP")).take(copies));
        }
        SplitName::AroundRight => {
            for (input, output) in &cmds {
                let line = format_line(input, output);
                if !has_seq(input, &["around", "right"]) {
                    train.push(line);
                } else if !has_seq(input, &["turn", "around", "right"]) {
                    test.push(line);
                }
            }
        }
        SplitName::Length => {
            for (input, output) in &cmds {
                let line = format_line(input, output);
                if output.split_whitespace().count() <= LENGTH_CUTOFF {
                    train.push(line);
                } else {
                    test.push(line);
                }
            }
        }
    }
    (train, test)
}

fn write_lines(path: &Path, lines: &[String]) {
    let mut text = lines.join("\n");
    text.push('\n');
    std::fs::write(path, text).expect("write split file");
}

/// Write a split's flat train/test files under `root`; returns line
/// counts.
pub fn write_split(root: &Path, name: SplitName, seed: u64) -> (usize, usize) {
    let (tag_train, tag_test) = match name {
        SplitName::Simple | SplitName::LowData(_) => {
            ("tasks_train_simple.txt", "tasks_test_simple.txt")
        }
        SplitName::AddJump => ("tasks_train_addprim_jump.txt", "tasks_test_addprim_jump.txt"),
        SplitName::AroundRight => {
            ("tasks_train_template_around_right.txt", "tasks_test_template_around_right.txt")
        }
        SplitName::Length => ("tasks_train_length.txt", "tasks_test_length.txt"),
    };
    let (train, test) = split_lines(name, seed);
    std::fs::create_dir_all(root).expect("create data dir");
    write_lines(&root.join(tag_train), &train);
    write_lines(&root.join(tag_test), &test);
    (train.len(), test.len())
}
