//! Synthetic sentences and corpora with known label mechanics.
//!
//! * [`random_sentence`] / [`random_sample`]: random trees over a small
//!   vocabulary, for property tests.
//! * [`shortcut_corpus`]: labels are a function of the argument head words;
//!   the verb is noise.
//! * [`context_corpus`]: labels are a function of the verb; arguments are
//!   noise.
//! * [`adversarial_groups`]: argument pairs with the verb swapped to verbs of
//!   the other labels.

use std::ops::RangeInclusive;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::corpus::{ArgumentSpan, RelationSample, Sentence, SyntacticClass, TokenSpan};
use crate::metrics::AdversarialGroup;

pub const DEFAULT_WORDS: [&str; 12] = [
    "he", "worked", "at", "the", "company", "lives", "in", "city", "with", "wife", "joined", "team",
];

const POS_TAGS: [&str; 7] = ["NOUN", "VERB", "AUX", "ADP", "ADJ", "PROPN", "PUNCT"];

/// Random single-rooted tree over `n` tokens drawn from `words`.
pub fn random_sentence<R: Rng>(rng: &mut R, n: usize, words: &[&str]) -> Sentence {
    assert!(n > 0);
    let root = rng.random_range(0..n);
    let mut attached = vec![root];
    let mut pending: Vec<usize> = (0..n).filter(|&i| i != root).collect();
    let mut heads = vec![None; n];
    while !pending.is_empty() {
        let k = rng.random_range(0..pending.len());
        let node = pending.swap_remove(k);
        heads[node] = Some(*attached.choose(rng).unwrap());
        attached.push(node);
    }
    let parts: Vec<(&str, &str, Option<usize>, &str)> = (0..n)
        .map(|i| {
            let word = *words.choose(rng).unwrap();
            let pos = *POS_TAGS.choose(rng).unwrap();
            (word, pos, heads[i], if heads[i].is_none() { "root" } else { "dep" })
        })
        .collect();
    Sentence::from_parts("synth", 0, &parts)
}

/// Random canonical sample with one- or two-token arguments and an optional
/// extent annotation.
pub fn random_sample<R: Rng>(rng: &mut R, len: RangeInclusive<usize>, words: &[&str]) -> RelationSample {
    let n = rng.random_range(len.start().max(&2).to_owned()..=*len.end());
    let sentence = random_sentence(rng, n, words);
    let a1_start = rng.random_range(0..n - 1);
    let a1_len = if a1_start + 2 < n && rng.random_bool(0.3) { 2 } else { 1 };
    let a1_end = a1_start + a1_len;
    let a2_start = rng.random_range(a1_end..n);
    let a2_len = if a2_start + 1 < n && rng.random_bool(0.3) { 2 } else { 1 };
    let a2_end = a2_start + a2_len;
    let extent_span = rng.random_bool(0.5).then(|| TokenSpan {
        start: rng.random_range(0..=a1_start),
        end: rng.random_range(a2_end..=n),
    });
    RelationSample {
        sample_id: format!("rand-{n}-{a1_start}-{a2_start}-{}", rng.random::<u32>()),
        sentence: Arc::new(sentence),
        arg1: ArgumentSpan::new(a1_start, a1_end),
        arg2: ArgumentSpan::new(a2_start, a2_end),
        label: None,
        syntactic_class: None,
        extent_span,
        genre: "synth".into(),
        swapped: false,
    }
}

pub const LABELS: [&str; 4] = ["Employer", "Family", "Located", "Member"];

const PERSONS: [&str; 8] = ["John", "Mary", "Ahmed", "Li", "Sara", "Tom", "Ana", "Raj"];
const ARG2_BY_LABEL: [[&str; 5]; 4] = [
    ["Reuters", "Google", "Siemens", "NBC", "Boeing"],
    ["father", "sister", "cousin", "uncle", "wife"],
    ["Paris", "Baghdad", "Texas", "Lagos", "Oslo"],
    ["NATO", "Hamas", "UNICEF", "Congress", "FIFA"],
];
const VERBS_BY_LABEL: [[&str; 3]; 4] = [
    ["worked", "works", "served"],
    ["married", "divorced", "adopted"],
    ["lives", "resides", "stayed"],
    ["joined", "led", "represents"],
];
const NEUTRAL_ARG2: [&str; 6] = ["Acme", "Smith", "Berlin", "Orion", "Delta", "Vega"];
const PREPS: [&str; 3] = ["with", "at", "in"];
const ADVERBS: [&str; 3] = ["recently", "also", "reportedly"];
const XOR_ARG1: [&str; 2] = ["Alpha", "Beta"];
const XOR_ARG2: [&str; 2] = ["Unit", "Bureau"];

fn xor_label(a1: usize, a2: usize) -> usize {
    // Employer on the diagonal, Member off it
    if a1 == a2 {
        0
    } else {
        3
    }
}

struct Frame<'a> {
    honorific: bool,
    arg1: &'a str,
    adverb: Option<&'a str>,
    verb: &'a str,
    prep: &'a str,
    det: bool,
    arg2: &'a str,
}

fn frame_sample(id: String, f: &Frame<'_>, label: &str, class: SyntacticClass) -> RelationSample {
    // heads are filled in once positions are known
    let mut parts: Vec<(&str, &str, Option<usize>, &str)> = Vec::new();
    if f.honorific {
        parts.push(("Mr.", "PROPN", None, "compound"));
    }
    let a1_head = parts.len();
    parts.push((f.arg1, "PROPN", None, "nsubj"));
    if let Some(adv) = f.adverb {
        parts.push((adv, "ADV", None, "advmod"));
    }
    let verb = parts.len();
    parts.push((f.verb, "VERB", None, "root"));
    parts.push((f.prep, "ADP", None, "case"));
    if f.det {
        parts.push(("the", "DET", None, "det"));
    }
    let a2 = parts.len();
    parts.push((f.arg2, "PROPN", None, "obl"));
    parts.push((".", "PUNCT", None, "punct"));
    for p in parts.iter_mut() {
        p.2 = match p.3 {
            "compound" => Some(a1_head),
            "root" => None,
            "case" | "det" => Some(a2),
            _ => Some(verb),
        };
    }
    RelationSample {
        sample_id: id,
        sentence: Arc::new(Sentence::from_parts("synth", 0, &parts)),
        arg1: ArgumentSpan {
            start: 0,
            end: a1_head + 1,
            entity_type: "PER".into(),
            entity_subtype: None,
        },
        arg2: ArgumentSpan {
            start: a2,
            end: a2 + 1,
            entity_type: "ORG".into(),
            entity_subtype: None,
        },
        label: Some(label.to_string()),
        syntactic_class: Some(class),
        extent_span: None,
        genre: "synth".into(),
        swapped: false,
    }
}

fn random_frame<'a, R: Rng>(rng: &mut R, arg1: &'a str, verb: &'a str, arg2: &'a str) -> Frame<'a> {
    Frame {
        honorific: rng.random_bool(0.3),
        arg1,
        adverb: rng.random_bool(0.5).then(|| *ADVERBS.choose(rng).unwrap()),
        verb,
        prep: PREPS.choose(rng).unwrap(),
        det: rng.random_bool(0.3),
        arg2,
    }
}

fn any_verb<R: Rng>(rng: &mut R) -> &'static str {
    let l = rng.random_range(0..LABELS.len());
    VERBS_BY_LABEL[l].choose(rng).unwrap()
}

/// Corpus whose labels are fixed by the argument head words. About
/// `xor_fraction` of the samples use argument pairs whose label depends on
/// both heads jointly, which no additive model over single words resolves.
pub fn shortcut_corpus<R: Rng>(rng: &mut R, n: usize, xor_fraction: f64) -> Vec<RelationSample> {
    (0..n)
        .map(|i| {
            if rng.random_bool(xor_fraction) {
                let (x, y) = (rng.random_range(0..2), rng.random_range(0..2));
                let label = LABELS[xor_label(x, y)];
                let verb = any_verb(rng);
                let frame = random_frame(rng, XOR_ARG1[x], verb, XOR_ARG2[y]);
                frame_sample(format!("short-{i}"), &frame, label, SyntacticClass::Other)
            } else {
                let l = rng.random_range(0..LABELS.len());
                let arg1 = PERSONS.choose(rng).unwrap();
                let arg2 = ARG2_BY_LABEL[l].choose(rng).unwrap();
                let verb = any_verb(rng);
                let frame = random_frame(rng, arg1, verb, arg2);
                frame_sample(format!("short-{i}"), &frame, LABELS[l], SyntacticClass::PreMod)
            }
        })
        .collect()
}

/// Corpus whose labels are fixed by the verb; argument words are drawn
/// independently of the label.
pub fn context_corpus<R: Rng>(rng: &mut R, n: usize) -> Vec<RelationSample> {
    (0..n)
        .map(|i| {
            let l = rng.random_range(0..LABELS.len());
            let arg1 = PERSONS.choose(rng).unwrap();
            let arg2 = NEUTRAL_ARG2.choose(rng).unwrap();
            let verb = VERBS_BY_LABEL[l].choose(rng).unwrap();
            let frame = random_frame(rng, arg1, verb, arg2);
            frame_sample(format!("ctx-{i}"), &frame, LABELS[l], SyntacticClass::Verbal)
        })
        .collect()
}

/// `n_groups` argument pairs. The original uses a verb agreeing with the
/// argument-implied label; each variant keeps the argument texts and swaps in
/// a verb of one of the other labels.
pub fn adversarial_groups<R: Rng>(rng: &mut R, n_groups: usize) -> Vec<AdversarialGroup> {
    (0..n_groups)
        .map(|g| {
            let l = rng.random_range(0..LABELS.len());
            let arg1 = PERSONS.choose(rng).unwrap();
            let arg2 = ARG2_BY_LABEL[l].choose(rng).unwrap();
            let verb = VERBS_BY_LABEL[l].choose(rng).unwrap();
            let base = random_frame(rng, arg1, verb, arg2);
            let original = frame_sample(format!("adv-{g}-orig"), &base, LABELS[l], SyntacticClass::Verbal);
            let variants = (0..LABELS.len())
                .filter(|&m| m != l)
                .map(|m| {
                    let frame = Frame {
                        verb: VERBS_BY_LABEL[m].choose(rng).unwrap(),
                        ..base
                    };
                    frame_sample(format!("adv-{g}-v{m}"), &frame, LABELS[m], SyntacticClass::Verbal)
                })
                .collect();
            AdversarialGroup {
                group_id: format!("group-{g}"),
                original,
                variants,
            }
        })
        .collect()
}
