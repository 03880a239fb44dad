//! Priority staging over the dependency tree.
//!
//! Every token of a sample is assigned the earliest applicable stage:
//!
//! | stage | tokens |
//! |-------|--------|
//! | OA    | argument tokens |
//! | AS    | descendants of either argument head |
//! | VOP   | verbs on the tree path between the two argument heads |
//! | BA    | tokens strictly between the arguments |
//! | E     | tokens inside the annotated relation extent |
//! | A     | everything else |
//!
//! The reveal order sorts non-argument tokens by (stage, index).

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{ArgumentSpan, RelationSample, Sentence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    OA,
    AS,
    VOP,
    BA,
    E,
    A,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::OA, Stage::AS, Stage::VOP, Stage::BA, Stage::E, Stage::A];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::OA => "OA",
            Stage::AS => "AS",
            Stage::VOP => "VOP",
            Stage::BA => "BA",
            Stage::E => "E",
            Stage::A => "A",
        }
    }

    /// Coarse grouping: argument-local (OA, AS) versus wider context.
    pub fn is_local(self) -> bool {
        matches!(self, Stage::OA | Stage::AS)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriorityAssignment {
    pub stages: Vec<Stage>,
    pub order: Vec<usize>,
}

impl PriorityAssignment {
    pub fn stage(&self, i: usize) -> Stage {
        self.stages[i]
    }

    pub fn tokens_in(&self, stage: Stage) -> BTreeSet<usize> {
        (0..self.stages.len()).filter(|&i| self.stages[i] == stage).collect()
    }

    /// Semantic class of a visible token set: the highest stage among its
    /// non-argument tokens, OA when it holds only arguments.
    pub fn class_of<'a>(&self, tokens: impl IntoIterator<Item = &'a usize>) -> Stage {
        tokens.into_iter().map(|&i| self.stages[i]).max().unwrap_or(Stage::OA)
    }
}

fn children(sentence: &Sentence) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); sentence.len()];
    for t in &sentence.tokens {
        if let Some(h) = t.head {
            out[h].push(t.index);
        }
    }
    out
}

/// The token of `span` whose governor lies outside the span (or is the root);
/// leftmost on ties.
pub fn span_head(sentence: &Sentence, span: &ArgumentSpan) -> usize {
    span.tokens()
        .find(|&i| match sentence.tokens[i].head {
            None => true,
            Some(h) => !span.contains(h),
        })
        .unwrap_or(span.start)
}

fn descendants(children: &[Vec<usize>], root: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<usize> = children[root].iter().copied().collect();
    while let Some(n) = queue.pop_front() {
        if seen.insert(n) {
            queue.extend(children[n].iter().copied());
        }
    }
    seen
}

/// Descendants of both argument heads, excluding the argument tokens.
pub fn argument_subtree_tokens(sentence: &Sentence, arg1: &ArgumentSpan, arg2: &ArgumentSpan) -> BTreeSet<usize> {
    let kids = children(sentence);
    let mut out = descendants(&kids, span_head(sentence, arg1));
    out.extend(descendants(&kids, span_head(sentence, arg2)));
    out.retain(|&i| !arg1.contains(i) && !arg2.contains(i));
    out
}

/// Tree path from `i` to `j`, both inclusive, through their lowest common
/// ancestor.
pub fn dependency_path(sentence: &Sentence, i: usize, j: usize) -> Vec<usize> {
    let mut up_i = vec![i];
    let mut cur = i;
    while let Some(h) = sentence.tokens[cur].head {
        up_i.push(h);
        cur = h;
    }
    let mut up_j = Vec::new();
    let mut cur = j;
    loop {
        if let Some(pos) = up_i.iter().position(|&n| n == cur) {
            up_i.truncate(pos + 1);
            break;
        }
        up_j.push(cur);
        match sentence.tokens[cur].head {
            Some(h) => cur = h,
            // disconnected trees cannot occur in a validated sentence
            None => break,
        }
    }
    up_i.extend(up_j.into_iter().rev());
    up_i
}

pub fn is_verb(pos: &str) -> bool {
    matches!(pos, "VERB" | "AUX")
}

pub fn stage_assignment(sample: &RelationSample) -> PriorityAssignment {
    let sentence = &sample.sentence;
    let n = sentence.len();
    let mut stages: Vec<Option<Stage>> = vec![None; n];
    let assign = |stages: &mut Vec<Option<Stage>>, i: usize, st: Stage| {
        if stages[i].is_none() {
            stages[i] = Some(st);
        }
    };

    for i in sample.arg1.tokens().chain(sample.arg2.tokens()) {
        assign(&mut stages, i, Stage::OA);
    }
    for i in argument_subtree_tokens(sentence, &sample.arg1, &sample.arg2) {
        assign(&mut stages, i, Stage::AS);
    }
    let h1 = span_head(sentence, &sample.arg1);
    let h2 = span_head(sentence, &sample.arg2);
    for i in dependency_path(sentence, h1, h2) {
        if is_verb(&sentence.tokens[i].pos) {
            assign(&mut stages, i, Stage::VOP);
        }
    }
    for i in sample.arg1.end..sample.arg2.start {
        assign(&mut stages, i, Stage::BA);
    }
    if let Some(ext) = sample.extent_span {
        for i in ext.start..ext.end.min(n) {
            assign(&mut stages, i, Stage::E);
        }
    }
    let stages: Vec<Stage> = stages.into_iter().map(|s| s.unwrap_or(Stage::A)).collect();
    let order = order_from_stages(&stages);
    PriorityAssignment { stages, order }
}

fn order_from_stages(stages: &[Stage]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..stages.len()).filter(|&i| stages[i] != Stage::OA).collect();
    order.sort_by_key(|&i| (stages[i], i));
    order
}

/// Non-argument tokens in reveal order.
pub fn expansion_order(pa: &PriorityAssignment) -> Vec<usize> {
    order_from_stages(&pa.stages)
}
