//! Seq2seq training examples for the generation (Gen) and classification
//! (Clf) tasks, plus ontology-driven negative sampling.
//!
//! Gen input:  `track agreements: [domain] <previous state> <context>`
//! Gen target: the rendered span from the previous to the current gold state.
//!
//! Clf input:  `verify agreements: [domain] <previous state> <context> <candidate span>`
//! Clf target: `yes` if the candidate is the gold span, `no` otherwise.
//!
//! The previous state uses the full-state form from [`crate::lev::render_state`];
//! each context utterance is prefixed with `employer:` or `candidate:`.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::{AgreementState, AnnotatedDialogue, Corpus};
use crate::lev::{self, Domain, EditOp, LevSpan};
use crate::ontology::{Ontology, SlotName, SlotValue};

pub const GEN_PREFIX: &str = "track agreements:";
pub const CLF_PREFIX: &str = "verify agreements:";
pub const YES: &str = "yes";
pub const NO: &str = "no";
pub const DEFAULT_WINDOW: usize = 3;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("dialogue \"{dialogue}\": turn {turn} out of range ({len} turns)")]
    TurnOutOfRange {
        dialogue: String,
        turn: usize,
        len: usize,
    },
    #[error("dialogue \"{dialogue}\": turn {turn} has no gold state")]
    MissingGold { dialogue: String, turn: usize },
    #[error("context window must be at least 1")]
    ZeroWindow,
    #[error("writing dataset: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Gen,
    Clf,
}

/// One line of the training JSONL.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptExample {
    pub task: Task,
    pub input: String,
    pub target: String,
    pub dialogue_id: String,
    pub turn: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clf_label: Option<bool>,
}

impl PromptExample {
    /// For Clf examples, whether the appended candidate span is the gold one.
    pub fn candidate_is_gold(&self) -> Option<bool> {
        self.clf_label
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptConfig {
    pub window: usize,
    pub domain: Domain,
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            domain: Domain::gpt_negochat(),
        }
    }
}

/// Which tasks to emit per turn. Gen comes first when both are set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskSet {
    pub gen: bool,
    pub clf: bool,
}

impl TaskSet {
    pub const GEN: TaskSet = TaskSet {
        gen: true,
        clf: false,
    };
    pub const GEN_CLF: TaskSet = TaskSet {
        gen: true,
        clf: true,
    };
}

/// Input regions recovered from a serialized prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputRegions<'a> {
    pub task: Task,
    pub state: &'a str,
    pub context: &'a str,
    pub candidate: Option<&'a str>,
}

/// Splits a prompt input back into its regions.
pub fn split_input<'a>(input: &'a str, domain: &Domain) -> Option<InputRegions<'a>> {
    let (task, rest) = if let Some(r) = input.strip_prefix(GEN_PREFIX) {
        (Task::Gen, r)
    } else {
        (Task::Clf, input.strip_prefix(CLF_PREFIX)?)
    };
    let prefix = domain.prefix();
    let rest = rest
        .strip_prefix(' ')?
        .strip_prefix(prefix.as_str())?
        .strip_prefix(' ')?;
    let (rest, candidate) = match task {
        Task::Gen => (rest, None),
        Task::Clf => {
            let at = rest.rfind(&format!(" {prefix}"))?;
            (&rest[..at], Some(&rest[at + 1..]))
        }
    };
    let at = [" employer: ", " candidate: "]
        .iter()
        .filter_map(|tag| rest.find(tag))
        .min()?;
    Some(InputRegions {
        task,
        state: &rest[..at],
        context: &rest[at + 1..],
        candidate,
    })
}

/// The last `min(window, turn + 1)` merged utterances ending at `turn`, tagged with speakers.
pub fn context_window(dialogue: &AnnotatedDialogue, turn: usize, window: usize) -> String {
    let start = (turn + 1).saturating_sub(window);
    dialogue.turns()[start..=turn]
        .iter()
        .map(|t| format!("{}: {}", t.speaker(), t.utterance.text))
        .collect::<Vec<_>>()
        .join(" ")
}

struct TurnContext {
    gold_span: LevSpan,
    base: String,
}

fn turn_context(
    dialogue: &AnnotatedDialogue,
    turn: usize,
    config: &PromptConfig,
    ontology: &Ontology,
) -> Result<TurnContext, PromptError> {
    if config.window == 0 {
        return Err(PromptError::ZeroWindow);
    }
    if turn >= dialogue.len() {
        return Err(PromptError::TurnOutOfRange {
            dialogue: dialogue.id().to_string(),
            turn,
            len: dialogue.len(),
        });
    }
    let gold = |t: usize| {
        dialogue.turns()[t]
            .gold
            .clone()
            .ok_or_else(|| PromptError::MissingGold {
                dialogue: dialogue.id().to_string(),
                turn: t,
            })
    };
    let prev = if turn == 0 {
        AgreementState::new()
    } else {
        gold(turn - 1)?
    };
    let cur = gold(turn)?;
    let gold_span = lev::diff(&prev, &cur, config.domain.clone(), ontology);
    let base = format!(
        "{} {} {}",
        config.domain.prefix(),
        lev::render_state(&prev, ontology),
        context_window(dialogue, turn, config.window)
    );
    Ok(TurnContext { gold_span, base })
}

pub fn build_gen_example(
    dialogue: &AnnotatedDialogue,
    turn: usize,
    config: &PromptConfig,
    ontology: &Ontology,
) -> Result<PromptExample, PromptError> {
    let ctx = turn_context(dialogue, turn, config, ontology)?;
    Ok(gen_from(dialogue, turn, &ctx))
}

fn gen_from(dialogue: &AnnotatedDialogue, turn: usize, ctx: &TurnContext) -> PromptExample {
    PromptExample {
        task: Task::Gen,
        input: format!("{GEN_PREFIX} {}", ctx.base),
        target: ctx.gold_span.render(),
        dialogue_id: dialogue.id().to_string(),
        turn,
        clf_label: None,
    }
}

pub fn build_clf_example<R: Rng + ?Sized>(
    dialogue: &AnnotatedDialogue,
    turn: usize,
    config: &PromptConfig,
    ontology: &Ontology,
    rng: &mut R,
) -> Result<PromptExample, PromptError> {
    let ctx = turn_context(dialogue, turn, config, ontology)?;
    Ok(clf_from(dialogue, turn, &ctx, ontology, rng))
}

fn clf_from<R: Rng + ?Sized>(
    dialogue: &AnnotatedDialogue,
    turn: usize,
    ctx: &TurnContext,
    ontology: &Ontology,
    rng: &mut R,
) -> PromptExample {
    let positive = rng.gen_bool(0.5);
    let candidate = if positive {
        ctx.gold_span.clone()
    } else {
        sample_negative(ontology, &ctx.gold_span, rng)
    };
    PromptExample {
        task: Task::Clf,
        input: format!("{CLF_PREFIX} {} {}", ctx.base, candidate.render()),
        target: if positive { YES } else { NO }.to_string(),
        dialogue_id: dialogue.id().to_string(),
        turn,
        clf_label: Some(positive),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    ValueSwap,
    KindFlip,
    SlotSwap,
    SpuriousOp,
    DropOp,
}

fn pick<'a, T, R: Rng + ?Sized>(items: &'a [T], rng: &mut R) -> &'a T {
    items.choose(rng).expect("non-empty choice")
}

/// A span that differs from `gold` by one ontology-drawn perturbation,
/// chosen uniformly among those applicable. An empty gold span only admits
/// a spurious insert.
pub fn sample_negative<R: Rng + ?Sized>(
    ontology: &Ontology,
    gold: &LevSpan,
    rng: &mut R,
) -> LevSpan {
    let ops = gold.ops();
    let free_slots: Vec<&SlotName> = ontology
        .slots()
        .filter(|s| !ops.iter().any(|op| op.slot() == *s))
        .collect();
    let other_values = |op: &EditOp| -> Vec<SlotValue> {
        match (op.value(), ontology.values(op.slot())) {
            (Some(v), Some(vs)) => vs.iter().filter(|x| *x != v).cloned().collect(),
            _ => Vec::new(),
        }
    };
    let swappable: Vec<usize> = (0..ops.len())
        .filter(|&i| !other_values(&ops[i]).is_empty())
        .collect();
    let flippable: Vec<usize> = (0..ops.len())
        .filter(|&i| ops[i].value().is_some() || ontology.contains_slot(ops[i].slot()))
        .collect();

    let mut applicable = Vec::with_capacity(5);
    if !swappable.is_empty() {
        applicable.push(Perturbation::ValueSwap);
    }
    if !flippable.is_empty() {
        applicable.push(Perturbation::KindFlip);
    }
    if !ops.is_empty() && !free_slots.is_empty() {
        applicable.push(Perturbation::SlotSwap);
    }
    if !free_slots.is_empty() {
        applicable.push(Perturbation::SpuriousOp);
    }
    if !ops.is_empty() {
        applicable.push(Perturbation::DropOp);
    }

    let random_value = |slot: &SlotName, rng: &mut R| -> SlotValue {
        pick(ontology.values(slot).expect("ontology slot"), rng).clone()
    };
    let mut new_ops = ops.to_vec();
    match *pick(&applicable, rng) {
        Perturbation::ValueSwap => {
            let i = *pick(&swappable, rng);
            let value = pick(&other_values(&ops[i]), rng).clone();
            let slot = ops[i].slot().clone();
            new_ops[i] = match ops[i] {
                EditOp::Insert { .. } => EditOp::Insert { slot, value },
                _ => EditOp::Substitute { slot, value },
            };
        }
        Perturbation::KindFlip => {
            let i = *pick(&flippable, rng);
            let slot = ops[i].slot().clone();
            new_ops[i] = match &ops[i] {
                EditOp::Insert { value, .. } => EditOp::Substitute {
                    slot,
                    value: value.clone(),
                },
                EditOp::Substitute { value, .. } => EditOp::Insert {
                    slot,
                    value: value.clone(),
                },
                EditOp::Delete { .. } => {
                    let value = random_value(&slot, rng);
                    EditOp::Insert { slot, value }
                }
            };
        }
        Perturbation::SlotSwap => {
            let i = rng.gen_range(0..ops.len());
            let slot = (*pick(&free_slots, rng)).clone();
            new_ops[i] = match ops[i] {
                EditOp::Delete { .. } => EditOp::Delete { slot },
                EditOp::Insert { .. } => {
                    let value = random_value(&slot, rng);
                    EditOp::Insert { slot, value }
                }
                EditOp::Substitute { .. } => {
                    let value = random_value(&slot, rng);
                    EditOp::Substitute { slot, value }
                }
            };
        }
        Perturbation::SpuriousOp => {
            let slot = (*pick(&free_slots, rng)).clone();
            let value = random_value(&slot, rng);
            new_ops.push(EditOp::Insert { slot, value });
        }
        Perturbation::DropOp => {
            new_ops.remove(rng.gen_range(0..ops.len()));
        }
    }
    let negative = LevSpan::new(gold.domain().clone(), new_ops, ontology)
        .expect("perturbations keep slots unique");
    debug_assert_ne!(negative.render(), gold.render());
    negative
}

/// Per-dialogue RNG derived from the run seed and the dialogue id, so
/// output does not depend on dialogue order or partitioning.
pub fn dialogue_rng(seed: u64, dialogue_id: &str) -> ChaCha8Rng {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in dialogue_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

/// Examples for every turn of `dialogue`, Gen before Clf within a turn.
pub fn dialogue_examples(
    dialogue: &AnnotatedDialogue,
    tasks: TaskSet,
    config: &PromptConfig,
    ontology: &Ontology,
    seed: u64,
) -> Result<Vec<PromptExample>, PromptError> {
    let mut rng = dialogue_rng(seed, dialogue.id());
    let mut out = Vec::with_capacity(dialogue.len() * 2);
    for turn in 0..dialogue.len() {
        let ctx = turn_context(dialogue, turn, config, ontology)?;
        if tasks.gen {
            out.push(gen_from(dialogue, turn, &ctx));
        }
        if tasks.clf {
            out.push(clf_from(dialogue, turn, &ctx, ontology, &mut rng));
        }
    }
    Ok(out)
}

/// Writes the corpus as JSONL, dialogues sorted by id. Returns the line count.
pub fn emit_dataset<W: Write>(
    corpus: &Corpus,
    tasks: TaskSet,
    config: &PromptConfig,
    ontology: &Ontology,
    seed: u64,
    sink: &mut W,
) -> Result<usize, PromptError> {
    let mut dialogues: Vec<&AnnotatedDialogue> = corpus.iter().collect();
    dialogues.sort_by(|a, b| a.id().cmp(b.id()));
    let mut lines = 0;
    for d in dialogues {
        for ex in dialogue_examples(d, tasks, config, ontology, seed)? {
            serde_json::to_writer(&mut *sink, &ex).map_err(std::io::Error::from)?;
            sink.write_all(b"\n")?;
            lines += 1;
        }
    }
    sink.flush()?;
    Ok(lines)
}
