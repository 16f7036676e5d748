//! Annotated negotiation dialogues: utterances, merged turns, dialogue acts
//! and per-turn agreement states.

mod alias;
mod corpus;
mod stats;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{Ontology, SlotName, SlotValue};

pub use alias::AliasTable;
pub use corpus::{load_corpus, Corpus, CorpusError, LoadOptions, LoadReport, LoadWarning};
pub use stats::{dialogue_stats, StatsReport};

/// Separator used when consecutive utterances of one speaker are merged.
pub const MERGE_SEPARATOR: &str = " ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Employer,
    Candidate,
}

impl Speaker {
    pub fn other(self) -> Self {
        match self {
            Speaker::Employer => Speaker::Candidate,
            Speaker::Candidate => Speaker::Employer,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::Employer => "employer",
            Speaker::Candidate => "candidate",
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
    pub index: usize,
}

impl Utterance {
    pub fn new(speaker: Speaker, text: impl Into<String>, index: usize) -> Self {
        Self {
            speaker,
            text: text.into(),
            index,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MergeError {
    #[error("cannot merge an empty utterance list")]
    Empty,
    #[error("utterance {0} is empty after trimming")]
    EmptyText(usize),
}

/// Index ranges of maximal same-speaker runs.
pub(crate) fn speaker_runs(speakers: &[Speaker]) -> Vec<std::ops::Range<usize>> {
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=speakers.len() {
        if i == speakers.len() || speakers[i] != speakers[start] {
            runs.push(start..i);
            start = i;
        }
    }
    runs
}

/// Collapses runs of same-speaker utterances so that speakers strictly
/// alternate. Texts are joined with [`MERGE_SEPARATOR`] and the result is
/// re-indexed from zero.
pub fn merge_consecutive(utterances: &[Utterance]) -> Result<Vec<Utterance>, MergeError> {
    if utterances.is_empty() {
        return Err(MergeError::Empty);
    }
    if let Some(u) = utterances.iter().find(|u| u.text.trim().is_empty()) {
        return Err(MergeError::EmptyText(u.index));
    }
    let speakers: Vec<Speaker> = utterances.iter().map(|u| u.speaker).collect();
    Ok(speaker_runs(&speakers)
        .into_iter()
        .enumerate()
        .map(|(index, run)| {
            let text = utterances[run.clone()]
                .iter()
                .map(|u| u.text.trim())
                .collect::<Vec<_>>()
                .join(MERGE_SEPARATOR);
            Utterance::new(utterances[run.start].speaker, text, index)
        })
        .collect())
}

/// Slot → value agreements; a missing slot means no agreement yet.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgreementState(BTreeMap<SlotName, SlotValue>);

impl AgreementState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, slot: &SlotName) -> Option<&SlotValue> {
        self.0.get(slot)
    }

    pub fn insert(&mut self, slot: SlotName, value: SlotValue) -> Option<SlotValue> {
        self.0.insert(slot, value)
    }

    pub fn remove(&mut self, slot: &SlotName) -> Option<SlotValue> {
        self.0.remove(slot)
    }

    pub fn contains(&self, slot: &SlotName) -> bool {
        self.0.contains_key(slot)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SlotName, &SlotValue)> {
        self.0.iter()
    }

    /// Entries sorted by ontology slot order (unknown slots last).
    pub fn ordered<'a>(&'a self, ontology: &Ontology) -> Vec<(&'a SlotName, &'a SlotValue)> {
        let mut entries: Vec<_> = self.0.iter().collect();
        entries.sort_by(|a, b| ontology.order_key(a.0).cmp(&ontology.order_key(b.0)));
        entries
    }
}

impl FromIterator<(SlotName, SlotValue)> for AgreementState {
    fn from_iter<I: IntoIterator<Item = (SlotName, SlotValue)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a AgreementState {
    type Item = (&'a SlotName, &'a SlotValue);
    type IntoIter = std::collections::btree_map::Iter<'a, SlotName, SlotValue>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OfferError {
    #[error("an offer needs at least one slot-value pair")]
    Empty,
    #[error("slot \"{0}\" appears twice in one offer")]
    DuplicateSlot(SlotName),
    #[error("an Other act cannot carry slot-value pairs")]
    PayloadOnOther,
}

/// One or more slot-value pairs put forward together, at most one per slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Offer(Vec<(SlotName, SlotValue)>);

impl Offer {
    pub fn new(pairs: Vec<(SlotName, SlotValue)>) -> Result<Self, OfferError> {
        if pairs.is_empty() {
            return Err(OfferError::Empty);
        }
        for (i, (slot, _)) in pairs.iter().enumerate() {
            if pairs[..i].iter().any(|(s, _)| s == slot) {
                return Err(OfferError::DuplicateSlot(slot.clone()));
            }
        }
        Ok(Self(pairs))
    }

    pub fn pairs(&self) -> &[(SlotName, SlotValue)] {
        &self.0
    }

    pub fn slots(&self) -> impl Iterator<Item = &SlotName> {
        self.0.iter().map(|(s, _)| s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActKind {
    Offer,
    Accept,
    Reject,
    Other,
}

/// A dialogue act. Accept and Reject may carry a payload that narrows
/// them to specific slots (partial acceptance / rejection).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum DialogueAct {
    Offer(Offer),
    Accept(Option<Offer>),
    Reject(Option<Offer>),
    Other,
}

impl DialogueAct {
    pub fn kind(&self) -> ActKind {
        match self {
            DialogueAct::Offer(_) => ActKind::Offer,
            DialogueAct::Accept(_) => ActKind::Accept,
            DialogueAct::Reject(_) => ActKind::Reject,
            DialogueAct::Other => ActKind::Other,
        }
    }

    pub fn payload(&self) -> Option<&Offer> {
        match self {
            DialogueAct::Offer(o) => Some(o),
            DialogueAct::Accept(o) | DialogueAct::Reject(o) => o.as_ref(),
            DialogueAct::Other => None,
        }
    }

    /// Assembles an act from a kind and its (possibly empty) pair list.
    pub fn from_parts(
        kind: ActKind,
        pairs: Vec<(SlotName, SlotValue)>,
    ) -> Result<Self, OfferError> {
        let payload = if pairs.is_empty() {
            None
        } else {
            Some(Offer::new(pairs)?)
        };
        match (kind, payload) {
            (ActKind::Offer, Some(o)) => Ok(DialogueAct::Offer(o)),
            (ActKind::Offer, None) => Err(OfferError::Empty),
            (ActKind::Accept, p) => Ok(DialogueAct::Accept(p)),
            (ActKind::Reject, p) => Ok(DialogueAct::Reject(p)),
            (ActKind::Other, None) => Ok(DialogueAct::Other),
            (ActKind::Other, Some(_)) => Err(OfferError::PayloadOnOther),
        }
    }
}

/// A raw, unmerged utterance with whatever annotations it carried.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTurn {
    pub utterance: Utterance,
    pub acts: Option<Vec<DialogueAct>>,
    pub state: Option<AgreementState>,
}

/// A merged turn. Acts are the concatenation of its parts' acts (`None` if
/// any part is unannotated); the gold state is the last part's state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Turn {
    pub utterance: Utterance,
    pub acts: Option<Vec<DialogueAct>>,
    pub gold: Option<AgreementState>,
    /// Raw utterance indices this turn was merged from.
    pub raw: std::ops::Range<usize>,
}

impl Turn {
    pub fn speaker(&self) -> Speaker {
        self.utterance.speaker
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedDialogue {
    id: String,
    raw: Vec<RawTurn>,
    turns: Vec<Turn>,
}

impl AnnotatedDialogue {
    /// Builds a dialogue from raw utterances, merging same-speaker runs.
    pub fn from_raw(id: impl Into<String>, raw: Vec<RawTurn>) -> Result<Self, MergeError> {
        let utterances: Vec<Utterance> = raw.iter().map(|r| r.utterance.clone()).collect();
        let merged = merge_consecutive(&utterances)?;
        let speakers: Vec<Speaker> = utterances.iter().map(|u| u.speaker).collect();
        let turns = speaker_runs(&speakers)
            .into_iter()
            .zip(merged)
            .map(|(run, utterance)| {
                let parts = &raw[run.clone()];
                let acts = parts
                    .iter()
                    .map(|p| p.acts.clone())
                    .collect::<Option<Vec<_>>>()
                    .map(|v| v.concat());
                Turn {
                    utterance,
                    acts,
                    gold: parts.last().and_then(|p| p.state.clone()),
                    raw: run,
                }
            })
            .collect();
        Ok(Self {
            id: id.into(),
            raw,
            turns,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn raw_turns(&self) -> &[RawTurn] {
        &self.raw
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// Gold states of every merged turn, or the index of the first turn lacking one.
    pub fn gold_states(&self) -> Result<Vec<&AgreementState>, usize> {
        self.turns
            .iter()
            .enumerate()
            .map(|(i, t)| t.gold.as_ref().ok_or(i))
            .collect()
    }
}
