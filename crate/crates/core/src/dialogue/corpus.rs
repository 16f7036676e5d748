//! Corpus JSON ingestion and serialization.
//!
//! ```json
//! {"dialogues": [{"id": "d1", "turns": [
//!   {"speaker": "employer", "text": "...",
//!    "acts": [{"kind": "offer", "pairs": [["salary", "90k usd"]]}],
//!    "state": {"salary": "90k usd"}}]}]}
//! ```
//!
//! `acts` and `state` are optional per turn. Turns are raw utterances;
//! same-speaker runs are merged on load.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    ActKind, AgreementState, AliasTable, AnnotatedDialogue, DialogueAct, MergeError, RawTurn,
    Speaker, Utterance,
};
use crate::ontology::{Ontology, SlotName, SlotValue};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("malformed corpus document: {0}")]
    Schema(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("dialogue \"{0}\": empty dialogue")]
    EmptyDialogue(String),
    #[error("dialogue \"{0}\" appears more than once")]
    DuplicateDialogue(String),
    #[error("dialogue \"{dialogue}\", turn {turn}: empty utterance text")]
    EmptyText { dialogue: String, turn: usize },
    #[error("dialogue \"{dialogue}\", turn {turn}: invalid act: {reason}")]
    InvalidAct {
        dialogue: String,
        turn: usize,
        reason: String,
    },
    #[error("dialogue \"{dialogue}\", turn {turn}: slot \"{slot}\" given twice in state")]
    ConflictingState {
        dialogue: String,
        turn: usize,
        slot: String,
    },
    #[error(
        "dialogue \"{dialogue}\", turn {turn}: ontology violation: {slot} = {value} ({reason})"
    )]
    OntologyViolation {
        dialogue: String,
        turn: usize,
        slot: String,
        value: String,
        reason: &'static str,
    },
    #[error("unknown slot \"{0}\"")]
    UnknownSlot(String),
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions<'a> {
    /// Reject any slot-value pair that is not legal after alias resolution.
    pub strict: bool,
    /// Surface-form aliases; `None` keeps annotations as written (canonicalized).
    pub aliases: Option<&'a AliasTable>,
}

/// An out-of-ontology annotation kept during a lenient load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoadWarning {
    pub dialogue: String,
    pub turn: usize,
    pub slot: String,
    pub value: String,
    pub reason: &'static str,
}

impl fmt::Display for LoadWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "warning: dialogue {} turn {}: {} = {} ({})",
            self.dialogue, self.turn, self.slot, self.value, self.reason
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub warnings: Vec<LoadWarning>,
}

impl LoadReport {
    pub fn is_clean(&self) -> bool {
        self.warnings.is_empty()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CorpusDoc {
    dialogues: Vec<DialogueDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct DialogueDoc {
    id: String,
    turns: Vec<TurnDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TurnDoc {
    speaker: Speaker,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    acts: Option<Vec<ActDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ActDoc {
    kind: ActKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pairs: Vec<(String, String)>,
}

/// A loaded, validated set of dialogues in file order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub dialogues: Vec<AnnotatedDialogue>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&AnnotatedDialogue> {
        self.dialogues.iter().find(|d| d.id() == id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &AnnotatedDialogue> {
        self.dialogues.iter()
    }

    /// Dialogues whose ids appear in `ids`, in `ids` order.
    pub fn select(&self, ids: &[String]) -> Corpus {
        Corpus {
            dialogues: ids.iter().filter_map(|id| self.get(id).cloned()).collect(),
        }
    }

    /// Serializes the raw (unmerged) turns back into the corpus schema.
    pub fn to_json(&self) -> String {
        let doc = CorpusDoc {
            dialogues: self
                .dialogues
                .iter()
                .map(|d| DialogueDoc {
                    id: d.id().to_string(),
                    turns: d.raw_turns().iter().map(turn_doc).collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("corpus serializes")
    }
}

fn turn_doc(raw: &RawTurn) -> TurnDoc {
    let pairs = |act: &DialogueAct| {
        act.payload()
            .map(|o| {
                o.pairs()
                    .iter()
                    .map(|(s, v)| (s.to_string(), v.to_string()))
                    .collect()
            })
            .unwrap_or_default()
    };
    TurnDoc {
        speaker: raw.utterance.speaker,
        text: raw.utterance.text.clone(),
        acts: raw.acts.as_ref().map(|acts| {
            acts.iter()
                .map(|a| ActDoc {
                    kind: a.kind(),
                    pairs: pairs(a),
                })
                .collect()
        }),
        state: raw.state.as_ref().map(|st| {
            st.iter()
                .map(|(s, v)| (s.to_string(), v.to_string()))
                .collect()
        }),
    }
}

struct Resolver<'a> {
    ontology: &'a Ontology,
    options: LoadOptions<'a>,
    report: LoadReport,
}

impl Resolver<'_> {
    fn pair(
        &mut self,
        dialogue: &str,
        turn: usize,
        slot: &str,
        value: &str,
    ) -> Result<(SlotName, SlotValue), CorpusError> {
        let schema = |what: &str| {
            CorpusError::Schema(format!(
                "dialogue \"{dialogue}\", turn {turn}: empty {what}"
            ))
        };
        let resolved = match self.options.aliases {
            Some(aliases) => aliases.resolve_slot(self.ontology, slot),
            None => SlotName::new(slot)
                .ok()
                .filter(|s| self.ontology.contains_slot(s)),
        };
        let (slot_name, known) = match resolved {
            Some(s) => (s, true),
            None => (SlotName::new(slot).map_err(|_| schema("slot"))?, false),
        };
        let value = match (self.options.aliases, known) {
            (Some(aliases), true) => aliases.resolve_value(self.ontology, &slot_name, value)?,
            _ => SlotValue::new(value).map_err(|_| schema("value"))?,
        };
        let reason = if !known {
            Some("slot not in ontology")
        } else if !self.ontology.is_legal(&slot_name, &value) {
            Some("value not in ontology")
        } else {
            None
        };
        if let Some(reason) = reason {
            if self.options.strict {
                return Err(CorpusError::OntologyViolation {
                    dialogue: dialogue.to_string(),
                    turn,
                    slot: slot_name.to_string(),
                    value: value.to_string(),
                    reason,
                });
            }
            self.report.warnings.push(LoadWarning {
                dialogue: dialogue.to_string(),
                turn,
                slot: slot_name.to_string(),
                value: value.to_string(),
                reason,
            });
        }
        Ok((slot_name, value))
    }

    fn dialogue(&mut self, doc: DialogueDoc) -> Result<AnnotatedDialogue, CorpusError> {
        let id = doc.id;
        if doc.turns.is_empty() {
            return Err(CorpusError::EmptyDialogue(id));
        }
        let mut raw = Vec::with_capacity(doc.turns.len());
        for (turn, t) in doc.turns.into_iter().enumerate() {
            if t.text.trim().is_empty() {
                return Err(CorpusError::EmptyText { dialogue: id, turn });
            }
            let acts = match t.acts {
                None => None,
                Some(acts) => {
                    let mut out = Vec::with_capacity(acts.len());
                    for act in acts {
                        let pairs = act
                            .pairs
                            .iter()
                            .map(|(s, v)| self.pair(&id, turn, s, v))
                            .collect::<Result<Vec<_>, _>>()?;
                        let act = DialogueAct::from_parts(act.kind, pairs).map_err(|e| {
                            CorpusError::InvalidAct {
                                dialogue: id.clone(),
                                turn,
                                reason: e.to_string(),
                            }
                        })?;
                        out.push(act);
                    }
                    Some(out)
                }
            };
            let state = match t.state {
                None => None,
                Some(entries) => {
                    let mut state = AgreementState::new();
                    for (s, v) in &entries {
                        let (slot, value) = self.pair(&id, turn, s, v)?;
                        if state.contains(&slot) {
                            return Err(CorpusError::ConflictingState {
                                dialogue: id,
                                turn,
                                slot: slot.to_string(),
                            });
                        }
                        state.insert(slot, value);
                    }
                    Some(state)
                }
            };
            raw.push(RawTurn {
                utterance: Utterance::new(t.speaker, t.text, turn),
                acts,
                state,
            });
        }
        AnnotatedDialogue::from_raw(id.clone(), raw).map_err(|e| match e {
            MergeError::Empty => CorpusError::EmptyDialogue(id),
            MergeError::EmptyText(turn) => CorpusError::EmptyText { dialogue: id, turn },
        })
    }
}

/// Parses and validates a corpus document.
///
/// In strict mode the first out-of-ontology annotation aborts the load; in
/// lenient mode it is kept and listed in the returned [`LoadReport`].
pub fn load_corpus(
    text: &str,
    ontology: &Ontology,
    options: LoadOptions<'_>,
) -> Result<(Corpus, LoadReport), CorpusError> {
    let doc: CorpusDoc =
        serde_json::from_str(text).map_err(|e| CorpusError::Schema(e.to_string()))?;
    let mut resolver = Resolver {
        ontology,
        options,
        report: LoadReport::default(),
    };
    let mut seen = HashSet::new();
    let mut dialogues = Vec::with_capacity(doc.dialogues.len());
    for d in doc.dialogues {
        if !seen.insert(d.id.clone()) {
            return Err(CorpusError::DuplicateDialogue(d.id));
        }
        dialogues.push(resolver.dialogue(d)?);
    }
    Ok((Corpus { dialogues }, resolver.report))
}
