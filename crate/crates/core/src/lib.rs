//! Agreement tracking for two-party multi-issue negotiation dialogues.
//!
//! The crate covers the slot-value ontology, annotated dialogue loading, a
//! compact edit-span encoding of state changes, a rule-based tracker driven by
//! gold dialogue acts, seq2seq prompt emission, evaluation metrics and
//! cross-validation splits.

pub mod dialogue;
pub mod lev;
pub mod metrics;
pub mod ontology;
pub mod prompt;
pub mod splits;
pub mod synth;
pub mod tracker;

pub use dialogue::{
    load_corpus, AgreementState, AliasTable, AnnotatedDialogue, Corpus, CorpusError, DialogueAct,
    LoadOptions, Speaker,
};
pub use lev::{Domain, EditOp, LevError, LevSpan};
pub use metrics::{EvalReport, MetricsError, TurnKey};
pub use ontology::{Ontology, OntologyError, SlotName, SlotValue};
pub use prompt::{PromptConfig, PromptError, PromptExample, Task, TaskSet};
pub use splits::{Fraction, Role, SplitError, SplitManifest, SplitPlan};
pub use tracker::{TrackerConfig, TrackerError, TrackerState};
