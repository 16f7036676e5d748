//! Rule-based agreement tracker driven by gold dialogue acts.
//!
//! Per turn, acts are processed in order:
//!
//! * **Offer** records each pair as the speaker's pending offer on that slot,
//!   replacing the speaker's earlier offer there. Offering a different value
//!   on an agreed slot reopens it (the agreement is dropped) unless
//!   [`TrackerConfig::freeze_agreed`] is set.
//! * **Accept** with a payload agrees each pair that matches the other
//!   speaker's pending offer, or failing that, the other speaker's most
//!   recent offer on the slot. Anything else is logged and ignored.
//! * **Accept** without a payload agrees every pending offer of the other speaker.
//! * **Reject** clears the listed slots (or, without a payload, all slots)
//!   from the other speaker's pending offers.
//! * **Other** does nothing.
//!
//! An agreement clears the slot from both speakers' pending offers. A new
//! offer never rejects the other speaker's pending offer on the same slot.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::dialogue::{AgreementState, AnnotatedDialogue, DialogueAct, Offer, Speaker};
use crate::ontology::{SlotName, SlotValue};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrackerConfig {
    /// Ignore offers on slots that are already agreed instead of reopening them.
    pub freeze_agreed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OfferedValue {
    pub value: SlotValue,
    pub turn: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PendingOffers {
    employer: BTreeMap<SlotName, OfferedValue>,
    candidate: BTreeMap<SlotName, OfferedValue>,
}

impl PendingOffers {
    pub fn of(&self, speaker: Speaker) -> &BTreeMap<SlotName, OfferedValue> {
        match speaker {
            Speaker::Employer => &self.employer,
            Speaker::Candidate => &self.candidate,
        }
    }

    fn of_mut(&mut self, speaker: Speaker) -> &mut BTreeMap<SlotName, OfferedValue> {
        match speaker {
            Speaker::Employer => &mut self.employer,
            Speaker::Candidate => &mut self.candidate,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.employer.is_empty() && self.candidate.is_empty()
    }
}

/// Where an agreed value came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub value: SlotValue,
    pub offered_by: Speaker,
    pub offered_at: usize,
    pub accepted_at: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    /// An accept that matched no offer of the other speaker.
    UnmatchedAccept {
        turn: usize,
        speaker: Speaker,
        slot: Option<SlotName>,
        value: Option<SlotValue>,
    },
    /// A reject with nothing pending to reject.
    UnmatchedReject {
        turn: usize,
        speaker: Speaker,
        slot: Option<SlotName>,
    },
    /// An offer on an agreed slot while agreements are frozen.
    FrozenSlot {
        turn: usize,
        speaker: Speaker,
        slot: SlotName,
    },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::UnmatchedAccept {
                turn,
                speaker,
                slot: Some(s),
                value,
            } => write!(
                f,
                "turn {turn}: {speaker} accepted {s} = {} with no matching offer",
                value.as_ref().map_or("?", SlotValue::as_str)
            ),
            Diagnostic::UnmatchedAccept { turn, speaker, .. } => {
                write!(f, "turn {turn}: {speaker} accepted with nothing pending")
            }
            Diagnostic::UnmatchedReject {
                turn,
                speaker,
                slot: Some(s),
            } => {
                write!(
                    f,
                    "turn {turn}: {speaker} rejected {s} with no pending offer"
                )
            }
            Diagnostic::UnmatchedReject { turn, speaker, .. } => {
                write!(f, "turn {turn}: {speaker} rejected with nothing pending")
            }
            Diagnostic::FrozenSlot {
                turn,
                speaker,
                slot,
            } => {
                write!(f, "turn {turn}: {speaker} offered on frozen slot {slot}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrackerState {
    pub agreements: AgreementState,
    pub pending: PendingOffers,
    /// Most recent value each speaker offered per slot, pending or not.
    pub last_offers: PendingOffers,
    pub provenance: BTreeMap<SlotName, Provenance>,
    pub turn_index: usize,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TrackerError {
    #[error("dialogue \"{dialogue}\": turn {turn} has no act annotations")]
    MissingActs { dialogue: String, turn: usize },
}

impl TrackerState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Processes one turn's acts and returns the successor state.
    pub fn step(
        &self,
        speaker: Speaker,
        acts: &[DialogueAct],
        config: TrackerConfig,
    ) -> TrackerState {
        let mut next = self.clone();
        for act in acts {
            match act {
                DialogueAct::Offer(offer) => next.offer(speaker, offer, config),
                DialogueAct::Accept(Some(payload)) => next.accept_pairs(speaker, payload),
                DialogueAct::Accept(None) => next.accept_all(speaker),
                DialogueAct::Reject(Some(payload)) => next.reject_pairs(speaker, payload),
                DialogueAct::Reject(None) => next.reject_all(speaker),
                DialogueAct::Other => {}
            }
        }
        next.turn_index += 1;
        next
    }

    fn offer(&mut self, speaker: Speaker, offer: &Offer, config: TrackerConfig) {
        let turn = self.turn_index;
        for (slot, value) in offer.pairs() {
            if let Some(agreed) = self.agreements.get(slot) {
                if config.freeze_agreed {
                    self.diagnostics.push(Diagnostic::FrozenSlot {
                        turn,
                        speaker,
                        slot: slot.clone(),
                    });
                    continue;
                }
                // restating the agreed value is not a revision
                if agreed == value {
                    continue;
                }
                self.agreements.remove(slot);
                self.provenance.remove(slot);
            }
            let offered = OfferedValue {
                value: value.clone(),
                turn,
            };
            self.pending
                .of_mut(speaker)
                .insert(slot.clone(), offered.clone());
            self.last_offers
                .of_mut(speaker)
                .insert(slot.clone(), offered);
        }
    }

    fn agree(&mut self, slot: &SlotName, offered_by: Speaker, offered: OfferedValue) {
        self.pending.employer.remove(slot);
        self.pending.candidate.remove(slot);
        self.agreements.insert(slot.clone(), offered.value.clone());
        self.provenance.insert(
            slot.clone(),
            Provenance {
                value: offered.value,
                offered_by,
                offered_at: offered.turn,
                accepted_at: self.turn_index,
            },
        );
    }

    fn accept_pairs(&mut self, speaker: Speaker, payload: &Offer) {
        let other = speaker.other();
        for (slot, value) in payload.pairs() {
            let matched = self
                .pending
                .of(other)
                .get(slot)
                .filter(|o| &o.value == value)
                .or_else(|| {
                    self.last_offers
                        .of(other)
                        .get(slot)
                        .filter(|o| &o.value == value)
                })
                .cloned();
            match matched {
                Some(offered) => self.agree(slot, other, offered),
                None => self.diagnostics.push(Diagnostic::UnmatchedAccept {
                    turn: self.turn_index,
                    speaker,
                    slot: Some(slot.clone()),
                    value: Some(value.clone()),
                }),
            }
        }
    }

    fn accept_all(&mut self, speaker: Speaker) {
        let other = speaker.other();
        let pending: Vec<_> = self
            .pending
            .of(other)
            .iter()
            .map(|(s, o)| (s.clone(), o.clone()))
            .collect();
        if pending.is_empty() {
            self.diagnostics.push(Diagnostic::UnmatchedAccept {
                turn: self.turn_index,
                speaker,
                slot: None,
                value: None,
            });
        }
        for (slot, offered) in pending {
            self.agree(&slot, other, offered);
        }
    }

    fn reject_pairs(&mut self, speaker: Speaker, payload: &Offer) {
        let turn = self.turn_index;
        for slot in payload.slots() {
            if self.pending.of_mut(speaker.other()).remove(slot).is_none() {
                self.diagnostics.push(Diagnostic::UnmatchedReject {
                    turn,
                    speaker,
                    slot: Some(slot.clone()),
                });
            }
        }
    }

    fn reject_all(&mut self, speaker: Speaker) {
        let pending = self.pending.of_mut(speaker.other());
        if pending.is_empty() {
            self.diagnostics.push(Diagnostic::UnmatchedReject {
                turn: self.turn_index,
                speaker,
                slot: None,
            });
        }
        pending.clear();
    }
}

/// Tracker state after every merged turn of `dialogue`, starting from empty.
pub fn trace(
    dialogue: &AnnotatedDialogue,
    config: TrackerConfig,
) -> Result<Vec<TrackerState>, TrackerError> {
    let mut state = TrackerState::new();
    let mut out = Vec::with_capacity(dialogue.len());
    for (turn, t) in dialogue.turns().iter().enumerate() {
        let acts = t.acts.as_deref().ok_or_else(|| TrackerError::MissingActs {
            dialogue: dialogue.id().to_string(),
            turn,
        })?;
        state = state.step(t.speaker(), acts, config);
        out.push(state.clone());
    }
    Ok(out)
}

/// Predicted agreement state for every merged turn of `dialogue`.
pub fn run(
    dialogue: &AnnotatedDialogue,
    config: TrackerConfig,
) -> Result<Vec<AgreementState>, TrackerError> {
    Ok(trace(dialogue, config)?
        .into_iter()
        .map(|s| s.agreements)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use Speaker::{Candidate as C, Employer as E};

    fn offer(pairs: &[(&str, &str)]) -> Offer {
        Offer::new(
            pairs
                .iter()
                .map(|(s, v)| (SlotName::new(s).unwrap(), SlotValue::new(v).unwrap()))
                .collect(),
        )
        .unwrap()
    }
    fn slot(s: &str) -> SlotName {
        SlotName::new(s).unwrap()
    }

    const CFG: TrackerConfig = TrackerConfig {
        freeze_agreed: false,
    };

    #[test]
    fn accept_matching_pending_offer() {
        let s = TrackerState::new()
            .step(
                E,
                &[DialogueAct::Offer(offer(&[("salary", "90,000")]))],
                CFG,
            )
            .step(
                C,
                &[DialogueAct::Accept(Some(offer(&[("salary", "90,000")])))],
                CFG,
            );
        assert_eq!(
            s.agreements.get(&slot("salary")).unwrap().as_str(),
            "90,000"
        );
        assert!(s.pending.is_empty());
        let p = &s.provenance[&slot("salary")];
        assert_eq!((p.offered_by, p.offered_at, p.accepted_at), (E, 0, 1));
    }

    #[test]
    fn other_only_advances_turn() {
        let s0 = TrackerState::new().step(
            E,
            &[DialogueAct::Offer(offer(&[("salary", "60k usd")]))],
            CFG,
        );
        let s1 = s0.step(C, &[DialogueAct::Other], CFG);
        assert_eq!(s1.turn_index, s0.turn_index + 1);
        assert_eq!(s1.agreements, s0.agreements);
        assert_eq!(s1.pending, s0.pending);
    }

    #[test]
    fn partial_acceptance() {
        let s = TrackerState::new()
            .step(
                C,
                &[DialogueAct::Offer(offer(&[
                    ("working hours", "8 hours"),
                    ("pension fund", "20%"),
                ]))],
                CFG,
            )
            .step(
                E,
                &[
                    DialogueAct::Accept(Some(offer(&[("working hours", "8 hours")]))),
                    DialogueAct::Reject(Some(offer(&[("pension fund", "20%")]))),
                ],
                CFG,
            );
        assert_eq!(s.agreements.len(), 1);
        assert_eq!(
            s.agreements.get(&slot("working hours")).unwrap().as_str(),
            "8 hours"
        );
        assert!(s.pending.of(C).is_empty());
        assert!(s.diagnostics.is_empty());
    }

    #[test]
    fn payloadless_accept_takes_all_pending() {
        let s = TrackerState::new()
            .step(
                E,
                &[DialogueAct::Offer(offer(&[
                    ("salary", "60k usd"),
                    ("leased car", "with leased car"),
                ]))],
                CFG,
            )
            .step(C, &[DialogueAct::Accept(None)], CFG);
        assert_eq!(s.agreements.len(), 2);
    }

    #[test]
    fn payloadless_reject_clears_other_side_only() {
        let s = TrackerState::new()
            .step(
                E,
                &[DialogueAct::Offer(offer(&[("salary", "60k usd")]))],
                CFG,
            )
            .step(
                C,
                &[
                    DialogueAct::Offer(offer(&[("salary", "120k usd")])),
                    DialogueAct::Reject(None),
                ],
                CFG,
            );
        assert!(s.pending.of(E).is_empty());
        assert_eq!(s.pending.of(C).len(), 1);
        // counter-offer survives until the employer acts on it
        let s = s.step(E, &[DialogueAct::Accept(None)], CFG);
        assert_eq!(
            s.agreements.get(&slot("salary")).unwrap().as_str(),
            "120k usd"
        );
    }

    #[test]
    fn accept_of_previously_rejected_last_offer() {
        let s = TrackerState::new()
            .step(
                E,
                &[DialogueAct::Offer(offer(&[("salary", "90k usd")]))],
                CFG,
            )
            .step(C, &[DialogueAct::Reject(None)], CFG)
            .step(E, &[DialogueAct::Other], CFG)
            .step(
                C,
                &[DialogueAct::Accept(Some(offer(&[("salary", "90k usd")])))],
                CFG,
            );
        assert_eq!(
            s.agreements.get(&slot("salary")).unwrap().as_str(),
            "90k usd"
        );
        assert_eq!(s.provenance[&slot("salary")].offered_at, 0);
    }

    #[test]
    fn unmatched_accept_is_logged_and_ignored() {
        let s = TrackerState::new()
            .step(
                E,
                &[DialogueAct::Offer(offer(&[("salary", "60k usd")]))],
                CFG,
            )
            .step(
                C,
                &[DialogueAct::Accept(Some(offer(&[("salary", "120k usd")])))],
                CFG,
            );
        assert!(s.agreements.is_empty());
        assert!(matches!(
            s.diagnostics[..],
            [Diagnostic::UnmatchedAccept { turn: 1, .. }]
        ));
    }

    #[test]
    fn own_offer_cannot_be_accepted() {
        let s = TrackerState::new().step(
            E,
            &[
                DialogueAct::Offer(offer(&[("salary", "60k usd")])),
                DialogueAct::Accept(None),
            ],
            CFG,
        );
        assert!(s.agreements.is_empty());
        assert_eq!(s.diagnostics.len(), 1);
    }

    #[test]
    fn reopening_and_freezing() {
        let agreed = TrackerState::new()
            .step(
                E,
                &[DialogueAct::Offer(offer(&[("salary", "60k usd")]))],
                CFG,
            )
            .step(C, &[DialogueAct::Accept(None)], CFG);
        let reopened = agreed.step(
            C,
            &[DialogueAct::Offer(offer(&[("salary", "90k usd")]))],
            CFG,
        );
        assert!(reopened.agreements.is_empty());
        assert!(reopened.provenance.is_empty());

        let restated = agreed.step(
            E,
            &[DialogueAct::Offer(offer(&[("salary", "60k usd")]))],
            CFG,
        );
        assert_eq!(restated.agreements, agreed.agreements);

        let frozen_cfg = TrackerConfig {
            freeze_agreed: true,
        };
        let frozen = agreed.step(
            C,
            &[DialogueAct::Offer(offer(&[("salary", "90k usd")]))],
            frozen_cfg,
        );
        assert_eq!(frozen.agreements, agreed.agreements);
        assert!(matches!(
            frozen.diagnostics.last(),
            Some(Diagnostic::FrozenSlot { .. })
        ));
    }

    #[test]
    fn unanswered_offer_stays_pending() {
        let s = TrackerState::new().step(
            E,
            &[DialogueAct::Offer(offer(&[("salary", "60k usd")]))],
            CFG,
        );
        assert!(s.agreements.is_empty());
        assert!(!s.pending.is_empty());
    }
}
