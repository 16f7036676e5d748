//! Seeded generator of act-annotated negotiation dialogues.
//!
//! The generator keeps its own ledger of agreed and open offers and only emits
//! acts with an unambiguous effect on it, so the gold state attached to every
//! utterance is known by construction. Useful for tests and benchmarks when no
//! real corpus is at hand.

use std::collections::BTreeMap;

use rand::seq::{IteratorRandom, SliceRandom};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dialogue::{
    AgreementState, AnnotatedDialogue, Corpus, DialogueAct, Offer, RawTurn, Speaker, Utterance,
};
use crate::ontology::{Ontology, SlotName, SlotValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub dialogues: usize,
    pub min_turns: usize,
    pub max_turns: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            dialogues: 100,
            min_turns: 8,
            max_turns: 24,
            seed: 0,
        }
    }
}

#[derive(Default)]
struct Ledger {
    agreed: AgreementState,
    employer: BTreeMap<SlotName, SlotValue>,
    candidate: BTreeMap<SlotName, SlotValue>,
}

impl Ledger {
    fn open(&mut self, s: Speaker) -> &mut BTreeMap<SlotName, SlotValue> {
        match s {
            Speaker::Employer => &mut self.employer,
            Speaker::Candidate => &mut self.candidate,
        }
    }

    fn agree(&mut self, slot: &SlotName, value: &SlotValue) {
        self.employer.remove(slot);
        self.candidate.remove(slot);
        self.agreed.insert(slot.clone(), value.clone());
    }
}

fn phrase(pairs: &[(SlotName, SlotValue)]) -> String {
    pairs
        .iter()
        .map(|(s, v)| format!("{s} {v}"))
        .collect::<Vec<_>>()
        .join(" and ")
}

struct Gen<'a, R> {
    ontology: &'a Ontology,
    rng: R,
}

impl<R: Rng> Gen<'_, R> {
    fn offer(&mut self, ledger: &Ledger) -> Option<Vec<(SlotName, SlotValue)>> {
        let revise = self.rng.gen_bool(0.1);
        let slots: Vec<&SlotName> = self
            .ontology
            .slots()
            .filter(|s| revise || !ledger.agreed.contains(s))
            .collect();
        if slots.is_empty() {
            return None;
        }
        let k = self.rng.gen_range(1..=slots.len().min(2));
        let mut chosen: Vec<&SlotName> = slots.choose_multiple(&mut self.rng, k).copied().collect();
        chosen.sort_by_key(|s| self.ontology.order_key(s));
        let pairs: Vec<_> = chosen
            .into_iter()
            .filter_map(|slot| {
                let values = self.ontology.values(slot)?;
                let value = values
                    .iter()
                    .filter(|v| ledger.agreed.get(slot) != Some(*v))
                    .choose(&mut self.rng)?;
                Some((slot.clone(), value.clone()))
            })
            .collect();
        (!pairs.is_empty()).then_some(pairs)
    }

    /// One utterance's acts and text, applied to the ledger.
    fn utterance(&mut self, speaker: Speaker, ledger: &mut Ledger) -> (Vec<DialogueAct>, String) {
        let theirs: Vec<(SlotName, SlotValue)> = ledger
            .open(speaker.other())
            .iter()
            .map(|(s, v)| (s.clone(), v.clone()))
            .collect();
        let mut acts = Vec::new();
        let mut text = Vec::new();
        let roll: f64 = self.rng.gen();
        if !theirs.is_empty() && roll < 0.3 {
            if self.rng.gen_bool(0.5) {
                acts.push(DialogueAct::Accept(None));
                text.push("that works for me.".to_string());
                for (s, v) in &theirs {
                    ledger.agree(s, v);
                }
            } else {
                let k = self.rng.gen_range(1..=theirs.len());
                let picked: Vec<_> = theirs.choose_multiple(&mut self.rng, k).cloned().collect();
                for (s, v) in &picked {
                    ledger.agree(s, v);
                }
                text.push(format!("i can accept {}.", phrase(&picked)));
                acts.push(DialogueAct::Accept(Some(
                    Offer::new(picked).expect("distinct slots"),
                )));
            }
        } else if !theirs.is_empty() && roll < 0.5 {
            acts.push(DialogueAct::Reject(None));
            text.push("no, that will not work.".to_string());
            ledger.open(speaker.other()).clear();
        } else if roll > 0.9 {
            acts.push(DialogueAct::Other);
            text.push("let me think about it.".to_string());
        }
        if acts.is_empty() || self.rng.gen_bool(0.5) {
            if let Some(pairs) = self.offer(ledger) {
                for (s, v) in &pairs {
                    if ledger.agreed.get(s).is_some_and(|a| a != v) {
                        ledger.agreed.remove(s);
                    }
                    ledger.open(speaker).insert(s.clone(), v.clone());
                }
                text.push(format!("how about {}?", phrase(&pairs)));
                acts.push(DialogueAct::Offer(
                    Offer::new(pairs).expect("distinct slots"),
                ));
            }
        }
        if acts.is_empty() {
            acts.push(DialogueAct::Other);
            text.push("hello.".to_string());
        }
        (acts, text.join(" "))
    }
}

/// Builds one dialogue. About one utterance in ten is followed by a second
/// utterance from the same speaker, so merging is exercised.
pub fn synth_dialogue<R: Rng>(
    ontology: &Ontology,
    id: &str,
    turns: usize,
    rng: R,
) -> AnnotatedDialogue {
    let mut g = Gen { ontology, rng };
    let mut ledger = Ledger::default();
    let mut raw = Vec::new();
    let mut speaker = if g.rng.gen_bool(0.5) {
        Speaker::Employer
    } else {
        Speaker::Candidate
    };
    for _ in 0..turns.max(1) {
        let parts = if g.rng.gen_bool(0.1) { 2 } else { 1 };
        for _ in 0..parts {
            let (acts, text) = g.utterance(speaker, &mut ledger);
            raw.push(RawTurn {
                utterance: Utterance::new(speaker, text, raw.len()),
                acts: Some(acts),
                state: Some(ledger.agreed.clone()),
            });
        }
        speaker = speaker.other();
    }
    AnnotatedDialogue::from_raw(id, raw).expect("generated utterances are non-empty")
}

pub fn synth_corpus(ontology: &Ontology, config: &SynthConfig) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let width = config.dialogues.max(1).to_string().len().max(4);
    let dialogues = (0..config.dialogues)
        .map(|i| {
            let turns = rng.gen_range(config.min_turns..=config.max_turns.max(config.min_turns));
            let child = ChaCha8Rng::seed_from_u64(rng.gen());
            synth_dialogue(ontology, &format!("synth-{i:0width$}"), turns, child)
        })
        .collect();
    Corpus { dialogues }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::{load_corpus, LoadOptions};
    use crate::tracker::{run, TrackerConfig};

    #[test]
    fn deterministic() {
        let o = Ontology::gpt_negochat();
        let cfg = SynthConfig {
            dialogues: 5,
            seed: 3,
            ..Default::default()
        };
        assert_eq!(
            synth_corpus(&o, &cfg).to_json(),
            synth_corpus(&o, &cfg).to_json()
        );
    }

    #[test]
    fn tracker_agrees_with_generator() {
        let o = Ontology::gpt_negochat();
        let corpus = synth_corpus(
            &o,
            &SynthConfig {
                dialogues: 50,
                seed: 11,
                ..Default::default()
            },
        );
        for d in corpus.iter() {
            let predicted = run(d, TrackerConfig::default()).unwrap();
            let gold = d.gold_states().unwrap();
            for (turn, (p, g)) in predicted.iter().zip(gold).enumerate() {
                assert_eq!(p, g, "{} turn {turn}", d.id());
            }
        }
    }

    #[test]
    fn strict_load_round_trip() {
        let o = Ontology::gpt_negochat();
        let corpus = synth_corpus(
            &o,
            &SynthConfig {
                dialogues: 10,
                seed: 1,
                ..Default::default()
            },
        );
        let (back, report) = load_corpus(
            &corpus.to_json(),
            &o,
            LoadOptions {
                strict: true,
                aliases: None,
            },
        )
        .unwrap();
        assert!(report.is_clean());
        assert_eq!(back.to_json(), corpus.to_json());
    }
}
