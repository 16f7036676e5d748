use negotrack::dialogue::{ActKind, Offer};
use negotrack::dialogue::{RawTurn, Utterance};
use negotrack::lev;
use negotrack::prompt::{self, context_window, split_input, PromptConfig, Task, TaskSet};
use negotrack::synth::synth_dialogue;
use negotrack::tracker::{self, TrackerConfig};
use negotrack::{
    load_corpus, AgreementState, AnnotatedDialogue, Corpus, DialogueAct, LoadOptions, Ontology,
    Speaker,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn generated(seed: u64, turns: usize) -> AnnotatedDialogue {
    synth_dialogue(
        &Ontology::gpt_negochat(),
        "p",
        turns,
        ChaCha8Rng::seed_from_u64(seed),
    )
}

/// Arbitrary act sequences, including accepts and rejects with nothing to match.
fn act() -> impl Strategy<Value = DialogueAct> {
    let o = Ontology::gpt_negochat();
    let pairs: Vec<_> = o
        .slots()
        .flat_map(|s| {
            o.values(s)
                .unwrap()
                .iter()
                .map(move |v| (s.clone(), v.clone()))
        })
        .collect();
    let kind = prop_oneof![
        Just(ActKind::Offer),
        Just(ActKind::Accept),
        Just(ActKind::Reject),
        Just(ActKind::Other)
    ];
    (kind, prop::sample::subsequence(pairs, 0..3)).prop_map(|(kind, mut ps)| {
        ps.dedup_by(|a, b| a.0 == b.0);
        let ps = match kind {
            ActKind::Other => vec![],
            ActKind::Offer if ps.is_empty() => return DialogueAct::Other,
            _ => ps,
        };
        DialogueAct::from_parts(kind, ps).unwrap()
    })
}

fn random_dialogue() -> impl Strategy<Value = AnnotatedDialogue> {
    prop::collection::vec(prop::collection::vec(act(), 1..4), 1..20).prop_map(|turns| {
        let raw = turns
            .into_iter()
            .enumerate()
            .map(|(i, acts)| RawTurn {
                utterance: Utterance::new(
                    if i % 2 == 0 {
                        Speaker::Employer
                    } else {
                        Speaker::Candidate
                    },
                    format!("u{i}"),
                    i,
                ),
                acts: Some(acts),
                state: None,
            })
            .collect();
        AnnotatedDialogue::from_raw("r", raw).unwrap()
    })
}

fn without_other(d: &AnnotatedDialogue) -> AnnotatedDialogue {
    let raw = d
        .raw_turns()
        .iter()
        .map(|t| RawTurn {
            acts: t.acts.as_ref().map(|a| {
                a.iter()
                    .filter(|x| !matches!(x, DialogueAct::Other))
                    .cloned()
                    .collect()
            }),
            ..t.clone()
        })
        .collect();
    AnnotatedDialogue::from_raw(d.id(), raw).unwrap()
}

fn is_subset(a: &AgreementState, b: &AgreementState) -> bool {
    a.iter().all(|(s, v)| b.get(s) == Some(v))
}

proptest! {
    #[test]
    fn tracker_is_deterministic(d in random_dialogue()) {
        let cfg = TrackerConfig::default();
        prop_assert_eq!(tracker::trace(&d, cfg).unwrap(), tracker::trace(&d, cfg).unwrap());
    }

    #[test]
    fn other_acts_do_not_matter(d in random_dialogue(), freeze in any::<bool>()) {
        let cfg = TrackerConfig { freeze_agreed: freeze };
        prop_assert_eq!(tracker::run(&d, cfg).unwrap(), tracker::run(&without_other(&d), cfg).unwrap());
    }

    #[test]
    fn offers_and_rejects_never_add(d in random_dialogue()) {
        let trace = tracker::trace(&d, TrackerConfig::default()).unwrap();
        let mut prev = AgreementState::new();
        for (t, state) in d.turns().iter().zip(&trace) {
            let acts = t.acts.as_deref().unwrap();
            if !acts.iter().any(|a| matches!(a, DialogueAct::Accept(_))) {
                prop_assert!(is_subset(&state.agreements, &prev));
            }
            prev = state.agreements.clone();
        }
    }

    #[test]
    fn every_agreement_has_provenance(d in random_dialogue()) {
        for (t, state) in tracker::trace(&d, TrackerConfig::default()).unwrap().iter().enumerate() {
            prop_assert_eq!(state.agreements.len(), state.provenance.len());
            for (slot, value) in state.agreements.iter() {
                let p = &state.provenance[slot];
                prop_assert_eq!(&p.value, value);
                prop_assert!(p.offered_at <= p.accepted_at && p.accepted_at <= t);
                prop_assert_ne!(p.offered_by, d.turns()[p.accepted_at].speaker());
                prop_assert_eq!(d.turns()[p.offered_at].speaker(), p.offered_by);
                let offered = d.turns()[p.offered_at].acts.as_deref().unwrap().iter().any(|a| {
                    matches!(a, DialogueAct::Offer(o) if o.pairs().iter().any(|(s, v)| s == slot && v == value))
                });
                prop_assert!(offered);
            }
        }
    }

    #[test]
    fn tracker_matches_generated_gold(seed in any::<u64>(), turns in 1usize..40) {
        let d = generated(seed, turns);
        let gold = d.gold_states().unwrap();
        let got = tracker::run(&d, TrackerConfig::default()).unwrap();
        prop_assert_eq!(got.iter().collect::<Vec<_>>(), gold);
    }

    #[test]
    fn prompt_regions(seed in any::<u64>(), turns in 1usize..25, window in 1usize..6) {
        let o = Ontology::gpt_negochat();
        let d = generated(seed, turns);
        let cfg = PromptConfig { window, ..PromptConfig::default() };
        let examples = prompt::dialogue_examples(&d, TaskSet::GEN_CLF, &cfg, &o, seed).unwrap();
        let gold = d.gold_states().unwrap();
        for pair in examples.chunks(2) {
            let (gen, clf) = (&pair[0], &pair[1]);
            prop_assert_eq!((gen.task, clf.task), (Task::Gen, Task::Clf));
            let t = gen.turn;
            let g = split_input(&gen.input, &cfg.domain).unwrap();
            let c = split_input(&clf.input, &cfg.domain).unwrap();
            prop_assert_eq!(g.context, context_window(&d, t, window));
            prop_assert_eq!(g.state, c.state);

            let prev = lev::parse_state(g.state, &o, true).unwrap().value;
            let span = lev::parse(&gen.target, &o, true).unwrap().value;
            prop_assert_eq!(&lev::apply(&prev, &span), gold[t]);

            let candidate = c.candidate.unwrap();
            prop_assert_eq!(candidate == gen.target, clf.target == prompt::YES);
            prop_assert_eq!(clf.clf_label, Some(clf.target == prompt::YES));
        }
    }

    #[test]
    fn corpus_round_trip_and_alternation(seeds in prop::collection::vec(any::<u64>(), 1..6)) {
        let o = Ontology::gpt_negochat();
        let corpus = Corpus {
            dialogues: seeds
                .iter()
                .enumerate()
                .map(|(i, &s)| synth_dialogue(&o, &format!("d{i}"), 12, ChaCha8Rng::seed_from_u64(s)))
                .collect(),
        };
        let (back, report) = load_corpus(&corpus.to_json(), &o, LoadOptions { strict: true, aliases: None }).unwrap();
        prop_assert!(report.is_clean());
        prop_assert_eq!(&back.dialogues, &corpus.dialogues);
        for d in back.iter() {
            for w in d.turns().windows(2) {
                prop_assert_ne!(w[0].speaker(), w[1].speaker());
            }
        }
    }

    #[test]
    fn accept_without_pending_is_diagnosed(seed in any::<u64>()) {
        let o = Ontology::gpt_negochat();
        let (slot, values) = o.slot_at((seed % o.len() as u64) as usize).unwrap();
        let accept = DialogueAct::Accept(Some(Offer::new(vec![(slot.clone(), values[0].clone())]).unwrap()));
        let s = tracker::TrackerState::new().step(Speaker::Candidate, &[accept], TrackerConfig::default());
        prop_assert!(s.agreements.is_empty());
        prop_assert_eq!(s.diagnostics.len(), 1);
    }
}
