use indexmap::IndexMap;
use serde::Serialize;

use super::{Corpus, CorpusError};
use crate::ontology::Ontology;

/// Corpus size summary. Turns per dialogue are reported under both counting
/// definitions (raw utterances and merged alternating turns).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub dialogues: usize,
    pub raw_utterances: usize,
    pub merged_turns: usize,
    pub mean_raw_utterances: f64,
    pub median_raw_utterances: f64,
    pub mean_merged_turns: f64,
    pub median_merged_turns: f64,
    /// Whitespace tokens per merged turn, averaged over all turns.
    pub mean_words_per_turn: f64,
    /// Number of dialogues whose final gold state settles each slot.
    pub final_agreements: IndexMap<String, usize>,
}

fn median(mut xs: Vec<usize>) -> f64 {
    xs.sort_unstable();
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2] as f64
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) as f64 / 2.0
    }
}

pub fn dialogue_stats(corpus: &Corpus, ontology: &Ontology) -> Result<StatsReport, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let raw: Vec<usize> = corpus.iter().map(|d| d.raw_turns().len()).collect();
    let merged: Vec<usize> = corpus.iter().map(|d| d.len()).collect();
    let n = corpus.len() as f64;
    let raw_total: usize = raw.iter().sum();
    let merged_total: usize = merged.iter().sum();
    let words: usize = corpus
        .iter()
        .flat_map(|d| d.turns())
        .map(|t| t.utterance.text.split_whitespace().count())
        .sum();

    let mut final_agreements: IndexMap<String, usize> =
        ontology.slots().map(|s| (s.to_string(), 0)).collect();
    for d in corpus.iter() {
        if let Some(state) = d.turns().last().and_then(|t| t.gold.as_ref()) {
            for (slot, _) in state {
                *final_agreements.entry(slot.to_string()).or_default() += 1;
            }
        }
    }

    Ok(StatsReport {
        dialogues: corpus.len(),
        raw_utterances: raw_total,
        merged_turns: merged_total,
        mean_raw_utterances: raw_total as f64 / n,
        median_raw_utterances: median(raw),
        mean_merged_turns: merged_total as f64 / n,
        median_merged_turns: median(merged),
        mean_words_per_turn: if merged_total == 0 {
            0.0
        } else {
            words as f64 / merged_total as f64
        },
        final_agreements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue::{AnnotatedDialogue, RawTurn, Speaker, Utterance};

    fn dialogue(id: &str, speakers: &[Speaker]) -> AnnotatedDialogue {
        let raw = speakers
            .iter()
            .enumerate()
            .map(|(i, &s)| RawTurn {
                utterance: Utterance::new(s, "two words", i),
                acts: None,
                state: None,
            })
            .collect();
        AnnotatedDialogue::from_raw(id, raw).unwrap()
    }

    #[test]
    fn single_dialogue_of_four_turns() {
        use Speaker::*;
        let corpus = Corpus {
            dialogues: vec![dialogue("a", &[Employer, Candidate, Employer, Candidate])],
        };
        let s = dialogue_stats(&corpus, &Ontology::gpt_negochat()).unwrap();
        assert_eq!(s.dialogues, 1);
        assert_eq!(s.mean_merged_turns, 4.0);
        assert_eq!(s.median_merged_turns, 4.0);
        assert_eq!(s.mean_words_per_turn, 2.0);
    }

    #[test]
    fn both_counting_definitions() {
        use Speaker::*;
        let corpus = Corpus {
            dialogues: vec![
                dialogue("a", &[Employer, Employer, Candidate]),
                dialogue("b", &[Candidate, Employer, Candidate, Candidate, Candidate]),
            ],
        };
        let s = dialogue_stats(&corpus, &Ontology::gpt_negochat()).unwrap();
        assert_eq!(s.raw_utterances, 8);
        assert_eq!(s.merged_turns, 5);
        assert_eq!(s.mean_raw_utterances, 4.0);
        assert_eq!(s.mean_merged_turns, 2.5);
        assert_eq!(s.median_raw_utterances, 4.0);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(dialogue_stats(&Corpus::default(), &Ontology::gpt_negochat()).is_err());
    }
}
