//! Joint Slot Accuracy and Joint F1 over per-turn agreement states.
//!
//! Joint Slot Accuracy is the fraction of turns whose predicted state equals
//! gold exactly; turns where both are empty count as matches. Joint F1 is
//! micro-averaged over slot-value pairs: `2·TP / (2·TP + FP + FN)` with counts
//! summed across all turns. When there is nothing to count (every turn empty
//! on both sides) F1 is 1.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue::{AgreementState, Corpus};
use crate::lev;
use crate::ontology::{Ontology, SlotName, SlotValue};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("nothing to evaluate")]
    Empty,
    #[error("predictions and gold are misaligned: expected {expected}, found {found}")]
    Misaligned { expected: String, found: String },
    #[error("duplicate prediction for {0}")]
    Duplicate(TurnKey),
    #[error("dialogue \"{dialogue}\": turn {turn} has no gold state")]
    MissingGold { dialogue: String, turn: usize },
    #[error("prediction line {line}: {reason}")]
    BadPrediction { line: usize, reason: String },
    #[error("no fold reports to aggregate")]
    NoFolds,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TurnKey {
    pub dialogue_id: String,
    pub turn: usize,
}

impl TurnKey {
    pub fn new(dialogue_id: impl Into<String>, turn: usize) -> Self {
        Self {
            dialogue_id: dialogue_id.into(),
            turn,
        }
    }
}

impl std::fmt::Display for TurnKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.dialogue_id, self.turn)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TurnScore {
    pub exact_match: bool,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Pair-level comparison of one predicted state against gold. A slot with
/// the wrong value counts once as a false positive and once as a false negative.
pub fn score_turn(pred: &AgreementState, gold: &AgreementState) -> TurnScore {
    let tp = pred.iter().filter(|(s, v)| gold.get(s) == Some(*v)).count();
    let fp = pred.len() - tp;
    let fn_ = gold.len() - tp;
    TurnScore {
        exact_match: fp == 0 && fn_ == 0,
        tp,
        fp,
        fn_,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PairCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl PairCounts {
    fn add(&mut self, s: &TurnScore) {
        self.tp += s.tp;
        self.fp += s.fp;
        self.fn_ += s.fn_;
    }

    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredTurn {
    #[serde(flatten)]
    pub key: TurnKey,
    #[serde(flatten)]
    pub score: TurnScore,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub joint_slot_accuracy: f64,
    pub joint_f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub turns: usize,
    pub exact_matches: usize,
    pub totals: PairCounts,
    pub unparseable: usize,
    pub f1_averaging: &'static str,
    pub empty_turns_count_as_matches: bool,
    pub per_slot: BTreeMap<String, PairCounts>,
    pub per_turn: Vec<ScoredTurn>,
}

impl EvalReport {
    /// Plain-text summary table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# joint F1: micro over slot-value pairs; both-empty turns count as matches"
        );
        let _ = writeln!(
            out,
            "joint slot accuracy  {:.4}  ({}/{})",
            self.joint_slot_accuracy, self.exact_matches, self.turns
        );
        let _ = writeln!(out, "joint f1             {:.4}", self.joint_f1);
        let _ = writeln!(out, "precision            {:.4}", self.precision);
        let _ = writeln!(out, "recall               {:.4}", self.recall);
        let _ = writeln!(out, "unparseable          {}", self.unparseable);
        let _ = writeln!(
            out,
            "{:<26}{:>6}{:>6}{:>6}{:>8}",
            "slot", "tp", "fp", "fn", "f1"
        );
        for (slot, c) in &self.per_slot {
            let _ = writeln!(
                out,
                "{:<26}{:>6}{:>6}{:>6}{:>8.4}",
                slot,
                c.tp,
                c.fp,
                c.fn_,
                c.f1()
            );
        }
        out
    }
}

/// Scores aligned predictions against gold. Both sides are matched by
/// `(dialogue id, turn)`; input order does not matter.
pub fn evaluate(
    preds: &[(TurnKey, AgreementState)],
    golds: &[(TurnKey, AgreementState)],
) -> Result<EvalReport, MetricsError> {
    let index = |rows: &[(TurnKey, AgreementState)]| -> Result<Vec<usize>, MetricsError> {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| rows[a].0.cmp(&rows[b].0));
        if let Some(w) = order.windows(2).find(|w| rows[w[0]].0 == rows[w[1]].0) {
            return Err(MetricsError::Duplicate(rows[w[0]].0.clone()));
        }
        Ok(order)
    };
    let p_order = index(preds)?;
    let g_order = index(golds)?;
    let show =
        |k: Option<&TurnKey>| k.map_or_else(|| "end of input".to_string(), ToString::to_string);
    for i in 0..p_order.len().max(g_order.len()) {
        let p = p_order.get(i).map(|&j| &preds[j].0);
        let g = g_order.get(i).map(|&j| &golds[j].0);
        if p != g {
            return Err(MetricsError::Misaligned {
                expected: show(g),
                found: show(p),
            });
        }
    }
    if golds.is_empty() {
        return Err(MetricsError::Empty);
    }

    let mut totals = PairCounts::default();
    let mut per_slot: BTreeMap<String, PairCounts> = BTreeMap::new();
    let mut per_turn = Vec::with_capacity(golds.len());
    let mut exact = 0;
    for (&pi, &gi) in p_order.iter().zip(&g_order) {
        let (pred, gold) = (&preds[pi].1, &golds[gi].1);
        let score = score_turn(pred, gold);
        exact += usize::from(score.exact_match);
        totals.add(&score);
        let slots: std::collections::BTreeSet<&SlotName> =
            pred.iter().chain(gold.iter()).map(|(s, _)| s).collect();
        for slot in slots {
            let p: AgreementState = pred
                .get(slot)
                .map(|v| (slot.clone(), v.clone()))
                .into_iter()
                .collect();
            let g: AgreementState = gold
                .get(slot)
                .map(|v| (slot.clone(), v.clone()))
                .into_iter()
                .collect();
            per_slot
                .entry(slot.to_string())
                .or_default()
                .add(&score_turn(&p, &g));
        }
        per_turn.push(ScoredTurn {
            key: golds[gi].0.clone(),
            score,
        });
    }
    Ok(EvalReport {
        joint_slot_accuracy: exact as f64 / golds.len() as f64,
        joint_f1: totals.f1(),
        precision: totals.precision(),
        recall: totals.recall(),
        turns: golds.len(),
        exact_matches: exact,
        totals,
        unparseable: 0,
        f1_averaging: "micro",
        empty_turns_count_as_matches: true,
        per_slot,
        per_turn,
    })
}

/// Gold `(key, state)` rows for every merged turn in the corpus.
pub fn gold_turns(corpus: &Corpus) -> Result<Vec<(TurnKey, AgreementState)>, MetricsError> {
    let mut out = Vec::new();
    for d in corpus.iter() {
        for (turn, t) in d.turns().iter().enumerate() {
            let gold = t.gold.clone().ok_or_else(|| MetricsError::MissingGold {
                dialogue: d.id().to_string(),
                turn,
            })?;
            out.push((TurnKey::new(d.id(), turn), gold));
        }
    }
    Ok(out)
}

/// One line of a predictions JSONL file: either a full state or a span.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub dialogue_id: String,
    pub turn: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lev: Option<String>,
}

impl PredictionRecord {
    pub fn from_state(key: &TurnKey, state: &AgreementState) -> Self {
        Self {
            dialogue_id: key.dialogue_id.clone(),
            turn: key.turn,
            state: Some(
                state
                    .iter()
                    .map(|(s, v)| (s.to_string(), v.to_string()))
                    .collect(),
            ),
            lev: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionMode {
    /// Each record carries the full predicted state.
    State,
    /// Each record carries a span; states are rebuilt by applying spans in
    /// turn order from the empty state, so early mistakes propagate.
    Lev,
}

pub fn parse_predictions(text: &str) -> Result<Vec<PredictionRecord>, MetricsError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| MetricsError::BadPrediction {
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Predicted states plus the number of span records that needed lenient repair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictedStates {
    pub rows: Vec<(TurnKey, AgreementState)>,
    pub unparseable: usize,
}

pub fn predicted_states(
    records: &[PredictionRecord],
    mode: PredictionMode,
    ontology: &Ontology,
) -> Result<PredictedStates, MetricsError> {
    let bad = |line: usize, reason: String| MetricsError::BadPrediction { line, reason };
    match mode {
        PredictionMode::State => {
            let mut rows = Vec::with_capacity(records.len());
            for (i, r) in records.iter().enumerate() {
                let map = r
                    .state
                    .as_ref()
                    .ok_or_else(|| bad(i + 1, "missing \"state\"".into()))?;
                let mut state = AgreementState::new();
                for (s, v) in map {
                    let (Ok(s), Ok(v)) = (SlotName::new(s), SlotValue::new(v)) else {
                        return Err(bad(i + 1, "empty slot or value".into()));
                    };
                    state.insert(s, v);
                }
                rows.push((TurnKey::new(&r.dialogue_id, r.turn), state));
            }
            Ok(PredictedStates {
                rows,
                unparseable: 0,
            })
        }
        PredictionMode::Lev => {
            let mut by_dialogue: BTreeMap<&str, Vec<(usize, usize)>> = BTreeMap::new();
            for (i, r) in records.iter().enumerate() {
                if r.lev.is_none() {
                    return Err(bad(i + 1, "missing \"lev\"".into()));
                }
                by_dialogue
                    .entry(&r.dialogue_id)
                    .or_default()
                    .push((r.turn, i));
            }
            let mut rows = Vec::with_capacity(records.len());
            let mut unparseable = 0;
            for (id, mut turns) in by_dialogue {
                turns.sort_unstable();
                let mut state = AgreementState::new();
                for (turn, i) in turns {
                    let text = records[i].lev.as_deref().unwrap_or_default();
                    let parsed = lev::parse(text, ontology, false).expect("lenient parse is total");
                    if parsed.dropped > 0 {
                        unparseable += 1;
                    }
                    state = lev::apply(&state, &parsed.value);
                    rows.push((TurnKey::new(id, turn), state.clone()));
                }
            }
            Ok(PredictedStates { rows, unparseable })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (n − 1); zero for a single fold.
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateReport {
    pub folds: usize,
    pub joint_slot_accuracy: MeanStd,
    pub joint_f1: MeanStd,
}

/// Unweighted mean and spread of each metric across folds.
pub fn aggregate_folds(reports: &[EvalReport]) -> Result<AggregateReport, MetricsError> {
    if reports.is_empty() {
        return Err(MetricsError::NoFolds);
    }
    let acc: Vec<f64> = reports.iter().map(|r| r.joint_slot_accuracy).collect();
    let f1: Vec<f64> = reports.iter().map(|r| r.joint_f1).collect();
    Ok(AggregateReport {
        folds: reports.len(),
        joint_slot_accuracy: MeanStd::of(&acc),
        joint_f1: MeanStd::of(&f1),
    })
}
