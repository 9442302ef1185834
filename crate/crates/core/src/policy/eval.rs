//! Greedy predictions of a policy on linked pointwise/pairwise items and the
//! resulting metric snapshot.

use serde::{Deserialize, Serialize};

use super::{Output, ToyJudgePolicy};
use crate::error::{Error, Result};
use crate::metrics::{agreement, consistency_score, macro_f1, position_flip_rate, ConfusionTable, CrossModeItem};
use crate::pipeline::CrossModePair;
use crate::records::{EvaluationInstance, JudgmentLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPrediction {
    pub id: String,
    pub gold: JudgmentLabel,
    pub pred: JudgmentLabel,
    /// Prediction on the answer-swapped instance, in swapped coordinates.
    pub pred_swapped: JudgmentLabel,
    pub gold_score_a: i64,
    pub gold_score_b: i64,
    pub score_a: i64,
    pub score_b: i64,
    pub length_a: usize,
    pub length_b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSnapshot {
    pub items: usize,
    pub agreement: f64,
    pub macro_f1: f64,
    pub consistency: f64,
    pub position_flip_rate: f64,
    /// Fraction of pointwise predictions equal to the gold score.
    pub pointwise_exact: f64,
}

fn greedy_label(policy: &ToyJudgePolicy, inst: &EvaluationInstance) -> Result<JudgmentLabel> {
    let c = policy.context_id(inst);
    match policy.output(c, policy.greedy(c)?)? {
        Output::Label(l) => Ok(l),
        Output::Score(_) => Err(Error::Usage(format!("instance {} is not pairwise", inst.id))),
    }
}

fn greedy_score(policy: &ToyJudgePolicy, inst: &EvaluationInstance) -> Result<i64> {
    let c = policy.context_id(inst);
    match policy.output(c, policy.greedy(c)?)? {
        Output::Score(s) => Ok(s),
        Output::Label(_) => Err(Error::Usage(format!("instance {} is not pointwise", inst.id))),
    }
}

pub fn predict_pairs(policy: &ToyJudgePolicy, pairs: &[CrossModePair]) -> Result<Vec<PairPrediction>> {
    pairs
        .iter()
        .map(|p| {
            let (gold_score_a, gold_score_b) = p.gold_scores();
            Ok(PairPrediction {
                id: p.id.clone(),
                gold: p.gold_label(),
                pred: greedy_label(policy, &p.pairwise)?,
                pred_swapped: greedy_label(policy, &p.pairwise.swapped())?,
                gold_score_a,
                gold_score_b,
                score_a: greedy_score(policy, &p.pointwise[0])?,
                score_b: greedy_score(policy, &p.pointwise[1])?,
                length_a: p.pairwise.answer_a.chars().count(),
                length_b: p.pairwise.answer_b.chars().count(),
            })
        })
        .collect()
}

pub fn evaluate_policy(policy: &ToyJudgePolicy, pairs: &[CrossModePair]) -> Result<EvalSnapshot> {
    if pairs.is_empty() {
        return Err(Error::Usage("evaluation set is empty".into()));
    }
    let preds = predict_pairs(policy, pairs)?;
    let labels: Vec<Option<JudgmentLabel>> = preds.iter().map(|p| Some(p.pred)).collect();
    let swapped: Vec<Option<JudgmentLabel>> = preds.iter().map(|p| Some(p.pred_swapped)).collect();
    let golds: Vec<JudgmentLabel> = preds.iter().map(|p| p.gold).collect();
    let items: Vec<CrossModeItem> = preds
        .iter()
        .map(|p| CrossModeItem {
            score_a: Some(p.score_a),
            score_b: Some(p.score_b),
            label: Some(p.pred),
        })
        .collect();
    let exact = preds
        .iter()
        .map(|p| (p.score_a == p.gold_score_a) as usize + (p.score_b == p.gold_score_b) as usize)
        .sum::<usize>();
    Ok(EvalSnapshot {
        items: preds.len(),
        agreement: agreement(&labels, &golds)?,
        macro_f1: macro_f1(&ConfusionTable::from_predictions(&labels, &golds)?).macro_f1,
        consistency: consistency_score(&items)?,
        position_flip_rate: position_flip_rate(&labels, &swapped)?,
        pointwise_exact: exact as f64 / (2 * preds.len()) as f64,
    })
}
