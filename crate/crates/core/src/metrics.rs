//! Agreement, macro-F1, cross-mode consistency and non-semantic bias audits.
//!
//! Predictions are `Option<JudgmentLabel>`: `None` is an unparseable output and
//! always counts against the judge (as a mismatch, an inconsistency, or a
//! flip) rather than being dropped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::JudgmentLabel;
use crate::reward::consistent_predicate;

fn check_lengths(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Usage(format!("{what}: length mismatch ({a} vs {b})")));
    }
    Ok(())
}

pub fn agreement(preds: &[Option<JudgmentLabel>], golds: &[JudgmentLabel]) -> Result<f64> {
    check_lengths(preds.len(), golds.len(), "agreement")?;
    if golds.is_empty() {
        return Err(Error::Usage("agreement over zero items".into()));
    }
    let hits = preds
        .iter()
        .zip(golds)
        .filter(|(p, g)| **p == Some(**g))
        .count();
    Ok(hits as f64 / golds.len() as f64)
}

/// Counts indexed `[gold][pred]` in [`JudgmentLabel::ALL`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionTable {
    pub counts: [[u64; 3]; 3],
    /// Unparseable predictions, by gold class.
    pub unparseable: [u64; 3],
}

impl ConfusionTable {
    pub fn from_predictions(preds: &[Option<JudgmentLabel>], golds: &[JudgmentLabel]) -> Result<Self> {
        check_lengths(preds.len(), golds.len(), "confusion table")?;
        let mut t = ConfusionTable::default();
        for (p, g) in preds.iter().zip(golds) {
            t.record(*g, *p);
        }
        Ok(t)
    }

    pub fn record(&mut self, gold: JudgmentLabel, pred: Option<JudgmentLabel>) {
        match pred {
            Some(p) => self.counts[gold.index()][p.index()] += 1,
            None => self.unparseable[gold.index()] += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum::<u64>() + self.unparseable_total()
    }

    pub fn unparseable_total(&self) -> u64 {
        self.unparseable.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub label: JudgmentLabel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroScores {
    pub per_class: Vec<ClassScores>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision/recall/F1 (0/0 taken as 0) and their unweighted means
/// over all three classes.
pub fn macro_f1(table: &ConfusionTable) -> MacroScores {
    let per_class: Vec<ClassScores> = JudgmentLabel::ALL
        .iter()
        .map(|&label| {
            let c = label.index();
            let tp = table.counts[c][c];
            let predicted: u64 = (0..3).map(|g| table.counts[g][c]).sum();
            let support: u64 = table.counts[c].iter().sum::<u64>() + table.unparseable[c];
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores {
                label,
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let mean = |f: fn(&ClassScores) -> f64| per_class.iter().map(f).sum::<f64>() / 3.0;
    MacroScores {
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        per_class,
    }
}

/// One cross-mode observation: two pointwise scores and a pairwise label, any
/// of which may be unparseable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossModeItem {
    pub score_a: Option<i64>,
    pub score_b: Option<i64>,
    pub label: Option<JudgmentLabel>,
}

impl CrossModeItem {
    pub fn is_consistent(&self) -> bool {
        match (self.score_a, self.score_b, self.label) {
            (Some(a), Some(b), Some(l)) => consistent_predicate(l, a, b),
            _ => false,
        }
    }
}

pub fn consistency_score(items: &[CrossModeItem]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::Usage("consistency over zero items".into()));
    }
    Ok(items.iter().filter(|i| i.is_consistent()).count() as f64 / items.len() as f64)
}

/// Fraction of items whose swapped-order prediction, mapped back to the
/// original order, differs from the original prediction.
pub fn position_flip_rate(
    original: &[Option<JudgmentLabel>],
    swapped: &[Option<JudgmentLabel>],
) -> Result<f64> {
    check_lengths(original.len(), swapped.len(), "position flip rate")?;
    if original.is_empty() {
        return Err(Error::Usage("position flip rate over zero items".into()));
    }
    let flips = original
        .iter()
        .zip(swapped)
        .filter(|(o, s)| match (o, s) {
            (Some(o), Some(s)) => *o != s.swapped(),
            _ => true,
        })
        .count();
    Ok(flips as f64 / original.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthPreference {
    /// Among non-tie predictions on unequal-length pairs, the share that
    /// picked the longer answer. `None` when no item qualifies.
    pub rate: Option<f64>,
    pub eligible: usize,
    /// The same share computed from gold labels.
    pub baseline: Option<f64>,
    pub baseline_eligible: usize,
}

fn longer_pick_share<'a>(
    labels: impl Iterator<Item = (Option<JudgmentLabel>, &'a usize, &'a usize)>,
) -> (Option<f64>, usize) {
    let mut eligible = 0;
    let mut longer = 0;
    for (label, la, lb) in labels {
        let Some(label) = label else { continue };
        if label == JudgmentLabel::Tie || la == lb {
            continue;
        }
        eligible += 1;
        let picked_a = label == JudgmentLabel::AWin;
        if picked_a == (la > lb) {
            longer += 1;
        }
    }
    let rate = (eligible > 0).then(|| longer as f64 / eligible as f64);
    (rate, eligible)
}

pub fn length_preference_rate(
    preds: &[Option<JudgmentLabel>],
    golds: Option<&[JudgmentLabel]>,
    length_a: &[usize],
    length_b: &[usize],
) -> Result<LengthPreference> {
    check_lengths(preds.len(), length_a.len(), "length preference")?;
    check_lengths(preds.len(), length_b.len(), "length preference")?;
    let (rate, eligible) =
        longer_pick_share(preds.iter().copied().zip(length_a).zip(length_b).map(|((p, a), b)| (p, a, b)));
    let (baseline, baseline_eligible) = match golds {
        Some(g) => {
            check_lengths(preds.len(), g.len(), "length preference")?;
            longer_pick_share(g.iter().map(|l| Some(*l)).zip(length_a).zip(length_b).map(|((p, a), b)| (p, a, b)))
        }
        None => (None, 0),
    };
    Ok(LengthPreference {
        rate,
        eligible,
        baseline,
        baseline_eligible,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub position_flip_rate: Option<f64>,
    pub position_items: usize,
    pub length: Option<LengthPreference>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use JudgmentLabel::*;

    #[test]
    fn agreement_examples() {
        let g = [AWin, BWin, Tie, AWin];
        assert_eq!(agreement(&g.map(Some), &g).unwrap(), 1.0);
        assert_eq!(agreement(&[Some(BWin), Some(AWin), Some(AWin), None], &g).unwrap(), 0.0);
        assert_eq!(agreement(&[Some(AWin), Some(BWin), Some(Tie), Some(BWin)], &g).unwrap(), 0.75);
        assert!(agreement(&[Some(AWin)], &g).is_err());
    }

    #[test]
    fn macro_f1_examples() {
        let mut perfect = ConfusionTable::default();
        for (i, row) in perfect.counts.iter_mut().enumerate() {
            row[i] = 3;
        }
        let m = macro_f1(&perfect);
        assert_eq!((m.macro_precision, m.macro_recall, m.macro_f1), (1.0, 1.0, 1.0));

        let t = ConfusionTable {
            counts: [[2, 0, 0], [1, 1, 0], [0, 0, 0]],
            unparseable: [0; 3],
        };
        let m = macro_f1(&t);
        assert_abs_diff_eq!(m.per_class[0].f1, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(m.per_class[1].f1, 2.0 / 3.0, epsilon = 1e-12);
        // tie never gold and never predicted: contributes 0
        assert_eq!(m.per_class[2].f1, 0.0);
        assert_abs_diff_eq!(m.macro_f1, 0.488_888_888_888_888_9, epsilon = 1e-12);
    }

    #[test]
    fn unparseable_hurts_recall() {
        let t = ConfusionTable::from_predictions(&[Some(AWin), None], &[AWin, AWin]).unwrap();
        let m = macro_f1(&t);
        assert_eq!(m.per_class[0].precision, 1.0);
        assert_eq!(m.per_class[0].recall, 0.5);
        assert_eq!(t.total(), 2);
    }

    #[test]
    fn consistency_examples() {
        let ok = CrossModeItem {
            score_a: Some(8),
            score_b: Some(5),
            label: Some(AWin),
        };
        let bad = CrossModeItem {
            score_a: Some(6),
            score_b: Some(6),
            label: Some(AWin),
        };
        assert!(ok.is_consistent());
        assert!(!bad.is_consistent());
        assert_eq!(consistency_score(&[ok, bad]).unwrap(), 0.5);
        assert!(!CrossModeItem { score_a: None, ..ok }.is_consistent());
        assert!(consistency_score(&[]).is_err());
    }

    #[test]
    fn flip_examples() {
        let orig = [Some(AWin), Some(BWin), Some(Tie)];
        let invariant = [Some(BWin), Some(AWin), Some(Tie)];
        assert_eq!(position_flip_rate(&orig, &invariant).unwrap(), 0.0);
        let always_a = [Some(AWin); 4];
        assert_eq!(position_flip_rate(&always_a, &always_a).unwrap(), 1.0);
        assert_eq!(position_flip_rate(&[Some(Tie)], &[Some(Tie)]).unwrap(), 0.0);
        assert_eq!(position_flip_rate(&[Some(AWin)], &[None]).unwrap(), 1.0);
        assert!(position_flip_rate(&orig, &orig[..2]).is_err());
    }

    /// Any judge that decides from the answer contents (not their slots) is
    /// label-equivariant under swap and must score zero flips.
    #[test]
    fn equivariant_judges_never_flip() {
        let judges: [fn(i64, i64) -> JudgmentLabel; 2] = [JudgmentLabel::from_scores, |a, b| {
            if (a - b).abs() <= 1 {
                Tie
            } else {
                JudgmentLabel::from_scores(b, a)
            }
        }];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pairs: Vec<(i64, i64)> = (0..200).map(|_| (rng.random_range(1..=10), rng.random_range(1..=10))).collect();
        for judge in judges {
            let orig: Vec<_> = pairs.iter().map(|&(a, b)| Some(judge(a, b))).collect();
            let swapped: Vec<_> = pairs.iter().map(|&(a, b)| Some(judge(b, a))).collect();
            assert_eq!(position_flip_rate(&orig, &swapped).unwrap(), 0.0);
        }
    }

    #[test]
    fn length_preference_examples() {
        let la = [10, 50, 30];
        let lb = [40, 20, 5];
        let longer = [Some(BWin), Some(AWin), Some(AWin)];
        let r = length_preference_rate(&longer, None, &la, &lb).unwrap();
        assert_eq!(r.rate, Some(1.0));
        let r = length_preference_rate(&longer, None, &[7; 3], &[7; 3]).unwrap();
        assert_eq!(r.rate, None);
        let r = length_preference_rate(&longer, Some(&[AWin, AWin, Tie]), &la, &lb).unwrap();
        assert_eq!(r.baseline, Some(0.5));
        assert_eq!(r.baseline_eligible, 2);
    }

    #[test]
    fn random_judge_on_balanced_lengths_is_near_half() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 20_000;
        let la: Vec<usize> = (0..n).map(|_| rng.random_range(10..500)).collect();
        let lb: Vec<usize> = (0..n).map(|_| rng.random_range(10..500)).collect();
        let preds: Vec<_> = (0..n).map(|_| Some(if rng.random::<bool>() { AWin } else { BWin })).collect();
        let r = length_preference_rate(&preds, None, &la, &lb).unwrap();
        assert!((r.rate.unwrap() - 0.5).abs() < 0.02, "{:?}", r.rate);
    }

    fn label_strategy() -> impl Strategy<Value = Option<JudgmentLabel>> {
        prop_oneof![Just(None), Just(Some(AWin)), Just(Some(BWin)), Just(Some(Tie))]
    }

    proptest! {
        #[test]
        fn permutation_invariance(
            items in proptest::collection::vec((label_strategy(), 0usize..3, 1i64..=10, 1i64..=10), 1..30),
            seed in any::<u64>(),
        ) {
            let preds: Vec<_> = items.iter().map(|i| i.0).collect();
            let golds: Vec<_> = items.iter().map(|i| JudgmentLabel::ALL[i.1]).collect();
            let cm: Vec<_> = items.iter().map(|i| CrossModeItem { score_a: Some(i.2), score_b: Some(i.3), label: i.0 }).collect();
            let mut order: Vec<usize> = (0..items.len()).collect();
            use rand::seq::SliceRandom;
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let p2: Vec<_> = order.iter().map(|&i| preds[i]).collect();
            let g2: Vec<_> = order.iter().map(|&i| golds[i]).collect();
            let c2: Vec<_> = order.iter().map(|&i| cm[i]).collect();
            prop_assert_eq!(agreement(&preds, &golds).unwrap(), agreement(&p2, &g2).unwrap());
            prop_assert_eq!(
                macro_f1(&ConfusionTable::from_predictions(&preds, &golds).unwrap()),
                macro_f1(&ConfusionTable::from_predictions(&p2, &g2).unwrap())
            );
            prop_assert_eq!(consistency_score(&cm).unwrap(), consistency_score(&c2).unwrap());
        }
    }
}
