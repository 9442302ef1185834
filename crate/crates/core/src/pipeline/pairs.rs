//! Debiasing preference pairs and linked pointwise/pairwise instances.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parser::render_full;
use crate::records::{EvalMode, EvaluationInstance, JudgmentLabel, SourceRecord, TaggingRules, Winner};
use crate::reward::consistent_predicate;

/// Content-free sentences used to lengthen an answer without changing what it says.
pub const FILLER: [&str; 6] = [
    "This is worth keeping in mind.",
    "The points above summarize the matter.",
    "Each of these details is stated for completeness.",
    "Nothing further needs to be added here.",
    "That covers the question as posed.",
    "The explanation above stands as written.",
];

pub const PAD_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    OrderSwap,
    LengthPad,
    FormatChange,
}

impl Perturbation {
    pub const ALL: [Perturbation; 3] = [Perturbation::OrderSwap, Perturbation::LengthPad, Perturbation::FormatChange];

    pub fn as_str(self) -> &'static str {
        match self {
            Perturbation::OrderSwap => "order_swap",
            Perturbation::LengthPad => "length_pad",
            Perturbation::FormatChange => "format_change",
        }
    }

    fn suffix(self) -> &'static str {
        match self {
            Perturbation::OrderSwap => "swap",
            Perturbation::LengthPad => "pad",
            Perturbation::FormatChange => "fmt",
        }
    }
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Perturbation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "order_swap" | "order" | "swap" => Ok(Perturbation::OrderSwap),
            "length_pad" | "length" | "pad" => Ok(Perturbation::LengthPad),
            "format_change" | "format" | "fmt" => Ok(Perturbation::FormatChange),
            other => Err(Error::Usage(format!("unknown perturbation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub id: String,
    /// The perturbed instance the completions judge.
    pub input: EvaluationInstance,
    pub chosen: String,
    pub rejected: String,
    pub perturbation: Perturbation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedPair {
    pub instance_id: String,
    pub perturbation: Perturbation,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairBatch {
    pub pairs: Vec<PreferencePair>,
    pub skipped: Vec<SkippedPair>,
}

impl PairBatch {
    pub fn extend(&mut self, other: PairBatch) {
        self.pairs.extend(other.pairs);
        self.skipped.extend(other.skipped);
    }
}

/// Appends filler sentences until the text is at least `PAD_FACTOR` times
/// its original length (and at least one sentence longer).
pub fn pad_answer(text: &str, rng: &mut impl Rng) -> String {
    let target = (text.chars().count() as f64 * PAD_FACTOR).ceil() as usize;
    let mut out = text.trim_end().to_string();
    let mut k = rng.random_range(0..FILLER.len());
    loop {
        out.push(' ');
        out.push_str(FILLER[k]);
        k = (k + 1) % FILLER.len();
        if out.chars().count() >= target {
            return out;
        }
    }
}

/// Wraps the answer in markdown styling that leaves its wording intact.
pub fn decorate_answer(text: &str) -> String {
    format!("## Answer\n\n**{}**\n\n---", text.trim())
}

/// Which side loses under the gold label (`B` for a tie).
fn losing_is_a(gold: JudgmentLabel) -> bool {
    gold == JudgmentLabel::BWin
}

fn position_label(is_a: bool) -> JudgmentLabel {
    if is_a {
        JudgmentLabel::AWin
    } else {
        JudgmentLabel::BWin
    }
}

/// Builds one preference pair per requested perturbation. A tie gold has no
/// position-following counterpart, so `OrderSwap` is skipped (and reported)
/// for tie instances.
pub fn make_dpo_pairs(instance: &EvaluationInstance, kinds: &[Perturbation], seed: u64) -> Result<PairBatch> {
    instance.validate()?;
    let gold = match (instance.mode, instance.gold_label()) {
        (EvalMode::Pairwise, Some(l)) => l,
        _ => {
            return Err(Error::Usage(format!(
                "instance {}: preference pairs need a pairwise instance with a gold label",
                instance.id
            )))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batch = PairBatch::default();
    let mut seen = Vec::new();
    for &kind in kinds {
        if seen.contains(&kind) {
            continue;
        }
        seen.push(kind);
        let id = format!("{}#{}", instance.id, kind.suffix());
        let (input, chosen, rejected) = match kind {
            Perturbation::OrderSwap => {
                if gold == JudgmentLabel::Tie {
                    batch.skipped.push(SkippedPair {
                        instance_id: instance.id.clone(),
                        perturbation: kind,
                        reason: "tie gold has no position-following rejection".into(),
                    });
                    continue;
                }
                let mut input = instance.swapped();
                input.id = id.clone();
                // the original label now points at the other content
                (input, gold.swapped(), gold)
            }
            Perturbation::LengthPad | Perturbation::FormatChange => {
                let mut input = instance.clone();
                input.id = id.clone();
                let pad_a = losing_is_a(gold);
                let slot = if pad_a { &mut input.answer_a } else { &mut input.answer_b };
                *slot = if kind == Perturbation::LengthPad {
                    pad_answer(slot, &mut rng)
                } else {
                    decorate_answer(slot)
                };
                (input, gold, position_label(pad_a))
            }
        };
        debug_assert_ne!(chosen, rejected);
        batch.pairs.push(PreferencePair {
            id,
            input,
            chosen: render_full(chosen),
            rejected: render_full(rejected),
            perturbation: kind,
        });
    }
    Ok(batch)
}

/// Two pointwise instances and one pairwise instance over the same answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossModePair {
    pub id: String,
    pub pointwise: [EvaluationInstance; 2],
    pub pairwise: EvaluationInstance,
}

impl CrossModePair {
    pub fn gold_scores(&self) -> (i64, i64) {
        (
            self.pointwise[0].gold.score().expect("pointwise gold"),
            self.pointwise[1].gold.score().expect("pointwise gold"),
        )
    }

    pub fn gold_label(&self) -> JudgmentLabel {
        self.pairwise.gold_label().expect("pairwise gold")
    }
}

/// Returns `None` for records tagged `BothBad`.
pub fn make_crossmode_pair(record: &SourceRecord, id: &str, rules: &TaggingRules) -> Result<Option<CrossModePair>> {
    record.validate(&rules.score_range)?;
    let label = match rules.derive_winner(record.score_a, record.score_b)? {
        Winner::BothBad => return Ok(None),
        w => w.label().expect("non-both_bad winner has a label"),
    };
    let pair = CrossModePair {
        id: id.to_string(),
        pointwise: [
            EvaluationInstance::pointwise(format!("{id}#a"), &record.question, &record.answer_a, record.score_a),
            EvaluationInstance::pointwise(format!("{id}#b"), &record.question, &record.answer_b, record.score_b),
        ],
        pairwise: EvaluationInstance::pairwise(
            format!("{id}#pair"),
            &record.question,
            &record.answer_a,
            &record.answer_b,
            label,
        ),
    };
    debug_assert!(consistent_predicate(label, record.score_a, record.score_b));
    Ok(Some(pair))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::{extract_judgment, ParseOptions};
    use proptest::prelude::*;

    fn inst(gold: JudgmentLabel) -> EvaluationInstance {
        EvaluationInstance::pairwise("x1", "Name a prime.", "Seven is prime.", "Nine is prime.", gold)
    }

    fn parsed(s: &str) -> JudgmentLabel {
        extract_judgment(s, ParseOptions::default()).unwrap()
    }

    #[test]
    fn order_swap_tracks_content() {
        let b = make_dpo_pairs(&inst(JudgmentLabel::AWin), &[Perturbation::OrderSwap], 0).unwrap();
        let p = &b.pairs[0];
        assert_eq!(p.id, "x1#swap");
        assert_eq!(p.input.answer_a, "Nine is prime.");
        assert_eq!(p.input.answer_b, "Seven is prime.");
        assert_eq!(parsed(&p.chosen), JudgmentLabel::BWin);
        assert_eq!(parsed(&p.rejected), JudgmentLabel::AWin);
        assert_eq!(p.input.gold_label(), Some(JudgmentLabel::BWin));
    }

    #[test]
    fn tie_skips_order_swap() {
        let b = make_dpo_pairs(&inst(JudgmentLabel::Tie), &Perturbation::ALL, 0).unwrap();
        assert_eq!(b.pairs.len(), 2);
        assert_eq!(b.skipped.len(), 1);
        assert_eq!(b.skipped[0].perturbation, Perturbation::OrderSwap);
    }

    #[test]
    fn length_pad_lengthens_loser_only() {
        let i = inst(JudgmentLabel::AWin);
        let b = make_dpo_pairs(&i, &[Perturbation::LengthPad], 3).unwrap();
        let p = &b.pairs[0];
        assert_eq!(p.input.answer_a, i.answer_a);
        assert!(p.input.answer_b.starts_with("Nine is prime."));
        assert!(p.input.answer_b.len() as f64 >= PAD_FACTOR * i.answer_b.len() as f64);
        assert_eq!(parsed(&p.chosen), JudgmentLabel::AWin);
        assert_eq!(parsed(&p.rejected), JudgmentLabel::BWin);
    }

    #[test]
    fn format_change_decorates_loser() {
        let b = make_dpo_pairs(&inst(JudgmentLabel::BWin), &[Perturbation::FormatChange], 0).unwrap();
        let p = &b.pairs[0];
        assert!(p.input.answer_a.contains("**Seven is prime.**"));
        assert_eq!(p.input.answer_b, "Nine is prime.");
        assert_eq!(parsed(&p.rejected), JudgmentLabel::AWin);
    }

    #[test]
    fn empty_kinds_and_wrong_mode() {
        assert!(make_dpo_pairs(&inst(JudgmentLabel::AWin), &[], 0).unwrap().pairs.is_empty());
        let pw = EvaluationInstance::pointwise("p", "t", "a", 3);
        assert!(matches!(make_dpo_pairs(&pw, &Perturbation::ALL, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn perturbation_names() {
        for p in Perturbation::ALL {
            assert_eq!(p.as_str().parse::<Perturbation>().unwrap(), p);
            assert_eq!(serde_json::to_value(p).unwrap(), p.as_str());
        }
        assert_eq!("order-swap".parse::<Perturbation>().unwrap(), Perturbation::OrderSwap);
        assert!("bogus".parse::<Perturbation>().is_err());
    }

    fn record(a: i64, b: i64) -> SourceRecord {
        SourceRecord {
            question: "q".into(),
            answer_a: "first".into(),
            answer_b: "second".into(),
            score_a: a,
            score_b: b,
        }
    }

    #[test]
    fn crossmode_examples() {
        let rules = TaggingRules::default();
        let p = make_crossmode_pair(&record(8, 5), "c1", &rules).unwrap().unwrap();
        assert_eq!(p.gold_scores(), (8, 5));
        assert_eq!(p.gold_label(), JudgmentLabel::AWin);
        assert_eq!(p.pointwise[1].answer_a, "second");
        assert_eq!(p.pairwise.answer_b, "second");
        let t = make_crossmode_pair(&record(4, 4), "c2", &rules).unwrap().unwrap();
        assert_eq!(t.gold_label(), JudgmentLabel::Tie);
        assert!(make_crossmode_pair(&record(1, 2), "c3", &rules).unwrap().is_none());
    }

    proptest! {
        #[test]
        fn pairs_differ_and_chosen_matches_perturbed_gold(g in 0usize..3, seed in any::<u64>()) {
            let gold = JudgmentLabel::ALL[g];
            let b = make_dpo_pairs(&inst(gold), &Perturbation::ALL, seed).unwrap();
            for p in &b.pairs {
                prop_assert_ne!(&p.chosen, &p.rejected);
                prop_assert_eq!(Some(parsed(&p.chosen)), p.input.gold_label());
            }
        }

        #[test]
        fn crossmode_gold_is_consistent(a in 1i64..=10, b in 1i64..=10) {
            if let Some(p) = make_crossmode_pair(&record(a, b), "c", &TaggingRules::default()).unwrap() {
                let (g1, g2) = p.gold_scores();
                prop_assert!(consistent_predicate(p.gold_label(), g1, g2));
            }
        }
    }
}
