//! Canonical judging records: raw source records, tag labels, evaluation
//! instances, and JSONL ingestion/emission.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Inclusive integer score range used to validate source scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRange {
    pub min: i64,
    pub max: i64,
}

impl Default for ScoreRange {
    fn default() -> Self {
        ScoreRange { min: 1, max: 10 }
    }
}

impl ScoreRange {
    pub fn new(min: i64, max: i64) -> Result<Self> {
        if min > max {
            return Err(Error::Usage(format!("empty score range [{min}, {max}]")));
        }
        Ok(ScoreRange { min, max })
    }

    pub fn contains(&self, score: i64) -> bool {
        (self.min..=self.max).contains(&score)
    }

    /// Number of distinct integer scores in the range.
    pub fn len(&self) -> usize {
        (self.max - self.min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn check(&self, score: i64) -> Result<()> {
        if self.contains(score) {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "score {score} outside [{}, {}]",
                self.min, self.max
            )))
        }
    }
}

impl FromStr for ScoreRange {
    type Err = Error;

    /// Accepts `1-10`, `1..10`, `1..=10` or `1,10`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Usage(format!("cannot parse score range {s:?}"));
        let s = s.trim();
        let (lo, hi) = ["..=", "..", ",", "-"]
            .iter()
            .find_map(|sep| s.split_once(sep))
            .ok_or_else(bad)?;
        let lo = lo.trim().parse().map_err(|_| bad())?;
        let hi = hi.trim().parse().map_err(|_| bad())?;
        ScoreRange::new(lo, hi)
    }
}

/// A raw preference record: a question, two answers and their integer scores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRecord {
    pub question: String,
    #[serde(rename = "answer_1", alias = "answer_a")]
    pub answer_a: String,
    #[serde(rename = "answer_2", alias = "answer_b")]
    pub answer_b: String,
    #[serde(rename = "answer_1_score", alias = "score_a")]
    pub score_a: i64,
    #[serde(rename = "answer_2_score", alias = "score_b")]
    pub score_b: i64,
}

impl SourceRecord {
    pub fn validate(&self, range: &ScoreRange) -> Result<()> {
        for (name, text) in [
            ("question", &self.question),
            ("answer_a", &self.answer_a),
            ("answer_b", &self.answer_b),
        ] {
            if text.trim().is_empty() {
                return Err(Error::Validation(format!("{name} is empty")));
            }
        }
        range.check(self.score_a)?;
        range.check(self.score_b)
    }
}

/// The three-way pairwise decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum JudgmentLabel {
    AWin,
    BWin,
    Tie,
}

impl JudgmentLabel {
    pub const ALL: [JudgmentLabel; 3] = [JudgmentLabel::AWin, JudgmentLabel::BWin, JudgmentLabel::Tie];

    pub fn as_str(self) -> &'static str {
        match self {
            JudgmentLabel::AWin => "A_win",
            JudgmentLabel::BWin => "B_win",
            JudgmentLabel::Tie => "tie",
        }
    }

    /// Position in [`JudgmentLabel::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// The label that names the same answer after the two answers trade places.
    pub fn swapped(self) -> Self {
        match self {
            JudgmentLabel::AWin => JudgmentLabel::BWin,
            JudgmentLabel::BWin => JudgmentLabel::AWin,
            JudgmentLabel::Tie => JudgmentLabel::Tie,
        }
    }

    /// Label implied by a pair of scores.
    pub fn from_scores(a: i64, b: i64) -> Self {
        match a.cmp(&b) {
            std::cmp::Ordering::Greater => JudgmentLabel::AWin,
            std::cmp::Ordering::Less => JudgmentLabel::BWin,
            std::cmp::Ordering::Equal => JudgmentLabel::Tie,
        }
    }
}

impl fmt::Display for JudgmentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for JudgmentLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a_win" => Ok(JudgmentLabel::AWin),
            "b_win" => Ok(JudgmentLabel::BWin),
            "tie" => Ok(JudgmentLabel::Tie),
            other => Err(Error::Validation(format!("unknown judgment label {other:?}"))),
        }
    }
}

/// Winner tag assigned at tagging time; `BothBad` marks records unfit for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Winner {
    AWin,
    BWin,
    Tie,
    BothBad,
}

impl Winner {
    pub const ALL: [Winner; 4] = [Winner::AWin, Winner::BWin, Winner::Tie, Winner::BothBad];

    pub fn as_str(self) -> &'static str {
        match self {
            Winner::AWin => "A_win",
            Winner::BWin => "B_win",
            Winner::Tie => "tie",
            Winner::BothBad => "both_bad",
        }
    }

    pub fn label(self) -> Option<JudgmentLabel> {
        match self {
            Winner::AWin => Some(JudgmentLabel::AWin),
            Winner::BWin => Some(JudgmentLabel::BWin),
            Winner::Tie => Some(JudgmentLabel::Tie),
            Winner::BothBad => None,
        }
    }

    pub fn swapped(self) -> Self {
        match self {
            Winner::AWin => Winner::BWin,
            Winner::BWin => Winner::AWin,
            w => w,
        }
    }
}

impl fmt::Display for Winner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Winner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "both_bad" => Ok(Winner::BothBad),
            other => other.parse::<JudgmentLabel>().map(|l| match l {
                JudgmentLabel::AWin => Winner::AWin,
                JudgmentLabel::BWin => Winner::BWin,
                JudgmentLabel::Tie => Winner::Tie,
            }),
        }
    }
}

macro_rules! serde_via_str {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

serde_via_str!(JudgmentLabel);
serde_via_str!(Winner);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

/// Thresholds that turn a pair of scores into winner and difficulty tags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaggingRules {
    pub score_range: ScoreRange,
    /// Both scores at or below this value mark the record `BothBad`.
    pub both_bad_threshold: i64,
    /// Minimum score gap for `Easy`.
    pub easy_gap: i64,
    /// Minimum score gap for `Medium`; smaller gaps are `Hard`.
    pub medium_gap: i64,
}

impl Default for TaggingRules {
    fn default() -> Self {
        TaggingRules {
            score_range: ScoreRange::default(),
            both_bad_threshold: 2,
            easy_gap: 4,
            medium_gap: 2,
        }
    }
}

impl TaggingRules {
    pub fn derive_winner(&self, score_a: i64, score_b: i64) -> Result<Winner> {
        self.score_range.check(score_a)?;
        self.score_range.check(score_b)?;
        Ok(derive_winner_unchecked(score_a, score_b, self.both_bad_threshold))
    }

    pub fn derive_difficulty(&self, score_a: i64, score_b: i64) -> Result<Difficulty> {
        self.score_range.check(score_a)?;
        self.score_range.check(score_b)?;
        let gap = (score_a - score_b).abs();
        Ok(if gap >= self.easy_gap {
            Difficulty::Easy
        } else if gap >= self.medium_gap {
            Difficulty::Medium
        } else {
            Difficulty::Hard
        })
    }

    pub fn tag(&self, record: &SourceRecord, cluster_id: usize) -> Result<TagLabels> {
        Ok(TagLabels {
            winner: self.derive_winner(record.score_a, record.score_b)?,
            difficulty: self.derive_difficulty(record.score_a, record.score_b)?,
            cluster_id,
        })
    }
}

/// Winner rule with the default score range.
pub fn derive_winner(score_a: i64, score_b: i64, both_bad_threshold: i64) -> Result<Winner> {
    TaggingRules {
        both_bad_threshold,
        ..TaggingRules::default()
    }
    .derive_winner(score_a, score_b)
}

/// Difficulty rule with the default score range and gap thresholds.
pub fn derive_difficulty(score_a: i64, score_b: i64) -> Result<Difficulty> {
    TaggingRules::default().derive_difficulty(score_a, score_b)
}

fn derive_winner_unchecked(score_a: i64, score_b: i64, both_bad_threshold: i64) -> Winner {
    if score_a <= both_bad_threshold && score_b <= both_bad_threshold {
        return Winner::BothBad;
    }
    match JudgmentLabel::from_scores(score_a, score_b) {
        JudgmentLabel::AWin => Winner::AWin,
        JudgmentLabel::BWin => Winner::BWin,
        JudgmentLabel::Tie => Winner::Tie,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TagLabels {
    pub winner: Winner,
    pub difficulty: Difficulty,
    pub cluster_id: usize,
}

/// A source record with its assigned id and tags, as written by the tagging stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedRecord {
    pub id: String,
    #[serde(flatten)]
    pub record: SourceRecord,
    #[serde(flatten)]
    pub tags: TagLabels,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Pointwise,
    Pairwise,
}

/// Gold annotation of an instance: a label for pairwise, a score for pointwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gold {
    Score(i64),
    Label(JudgmentLabel),
}

impl Gold {
    pub fn label(&self) -> Option<JudgmentLabel> {
        match self {
            Gold::Label(l) => Some(*l),
            Gold::Score(_) => None,
        }
    }

    pub fn score(&self) -> Option<i64> {
        match self {
            Gold::Score(s) => Some(*s),
            Gold::Label(_) => None,
        }
    }
}

/// The canonical judging unit. Pointwise instances judge `answer_a` alone and
/// leave `answer_b` empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationInstance {
    pub id: String,
    pub task: String,
    pub reference: Option<String>,
    pub answer_a: String,
    pub answer_b: String,
    pub rubric: Option<String>,
    pub mode: EvalMode,
    pub gold: Gold,
}

impl EvaluationInstance {
    pub fn pairwise(
        id: impl Into<String>,
        task: impl Into<String>,
        answer_a: impl Into<String>,
        answer_b: impl Into<String>,
        gold: JudgmentLabel,
    ) -> Self {
        EvaluationInstance {
            id: id.into(),
            task: task.into(),
            reference: None,
            answer_a: answer_a.into(),
            answer_b: answer_b.into(),
            rubric: None,
            mode: EvalMode::Pairwise,
            gold: Gold::Label(gold),
        }
    }

    pub fn pointwise(
        id: impl Into<String>,
        task: impl Into<String>,
        answer: impl Into<String>,
        score: i64,
    ) -> Self {
        EvaluationInstance {
            id: id.into(),
            task: task.into(),
            reference: None,
            answer_a: answer.into(),
            answer_b: String::new(),
            rubric: None,
            mode: EvalMode::Pointwise,
            gold: Gold::Score(score),
        }
    }

    pub fn with_rubric(mut self, rubric: Option<String>) -> Self {
        self.rubric = rubric;
        self
    }

    pub fn gold_label(&self) -> Option<JudgmentLabel> {
        self.gold.label()
    }

    pub fn has_rubric(&self) -> bool {
        self.rubric.as_deref().is_some_and(|r| !r.trim().is_empty())
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Validation("instance id is empty".into()));
        }
        match (self.mode, self.gold) {
            (EvalMode::Pairwise, Gold::Label(_)) | (EvalMode::Pointwise, Gold::Score(_)) => Ok(()),
            (mode, gold) => Err(Error::Validation(format!(
                "instance {}: {mode:?} mode cannot carry gold {gold:?}",
                self.id
            ))),
        }
    }

    /// The same pairwise instance with the answers (and gold label) exchanged.
    pub fn swapped(&self) -> Self {
        let mut out = self.clone();
        std::mem::swap(&mut out.answer_a, &mut out.answer_b);
        if let Gold::Label(l) = out.gold {
            out.gold = Gold::Label(l.swapped());
        }
        out
    }
}

/// Checks that every id in `instances` is distinct.
pub fn check_unique_ids<'a>(ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::Validation(format!("duplicate instance id {id:?}")));
        }
    }
    Ok(())
}

/// Result of reading a JSONL file leniently.
#[derive(Debug, Clone, PartialEq)]
pub struct Loaded<T> {
    pub items: Vec<T>,
    pub skipped: usize,
}

/// Reads one JSON object per line, skipping (and logging) lines that fail to
/// deserialize. Blank lines are ignored and not counted as skipped.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Loaded<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut items = Vec::new();
    let mut skipped = 0;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(item) => items.push(item),
            Err(e) => {
                log::warn!("{}:{}: skipping malformed line: {e}", path.display(), lineno + 1);
                skipped += 1;
            }
        }
    }
    Ok(Loaded { items, skipped })
}

/// Reads every line strictly; the first malformed line is an error.
pub fn read_jsonl_strict<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut items = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            Error::Validation(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        items.push(item);
    }
    Ok(items)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_jsonl_to(&mut w, items).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_jsonl_to<W: Write, T: Serialize>(w: &mut W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut *w, item)?;
        w.write_all(b"\n").map_err(|e| Error::io("<writer>", e))?;
    }
    Ok(())
}

/// Loads source records, skipping malformed or invalid lines.
pub fn load_records(path: &Path, range: &ScoreRange) -> Result<Loaded<SourceRecord>> {
    let Loaded { items, mut skipped } = read_jsonl::<SourceRecord>(path)?;
    let mut valid = Vec::with_capacity(items.len());
    for rec in items {
        match rec.validate(range) {
            Ok(()) => valid.push(rec),
            Err(e) => {
                log::warn!("{}: skipping record: {e}", path.display());
                skipped += 1;
            }
        }
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} line(s)", path.display());
    }
    Ok(Loaded {
        items: valid,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_tmp(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    const GOOD: &str = r#"{"question":"q","answer_1":"x","answer_2":"y","answer_1_score":8,"answer_2_score":5}"#;

    #[test]
    fn load_three_valid_lines() {
        let f = write_tmp(&[GOOD, GOOD, GOOD]);
        let got = load_records(f.path(), &ScoreRange::default()).unwrap();
        assert_eq!(got.items.len(), 3);
        assert_eq!(got.skipped, 0);
    }

    #[test]
    fn load_skips_malformed_line() {
        let f = write_tmp(&[GOOD, "{not json", GOOD]);
        let got = load_records(f.path(), &ScoreRange::default()).unwrap();
        assert_eq!(got.items.len(), 2);
        assert_eq!(got.skipped, 1);
    }

    #[test]
    fn load_empty_file() {
        let f = write_tmp(&[]);
        let got = load_records(f.path(), &ScoreRange::default()).unwrap();
        assert!(got.items.is_empty());
        assert_eq!(got.skipped, 0);
    }

    #[test]
    fn load_missing_file_is_fatal() {
        let err = load_records(Path::new("/nonexistent/records.jsonl"), &ScoreRange::default());
        assert!(err.unwrap_err().is_io());
    }

    #[test]
    fn load_accepts_aliases_and_rejects_out_of_range() {
        let alias = r#"{"question":"q","answer_a":"x","answer_b":"y","answer_1_score":3,"answer_2_score":3}"#;
        let out_of_range = r#"{"question":"q","answer_1":"x","answer_2":"y","answer_1_score":11,"answer_2_score":3}"#;
        let blank_answer = r#"{"question":"q","answer_1":"  ","answer_2":"y","answer_1_score":1,"answer_2_score":3}"#;
        let f = write_tmp(&[alias, out_of_range, blank_answer]);
        let got = load_records(f.path(), &ScoreRange::default()).unwrap();
        assert_eq!(got.items.len(), 1);
        assert_eq!(got.items[0].answer_a, "x");
        assert_eq!(got.skipped, 2);
    }

    #[test]
    fn winner_examples() {
        assert_eq!(derive_winner(8, 5, 2).unwrap(), Winner::AWin);
        assert_eq!(derive_winner(6, 6, 2).unwrap(), Winner::Tie);
        assert_eq!(derive_winner(2, 1, 2).unwrap(), Winner::BothBad);
        assert!(matches!(derive_winner(0, 5, 2), Err(Error::Validation(_))));
    }

    /// Hand-written truth table for every (score_a, score_b) pair on 1..=10.
    #[test]
    fn winner_truth_table() {
        for a in 1..=10 {
            for b in 1..=10 {
                let expected = if a <= 2 && b <= 2 {
                    "both_bad"
                } else if a > b {
                    "A_win"
                } else if b > a {
                    "B_win"
                } else {
                    "tie"
                };
                assert_eq!(derive_winner(a, b, 2).unwrap().as_str(), expected, "({a},{b})");
            }
        }
    }

    #[test]
    fn difficulty_examples_and_brute_force() {
        assert_eq!(derive_difficulty(9, 3).unwrap(), Difficulty::Easy);
        assert_eq!(derive_difficulty(7, 5).unwrap(), Difficulty::Medium);
        assert_eq!(derive_difficulty(5, 5).unwrap(), Difficulty::Hard);
        let mut seen = std::collections::BTreeMap::new();
        for a in 1..=10i64 {
            for b in 1..=10i64 {
                let gap = (a - b).abs();
                let d = derive_difficulty(a, b).unwrap();
                *seen.entry(d).or_insert(0) += 1;
                let expected = match gap {
                    0 | 1 => Difficulty::Hard,
                    2 | 3 => Difficulty::Medium,
                    _ => Difficulty::Easy,
                };
                assert_eq!(d, expected);
            }
        }
        // every class is non-empty on the 10x10 grid
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn instance_validation() {
        let mut inst = EvaluationInstance::pairwise("x", "t", "a", "b", JudgmentLabel::AWin);
        assert!(inst.validate().is_ok());
        inst.gold = Gold::Score(3);
        assert!(inst.validate().is_err());
        assert!(check_unique_ids(["a", "b", "a"]).is_err());
        assert!(check_unique_ids(["a", "b"]).is_ok());
    }

    #[test]
    fn instance_json_shape() {
        let inst = EvaluationInstance::pairwise("x", "t", "a", "b", JudgmentLabel::Tie);
        let v = serde_json::to_value(&inst).unwrap();
        assert_eq!(v["gold"], "tie");
        assert_eq!(v["mode"], "pairwise");
        let p = EvaluationInstance::pointwise("y", "t", "a", 7);
        let v = serde_json::to_value(&p).unwrap();
        assert_eq!(v["gold"], 7);
        let back: EvaluationInstance = serde_json::from_value(v).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn score_range_parsing() {
        assert_eq!("1-10".parse::<ScoreRange>().unwrap(), ScoreRange::default());
        assert_eq!("0..=5".parse::<ScoreRange>().unwrap(), ScoreRange { min: 0, max: 5 });
        assert!("5-1".parse::<ScoreRange>().is_err());
        assert!("abc".parse::<ScoreRange>().is_err());
    }

    proptest! {
        #[test]
        fn winner_antisymmetric(a in 1i64..=10, b in 1i64..=10, t in 0i64..=10) {
            let w = derive_winner(a, b, t).unwrap();
            let s = derive_winner(b, a, t).unwrap();
            prop_assert_eq!(s, w.swapped());
        }

        #[test]
        fn difficulty_symmetric(a in 1i64..=10, b in 1i64..=10) {
            prop_assert_eq!(derive_difficulty(a, b).unwrap(), derive_difficulty(b, a).unwrap());
        }

        #[test]
        fn emit_then_load_round_trips(
            recs in proptest::collection::vec(
                ("[a-z ]{0,8}x", "\\PC{1,12}", "[^\\s]{1,6}", 1i64..=10, 1i64..=10),
                0..8,
            )
        ) {
            let recs: Vec<SourceRecord> = recs
                .into_iter()
                .map(|(q, a, b, sa, sb)| SourceRecord {
                    question: q,
                    answer_a: format!("{a}."),
                    answer_b: b,
                    score_a: sa,
                    score_b: sb,
                })
                .collect();
            let f = tempfile::NamedTempFile::new().unwrap();
            write_jsonl(f.path(), &recs).unwrap();
            let back = load_records(f.path(), &ScoreRange::default()).unwrap();
            prop_assert_eq!(back.skipped, 0);
            prop_assert_eq!(back.items, recs);
        }
    }
}
